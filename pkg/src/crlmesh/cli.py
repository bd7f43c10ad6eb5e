"""Command-line entry point: scenario runs, analysis tables, self-checks.

Exit codes: 0 success, 1 configuration error, 2 runtime assertion failure.
``CRLMESH_LOG`` (error|info|debug) sets the log level.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from . import analysis, plots, sim

log = logging.getLogger("crlmesh")

_TABLES = ("fig2", "fig4", "forge", "effective")


def _setup_logging() -> None:
    level = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}.get(
        os.environ.get("CRLMESH_LOG", "error").lower(), logging.ERROR
    )
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crlmesh", description="Vehicle-centric CRL distribution toolkit"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one simulation scenario")
    p_run.add_argument("config", help="flat key=value scenario file")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--out-dir", default="out")
    p_run.add_argument("--scheme", choices=sim.SCHEMES, default=None)
    p_run.add_argument(
        "--parallel-seeds", type=int, default=1, metavar="K",
        help="run K consecutive seeds in parallel, one subdirectory each",
    )
    p_run.add_argument("--no-figures", action="store_true",
                       help="skip figure rendering, CSVs only")

    p_an = sub.add_parser("analyze", help="emit a closed-form analysis table")
    p_an.add_argument("--table", required=True, metavar="|".join(_TABLES))
    p_an.add_argument("--out-dir", default=None,
                      help="write CSV + figure here instead of CSV to stdout")
    p_an.add_argument("--pieces", type=int, default=10, help="fig2: piece count")
    p_an.add_argument("--vehicles", type=int, default=10_000, help="fig4: revoked vehicles")
    p_an.add_argument("--fpr", type=float, default=1e-30, help="fig4: target FPR")
    p_an.add_argument("--rate", type=float, default=0.01, help="effective: revocation rate")

    sub.add_parser("selftest", help="protocol-level self-checks")
    return parser


def main(argv=None) -> int:
    _setup_logging()
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "analyze":
            return cmd_analyze(args)
        return cmd_selftest()
    except sim.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except AssertionError as exc:
        print(f"runtime assertion failure: {exc}", file=sys.stderr)
        return 2


# -- run --

def _run_one(cfg: sim.ScenarioConfig, out_dir: str, figures: bool) -> str:
    metrics = sim.run(cfg)
    metrics.write_csvs(out_dir)
    with open(os.path.join(out_dir, "summary.txt"), "w") as fh:
        fh.write("\n".join(metrics.summary_lines()) + "\n")
    if figures:
        label = cfg.scheme
        plots.latency_cdf({label: metrics}, out_dir)
        plots.cognizant_timeline({label: metrics}, out_dir)
        plots.overhead_bars({label: metrics}, out_dir)
    return out_dir


def cmd_run(args) -> int:
    cfg = sim.ScenarioConfig.from_file(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.scheme is not None:
        cfg.scheme = args.scheme
    cfg.validate()
    figures = not args.no_figures
    if args.parallel_seeds <= 1:
        out = _run_one(cfg, args.out_dir, figures)
        log.info("run complete: %s", out)
        print(out)
        return 0
    jobs = []
    with ProcessPoolExecutor(max_workers=args.parallel_seeds) as pool:
        for i in range(args.parallel_seeds):
            c = sim.ScenarioConfig.from_file(args.config)
            c.seed = cfg.seed + i
            c.scheme = cfg.scheme
            sub = os.path.join(args.out_dir, f"seed_{c.seed}")
            jobs.append(pool.submit(_run_one, c, sub, figures))
        for job in jobs:
            print(job.result())
    return 0


# -- analyze --

def _emit_table(rows: list[dict], out_dir: str | None, name: str) -> None:
    header = list(rows[0].keys())
    lines = [",".join(header)]
    lines += [",".join(str(r[h]) for h in header) for r in rows]
    text = "\n".join(lines) + "\n"
    if out_dir is None:
        sys.stdout.write(text)
    else:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, f"{name}.csv"), "w") as fh:
            fh.write(text)


def cmd_analyze(args) -> int:
    table = args.table
    if table not in _TABLES:
        print(f"config error: unknown table '{table}' (choose from {_TABLES})",
              file=sys.stderr)
        return 1
    if table == "fig2":
        if args.pieces < 1:
            raise sim.ConfigError("--pieces must be >= 1")
        rows = analysis.fingerprint_overhead_table(n_pieces=args.pieces)
        fig = plots.fingerprint_overhead_figure
    elif table == "fig4":
        if args.vehicles < 1:
            raise sim.ConfigError("--vehicles must be >= 1")
        rows = analysis.crl_size_table(n_vehicles=args.vehicles, target_fpr=args.fpr)
        fig = plots.crl_size_figure
    elif table == "forge":
        rows = analysis.forging_cost_table()
        fig = plots.forging_cost_figure
    else:
        rows = analysis.effective_crl_table(rate=args.rate)
        fig = plots.effective_crl_figure
    _emit_table(rows, args.out_dir, table)
    if args.out_dir is not None:
        fig(rows, args.out_dir)
    return 0


# -- selftest --

def cmd_selftest() -> int:
    checks = [
        ("hash-chain-oracle", _check_hash_chain),
        ("bloom-no-false-negative", _check_bloom),
        ("wire-roundtrip", _check_wire),
        ("unlinkability", _check_unlinkability),
    ]
    failed = 0
    for name, fn in checks:
        try:
            fn()
        except Exception as exc:  # noqa: BLE001 - report and continue
            failed += 1
            print(f"FAIL {name}: {exc}")
        else:
            print(f"PASS {name}")
    return 2 if failed else 0


def _small_pca(batch=5):
    import random

    from .crypto import KeyPair
    from .vpki import Ltca, Pca

    ltca = Ltca(KeyPair.from_seed(b"selftest-ltca"))
    pca = Pca(
        key=KeyPair.from_seed(b"selftest-pca"),
        ltca_public=ltca.key.public_bytes,
        psnym_lifetime_s=60,
        issue_interval_s=60 * batch,
        crl_window_s=600 * batch,
        rng=random.Random(7),
    )
    return ltca, pca


def _issue_batch(ltca, pca, tag=b"selftest"):
    from .crypto import KeyPair, hash_bytes
    from .vpki import pop_proof

    key = KeyPair.from_seed(b"selftest-veh" + tag)
    ik = hash_bytes(tag)
    ticket = ltca.issue_ticket(ik, 0, 86400)
    n = pca.batch_size
    proof = pop_proof(key, ik)
    psnyms, rnd = pca.issue_pseudonyms(
        ticket, [key.public_bytes] * n, [proof] * n, 0
    )
    return ik, psnyms, rnd


def _check_hash_chain() -> None:
    from .node import derive_serials

    ltca, pca = _small_pca()
    ik, psnyms, _ = _issue_batch(ltca, pca)
    revocations = pca.revoke_vehicle(ik, at_time=0)
    assert len(revocations) == 1, "expected one entry per batch"
    _, entry = revocations[0]
    derived = derive_serials(entry)
    issued = [p.serial_number for p in psnyms]
    assert derived == issued, "derived serials diverge from issued serials"


def _check_bloom() -> None:
    import random

    from .bloom import BloomFilter

    rng = random.Random(11)
    f = BloomFilter.from_params(64, 1e-12)
    elements = [rng.randbytes(32) for _ in range(64)]
    for e in elements:
        f.insert(e)
    assert all(e in f for e in elements), "false negative in Bloom filter"


def _check_wire() -> None:
    from .node import CrlQuery, make_query
    from .vpki import CrlPiece, SignedFingerprint, piece_budget_bytes

    ltca, pca = _small_pca()
    ik, psnyms, _ = _issue_batch(ltca, pca)
    pca.revoke_vehicle(ik, at_time=0)
    pieces = pca.build_crl(0, piece_budget_bytes(25000))
    assert pieces, "no pieces built"
    for p in pieces:
        assert CrlPiece.decode(p.encode()) == p, "piece roundtrip failed"
    fp = pca.build_fingerprint(0, pieces)
    fp2 = SignedFingerprint.decode(fp.encode())
    assert fp2 == fp and fp2.verify_issuer(pca.key.public_bytes), (
        "fingerprint roundtrip failed"
    )
    from .crypto import KeyPair

    key = KeyPair.from_seed(b"selftest-vehselftest")
    q = make_query(1, 0, (0,), psnyms[0], key)
    assert CrlQuery.decode(q.encode()) == q, "query roundtrip failed"


def _check_unlinkability() -> None:
    """Pre-anchor serials must be underivable from the revocation entry."""
    from .crypto import hash_bytes
    from .node import derive_serials

    ltca, pca = _small_pca()
    ik, psnyms, _ = _issue_batch(ltca, pca)
    # revoke mid-batch: the first two pseudonyms have already expired
    revocations = pca.revoke_vehicle(ik, at_time=2 * pca.psnym_lifetime_s)
    _, entry = revocations[0]
    assert entry.anchor_sn == psnyms[2].serial_number
    # closure of pairwise hashes over everything published; the expired
    # serials must not appear
    published = set(derive_serials(entry)) | {entry.chain_seed}
    closure = set(published)
    for _ in range(4):
        new = set()
        for a in closure:
            new.add(hash_bytes(a))
            for b in closure:
                new.add(hash_bytes(a + b))
        closure |= new
        if len(closure) > 20000:
            break
    hidden = {psnyms[0].serial_number, psnyms[1].serial_number}
    assert not (hidden & closure), "expired serials derivable from the entry"


if __name__ == "__main__":
    sys.exit(main())
