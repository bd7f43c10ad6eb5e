"""Closed-form overhead and cost arithmetic for the revocation scheme.

Pure functions; table generators emit rows suitable for CSV output. Where a
published figure deviates a few percent from its own closed form, these
functions report the formula value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .bloom import optimal_k, size_bits

ENTRY_SN_BITS = 256
ENTRY_SEED_BITS = 256

# Defaults for the fingerprint-forging cost estimate: one top-end mining
# ASIC (14 TH/s), a large public pool (~1.6 EH/s), a one-hour window.
DEFAULT_UNIT_HASHRATE = 14e12
DEFAULT_POOL_HASHRATE = 1_604_608e12
DEFAULT_WINDOW_S = 3600.0


def fingerprint_overhead(
    n_pieces: int, target_fpr: float, concat_digest_bytes: int | None = None
) -> int:
    """Bytes added per carrier pseudonym to authenticate ``n_pieces``.

    Bloom mode by default; pass ``concat_digest_bytes`` for the
    concatenated-digest comparison (n_pieces * digest width).
    """
    if n_pieces < 1:
        raise ValueError("n_pieces must be >= 1")
    if concat_digest_bytes is not None:
        return n_pieces * concat_digest_bytes
    return -(-size_bits(n_pieces, target_fpr) // 8)


def c2rl_size_bytes(n_vehicles: int, psnyms_per_window: int, target_fpr: float) -> int:
    """CRL size when revocation entries themselves are Bloom-compressed."""
    if n_vehicles < 1 or psnyms_per_window < 1:
        raise ValueError("counts must be >= 1")
    bits = size_bits(n_vehicles * psnyms_per_window, target_fpr)
    return -(-bits // 8)


def vc_size_bytes(n_vehicles: int) -> int:
    """Per-window CRL size with batch-chained entries: constant in the
    per-vehicle pseudonym count (serial + seed per revoked vehicle; the
    one-byte tail count is accounted separately on the wire)."""
    if n_vehicles < 1:
        raise ValueError("n_vehicles must be >= 1")
    return (ENTRY_SN_BITS + ENTRY_SEED_BITS) // 8 * n_vehicles


@dataclass(frozen=True)
class ForgingCost:
    total_hashes: float
    units_needed: int
    single_pool_time_s: float


def forging_cost(
    target_fpr: float,
    hashrate_per_unit: float = DEFAULT_UNIT_HASHRATE,
    window_s: float = DEFAULT_WINDOW_S,
    pool_hashrate: float = DEFAULT_POOL_HASHRATE,
) -> ForgingCost:
    """Brute-force cost to forge a piece that passes the fingerprint test.

    Expected work is (1/p) * K hashes. ``units_needed`` is the hardware count
    finishing within one window (truncated: a fractional unit is not
    purchasable ahead of the one that matters); ``single_pool_time_s`` is the
    wall time for one pool of the given aggregate rate.
    """
    if hashrate_per_unit <= 0 or window_s <= 0 or pool_hashrate <= 0:
        raise ValueError("rates and window must be positive")
    k = optimal_k(target_fpr)  # validates target_fpr in (0, 1)
    total = (1.0 / target_fpr) * k
    units = math.floor(total / (hashrate_per_unit * window_s))
    return ForgingCost(total, max(units, 1), total / pool_hashrate)


def effective_crl_entries(total_psnyms: int, rate: float, windows_per_day: int) -> float:
    """Average revocation entries a vehicle needs per window: T*R / |windows|."""
    if total_psnyms < 1 or windows_per_day < 1:
        raise ValueError("counts must be >= 1")
    if not 0.0 <= rate <= 1.0:
        raise ValueError("rate must be in [0, 1]")
    return total_psnyms * rate / windows_per_day


# -- table generators (rows of plain values; CSV writing lives in the CLI) --

def fingerprint_overhead_table(
    n_pieces: int = 10,
    fpr_exponents: tuple[int, ...] = tuple(range(5, 31)),
) -> list[dict]:
    rows = []
    for e in fpr_exponents:
        p = 10.0 ** -e
        rows.append(
            {
                "fpr": p,
                "n_pieces": n_pieces,
                "k_hashes": optimal_k(p),
                "bloom_bytes": fingerprint_overhead(n_pieces, p),
                "concat_sha1_bytes": fingerprint_overhead(n_pieces, p, concat_digest_bytes=20),
                "concat_sha256_bytes": fingerprint_overhead(n_pieces, p, concat_digest_bytes=32),
            }
        )
    return rows


def crl_size_table(
    n_vehicles: int = 10_000,
    target_fpr: float = 1e-30,
    psnyms_per_window: tuple[int, ...] = tuple(range(1, 21)),
) -> list[dict]:
    rows = []
    vc = vc_size_bytes(n_vehicles)
    for m in psnyms_per_window:
        rows.append(
            {
                "psnyms_per_window": m,
                "compressed_crl_bytes": c2rl_size_bytes(n_vehicles, m, target_fpr),
                "vehicle_centric_bytes": vc,
            }
        )
    return rows


def forging_cost_table(
    fpr_exponents: tuple[int, ...] = (20, 22, 23, 30),
    hashrate_per_unit: float = DEFAULT_UNIT_HASHRATE,
    window_s: float = DEFAULT_WINDOW_S,
    pool_hashrate: float = DEFAULT_POOL_HASHRATE,
) -> list[dict]:
    rows = []
    for e in fpr_exponents:
        p = 10.0 ** -e
        cost = forging_cost(p, hashrate_per_unit, window_s, pool_hashrate)
        rows.append(
            {
                "fpr": p,
                "k_hashes": optimal_k(p),
                "total_hashes": cost.total_hashes,
                "units_needed": cost.units_needed,
                "pool_time_s": cost.single_pool_time_s,
                "pool_time_h": cost.single_pool_time_s / 3600.0,
            }
        )
    return rows


def effective_crl_table(
    total_psnyms_by_lifetime: dict[int, int] | None = None,
    rate: float = 0.01,
    windows_per_day: int = 24,
) -> list[dict]:
    if total_psnyms_by_lifetime is None:
        total_psnyms_by_lifetime = {
            30: 3_425_565,
            60: 1_712_782,
            300: 342_556,
            600: 171_278,
        }
    rows = []
    for lifetime, total in sorted(total_psnyms_by_lifetime.items()):
        entries = effective_crl_entries(total, rate, windows_per_day)
        rows.append(
            {
                "psnym_lifetime_s": lifetime,
                "total_psnyms": total,
                "revoked_psnyms": int(total * rate),
                "entries_per_window": entries,
            }
        )
    return rows
