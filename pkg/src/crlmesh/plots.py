"""Figure rendering for simulation runs and analysis tables.

All figures go straight to files (Agg backend); nothing here opens a window.
Each renderer takes already-computed data, so the CLI can write the CSV and
the figure from the same rows.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def _save(fig, out_dir: str, name: str) -> str:
    path = os.path.join(out_dir, name)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def latency_cdf(metrics_by_label: dict, out_dir: str) -> str:
    """Empirical CDF of completion latency, one curve per labeled run."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, metrics in metrics_by_label.items():
        data = sorted(metrics.completion_latencies())
        if not data:
            continue
        ys = [(i + 1) / len(data) for i in range(len(data))]
        ax.step(data, ys, where="post", label=label)
    ax.set_xlabel("completion latency (s)")
    ax.set_ylabel("fraction of vehicles")
    ax.set_ylim(0, 1.02)
    ax.grid(True, alpha=0.3)
    ax.legend()
    return _save(fig, out_dir, "latency_cdf.png")


def cognizant_timeline(metrics_by_label: dict, out_dir: str) -> str:
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, metrics in metrics_by_label.items():
        xs = [t for t, _, _ in metrics.cognizant]
        ys = [c / p if p else 1.0 for _, c, p in metrics.cognizant]
        ax.plot(xs, ys, label=label)
    ax.set_xlabel("time (s)")
    ax.set_ylabel("cognizant fraction")
    ax.set_ylim(0, 1.02)
    ax.grid(True, alpha=0.3)
    ax.legend()
    return _save(fig, out_dir, "cognizant_timeline.png")


def overhead_bars(metrics_by_label: dict, out_dir: str) -> str:
    """Security overhead (signatures + fingerprints) per 30 s window."""
    fig, ax = plt.subplots(figsize=(6, 4))
    n = max(len(metrics_by_label), 1)
    width = 30.0 / (n + 1)
    for i, (label, metrics) in enumerate(metrics_by_label.items()):
        xs = [w + i * width for w, _, _ in metrics.overhead]
        ys = [(s + f) / 1024.0 for _, s, f in metrics.overhead]
        ax.bar(xs, ys, width=width, label=label, align="edge")
    ax.set_xlabel("window start (s)")
    ax.set_ylabel("security overhead (KiB / 30 s)")
    ax.grid(True, axis="y", alpha=0.3)
    ax.legend()
    return _save(fig, out_dir, "overhead_bars.png")


# -- analysis tables --

def fingerprint_overhead_figure(rows: list[dict], out_dir: str) -> str:
    fig, ax = plt.subplots(figsize=(6, 4))
    xs = [r["fpr"] for r in rows]
    ax.plot(xs, [r["bloom_bytes"] for r in rows], marker="o", label="Bloom fingerprint")
    ax.plot(xs, [r["concat_sha1_bytes"] for r in rows], "--", label="concat SHA-1")
    ax.plot(xs, [r["concat_sha256_bytes"] for r in rows], "--", label="concat SHA-256")
    ax.set_xscale("log")
    ax.invert_xaxis()
    ax.set_xlabel("target false-positive rate")
    ax.set_ylabel("overhead (bytes)")
    ax.grid(True, alpha=0.3)
    ax.legend()
    return _save(fig, out_dir, "fingerprint_overhead.png")


def crl_size_figure(rows: list[dict], out_dir: str) -> str:
    fig, ax = plt.subplots(figsize=(6, 4))
    xs = [r["psnyms_per_window"] for r in rows]
    ax.plot(xs, [r["compressed_crl_bytes"] / 1024 for r in rows],
            marker="s", label="Bloom-compressed CRL")
    ax.plot(xs, [r["vehicle_centric_bytes"] / 1024 for r in rows],
            marker="o", label="chained entries")
    ax.set_xlabel("pseudonyms per vehicle per window")
    ax.set_ylabel("CRL size (KiB)")
    ax.grid(True, alpha=0.3)
    ax.legend()
    return _save(fig, out_dir, "crl_size.png")


def forging_cost_figure(rows: list[dict], out_dir: str) -> str:
    fig, ax = plt.subplots(figsize=(6, 4))
    xs = [r["fpr"] for r in rows]
    ax.bar(range(len(xs)), [r["units_needed"] for r in rows])
    ax.set_xticks(range(len(xs)))
    ax.set_xticklabels([f"{x:.0e}" for x in xs])
    ax.set_yscale("log")
    ax.set_xlabel("target false-positive rate")
    ax.set_ylabel("hash units to forge in one window")
    ax.grid(True, axis="y", alpha=0.3)
    return _save(fig, out_dir, "forging_cost.png")


def effective_crl_figure(rows: list[dict], out_dir: str) -> str:
    fig, ax = plt.subplots(figsize=(6, 4))
    xs = [str(r["psnym_lifetime_s"]) for r in rows]
    ax.bar(xs, [r["entries_per_window"] for r in rows])
    ax.set_xlabel("pseudonym lifetime (s)")
    ax.set_ylabel("revocation entries per window")
    ax.grid(True, axis="y", alpha=0.3)
    return _save(fig, out_dir, "effective_crl.png")
