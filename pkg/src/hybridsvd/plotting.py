"""Figures for evaluation reports: a metric against the rank, one line per alpha."""

from __future__ import annotations

from pathlib import Path

from matplotlib.figure import Figure

__all__ = ["plot_rank_curves"]

# metadata entries that would make reruns differ byte for byte
_VOLATILE_METADATA = {
    ".png": {"Software": None},
    ".svg": {"Date": None, "Creator": None},
    ".pdf": {"CreationDate": None, "Producer": None, "Creator": None},
}


def plot_rank_curves(curves, path, metric="mrr", cutoff=10, scenario=None):
    """Plot ``metric@cutoff`` against the rank ``k``.

    Parameters
    ----------
    curves : dict
        ``alpha -> list of (k, mean, ci95)``; ``ci95`` may be None.
    path : str or Path
        Output image file; the format follows the suffix.

    Returns
    -------
    Path
    """
    path = Path(path)
    # a bare Figure renders without pyplot, so the caller's backend is untouched
    fig = Figure(figsize=(5.0, 3.6))
    ax = fig.subplots()
    for alpha in sorted(curves):
        pts = sorted(curves[alpha])
        ks = [p[0] for p in pts]
        means = [p[1] for p in pts]
        errs = [0.0 if p[2] is None else p[2] for p in pts]
        label = "PureSVD" if alpha == 0 else f"HybridSVD, alpha={alpha:g}"
        ax.errorbar(ks, means, yerr=errs, marker="o", ms=4, capsize=3, label=label)
    ax.set_xlabel("rank k")
    ax.set_ylabel(f"{metric.upper()}@{cutoff}")
    if scenario:
        ax.set_title(scenario.replace("_", " "))
    ax.grid(True, alpha=0.3)
    ax.legend(frameon=False, fontsize="small")
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_VOLATILE_METADATA.get(path.suffix.lower()))
    return path
