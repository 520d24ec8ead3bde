"""Figure rendering for the report path.

Every CLI report writes a PNG next to its CSV.  The CSV stays the contract;
the figures are a convenience.  Rendering is deterministic (fixed style, no
timestamps) so figure files participate in byte-identity checks.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

_STYLE = {
    "figure.figsize": (7.0, 4.5),
    "figure.dpi": 110,
    "savefig.dpi": 110,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 10,
}


def _save(fig, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, metadata={"Software": "fptimebin"})
    plt.close(fig)


def save_curves(path, curves, xlabel: str = "phase sum (rad)",
                ylabel: str = "normalized coincidences", title: str = "") -> None:
    """Plot (label, style, x, y, yerr) tuples on one axis."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        for label, style, x, y, yerr in curves:
            if yerr is not None:
                ax.errorbar(x, y, yerr=yerr, fmt=style, label=label,
                            markersize=3, capsize=2, linewidth=1)
            else:
                ax.plot(x, y, style, label=label, linewidth=1.2, markersize=3)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        ax.legend(loc="best")
        _save(fig, path)


def save_peaks(path, distributions, title: str = "") -> None:
    """Stem plot of (label, peaks dict) arrival-difference distributions."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        for offset, (label, peaks) in enumerate(distributions):
            ns = sorted(peaks)
            vals = [peaks[n] for n in ns]
            ax.bar([n + 0.3 * offset for n in ns], vals, width=0.3, label=label)
        ax.set_xlabel("arrival difference (bins)")
        ax.set_ylabel("probability")
        ax.set_yscale("log")
        if title:
            ax.set_title(title)
        ax.legend(loc="best")
        _save(fig, path)


def save_histogram(path, histogram, title: str = "") -> None:
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        if histogram.lattice:
            ns = histogram.lattice_indices()
            counts = [histogram.counts.get(n, 0) for n in ns]
            ax.bar(ns, counts, width=0.8)
            ax.set_xlabel("arrival difference (bins)")
        else:
            ns = sorted(histogram.counts)
            counts = [histogram.counts[n] for n in ns]
            ax.bar([n * histogram.bin_width * 1e9 for n in ns], counts,
                   width=histogram.bin_width * 1e9 * 0.9)
            ax.set_xlabel("stop delay (ns)")
        ax.set_ylabel("counts")
        if title:
            ax.set_title(title)
        _save(fig, path)
