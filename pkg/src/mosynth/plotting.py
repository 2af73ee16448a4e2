"""Report figures written to PNG files (headless Agg backend)."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .metrics import linear_fit  # noqa: E402


def coverage_figure(rows, tau: float, path: str, title: str = "Exemplar coverage"):
    """Nearest-synthesis RMS per exemplar window, one line per example, with the τ threshold."""
    fig, ax = plt.subplots(figsize=(8, 3.2))
    examples = sorted({r[0] for r in rows})
    for e in examples:
        starts = [r[1] for r in rows if r[0] == e]
        rms = [r[2] for r in rows if r[0] == e]
        ax.plot(starts, rms, lw=1, label=f"example {e}")
    ax.axhline(tau, color="k", ls="--", lw=1, label=f"τ = {tau:g}")
    covered = 100.0 * sum(r[3] for r in rows) / max(1, len(rows))
    ax.set_title(f"{title}: {covered:.2f}% covered")
    ax.set_xlabel("window start frame")
    ax.set_ylabel("nearest RMS distance")
    ax.set_yscale("symlog", linthresh=tau / 10)
    ax.set_ylim(bottom=0)
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def scaling_figure(results, path: str):
    """Wall time and peak memory against output frames, each with a least-squares line."""
    F = np.array([r[0] for r in results], dtype=float)
    secs = np.array([r[1] for r in results])
    mib = np.array([r[2] for r in results]) / 2 ** 20
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.4))
    for ax, y, label in ((axes[0], secs, "time (s)"), (axes[1], mib, "peak memory (MiB)")):
        ax.plot(F, y, "o", label="measured")
        if len(F) >= 2:
            slope, icpt, r2 = linear_fit(F, y)
            xs = np.linspace(F.min(), F.max(), 50)
            ax.plot(xs, slope * xs + icpt, "-", lw=1, label=f"linear fit, R² = {r2:.3f}")
        ax.set_xlabel("output frames")
        ax.set_ylabel(label)
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
