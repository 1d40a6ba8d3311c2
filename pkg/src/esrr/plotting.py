"""Figures written next to the CSV reports (Agg backend, files only)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .atoms import CanonicalSpike  # noqa: E402


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_eta_trace(x, eta, u0, path, title=None):
    """Certificate components and norm over the torus with the support marked.

    ``eta`` has shape ``(len(x), d)``.  Canonical spikes have no position
    and are not drawn.
    """
    eta = np.atleast_2d(np.asarray(eta).T).T
    fig, ax = plt.subplots(figsize=(7, 3.2))
    if eta.shape[1] == 1:
        ax.plot(x, eta[:, 0], lw=1.2, label=r"$\eta$")
    else:
        for k in range(eta.shape[1]):
            ax.plot(x, eta[:, k], lw=0.8, alpha=0.7, label=rf"$\eta_{k + 1}$")
        ax.plot(x, np.linalg.norm(eta, axis=1), "k", lw=1.4, label=r"$\|\eta\|$")
    for level in (1, -1):
        ax.axhline(level, color="0.5", ls="--", lw=0.8)
    for a in u0.atoms:
        if not isinstance(a, CanonicalSpike):
            ax.axvline(a.x, color="C3", lw=0.8, alpha=0.6)
    ax.set_xlim(0, 1)
    ax.set_xlabel("x")
    ax.legend(loc="lower right", fontsize=8, ncol=min(4, eta.shape[1] + 1))
    if title:
        ax.set_title(title, fontsize=10)
    return _finish(fig, path)


def plot_sweep_errors(report, path):
    """Max position / coefficient / direction error against lambda, log-log."""
    fig, ax = plt.subplots(figsize=(5.5, 3.8))
    kinds = (("position", 0, "o"), ("coefficient", 1, "s"), ("direction", 2, "^"))
    for name, idx, marker in kinds:
        pts = [(c.lam, c.max_errors()[idx]) for c in report.cells if c.max_errors()[idx]]
        if not pts:
            continue
        lam, err = np.array(pts).T
        ax.loglog(lam, err, marker, ls="none", alpha=0.6, label=name)
    failed = [c.lam for c in report.cells if not c.verdict]
    if failed:
        ax.plot(failed, np.full(len(failed), report.eps), "rx", label="no recovery")
    ax.axhline(report.eps, color="0.5", ls="--", lw=0.8)
    ax.set_xlabel(r"$\lambda$")
    ax.set_ylabel("max error")
    if report.decay_slope is not None:
        ax.set_title(f"noiseless slope {report.decay_slope:.2f}", fontsize=10)
    ax.legend(fontsize=8)
    return _finish(fig, path)
