"""Optional figures rendered next to the CSV tables.

matplotlib is imported lazily with the Agg backend; when it is missing every
function returns ``None`` and the CSV files remain the complete output.
"""

from __future__ import annotations

import logging
from pathlib import Path

log = logging.getLogger(__name__)


def _pyplot():
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        log.info("matplotlib not installed; skipping figures")
        return None
    plt.rcParams.update({"figure.figsize": (6.0, 3.8), "axes.grid": True, "grid.alpha": 0.3,
                         "savefig.dpi": 120, "font.size": 10})
    return plt


def _save(plt, fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def landscape_figure(curves: dict, t_bars: dict, path):
    """``curves`` maps a mass to ``(t, H)`` arrays."""
    plt = _pyplot()
    if plt is None:
        return None
    fig, ax = plt.subplots()
    for a, (t, h) in curves.items():
        line, = ax.semilogx(t, h, label=f"a = {a:.4g}")
        if a in t_bars:
            ax.axvline(t_bars[a], color=line.get_color(), ls=":", lw=0.8)
    ax.axhline(0.0, color="k", lw=0.6)
    ax.set_ylim(-1.0, 0.6)
    ax.set_xlabel(r"$t = \|\nabla v\|_2^2$")
    ax.set_ylabel(r"$H_a(t)$")
    ax.legend(fontsize=8)
    return _save(plt, fig, path)


def fiber_figure(ts, energies, path, title: str = ""):
    plt = _pyplot()
    if plt is None:
        return None
    fig, ax = plt.subplots()
    ax.semilogx(ts, energies)
    ax.axhline(0.0, color="k", lw=0.6)
    ax.set_yscale("symlog", linthresh=1.0)
    ax.set_xlabel("t")
    ax.set_ylabel(r"$\Phi_\theta(v_t)$")
    ax.set_title(title)
    return _save(plt, fig, path)


def profile_figure(fields: dict, path):
    """``fields`` maps a label to a RadialField."""
    plt = _pyplot()
    if plt is None:
        return None
    fig, ax = plt.subplots()
    for label, v in fields.items():
        ax.plot(v.grid.nodes, v.values, label=label)
    ax.set_xscale("symlog", linthresh=1.0)
    ax.set_xlabel("r")
    ax.set_ylabel("v(r)")
    ax.legend(fontsize=8)
    return _save(plt, fig, path)


def c_theta_figure(thetas, values, path):
    plt = _pyplot()
    if plt is None:
        return None
    fig, ax = plt.subplots()
    ax.plot(thetas, values, "o-")
    ax.set_yscale("log")
    ax.set_xlabel(r"$\theta$")
    ax.set_ylabel(r"$c_\theta(a)$")
    return _save(plt, fig, path)


def path_figure(energies, grads, t0, path):
    plt = _pyplot()
    if plt is None:
        return None
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.0, 3.6))
    ax1.plot(range(len(energies)), energies, "o-", ms=3)
    ax1.set_yscale("symlog", linthresh=1.0)
    ax1.set_xlabel("node")
    ax1.set_ylabel(r"$\Phi(\gamma_k)$")
    ax2.semilogy(range(len(grads)), grads, "o-", ms=3)
    ax2.axhline(t0, color="r", ls="--", lw=0.8, label=r"$t_0$")
    ax2.set_xlabel("node")
    ax2.set_ylabel(r"$\|\nabla\gamma_k\|_2^2$")
    ax2.legend(fontsize=8)
    return _save(plt, fig, path)
