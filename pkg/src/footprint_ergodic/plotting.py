"""Figures written next to the CLI's delimited outputs (Agg backend, PNG files)."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .infomap import reconstruct  # noqa: E402

ROBOT_COLORS = ["tab:red", "tab:blue", "tab:green", "tab:orange", "tab:purple"]


def _style():
    plt.rcParams.update({
        "figure.dpi": 110,
        "savefig.facecolor": "white",
        "axes.spines.top": False,
        "axes.spines.right": False,
        "font.size": 9,
    })


def _heat(ax, basis, coeffs, res, title):
    L = basis.workspace.lengths
    vals = reconstruct(coeffs, basis, res).cells
    im = ax.imshow(vals.T, origin="lower", extent=(0, L[0], 0, L[1]), cmap="viridis")
    ax.set_title(title)
    ax.set_xlabel("$w_1$")
    ax.set_ylabel("$w_2$")
    return im


def plot_plan_2d(path, basis, phi, coeffs, trajectories, projection, res=96):
    """Map with trajectories on top, plus map vs time-averaged statistics."""
    _style()
    has_h = projection.h_index is not None
    ncols = 3 + int(has_h)
    fig, axes = plt.subplots(1, ncols, figsize=(3.4 * ncols, 3.2))
    _heat(axes[0], basis, phi, res, "map and trajectories")
    for i, tr in enumerate(trajectories):
        q = projection.q(tr.states)
        c = ROBOT_COLORS[i % len(ROBOT_COLORS)]
        axes[0].plot(q[:, 0], q[:, 1], "-", color=c, lw=1.2)
        axes[0].plot(q[0, 0], q[0, 1], "o", color=c, ms=4)
    _heat(axes[1], basis, phi, res, "reconstructed map")
    _heat(axes[2], basis, coeffs, res, "time-averaged statistics")
    if has_h:
        ax = axes[3]
        for i, tr in enumerate(trajectories):
            t = np.arange(len(tr.states)) * tr.dt
            ax.plot(t, projection.h(tr.states), color=ROBOT_COLORS[i % len(ROBOT_COLORS)])
        ax.set_xlabel("time")
        ax.set_ylabel("height")
        ax.set_title("sensor height")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_plan_3d(path, cloud, trajectories, projection):
    _style()
    fig = plt.figure(figsize=(5, 4.5))
    ax = fig.add_subplot(projection="3d")
    P = cloud.points
    ax.scatter(P[:, 0], P[:, 1], P[:, 2], s=1, c="0.6", alpha=0.5)
    for i, tr in enumerate(trajectories):
        q = projection.q(tr.states)
        ax.plot(q[:, 0], q[:, 1], q[:, 2], color=ROBOT_COLORS[i % len(ROBOT_COLORS)], lw=1.2)
    ax.set_xlabel("$w_1$")
    ax.set_ylabel("$w_2$")
    ax.set_zlabel("$w_3$")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_log(path, log):
    """Ergodicity and constraint violation per outer iteration."""
    _style()
    it = [r["iteration"] for r in log]
    fig, ax = plt.subplots(figsize=(4.2, 3))
    ax.semilogy(it, [max(r["ergodicity"], 1e-300) for r in log], "o-", label="ergodicity")
    viol = [r["max_constraint_violation"] for r in log]
    if any(v > 0 for v in viol):
        ax.semilogy(it, [max(v, 1e-16) for v in viol], "s--", label="max violation")
    ax.set_xlabel("outer iteration")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_sweep(path, variable, rows):
    """Final ergodicity per sweep value; failed runs are left out."""
    _style()
    ok = [r for r in rows if r.get("status") == "ok"]
    fig, ax = plt.subplots(figsize=(4.2, 3))
    labels = [str(r["value"]) for r in ok]
    ax.bar(range(len(ok)), [r["ergodicity"] for r in ok], color="tab:blue")
    ax.set_xticks(range(len(ok)), labels)
    ax.set_xlabel(variable)
    ax.set_ylabel("final ergodicity")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
