"""PNG figures for experiment reports (matplotlib, non-interactive backend)."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .loops import LoopDecomposition  # noqa: E402
from .measures import EdgeMeasure, Magnetization  # noqa: E402


def plot_lambda_path(rows, path) -> None:
    """TV, residual norm and certificate margin against lambda on log axes."""
    lam = np.array([r["lambda"] for r in rows])
    fig, axes = plt.subplots(1, 3, figsize=(11, 3.2), constrained_layout=True)
    axes[0].semilogx(lam, [r["tv"] for r in rows], "o-")
    axes[0].set_ylabel("TV of solution")
    axes[1].loglog(lam, [max(r["residual_norm"], 1e-300) for r in rows], "o-")
    axes[1].set_ylabel("residual norm")
    axes[2].semilogx(lam, [r["max_offsupport"] for r in rows], "o-", label="off-support")
    axes[2].semilogx(lam, [r["max_onsupport_gap"] for r in rows], "s--", label="on-support gap")
    axes[2].axhline(1.0, color="grey", lw=0.8)
    axes[2].legend(fontsize=8)
    for ax in axes:
        ax.set_xlabel("lambda")
        ax.invert_xaxis()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def _draw_edges(ax, m: EdgeMeasure, cmap="coolwarm"):
    g = m.grid
    tail, head = g.edge_endpoint_ids()
    xy = g.vertex_positions()
    w = m.weights
    vmax = float(np.abs(w).max()) or 1.0
    colours = plt.get_cmap(cmap)(0.5 + 0.5 * w / vmax)
    for e in range(g.n_edges):
        a, b = xy[tail[e]], xy[head[e]]
        if w[e] == 0:
            ax.plot([a[0], b[0]], [a[1], b[1]], color="0.85", lw=0.6, zorder=1)
        else:
            ax.plot([a[0], b[0]], [a[1], b[1]], color=colours[e], lw=3.0, zorder=2)
            mid, d = 0.5 * (a + b), np.sign(w[e]) * (b - a) * 0.15
            ax.annotate("", xy=mid + d, xytext=mid - d, arrowprops={"arrowstyle": "->", "color": "k", "lw": 0.8},
                        zorder=3)


def plot_measure(mu, path, title: str = "") -> None:
    """Edge weights coloured by sign and size, arrows along the flow; dipoles as quivers."""
    edge = mu.edge_part if isinstance(mu, Magnetization) else mu
    fig, ax = plt.subplots(figsize=(5, 5 * max(edge.grid.ny, 1) / max(edge.grid.nx, 1) + 0.6))
    _draw_edges(ax, edge)
    if isinstance(mu, Magnetization) and len(mu.dipole_part):
        D = mu.dipole_part
        ax.quiver(D.positions[:, 0], D.positions[:, 1], D.moments[:, 0], D.moments[:, 1], color="tab:green")
        ax.scatter(D.positions[:, 0], D.positions[:, 1], c=D.moments[:, 2], cmap="PiYG", s=40, zorder=4)
    ax.set_aspect("equal")
    ax.set_title(title)
    fig.savefig(path, dpi=110, bbox_inches="tight")
    plt.close(fig)


def plot_decomposition(d: LoopDecomposition, path) -> None:
    """Every loop of the decomposition, coloured by its level, counterclockwise solid and clockwise dashed."""
    g = d.grid
    fig, ax = plt.subplots(figsize=(5, 5))
    cmap = plt.get_cmap("viridis")
    n = max(len(d.levels), 1)
    for k, lev in enumerate(d.levels):
        for lp in lev.loops:
            v = np.array(lp.vertices + lp.vertices[:1], dtype=float)
            x = g.origin[0] + g.h * v[:, 0]
            y = g.origin[1] + g.h * v[:, 1]
            ax.plot(x, y, color=cmap(k / n), ls="-" if lp.orientation == "ccw" else "--", lw=1.2)
    ax.set_xlim(g.origin[0], g.origin[0] + g.nx * g.h)
    ax.set_ylim(g.origin[1], g.origin[1] + g.ny * g.h)
    ax.set_aspect("equal")
    ax.set_title(f"{sum(len(lev.loops) for lev in d.levels)} loops on {len(d.levels)} levels")
    fig.savefig(path, dpi=110, bbox_inches="tight")
    plt.close(fig)
