"""Figures for a solved run (written to files, never shown)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def field_figure(values, times, nodes, title, path):
    fig, ax = plt.subplots(figsize=(6, 4))
    extent = (nodes[0], nodes[-1], times[0], times[-1])
    im = ax.imshow(values, origin="lower", aspect="auto", extent=extent, cmap="viridis")
    ax.set_xlabel("x")
    ax.set_ylabel("t")
    ax.set_title(title)
    fig.colorbar(im, ax=ax)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def residual_figure(history, path):
    fig, ax = plt.subplots(figsize=(6, 4))
    if history:
        ax.semilogy(range(1, len(history) + 1), [max(r, 1e-300) for r in history], marker=".")
    ax.set_xlabel("outer iteration")
    ax.set_ylabel("sup-norm residual")
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def write_figures(result, out_dir) -> list:
    out_dir = Path(out_dir)
    times, nodes = result.tgrid.times, result.grid.nodes
    paths = []
    for name, values, title in (("u", result.u, "value function u(t, x)"),
                                ("m", result.m, "density m(t, x)"),
                                ("alpha", result.alpha, "control alpha(t, x)")):
        p = out_dir / f"{name}.png"
        field_figure(values, times, nodes, title, p)
        paths.append(p)
    p = out_dir / "residuals.png"
    residual_figure(result.residual_history, p)
    paths.append(p)
    return paths
