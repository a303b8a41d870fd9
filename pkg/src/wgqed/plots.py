"""File-based figure rendering for the CLI reports.

The CSV is the contract; these helpers render companion PNGs next to it when
requested.  Uses the Agg backend so no display is needed.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt


def render_decay_sweep(rows, path: str) -> None:
    """rows: (variant_label, tau_ratio, fidelity)."""
    by_variant: dict[str, list[tuple[float, float]]] = {}
    for label, ratio, fid in rows:
        by_variant.setdefault(label, []).append((ratio, fid))
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    for label, pts in by_variant.items():
        pts.sort()
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", ms=3, label=label)
    ax.set_xlabel(r"$\tau_w / \tau_0$")
    ax.set_ylabel("fidelity")
    ax.set_ylim(-0.02, 1.02)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=160)
    plt.close(fig)


def render_scaling(rows, path: str) -> None:
    """rows: (shape_label, layers, fidelity)."""
    labels = [r[0] for r in rows]
    fids = [r[2] for r in rows]
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    ax.bar(range(len(rows)), fids, color="#4878d0")
    ax.set_xticks(range(len(rows)))
    ax.set_xticklabels(labels, rotation=45, ha="right", fontsize=8)
    ax.set_ylabel("fidelity")
    fig.tight_layout()
    fig.savefig(path, dpi=160)
    plt.close(fig)


def render_size_scaling(rows, path: str) -> None:
    """rows: (kind, size, layers, fidelity)."""
    by_kind: dict[str, list[tuple[int, float]]] = {}
    for kind, size, _, fid in rows:
        by_kind.setdefault(kind, []).append((size, fid))
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    for kind, pts in by_kind.items():
        pts.sort()
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="s", ms=3, label=kind)
    ax.set_xlabel("number of dots")
    ax.set_ylabel("fidelity")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=160)
    plt.close(fig)
