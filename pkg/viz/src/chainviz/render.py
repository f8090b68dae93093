"""Matplotlib rendering of precomputed geometry (Agg backend, file output)."""

from __future__ import annotations

import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
from matplotlib.patches import PathPatch, Rectangle
from matplotlib.path import Path as MplPath

from .geometry import (AlluvialGeometry, ConfusionGeometry, TrendsGeometry,
                       alluvial_geometry, confusion_geometry, trends_geometry)
from .palette import color_for

logger = logging.getLogger(__name__)

NODE_WIDTH = 0.12


def _save(fig, out_path: str | Path, dpi: int = 150) -> Path:
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, dpi=dpi, bbox_inches="tight")
    plt.close(fig)
    return out_path


def _ribbon_patch(ribbon, node_width: float) -> PathPatch:
    x0 = ribbon.x0 + node_width
    x1 = ribbon.x1
    mid = (x0 + x1) / 2
    vertices = [
        (x0, ribbon.src_y0),
        (mid, ribbon.src_y0), (mid, ribbon.dst_y0), (x1, ribbon.dst_y0),
        (x1, ribbon.dst_y1),
        (mid, ribbon.dst_y1), (mid, ribbon.src_y1), (x0, ribbon.src_y1),
        (x0, ribbon.src_y0),
    ]
    codes = [MplPath.MOVETO,
             MplPath.CURVE4, MplPath.CURVE4, MplPath.CURVE4,
             MplPath.LINETO,
             MplPath.CURVE4, MplPath.CURVE4, MplPath.CURVE4,
             MplPath.CLOSEPOLY]
    return PathPatch(MplPath(vertices, codes), facecolor=ribbon.color,
                     edgecolor="none", alpha=0.55)


def render_alluvial_geometry(geometry: AlluvialGeometry, out_path: str | Path,
                             figsize=(10, 6), dpi: int = 150) -> Path:
    fig, ax = plt.subplots(figsize=figsize)
    for ribbon in geometry.ribbons:
        ax.add_patch(_ribbon_patch(ribbon, NODE_WIDTH))
    for box in geometry.nodes:
        ax.add_patch(Rectangle((box.x, box.y0), NODE_WIDTH, box.height,
                               facecolor=box.color, edgecolor="black",
                               linewidth=0.5))
        ax.text(box.x + NODE_WIDTH / 2, box.y1, box.label, fontsize=8,
                ha="center", va="bottom", rotation=0)
    # column headers: the BFS discovery level of each column
    tops = [box.y1 for box in geometry.nodes] or [1.0]
    header_y = max(tops) * 1.12
    for i, level in enumerate(geometry.levels):
        ax.text(i + NODE_WIDTH / 2, header_y, str(level), fontsize=11,
                fontweight="bold", ha="center")
    ax.set_xlim(-0.3, max(len(geometry.levels) - 1, 0) + NODE_WIDTH + 0.3)
    ax.set_ylim(-0.1 * max(tops), header_y * 1.05)
    ax.axis("off")
    return _save(fig, out_path, dpi)


def render_alluvial(payload: dict, out_path: str | Path, figsize=(10, 6),
                    dpi: int = 150) -> Path:
    return render_alluvial_geometry(alluvial_geometry(payload), out_path,
                                    figsize, dpi)


def render_trends_geometry(geometry: TrendsGeometry, out_path: str | Path,
                           figsize=(12, 6), dpi: int = 150) -> Path:
    for warning in geometry.warnings:
        logger.warning("trends: %s", warning)
    fig, ax = plt.subplots(figsize=figsize)
    x = range(len(geometry.months))
    for category in geometry.categories:
        ax.fill_between(x, geometry.bottoms[category], geometry.tops[category],
                        color=color_for(category), label=category,
                        linewidth=0)
    ax.set_ylabel("% of product posts")
    ax.set_ylim(0, 100)
    ax.set_xlim(0, max(len(geometry.months) - 1, 1))
    step = max(1, len(geometry.months) // 12)
    ticks = list(x)[::step]
    ax.set_xticks(ticks)
    ax.set_xticklabels([geometry.months[i] for i in ticks], rotation=45,
                       ha="right", fontsize=7)
    volume_ax = ax.twinx()
    volume_ax.plot(list(x), geometry.volume, color="black", linewidth=1.5,
                   label="volume")
    volume_ax.set_ylabel("post volume")
    volume_ax.set_ylim(bottom=0)
    ax.legend(loc="upper left", fontsize=6, ncol=2, frameon=False)
    return _save(fig, out_path, dpi)


def render_trends(categories: list[str], rows: list[dict],
                  out_path: str | Path, figsize=(12, 6),
                  dpi: int = 150) -> Path:
    return render_trends_geometry(trends_geometry(categories, rows), out_path,
                                  figsize, dpi)


def render_confusion_geometry(geometry: ConfusionGeometry,
                              out_path: str | Path, figsize=(8, 7),
                              dpi: int = 150) -> Path:
    fig, ax = plt.subplots(figsize=figsize)
    image = ax.imshow(geometry.normalized, cmap="Blues", vmin=0.0, vmax=1.0)
    n = len(geometry.class_names)
    for r in range(n):
        for c in range(n):
            shade = geometry.normalized[r][c]
            ax.text(c, r, str(geometry.matrix[r][c]), ha="center", va="center",
                    fontsize=8, color="white" if shade > 0.5 else "black")
    for r, total in enumerate(geometry.row_sums):
        ax.text(n - 0.35, r, f"n={total}", ha="left", va="center", fontsize=7,
                color="dimgray", transform=ax.transData, clip_on=False)
    ax.set_xticks(range(n))
    ax.set_yticks(range(n))
    ax.set_xticklabels(geometry.class_names, rotation=45, ha="right",
                       fontsize=8)
    ax.set_yticklabels(geometry.class_names, fontsize=8)
    ax.set_xlabel("predicted")
    ax.set_ylabel("truth")
    fig.colorbar(image, ax=ax, fraction=0.046, label="row-normalized")
    return _save(fig, out_path, dpi)


def render_confusion(report: dict, out_path: str | Path, figsize=(8, 7),
                     dpi: int = 150) -> Path:
    return render_confusion_geometry(confusion_geometry(report), out_path,
                                     figsize, dpi)
