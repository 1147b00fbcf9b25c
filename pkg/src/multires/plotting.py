"""Report figures rendered with matplotlib.

SVG output is made byte-stable across runs by fixing the SVG hash salt and
dropping the creation date from the metadata.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from multires.detections import FUSED_MODEL_TAG as FUSED_TAG  # noqa: E402
from multires.evaluation import EvalReport  # noqa: E402
from multires.spectral import ResolutionLevel, all_levels  # noqa: E402

_STYLE = {
    "svg.hashsalt": "multires",
    "svg.fonttype": "path",
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.frameon": False,
}


def _save(fig, path) -> None:
    path = Path(path)
    fmt = path.suffix.lstrip(".").lower() or "svg"
    metadata = {"svg": {"Date": None}, "png": {"Software": None}}.get(fmt)
    fig.savefig(path, format=fmt, metadata=metadata)


def _tag_order(tag: str):
    head = tag.split("/", 1)[0]
    return (0, int(head), tag) if head.isdigit() else (1, 0, tag)


def plot_map_vs_level(report: EvalReport, path, title: str | None = None) -> None:
    """mAP against level ordinal, one line per model plus the fused model."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(8.0, 4.2))
        models = sorted((m for m in report.models() if m != FUSED_TAG), key=_tag_order)
        for tag in models:
            x, y = report.curve(tag)
            ax.plot(x, y, marker="o", markersize=3, linewidth=1.2, label=f"{tag} model")
        if FUSED_TAG in report.models():
            x, y = report.curve(FUSED_TAG)
            ax.plot(x, y, color="black", linewidth=2.2, marker="s", markersize=3.5,
                    label="Multi-Resolution")
        ticks = [lv.ordinal for lv in all_levels()]
        ax.set_xticks(ticks)
        ax.set_xticklabels([lv.label if lv.is_full else str(lv.c) for lv in all_levels()],
                           fontsize=7)
        ax.set_xlim(0.5, 21.5)
        ax.set_ylim(0.0, 1.0)
        ax.set_xlabel("test resolution level (R1 ... R20, Full)")
        ax.set_ylabel("mAP")
        if title:
            ax.set_title(title)
        ax.grid(True, linewidth=0.3, alpha=0.5)
        ax.legend(loc="upper left", bbox_to_anchor=(1.01, 1.0), fontsize=8)
        fig.tight_layout()
        _save(fig, path)
        plt.close(fig)


def plot_gain_profile(width: int, height: int, levels: list[ResolutionLevel], path) -> None:
    """Radial gain of each level's filter along the horizontal frequency axis."""
    import numpy as np

    from multires.spectral import build_filter, cutoff_for_level

    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(5.5, 3.5))
        v = np.arange(0, width // 2 + 1)
        for level in levels:
            f_c = cutoff_for_level(level, width, height)
            if f_c is None:
                ax.plot(v, np.ones_like(v, dtype=float), linestyle="--", color="grey", label="Full")
                continue
            filt = build_filter(width, height, f_c)
            ax.plot(v, [filt.gain(0, int(k)) for k in v], label=level.label)
        ax.set_xlabel("horizontal frequency (cycles per image)")
        ax.set_ylabel("gain")
        ax.set_ylim(0.0, 1.05)
        ax.legend(fontsize=7, ncol=2)
        fig.tight_layout()
        _save(fig, path)
        plt.close(fig)
