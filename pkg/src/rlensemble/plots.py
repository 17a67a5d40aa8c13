"""Minimal static SVG line charts for reward curves and forecast overlays."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .errors import ArtifactError

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def line_chart(lines: Mapping[str, tuple[Sequence[float], Sequence[float]]], title: str = "",
               xlabel: str = "", ylabel: str = "", width: int = 720, height: int = 360) -> str:
    """SVG text for one chart; each entry of ``lines`` is ``name -> (x, y)``."""
    pad_l, pad_r, pad_t, pad_b = 64, 140, 32, 44
    xs = np.concatenate([np.asarray(x, dtype=float) for x, _ in lines.values()]) if lines else np.zeros(1)
    ys = np.concatenate([np.asarray(y, dtype=float) for _, y in lines.values()]) if lines else np.zeros(1)
    ok = np.isfinite(xs) & np.isfinite(ys)
    x0, x1 = (float(xs[ok].min()), float(xs[ok].max())) if ok.any() else (0.0, 1.0)
    y0, y1 = (float(ys[ok].min()), float(ys[ok].max())) if ok.any() else (0.0, 1.0)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pw, ph = width - pad_l - pad_r, height - pad_t - pad_b

    def sx(v):
        return pad_l + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return pad_t + (1.0 - (v - y0) / (y1 - y0)) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{pad_l}" y="{pad_t}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>',
        f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>',
        f'<text x="{pad_l + pw / 2:.1f}" y="{height - 8}" text-anchor="middle">{escape(xlabel)}</text>',
        f'<text x="14" y="{pad_t + ph / 2:.1f}" text-anchor="middle" transform="rotate(-90 14 {pad_t + ph / 2:.1f})">{escape(ylabel)}</text>',
    ]
    for k in range(5):
        fy = y0 + (y1 - y0) * k / 4
        fx = x0 + (x1 - x0) * k / 4
        out.append(f'<text x="{pad_l - 6}" y="{sy(fy) + 4:.1f}" text-anchor="end">{_fmt(fy)}</text>')
        out.append(f'<text x="{sx(fx):.1f}" y="{pad_t + ph + 16}" text-anchor="middle">{_fmt(fx)}</text>')
    for i, (name, (x, y)) in enumerate(lines.items()):
        colour = PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(np.asarray(x, float), np.asarray(y, float))
                       if np.isfinite(a) and np.isfinite(b))
        out.append(f'<polyline fill="none" stroke="{colour}" stroke-width="1.4" points="{pts}"/>')
        ly = pad_t + 14 + 16 * i
        out.append(f'<line x1="{pad_l + pw + 10}" y1="{ly - 4}" x2="{pad_l + pw + 28}" y2="{ly - 4}" stroke="{colour}" stroke-width="2"/>')
        out.append(f'<text x="{pad_l + pw + 32}" y="{ly}">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_chart(path, *args, **kwargs) -> None:
    try:
        Path(path).write_text(line_chart(*args, **kwargs), encoding="utf-8")
    except OSError as exc:
        raise ArtifactError(f"cannot write {path}: {exc}") from exc
