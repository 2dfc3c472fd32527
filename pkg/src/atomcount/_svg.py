"""Minimal static SVG line plots; no external plotting dependency."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence

_WIDTH, _HEIGHT = 640, 440
_MARGIN_L, _MARGIN_R, _MARGIN_T, _MARGIN_B = 70, 20, 36, 50
_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def _transform(values: Sequence[float], log: bool) -> list[float]:
    if log:
        return [math.log10(v) for v in values]
    return list(values)


def _axis_ticks(lo: float, hi: float, log: bool) -> list[float]:
    if log:
        return list(range(math.floor(lo), math.ceil(hi) + 1))
    if hi == lo:
        return [lo]
    step = 10.0 ** math.floor(math.log10((hi - lo) / 4))
    for mult in (1, 2, 5, 10):
        if (hi - lo) / (step * mult) <= 6:
            step *= mult
            break
    first = math.ceil(lo / step) * step
    ticks = []
    v = first
    while v <= hi + 1e-12 * abs(step):
        ticks.append(v)
        v += step
    return ticks


def _fmt_tick(v: float, log: bool) -> str:
    if log:
        return f"1e{int(v)}"
    return f"{v:.4g}"


def line_plot(
    path: Path,
    series: Sequence[tuple[Sequence[float], Sequence[float], str]],
    xlabel: str,
    ylabel: str,
    title: str = "",
    xlog: bool = False,
    ylog: bool = False,
) -> None:
    """Write a simple multi-series line plot as a standalone SVG file."""
    xs_all: list[float] = []
    ys_all: list[float] = []
    clean_series = []
    for x, y, label in series:
        pts = [
            (xi, yi)
            for xi, yi in zip(x, y)
            if math.isfinite(xi) and math.isfinite(yi)
            and (not xlog or xi > 0) and (not ylog or yi > 0)
        ]
        if not pts:
            continue
        clean_series.append((pts, label))
        xs_all.extend(_transform([p[0] for p in pts], xlog))
        ys_all.extend(_transform([p[1] for p in pts], ylog))
    if not clean_series:
        raise ValueError("no plottable points")

    x_lo, x_hi = min(xs_all), max(xs_all)
    y_lo, y_hi = min(ys_all), max(ys_all)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    pad_x = 0.03 * (x_hi - x_lo)
    pad_y = 0.06 * (y_hi - y_lo)
    x_lo, x_hi = x_lo - pad_x, x_hi + pad_x
    y_lo, y_hi = y_lo - pad_y, y_hi + pad_y

    plot_w = _WIDTH - _MARGIN_L - _MARGIN_R
    plot_h = _HEIGHT - _MARGIN_T - _MARGIN_B

    def px(v: float) -> float:
        return _MARGIN_L + (v - x_lo) / (x_hi - x_lo) * plot_w

    def py(v: float) -> float:
        return _MARGIN_T + plot_h - (v - y_lo) / (y_hi - y_lo) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" height="{_HEIGHT}" '
        f'viewBox="0 0 {_WIDTH} {_HEIGHT}" font-family="monospace" font-size="12">',
        f'<rect width="{_WIDTH}" height="{_HEIGHT}" fill="white"/>',
        f'<rect x="{_MARGIN_L}" y="{_MARGIN_T}" width="{plot_w}" height="{plot_h}" '
        'fill="none" stroke="black"/>',
    ]
    if title:
        parts.append(
            f'<text x="{_WIDTH / 2:.1f}" y="20" text-anchor="middle">{title}</text>'
        )

    for tick in _axis_ticks(x_lo, x_hi, xlog):
        if not x_lo <= tick <= x_hi:
            continue
        x = px(tick)
        parts.append(
            f'<line x1="{x:.1f}" y1="{_MARGIN_T + plot_h}" x2="{x:.1f}" '
            f'y2="{_MARGIN_T + plot_h + 5}" stroke="black"/>'
        )
        parts.append(
            f'<text x="{x:.1f}" y="{_MARGIN_T + plot_h + 18}" text-anchor="middle">'
            f"{_fmt_tick(tick, xlog)}</text>"
        )
    for tick in _axis_ticks(y_lo, y_hi, ylog):
        if not y_lo <= tick <= y_hi:
            continue
        y = py(tick)
        parts.append(
            f'<line x1="{_MARGIN_L - 5}" y1="{y:.1f}" x2="{_MARGIN_L}" '
            f'y2="{y:.1f}" stroke="black"/>'
        )
        parts.append(
            f'<text x="{_MARGIN_L - 8}" y="{y + 4:.1f}" text-anchor="end">'
            f"{_fmt_tick(tick, ylog)}</text>"
        )
    parts.append(
        f'<text x="{_MARGIN_L + plot_w / 2:.1f}" y="{_HEIGHT - 12}" '
        f'text-anchor="middle">{xlabel}</text>'
    )
    parts.append(
        f'<text x="16" y="{_MARGIN_T + plot_h / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {_MARGIN_T + plot_h / 2:.1f})">{ylabel}</text>'
    )

    for idx, (pts, label) in enumerate(clean_series):
        color = _COLORS[idx % len(_COLORS)]
        coords = " ".join(
            f"{px(tx):.2f},{py(ty):.2f}"
            for tx, ty in zip(
                _transform([p[0] for p in pts], xlog),
                _transform([p[1] for p in pts], ylog),
            )
        )
        parts.append(
            f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
        legend_y = _MARGIN_T + 16 + 16 * idx
        parts.append(
            f'<line x1="{_MARGIN_L + plot_w - 150}" y1="{legend_y - 4}" '
            f'x2="{_MARGIN_L + plot_w - 126}" y2="{legend_y - 4}" '
            f'stroke="{color}" stroke-width="1.5"/>'
        )
        parts.append(
            f'<text x="{_MARGIN_L + plot_w - 120}" y="{legend_y}">{label}</text>'
        )

    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n", encoding="utf-8")
