"""Deterministic SVG line charts for sweep results, traces, and fronts.

Hand-rolled SVG rather than a plotting library so output bytes are a pure
function of the input: no timestamps, no font metrics, no library version
drift.  Three x-axis flavors cover the package's figures: model width
(log10 scale), training step (linear), and constraint level thr (linear).
Each series draws a polyline with circle markers and an optional translucent
confidence band.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SpecError

__all__ = ["ChartSeries", "ChartSpec", "render_chart", "PALETTE"]

PALETTE = [
    "#1f77b4",
    "#d62728",
    "#2ca02c",
    "#ff7f0e",
    "#9467bd",
    "#8c564b",
    "#17becf",
    "#7f7f7f",
    "#bcbd22",
    "#e377c2",
]

_AXES = ("width", "step", "thr")

# Fixed geometry (viewbox units).
_W, _H = 640, 400
_ML, _MR, _MT, _MB = 70, 20, 40, 50


@dataclass(frozen=True)
class ChartSeries:
    """One line: equal-length x and y, optional CI half-widths per point."""

    label: str
    x: tuple[float, ...]
    y: tuple[float, ...]
    ci: tuple[float, ...] | None = None


@dataclass(frozen=True)
class ChartSpec:
    """Axis kind, title, and optional vertical marker (e.g. a detected
    interpolation width, which then also appears as a tick label)."""

    x_axis: str = "width"
    title: str = ""
    y_label: str = ""
    x_marker: float | None = None


def _fmt(v: float) -> str:
    return f"{v:.2f}".rstrip("0").rstrip(".")


def _fmt_tick(v: float) -> str:
    if v == 0:
        return "0"
    if abs(v) >= 1000 and float(v).is_integer():
        return str(int(v))
    if 0.001 <= abs(v) < 1000:
        return f"{v:.4g}"
    return f"{v:.2e}"


def _validate(spec: ChartSpec, data: list[ChartSeries]) -> None:
    if spec.x_axis not in _AXES:
        raise SpecError(f"x_axis must be one of {_AXES}")
    if not data:
        raise SpecError("chart needs at least one series")
    for s in data:
        if len(s.x) != len(s.y) or not s.x:
            raise SpecError(f"series {s.label!r}: x and y must be equal-length, non-empty")
        if s.ci is not None and len(s.ci) != len(s.x):
            raise SpecError(f"series {s.label!r}: ci length must match x")
        values = list(s.x) + list(s.y) + (list(s.ci) if s.ci else [])
        if not np.isfinite(values).all():
            raise SpecError(f"series {s.label!r} contains NaN or infinite values")
        if spec.x_axis == "width" and min(s.x) <= 0:
            raise SpecError("width axis requires positive x values")


def _ticks_linear(lo: float, hi: float, n: int = 6) -> list[float]:
    if hi == lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** np.floor(np.log10(raw))
    step = min(s * mag for s in (1, 2, 5, 10) if s * mag >= raw)
    first = np.ceil(lo / step) * step
    ticks = []
    t = first
    while t <= hi + 1e-9 * step:
        ticks.append(float(round(t / step) * step))
        t += step
    return ticks


def _ticks_log(lo: float, hi: float) -> list[float]:
    lo_e = int(np.floor(np.log10(lo)))
    hi_e = int(np.ceil(np.log10(hi)))
    ticks = []
    for e in range(lo_e, hi_e + 1):
        for mult in (1, 2, 5):
            v = mult * 10.0**e
            if lo <= v <= hi:
                ticks.append(v)
    return ticks or [lo, hi]


def render_chart(spec: ChartSpec, data: list[ChartSeries]) -> str:
    """Standalone SVG document; identical inputs give identical bytes."""
    _validate(spec, data)

    xs = np.concatenate([np.asarray(s.x, dtype=np.float64) for s in data])
    ys_all = []
    for s in data:
        y = np.asarray(s.y, dtype=np.float64)
        ys_all.append(y)
        if s.ci is not None:
            ci = np.asarray(s.ci, dtype=np.float64)
            ys_all.extend([y - ci, y + ci])
    ys = np.concatenate(ys_all)

    log_x = spec.x_axis == "width"
    x_lo, x_hi = float(xs.min()), float(xs.max())
    if spec.x_marker is not None:
        x_lo, x_hi = min(x_lo, spec.x_marker), max(x_hi, spec.x_marker)
    y_lo, y_hi = float(ys.min()), float(ys.max())
    if y_hi == y_lo:
        y_lo, y_hi = y_lo - 0.5, y_hi + 0.5
    pad = 0.05 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad

    if log_x:
        fx_lo, fx_hi = np.log10(x_lo), np.log10(x_hi)
    else:
        fx_lo, fx_hi = x_lo, x_hi
    if fx_hi == fx_lo:
        fx_lo, fx_hi = fx_lo - 0.5, fx_hi + 0.5

    plot_w, plot_h = _W - _ML - _MR, _H - _MT - _MB

    def px(v: float) -> float:
        f = np.log10(v) if log_x else v
        return _ML + (f - fx_lo) / (fx_hi - fx_lo) * plot_w

    def py(v: float) -> float:
        return _MT + (y_hi - v) / (y_hi - y_lo) * plot_h

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2}" y="24" text-anchor="middle" font-family="sans-serif" '
        f'font-size="15">{_escape(spec.title)}</text>',
    ]

    # Axes frame.
    out.append(
        f'<rect x="{_ML}" y="{_MT}" width="{plot_w}" height="{plot_h}" '
        f'fill="none" stroke="#333" stroke-width="1"/>'
    )

    x_ticks = _ticks_log(x_lo, x_hi) if log_x else _ticks_linear(x_lo, x_hi)
    if spec.x_marker is not None and spec.x_marker not in x_ticks:
        x_ticks = sorted(x_ticks + [spec.x_marker])
    for t in x_ticks:
        x = px(t)
        out.append(
            f'<line x1="{_fmt(x)}" y1="{_MT + plot_h}" x2="{_fmt(x)}" '
            f'y2="{_MT + plot_h + 5}" stroke="#333"/>'
        )
        out.append(
            f'<text x="{_fmt(x)}" y="{_MT + plot_h + 18}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{_fmt_tick(t)}</text>'
        )
    for t in _ticks_linear(y_lo, y_hi):
        y = py(t)
        out.append(
            f'<line x1="{_ML - 5}" y1="{_fmt(y)}" x2="{_ML}" y2="{_fmt(y)}" stroke="#333"/>'
        )
        out.append(
            f'<text x="{_ML - 8}" y="{_fmt(y + 4)}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11">{_fmt_tick(t)}</text>'
        )

    out.append(
        f'<text x="{_W / 2}" y="{_H - 12}" text-anchor="middle" font-family="sans-serif" '
        f'font-size="12">{_escape(spec.x_axis)}</text>'
    )
    if spec.y_label:
        out.append(
            f'<text x="16" y="{_MT + plot_h / 2}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="12" '
            f'transform="rotate(-90 16 {_fmt(_MT + plot_h / 2)})">{_escape(spec.y_label)}</text>'
        )

    if spec.x_marker is not None:
        x = px(spec.x_marker)
        out.append(
            f'<line x1="{_fmt(x)}" y1="{_MT}" x2="{_fmt(x)}" y2="{_MT + plot_h}" '
            f'stroke="#2ca02c" stroke-width="1" stroke-dasharray="4,3"/>'
        )

    for k, s in enumerate(data):
        color = PALETTE[k % len(PALETTE)]
        pts = [(px(xv), py(yv)) for xv, yv in zip(s.x, s.y)]
        if s.ci is not None and len(pts) >= 2:
            upper = [(px(xv), py(yv + cv)) for xv, yv, cv in zip(s.x, s.y, s.ci)]
            lower = [(px(xv), py(yv - cv)) for xv, yv, cv in zip(s.x, s.y, s.ci)]
            path = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in upper + lower[::-1])
            out.append(f'<polygon points="{path}" fill="{color}" fill-opacity="0.15"/>')
        if len(pts) >= 2:
            path = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in pts)
            out.append(
                f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1.5"/>'
            )
        for x, y in pts:
            out.append(
                f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="3" fill="{color}" class="marker"/>'
            )

    # Legend, top-right inside the frame.
    for k, s in enumerate(data):
        color = PALETTE[k % len(PALETTE)]
        y = _MT + 16 + 16 * k
        out.append(
            f'<line x1="{_ML + plot_w - 150}" y1="{y - 4}" x2="{_ML + plot_w - 130}" '
            f'y2="{y - 4}" stroke="{color}" stroke-width="2"/>'
        )
        out.append(
            f'<text x="{_ML + plot_w - 124}" y="{y}" font-family="sans-serif" '
            f'font-size="11">{_escape(s.label)}</text>'
        )

    out.append("</svg>")
    return "\n".join(out) + "\n"


def _escape(text: str) -> str:
    return (
        str(text)
        .replace("&", "&amp;")
        .replace("<", "&lt;")
        .replace(">", "&gt;")
        .replace('"', "&quot;")
    )
