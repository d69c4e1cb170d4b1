"""Minimal deterministic SVG charts.

Charts are written by hand (no plotting library) so the byte stream is
a pure function of the data: no timestamps, library versions, or
session ids leak into the output.
"""

from __future__ import annotations

from pathlib import Path
from typing import Iterable, Sequence

__all__ = ["line_chart_svg", "scatter_svg", "write_svg"]

_WIDTH = 640.0
_HEIGHT = 400.0
_MARGIN_L = 64.0
_MARGIN_R = 24.0
_MARGIN_T = 32.0
_MARGIN_B = 48.0

_PALETTE = (
    "#1f6f8b", "#cc5b45", "#3f7d3a", "#8c5bab",
    "#b3862d", "#4f5d75", "#a23b72", "#2b8c8c",
)


def _fmt(v: float) -> str:
    """Fixed two-decimal coordinates keep the file small and stable."""
    return f"{v:.2f}"


def _bounds(values: Iterable[float]) -> tuple[float, float]:
    vals = list(values)
    lo, hi = min(vals), max(vals)
    if hi == lo:
        pad = 1.0 if hi == 0.0 else abs(hi) * 0.1
        return lo - pad, hi + pad
    return lo, hi


class _Frame:
    """Maps data coordinates into the plot viewport."""

    def __init__(self, x_lo, x_hi, y_lo, y_hi):
        self.x_lo, self.x_hi = x_lo, x_hi
        self.y_lo, self.y_hi = y_lo, y_hi

    def x(self, v: float) -> float:
        span = self.x_hi - self.x_lo
        t = (v - self.x_lo) / span
        return _MARGIN_L + t * (_WIDTH - _MARGIN_L - _MARGIN_R)

    def y(self, v: float) -> float:
        span = self.y_hi - self.y_lo
        t = (v - self.y_lo) / span
        return _HEIGHT - _MARGIN_B - t * (_HEIGHT - _MARGIN_T - _MARGIN_B)


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    return [lo + (hi - lo) * k / (n - 1) for k in range(n)]


def _chart_shell(frame: _Frame, title: str, x_label: str, y_label: str) -> list[str]:
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{int(_WIDTH)}" '
        f'height="{int(_HEIGHT)}" viewBox="0 0 {int(_WIDTH)} {int(_HEIGHT)}">',
        f'<rect width="{int(_WIDTH)}" height="{int(_HEIGHT)}" fill="#ffffff"/>',
        f'<text x="{_fmt(_WIDTH / 2)}" y="20" font-family="monospace" font-size="14" '
        f'text-anchor="middle">{title}</text>',
    ]
    x0, x1 = _MARGIN_L, _WIDTH - _MARGIN_R
    y0, y1 = _HEIGHT - _MARGIN_B, _MARGIN_T
    parts.append(
        f'<path d="M {_fmt(x0)} {_fmt(y1)} L {_fmt(x0)} {_fmt(y0)} L {_fmt(x1)} {_fmt(y0)}" '
        f'fill="none" stroke="#333333" stroke-width="1"/>'
    )
    for tx in _ticks(frame.x_lo, frame.x_hi):
        px = frame.x(tx)
        parts.append(
            f'<line x1="{_fmt(px)}" y1="{_fmt(y0)}" x2="{_fmt(px)}" y2="{_fmt(y0 + 4)}" '
            f'stroke="#333333" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{_fmt(px)}" y="{_fmt(y0 + 18)}" font-family="monospace" '
            f'font-size="10" text-anchor="middle">{tx:.3g}</text>'
        )
    for ty in _ticks(frame.y_lo, frame.y_hi):
        py = frame.y(ty)
        parts.append(
            f'<line x1="{_fmt(x0 - 4)}" y1="{_fmt(py)}" x2="{_fmt(x0)}" y2="{_fmt(py)}" '
            f'stroke="#333333" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{_fmt(x0 - 8)}" y="{_fmt(py + 3)}" font-family="monospace" '
            f'font-size="10" text-anchor="end">{ty:.3g}</text>'
        )
    parts.append(
        f'<text x="{_fmt((x0 + x1) / 2)}" y="{_fmt(_HEIGHT - 10)}" font-family="monospace" '
        f'font-size="12" text-anchor="middle">{x_label}</text>'
    )
    parts.append(
        f'<text x="16" y="{_fmt((y0 + y1) / 2)}" font-family="monospace" font-size="12" '
        f'text-anchor="middle" transform="rotate(-90 16 {_fmt((y0 + y1) / 2)})">{y_label}</text>'
    )
    return parts


def line_chart_svg(
    series: Sequence[tuple[str, Sequence[float], Sequence[float]]],
    *,
    title: str = "",
    x_label: str = "",
    y_label: str = "",
) -> str:
    """Render named (xs, ys) series as a polyline chart with a legend."""
    if not series:
        raise ValueError("line chart needs at least one series")
    all_x = [x for _, xs, _ in series for x in xs]
    all_y = [y for _, _, ys in series for y in ys]
    if not all_x:
        raise ValueError("line chart needs at least one point")
    frame = _Frame(*_bounds(all_x), *_bounds(all_y))
    parts = _chart_shell(frame, title, x_label, y_label)
    for idx, (name, xs, ys) in enumerate(series):
        if len(xs) != len(ys):
            raise ValueError(f"series {name!r}: {len(xs)} xs vs {len(ys)} ys")
        color = _PALETTE[idx % len(_PALETTE)]
        points = " ".join(f"{_fmt(frame.x(x))},{_fmt(frame.y(y))}" for x, y in zip(xs, ys))
        parts.append(
            f'<polyline points="{points}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
        for x, y in zip(xs, ys):
            parts.append(
                f'<circle cx="{_fmt(frame.x(x))}" cy="{_fmt(frame.y(y))}" r="2.5" '
                f'fill="{color}"/>'
            )
        ly = _MARGIN_T + 14.0 * idx
        lx = _WIDTH - _MARGIN_R - 150.0
        parts.append(
            f'<line x1="{_fmt(lx)}" y1="{_fmt(ly)}" x2="{_fmt(lx + 18)}" y2="{_fmt(ly)}" '
            f'stroke="{color}" stroke-width="1.5"/>'
        )
        parts.append(
            f'<text x="{_fmt(lx + 24)}" y="{_fmt(ly + 3)}" font-family="monospace" '
            f'font-size="10">{name}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def scatter_svg(
    points: Sequence[tuple[float, float]],
    *,
    title: str = "",
    x_label: str = "",
    y_label: str = "",
) -> str:
    """Render (x, y) points as a scatter chart."""
    if not points:
        raise ValueError("scatter needs at least one point")
    frame = _Frame(*_bounds(p[0] for p in points), *_bounds(p[1] for p in points))
    parts = _chart_shell(frame, title, x_label, y_label)
    for x, y in points:
        parts.append(
            f'<circle cx="{_fmt(frame.x(x))}" cy="{_fmt(frame.y(y))}" r="2" '
            f'fill="#1f6f8b" fill-opacity="0.6"/>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_svg(path, svg: str) -> None:
    Path(path).write_text(svg, encoding="utf-8")
