"""Tiny static SVG plotter: axes, optional log scales, scatter and line series.

Output is plain text with fixed number formatting so figures diff cleanly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf")


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _tick_label(v: float) -> str:
    if v == 0:
        return "0"
    if abs(v) >= 1e4 or abs(v) < 1e-2:
        return f"{v:.0e}".replace("e-0", "e-").replace("e+0", "e")
    return f"{v:g}"


def _linear_ticks(lo: float, hi: float, n: int = 6) -> list[float]:
    span = hi - lo
    if span <= 0:
        return [lo]
    raw = span / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=10 * mag)
    first = math.ceil(lo / step) * step
    ticks = []
    t = first
    while t <= hi + 1e-9 * span:
        ticks.append(round(t, 12))
        t += step
    return ticks


def _log_ticks(lo: float, hi: float) -> list[float]:
    return [10.0 ** k for k in range(math.floor(math.log10(lo)), math.ceil(math.log10(hi)) + 1)
            if lo <= 10.0 ** k <= hi * (1 + 1e-12)]


@dataclass
class Series:
    x: list
    y: list
    label: str
    style: str = "scatter"
    color: str | None = None


@dataclass
class Plot:
    title: str = ""
    xlabel: str = ""
    ylabel: str = ""
    logx: bool = False
    logy: bool = False
    width: int = 640
    height: int = 440
    series: list = field(default_factory=list)

    def scatter(self, x, y, label: str, color: str | None = None) -> "Plot":
        self.series.append(Series(list(map(float, x)), list(map(float, y)), label, "scatter", color))
        return self

    def line(self, x, y, label: str, color: str | None = None) -> "Plot":
        self.series.append(Series(list(map(float, x)), list(map(float, y)), label, "line", color))
        return self

    def _points(self, s: Series):
        for x, y in zip(s.x, s.y):
            if not (math.isfinite(x) and math.isfinite(y)):
                continue
            if (self.logx and x <= 0) or (self.logy and y <= 0):
                continue
            yield x, y

    def render(self) -> str:
        left, right, top, bottom = 78, 20, 40, 58
        pw, ph = self.width - left - right, self.height - top - bottom
        pts = [p for s in self.series for p in self._points(s)]
        if not pts:
            pts = [(1.0, 1.0), (10.0, 10.0)]
        xs, ys = [p[0] for p in pts], [p[1] for p in pts]
        fx = math.log10 if self.logx else (lambda v: v)
        fy = math.log10 if self.logy else (lambda v: v)
        x0, x1 = fx(min(xs)), fx(max(xs))
        y0, y1 = fy(min(ys)), fy(max(ys))
        if not self.logy:
            y0 = min(y0, 0.0)
        if x1 == x0:
            x1 = x0 + 1
        if y1 == y0:
            y1 = y0 + 1
        pad_y = 0.04 * (y1 - y0)
        y1 += pad_y
        if self.logy:
            y0 -= pad_y

        def px(v):
            return left + (fx(v) - x0) / (x1 - x0) * pw

        def py(v):
            return top + ph - (fy(v) - y0) / (y1 - y0) * ph

        out = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" height="{self.height}" '
            f'viewBox="0 0 {self.width} {self.height}" font-family="sans-serif" font-size="11">',
            f'<rect width="{self.width}" height="{self.height}" fill="white"/>',
            f'<text x="{self.width / 2:.1f}" y="22" text-anchor="middle" font-size="14">{escape(self.title)}</text>',
            f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
        ]
        lo_x, hi_x = (10 ** x0, 10 ** x1) if self.logx else (x0, x1)
        lo_y, hi_y = (10 ** y0, 10 ** y1) if self.logy else (y0, y1)
        for t in (_log_ticks(lo_x, hi_x) if self.logx else _linear_ticks(lo_x, hi_x)):
            x = px(t)
            out.append(f'<line x1="{_fmt(x)}" y1="{top + ph}" x2="{_fmt(x)}" y2="{top + ph + 5}" stroke="black"/>')
            out.append(f'<text x="{_fmt(x)}" y="{top + ph + 18}" text-anchor="middle">{_tick_label(t)}</text>')
        for t in (_log_ticks(lo_y, hi_y) if self.logy else _linear_ticks(lo_y, hi_y)):
            y = py(t)
            out.append(f'<line x1="{left - 5}" y1="{_fmt(y)}" x2="{left}" y2="{_fmt(y)}" stroke="black"/>')
            out.append(f'<text x="{left - 8}" y="{_fmt(y + 4)}" text-anchor="end">{_tick_label(t)}</text>')
        out.append(f'<text x="{left + pw / 2:.1f}" y="{self.height - 14}" text-anchor="middle">'
                   f'{escape(self.xlabel)}</text>')
        out.append(f'<text x="16" y="{top + ph / 2:.1f}" text-anchor="middle" '
                   f'transform="rotate(-90 16 {top + ph / 2:.1f})">{escape(self.ylabel)}</text>')
        out.append(f'<clipPath id="plotarea"><rect x="{left}" y="{top}" width="{pw}" height="{ph}"/></clipPath>')
        for i, s in enumerate(self.series):
            color = s.color or PALETTE[i % len(PALETTE)]
            p = [(px(x), py(y)) for x, y in self._points(s)]
            if s.style == "line" and len(p) > 1:
                d = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in p)
                out.append(f'<polyline points="{d}" fill="none" stroke="{color}" stroke-width="1.5" '
                           f'clip-path="url(#plotarea)"/>')
            else:
                out.extend(f'<circle cx="{_fmt(a)}" cy="{_fmt(b)}" r="2.5" fill="{color}" '
                           f'clip-path="url(#plotarea)"/>' for a, b in p)
            ly = top + 14 + 14 * i
            out.append(f'<rect x="{left + 10}" y="{ly - 8}" width="10" height="10" fill="{color}"/>')
            out.append(f'<text x="{left + 26}" y="{ly + 1}">{escape(s.label)}</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.render())
