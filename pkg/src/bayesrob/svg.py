"""Minimal deterministic SVG line charts (no external assets)."""

from __future__ import annotations

from dataclasses import dataclass, field
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf")


@dataclass
class Series:
    label: str
    x: list
    y: list
    dashed: bool = False


@dataclass
class LineChart:
    title: str
    xlabel: str
    ylabel: str
    series: list = field(default_factory=list)
    width: int = 640
    height: int = 420
    margin: tuple = (60, 20, 40, 70)  # top, right, bottom, left

    def add(self, label: str, x, y, dashed: bool = False) -> "LineChart":
        self.series.append(Series(label, [float(v) for v in x], [float(v) for v in y], dashed))
        return self

    def _limits(self, values):
        lo, hi = float(min(values)), float(max(values))
        if hi - lo < 1e-12:
            lo, hi = lo - 0.5, hi + 0.5
        pad = 0.05 * (hi - lo)
        return lo - pad, hi + pad

    def render(self) -> str:
        top, right, bottom, left = self.margin
        pw, ph = self.width - left - right, self.height - top - bottom
        xs = [v for s in self.series for v in s.x] or [0.0, 1.0]
        ys = [v for s in self.series for v in s.y] or [0.0, 1.0]
        x0, x1 = self._limits(xs)
        y0, y1 = self._limits(ys)

        def sx(v):
            return left + (v - x0) / (x1 - x0) * pw

        def sy(v):
            return top + ph - (v - y0) / (y1 - y0) * ph

        out = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" height="{self.height}" '
            f'viewBox="0 0 {self.width} {self.height}" font-family="sans-serif" font-size="12">',
            f'<rect x="0" y="0" width="{self.width}" height="{self.height}" fill="white"/>',
            f'<text x="{self.width / 2:.1f}" y="22" text-anchor="middle" font-size="15">'
            f"{escape(self.title)}</text>",
            f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
        ]
        for t in np.linspace(x0, x1, 6)[1:-1]:
            out.append(f'<line x1="{sx(t):.2f}" y1="{top + ph}" x2="{sx(t):.2f}" y2="{top + ph + 5}" stroke="black"/>')
            out.append(f'<text x="{sx(t):.2f}" y="{top + ph + 18}" text-anchor="middle">{t:.3g}</text>')
        for t in np.linspace(y0, y1, 6)[1:-1]:
            out.append(f'<line x1="{left - 5}" y1="{sy(t):.2f}" x2="{left}" y2="{sy(t):.2f}" stroke="black"/>')
            out.append(f'<text x="{left - 8}" y="{sy(t) + 4:.2f}" text-anchor="end">{t:.4g}</text>')
        out.append(f'<text x="{left + pw / 2:.1f}" y="{self.height - 6}" text-anchor="middle">'
                   f"{escape(self.xlabel)}</text>")
        out.append(f'<text x="16" y="{top + ph / 2:.1f}" text-anchor="middle" '
                   f'transform="rotate(-90 16 {top + ph / 2:.1f})">{escape(self.ylabel)}</text>')
        for i, s in enumerate(self.series):
            color = PALETTE[i % len(PALETTE)]
            pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(s.x, s.y))
            dash = ' stroke-dasharray="6 4"' if s.dashed else ""
            out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="2"{dash}/>')
            ly = top + 14 + 16 * i
            out.append(f'<line x1="{left + 10}" y1="{ly - 4}" x2="{left + 30}" y2="{ly - 4}" '
                       f'stroke="{color}" stroke-width="2"{dash}/>')
            out.append(f'<text x="{left + 36}" y="{ly}">{escape(s.label)}</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.render())
