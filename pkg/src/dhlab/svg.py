"""Minimal self-contained SVG line/scatter rendering for plot emission."""

from __future__ import annotations

from typing import List, Optional, Sequence, Tuple

import numpy as np

_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
           "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"]

WIDTH, HEIGHT = 800, 500
MARGIN = 60


def _axis_range(values) -> Tuple[float, float]:
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    if v.size == 0:
        return 0.0, 1.0
    lo, hi = float(v.min()), float(v.max())
    if hi <= lo:
        hi = lo + 1.0
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


class SvgPlot:
    """Collects line/scatter series and renders one SVG document."""

    def __init__(self, title: str, xlabel: str = "", ylabel: str = ""):
        self.title = title
        self.xlabel = xlabel
        self.ylabel = ylabel
        self.series: List[tuple] = []   # (kind, x, y, label)

    def line(self, x, y, label: str = "") -> None:
        self.series.append(("line", np.asarray(x, float),
                            np.asarray(y, float), label))

    def scatter(self, x, y, label: str = "") -> None:
        self.series.append(("scatter", np.asarray(x, float),
                            np.asarray(y, float), label))

    def render(self) -> str:
        all_x = np.concatenate([s[1] for s in self.series]) if self.series else []
        all_y = np.concatenate([s[2] for s in self.series]) if self.series else []
        x0, x1 = _axis_range(all_x)
        y0, y1 = _axis_range(all_y)
        W, H, M = WIDTH, HEIGHT, MARGIN

        def px(x):
            return M + (x - x0) / (x1 - x0) * (W - 2 * M)

        def py(y):
            return H - M - (y - y0) / (y1 - y0) * (H - 2 * M)

        parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
            f'viewBox="0 0 {W} {H}">',
            f'<rect width="{W}" height="{H}" fill="white"/>',
            f'<text x="{W / 2}" y="24" text-anchor="middle" '
            f'font-family="sans-serif" font-size="16">{self.title}</text>',
            f'<rect x="{M}" y="{M}" width="{W - 2 * M}" height="{H - 2 * M}" '
            f'fill="none" stroke="#333"/>',
        ]
        for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
            xv = x0 + frac * (x1 - x0)
            yv = y0 + frac * (y1 - y0)
            parts.append(
                f'<text x="{px(xv):.1f}" y="{H - M + 18}" text-anchor="middle" '
                f'font-family="sans-serif" font-size="11">{xv:.3g}</text>')
            parts.append(
                f'<text x="{M - 8}" y="{py(yv):.1f}" text-anchor="end" '
                f'font-family="sans-serif" font-size="11">{yv:.3g}</text>')
        if self.xlabel:
            parts.append(f'<text x="{W / 2}" y="{H - 12}" text-anchor="middle" '
                         f'font-family="sans-serif" font-size="13">'
                         f'{self.xlabel}</text>')
        if self.ylabel:
            parts.append(
                f'<text x="16" y="{H / 2}" text-anchor="middle" '
                f'font-family="sans-serif" font-size="13" '
                f'transform="rotate(-90 16 {H / 2})">{self.ylabel}</text>')
        for k, (kind, x, y, label) in enumerate(self.series):
            color = _COLORS[k % len(_COLORS)]
            ok = np.isfinite(x) & np.isfinite(y)
            xs, ys = x[ok], y[ok]
            if kind == "line":
                pts = " ".join(f"{px(a):.1f},{py(b):.1f}"
                               for a, b in zip(xs, ys))
                parts.append(f'<polyline points="{pts}" fill="none" '
                             f'stroke="{color}" stroke-width="1.2"/>')
            else:
                for a, b in zip(xs, ys):
                    parts.append(f'<circle cx="{px(a):.1f}" cy="{py(b):.1f}" '
                                 f'r="2" fill="{color}" fill-opacity="0.6"/>')
            if label:
                ly = M + 18 + 16 * k
                parts.append(f'<rect x="{W - M - 150}" y="{ly - 9}" width="12" '
                             f'height="9" fill="{color}"/>')
                parts.append(f'<text x="{W - M - 132}" y="{ly}" '
                             f'font-family="sans-serif" font-size="12">'
                             f'{label}</text>')
        parts.append("</svg>")
        return "\n".join(parts)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.render())
