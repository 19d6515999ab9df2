"""Minimal deterministic SVG emitter: scatter, polyline, histogram bars.

Every coordinate is formatted with a fixed precision and nothing
environment-dependent (timestamps, ids, random jitter) is written, so
identical draw calls produce byte-identical files.
"""

from typing import Optional, Sequence

import numpy as np

from .exceptions import ValidationError

_FMT = "%.4f"


def _f(value: float) -> str:
    out = _FMT % float(value)
    return "0.0000" if out == "-0.0000" else out


class SvgCanvas:
    """Fixed-size canvas mapping data coordinates onto a pixel viewport."""

    def __init__(
        self,
        width: int = 640,
        height: int = 480,
        x_range: Sequence[float] = (0.0, 1.0),
        y_range: Sequence[float] = (0.0, 1.0),
        margin: int = 40,
        title: str = "",
    ):
        if x_range[1] <= x_range[0] or y_range[1] <= y_range[0]:
            raise ValidationError("canvas ranges must be increasing")
        self.width = int(width)
        self.height = int(height)
        self.x_range = (float(x_range[0]), float(x_range[1]))
        self.y_range = (float(y_range[0]), float(y_range[1]))
        self.margin = int(margin)
        self._parts = []
        self._parts.append(
            '<svg xmlns="http://www.w3.org/2000/svg" width="%d" height="%d" '
            'viewBox="0 0 %d %d">' % (self.width, self.height, self.width, self.height)
        )
        self._parts.append(
            '<rect x="0" y="0" width="%d" height="%d" fill="white"/>'
            % (self.width, self.height)
        )
        frame = (
            self.margin,
            self.margin,
            self.width - 2 * self.margin,
            self.height - 2 * self.margin,
        )
        self._parts.append(
            '<rect x="%d" y="%d" width="%d" height="%d" fill="none" '
            'stroke="#cccccc" stroke-width="1"/>' % frame
        )
        if title:
            self._parts.append(
                '<text x="%d" y="%d" font-family="monospace" font-size="14" '
                'fill="#222222">%s</text>' % (self.margin, self.margin - 12, title)
            )

    def _px(self, x: float) -> float:
        lo, hi = self.x_range
        usable = self.width - 2 * self.margin
        return self.margin + (float(x) - lo) / (hi - lo) * usable

    def _py(self, y: float) -> float:
        lo, hi = self.y_range
        usable = self.height - 2 * self.margin
        return self.height - self.margin - (float(y) - lo) / (hi - lo) * usable

    def scatter(self, points, fill: str, radius: float = 2.5, opacity: float = 1.0):
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValidationError(f"scatter needs (N, 2) points, got {pts.shape}")
        for x, y in pts:
            self._parts.append(
                '<circle cx="%s" cy="%s" r="%s" fill="%s" fill-opacity="%s"/>'
                % (_f(self._px(x)), _f(self._py(y)), _f(radius), fill, _f(opacity))
            )

    def polyline(self, points, stroke: str, width: float = 1.0, opacity: float = 1.0):
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
            raise ValidationError(f"polyline needs (N>=2, 2) points, got {pts.shape}")
        coords = " ".join(
            "%s,%s" % (_f(self._px(x)), _f(self._py(y))) for x, y in pts
        )
        self._parts.append(
            '<polyline points="%s" fill="none" stroke="%s" stroke-width="%s" '
            'stroke-opacity="%s"/>' % (coords, stroke, _f(width), _f(opacity))
        )

    def segment(self, p0, p1, stroke: str, width: float = 0.6, opacity: float = 0.5):
        self._parts.append(
            '<line x1="%s" y1="%s" x2="%s" y2="%s" stroke="%s" stroke-width="%s" '
            'stroke-opacity="%s"/>'
            % (
                _f(self._px(p0[0])),
                _f(self._py(p0[1])),
                _f(self._px(p1[0])),
                _f(self._py(p1[1])),
                stroke,
                _f(width),
                _f(opacity),
            )
        )

    def bars(
        self,
        edges,
        heights,
        fill: str,
        opacity: float = 0.6,
        y_base: float = 0.0,
    ):
        """Histogram bars spanning [edges[i], edges[i+1]] up to heights[i]."""
        edges = np.asarray(edges, dtype=np.float64)
        heights = np.asarray(heights, dtype=np.float64)
        if edges.ndim != 1 or heights.shape != (edges.shape[0] - 1,):
            raise ValidationError("bars needs edges (B+1,) and heights (B,)")
        base = self._py(y_base)
        for i, h in enumerate(heights):
            x0, x1 = self._px(edges[i]), self._px(edges[i + 1])
            top = self._py(y_base + float(h))
            self._parts.append(
                '<rect x="%s" y="%s" width="%s" height="%s" fill="%s" '
                'fill-opacity="%s"/>'
                % (_f(x0), _f(top), _f(x1 - x0), _f(base - top), fill, _f(opacity))
            )

    def text(self, x: float, y: float, s: str, fill: str = "#222222", size: int = 12):
        self._parts.append(
            '<text x="%s" y="%s" font-family="monospace" font-size="%d" '
            'fill="%s">%s</text>' % (_f(self._px(x)), _f(self._py(y)), size, fill, s)
        )

    def legend(self, entries, corner: str = "tr"):
        """entries: [(label, color), ...]; drawn inside the frame corner."""
        x = self.width - self.margin - 150 if corner.endswith("r") else self.margin + 10
        y = self.margin + 18 if corner.startswith("t") else self.height - self.margin - 18 * len(entries)
        for i, (label, color) in enumerate(entries):
            yy = y + 16 * i
            self._parts.append(
                '<circle cx="%d" cy="%d" r="4" fill="%s"/>' % (x, yy - 4, color)
            )
            self._parts.append(
                '<text x="%d" y="%d" font-family="monospace" font-size="12" '
                'fill="#222222">%s</text>' % (x + 10, yy, label)
            )

    def to_string(self) -> str:
        return "\n".join(self._parts + ["</svg>"]) + "\n"

    def write(self, path):
        with open(path, "w", newline="\n") as fh:
            fh.write(self.to_string())


def data_range(arrays, pad: float = 0.08):
    """Common (lo, hi) covering every array column-0/1 pair, padded."""
    stacked = np.vstack([np.asarray(a, dtype=np.float64) for a in arrays])
    lo = stacked.min(axis=0)
    hi = stacked.max(axis=0)
    span = np.maximum(hi - lo, 1e-9)
    return (
        (float(lo[0] - pad * span[0]), float(hi[0] + pad * span[0])),
        (float(lo[1] - pad * span[1]), float(hi[1] + pad * span[1])),
    )
