"""Figure-ready summaries of kriging runs.

Produces distance-binned weight distribution tables (box-plot data plus
zero fractions), per-site observed-vs-smoothed curve tables, and minimal
static SVG renderings of each. CSV is the primary artifact; the SVG
plotter draws polylines, rects, and text only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import FunctionalDataset, evaluate_function
from .dataio import _fmt, _write_csv
from .errors import DataError


@dataclass(frozen=True)
class WeightDistanceTable:
    """Per-distance-bin weight distribution summary (empty bins dropped)."""

    bin_lo: np.ndarray
    bin_hi: np.ndarray
    count: np.ndarray
    zero_fraction: np.ndarray
    q_min: np.ndarray
    q25: np.ndarray
    median: np.ndarray
    q75: np.ndarray
    q_max: np.ndarray

    HEADER = ["bin_lo", "bin_hi", "count", "zero_fraction",
              "min", "q25", "median", "q75", "max"]

    def rows(self):
        return [
            (_fmt(self.bin_lo[b]), _fmt(self.bin_hi[b]), int(self.count[b]),
             _fmt(self.zero_fraction[b]), _fmt(self.q_min[b]),
             _fmt(self.q25[b]), _fmt(self.median[b]), _fmt(self.q75[b]),
             _fmt(self.q_max[b]))
            for b in range(len(self.count))
        ]


def weight_distance_table(weights, distances,
                          n_bins: int = 10) -> WeightDistanceTable:
    """Bin weights by target distance; per bin report quartiles and the
    fraction of exactly-zero weights."""
    weights = np.asarray(weights, dtype=float)
    distances = np.asarray(distances, dtype=float)
    if weights.shape != distances.shape or weights.ndim != 1:
        raise DataError("weights and distances must be equal-length vectors")
    if len(weights) == 0:
        raise DataError("need at least one weight")
    if np.any(distances < 0):
        raise DataError("distances must be >= 0")
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    d_max = float(distances.max())
    edges = np.linspace(0.0, d_max if d_max > 0 else 1.0, n_bins + 1)
    idx = np.clip(np.searchsorted(edges, distances, side="right") - 1,
                  0, n_bins - 1)
    cols = {k: [] for k in ("lo", "hi", "n", "zf", "mn", "q25", "md",
                            "q75", "mx")}
    for b in range(n_bins):
        w = weights[idx == b]
        if len(w) == 0:
            continue
        cols["lo"].append(edges[b])
        cols["hi"].append(edges[b + 1])
        cols["n"].append(len(w))
        cols["zf"].append(float(np.mean(w == 0.0)))
        cols["mn"].append(float(w.min()))
        cols["q25"].append(float(np.quantile(w, 0.25)))
        cols["md"].append(float(np.median(w)))
        cols["q75"].append(float(np.quantile(w, 0.75)))
        cols["mx"].append(float(w.max()))
    return WeightDistanceTable(
        np.array(cols["lo"]), np.array(cols["hi"]),
        np.array(cols["n"], dtype=int), np.array(cols["zf"]),
        np.array(cols["mn"]), np.array(cols["q25"]), np.array(cols["md"]),
        np.array(cols["q75"]), np.array(cols["mx"]))


def write_weight_distance_csv(path, table: WeightDistanceTable) -> None:
    _write_csv(path, WeightDistanceTable.HEADER, table.rows())


def curve_rows(dataset: FunctionalDataset, table_times, table_values):
    """Long-format per-site observed vs smoothed values.

    Rows are (site_id, t, observed, smoothed), with the smoothed curve
    evaluated at the site's own observation times.
    """
    rows = []
    for i, sid in enumerate(dataset.locations.site_ids):
        ts = np.asarray(table_times[i], dtype=float)
        vs = np.asarray(table_values[i], dtype=float)
        fitted = evaluate_function(dataset.basis, dataset.W[i], ts)
        rows.extend((sid, _fmt(t), _fmt(v), _fmt(f))
                    for t, v, f in zip(ts, vs, fitted))
    return rows


def write_curves_csv(path, dataset: FunctionalDataset,
                     table_times, table_values) -> None:
    _write_csv(path, ["site_id", "t", "observed", "smoothed"],
               curve_rows(dataset, table_times, table_values))


# --- minimal SVG rendering -------------------------------------------------

_W, _H = 640, 420
_ML, _MR, _MT, _MB = 70, 20, 40, 50  # margins


def _axis_limits(lo: float, hi: float) -> tuple[float, float]:
    if hi <= lo:
        hi = lo + 1.0
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


class _Canvas:
    """Data-space to pixel-space mapping plus an element buffer."""

    def __init__(self, x_lim, y_lim, title, x_label, y_label):
        self.x0, self.x1 = _axis_limits(*x_lim)
        self.y0, self.y1 = _axis_limits(*y_lim)
        self.parts: list[str] = []
        self._frame(title, x_label, y_label)

    def px(self, x: float) -> float:
        return _ML + (x - self.x0) / (self.x1 - self.x0) * (_W - _ML - _MR)

    def py(self, y: float) -> float:
        return _H - _MB - (y - self.y0) / (self.y1 - self.y0) * (_H - _MT - _MB)

    def _frame(self, title, x_label, y_label):
        self.parts.append(
            f'<rect x="{_ML}" y="{_MT}" width="{_W - _ML - _MR}" '
            f'height="{_H - _MT - _MB}" fill="none" stroke="black"/>')
        self.text(_W / 2, _MT - 14, title, anchor="middle", size=16)
        self.text(_W / 2, _H - 10, x_label, anchor="middle")
        self.parts.append(
            f'<text x="16" y="{_H / 2}" text-anchor="middle" font-size="13" '
            f'transform="rotate(-90 16 {_H / 2})">{y_label}</text>')
        for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
            xv = self.x0 + frac * (self.x1 - self.x0)
            yv = self.y0 + frac * (self.y1 - self.y0)
            self.text(self.px(xv), _H - _MB + 18, f"{xv:.3g}", anchor="middle",
                      size=11)
            self.text(_ML - 6, self.py(yv) + 4, f"{yv:.3g}", anchor="end",
                      size=11)

    def text(self, x, y, s, anchor="start", size=13):
        self.parts.append(f'<text x="{x:.1f}" y="{y:.1f}" '
                          f'text-anchor="{anchor}" font-size="{size}">{s}</text>')

    def polyline(self, xs, ys, color="steelblue"):
        pts = " ".join(f"{self.px(x):.2f},{self.py(y):.2f}"
                       for x, y in zip(xs, ys))
        self.parts.append(f'<polyline points="{pts}" fill="none" '
                          f'stroke="{color}" stroke-width="1.5"/>')

    def rect(self, x_lo, x_hi, y_lo, y_hi, color="steelblue"):
        x, y = self.px(x_lo), self.py(y_hi)
        w, h = self.px(x_hi) - self.px(x_lo), self.py(y_lo) - self.py(y_hi)
        self.parts.append(f'<rect x="{x:.2f}" y="{y:.2f}" width="{w:.2f}" '
                          f'height="{h:.2f}" fill="{color}" fill-opacity="0.5" '
                          f'stroke="black" stroke-width="0.8"/>')

    def hline(self, x_lo, x_hi, y, color="black", width=1.5):
        self.parts.append(f'<line x1="{self.px(x_lo):.2f}" y1="{self.py(y):.2f}" '
                          f'x2="{self.px(x_hi):.2f}" y2="{self.py(y):.2f}" '
                          f'stroke="{color}" stroke-width="{width}"/>')

    def vline(self, x, y_lo, y_hi, color="black", width=1.0):
        self.parts.append(f'<line x1="{self.px(x):.2f}" y1="{self.py(y_lo):.2f}" '
                          f'x2="{self.px(x):.2f}" y2="{self.py(y_hi):.2f}" '
                          f'stroke="{color}" stroke-width="{width}"/>')

    def render(self) -> str:
        body = "\n".join(self.parts)
        return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" '
                f'height="{_H}" font-family="sans-serif">\n{body}\n</svg>\n')


def svg_line_chart(series, title: str, x_label: str, y_label: str) -> str:
    """series: list of (xs, ys, color) polylines on shared axes."""
    if not series:
        raise ValueError("need at least one series")
    all_x = np.concatenate([np.asarray(s[0], dtype=float) for s in series])
    all_y = np.concatenate([np.asarray(s[1], dtype=float) for s in series])
    cv = _Canvas((all_x.min(), all_x.max()), (all_y.min(), all_y.max()),
                 title, x_label, y_label)
    for xs, ys, color in series:
        cv.polyline(xs, ys, color)
    return cv.render()


def svg_box_chart(table: WeightDistanceTable, title: str, x_label: str,
                  y_label: str) -> str:
    """One box (quartiles + min/max whiskers) per distance bin."""
    if len(table.count) == 0:
        raise ValueError("table has no bins")
    y_lo = min(float(table.q_min.min()), 0.0)
    y_hi = float(table.q_max.max())
    cv = _Canvas((float(table.bin_lo[0]), float(table.bin_hi[-1])),
                 (y_lo, y_hi), title, x_label, y_label)
    for b in range(len(table.count)):
        lo, hi = table.bin_lo[b], table.bin_hi[b]
        mid = 0.5 * (lo + hi)
        x_in, x_out = lo + 0.15 * (hi - lo), hi - 0.15 * (hi - lo)
        cv.rect(x_in, x_out, table.q25[b], table.q75[b])
        cv.hline(x_in, x_out, table.median[b], width=2.0)
        cv.vline(mid, table.q_min[b], table.q25[b])
        cv.vline(mid, table.q75[b], table.q_max[b])
    return cv.render()


def svg_bar_chart(bin_lo, bin_hi, heights, title: str, x_label: str,
                  y_label: str) -> str:
    """Histogram-style bars over contiguous or gapped bins."""
    bin_lo = np.asarray(bin_lo, dtype=float)
    bin_hi = np.asarray(bin_hi, dtype=float)
    heights = np.asarray(heights, dtype=float)
    if not (len(bin_lo) == len(bin_hi) == len(heights)) or len(heights) == 0:
        raise ValueError("need equal-length nonempty bin arrays")
    cv = _Canvas((float(bin_lo[0]), float(bin_hi[-1])),
                 (0.0, max(float(heights.max()), 1e-12)),
                 title, x_label, y_label)
    for lo, hi, h in zip(bin_lo, bin_hi, heights):
        cv.rect(lo, hi, 0.0, float(h))
    return cv.render()
