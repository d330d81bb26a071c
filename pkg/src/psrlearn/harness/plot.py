"""Minimal SVG line charts for per-iteration metric curves."""
from __future__ import annotations

import csv
import math
from pathlib import Path
from xml.sax.saxutils import escape

from ..metrics import CSV_FIELDS

COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf")
WIDTH, HEIGHT = 640, 400
MARGIN = dict(left=70, right=150, top=30, bottom=45)


def read_metric_csv(path) -> dict[str, list[float]]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {name: [float(r[name]) for r in rows] for name in CSV_FIELDS}


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi == lo:
        return [lo]
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def line_chart(series: dict[str, tuple[list[float], list[float]]], title: str, ylabel: str) -> str:
    """Render ``{label: (xs, ys)}`` as an SVG document.  Non-finite points are skipped."""
    pts = [(x, y) for xs, ys in series.values() for x, y in zip(xs, ys) if math.isfinite(y)]
    x_lo = min((p[0] for p in pts), default=0.0)
    x_hi = max((p[0] for p in pts), default=1.0)
    y_lo = min((p[1] for p in pts), default=0.0)
    y_hi = max((p[1] for p in pts), default=1.0)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_lo, y_hi = y_lo - 0.5, y_hi + 0.5
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def sx(x):
        return MARGIN["left"] + (x - x_lo) / (x_hi - x_lo) * pw

    def sy(y):
        return MARGIN["top"] + (1.0 - (y - y_lo) / (y_hi - y_lo)) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.1f}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>',
        f'<rect x="{MARGIN["left"]}" y="{MARGIN["top"]}" width="{pw}" height="{ph}" '
        'fill="none" stroke="black"/>',
    ]
    for x in _ticks(x_lo, x_hi):
        out.append(f'<text x="{sx(x):.1f}" y="{HEIGHT - MARGIN["bottom"] + 15}" '
                   f'text-anchor="middle">{x:g}</text>')
    for y in _ticks(y_lo, y_hi):
        out.append(f'<text x="{MARGIN["left"] - 5}" y="{sy(y) + 4:.1f}" '
                   f'text-anchor="end">{y:.4g}</text>')
    out.append(f'<text x="{MARGIN["left"] + pw / 2:.1f}" y="{HEIGHT - 8}" '
               'text-anchor="middle">iteration</text>')
    out.append(f'<text x="14" y="{MARGIN["top"] + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 14 {MARGIN["top"] + ph / 2:.1f})">{escape(ylabel)}</text>')
    for i, (label, (xs, ys)) in enumerate(series.items()):
        color = COLORS[i % len(COLORS)]
        coords = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys) if math.isfinite(y))
        if coords:
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{coords}"/>')
        ly = MARGIN["top"] + 12 + 16 * i
        lx = WIDTH - MARGIN["right"] + 10
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 20}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 25}" y="{ly + 4}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def plot_csvs(csv_paths, out_dir, metrics=None) -> list[Path]:
    """One chart per metric, one series per CSV.  The series label is the
    file stem with any ``avg_`` prefix removed."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    data = {}
    for p in csv_paths:
        p = Path(p)
        label = p.stem[4:] if p.stem.startswith("avg_") else p.stem
        data[label] = read_metric_csv(p)
    metrics = metrics or [m for m in CSV_FIELDS if m != "iteration"]
    written = []
    for m in metrics:
        series = {label: (d["iteration"], d[m]) for label, d in data.items()}
        path = out_dir / f"{m}.svg"
        path.write_text(line_chart(series, m, m))
        written.append(path)
    return written
