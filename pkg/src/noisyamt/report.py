"""SNR-curve SVG rendering and summary tables built from a SweepResult."""

import math
from dataclasses import dataclass
from xml.sax.saxutils import escape

import numpy as np

from .augmentation import format_level

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")

WIDTH, HEIGHT = 640, 400
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 60, 150, 30, 50


@dataclass(frozen=True)
class PlotSeries:
    label: str
    points: tuple  # (snr_db, mean_score, stderr), sorted by snr_db

    def __post_init__(self):
        pts = tuple((float(x), float(y), float(e)) for x, y, e in self.points)
        if any(a[0] >= b[0] for a, b in zip(pts, pts[1:])):
            raise ValueError(f"series {self.label!r}: points must be strictly ascending in SNR")
        if any(not 0.0 <= y <= 1.0 for _, y, _ in pts):
            raise ValueError(f"series {self.label!r}: scores must lie in [0, 1]")
        object.__setattr__(self, "points", pts)


def series_from_sweep(sweep, metric="f1", systems=None):
    """Mean and standard error across recordings, one series per system."""
    out = []
    for system in systems or sweep.systems():
        by_level = {}
        for (sid, _rec, snr), result in sweep.cells.items():
            if sid == system:
                by_level.setdefault(snr, []).append(getattr(result, metric))
        points = []
        for snr in sorted(by_level):
            values = np.asarray(by_level[snr], dtype=np.float64)
            se = float(np.std(values, ddof=1) / math.sqrt(values.size)) if values.size > 1 else 0.0
            points.append((snr, float(values.mean()), se))
        out.append(PlotSeries(system, tuple(points)))
    return out


def _fmt(v):
    return f"{v:.2f}"


def render_snr_curves_svg(series, title="", y_label="F1"):
    if not series or not any(len(s.points) >= 2 for s in series):
        raise ValueError("need at least one series with two or more points")
    xs = sorted({p[0] for s in series for p in s.points})
    x_lo, x_hi = xs[0], xs[-1]
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    plot_w = WIDTH - MARGIN_L - MARGIN_R
    plot_h = HEIGHT - MARGIN_T - MARGIN_B

    def px(x):
        return MARGIN_L + (x - x_lo) / (x_hi - x_lo) * plot_w

    def py(y):
        return MARGIN_T + (1.0 - min(1.0, max(0.0, y))) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]
    if title:
        parts.append(f'<text x="{WIDTH / 2:.1f}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>')

    parts.append('<g class="axes" stroke="black" fill="none">')
    parts.append(f'<line x1="{MARGIN_L}" y1="{_fmt(py(0))}" x2="{_fmt(px(x_hi))}" y2="{_fmt(py(0))}"/>')
    parts.append(f'<line x1="{MARGIN_L}" y1="{_fmt(py(0))}" x2="{MARGIN_L}" y2="{_fmt(py(1))}"/>')
    parts.append("</g>")

    parts.append('<g class="xticks" text-anchor="middle">')
    for x in xs:
        parts.append(f'<line x1="{_fmt(px(x))}" y1="{_fmt(py(0))}" x2="{_fmt(px(x))}" y2="{_fmt(py(0) + 4)}" stroke="black"/>')
        parts.append(f'<text x="{_fmt(px(x))}" y="{_fmt(py(0) + 16)}">{format_level(x)}</text>')
    parts.append("</g>")
    parts.append('<g class="yticks" text-anchor="end">')
    for i in range(6):
        y = i / 5
        parts.append(f'<line x1="{MARGIN_L - 4}" y1="{_fmt(py(y))}" x2="{MARGIN_L}" y2="{_fmt(py(y))}" stroke="black"/>')
        parts.append(f'<text x="{MARGIN_L - 6}" y="{_fmt(py(y) + 4)}">{y:.1f}</text>')
    parts.append("</g>")
    parts.append(f'<text x="{_fmt(MARGIN_L + plot_w / 2)}" y="{HEIGHT - 10}" text-anchor="middle">SNR (dB)</text>')
    parts.append(f'<text x="14" y="{_fmt(MARGIN_T + plot_h / 2)}" text-anchor="middle" '
                 f'transform="rotate(-90 14 {_fmt(MARGIN_T + plot_h / 2)})">{escape(y_label)}</text>')

    for i, s in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        coords = " ".join(f"{_fmt(px(x))},{_fmt(py(y))}" for x, y, _ in s.points)
        parts.append(f'<g class="series" data-label="{escape(s.label, {chr(34): "&quot;"})}">')
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{coords}"/>')
        for x, y, e in s.points:
            cx = _fmt(px(x))
            parts.append(f'<g class="whisker" stroke="{color}">'
                         f'<line x1="{cx}" y1="{_fmt(py(y - e))}" x2="{cx}" y2="{_fmt(py(y + e))}"/>'
                         f'<circle cx="{cx}" cy="{_fmt(py(y))}" r="2" fill="{color}"/></g>')
        parts.append("</g>")

    parts.append('<g class="legend">')
    for i, s in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        ly = MARGIN_T + 10 + 16 * i
        lx = WIDTH - MARGIN_R + 12
        parts.append(f'<rect x="{lx}" y="{ly - 8}" width="12" height="8" fill="{color}"/>')
        parts.append(f'<text x="{lx + 16}" y="{ly}">{escape(s.label)}</text>')
    parts.append("</g>")
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def render_snr_curves(series, out, title="", y_label="F1"):
    svg = render_snr_curves_svg(series, title, y_label)
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(svg)


def summary_markdown(series_by_metric):
    """Mean ± stderr per (system, SNR) for each metric."""
    lines = []
    for metric, series in series_by_metric.items():
        lines.append(f"### {metric}\n")
        levels = sorted({p[0] for s in series for p in s.points})
        lines.append("| system | " + " | ".join(format_level(x) for x in levels) + " |")
        lines.append("|---|" + "---|" * len(levels))
        for s in series:
            by = {p[0]: p for p in s.points}
            cells = [f"{by[x][1]:.3f} ± {by[x][2]:.3f}" if x in by else "" for x in levels]
            lines.append(f"| {s.label} | " + " | ".join(cells) + " |")
        lines.append("")
    return "\n".join(lines)
