"""Deterministic result files: CSV, JSON summaries, and self-contained SVG.

All writers are plain-text and timestamp-free so identical inputs produce
byte-identical files.
"""

from __future__ import annotations

import json


def fmt(v) -> str:
    """6 significant digits for floats; ints and strings unchanged."""
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return format(v, ".6g")
    return str(v)


def write_csv(path, header: list[str], rows: list[tuple]) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(fmt(v) for v in row))
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def write_json(path, obj) -> None:
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


# ---------------------------------------------------------------------------
# Minimal SVG plotting (line / bar), no external fonts beyond generic family
# ---------------------------------------------------------------------------

_W, _H = 640, 480
_ML, _MR, _MT, _MB = 70, 20, 40, 60


def _scale(vals, lo, hi, out_lo, out_hi):
    span = hi - lo if hi > lo else 1.0
    return [out_lo + (v - lo) / span * (out_hi - out_lo) for v in vals]


def _axes(title: str, xlabel: str, ylabel: str, xticks, yticks) -> list[str]:
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2:.1f}" y="24" text-anchor="middle" font-family="sans-serif" '
        f'font-size="16">{title}</text>',
        f'<line x1="{_ML}" y1="{_H - _MB}" x2="{_W - _MR}" y2="{_H - _MB}" stroke="black"/>',
        f'<line x1="{_ML}" y1="{_MT}" x2="{_ML}" y2="{_H - _MB}" stroke="black"/>',
        f'<text x="{(_ML + _W - _MR) / 2:.1f}" y="{_H - 16}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13">{xlabel}</text>',
        f'<text x="18" y="{(_MT + _H - _MB) / 2:.1f}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13" '
        f'transform="rotate(-90 18 {(_MT + _H - _MB) / 2:.1f})">{ylabel}</text>',
    ]
    for x, label in xticks:
        parts.append(f'<line x1="{x:.1f}" y1="{_H - _MB}" x2="{x:.1f}" '
                     f'y2="{_H - _MB + 5}" stroke="black"/>')
        parts.append(f'<text x="{x:.1f}" y="{_H - _MB + 20}" text-anchor="middle" '
                     f'font-family="sans-serif" font-size="11">{label}</text>')
    for y, label in yticks:
        parts.append(f'<line x1="{_ML - 5}" y1="{y:.1f}" x2="{_ML}" y2="{y:.1f}" '
                     f'stroke="black"/>')
        parts.append(f'<text x="{_ML - 8}" y="{y + 4:.1f}" text-anchor="end" '
                     f'font-family="sans-serif" font-size="11">{label}</text>')
    return parts


_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def write_line_svg(path, title: str, xlabel: str, ylabel: str,
                   series: dict[str, tuple[list, list]]) -> None:
    """series: name -> (x values, y values); y usually accuracies in [0,1]."""
    xs_all = [x for xs, _ in series.values() for x in xs]
    xlo, xhi = min(xs_all), max(xs_all)
    ylo, yhi = 0.0, 1.0
    nticks = 5
    xticks, yticks = [], []
    for i in range(nticks + 1):
        xv = xlo + (xhi - xlo) * i / nticks
        xticks.append((_scale([xv], xlo, xhi, _ML, _W - _MR)[0], fmt(round(xv, 3))))
        yv = ylo + (yhi - ylo) * i / nticks
        yticks.append((_scale([yv], ylo, yhi, _H - _MB, _MT)[0], fmt(round(yv, 3))))
    parts = _axes(title, xlabel, ylabel, xticks, yticks)
    for k, (name, (xs, ys)) in enumerate(sorted(series.items())):
        px = _scale(xs, xlo, xhi, _ML, _W - _MR)
        py = _scale(ys, ylo, yhi, _H - _MB, _MT)
        pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(px, py))
        color = _COLORS[k % len(_COLORS)]
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                     f'stroke-width="2"/>')
        parts.append(f'<text x="{_W - _MR - 4}" y="{_MT + 16 + 16 * k}" text-anchor="end" '
                     f'font-family="sans-serif" font-size="12" fill="{color}">{name}</text>')
    parts.append("</svg>")
    with open(path, "w") as f:
        f.write("\n".join(parts) + "\n")


def write_bar_svg(path, title: str, xlabel: str, ylabel: str,
                  labels: list[str], values: list[float]) -> None:
    n = max(len(values), 1)
    span = _W - _ML - _MR
    bar_w = span / n * 0.8
    ylo, yhi = 0.0, max(1.0, max(values, default=1.0))
    yticks = []
    for i in range(6):
        yv = ylo + (yhi - ylo) * i / 5
        yticks.append((_scale([yv], ylo, yhi, _H - _MB, _MT)[0], fmt(round(yv, 3))))
    step = max(1, n // 16)  # label at most ~16 bars
    xticks = []
    for i in range(0, n, step):
        xticks.append((_ML + span * (i + 0.5) / n, str(labels[i])))
    parts = _axes(title, xlabel, ylabel, xticks, yticks)
    for i, v in enumerate(values):
        x = _ML + span * (i + 0.5) / n - bar_w / 2
        ytop = _scale([v], ylo, yhi, _H - _MB, _MT)[0]
        parts.append(f'<rect x="{x:.2f}" y="{ytop:.2f}" width="{bar_w:.2f}" '
                     f'height="{_H - _MB - ytop:.2f}" fill="#1f77b4"/>')
    parts.append("</svg>")
    with open(path, "w") as f:
        f.write("\n".join(parts) + "\n")
