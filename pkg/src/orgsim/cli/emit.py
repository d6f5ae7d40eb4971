"""Static SVG line charts and CSV tables."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from orgsim.errors import InvalidArgument, StorageError

WIDTH, HEIGHT = 640, 400
LEFT, RIGHT, TOP, BOTTOM = 72, 160, 40, 56
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")


@dataclass(frozen=True)
class Series:
    name: str
    x: np.ndarray
    y: np.ndarray


@dataclass(frozen=True)
class PlotSpec:
    series: tuple
    path: Path
    title: str = ""
    xlabel: str = ""
    ylabel: str = ""


def _checked(series) -> list:
    out = []
    for s in series:
        x = np.asarray(s.x, dtype=np.float64)
        y = np.asarray(s.y, dtype=np.float64)
        if x.ndim != 1 or y.shape != x.shape or x.size == 0:
            raise InvalidArgument(f"series {s.name!r} needs equal-length non-empty 1-D x and y")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise InvalidArgument(f"series {s.name!r} contains non-finite values")
        out.append(Series(str(s.name), x, y))
    if not out:
        raise InvalidArgument("a plot needs at least one series")
    return out


def nice_ticks(lo: float, hi: float, target: int = 5):
    """Axis limits widened to a 1/2/5 x 10^k step, plus the tick positions."""
    if hi - lo <= 1e-12 * max(abs(lo), abs(hi), 1e-300):
        pad = abs(lo) * 0.1
        if not lo - pad < lo < hi + pad:  # zero, or so small the pad underflows
            pad = 1.0
        lo, hi = lo - pad, hi + pad
    raw = (hi - lo) / target
    mag = 10.0 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 5, 10) if m * mag >= raw)
    k0, k1 = math.floor(lo / step), math.ceil(hi / step)
    return k0 * step, k1 * step, [k * step for k in range(k0, k1 + 1)]


def _label(v: float) -> str:
    s = f"{v:.6g}"
    return "0" if s in ("-0", "0") else s


def render_svg(spec: PlotSpec) -> str:
    series = _checked(spec.series)
    xs = np.concatenate([s.x for s in series])
    ys = np.concatenate([s.y for s in series])
    xlo, xhi, xt = nice_ticks(float(xs.min()), float(xs.max()))
    ylo, yhi, yt = nice_ticks(float(ys.min()), float(ys.max()))
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def px(x):
        return LEFT + (x - xlo) / (xhi - xlo) * pw

    def py(y):
        return TOP + ph - (y - ylo) / (yhi - ylo) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{LEFT + pw / 2:.2f}" y="{TOP / 2 + 4:.2f}" text-anchor="middle" '
        f'font-size="14">{escape(spec.title)}</text>',
        f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for v in xt:
        x = px(v)
        out.append(f'<line x1="{x:.2f}" y1="{TOP + ph}" x2="{x:.2f}" y2="{TOP + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{x:.2f}" y="{TOP + ph + 18}" text-anchor="middle">{_label(v)}</text>')
    for v in yt:
        y = py(v)
        out.append(f'<line x1="{LEFT - 5}" y1="{y:.2f}" x2="{LEFT}" y2="{y:.2f}" stroke="black"/>')
        out.append(f'<text x="{LEFT - 8}" y="{y + 4:.2f}" text-anchor="end">{_label(v)}</text>')
    out.append(f'<text x="{LEFT + pw / 2:.2f}" y="{HEIGHT - 12}" text-anchor="middle">'
               f'{escape(spec.xlabel)}</text>')
    out.append(f'<text x="16" y="{TOP + ph / 2:.2f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {TOP + ph / 2:.2f})">{escape(spec.ylabel)}</text>')
    for i, s in enumerate(series):
        colour = PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(s.x, s.y))
        out.append(f'<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{pts}"/>')
        ly = TOP + 14 + 18 * i
        lx = LEFT + pw + 12
        out.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 20}" y2="{ly - 4}" stroke="{colour}" '
                   f'stroke-width="2"/>')
        out.append(f'<text x="{lx + 26}" y="{ly}">{escape(s.name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_plot(spec: PlotSpec) -> Path:
    text = render_svg(spec)
    path = Path(spec.path)
    try:
        path.write_bytes(text.encode("utf-8"))
    except OSError as exc:
        raise StorageError(f"cannot write {path}: {exc}") from exc
    return path


def emit_csv(path, header, rows) -> Path:
    """Header plus rows, minimal RFC 4180 quoting, LF line endings."""
    header = list(header)
    rows = [list(r) for r in rows]
    for i, r in enumerate(rows):
        if len(r) != len(header):
            raise InvalidArgument(f"row {i} has {len(r)} fields, header has {len(header)}")
    path = Path(path)
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
    except csv.Error as exc:
        raise InvalidArgument(f"cannot encode a field of {path}: {exc}") from exc
    except OSError as exc:
        raise StorageError(f"cannot write {path}: {exc}") from exc
    return path
