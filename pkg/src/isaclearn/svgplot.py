"""Minimal static SVG line plots.

Hand-emitted markup with fixed-precision coordinates, so a given input
always produces the same bytes. Covers exactly what the result sweeps need:
multiple labeled series, axis ticks, an optional dashed horizontal
reference line, and a legend.
"""

import math

from .errors import InvalidArgumentError

_COLORS = ("#1f6fb2", "#d95f02", "#2ca05a", "#7b5fa6", "#c23a5f", "#6d6d2a")

_W, _H = 640, 420
_ML, _MR, _MT, _MB = 72, 24, 34, 56    # margins around the plot box


def _ticks(lo: float, hi: float, n: int = 6) -> list:
    """Round tick positions covering [lo, hi], at a 1/2/5 decade step."""
    if hi <= lo:
        hi = lo + 1.0
    span = hi - lo
    raw = span / max(n - 1, 1)
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 5.0, 10.0):
        step = mag * mult
        if span / step <= n:
            break
    first = step * math.ceil(lo / step)
    out = []
    t = first
    while t <= hi + 1e-9 * span:
        out.append(0.0 if abs(t) < 1e-12 * span else t)
        t += step
    return out


def _fmt(v: float) -> str:
    s = f"{v:.6g}"
    return "0" if s == "-0" else s


def line_plot(series, *, title: str, xlabel: str, ylabel: str,
              target: float = None, target_label: str = "") -> str:
    """Render labeled (x, y) series to an SVG document string.

    series: iterable of (label, xs, ys) with equal-length sequences.
    target: optional dashed horizontal reference line.
    """
    series = [(str(lab), [float(x) for x in xs], [float(y) for y in ys])
              for lab, xs, ys in series]
    if not series or any(len(xs) == 0 or len(xs) != len(ys) for _, xs, ys in series):
        raise InvalidArgumentError("series must be nonempty with matching lengths")

    all_x = [x for _, xs, _ in series for x in xs]
    all_y = [y for _, _, ys in series for y in ys]
    if target is not None:
        all_y.append(float(target))
    x0, x1 = min(all_x), max(all_x)
    y0, y1 = min(all_y), max(all_y)
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    pad = 0.06 * (y1 - y0) if y1 > y0 else max(abs(y0), 1.0) * 0.1
    y0, y1 = y0 - pad, y1 + pad

    bw = _W - _ML - _MR
    bh = _H - _MT - _MB

    def px(x):
        return _ML + bw * (x - x0) / (x1 - x0)

    def py(y):
        return _MT + bh * (y1 - y) / (y1 - y0)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="#ffffff"/>',
        f'<rect x="{_ML}" y="{_MT}" width="{bw}" height="{bh}" fill="none" '
        f'stroke="#444444" stroke-width="1"/>',
        f'<text x="{_W / 2:.1f}" y="20" text-anchor="middle" '
        f'font-family="sans-serif" font-size="14">{title}</text>',
    ]

    for t in _ticks(x0, x1):
        if t < x0 - 1e-12 or t > x1 + 1e-12:
            continue
        x = px(t)
        parts.append(f'<line x1="{x:.2f}" y1="{_MT + bh}" x2="{x:.2f}" '
                     f'y2="{_MT + bh + 5}" stroke="#444444"/>')
        parts.append(f'<line x1="{x:.2f}" y1="{_MT}" x2="{x:.2f}" y2="{_MT + bh}" '
                     f'stroke="#dddddd" stroke-width="0.5"/>')
        parts.append(f'<text x="{x:.2f}" y="{_MT + bh + 18}" text-anchor="middle" '
                     f'font-family="sans-serif" font-size="11">{_fmt(t)}</text>')
    for t in _ticks(y0, y1):
        y = py(t)
        parts.append(f'<line x1="{_ML - 5}" y1="{y:.2f}" x2="{_ML}" y2="{y:.2f}" '
                     f'stroke="#444444"/>')
        parts.append(f'<line x1="{_ML}" y1="{y:.2f}" x2="{_ML + bw}" y2="{y:.2f}" '
                     f'stroke="#dddddd" stroke-width="0.5"/>')
        parts.append(f'<text x="{_ML - 8}" y="{y + 4:.2f}" text-anchor="end" '
                     f'font-family="sans-serif" font-size="11">{_fmt(t)}</text>')

    parts.append(f'<text x="{_ML + bw / 2:.1f}" y="{_H - 14}" text-anchor="middle" '
                 f'font-family="sans-serif" font-size="12">{xlabel}</text>')
    parts.append(f'<text x="18" y="{_MT + bh / 2:.1f}" text-anchor="middle" '
                 f'font-family="sans-serif" font-size="12" '
                 f'transform="rotate(-90 18 {_MT + bh / 2:.1f})">{ylabel}</text>')

    if target is not None:
        y = py(float(target))
        parts.append(f'<line x1="{_ML}" y1="{y:.2f}" x2="{_ML + bw}" y2="{y:.2f}" '
                     f'stroke="#555555" stroke-width="1.2" stroke-dasharray="7 4"/>')
        if target_label:
            parts.append(f'<text x="{_ML + bw - 4}" y="{y - 5:.2f}" text-anchor="end" '
                         f'font-family="sans-serif" font-size="11" '
                         f'fill="#555555">{target_label}</text>')

    for i, (label, xs, ys) in enumerate(series):
        color = _COLORS[i % len(_COLORS)]
        pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(xs, ys))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                     f'stroke-width="1.8"/>')
        for x, y in zip(xs, ys):
            parts.append(f'<circle cx="{px(x):.2f}" cy="{py(y):.2f}" r="3" '
                         f'fill="{color}"/>')

    lx, ly = _ML + 12, _MT + 10
    box_h = 18 * len(series) + 8
    box_w = 14 + 9 * max(len(lab) for lab, _, _ in series) + 26
    parts.append(f'<rect x="{lx - 6}" y="{ly - 4}" width="{box_w}" height="{box_h}" '
                 f'fill="#ffffff" fill-opacity="0.85" stroke="#bbbbbb"/>')
    for i, (label, _, _) in enumerate(series):
        color = _COLORS[i % len(_COLORS)]
        yy = ly + 18 * i + 8
        parts.append(f'<line x1="{lx}" y1="{yy - 4:.1f}" x2="{lx + 22}" '
                     f'y2="{yy - 4:.1f}" stroke="{color}" stroke-width="1.8"/>')
        parts.append(f'<text x="{lx + 28}" y="{yy}" font-family="sans-serif" '
                     f'font-size="11">{label}</text>')

    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def save_plot(path, svg_text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(svg_text)
