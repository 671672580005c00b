"""Self-contained SVG plots with byte-deterministic output.

No plotting dependency: reports only need line/scatter panels and a
graph drawing. All coordinates go through one fixed-precision formatter
and nothing time- or locale-dependent is written, so identical input
gives identical bytes.
"""

import math

import numpy as np

WIDTH, HEIGHT = 720, 480
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 76, 24, 44, 58
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _fmt(v: float) -> str:
    out = f"{float(v):.8g}"
    return "0" if out == "-0" else out


def _esc(text: str) -> str:
    return (str(text).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;"))


def _nice_step(span: float, target: int = 6) -> float:
    raw = span / target
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 5.0):
        if raw <= mult * mag:
            return mult * mag
    return 10.0 * mag


def _linear_ticks(lo: float, hi: float):
    if hi <= lo:
        pad = max(abs(lo), 1.0) * 0.5
        lo, hi = lo - pad, hi + pad
    step = _nice_step(hi - lo)
    first = math.ceil(lo / step) * step
    ticks = []
    v = first
    while v <= hi + step * 1e-9:
        ticks.append(0.0 if abs(v) < step * 1e-9 else v)
        v += step
    return lo, hi, ticks


def _log_ticks(lo: float, hi: float):
    # candidate ticks at {1,2,5} x 10^k, thinned to decades when crowded
    llo, lhi = math.log10(lo), math.log10(hi)
    if lhi - llo < 1e-9:
        llo, lhi = llo - 0.5, lhi + 0.5
    ticks = []
    for k in range(math.floor(llo) - 1, math.ceil(lhi) + 2):
        for mult in (1.0, 2.0, 5.0):
            v = mult * 10.0**k
            if lo <= v <= hi:
                ticks.append(v)
    if len(ticks) > 10:
        ticks = [v for v in ticks if abs(math.log10(v) - round(math.log10(v))) < 1e-9]
    return llo, lhi, ticks


def _check_series(series):
    if not series:
        raise ValueError("need at least one series")
    cleaned = []
    for i, s in enumerate(series):
        x = np.asarray(s["x"], dtype=float).reshape(-1)
        y = np.asarray(s["y"], dtype=float).reshape(-1)
        if len(x) == 0 or len(x) != len(y):
            raise ValueError(f"series {i}: need matching nonempty x and y")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError(f"series {i}: non-finite values are never plotted silently")
        cleaned.append({
            "x": x,
            "y": y,
            "label": s.get("label", ""),
            "kind": s.get("kind", "line"),
            "dash": s.get("dash"),
        })
        if cleaned[-1]["kind"] not in ("line", "scatter", "both"):
            raise ValueError(f"series {i}: unknown kind {cleaned[-1]['kind']!r}")
    return cleaned


def emit_svg(series, path, title: str = "", xlabel: str = "", ylabel: str = "",
             logy: bool = False):
    """Write a line/scatter plot; `series` is a list of dicts with keys
    x, y, label, kind ('line' | 'scatter' | 'both'), dash."""
    series = _check_series(series)
    xs = np.concatenate([s["x"] for s in series])
    ys = np.concatenate([s["y"] for s in series])
    if logy and np.min(ys) <= 0:
        raise ValueError("log scale needs positive values")

    xlo, xhi, xticks = _linear_ticks(float(np.min(xs)), float(np.max(xs)))
    if logy:
        ylo, yhi, yticks = _log_ticks(float(np.min(ys)), float(np.max(ys)))
    else:
        ylo, yhi, yticks = _linear_ticks(float(np.min(ys)), float(np.max(ys)))

    x0, x1 = MARGIN_L, WIDTH - MARGIN_R
    y0, y1 = HEIGHT - MARGIN_B, MARGIN_T

    def px(v):
        if xhi == xlo:
            return (x0 + x1) / 2
        return x0 + (v - xlo) / (xhi - xlo) * (x1 - x0)

    def py(v):
        t = math.log10(v) if logy else v
        lo, hi = (ylo, yhi)
        if hi == lo:
            return (y0 + y1) / 2
        return y0 + (t - lo) / (hi - lo) * (y1 - y0)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]
    if title:
        out.append(
            f'<text x="{WIDTH // 2}" y="24" text-anchor="middle" '
            f'font-family="sans-serif" font-size="15">{_esc(title)}</text>')

    for v in xticks:
        p = _fmt(px(v))
        out.append(f'<line x1="{p}" y1="{y0}" x2="{p}" y2="{y1}" stroke="#dddddd"/>')
        out.append(
            f'<text x="{p}" y="{y0 + 18}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{_fmt(v)}</text>')
    for v in yticks:
        p = _fmt(py(v))
        out.append(f'<line x1="{x0}" y1="{p}" x2="{x1}" y2="{p}" stroke="#dddddd"/>')
        out.append(
            f'<text x="{x0 - 6}" y="{p}" text-anchor="end" dominant-baseline="middle" '
            f'font-family="sans-serif" font-size="11">{_fmt(v)}</text>')
    out.append(
        f'<rect x="{x0}" y="{y1}" width="{x1 - x0}" height="{y0 - y1}" '
        f'fill="none" stroke="black"/>')
    if xlabel:
        out.append(
            f'<text x="{(x0 + x1) // 2}" y="{HEIGHT - 14}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="13">{_esc(xlabel)}</text>')
    if ylabel:
        out.append(
            f'<text x="20" y="{(y0 + y1) // 2}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="13" '
            f'transform="rotate(-90 20 {(y0 + y1) // 2})">{_esc(ylabel)}</text>')

    for i, s in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        pts = [(px(a), py(b)) for a, b in zip(s["x"], s["y"])]
        if s["kind"] in ("line", "both"):
            d = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in pts)
            dash = f' stroke-dasharray="{s["dash"]}"' if s["dash"] else ""
            out.append(
                f'<polyline points="{d}" fill="none" stroke="{color}" '
                f'stroke-width="1.8"{dash}/>')
        if s["kind"] in ("scatter", "both"):
            for a, b in pts:
                out.append(
                    f'<circle cx="{_fmt(a)}" cy="{_fmt(b)}" r="3" fill="{color}"/>')

    labeled = [(i, s) for i, s in enumerate(series) if s["label"]]
    if labeled:
        lx, ly = x1 - 190, y1 + 10
        out.append(
            f'<rect x="{lx - 8}" y="{ly - 4}" width="190" '
            f'height="{16 * len(labeled) + 8}" fill="white" fill-opacity="0.85" '
            f'stroke="#999999"/>')
        for row, (i, s) in enumerate(labeled):
            color = PALETTE[i % len(PALETTE)]
            yy = ly + 12 + 16 * row
            out.append(
                f'<line x1="{lx}" y1="{yy - 4}" x2="{lx + 22}" y2="{yy - 4}" '
                f'stroke="{color}" stroke-width="2"/>')
            out.append(
                f'<text x="{lx + 28}" y="{yy}" font-family="sans-serif" '
                f'font-size="11">{_esc(s["label"])}</text>')

    out.append("</svg>")
    with open(path, "w", encoding="utf8") as fh:
        fh.write("\n".join(out) + "\n")


def emit_graph_svg(graph, path, size: int = 640):
    """Draw a fractal graph: edges as segments, vertices as dots,
    boundary vertices highlighted."""
    coords = graph.coords
    if coords.shape[1] == 1:
        coords = np.column_stack([coords[:, 0], np.zeros(len(coords))])
    lo = coords.min(axis=0)
    hi = coords.max(axis=0)
    span = float(max(np.max(hi - lo), 1e-12))
    pad = 24

    def pt(p):
        x = pad + (p[0] - lo[0]) / span * (size - 2 * pad)
        y = size - pad - (p[1] - lo[1]) / span * (size - 2 * pad)
        return _fmt(x), _fmt(y)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<rect width="{size}" height="{size}" fill="white"/>',
    ]
    for u, v in graph.edges:
        (xa, ya), (xb, yb) = pt(coords[u]), pt(coords[v])
        out.append(
            f'<line x1="{xa}" y1="{ya}" x2="{xb}" y2="{yb}" '
            f'stroke="#1f77b4" stroke-width="1"/>')
    boundary = set(int(b) for b in graph.boundary)
    for i, p in enumerate(coords):
        x, y = pt(p)
        if i in boundary:
            out.append(f'<circle cx="{x}" cy="{y}" r="4" fill="#d62728"/>')
        else:
            out.append(f'<circle cx="{x}" cy="{y}" r="1.6" fill="#333333"/>')
    out.append("</svg>")
    with open(path, "w", encoding="utf8") as fh:
        fh.write("\n".join(out) + "\n")
