"""Self-contained SVG event-study figures."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

WIDTH, HEIGHT = 640, 400
MARGIN = {"left": 64, "right": 20, "top": 36, "bottom": 48}


def _ticks(lo, hi, n=5):
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=raw)
    start = math.floor(lo / step) * step
    out, v = [], start
    while v <= hi + 1e-9 * step:
        out.append(round(v, 10))
        v += step
    return out


def event_study_svg(points, *, title="", ylabel="estimate", zero_at=-1) -> str:
    """Scatter of estimates with CI whiskers against event time.

    Parameters
    ----------
    points : list of dict
        Each with keys ``x``, ``estimate`` and optionally ``ci_lower``,
        ``ci_upper`` and ``kind``. Placebos sit left of zero.
    zero_at : int or None
        Event time drawn as a fixed zero reference point.
    """
    pts = [p for p in points if p.get("estimate") is not None
           and math.isfinite(p["estimate"]) and math.isfinite(p.get("x", math.nan))]
    if zero_at is not None:
        pts = pts + [{"x": zero_at, "estimate": 0.0, "kind": "reference"}]
    if not pts:
        raise ValueError("nothing to plot")
    ys = [p["estimate"] for p in pts]
    for p in pts:
        for k in ("ci_lower", "ci_upper"):
            v = p.get(k)
            if v is not None and math.isfinite(v):
                ys.append(v)
    xs = [p["x"] for p in pts]
    x0, x1 = min(xs) - 0.5, max(xs) + 0.5
    yt = _ticks(min(ys + [0.0]), max(ys + [0.0]))
    y0, y1 = yt[0], yt[-1]
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def sx(x):
        return MARGIN["left"] + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return MARGIN["top"] + (y1 - y) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
           f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>']
    if title:
        out.append(f'<text x="{WIDTH / 2:.2f}" y="20" text-anchor="middle" '
                   f'font-size="14">{escape(title)}</text>')
    for v in yt:
        y = sy(v)
        out.append(f'<line x1="{MARGIN["left"]}" x2="{WIDTH - MARGIN["right"]}" '
                   f'y1="{y:.2f}" y2="{y:.2f}" stroke="#e0e0e0"/>')
        out.append(f'<text x="{MARGIN["left"] - 6}" y="{y + 4:.2f}" text-anchor="end">{v:g}</text>')
    out.append(f'<line x1="{MARGIN["left"]}" x2="{WIDTH - MARGIN["right"]}" y1="{sy(0):.2f}" '
               f'y2="{sy(0):.2f}" stroke="#555" stroke-dasharray="4 3"/>')
    for x in range(math.ceil(x0), math.floor(x1) + 1):
        px = sx(x)
        out.append(f'<text x="{px:.2f}" y="{HEIGHT - MARGIN["bottom"] + 18}" '
                   f'text-anchor="middle">{x}</text>')
    out.append(f'<text x="{MARGIN["left"] + pw / 2:.2f}" y="{HEIGHT - 8}" '
               f'text-anchor="middle">periods relative to first switch</text>')
    out.append(f'<text x="14" y="{MARGIN["top"] + ph / 2:.2f}" text-anchor="middle" '
               f'transform="rotate(-90 14 {MARGIN["top"] + ph / 2:.2f})">{escape(ylabel)}</text>')
    colors = {"placebo": "#c0392b", "reference": "#555555"}
    for p in sorted(pts, key=lambda p: p["x"]):
        px, py = sx(p["x"]), sy(p["estimate"])
        color = colors.get(p.get("kind"), "#1f4e9c")
        lo, hi = p.get("ci_lower"), p.get("ci_upper")
        if lo is not None and hi is not None and math.isfinite(lo) and math.isfinite(hi):
            out.append(f'<line x1="{px:.2f}" x2="{px:.2f}" y1="{sy(lo):.2f}" y2="{sy(hi):.2f}" '
                       f'stroke="{color}" stroke-width="1.5"/>')
            for yy in (sy(lo), sy(hi)):
                out.append(f'<line x1="{px - 5:.2f}" x2="{px + 5:.2f}" y1="{yy:.2f}" '
                           f'y2="{yy:.2f}" stroke="{color}" stroke-width="1.5"/>')
        out.append(f'<circle cx="{px:.2f}" cy="{py:.2f}" r="4" fill="{color}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
