"""Minimal self-contained SVG line charts (no plotting dependency)."""

from __future__ import annotations

from xml.sax.saxutils import escape

WIDTH, HEIGHT = 480, 320
MARGIN = {"left": 56, "right": 120, "top": 32, "bottom": 44}
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")


def _num(v: float) -> str:
    return f"{v:.2f}"


def line_chart(series: dict[str, list[tuple[float, float | None]]], *, title: str,
               x_label: str, y_label: str, y_range: tuple[float, float] = (0.0, 1.0)) -> str:
    """Render named ``(x, y)`` series as polylines. ``None`` values break a line."""
    xs = [x for pts in series.values() for x, _ in pts]
    x0, x1 = (min(xs), max(xs)) if xs else (0.0, 1.0)
    if x1 == x0:
        x1 = x0 + 1.0
    y0, y1 = y_range
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def px(x):
        return MARGIN["left"] + (x - x0) / (x1 - x0) * pw

    def py(y):
        return MARGIN["top"] + (1.0 - (y - y0) / (y1 - y0)) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>',
    ]
    # axes
    bx, by = MARGIN["left"], MARGIN["top"] + ph
    out.append(f'<line x1="{bx}" y1="{by}" x2="{bx + pw}" y2="{by}" stroke="black"/>')
    out.append(f'<line x1="{bx}" y1="{MARGIN["top"]}" x2="{bx}" y2="{by}" stroke="black"/>')
    for i in range(5):
        xv = x0 + (x1 - x0) * i / 4
        yv = y0 + (y1 - y0) * i / 4
        out.append(f'<line x1="{_num(px(xv))}" y1="{by}" x2="{_num(px(xv))}" y2="{by + 4}" stroke="black"/>')
        out.append(f'<text x="{_num(px(xv))}" y="{by + 16}" text-anchor="middle">{xv:g}</text>')
        out.append(f'<line x1="{bx - 4}" y1="{_num(py(yv))}" x2="{bx}" y2="{_num(py(yv))}" stroke="black"/>')
        out.append(f'<text x="{bx - 7}" y="{_num(py(yv) + 4)}" text-anchor="end">{yv:g}</text>')
    out.append(f'<text x="{bx + pw / 2}" y="{HEIGHT - 8}" text-anchor="middle">{escape(x_label)}</text>')
    out.append(f'<text x="14" y="{MARGIN["top"] + ph / 2}" text-anchor="middle" '
               f'transform="rotate(-90 14 {MARGIN["top"] + ph / 2})">{escape(y_label)}</text>')

    for k, (name, pts) in enumerate(series.items()):
        color = PALETTE[k % len(PALETTE)]
        segment: list[str] = []
        segments = [segment]
        for x, y in pts:
            if y is None:
                segment = []
                segments.append(segment)
                continue
            segment.append(f"{_num(px(x))},{_num(py(y))}")
        for seg in segments:
            if seg:
                out.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{" ".join(seg)}"/>')
            for p in seg:
                cx, cy = p.split(",")
                out.append(f'<circle cx="{cx}" cy="{cy}" r="3" fill="{color}"/>')
        ly = MARGIN["top"] + 10 + 18 * k
        lx = bx + pw + 12
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 18}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 24}" y="{ly + 4}">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
