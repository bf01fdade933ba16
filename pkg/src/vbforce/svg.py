"""Minimal deterministic SVG line charts for the report commands.

Hand-rolled rather than delegated to a plotting library so that
identical inputs produce byte-identical files (no timestamps, no
randomized element ids).
"""

from __future__ import annotations

from pathlib import Path

PALETTE = ["#c62828", "#1565c0", "#2e7d32", "#ef6c00", "#6a1b9a", "#00838f"]


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    step = (hi - lo) / (n - 1)
    return [lo + i * step for i in range(n)]


def line_chart(path: Path, series: dict[str, list[tuple[float, float]]],
               title: str, x_label: str, y_label: str,
               width: int = 640, height: int = 400) -> None:
    """Write one chart; ``series`` maps legend label -> [(x, y), ...]."""
    pts = [p for data in series.values() for p in data]
    if not pts:
        raise ValueError("line_chart: no data")
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(ys), max(ys)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    pad_l, pad_r, pad_t, pad_b = 62, 16, 34, 44
    plot_w = width - pad_l - pad_r
    plot_h = height - pad_t - pad_b

    def sx(x):
        return pad_l + (x - x_lo) / (x_hi - x_lo) * plot_w

    def sy(y):
        return pad_t + (1.0 - (y - y_lo) / (y_hi - y_lo)) * plot_h

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" '
           f'font-family="sans-serif" font-size="14">{title}</text>']
    for xv in _ticks(x_lo, x_hi):
        px = sx(xv)
        out.append(f'<line x1="{px:.1f}" y1="{pad_t}" x2="{px:.1f}" '
                   f'y2="{pad_t + plot_h}" stroke="#dddddd"/>')
        out.append(f'<text x="{px:.1f}" y="{pad_t + plot_h + 16}" text-anchor="middle" '
                   f'font-family="sans-serif" font-size="10">{xv:.3g}</text>')
    for yv in _ticks(y_lo, y_hi):
        py = sy(yv)
        out.append(f'<line x1="{pad_l}" y1="{py:.1f}" x2="{pad_l + plot_w}" '
                   f'y2="{py:.1f}" stroke="#dddddd"/>')
        out.append(f'<text x="{pad_l - 6}" y="{py + 3:.1f}" text-anchor="end" '
                   f'font-family="sans-serif" font-size="10">{yv:.3g}</text>')
    out.append(f'<rect x="{pad_l}" y="{pad_t}" width="{plot_w}" height="{plot_h}" '
               f'fill="none" stroke="#555555"/>')
    out.append(f'<text x="{pad_l + plot_w / 2:.1f}" y="{height - 8}" text-anchor="middle" '
               f'font-family="sans-serif" font-size="12">{x_label}</text>')
    out.append(f'<text x="16" y="{pad_t + plot_h / 2:.1f}" text-anchor="middle" '
               f'font-family="sans-serif" font-size="12" '
               f'transform="rotate(-90 16 {pad_t + plot_h / 2:.1f})">{y_label}</text>')
    for k, (label, data) in enumerate(series.items()):
        color = PALETTE[k % len(PALETTE)]
        path_d = " ".join(f"{'M' if i == 0 else 'L'}{sx(x):.2f},{sy(y):.2f}"
                          for i, (x, y) in enumerate(data))
        out.append(f'<path d="{path_d}" fill="none" stroke="{color}" stroke-width="1.6"/>')
        ly = pad_t + 14 + 14 * k
        out.append(f'<line x1="{pad_l + plot_w - 110}" y1="{ly - 4}" '
                   f'x2="{pad_l + plot_w - 92}" y2="{ly - 4}" stroke="{color}" '
                   f'stroke-width="2"/>')
        out.append(f'<text x="{pad_l + plot_w - 88}" y="{ly}" font-family="sans-serif" '
                   f'font-size="10">{label}</text>')
    out.append("</svg>")
    Path(path).write_text("\n".join(out))
