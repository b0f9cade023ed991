"""Minimal dependency-free SVG emitters for line, bar, and grid figures."""

from __future__ import annotations

from pathlib import Path

WIDTH, HEIGHT = 720, 440
MARGIN = 56
PALETTE = ("#1f6fb2", "#d1495b", "#3a7d44", "#8e6c8a", "#c77d2f", "#44808c")


def _scale(values, lo, hi, out_lo, out_hi):
    span = (hi - lo) or 1.0
    return [out_lo + (v - lo) / span * (out_hi - out_lo) for v in values]


def _axes(x_label: str, y_label: str, x_range, y_range) -> list[str]:
    x0, x1 = MARGIN, WIDTH - MARGIN
    y0, y1 = HEIGHT - MARGIN, MARGIN
    parts = [
        f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="#333"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="#333"/>',
        f'<text x="{(x0 + x1) / 2:.0f}" y="{HEIGHT - 12}" text-anchor="middle" '
        f'font-size="13">{x_label}</text>',
        f'<text x="16" y="{(y0 + y1) / 2:.0f}" text-anchor="middle" font-size="13" '
        f'transform="rotate(-90 16 {(y0 + y1) / 2:.0f})">{y_label}</text>',
    ]
    for frac in (0.0, 0.5, 1.0):
        xv = x_range[0] + frac * (x_range[1] - x_range[0])
        yv = y_range[0] + frac * (y_range[1] - y_range[0])
        xpix = x0 + frac * (x1 - x0)
        ypix = y0 - frac * (y0 - y1)
        parts.append(f'<text x="{xpix:.0f}" y="{y0 + 18}" text-anchor="middle" '
                     f'font-size="11">{xv:g}</text>')
        parts.append(f'<text x="{x0 - 8}" y="{ypix + 4:.0f}" text-anchor="end" '
                     f'font-size="11">{yv:.3g}</text>')
    return parts


def _document(body: list[str]) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" '
            f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">'
            '<rect width="100%" height="100%" fill="white"/>')
    return head + "".join(body) + "</svg>"


def line_chart(path, series: dict[str, tuple[list, list]], x_label: str, y_label: str):
    """series maps a legend name to (xs, ys)."""
    all_x = [x for xs, _ in series.values() for x in xs]
    all_y = [y for _, ys in series.values() for y in ys]
    x_lo, x_hi = min(all_x), max(all_x)
    y_lo, y_hi = min(all_y), max(all_y)
    body = _axes(x_label, y_label, (x_lo, x_hi), (y_lo, y_hi))
    for i, (name, (xs, ys)) in enumerate(series.items()):
        color = PALETTE[i % len(PALETTE)]
        px = _scale(xs, x_lo, x_hi, MARGIN, WIDTH - MARGIN)
        py = _scale(ys, y_lo, y_hi, HEIGHT - MARGIN, MARGIN)
        points = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(px, py))
        body.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.6" '
                    f'points="{points}"/>')
        body.append(f'<text x="{WIDTH - MARGIN + 4}" y="{MARGIN + 16 * i + 10}" '
                    f'font-size="12" fill="{color}">{name}</text>')
    Path(path).write_text(_document(body))


def bar_chart(path, labels: list[str], values: list[float], x_label: str, y_label: str):
    y_lo, y_hi = min(0.0, min(values)), max(values) or 1.0
    body = _axes(x_label, y_label, (0, len(values)), (y_lo, y_hi))
    width = (WIDTH - 2 * MARGIN) / max(1, len(values))
    for i, (label, value) in enumerate(zip(labels, values)):
        x = MARGIN + i * width
        top = _scale([value], y_lo, y_hi, HEIGHT - MARGIN, MARGIN)[0]
        body.append(f'<rect x="{x + 3:.1f}" y="{top:.1f}" width="{width - 6:.1f}" '
                    f'height="{HEIGHT - MARGIN - top:.1f}" fill="{PALETTE[0]}"/>')
        body.append(f'<text x="{x + width / 2:.1f}" y="{HEIGHT - MARGIN + 30}" '
                    f'text-anchor="middle" font-size="10">{label}</text>')
    Path(path).write_text(_document(body))


def grid_chart(path, grids: list[list[list[int]]], titles: list[str]):
    """One shaded cell grid per frame; 1 = kept (dark), 0 = dropped (light)."""
    n = len(grids)
    cols = min(n, 4)
    rows_n = (n + cols - 1) // cols
    cell = 18
    body = []
    for g, (grid, title) in enumerate(zip(grids, titles)):
        gh, gw = len(grid), len(grid[0])
        ox = MARGIN + (g % cols) * (gw * cell + 40)
        oy = MARGIN + (g // cols) * (gh * cell + 52)
        body.append(f'<text x="{ox}" y="{oy - 6}" font-size="11">{title}</text>')
        for i, row in enumerate(grid):
            for j, kept in enumerate(row):
                fill = "#1f6fb2" if kept else "#dde3ea"
                body.append(f'<rect x="{ox + j * cell}" y="{oy + i * cell}" '
                            f'width="{cell - 2}" height="{cell - 2}" fill="{fill}"/>')
    width = MARGIN * 2 + cols * (len(grids[0][0]) * cell + 40)
    height = MARGIN * 2 + rows_n * (len(grids[0]) * cell + 52)
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}"><rect width="100%" height="100%" fill="white"/>')
    Path(path).write_text(head + "".join(body) + "</svg>")
