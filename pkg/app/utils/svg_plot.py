import math
from pathlib import Path
from typing import Dict, List, Sequence, Union
from xml.sax.saxutils import escape

import numpy as np

PANEL_WIDTH = 400
PANEL_HEIGHT = 320
MARGIN = 50
COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def _fmt(value: float) -> str:
    return f"{value:.2f}"


def _log_ticks(lo: float, hi: float) -> List[float]:
    start, stop = math.floor(lo), math.ceil(hi)
    step = max(1, (stop - start) // 6)
    return [float(k) for k in range(start, stop + 1, step)]


def _panel(
    times: np.ndarray,
    curves: Dict[str, np.ndarray],
    offset_x: float,
    log_time: bool,
    floor: float,
) -> List[str]:
    """单个面板：纵轴 log10 E，横轴 t 或 log10 t"""
    elements: List[str] = []
    mask = times > 0 if log_time else np.ones_like(times, dtype=bool)
    x_all = np.log10(times[mask]) if log_time else times[mask]
    y_all = [np.log10(np.maximum(values[mask], floor)) for values in curves.values()]
    if x_all.size < 2 or not y_all:
        return elements
    x_lo, x_hi = float(x_all.min()), float(x_all.max())
    y_lo = float(min(y.min() for y in y_all))
    y_hi = float(max(y.max() for y in y_all))
    if y_hi - y_lo < 1e-12:
        y_lo, y_hi = y_lo - 1.0, y_hi + 1.0
    if x_hi - x_lo < 1e-12:
        x_hi = x_lo + 1.0

    def sx(x):
        return offset_x + MARGIN + (x - x_lo) / (x_hi - x_lo) * (PANEL_WIDTH - 2 * MARGIN)

    def sy(y):
        return PANEL_HEIGHT - MARGIN - (y - y_lo) / (y_hi - y_lo) * (PANEL_HEIGHT - 2 * MARGIN)

    left, right = offset_x + MARGIN, offset_x + PANEL_WIDTH - MARGIN
    top, bottom = MARGIN, PANEL_HEIGHT - MARGIN
    elements.append(
        f'<rect x="{_fmt(left)}" y="{_fmt(top)}" width="{_fmt(right - left)}" '
        f'height="{_fmt(bottom - top)}" fill="none" stroke="#333"/>'
    )
    for tick in _log_ticks(y_lo, y_hi):
        if y_lo <= tick <= y_hi:
            elements.append(
                f'<text x="{_fmt(left - 4)}" y="{_fmt(sy(tick) + 4)}" font-size="10" text-anchor="end">1e{int(tick)}</text>'
            )
    label = "log10 t" if log_time else "t"
    elements.append(
        f'<text x="{_fmt(0.5 * (left + right))}" y="{_fmt(bottom + 30)}" font-size="11" text-anchor="middle">{label}</text>'
    )
    elements.append(f'<text x="{_fmt(left)}" y="{_fmt(bottom + 14)}" font-size="10">{x_lo:.3g}</text>')
    elements.append(f'<text x="{_fmt(right)}" y="{_fmt(bottom + 14)}" font-size="10" text-anchor="end">{x_hi:.3g}</text>')

    for index, (name, y) in enumerate(zip(curves, y_all)):
        points = " ".join(f"{_fmt(sx(a))},{_fmt(sy(b))}" for a, b in zip(x_all, y))
        color = COLORS[index % len(COLORS)]
        elements.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{points}"/>')
        elements.append(
            f'<text x="{_fmt(right - 4)}" y="{_fmt(top + 14 + 12 * index)}" font-size="10" '
            f'text-anchor="end" fill="{color}">{escape(name)}</text>'
        )
    return elements


def write_decay_plot(
    path: Union[str, Path],
    times: Sequence[float],
    curves: Dict[str, Sequence[float]],
    title: str = "",
    floor: float = 1e-30,
) -> Path:
    """对数-线性与双对数两个面板的能量衰减图"""
    times = np.asarray(times, dtype=float)
    arrays = {name: np.asarray(values, dtype=float) for name, values in curves.items()}
    body = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{2 * PANEL_WIDTH}" height="{PANEL_HEIGHT}" '
        f'viewBox="0 0 {2 * PANEL_WIDTH} {PANEL_HEIGHT}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<text x="{PANEL_WIDTH}" y="20" font-size="13" text-anchor="middle">{escape(title)}</text>',
    ]
    body.extend(_panel(times, arrays, 0.0, log_time=False, floor=floor))
    body.extend(_panel(times, arrays, float(PANEL_WIDTH), log_time=True, floor=floor))
    body.append("</svg>")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(body) + "\n", encoding="utf-8")
    return path
