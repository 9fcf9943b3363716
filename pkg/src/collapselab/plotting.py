"""Charts for sweep grids.

``render_svg`` is dependency-free and byte-deterministic: line charts for
one-axis grids, heatmaps for two-axis grids. ``render_png`` draws the same
chart with matplotlib for a quick look.
"""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

from .errors import EmptyGrid
from .experiments.grid import SweepGrid

WIDTH, HEIGHT = 640, 420
LEFT, RIGHT, TOP, BOTTOM = 70, 150, 30, 50
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf")
# viridis anchor colors, interpolated linearly
VIRIDIS = ((68, 1, 84), (59, 82, 139), (33, 145, 140), (94, 201, 98), (253, 231, 37))


def _num(x: float) -> str:
    return f"{x:.2f}".rstrip("0").rstrip(".")


def _tick(v: float) -> str:
    if v == 0:
        return "0"
    if abs(v) >= 1e4 or abs(v) < 1e-3:
        return f"{v:.1e}"
    return f"{v:.4g}"


def _scale(lo, hi, log):
    if log:
        lo, hi = math.log10(lo), math.log10(hi)
    if hi == lo:
        hi = lo + 1.0
    return lo, hi


def _check(grid: SweepGrid):
    if grid is None or not grid.axes or not grid.cells:
        raise EmptyGrid("nothing to plot: the grid has no cells")


def _color(t: float) -> str:
    t = min(1.0, max(0.0, t)) * (len(VIRIDIS) - 1)
    i = min(int(t), len(VIRIDIS) - 2)
    f = t - i
    rgb = [round(VIRIDIS[i][k] + f * (VIRIDIS[i + 1][k] - VIRIDIS[i][k])) for k in range(3)]
    return "#%02x%02x%02x" % tuple(rgb)


def render_svg(grid: SweepGrid, kind: str | None = None, *, keys=None, key: str | None = None,
               log_x: bool = False, log_y: bool = False, title: str | None = None) -> str:
    """Self-contained SVG text for ``grid``.

    ``lines`` plots one polyline per numeric column (or ``keys``) over the
    first axis; ``heatmap`` colors a two-axis grid by ``key`` with a
    colorbar. Non-positive values are dropped on log axes.
    """
    _check(grid)
    kind = kind or ("heatmap" if len(grid.axes) == 2 else "lines")
    if kind == "lines":
        body = _lines(grid, keys, log_x, log_y)
    elif kind == "heatmap":
        if len(grid.axes) != 2:
            raise ValueError("heatmap needs a two-axis grid")
        body = _heatmap(grid, key, log_x, log_y)
    else:
        raise ValueError(f"unknown chart kind {kind!r}")
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">\n'
            f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>\n')
    t = escape(title or grid.name)
    head += f'<text x="{WIDTH // 2}" y="18" text-anchor="middle" font-size="13">{t}</text>\n'
    return head + body + "</svg>\n"


def _frame(xlabel, ylabel, xr, yr, log_x, log_y):
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM
    out = [f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for k in range(5):
        f = k / 4
        xv = xr[0] + f * (xr[1] - xr[0])
        yv = yr[0] + f * (yr[1] - yr[0])
        x = LEFT + f * pw
        y = TOP + ph - f * ph
        xt = 10**xv if log_x else xv
        yt = 10**yv if log_y else yv
        out.append(f'<line x1="{_num(x)}" y1="{TOP + ph}" x2="{_num(x)}" y2="{TOP + ph + 4}" stroke="black"/>')
        out.append(f'<text x="{_num(x)}" y="{TOP + ph + 16}" text-anchor="middle">{_tick(xt)}</text>')
        out.append(f'<line x1="{LEFT - 4}" y1="{_num(y)}" x2="{LEFT}" y2="{_num(y)}" stroke="black"/>')
        out.append(f'<text x="{LEFT - 6}" y="{_num(y + 4)}" text-anchor="end">{_tick(yt)}</text>')
    xl = escape(xlabel + (" (log)" if log_x else ""))
    yl = escape(ylabel + (" (log)" if log_y else ""))
    out.append(f'<text x="{LEFT + pw // 2}" y="{HEIGHT - 12}" text-anchor="middle">{xl}</text>')
    out.append(f'<text x="16" y="{TOP + ph // 2}" text-anchor="middle" '
               f'transform="rotate(-90 16 {TOP + ph // 2})">{yl}</text>')
    return out, pw, ph


def _lines(grid, keys, log_x, log_y):
    xs = grid.axes[0].values
    keys = list(keys) if keys else grid.numeric_columns()
    if not keys:
        raise EmptyGrid("no numeric columns to plot")
    if len(grid.axes) > 1:
        # extra axes: plot the slice at their first value
        cols = {k: grid.column(k)[(slice(None),) + (0,) * (len(grid.axes) - 1)] for k in keys}
    else:
        cols = {k: grid.column(k) for k in keys}
    xok = xs > 0 if log_x else np.ones_like(xs, dtype=bool)
    ys = np.concatenate([v[xok] for v in cols.values()])
    ys = ys[np.isfinite(ys)]
    if log_y:
        ys = ys[ys > 0]
    if ys.size == 0 or not xok.any():
        raise EmptyGrid("no finite values to plot")
    xr = _scale(float(xs[xok].min()), float(xs[xok].max()), log_x)
    yr = _scale(float(ys.min()), float(ys.max()), log_y)
    out, pw, ph = _frame(grid.axes[0].name, ", ".join(keys) if len(keys) == 1 else "value", xr, yr, log_x, log_y)
    for n, k in enumerate(keys):
        pts = []
        for x, y in zip(xs, cols[k]):
            if not np.isfinite(y) or (log_x and x <= 0) or (log_y and y <= 0):
                continue
            fx = ((math.log10(x) if log_x else x) - xr[0]) / (xr[1] - xr[0])
            fy = ((math.log10(y) if log_y else y) - yr[0]) / (yr[1] - yr[0])
            pts.append(f"{_num(LEFT + fx * pw)},{_num(TOP + ph - fy * ph)}")
        color = PALETTE[n % len(PALETTE)]
        if pts:
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{" ".join(pts)}"/>')
        ly = TOP + 14 * n + 8
        out.append(f'<line x1="{WIDTH - RIGHT + 10}" y1="{ly}" x2="{WIDTH - RIGHT + 28}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{WIDTH - RIGHT + 32}" y="{ly + 4}">{escape(k)}</text>')
    return "\n".join(out) + "\n"


def _heatmap(grid, key, log_x, log_y):
    keys = grid.numeric_columns()
    key = key or (keys[0] if keys else None)
    if key is None:
        raise EmptyGrid("no numeric column for the heatmap")
    z = grid.column(key)
    xs, ys = grid.axes[0].values, grid.axes[1].values
    fin = z[np.isfinite(z)]
    if fin.size == 0:
        raise EmptyGrid("no finite values to plot")
    lo, hi = float(fin.min()), float(fin.max())
    span = hi - lo if hi > lo else 1.0

    def edges(v, log):
        v = np.log10(v) if log else v.astype(float)
        if v.size == 1:
            return np.array([v[0] - 0.5, v[0] + 0.5])
        mid = (v[1:] + v[:-1]) / 2
        return np.concatenate([[2 * v[0] - mid[0]], mid, [2 * v[-1] - mid[-1]]])

    if (log_x and np.any(xs <= 0)) or (log_y and np.any(ys <= 0)):
        raise ValueError("log axes need positive axis values")
    ex, ey = edges(xs, log_x), edges(ys, log_y)
    xr, yr = (float(ex.min()), float(ex.max())), (float(ey.min()), float(ey.max()))
    out, pw, ph = _frame(grid.axes[0].name, grid.axes[1].name, xr, yr, log_x, log_y)
    for i in range(xs.size):
        x0 = LEFT + (min(ex[i], ex[i + 1]) - xr[0]) / (xr[1] - xr[0]) * pw
        x1 = LEFT + (max(ex[i], ex[i + 1]) - xr[0]) / (xr[1] - xr[0]) * pw
        for j in range(ys.size):
            y0 = TOP + ph - (max(ey[j], ey[j + 1]) - yr[0]) / (yr[1] - yr[0]) * ph
            y1 = TOP + ph - (min(ey[j], ey[j + 1]) - yr[0]) / (yr[1] - yr[0]) * ph
            v = z[i, j]
            fill = _color((v - lo) / span) if np.isfinite(v) else "#cccccc"
            out.append(f'<rect x="{_num(x0)}" y="{_num(y0)}" width="{_num(x1 - x0)}" '
                       f'height="{_num(y1 - y0)}" fill="{fill}"/>')
    # colorbar
    bx, bw = WIDTH - RIGHT + 20, 16
    steps = 32
    for s in range(steps):
        y0 = TOP + ph - (s + 1) * ph / steps
        out.append(f'<rect x="{bx}" y="{_num(y0)}" width="{bw}" height="{_num(ph / steps + 0.5)}" '
                   f'fill="{_color((s + 0.5) / steps)}"/>')
    out.append(f'<rect x="{bx}" y="{TOP}" width="{bw}" height="{ph}" fill="none" stroke="black"/>')
    out.append(f'<text x="{bx + bw + 4}" y="{TOP + 8}">{_tick(hi)}</text>')
    out.append(f'<text x="{bx + bw + 4}" y="{TOP + ph}">{_tick(lo)}</text>')
    out.append(f'<text x="{bx}" y="{TOP + ph + 16}">{escape(key)}</text>')
    return "\n".join(out) + "\n"


def render_png(grid: SweepGrid, path, kind: str | None = None, *, keys=None, key: str | None = None,
               log_x: bool = False, log_y: bool = False, title: str | None = None) -> None:
    """Write the same chart as a PNG through matplotlib's Agg backend."""
    _check(grid)
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    kind = kind or ("heatmap" if len(grid.axes) == 2 else "lines")
    fig, ax = plt.subplots(figsize=(6.4, 4.2), dpi=100)
    try:
        if kind == "heatmap":
            keys_ = grid.numeric_columns()
            key = key or keys_[0]
            z = grid.column(key)
            mesh = ax.pcolormesh(grid.axes[0].values, grid.axes[1].values, z.T, shading="nearest",
                                 cmap="viridis")
            fig.colorbar(mesh, ax=ax, label=key)
            ax.set_xlabel(grid.axes[0].name)
            ax.set_ylabel(grid.axes[1].name)
        else:
            xs = grid.axes[0].values
            for k in keys or grid.numeric_columns():
                col = grid.column(k)
                if col.ndim > 1:
                    col = col[(slice(None),) + (0,) * (col.ndim - 1)]
                ax.plot(xs, col, label=k)
            ax.set_xlabel(grid.axes[0].name)
            ax.legend(fontsize=7)
        if log_x:
            ax.set_xscale("log")
        if log_y:
            ax.set_yscale("log")
        ax.set_title(title or grid.name)
        fig.tight_layout()
        fig.savefig(path, metadata={"Software": None})
    finally:
        plt.close(fig)
