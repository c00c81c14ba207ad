"""Static SVG line plots rendered from run CSVs."""

import os
from xml.sax.saxutils import escape

import numpy as np

from ..errors import InvalidInputError
from .output import column, read_csv

WIDTH, HEIGHT = 640, 420
MARGIN = dict(left=80, right=20, top=40, bottom=60)
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _ticks(lo, hi, count=5):
    return [lo + (hi - lo) * k / (count - 1) for k in range(count)]


def _span(values):
    lo, hi = float(np.min(values)), float(np.max(values))
    if hi - lo <= 1e-12 * max(1.0, abs(lo), abs(hi)):
        pad = 0.5 * max(abs(lo), 1.0)
        return lo - pad, hi + pad
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def line_plot(series, xlabel, ylabel, title, logx=False, logy=False, markers=False) -> str:
    """Render ``series = [(label, x, y), ...]`` as an SVG document string."""
    if not series or any(len(x) == 0 for _, x, _ in series):
        raise InvalidInputError(f"cannot plot {title!r}: no data")
    tx = (lambda v: np.log10(v)) if logx else (lambda v: np.asarray(v, dtype=float))
    ty = (lambda v: np.log10(v)) if logy else (lambda v: np.asarray(v, dtype=float))
    xs = [tx(x) for _, x, _ in series]
    ys = [ty(y) for _, _, y in series]
    xlo, xhi = _span(np.concatenate(xs))
    ylo, yhi = _span(np.concatenate(ys))
    left, top = MARGIN["left"], MARGIN["top"]
    pw = WIDTH - left - MARGIN["right"]
    ph = HEIGHT - top - MARGIN["bottom"]

    def px(v):
        return left + (v - xlo) / (xhi - xlo) * pw

    def py(v):
        return top + (yhi - v) / (yhi - ylo) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
           f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
           f'<text x="{WIDTH / 2:.1f}" y="22" text-anchor="middle" font-size="14">'
           f'{escape(title)}</text>',
           f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for v in _ticks(xlo, xhi):
        label = f"1e{v:.2g}" if logx else f"{v:.4g}"
        out.append(f'<line x1="{px(v):.2f}" y1="{top + ph}" x2="{px(v):.2f}" y2="{top + ph + 5}" '
                   'stroke="black"/>')
        out.append(f'<text x="{px(v):.2f}" y="{top + ph + 18}" text-anchor="middle">{label}</text>')
    for v in _ticks(ylo, yhi):
        label = f"1e{v:.2g}" if logy else f"{v:.6g}"
        out.append(f'<line x1="{left - 5}" y1="{py(v):.2f}" x2="{left}" y2="{py(v):.2f}" '
                   'stroke="black"/>')
        out.append(f'<text x="{left - 8}" y="{py(v) + 4:.2f}" text-anchor="end">{label}</text>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{HEIGHT - 15}" text-anchor="middle">'
               f'{escape(xlabel)}</text>')
    out.append(f'<text x="18" y="{top + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 18 {top + ph / 2:.1f})">{escape(ylabel)}</text>')
    for k, ((label, _, _), x, y) in enumerate(zip(series, xs, ys)):
        color = COLORS[k % len(COLORS)]
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x, y))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        if markers:
            for a, b in zip(x, y):
                out.append(f'<circle cx="{px(a):.2f}" cy="{py(b):.2f}" r="3" fill="{color}"/>')
        ly = top + 16 + 16 * k
        out.append(f'<line x1="{left + pw - 130}" y1="{ly - 4}" x2="{left + pw - 110}" '
                   f'y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw - 105}" y="{ly}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _load(path):
    header, data = read_csv(path)
    if data.shape[0] == 0:
        raise InvalidInputError(f"{path} has no rows to plot")
    return header, data


def _write(path, text):
    with open(path, "w") as fh:
        fh.write(text)
    return path


def _trajectory_plots(path, out_dir):
    h, d = _load(path)
    t = column(h, d, "t", path)
    q, p = column(h, d, "q0", path), column(h, d, "p0", path)
    energy = column(h, d, "H", path)
    return [
        _write(os.path.join(out_dir, "phase_portrait.svg"),
               line_plot([("(q0, p0)", q, p)], "q0", "p0", "Phase portrait")),
        _write(os.path.join(out_dir, "energy.svg"),
               line_plot([("H", t, energy)], "t", "energy", "Total energy")),
    ]


def _ensemble_plots(path, out_dir):
    h, d = _load(path)
    t = column(h, d, "t", path)
    return [
        _write(os.path.join(out_dir, "mean_position.svg"),
               line_plot([("mean q0", t, column(h, d, "mean_q0", path))], "t", "q",
                         "Ensemble mean position")),
        _write(os.path.join(out_dir, "energy.svg"),
               line_plot([("energy", t, column(h, d, "energy", path))], "t", "energy",
                         "Ensemble energy")),
    ]


def _observable_plots(path, out_dir):
    h, d = _load(path)
    t = column(h, d, "t", path)
    pops = [name for name in h if name.startswith("pop")]
    return [
        _write(os.path.join(out_dir, "mean_position.svg"),
               line_plot([("<r0>", t, column(h, d, "mean_r0", path))], "t", "<r>",
                         "Nuclear mean position")),
        _write(os.path.join(out_dir, "energy.svg"),
               line_plot([("E", t, column(h, d, "energy", path))], "t", "energy",
                         "Total energy")),
        _write(os.path.join(out_dir, "populations.svg"),
               line_plot([(name, t, column(h, d, name, path)) for name in pops], "t",
                         "population", "Adiabatic populations")),
    ]


def _error_plot(path, out_dir):
    h, d = _load(path)
    mu, err = column(h, d, "mu", path), column(h, d, "error", path)
    ok = np.isfinite(err) & (err > 0)
    if not ok.any():
        raise InvalidInputError(f"{path} has no finite errors to plot")
    return [_write(os.path.join(out_dir, "mu_limit.svg"),
                   line_plot([("|<r>(T) - q(T)|", mu[ok], err[ok])], "mu", "error",
                             "Small-mu limit", logx=True, logy=True, markers=True))]


PLOTTERS = {
    "trajectory.csv": _trajectory_plots,
    "ensemble.csv": _ensemble_plots,
    "observables.csv": _observable_plots,
    "errors.csv": _error_plot,
}


def emit_plots(run_dir):
    """Write SVG plots next to each recognised CSV in ``run_dir``; return their paths."""
    if not os.path.isdir(run_dir):
        raise InvalidInputError(f"{run_dir} is not a directory")
    written = []
    for name, plot in PLOTTERS.items():
        path = os.path.join(run_dir, name)
        if os.path.exists(path):
            written += plot(path, run_dir)
    if not written:
        raise InvalidInputError(f"{run_dir} contains no plottable CSV files")
    return written

