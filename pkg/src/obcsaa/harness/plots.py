"""Standalone SVG line charts of loss and accuracy against the round index."""
from collections import OrderedDict
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from ..errors import ParameterError

WIDTH, HEIGHT = 640, 400
MARGIN = dict(left=70, right=220, top=30, bottom=50)
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
           "#bcbd22", "#17becf")
CHARTS = (("train_loss", "Training loss", "loss.svg"), ("test_acc", "Test accuracy", "accuracy.svg"))


def series_label(run_id):
    """The grouping key: the run id without its hash prefix."""
    return run_id.split(":", 1)[1] if ":" in run_id else run_id


def group_series(rows, column):
    """label -> (rounds, mean over seeds), in first-seen order; failure rows skipped."""
    acc = OrderedDict()
    for r in rows:
        v = r[column]
        if v is None or isinstance(v, str):
            continue
        acc.setdefault(series_label(r["run_id"]), {}).setdefault(int(r["round"]), []).append(float(v))
    out = OrderedDict()
    for label, by_round in acc.items():
        rounds = np.array(sorted(by_round))
        out[label] = (rounds, np.array([np.mean(by_round[t]) for t in rounds]))
    return out


def _ticks(lo, hi, n=5):
    return np.linspace(lo, hi, n)


def render_svg(series, title, ylabel):
    """One polyline per series plus axes, ticks and a legend."""
    x0, x1 = MARGIN["left"], WIDTH - MARGIN["right"]
    y0, y1 = HEIGHT - MARGIN["bottom"], MARGIN["top"]
    xs = np.concatenate([r for r, _ in series.values()])
    ys = np.concatenate([v for _, v in series.values()])
    xlo, xhi = float(xs.min()), float(xs.max())
    ylo, yhi = float(ys.min()), float(ys.max())
    if xhi == xlo:
        xhi = xlo + 1.0
    if yhi == ylo:
        yhi = ylo + max(abs(ylo), 1.0) * 0.1
    pad = 0.05 * (yhi - ylo)
    ylo, yhi = ylo - pad, yhi + pad

    def px(x):
        return x0 + (x - xlo) / (xhi - xlo) * (x1 - x0)

    def py(y):
        return y0 - (y - ylo) / (yhi - ylo) * (y0 - y1)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{(x0 + x1) / 2:.1f}" y="18" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>',
    ]
    for t in _ticks(xlo, xhi):
        out.append(f'<line x1="{px(t):.1f}" y1="{y0}" x2="{px(t):.1f}" y2="{y0 + 4}" stroke="black"/>')
        out.append(f'<text x="{px(t):.1f}" y="{y0 + 18}" text-anchor="middle">{t:.0f}</text>')
    for t in _ticks(ylo, yhi):
        out.append(f'<line x1="{x0 - 4}" y1="{py(t):.1f}" x2="{x0}" y2="{py(t):.1f}" stroke="black"/>')
        out.append(f'<text x="{x0 - 8}" y="{py(t) + 4:.1f}" text-anchor="end">{t:.3g}</text>')
    out.append(f'<text x="{(x0 + x1) / 2:.1f}" y="{HEIGHT - 10}" text-anchor="middle">Communication round</text>')
    out.append(f'<text x="16" y="{(y0 + y1) / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {(y0 + y1) / 2:.1f})">{escape(ylabel)}</text>')
    for k, (label, (rounds, vals)) in enumerate(series.items()):
        colour = PALETTE[k % len(PALETTE)]
        pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(rounds, vals))
        out.append(f'<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{pts}">'
                   f'<title>{escape(label)}</title></polyline>')
        ly = MARGIN["top"] + 16 * k + 6
        out.append(f'<rect x="{x1 + 12}" y="{ly - 5}" width="18" height="3" fill="{colour}"/>')
        out.append(f'<text x="{x1 + 36}" y="{ly}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_plots(rows, out_dir):
    """Write ``loss.svg`` and ``accuracy.svg`` into ``out_dir``; return their paths."""
    rows = list(rows)
    if not rows:
        raise ParameterError("cannot plot an empty metrics table")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = []
    for column, ylabel, name in CHARTS:
        series = group_series(rows, column)
        if not series:
            raise ParameterError(f"no finite {column} values to plot")
        path = out_dir / name
        path.write_text(render_svg(series, f"{ylabel} vs. round", ylabel))
        files.append(path)
    return files
