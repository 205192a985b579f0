"""Minimal standalone SVG line plots for sweep reports.

Only what the reports need: a linear-axis line chart with markers, a
legend and tick labels. Output is plain SVG 1.1 text with no external
references, so the files open in any browser.
"""
import math
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")
WIDTH, HEIGHT = 640, 420
MARGIN = {"left": 78, "right": 150, "top": 40, "bottom": 56}


def nice_ticks(lo, hi, target=5):
    """Round tick positions covering ``[lo, hi]``."""
    if not (math.isfinite(lo) and math.isfinite(hi)):
        return [0.0, 1.0]
    if hi <= lo:
        pad = abs(lo) * 0.1 or 1.0
        lo, hi = lo - pad, hi + pad
    raw = (hi - lo) / max(target, 1)
    mag = 10.0 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw)
    start = math.floor(lo / step) * step
    ticks = []
    t = start
    while t <= hi + 1e-9 * step:
        ticks.append(round(t, 12))
        t += step
    if ticks[-1] < hi:
        ticks.append(round(t, 12))
    return ticks


def _fmt_tick(v):
    if v == 0:
        return "0"
    if abs(v) >= 1e4 or abs(v) < 1e-3:
        return f"{v:.1e}"
    return f"{v:.4g}"


def line_plot(series, title="", xlabel="", ylabel="", markers=True):
    """Render ``series`` as an SVG document.

    Parameters
    ----------
    series : list of (label, x, y)
        One polyline per entry. Non-finite points are skipped.
    title, xlabel, ylabel : str
    markers : bool
        Draw a dot at every data point.

    Returns
    -------
    str
        The SVG text.
    """
    xs = np.concatenate([np.asarray(x, float) for _, x, _ in series]) if series else np.zeros(0)
    ys = np.concatenate([np.asarray(y, float) for _, _, y in series]) if series else np.zeros(0)
    ok = np.isfinite(xs) & np.isfinite(ys)
    if ok.any():
        xt = nice_ticks(float(xs[ok].min()), float(xs[ok].max()))
        yt = nice_ticks(float(ys[ok].min()), float(ys[ok].max()))
    else:
        xt, yt = [0.0, 1.0], [0.0, 1.0]
    x0, x1, y0, y1 = xt[0], xt[-1], yt[0], yt[-1]
    left, top = MARGIN["left"], MARGIN["top"]
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def px(v):
        return left + (v - x0) / (x1 - x0) * pw

    def py(v):
        return top + ph - (v - y0) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.1f}" y="22" text-anchor="middle" font-size="14">'
        f"{escape(title)}</text>",
    ]
    for t in xt:
        out.append(f'<line x1="{px(t):.2f}" y1="{top}" x2="{px(t):.2f}" y2="{top + ph}" '
                   'stroke="#e0e0e0"/>')
        out.append(f'<text x="{px(t):.2f}" y="{top + ph + 18}" text-anchor="middle">'
                   f"{_fmt_tick(t)}</text>")
    for t in yt:
        out.append(f'<line x1="{left}" y1="{py(t):.2f}" x2="{left + pw}" y2="{py(t):.2f}" '
                   'stroke="#e0e0e0"/>')
        out.append(f'<text x="{left - 6}" y="{py(t) + 4:.2f}" text-anchor="end">'
                   f"{_fmt_tick(t)}</text>")
    out.append(f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" '
               'stroke="black"/>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{HEIGHT - 14}" text-anchor="middle">'
               f"{escape(xlabel)}</text>")
    out.append(f'<text x="16" y="{top + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {top + ph / 2:.1f})">{escape(ylabel)}</text>')

    for i, (label, x, y) in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        good = np.isfinite(x) & np.isfinite(y)
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x[good], y[good]))
        if pts:
            out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                       'stroke-width="1.8"/>')
        if markers:
            for a, b in zip(x[good], y[good]):
                out.append(f'<circle cx="{px(a):.2f}" cy="{py(b):.2f}" r="3" fill="{color}"/>')
        ly = top + 14 + 18 * i
        lx = left + pw + 12
        out.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 22}" y2="{ly - 4}" '
                   f'stroke="{color}" stroke-width="2.5"/>')
        out.append(f'<text x="{lx + 28}" y="{ly}">{escape(str(label))}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def mse_vs_snr(records, lam, scope="active", methods=("mne", "kf", "fis")):
    """MSE against SNR for every method at one lambda, from sweep records."""
    key = "mse_active" if scope == "active" else "mse_all"
    series = []
    for m in methods:
        pts = sorted((r["snr"], r[key]) for r in records
                     if r["method"] == m and r["lambda"] == lam and r.get(key) is not None)
        if pts:
            series.append((m.upper(), [p[0] for p in pts], [p[1] for p in pts]))
    return line_plot(series, title=f"Mean {scope}-vertex MSE, lambda = {lam:g}",
                     xlabel="SNR", ylabel="MSE")


def time_course(t, truth, estimates, title):
    """Overlay of the true time course and each method's estimate at one vertex.

    ``estimates`` maps a label to a 1-D array sampled at ``t``.
    """
    series = [("truth", t, truth)] + [(k.upper(), t, v) for k, v in estimates.items()]
    return line_plot(series, title=title, xlabel="time (s)", ylabel="amplitude",
                     markers=False)
