"""Plain-SVG figures rendered from the CSV artifacts alone.

Every renderer takes CSV text (what the pipeline writes to disk) rather than
in-memory objects, so a plot can always be rebuilt from its table.
"""

from __future__ import annotations

import csv
import io
from xml.sax.saxutils import escape

import numpy as np

from .specfun import probit

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")
W, H, PAD = 480, 360, 48


def _rows(text: str):
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    r = list(csv.reader(lines))
    return r[0], r[1:]


def _num(v: str) -> float:
    return float(v) if v != "" else float("nan")


class _Canvas:
    def __init__(self, width=W, height=H):
        self.w, self.h = width, height
        self.parts = []

    def add(self, s: str):
        self.parts.append(s)

    def text(self, x, y, s, size=11, anchor="middle", rotate=None):
        tr = f' transform="rotate({rotate} {x:.1f} {y:.1f})"' if rotate is not None else ""
        self.add(f'<text x="{x:.1f}" y="{y:.1f}" font-size="{size}" text-anchor="{anchor}"'
                 f' font-family="sans-serif"{tr}>{escape(str(s))}</text>')

    def render(self) -> str:
        head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.w}" height="{self.h}"'
                f' viewBox="0 0 {self.w} {self.h}">')
        return "\n".join([head, f'<rect width="{self.w}" height="{self.h}" fill="white"/>',
                          *self.parts, "</svg>"]) + "\n"


def _axes(cv, x0, y0, pw, ph, xlim, ylim, xlabel, ylabel, ticks=None):
    cv.add(f'<rect x="{x0}" y="{y0}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
    cv.text(x0 + pw / 2, y0 + ph + 34, xlabel)
    cv.text(x0 - 34, y0 + ph / 2, ylabel, rotate=-90)
    (xa, xb), (ya, yb) = xlim, ylim
    xt = ticks[0] if ticks else [(v, f"{v:.3g}") for v in np.linspace(xa, xb, 5)]
    yt = ticks[1] if ticks else [(v, f"{v:.3g}") for v in np.linspace(ya, yb, 5)]
    for v, lab in xt:
        x = x0 + (v - xa) / (xb - xa) * pw
        cv.add(f'<line x1="{x:.1f}" y1="{y0 + ph}" x2="{x:.1f}" y2="{y0 + ph + 4}" stroke="black"/>')
        cv.text(x, y0 + ph + 16, lab, size=9)
    for v, lab in yt:
        y = y0 + ph - (v - ya) / (yb - ya) * ph
        cv.add(f'<line x1="{x0 - 4}" y1="{y:.1f}" x2="{x0}" y2="{y:.1f}" stroke="black"/>')
        cv.text(x0 - 6, y + 3, lab, size=9, anchor="end")

    def to_px(x, y):
        return x0 + (x - xa) / (xb - xa) * pw, y0 + ph - (y - ya) / (yb - ya) * ph
    return to_px


def _polyline(cv, pts, color, width=1.5, dash=None):
    d = " ".join(f"{x:.2f},{y:.2f}" for x, y in pts)
    da = f' stroke-dasharray="{dash}"' if dash else ""
    cv.add(f'<polyline points="{d}" fill="none" stroke="{color}" stroke-width="{width}"{da}/>')


def _legend(cv, names, x, y):
    for i, n in enumerate(names):
        c = PALETTE[i % len(PALETTE)]
        cv.add(f'<line x1="{x}" y1="{y + 14 * i}" x2="{x + 16}" y2="{y + 14 * i}" stroke="{c}" stroke-width="2"/>')
        cv.text(x + 20, y + 14 * i + 4, n, size=9, anchor="start")


def histogram_svg(csv_text: str, title: str = "") -> str:
    """Class-conditional histogram from ``bin_lo,bin_hi,real,fake`` rows."""
    head, rows = _rows(csv_text)
    lo = np.array([_num(r[0]) for r in rows])
    hi = np.array([_num(r[1]) for r in rows])
    cols = {h: np.array([_num(r[i]) for r in rows]) for i, h in enumerate(head) if i >= 2}
    ymax = max(1.0, max(float(v.max()) for v in cols.values()))
    cv = _Canvas()
    pw, ph = W - 2 * PAD, H - 2 * PAD
    to = _axes(cv, PAD, PAD, pw, ph, (lo[0], hi[-1]), (0, ymax), title or "value", "count")
    for k, (name, counts) in enumerate(cols.items()):
        c = PALETTE[k % len(PALETTE)]
        for a, b, n in zip(lo, hi, counts):
            if n <= 0:
                continue
            xa, ya = to(a, n)
            xb, yb = to(b, 0)
            cv.add(f'<rect x="{xa:.2f}" y="{ya:.2f}" width="{xb - xa:.2f}" height="{yb - ya:.2f}"'
                   f' fill="{c}" fill-opacity="0.45" stroke="none"/>')
    _legend(cv, list(cols), W - PAD - 80, PAD + 10)
    return cv.render()


def _diverging(v: float) -> str:
    """-1 -> blue, 0 -> white, +1 -> red."""
    v = float(np.clip(v, -1, 1))
    if v >= 0:
        g = int(round(255 * (1 - v)))
        return f"#ff{g:02x}{g:02x}"
    g = int(round(255 * (1 + v)))
    return f"#{g:02x}{g:02x}ff"


def heatmap_svg(csv_text: str, title: str = "") -> str:
    """Correlation heatmap from a square ``feature,<names...>`` table."""
    head, rows = _rows(csv_text)
    names = head[1:]
    R = np.array([[_num(v) for v in r[1:]] for r in rows])
    n = len(names)
    cell = max(6, min(16, 520 // max(n, 1)))
    left = top = 150
    cv = _Canvas(left + n * cell + 20, top + n * cell + 30)
    if title:
        cv.text(left + n * cell / 2, 16, title, size=12)
    for i in range(n):
        cv.text(left - 4, top + i * cell + cell * 0.75, names[i], size=7, anchor="end")
        x = left + i * cell + cell * 0.6
        cv.text(x, top - 4, names[i], size=7, anchor="start", rotate=-60)
        for j in range(n):
            cv.add(f'<rect x="{left + j * cell}" y="{top + i * cell}" width="{cell}" height="{cell}"'
                   f' fill="{_diverging(R[i, j])}"/>')
    return cv.render()


_DET_TICKS = (0.001, 0.01, 0.05, 0.1, 0.2, 0.4, 0.6, 0.8, 0.9, 0.95, 0.99)


def _det_xy(text):
    head, rows = _rows(text)
    ia, ir = head.index("far"), head.index("frr")
    clamp = lambda v: min(max(v, 1e-4), 1 - 1e-4)
    return [(probit(clamp(_num(r[ia]))), probit(clamp(_num(r[ir])))) for r in rows]


def _det_panel(cv, curves, x0, y0, pw, ph):
    lim = (probit(1e-3), probit(0.99))
    ticks = [(probit(t), f"{100 * t:g}") for t in _DET_TICKS]
    to = _axes(cv, x0, y0, pw, ph, lim, lim, "FAR (%)", "FRR (%)", ticks=(ticks, ticks))
    _polyline(cv, [to(lim[0], lim[0]), to(lim[1], lim[1])], "#999999", 1, dash="3,3")
    for k, (name, text) in enumerate(curves.items()):
        pts = [(min(max(a, lim[0]), lim[1]), min(max(b, lim[0]), lim[1])) for a, b in _det_xy(text)]
        _polyline(cv, [to(a, b) for a, b in pts], PALETTE[k % len(PALETTE)])


def det_svg(curves: dict, title: str = "") -> str:
    """DET curves on probit axes from ``threshold,far,frr`` CSV texts keyed by model."""
    cv = _Canvas()
    if title:
        cv.text(W / 2, 18, title, size=12)
    _det_panel(cv, curves, PAD, PAD, W - 2 * PAD, H - 2 * PAD)
    _legend(cv, list(curves), W - PAD - 90, PAD + 10)
    return cv.render()


def roc_det_svg(roc_curves: dict, det_curves: dict) -> str:
    """Side-by-side ROC (linear axes) and DET (probit axes) overlays for all models."""
    cv = _Canvas(2 * W, H)
    pw, ph = W - 2 * PAD, H - 2 * PAD
    to = _axes(cv, PAD, PAD, pw, ph, (0, 1), (0, 1), "false positive rate", "true positive rate")
    _polyline(cv, [to(0, 0), to(1, 1)], "#999999", 1, dash="3,3")
    for k, (name, text) in enumerate(roc_curves.items()):
        head, rows = _rows(text)
        ia, ib = head.index("fpr"), head.index("tpr")
        _polyline(cv, [to(_num(r[ia]), _num(r[ib])) for r in rows], PALETTE[k % len(PALETTE)])
    _legend(cv, list(roc_curves), PAD + pw - 90, PAD + ph - 14 * len(roc_curves) - 4)
    _det_panel(cv, det_curves, W + PAD, PAD, pw, ph)
    return cv.render()


def histogram_csv(hist: dict) -> str:
    """Serialise the output of ``stats.class_histograms``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["bin_lo", "bin_hi", "real", "fake"])
    e = hist["edges"]
    for i in range(e.size - 1):
        w.writerow([repr(float(e[i])), repr(float(e[i + 1])), int(hist["real"][i]), int(hist["fake"][i])])
    return buf.getvalue()
