"""Static SVG line plots.

Output is a pure function of the input data: coordinates are rounded to two
decimals and no timestamps or random ids are embedded, so reruns produce
byte-identical files.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f4e9c", "#c0392b", "#2e8b57", "#8e44ad", "#d68910", "#17a589", "#555555", "#a04000")


@dataclass
class Series:
    x: np.ndarray
    y: np.ndarray
    label: str = ""
    dashed: bool = False


@dataclass
class Panel:
    """One set of axes."""

    series: list = field(default_factory=list)
    xlabel: str = ""
    ylabel: str = ""
    logx: bool = False
    title: str = ""

    def add(self, x, y, label: str = "", dashed: bool = False) -> Panel:
        self.series.append(Series(np.asarray(x, float), np.asarray(y, float), label, dashed))
        return self


def _nice_ticks(lo: float, hi: float, n: int = 5) -> list:
    if not (math.isfinite(lo) and math.isfinite(hi)):
        return []
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((s * mag for s in (1, 2, 2.5, 5, 10) if s * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step) * step
    ticks = []
    v = start
    while v <= hi + 1e-9 * step:
        ticks.append(round(v, 12))
        v += step
    return ticks


def _fmt_tick(v: float) -> str:
    if v == 0:
        return "0"
    if abs(v) >= 1e4 or abs(v) < 1e-3:
        return f"{v:.0e}"
    return f"{v:g}"


def _decimate(x, y, max_points=4000):
    # keep plots small: min/max pairs per bucket preserve the envelope
    n = x.size
    if n <= max_points:
        return x, y
    buckets = max_points // 2
    edges = np.linspace(0, n, buckets + 1).astype(int)
    xs, ys = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        if b <= a:
            continue
        seg = y[a:b]
        for k in sorted({int(np.argmin(seg)), int(np.argmax(seg))}):
            xs.append(x[a + k])
            ys.append(y[a + k])
    return np.asarray(xs), np.asarray(ys)


def render(panels, width: int = 720, panel_height: int = 260, title: str = "") -> str:
    """SVG text for vertically stacked panels."""
    if isinstance(panels, Panel):
        panels = [panels]
    ml, mr, mt, mb = 70, 20, 30 if title else 12, 42
    h = len(panels) * panel_height + mt
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{h}" viewBox="0 0 {width} {h}" '
        'font-family="sans-serif" font-size="11">',
        f'<rect x="0" y="0" width="{width}" height="{h}" fill="white"/>',
    ]
    if title:
        out.append(f'<text x="{width / 2:.2f}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>')
    for p_i, panel in enumerate(panels):
        top = mt + p_i * panel_height + 10
        pw, ph = width - ml - mr, panel_height - mb - 20
        xs = [s.x for s in panel.series]
        ys = [s.y for s in panel.series]
        xall = np.concatenate(xs) if xs else np.array([0.0, 1.0])
        yall = np.concatenate(ys) if ys else np.array([0.0, 1.0])
        if panel.logx:
            xall = xall[xall > 0]
        xall, yall = xall[np.isfinite(xall)], yall[np.isfinite(yall)]
        x0, x1 = (float(xall.min()), float(xall.max())) if xall.size else (0.0, 1.0)
        y0, y1 = (float(yall.min()), float(yall.max())) if yall.size else (0.0, 1.0)
        if y1 == y0:
            y0, y1 = y0 - 1.0, y1 + 1.0
        pad = 0.05 * (y1 - y0)
        y0, y1 = y0 - pad, y1 + pad
        if panel.logx:
            lx0 = math.log10(x0)
            lx1 = math.log10(x1) if x1 > x0 else lx0 + 1.0
            fx = lambda v: ml + (np.log10(v) - lx0) / (lx1 - lx0) * pw  # noqa: E731
        else:
            if x1 == x0:
                x1 = x0 + 1.0
            fx = lambda v: ml + (v - x0) / (x1 - x0) * pw  # noqa: E731
        fy = lambda v: top + ph - (v - y0) / (y1 - y0) * ph  # noqa: E731
        out.append(f'<rect x="{ml}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>')
        if panel.title:
            out.append(f'<text x="{ml + 4}" y="{top + 13}">{escape(panel.title)}</text>')
        if panel.logx:
            xt = [10.0**e for e in range(math.ceil(lx0 - 1e-9), math.floor(lx1 + 1e-9) + 1)]
        else:
            xt = _nice_ticks(x0, x1)
        for v in xt:
            px = float(fx(v))
            out.append(f'<line x1="{px:.2f}" y1="{top}" x2="{px:.2f}" y2="{top + ph}" stroke="#ddd"/>')
            out.append(f'<text x="{px:.2f}" y="{top + ph + 14}" text-anchor="middle">{_fmt_tick(v)}</text>')
        for v in _nice_ticks(y0, y1):
            py = float(fy(v))
            out.append(f'<line x1="{ml}" y1="{py:.2f}" x2="{ml + pw}" y2="{py:.2f}" stroke="#ddd"/>')
            out.append(f'<text x="{ml - 6}" y="{py + 4:.2f}" text-anchor="end">{_fmt_tick(v)}</text>')
        out.append(
            f'<text x="{ml + pw / 2:.2f}" y="{top + ph + 32}" text-anchor="middle">{escape(panel.xlabel)}</text>'
        )
        out.append(
            f'<text transform="translate(16 {top + ph / 2:.2f}) rotate(-90)" text-anchor="middle">'
            f"{escape(panel.ylabel)}</text>"
        )
        legend_y = top + 14
        for s_i, s in enumerate(panel.series):
            colour = PALETTE[s_i % len(PALETTE)]
            x, y = s.x, s.y
            keep = np.isfinite(x) & np.isfinite(y) & ((x > 0) if panel.logx else True)
            x, y = _decimate(x[keep], y[keep])
            if x.size:
                pts = " ".join(f"{float(a):.2f},{float(b):.2f}" for a, b in zip(fx(x), fy(y)))
                dash = ' stroke-dasharray="5,3"' if s.dashed else ""
                out.append(f'<polyline fill="none" stroke="{colour}" stroke-width="1.2"{dash} points="{pts}"/>')
            if s.label:
                lx = ml + pw - 150
                out.append(f'<line x1="{lx}" y1="{legend_y - 4}" x2="{lx + 18}" y2="{legend_y - 4}" stroke="{colour}"/>')
                out.append(f'<text x="{lx + 22}" y="{legend_y}">{escape(s.label)}</text>')
                legend_y += 14
    out.append("</svg>")
    return "\n".join(out) + "\n"


def bode_panels(resp_series, title: str = "") -> list:
    """Magnitude (dB) and phase (deg) panels for ``[(label, FrequencyResponse), ...]``."""
    mag = Panel(xlabel="frequency (Hz)", ylabel="magnitude (dB)", logx=True, title=title)
    ph = Panel(xlabel="frequency (Hz)", ylabel="phase (deg)", logx=True)
    for i, (label, r) in enumerate(resp_series):
        mag.add(r.grid, r.magnitude_db(), label, dashed=i > 0)
        ph.add(r.grid, r.phase_deg(), label, dashed=i > 0)
    return [mag, ph]
