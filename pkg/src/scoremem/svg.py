"""Minimal deterministic SVG charts (scatter, polylines, segments, curves).

Coordinates are rounded to two decimals so identical inputs give identical
files.  An optional ``<!-- generated ... -->`` timestamp comment is the only
non-deterministic content.
"""

from __future__ import annotations

import datetime as _dt
import math
from dataclasses import dataclass, field
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
           "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"]


def _f(v):
    return f"{v:.2f}"


def _nice_ticks(lo, hi, n=5):
    span = hi - lo
    if span <= 0:
        return [lo]
    raw = span / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step) * step
    ticks = []
    v = start
    while v <= hi + 1e-9 * span:
        ticks.append(0.0 if abs(v) < 1e-12 * step else v)
        v += step
    return ticks


def _fmt_tick(v):
    return f"{v:g}"


@dataclass
class _Layer:
    kind: str
    data: object
    color: str
    label: str | None
    size: float
    opacity: float


@dataclass
class Plot:
    title: str = ""
    xlabel: str = ""
    ylabel: str = ""
    xlog: bool = False
    ylog: bool = False
    equal_aspect: bool = False
    width: int = 640
    height: int = 480
    bounds: tuple | None = None
    layers: list = field(default_factory=list)

    def points(self, xy, color=None, r=2.0, label=None, opacity=1.0):
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        self.layers.append(_Layer("points", xy, color or self._next_color(), label, r, opacity))
        return self

    def line(self, x, y, color=None, width=1.5, label=None, opacity=1.0, markers=False):
        xy = np.column_stack([np.asarray(x, float), np.asarray(y, float)])
        self.layers.append(_Layer("line", xy, color or self._next_color(), label, width, opacity))
        if markers:
            self.layers.append(_Layer("points", xy, self.layers[-1].color, None, 3.0, opacity))
        return self

    def segments(self, segs, color="#999999", width=1.0, label=None, opacity=1.0):
        segs = np.asarray(segs, dtype=float).reshape(-1, 4)
        self.layers.append(_Layer("segments", segs, color, label, width, opacity))
        return self

    def _next_color(self):
        used = sum(1 for L in self.layers if L.label is not None or L.kind != "segments")
        return PALETTE[used % len(PALETTE)]

    # -- rendering -------------------------------------------------------------

    def _tx(self, v, axis):
        log = self.xlog if axis == 0 else self.ylog
        v = np.asarray(v, dtype=float)
        if log:
            with np.errstate(divide="ignore", invalid="ignore"):
                return np.where(v > 0, np.log10(np.where(v > 0, v, 1.0)), np.nan)
        return v

    def _data_bounds(self):
        xs, ys = [], []
        for L in self.layers:
            if L.kind == "segments":
                xs += [L.data[:, 0], L.data[:, 2]]
                ys += [L.data[:, 1], L.data[:, 3]]
            else:
                xs.append(L.data[:, 0])
                ys.append(L.data[:, 1])
        x = self._tx(np.concatenate(xs) if xs else np.zeros(1), 0)
        y = self._tx(np.concatenate(ys) if ys else np.zeros(1), 1)
        x, y = x[np.isfinite(x)], y[np.isfinite(y)]
        if x.size == 0:
            x = np.zeros(1)
        if y.size == 0:
            y = np.zeros(1)
        x0, x1, y0, y1 = x.min(), x.max(), y.min(), y.max()
        padx = 0.05 * (x1 - x0) or 0.5
        pady = 0.05 * (y1 - y0) or 0.5
        return x0 - padx, x1 + padx, y0 - pady, y1 + pady

    def render(self, timestamp=True) -> str:
        if self.bounds is not None:
            bx = self._tx(np.array(self.bounds[:2]), 0)
            by = self._tx(np.array(self.bounds[2:]), 1)
            x0, x1, y0, y1 = float(bx[0]), float(bx[1]), float(by[0]), float(by[1])
        else:
            x0, x1, y0, y1 = self._data_bounds()
        L, R, Tm, Bm = 70, 20, 40, 55
        pw, ph = self.width - L - R, self.height - Tm - Bm
        if self.equal_aspect:
            sx, sy = pw / (x1 - x0), ph / (y1 - y0)
            s = min(sx, sy)
            cx, cy = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
            x0, x1 = cx - pw / (2 * s), cx + pw / (2 * s)
            y0, y1 = cy - ph / (2 * s), cy + ph / (2 * s)

        def X(v):
            return L + (self._tx(v, 0) - x0) / (x1 - x0) * pw

        def Y(v):
            return Tm + ph - (self._tx(v, 1) - y0) / (y1 - y0) * ph

        out = ['<?xml version="1.0" encoding="UTF-8"?>']
        if timestamp:
            now = _dt.datetime.now(_dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
            out.append(f"<!-- generated {now} -->")
        out.append(f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" '
                   f'height="{self.height}" viewBox="0 0 {self.width} {self.height}" '
                   f'font-family="sans-serif" font-size="11">')
        out.append(f'<rect width="{self.width}" height="{self.height}" fill="white"/>')
        out.append(f'<defs><clipPath id="plot"><rect x="{L}" y="{Tm}" width="{pw}" '
                   f'height="{ph}"/></clipPath></defs>')
        out.append(f'<rect x="{L}" y="{Tm}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
        out += self._axis_ticks(x0, x1, y0, y1, L, Tm, pw, ph)
        out.append('<g clip-path="url(#plot)">')
        for layer in self.layers:
            out += self._draw(layer, X, Y)
        out.append("</g>")
        if self.title:
            out.append(f'<text x="{self.width / 2:.1f}" y="22" text-anchor="middle" '
                       f'font-size="14">{escape(self.title)}</text>')
        if self.xlabel:
            out.append(f'<text x="{L + pw / 2:.1f}" y="{self.height - 12}" '
                       f'text-anchor="middle">{escape(self.xlabel)}</text>')
        if self.ylabel:
            out.append(f'<text x="16" y="{Tm + ph / 2:.1f}" text-anchor="middle" '
                       f'transform="rotate(-90 16 {Tm + ph / 2:.1f})">{escape(self.ylabel)}</text>')
        out += self._legend(L + pw - 10, Tm + 10)
        out.append("</svg>")
        return "\n".join(out) + "\n"

    def _axis_ticks(self, x0, x1, y0, y1, L, Tm, pw, ph):
        out = []
        for axis, (lo, hi) in enumerate(((x0, x1), (y0, y1))):
            log = self.xlog if axis == 0 else self.ylog
            if log:
                ticks = list(range(math.ceil(lo), math.floor(hi) + 1))
                labels = [f"1e{k}" for k in ticks]
            else:
                ticks = _nice_ticks(lo, hi)
                labels = [_fmt_tick(v) for v in ticks]
            for v, lab in zip(ticks, labels):
                frac = (v - lo) / (hi - lo)
                if axis == 0:
                    px = L + frac * pw
                    out.append(f'<line x1="{_f(px)}" y1="{Tm + ph}" x2="{_f(px)}" '
                               f'y2="{Tm + ph + 5}" stroke="black"/>')
                    out.append(f'<text x="{_f(px)}" y="{Tm + ph + 18}" '
                               f'text-anchor="middle">{lab}</text>')
                else:
                    py = Tm + ph - frac * ph
                    out.append(f'<line x1="{L - 5}" y1="{_f(py)}" x2="{L}" y2="{_f(py)}" '
                               f'stroke="black"/>')
                    out.append(f'<text x="{L - 8}" y="{_f(py + 4)}" '
                               f'text-anchor="end">{lab}</text>')
        return out

    def _draw(self, layer, X, Y):
        out = []
        op = "" if layer.opacity == 1.0 else f' opacity="{layer.opacity:g}"'
        if layer.kind == "points":
            px, py = X(layer.data[:, 0]), Y(layer.data[:, 1])
            out.append(f'<g fill="{layer.color}"{op}>')
            for a, b in zip(px, py):
                if np.isfinite(a) and np.isfinite(b):
                    out.append(f'<circle cx="{_f(a)}" cy="{_f(b)}" r="{layer.size:g}"/>')
            out.append("</g>")
        elif layer.kind == "line":
            px, py = X(layer.data[:, 0]), Y(layer.data[:, 1])
            ok = np.isfinite(px) & np.isfinite(py)
            pts = " ".join(f"{_f(a)},{_f(b)}" for a, b in zip(px[ok], py[ok]))
            out.append(f'<polyline points="{pts}" fill="none" stroke="{layer.color}" '
                       f'stroke-width="{layer.size:g}"{op}/>')
        else:
            out.append(f'<g stroke="{layer.color}" stroke-width="{layer.size:g}"{op}>')
            for x1, y1, x2, y2 in layer.data:
                out.append(f'<line x1="{_f(X(x1))}" y1="{_f(Y(y1))}" '
                           f'x2="{_f(X(x2))}" y2="{_f(Y(y2))}"/>')
            out.append("</g>")
        return out

    def _legend(self, right, top):
        items = [L for L in self.layers if L.label]
        out = []
        for k, layer in enumerate(items):
            y = top + 14 * k + 6
            out.append(f'<rect x="{right - 110}" y="{y - 5}" width="10" height="10" '
                       f'fill="{layer.color}"/>')
            out.append(f'<text x="{right - 96}" y="{y + 4}">{escape(layer.label)}</text>')
        return out

    def save(self, path, timestamp=True):
        with open(path, "w", newline="\n") as fh:
            fh.write(self.render(timestamp=timestamp))
