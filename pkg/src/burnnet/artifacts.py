"""Writers for run artifacts.  Every file carries the run's config hash, seed and version.

CSV files start with ``# key=value`` comment lines; JSON files have a
top-level ``meta`` object and a ``schema`` tag; PNGs carry text chunks; SVGs
carry an XML comment.  Nothing depends on wall-clock time.
"""
from __future__ import annotations

import csv
import json
from html import escape
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1

__all__ = ["write_csv", "read_csv", "write_json", "read_json", "write_png", "write_svg_plot",
           "SCHEMA_VERSION"]


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer, np.bool_)):
        return str(v.item())
    return v


def write_csv(path, header, rows, meta: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        for k, v in sorted(meta.items()):
            fh.write(f"# {k}={v}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])
    return path


def read_csv(path) -> tuple[list[str], list[list[str]], dict]:
    meta, body = {}, []
    with open(path, newline="") as fh:
        for line in fh:
            if line.startswith("#"):
                k, _, v = line[1:].strip().partition("=")
                meta[k] = v
            else:
                body.append(line)
    rows = list(csv.reader(body))
    if not rows:
        raise ValueError(f"{path} has no header")
    return rows[0], rows[1:], meta


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if np.isfinite(f) else None
    return obj


def write_json(path, payload: dict, meta: dict, schema: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {"schema": f"burnnet/{schema}/{SCHEMA_VERSION}", "meta": meta, **payload}
    path.write_text(json.dumps(_plain(doc), indent=2, sort_keys=True) + "\n")
    return path


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())


def write_png(path, pixels: np.ndarray, meta: dict) -> Path:
    from PIL import Image
    from PIL.PngImagePlugin import PngInfo

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    info = PngInfo()
    for k, v in sorted(meta.items()):
        info.add_text(k, str(v))
    Image.fromarray(np.asarray(pixels, dtype=np.uint8)).save(path, pnginfo=info)
    return path


def write_svg_plot(path, series: dict, meta: dict, title: str = "", xlabel: str = "",
                   ylabel: str = "", xlim=(0.0, 1.0), ylim=None, width: int = 480,
                   height: int = 360) -> Path:
    """Line plot of ``{name: (x, y)}`` as a standalone SVG."""
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
    left, right, top, bottom = 56, 16, 32, 44
    pw, ph = width - left - right, height - top - bottom
    if ylim is None:
        hi = max((float(np.max(y)) for _, y in series.values()), default=1.0)
        ylim = (0.0, hi if hi > 0 else 1.0)
    x0, x1 = xlim
    y0, y1 = ylim

    def px(x):
        return left + (x - x0) / (x1 - x0) * pw

    def py(y):
        return top + ph - (y - y0) / (y1 - y0) * ph

    out = ['<?xml version="1.0" encoding="UTF-8"?>',
           "<!-- " + " ".join(f"{k}={v}" for k, v in sorted(meta.items())) + " -->",
           f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
           f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#000"/>',
           f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>',
           f'<text x="{left + pw / 2:.1f}" y="{height - 8}" text-anchor="middle">{escape(xlabel)}</text>',
           f'<text x="14" y="{top + ph / 2:.1f}" text-anchor="middle" '
           f'transform="rotate(-90 14 {top + ph / 2:.1f})">{escape(ylabel)}</text>']
    for t in np.linspace(0.0, 1.0, 6):
        xv, yv = x0 + t * (x1 - x0), y0 + t * (y1 - y0)
        out.append(f'<text x="{px(xv):.1f}" y="{top + ph + 14}" text-anchor="middle">{xv:.2g}</text>')
        out.append(f'<text x="{left - 4}" y="{py(yv) + 4:.1f}" text-anchor="end">{yv:.2g}</text>')
    for k, (name, (x, y)) in enumerate(series.items()):
        color = colors[k % len(colors)]
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(np.asarray(x), np.asarray(y)))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        ly = top + 14 + 14 * k
        out.append(f'<line x1="{left + pw - 110}" y1="{ly - 4}" x2="{left + pw - 92}" '
                   f'y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw - 88}" y="{ly}">{escape(str(name))}</text>')
    out.append("</svg>")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(out) + "\n")
    return path
