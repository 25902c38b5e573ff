"""Learning-curve SVGs without a plotting dependency."""
from __future__ import annotations

import re
from collections import OrderedDict
from html import escape
from pathlib import Path
from typing import Dict, List, Sequence

import numpy as np

from .errors import InvalidArgument
from .metrics import FIELD_NAMES, check_monotone, read_metrics

WIDTH, HEIGHT = 720, 440
MARGIN = dict(left=80, right=180, top=30, bottom=60)
COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"]
_SEED_SUFFIX = re.compile(r"[_\-.](seed|s)\d+$")


def run_name(path) -> str:
    name = Path(path).name
    return name[: -len(".metrics.jsonl")] if name.endswith(".metrics.jsonl") else Path(path).stem


def group_name(name: str) -> str:
    """Strip a trailing seed marker (``_seed3``, ``-s3``) to get the shared prefix."""
    return _SEED_SUFFIX.sub("", name) or name


def _series(path, field):
    records = read_metrics(path)
    if not records:
        raise InvalidArgument(f"{path}: no metric records")
    check_monotone(records, path)
    pts = [(r.env_steps, getattr(r, field)) for r in records if getattr(r, field) is not None]
    return np.array([p[0] for p in pts], dtype=float), np.array([p[1] for p in pts], dtype=float)


def _curves(paths: Sequence, field: str) -> Dict[str, dict]:
    groups: "OrderedDict[str, list]" = OrderedDict()
    for p in paths:
        groups.setdefault(group_name(run_name(p)), []).append(_series(p, field))
    curves = {}
    for name, runs in groups.items():
        if len(runs) == 1:
            x, y = runs[0]
            curves[name] = {"x": x, "y": y, "std": None, "n": 1}
            continue
        common = sorted(set.intersection(*(set(x.tolist()) for x, _ in runs)))
        ys = np.array([[dict(zip(x.tolist(), y.tolist()))[s] for s in common] for x, y in runs])
        curves[name] = {"x": np.array(common), "y": ys.mean(axis=0), "std": ys.std(axis=0), "n": len(runs)}
    return curves


def render_svg(curves: Dict[str, dict], field: str) -> str:
    xs = np.concatenate([c["x"] for c in curves.values()])
    lows = [c["y"] - (c["std"] if c["std"] is not None else 0) for c in curves.values()]
    highs = [c["y"] + (c["std"] if c["std"] is not None else 0) for c in curves.values()]
    y_lo, y_hi = float(np.min(np.concatenate(lows))), float(np.max(np.concatenate(highs)))
    x_lo, x_hi = float(xs.min()), float(xs.max())
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_lo, y_hi = y_lo - 1.0, y_hi + 1.0
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def sx(v):
        return MARGIN["left"] + (v - x_lo) / (x_hi - x_lo) * pw

    def sy(v):
        return MARGIN["top"] + (1.0 - (v - y_lo) / (y_hi - y_lo)) * ph

    parts: List[str] = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<rect x="{MARGIN["left"]}" y="{MARGIN["top"]}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>',
    ]
    for i in range(5):
        xv = x_lo + (x_hi - x_lo) * i / 4
        yv = y_lo + (y_hi - y_lo) * i / 4
        parts.append(f'<text x="{sx(xv):.1f}" y="{HEIGHT - MARGIN["bottom"] + 18}" font-size="11" text-anchor="middle">{xv:g}</text>')
        parts.append(f'<text x="{MARGIN["left"] - 6}" y="{sy(yv) + 4:.1f}" font-size="11" text-anchor="end">{yv:.4g}</text>')
    parts.append(f'<text class="xlabel" x="{MARGIN["left"] + pw / 2}" y="{HEIGHT - 15}" font-size="13" text-anchor="middle">env_steps</text>')
    parts.append(
        f'<text class="ylabel" x="18" y="{MARGIN["top"] + ph / 2}" font-size="13" text-anchor="middle" '
        f'transform="rotate(-90 18 {MARGIN["top"] + ph / 2})">{escape(field)}</text>'
    )
    for i, (name, c) in enumerate(curves.items()):
        color = COLORS[i % len(COLORS)]
        if c["std"] is not None:
            upper = [f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(c["x"], c["y"] + c["std"])]
            lower = [f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(c["x"][::-1], (c["y"] - c["std"])[::-1])]
            parts.append(f'<polygon class="band" points="{" ".join(upper + lower)}" fill="{color}" fill-opacity="0.2" stroke="none"/>')
        pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(c["x"], c["y"]))
        parts.append(f'<polyline class="curve" data-run="{escape(name)}" points="{pts}" fill="none" stroke="{color}" stroke-width="2"/>')
        ly = MARGIN["top"] + 16 + 20 * i
        lx = WIDTH - MARGIN["right"] + 12
        label = name if c["n"] == 1 else f"{name} (n={c['n']})"
        parts.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 20}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text class="legend" x="{lx + 26}" y="{ly}" font-size="12">{escape(label)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def plot(metrics_paths: Sequence, field: str, out_svg) -> Path:
    if not metrics_paths:
        raise InvalidArgument("need at least one metrics file")
    if field not in FIELD_NAMES or field == "env_steps":
        available = [f for f in FIELD_NAMES if f != "env_steps"]
        raise InvalidArgument(f"unknown field {field!r}; available: {', '.join(available)}")
    curves = _curves(metrics_paths, field)
    if any(len(c["x"]) == 0 for c in curves.values()):
        raise InvalidArgument(f"no values for field {field!r}")
    svg = render_svg(curves, field)
    out = Path(out_svg)
    out.write_text(svg)
    return out
