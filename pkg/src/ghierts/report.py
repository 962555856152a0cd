"""Result serialization: CSV curves, a reproducibility manifest and an SVG chart."""

from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Mapping

import numpy as np

from .sim import AggregateCurve

__all__ = ["CSV_HEADER", "curves_to_csv", "emit_results", "read_results", "render_svg"]

CSV_HEADER = "round,agent,mean_cum_regret,stderr"

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf")


def curves_to_csv(curves: Mapping[str, AggregateCurve]) -> str:
    """Round-major rows (every agent for round 1, then round 2, ...); rounds are 1-based."""
    if not curves:
        raise ValueError("no curves to write")
    horizons = {c.horizon for c in curves.values()}
    if len(horizons) != 1:
        raise ValueError(f"curves have different horizons: {sorted(horizons)}")
    n = horizons.pop()
    out = [CSV_HEADER]
    items = list(curves.items())
    for t in range(n):
        for label, c in items:
            out.append(f"{t + 1},{label},{float(c.mean[t])!r},{float(c.stderr[t])!r}")
    return "\n".join(out) + "\n"


def read_results(path: str | Path) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Parse a results CSV back into ``label -> (mean, stderr)``."""
    with open(path, encoding="utf-8", newline="") as fh:
        text = fh.read()
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if ",".join(header) != CSV_HEADER:
        raise ValueError(f"unexpected header {header}")
    series: dict[str, tuple[list, list, list]] = {}
    for row in reader:
        r, label, mean, err = row
        s = series.setdefault(label, ([], [], []))
        s[0].append(int(r))
        s[1].append(float(mean))
        s[2].append(float(err))
    out = {}
    for label, (rounds, mean, err) in series.items():
        if rounds != list(range(1, len(rounds) + 1)):
            raise ValueError(f"rounds for {label!r} are not 1..n")
        out[label] = (np.array(mean), np.array(err))
    return out


def _nice_max(v: float) -> float:
    if v <= 0:
        return 1.0
    mag = 10 ** np.floor(np.log10(v))
    for step in (1, 2, 2.5, 5, 10):
        if step * mag >= v:
            return float(step * mag)
    return float(10 * mag)


def render_svg(curves: Mapping[str, AggregateCurve], title: str = "", width: int = 640, height: int = 420) -> str:
    """Static line chart of cumulative regret with one-standard-error bands."""
    left, right, top, bottom = 70, 150, 30, 50
    pw, ph = width - left - right, height - top - bottom
    n = max(c.horizon for c in curves.values())
    ymax = _nice_max(max(float(np.max(c.mean + c.stderr)) for c in curves.values()))

    def px(t: np.ndarray) -> np.ndarray:
        return left + (t / max(n, 1)) * pw

    def py(y: np.ndarray) -> np.ndarray:
        return top + ph - (np.clip(y, 0.0, ymax) / ymax) * ph

    def pts(xs, ys) -> str:
        return " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    if title:
        parts.append(f'<text x="{left + pw / 2}" y="18" text-anchor="middle" font-size="13">{_esc(title)}</text>')
    # axes and ticks
    parts.append(f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>')
    parts.append(f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>')
    for k in range(6):
        yv = ymax * k / 5
        y = float(py(np.array(yv)))
        parts.append(f'<line x1="{left - 4}" y1="{y:.2f}" x2="{left}" y2="{y:.2f}" stroke="black"/>')
        parts.append(f'<text x="{left - 6}" y="{y + 4:.2f}" text-anchor="end">{yv:g}</text>')
        tv = n * k / 5
        x = float(px(np.array(tv)))
        parts.append(f'<line x1="{x:.2f}" y1="{top + ph}" x2="{x:.2f}" y2="{top + ph + 4}" stroke="black"/>')
        parts.append(f'<text x="{x:.2f}" y="{top + ph + 16}" text-anchor="middle">{tv:g}</text>')
    parts.append(f'<text x="{left + pw / 2}" y="{height - 12}" text-anchor="middle">round</text>')
    parts.append(
        f'<text x="16" y="{top + ph / 2}" text-anchor="middle" '
        f'transform="rotate(-90 16 {top + ph / 2})">cumulative regret</text>'
    )
    # at most ~400 vertices per curve
    for j, (label, c) in enumerate(curves.items()):
        color = _COLORS[j % len(_COLORS)]
        idx = np.unique(np.linspace(0, c.horizon - 1, min(c.horizon, 400)).astype(int))
        t = px(idx + 1.0)
        lo, hi, mid = py(c.mean[idx] - c.stderr[idx]), py(c.mean[idx] + c.stderr[idx]), py(c.mean[idx])
        band = pts(np.concatenate([t, t[::-1]]), np.concatenate([hi, lo[::-1]]))
        parts.append(f'<polygon points="{band}" fill="{color}" fill-opacity="0.2" stroke="none"/>')
        parts.append(f'<polyline points="{pts(t, mid)}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        ly = top + 12 + 16 * j
        parts.append(f'<line x1="{left + pw + 10}" y1="{ly}" x2="{left + pw + 30}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{left + pw + 35}" y="{ly + 4}">{_esc(label)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return path


def manifest_text(config, names: list[str]) -> str:
    from . import __version__

    seeds = list(range(config.seed, config.seed + config.runs))
    lines = [
        f"version = {__version__}",
        f"config_sha256 = {config.digest()}",
        f"base_seed = {config.seed}",
        f"runs = {config.runs}",
        f"seeds = {seeds[0]}..{seeds[-1]}",
        f"horizon = {config.horizon}",
        f"agents = {', '.join(config.agents)}",
        f"experiments = {', '.join(n for n in names if n) or 'single'}",
        "",
        "# canonical configuration",
        config.to_text(),
    ]
    return "\n".join(lines)


def emit_results(
    curves: Mapping[str, Mapping[str, AggregateCurve]] | Mapping[str, AggregateCurve],
    config,
    path_prefix: str | Path,
    svg: bool = False,
) -> list[Path]:
    """Write one CSV per experiment plus a manifest; optionally an SVG per experiment.

    ``curves`` maps experiment names to ``label -> AggregateCurve``; a plain
    ``label -> AggregateCurve`` mapping is treated as a single unnamed
    experiment written to ``<prefix>.csv``.
    """
    if not curves:
        raise ValueError("no curves to write")
    if all(isinstance(v, AggregateCurve) for v in curves.values()):
        curves = {"": curves}
    prefix = Path(path_prefix)
    written = []
    for name, group in curves.items():
        stem = f"{prefix.name}_{name}" if name else prefix.name
        written.append(_write(prefix.with_name(stem + ".csv"), curves_to_csv(group)))
        if svg:
            written.append(_write(prefix.with_name(stem + ".svg"), render_svg(group, title=name)))
    written.append(_write(prefix.with_name(prefix.name + ".manifest"), manifest_text(config, list(curves))))
    return written
