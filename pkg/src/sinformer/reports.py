"""CSV/JSON report emission and a small static SVG line plotter.

Column layouts are fixed per stage and versioned through the JSON
summary; plots are plain hand-written SVG so outputs stay byte-stable.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict
from pathlib import Path

from .train import TrainReport

REPORT_VERSION = 1

_COLUMNS = {
    "pretrain": ["epoch", "loss_pretrain", "loss_mae", "loss_aux"],
    "finetune": ["epoch", "loss_task", "loss_cls", "loss_ssat", "test_accuracy"],
}


def write_report_csv(path: str | Path, report: TrainReport) -> None:
    columns = _COLUMNS[report.stage]
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(columns)
        for row in report.epoch_rows:
            writer.writerow([row[c] for c in columns])


def write_report_json(path: str | Path, report: TrainReport) -> None:
    payload = asdict(report)
    payload["report_version"] = REPORT_VERSION
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def write_sweep_csv(path: str | Path, x_name: str,
                    rows: list[tuple[float, float]]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow([x_name, "accuracy"])
        writer.writerows(rows)


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi == lo:
        return [lo]
    step = (hi - lo) / (n - 1)
    return [lo + i * step for i in range(n)]


def write_svg_line_plot(path: str | Path, series: dict[str, list[tuple[float, float]]],
                        x_label: str, y_label: str, title: str) -> None:
    """Accuracy-versus-condition line plot with markers, grid and legend."""
    width, height = 640, 420
    ml, mr, mt, mb = 70, 30, 45, 55
    pw, ph = width - ml - mr, height - mt - mb
    xs = [p[0] for pts in series.values() for p in pts]
    ys = [p[1] for pts in series.values() for p in pts]
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = 0.0, max(1.0, max(ys))
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 1.0, x_hi + 1.0

    def px(x: float) -> float:
        return ml + (x - x_lo) / (x_hi - x_lo) * pw

    def py(y: float) -> float:
        return mt + ph - (y - y_lo) / (y_hi - y_lo) * ph

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'font-family="sans-serif" font-size="12">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{width / 2:.0f}" y="22" text-anchor="middle" font-size="15">{title}</text>']
    for tx in _ticks(x_lo, x_hi):
        x = px(tx)
        out.append(f'<line x1="{x:.1f}" y1="{mt}" x2="{x:.1f}" y2="{mt + ph}" '
                   'stroke="#dddddd" stroke-width="1"/>')
        out.append(f'<text x="{x:.1f}" y="{mt + ph + 18}" text-anchor="middle">{tx:g}</text>')
    for ty in _ticks(y_lo, y_hi):
        y = py(ty)
        out.append(f'<line x1="{ml}" y1="{y:.1f}" x2="{ml + pw}" y2="{y:.1f}" '
                   'stroke="#dddddd" stroke-width="1"/>')
        out.append(f'<text x="{ml - 8}" y="{y + 4:.1f}" text-anchor="end">{100 * ty:g}%</text>')
    out.append(f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" '
               'stroke="#444444"/>')
    out.append(f'<text x="{ml + pw / 2:.0f}" y="{height - 12}" text-anchor="middle">{x_label}</text>')
    out.append(f'<text x="18" y="{mt + ph / 2:.0f}" text-anchor="middle" '
               f'transform="rotate(-90 18 {mt + ph / 2:.0f})">{y_label}</text>')
    for i, (name, pts) in enumerate(series.items()):
        color = colors[i % len(colors)]
        pts = sorted(pts)
        coords = " ".join(f"{px(x):.1f},{py(y):.1f}" for x, y in pts)
        out.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="2"/>')
        for x, y in pts:
            out.append(f'<circle cx="{px(x):.1f}" cy="{py(y):.1f}" r="3.2" fill="{color}"/>')
        ly = mt + 16 + 16 * i
        out.append(f'<line x1="{ml + pw - 130}" y1="{ly - 4}" x2="{ml + pw - 105}" y2="{ly - 4}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{ml + pw - 100}" y="{ly}">{name}</text>')
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n")
