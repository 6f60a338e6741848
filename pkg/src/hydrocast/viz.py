"""Dependency-free SVG plot emitters and tidy CSV exports.

Emits observed-vs-predicted series panels and grouped RMSE bar charts as
deterministic SVG 1.1 documents: element order, ids and coordinate formatting
are fixed functions of the input, so outputs are diffable in tests.  Axis
transforms are embedded as ``data-*`` attributes on the plot group, which lets
consumers (and the test suite) recover data values from coordinates.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError
from .evaluate import MetricsReport, VARIABLE_LABELS

#: Fixed palette cycled by series order.
PALETTE = (
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
    "#9467bd", "#8c564b", "#17becf", "#7f7f7f",
)

_WIDTH, _HEIGHT = 960, 540
_MARGIN = {"left": 70, "right": 200, "top": 50, "bottom": 60}

SERIES_ROLES = ("truth", "prediction")


@dataclass(frozen=True)
class SeriesSpec:
    name: str
    timestamps: tuple[dt.date, ...]
    values: tuple[float, ...]
    role: str = "prediction"
    variable: str = "value"

    def __post_init__(self):
        if self.role not in SERIES_ROLES:
            raise ConfigError(f"series role must be one of {SERIES_ROLES}")
        if len(self.timestamps) != len(self.values):
            raise DataError(f"series {self.name!r}: {len(self.timestamps)} timestamps "
                            f"vs {len(self.values)} values")


@dataclass(frozen=True)
class PlotSpec:
    title: str
    series: tuple[SeriesSpec, ...]
    x_label: str = "date"
    y_label: str = "value"


def _esc(text: str) -> str:
    return (
        text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
        .replace('"', "&quot;")
    )


def _y_domain(values: np.ndarray) -> tuple[float, float]:
    """Data range padded by 5%; a constant series pads by 5% of max(|v|, 1)."""
    lo, hi = float(values.min()), float(values.max())
    span = hi - lo
    pad = 0.05 * span if span > 0 else 0.05 * max(abs(hi), 1.0)
    return lo - pad, hi + pad


class _Axes:
    """Linear data->pixel transforms for one plot box."""

    def __init__(self, x0, x1, y0, y1):
        self.x0, self.x1, self.y0, self.y1 = x0, x1, y0, y1
        self.px0 = _MARGIN["left"]
        self.px1 = _WIDTH - _MARGIN["right"]
        self.py0 = _MARGIN["top"]
        self.py1 = _HEIGHT - _MARGIN["bottom"]

    def px(self, x: float) -> float:
        if self.x1 == self.x0:
            return 0.5 * (self.px0 + self.px1)
        return self.px0 + (x - self.x0) / (self.x1 - self.x0) * (self.px1 - self.px0)

    def py(self, y: float) -> float:
        return self.py1 - (y - self.y0) / (self.y1 - self.y0) * (self.py1 - self.py0)

    def group_open(self) -> str:
        return (
            f'<g id="plot" data-x0="{self.x0!r}" data-x1="{self.x1!r}" '
            f'data-y0="{self.y0!r}" data-y1="{self.y1!r}" '
            f'data-px0="{self.px0}" data-px1="{self.px1}" '
            f'data-py0="{self.py0}" data-py1="{self.py1}">'
        )


def _svg_open() -> str:
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{_WIDTH}" height="{_HEIGHT}" viewBox="0 0 {_WIDTH} {_HEIGHT}">'
    )


def _chrome(axes: _Axes, title: str, x_label: str, y_label: str) -> list[str]:
    mid_x = 0.5 * (axes.px0 + axes.px1)
    mid_y = 0.5 * (axes.py0 + axes.py1)
    out = [
        '<rect x="0" y="0" width="100%" height="100%" fill="#ffffff"/>',
        f'<text x="{mid_x:.1f}" y="28" text-anchor="middle" font-size="18" '
        f'font-family="sans-serif">{_esc(title)}</text>',
        f'<text x="{mid_x:.1f}" y="{_HEIGHT - 14}" text-anchor="middle" font-size="13" '
        f'font-family="sans-serif">{_esc(x_label)}</text>',
        f'<text x="20" y="{mid_y:.1f}" text-anchor="middle" font-size="13" '
        f'font-family="sans-serif" transform="rotate(-90 20 {mid_y:.1f})">{_esc(y_label)}</text>',
    ]
    # y grid + tick labels
    for k in range(6):
        y = axes.y0 + (axes.y1 - axes.y0) * k / 5
        py = axes.py(y)
        out.append(
            f'<line x1="{axes.px0}" y1="{py:.4f}" x2="{axes.px1}" y2="{py:.4f}" '
            f'stroke="#dddddd" stroke-width="1"/>'
        )
        out.append(
            f'<text x="{axes.px0 - 8}" y="{py + 4:.4f}" text-anchor="end" font-size="11" '
            f'font-family="sans-serif">{y:.4g}</text>'
        )
    out.append(
        f'<line x1="{axes.px0}" y1="{axes.py1}" x2="{axes.px1}" y2="{axes.py1}" '
        f'stroke="#000000" stroke-width="1"/>'
    )
    out.append(
        f'<line x1="{axes.px0}" y1="{axes.py0}" x2="{axes.px0}" y2="{axes.py1}" '
        f'stroke="#000000" stroke-width="1"/>'
    )
    return out


def _legend(entries: list[tuple[str, str]]) -> list[str]:
    x = _WIDTH - _MARGIN["right"] + 16
    out = []
    for k, (label, color) in enumerate(entries):
        y = _MARGIN["top"] + 16 + 20 * k
        out.append(
            f'<line x1="{x}" y1="{y}" x2="{x + 22}" y2="{y}" stroke="{color}" stroke-width="3"/>'
        )
        out.append(
            f'<text x="{x + 28}" y="{y + 4}" font-size="12" '
            f'font-family="sans-serif">{_esc(label)}</text>'
        )
    return out


def plot_series(spec: PlotSpec) -> str:
    """Render truth/prediction series as one SVG panel.

    X positions are day offsets from the earliest timestamp (stored in
    ``data-start-date``); one polyline per series in spec order.
    """
    if not spec.series:
        raise DataError("plot_series: no series to plot")
    truth_count = sum(1 for s in spec.series if s.role == "truth")
    if truth_count > 1:
        raise ConfigError(f"plot_series: at most one truth series, got {truth_count}")
    all_values = np.concatenate([np.asarray(s.values, dtype=np.float64) for s in spec.series])
    if all_values.size == 0:
        raise DataError("plot_series: series are empty")
    if not np.all(np.isfinite(all_values)):
        raise DataError("plot_series: non-finite values")

    start = min(min(s.timestamps) for s in spec.series)
    end = max(max(s.timestamps) for s in spec.series)
    x1 = float(max((end - start).days, 1))
    y0, y1 = _y_domain(all_values)
    axes = _Axes(0.0, x1, y0, y1)

    out = [_svg_open()]
    out.extend(_chrome(axes, spec.title, spec.x_label, spec.y_label))
    out.append(axes.group_open().replace('id="plot"', f'id="plot" data-start-date="{start.isoformat()}"', 1))
    # x ticks: 5 evenly spaced dates
    for k in range(5):
        x = x1 * k / 4
        px = axes.px(x)
        label = (start + dt.timedelta(days=round(x))).isoformat()
        out.append(
            f'<line x1="{px:.4f}" y1="{axes.py1}" x2="{px:.4f}" y2="{axes.py1 + 5}" '
            f'stroke="#000000" stroke-width="1"/>'
        )
        out.append(
            f'<text x="{px:.4f}" y="{axes.py1 + 18}" text-anchor="middle" font-size="10" '
            f'font-family="sans-serif">{label}</text>'
        )
    legend = []
    for k, series in enumerate(spec.series):
        color = PALETTE[k % len(PALETTE)]
        dash = "" if series.role == "truth" else ' stroke-dasharray="none"'
        pts = " ".join(
            f"{axes.px((ts - start).days):.4f},{axes.py(v):.4f}"
            for ts, v in zip(series.timestamps, series.values)
        )
        out.append(
            f'<polyline id="series-{k}" class="series" data-name="{_esc(series.name)}" '
            f'data-role="{series.role}" fill="none" stroke="{color}" '
            f'stroke-width="1.5"{dash} points="{pts}"/>'
        )
        legend.append((series.name, color))
    out.append("</g>")
    out.extend(_legend(legend))
    out.append("</svg>")
    return "\n".join(out) + "\n"


def plot_rmse_bars(report: MetricsReport) -> str:
    """Grouped bar chart: groups are variables, one bar per report row."""
    if not report.row_names or not report.variable_names:
        raise DataError("plot_rmse_bars: empty report")
    values = [v for v in report.cells.values()]
    vmax = max(values) if values else 1.0
    if vmax <= 0:
        vmax = 1.0
    axes = _Axes(0.0, float(len(report.variable_names)), 0.0, vmax * 1.05)

    out = [_svg_open()]
    out.extend(_chrome(axes, "validation RMSE by variable", "variable", "RMSE"))
    out.append(axes.group_open())
    n_rows = len(report.row_names)
    group_w = (axes.px1 - axes.px0) / len(report.variable_names)
    bar_w = 0.8 * group_w / n_rows
    for vi, var in enumerate(report.variable_names):
        cx = axes.px0 + group_w * (vi + 0.5)
        out.append(
            f'<text x="{cx:.4f}" y="{axes.py1 + 18}" text-anchor="middle" font-size="12" '
            f'font-family="sans-serif">{_esc(VARIABLE_LABELS.get(var, var))}</text>'
        )
        for ri, row in enumerate(report.row_names):
            value = report.value(row, var)
            if value is None:
                continue
            left = cx - 0.4 * group_w + ri * bar_w
            top = axes.py(value)
            height = axes.py1 - top
            color = PALETTE[ri % len(PALETTE)]
            out.append(
                f'<rect class="bar" data-row="{_esc(row)}" data-variable="{_esc(var)}" '
                f'data-value="{value!r}" x="{left:.4f}" y="{top:.4f}" '
                f'width="{bar_w:.4f}" height="{height:.4f}" fill="{color}"/>'
            )
    out.append("</g>")
    out.extend(_legend([(r, PALETTE[i % len(PALETTE)]) for i, r in enumerate(report.row_names)]))
    out.append("</svg>")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# Tidy CSV
# ---------------------------------------------------------------------------

TIDY_HEADER = ("entity", "variable", "timestamp", "value")


def export_tidy_csv(obj) -> str:
    """Long-form CSV for a MetricsReport or an iterable of SeriesSpec.

    Report cells leave the timestamp column empty; series rows carry ISO
    dates.  Output order follows the report's row/variable order.
    """
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TIDY_HEADER)
    if isinstance(obj, MetricsReport):
        for row in obj.row_names:
            for var in obj.variable_names:
                value = obj.value(row, var)
                if value is not None:
                    writer.writerow([row, var, "", repr(float(value))])
    else:
        for series in obj:
            for ts, value in zip(series.timestamps, series.values):
                writer.writerow([series.name, series.variable, ts.isoformat(), repr(float(value))])
    return buf.getvalue()


def import_tidy_report(text: str) -> MetricsReport:
    """Rebuild a MetricsReport from its tidy CSV export."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != list(TIDY_HEADER):
        raise DataError(f"tidy CSV must start with header {','.join(TIDY_HEADER)}")
    rows: list[str] = []
    variables: list[str] = []
    cells: dict[tuple[str, str], float] = {}
    for record in reader:
        if not record:
            continue
        entity, variable, timestamp, value = record
        if timestamp != "":
            raise DataError("tidy CSV contains series rows, not a report")
        if entity not in rows:
            rows.append(entity)
        if variable not in variables:
            variables.append(variable)
        cells[(entity, variable)] = float(value)
    return MetricsReport(tuple(rows), tuple(variables), cells)
