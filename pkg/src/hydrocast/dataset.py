"""Loading, validation, imputation and normalization of CAMELS-style panel data.

Dynamic data is a daily CSV with header ``catchment_id,date,prcp,srad,tmax,
tmin,vp,q`` (one row per catchment-day, dates ISO-8601).  Static data is a CSV
with header ``catchment_id,gauge_lat,gauge_lon,<attr1>,...`` where an empty
cell marks a missing attribute value.  Dynamic series must be complete; the
loader rejects missing or malformed cells outright.
"""

from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, DataError

#: Fixed column order of the six dynamic variables.
DYNAMIC_VARIABLES = ("prcp", "srad", "tmax", "tmin", "vp", "q")

NORMALIZATION_SCHEMES = ("minmax", "zscore")


@dataclass(frozen=True)
class TimeSeriesPanel:
    """Daily matrix of the six dynamic variables for one catchment."""

    catchment_id: str
    dates: tuple[dt.date, ...]
    values: np.ndarray  # [T, 6] float64, columns in DYNAMIC_VARIABLES order

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape != (len(self.dates), len(DYNAMIC_VARIABLES)):
            raise DataError(
                f"panel {self.catchment_id}: values shape {values.shape} does not "
                f"match {len(self.dates)} dates x {len(DYNAMIC_VARIABLES)} variables"
            )
        if not np.all(np.isfinite(values)):
            raise DataError(f"panel {self.catchment_id}: non-finite values present")
        for prev, cur in zip(self.dates, self.dates[1:]):
            if (cur - prev).days != 1:
                raise DataError(
                    f"panel {self.catchment_id}: dates not contiguous daily "
                    f"between {prev.isoformat()} and {cur.isoformat()}"
                )
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def length(self) -> int:
        return len(self.dates)

    def column(self, variable: str) -> np.ndarray:
        return self.values[:, DYNAMIC_VARIABLES.index(variable)]


@dataclass(frozen=True)
class StaticAttributeTable:
    """Per-catchment static attributes plus gauge coordinates. NaN = missing."""

    catchment_ids: tuple[str, ...]
    attribute_names: tuple[str, ...]
    values: np.ndarray  # [N, A] float64
    gauge_lat: np.ndarray  # [N]
    gauge_lon: np.ndarray  # [N]

    def __post_init__(self):
        if len(set(self.catchment_ids)) != len(self.catchment_ids):
            dupes = sorted({c for c in self.catchment_ids if self.catchment_ids.count(c) > 1})
            raise DataError(f"duplicate catchment ids in static table: {dupes}")
        values = np.asarray(self.values, dtype=np.float64).reshape(
            len(self.catchment_ids), len(self.attribute_names)
        )
        lat = np.asarray(self.gauge_lat, dtype=np.float64)
        lon = np.asarray(self.gauge_lon, dtype=np.float64)
        if lat.shape != (len(self.catchment_ids),) or lon.shape != lat.shape:
            raise DataError("gauge coordinate arrays do not match catchment count")
        for arr in (values, lat, lon):
            arr.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "gauge_lat", lat)
        object.__setattr__(self, "gauge_lon", lon)

    def row_index(self, catchment_id: str) -> int:
        try:
            return self.catchment_ids.index(catchment_id)
        except ValueError:
            raise DataError(f"catchment {catchment_id!r} not in static table") from None

    def subset(self, ids: Iterable[str]) -> "StaticAttributeTable":
        idx = [self.row_index(c) for c in ids]
        return StaticAttributeTable(
            catchment_ids=tuple(self.catchment_ids[i] for i in idx),
            attribute_names=self.attribute_names,
            values=self.values[idx].copy(),
            gauge_lat=self.gauge_lat[idx].copy(),
            gauge_lon=self.gauge_lon[idx].copy(),
        )


@dataclass(frozen=True)
class NormalizationSpec:
    """Per-column scaling statistics fitted on training catchments only.

    For the ``minmax`` scheme each column maps (a, b) = (min, max) so that the
    training minimum goes to 0 and the maximum to 1; values outside the
    training range are not clipped.  For ``zscore`` the pair is (mean, std).
    Degenerate columns (zero span / zero std) map every input to constant 0
    and invert back to the stored location parameter.
    """

    scheme: str
    dynamic_stats: tuple[tuple[str, float, float], ...]  # (variable, a, b)
    static_stats: tuple[tuple[str, float, float], ...]  # (attribute, a, b)

    def __post_init__(self):
        if self.scheme not in NORMALIZATION_SCHEMES:
            raise ConfigError(f"unknown normalization scheme {self.scheme!r}")
        for name, a, b in self.dynamic_stats + self.static_stats:
            if self.scheme == "minmax" and b < a:
                raise DataError(f"normalization column {name!r}: max {b} < min {a}")

    def dynamic_pairs(self) -> dict[str, tuple[float, float]]:
        return {name: (a, b) for name, a, b in self.dynamic_stats}

    def static_pairs(self) -> dict[str, tuple[float, float]]:
        return {name: (a, b) for name, a, b in self.static_stats}


# ---------------------------------------------------------------------------
# CSV loading
# ---------------------------------------------------------------------------

def _parse_date(text: str, where: str) -> dt.date:
    try:
        return dt.date.fromisoformat(text)
    except ValueError:
        raise DataError(f"{where}: invalid ISO date {text!r}") from None


def _parse_float(text: str, where: str) -> float:
    if text == "":
        raise DataError(f"{where}: empty value (missing dynamic entries are rejected)")
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"{where}: not a number: {text!r}") from None
    if not math.isfinite(value):
        raise DataError(f"{where}: non-finite value {text!r}")
    return value


def load_timeseries_csv(path, schema: dict[str, str] | None = None) -> list[TimeSeriesPanel]:
    """Load the dynamic CSV into one panel per catchment, sorted by id.

    ``schema`` optionally maps canonical column names (``catchment_id``,
    ``date``, the six variables) to the column names used in the file.
    Rows may arrive unsorted; they are sorted by date per catchment.  A
    duplicated date, a calendar gap, an unknown header column or any
    malformed cell raises DataError identifying the offender.
    """
    schema = dict(schema or {})
    canonical = ("catchment_id", "date") + DYNAMIC_VARIABLES
    file_names = {name: schema.get(name, name) for name in canonical}

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file")
        known = set(file_names.values())
        unknown = [c for c in header if c not in known]
        if unknown:
            raise DataError(f"{path}: unknown column(s) {unknown}")
        missing = [file_names[c] for c in canonical if file_names[c] not in header]
        if missing:
            raise DataError(f"{path}: missing required column(s) {missing}")
        col = {name: header.index(file_names[name]) for name in canonical}

        rows_by_catchment: dict[str, list[tuple[dt.date, tuple[float, ...]]]] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            where = f"{path}:{lineno}"
            if len(row) != len(header):
                raise DataError(f"{where}: expected {len(header)} fields, got {len(row)}")
            cid = row[col["catchment_id"]]
            if cid == "":
                raise DataError(f"{where}: empty catchment id")
            date = _parse_date(row[col["date"]], where)
            vals = tuple(_parse_float(row[col[v]], where) for v in DYNAMIC_VARIABLES)
            rows_by_catchment.setdefault(cid, []).append((date, vals))

    panels = []
    for cid in sorted(rows_by_catchment):
        rows = sorted(rows_by_catchment[cid], key=lambda r: r[0])
        for (d1, _), (d2, _) in zip(rows, rows[1:]):
            if d1 == d2:
                raise DataError(f"{path}: catchment {cid}: duplicated date {d1.isoformat()}")
            if (d2 - d1).days != 1:
                raise DataError(
                    f"{path}: catchment {cid}: gap between "
                    f"{d1.isoformat()} and {d2.isoformat()}"
                )
        dates = tuple(r[0] for r in rows)
        values = np.array([r[1] for r in rows], dtype=np.float64)
        panels.append(TimeSeriesPanel(cid, dates, values))
    return panels


def load_static_csv(path) -> StaticAttributeTable:
    """Load the static attribute CSV. Empty attribute cells become NaN."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file")
        required = ("catchment_id", "gauge_lat", "gauge_lon")
        if tuple(header[:3]) != required:
            raise DataError(f"{path}: header must start with {','.join(required)}")
        attr_names = tuple(header[3:])
        if len(set(attr_names)) != len(attr_names):
            raise DataError(f"{path}: duplicate attribute columns")

        ids, lats, lons, rows = [], [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            where = f"{path}:{lineno}"
            if len(row) != len(header):
                raise DataError(f"{where}: expected {len(header)} fields, got {len(row)}")
            if row[0] == "":
                raise DataError(f"{where}: empty catchment id")
            ids.append(row[0])
            lats.append(_parse_float(row[1], where))
            lons.append(_parse_float(row[2], where))
            attrs = [math.nan if cell == "" else _parse_float(cell, where) for cell in row[3:]]
            rows.append(attrs)

    values = np.array(rows, dtype=np.float64).reshape(len(ids), len(attr_names))
    return StaticAttributeTable(tuple(ids), attr_names, values, np.array(lats), np.array(lons))


def _fmt(x: float) -> str:
    return repr(float(x))


def write_timeseries_csv(panels: Sequence[TimeSeriesPanel], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(("catchment_id", "date") + DYNAMIC_VARIABLES)
        for panel in panels:
            for t, date in enumerate(panel.dates):
                writer.writerow(
                    [panel.catchment_id, date.isoformat()]
                    + [_fmt(v) for v in panel.values[t]]
                )


def write_static_csv(table: StaticAttributeTable, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(("catchment_id", "gauge_lat", "gauge_lon") + table.attribute_names)
        for i, cid in enumerate(table.catchment_ids):
            cells = ["" if math.isnan(v) else _fmt(v) for v in table.values[i]]
            writer.writerow([cid, _fmt(table.gauge_lat[i]), _fmt(table.gauge_lon[i])] + cells)


# ---------------------------------------------------------------------------
# Cleaning and feature helpers
# ---------------------------------------------------------------------------

def slice_date_range(panel: TimeSeriesPanel, start: dt.date, end: dt.date) -> TimeSeriesPanel:
    """Inclusive date slice; the result has T = (end - start).days + 1 rows."""
    if start > end:
        raise DataError(f"slice start {start.isoformat()} after end {end.isoformat()}")
    if start < panel.dates[0] or end > panel.dates[-1]:
        raise DataError(
            f"panel {panel.catchment_id}: requested [{start.isoformat()}, {end.isoformat()}] "
            f"outside span [{panel.dates[0].isoformat()}, {panel.dates[-1].isoformat()}]"
        )
    i = (start - panel.dates[0]).days
    j = (end - panel.dates[0]).days + 1
    return TimeSeriesPanel(panel.catchment_id, panel.dates[i:j], panel.values[i:j].copy())


def impute_static_means(table: StaticAttributeTable) -> StaticAttributeTable:
    """Replace each missing static entry with the mean of its column."""
    values = table.values.copy()
    for j, name in enumerate(table.attribute_names):
        col = values[:, j]
        missing = np.isnan(col)
        if missing.all():
            raise DataError(f"static attribute {name!r}: all values missing")
        if missing.any():
            col[missing] = col[~missing].mean()
    return replace(table, values=values)


def encode_month_ordinal(dates: Sequence[dt.date]) -> np.ndarray:
    """Map month 1..12 onto [0, 1]: January -> 0, December -> 1."""
    return np.array([(d.month - 1) / 11.0 for d in dates], dtype=np.float64)


# ---------------------------------------------------------------------------
# Normalization
# ---------------------------------------------------------------------------

def _column_stats(column: np.ndarray, scheme: str) -> tuple[float, float]:
    if scheme == "minmax":
        return float(column.min()), float(column.max())
    return float(column.mean()), float(column.std())


def fit_normalization(
    panels: Sequence[TimeSeriesPanel],
    table: StaticAttributeTable | None = None,
    scheme: str = "minmax",
) -> NormalizationSpec:
    """Fit per-column statistics over the given (training) panels and table.

    Statistics are pooled globally across catchments per variable so a single
    regional model can serve all basins.  Pass the static table already
    restricted to training catchments (see StaticAttributeTable.subset).
    """
    if scheme not in NORMALIZATION_SCHEMES:
        raise ConfigError(f"unknown normalization scheme {scheme!r}")
    if not panels:
        raise DataError("fit_normalization: empty training panel set")
    stacked = np.concatenate([p.values for p in panels], axis=0)
    dynamic = tuple(
        (name,) + _column_stats(stacked[:, j], scheme)
        for j, name in enumerate(DYNAMIC_VARIABLES)
    )
    static: tuple[tuple[str, float, float], ...] = ()
    if table is not None:
        if np.isnan(table.values).any():
            raise DataError("fit_normalization: static table has missing entries; impute first")
        static = tuple(
            (name,) + _column_stats(table.values[:, j], scheme)
            for j, name in enumerate(table.attribute_names)
        )
    return NormalizationSpec(scheme, dynamic, static)


def _scale_columns(values, names, pairs, scheme, invert):
    out = np.array(values, dtype=np.float64)
    for j, name in enumerate(names):
        if name not in pairs:
            raise DataError(f"normalization spec has no column {name!r}")
        a, b = pairs[name]
        span = (b - a) if scheme == "minmax" else b
        if span == 0.0:
            out[:, j] = a if invert else 0.0
        elif invert:
            out[:, j] = out[:, j] * span + a
        else:
            out[:, j] = (out[:, j] - a) / span
    return out


def apply_normalization(spec: NormalizationSpec, data):
    """Scale a TimeSeriesPanel or StaticAttributeTable by the fitted spec.

    Values outside the training range are not clipped.  Gauge coordinates
    are left untouched (the spatial encoding maps them separately).
    """
    if isinstance(data, TimeSeriesPanel):
        scaled = _scale_columns(
            data.values, DYNAMIC_VARIABLES, spec.dynamic_pairs(), spec.scheme, invert=False
        )
        return TimeSeriesPanel(data.catchment_id, data.dates, scaled)
    if isinstance(data, StaticAttributeTable):
        scaled = _scale_columns(
            data.values, data.attribute_names, spec.static_pairs(), spec.scheme, invert=False
        )
        return replace(data, values=scaled)
    raise TypeError(f"apply_normalization: unsupported type {type(data).__name__}")


def invert_normalization(spec: NormalizationSpec, data):
    """Inverse of apply_normalization (degenerate columns restore the constant)."""
    if isinstance(data, TimeSeriesPanel):
        raw = _scale_columns(
            data.values, DYNAMIC_VARIABLES, spec.dynamic_pairs(), spec.scheme, invert=True
        )
        return TimeSeriesPanel(data.catchment_id, data.dates, raw)
    if isinstance(data, StaticAttributeTable):
        raw = _scale_columns(
            data.values, data.attribute_names, spec.static_pairs(), spec.scheme, invert=True
        )
        return replace(data, values=raw)
    raise TypeError(f"invert_normalization: unsupported type {type(data).__name__}")


def normalize_array(spec: NormalizationSpec, values: np.ndarray, variables: Sequence[str]) -> np.ndarray:
    """Normalize a [..., len(variables)] array of dynamic values."""
    flat = np.asarray(values, dtype=np.float64).reshape(-1, len(variables))
    out = _scale_columns(flat, variables, spec.dynamic_pairs(), spec.scheme, invert=False)
    return out.reshape(np.shape(values))


SPEC_HEADER = "# hydrocast normalization spec v1"


def save_normalization_spec(spec: NormalizationSpec, path) -> None:
    """Write the spec as a key-value text file.

    Format: one header comment line, then ``scheme=<name>`` and one
    ``dynamic.<var>=<a>,<b>`` / ``static.<attr>=<a>,<b>`` line per column,
    where (a, b) is (min, max) for minmax and (mean, std) for zscore.
    """
    lines = [SPEC_HEADER, f"scheme={spec.scheme}"]
    for name, a, b in spec.dynamic_stats:
        lines.append(f"dynamic.{name}={_fmt(a)},{_fmt(b)}")
    for name, a, b in spec.static_stats:
        lines.append(f"static.{name}={_fmt(a)},{_fmt(b)}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_normalization_spec(path) -> NormalizationSpec:
    scheme = None
    dynamic, static = [], []
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            if key == "scheme":
                scheme = value
            elif key.startswith(("dynamic.", "static.")):
                group, _, name = key.partition(".")
                a_txt, _, b_txt = value.partition(",")
                entry = (name, float(a_txt), float(b_txt))
                (dynamic if group == "dynamic" else static).append(entry)
            else:
                raise DataError(f"{path}: unrecognized spec line {line!r}")
    if scheme is None:
        raise DataError(f"{path}: missing scheme line")
    return NormalizationSpec(scheme, tuple(dynamic), tuple(static))
