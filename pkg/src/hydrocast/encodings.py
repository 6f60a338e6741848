"""Known-input feature generation: linear space/time ramps, Fourier and
Legendre seasonal features, month encoding and static-attribute broadcast.

All features are deterministic functions of the panel's date axis and the
catchment's static row, so they are available for past and future timesteps
alike ("known inputs").  Column order is fixed and documented in
``assemble_known_inputs``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataset import StaticAttributeTable, TimeSeriesPanel, encode_month_ordinal
from .errors import ConfigError, DataError

#: Extra Fourier periods, in days, for higher-frequency variability.
DEFAULT_EXTRA_PERIODS = (8.0, 16.0, 32.0, 64.0, 128.0)
DEFAULT_LEGENDRE_DEGREES = (2, 3, 4)


@dataclass(frozen=True)
class EncodingConfig:
    """Which encoding families are active.

    Defaults correspond to the full feature set: linear space-time ramps,
    annual Fourier pair, extra Fourier pairs for 8..128-day periods,
    Legendre degrees 2-4, month ordinal and static attributes.  Disable a
    family by turning its flag off or passing an empty tuple.
    """

    use_linear_space: bool = True
    use_linear_time: bool = True
    use_annual_fourier: bool = True
    extra_fourier_periods: tuple[float, ...] = DEFAULT_EXTRA_PERIODS
    legendre_degrees: tuple[int, ...] = DEFAULT_LEGENDRE_DEGREES
    annual_period_days: float = 365.25
    include_static: bool = True
    include_month: bool = True

    def __post_init__(self):
        object.__setattr__(self, "extra_fourier_periods", tuple(float(p) for p in self.extra_fourier_periods))
        object.__setattr__(self, "legendre_degrees", tuple(int(d) for d in self.legendre_degrees))
        for p in self.extra_fourier_periods + (self.annual_period_days,):
            if not p > 1.0:
                raise ConfigError(f"Fourier period must exceed 1 day, got {p}")
        for d in self.legendre_degrees:
            if d < 2:
                raise ConfigError(f"Legendre degree must be >= 2, got {d}")


#: No encodings at all ("just time series").
def no_encodings() -> EncodingConfig:
    return EncodingConfig(
        use_linear_space=False,
        use_linear_time=False,
        use_annual_fourier=False,
        extra_fourier_periods=(),
        legendre_degrees=(),
        include_static=False,
        include_month=False,
    )


@dataclass(frozen=True)
class BoundingBox:
    """Training-catchment gauge bounding box used by the spatial ramp."""

    lat_min: float
    lat_max: float
    lon_min: float
    lon_max: float


def spatial_bounds(table: StaticAttributeTable, ids: Sequence[str] | None = None) -> BoundingBox:
    """Bounding box of gauge coordinates over the given (training) ids."""
    if ids is None:
        lat, lon = table.gauge_lat, table.gauge_lon
    else:
        idx = [table.row_index(c) for c in ids]
        lat, lon = table.gauge_lat[idx], table.gauge_lon[idx]
    if lat.size == 0:
        raise DataError("spatial_bounds: no catchments given")
    return BoundingBox(float(lat.min()), float(lat.max()), float(lon.min()), float(lon.max()))


@dataclass(frozen=True)
class EncodingMatrix:
    """Named [T x F] feature matrix with a per-feature static flag."""

    feature_names: tuple[str, ...]
    values: np.ndarray
    static_flags: tuple[bool, ...]

    def __post_init__(self):
        if len(set(self.feature_names)) != len(self.feature_names):
            raise ConfigError("encoding feature names must be unique")
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[1] != len(self.feature_names):
            raise ConfigError("encoding matrix width does not match feature names")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)


def linear_time(T: int) -> np.ndarray:
    """Ramp t/(T-1) over the series; a single timestep maps to 0."""
    if T < 1:
        raise ConfigError(f"linear_time: T must be >= 1, got {T}")
    if T == 1:
        return np.zeros(1)
    return np.arange(T, dtype=np.float64) / (T - 1)


def linear_space(lat: float, lon: float, bounds: BoundingBox) -> tuple[float, float]:
    """Affine map of gauge (lat, lon) onto the training unit square.

    Validation catchments outside the box map outside [0, 1] without clipping.
    """
    dlat = bounds.lat_max - bounds.lat_min
    dlon = bounds.lon_max - bounds.lon_min
    if dlat == 0.0 or dlon == 0.0:
        raise DataError("linear_space: degenerate training bounding box")
    return (lat - bounds.lat_min) / dlat, (lon - bounds.lon_min) / dlon


def fourier_features(T: int, periods: Sequence[float]) -> np.ndarray:
    """Columns sin(2*pi*d/P), cos(2*pi*d/P) per period, d = day index from 0."""
    for p in periods:
        if p <= 0:
            raise ConfigError(f"fourier_features: period must be positive, got {p}")
    d = np.arange(T, dtype=np.float64)
    cols = []
    for p in periods:
        phase = 2.0 * np.pi * d / p
        cols.append(np.sin(phase))
        cols.append(np.cos(phase))
    return np.stack(cols, axis=1) if cols else np.zeros((T, 0))


def legendre_polynomials(x: np.ndarray, degrees: Sequence[int]) -> np.ndarray:
    """Evaluate P_n(x) for each requested degree via the Bonnet recurrence.

    (n+1) P_{n+1}(x) = (2n+1) x P_n(x) - n P_{n-1}(x), with P_0 = 1, P_1 = x.
    """
    x = np.asarray(x, dtype=np.float64)
    degrees = tuple(int(d) for d in degrees)
    max_deg = max(degrees, default=0)
    polys = [np.ones_like(x), x]
    for n in range(1, max_deg):
        polys.append(((2 * n + 1) * x * polys[n] - n * polys[n - 1]) / (n + 1))
    return np.stack([polys[d] for d in degrees], axis=1) if degrees else np.zeros(x.shape + (0,))


def legendre_features(T: int, degrees: Sequence[int]) -> np.ndarray:
    """Legendre polynomials of x = 2t/(T-1) - 1, one column per degree."""
    if T < 2:
        raise ConfigError(f"legendre_features: T must be >= 2, got {T}")
    x = 2.0 * np.arange(T, dtype=np.float64) / (T - 1) - 1.0
    return legendre_polynomials(x, degrees)


def _period_label(p: float) -> str:
    return f"{p:g}"


def assemble_known_inputs(
    config: EncodingConfig,
    panel: TimeSeriesPanel,
    statics: StaticAttributeTable | None = None,
    bounds: BoundingBox | None = None,
) -> EncodingMatrix:
    """Build the known-input matrix for one catchment.

    Column order is fixed: linear time, linear space (lat then lon, broadcast
    over T), annual Fourier (sin, cos), extra Fourier (sin, cos per period in
    config order), Legendre (per degree), month ordinal, static attributes in
    table order.  The same config always yields the same column layout, so
    checkpoints trained against a manifest stay portable.
    """
    T = panel.length
    names: list[str] = []
    flags: list[bool] = []
    cols: list[np.ndarray] = []

    def add(name: str, column: np.ndarray, static: bool):
        names.append(name)
        flags.append(static)
        cols.append(column)

    if config.use_linear_time:
        add("linear_time", linear_time(T), False)
    if config.use_linear_space:
        if statics is None or bounds is None:
            raise ConfigError("use_linear_space requires a static table and bounds")
        i = statics.row_index(panel.catchment_id)
        u, v = linear_space(float(statics.gauge_lat[i]), float(statics.gauge_lon[i]), bounds)
        add("linear_lat", np.full(T, u), True)
        add("linear_lon", np.full(T, v), True)
    if config.use_annual_fourier:
        annual = fourier_features(T, (config.annual_period_days,))
        label = _period_label(config.annual_period_days)
        add(f"sin_p{label}", annual[:, 0], False)
        add(f"cos_p{label}", annual[:, 1], False)
    if config.extra_fourier_periods:
        extra = fourier_features(T, config.extra_fourier_periods)
        for k, p in enumerate(config.extra_fourier_periods):
            add(f"sin_p{_period_label(p)}", extra[:, 2 * k], False)
            add(f"cos_p{_period_label(p)}", extra[:, 2 * k + 1], False)
    if config.legendre_degrees:
        leg = legendre_features(T, config.legendre_degrees)
        for k, d in enumerate(config.legendre_degrees):
            add(f"legendre_d{d}", leg[:, k], False)
    if config.include_month:
        add("month", encode_month_ordinal(panel.dates), False)
    if config.include_static:
        if statics is None:
            raise ConfigError("include_static requires a static table")
        i = statics.row_index(panel.catchment_id)
        for j, attr in enumerate(statics.attribute_names):
            add(f"static_{attr}", np.full(T, statics.values[i, j]), True)

    values = np.stack(cols, axis=1) if cols else np.zeros((T, 0))
    return EncodingMatrix(tuple(names), values, tuple(flags))


def write_feature_manifest(names: Sequence[str], path) -> None:
    """One feature name per line, in model input order."""
    with open(path, "w", encoding="utf-8") as fh:
        for name in names:
            fh.write(name + "\n")


def read_feature_manifest(path) -> tuple[str, ...]:
    with open(path, encoding="utf-8") as fh:
        return tuple(line.rstrip("\n") for line in fh if line.strip())
