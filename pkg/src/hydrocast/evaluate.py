"""Validation metrics, encoding-ablation experiments, cross-model comparison
from forecast files, and a seeded synthetic dataset generator for desk-scale
experiments.

RMSE is computed per variable on the normalized scale, pooled over every
(catchment, window, horizon-step) element of the validation set, yielding one
number per variable per model or configuration.
"""

from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .dataset import (
    DYNAMIC_VARIABLES,
    StaticAttributeTable,
    TimeSeriesPanel,
    apply_normalization,
    fit_normalization,
    impute_static_means,
)
from .encodings import (
    BoundingBox,
    EncodingConfig,
    no_encodings,
    spatial_bounds,
)
from .errors import ConfigError, DataError, NumericalError
from .nn import ModelParams, init_model, model_forward
from .train import FitResult, TrainConfig, fit, select_checkpoint
from .windowing import (
    FeatureRoles,
    SplitAssignment,
    WindowDataset,
    WindowSpec,
    batch_indices,
    build_window_dataset,
    select_feature_roles,
    spatial_split,
)

#: Display labels used in comparison tables, in fixed column order.
VARIABLE_LABELS = {
    "prcp": "P", "srad": "SR", "tmax": "Tmax", "tmin": "Tmin", "vp": "VP", "q": "Q",
}


# ---------------------------------------------------------------------------
# Metrics report
# ---------------------------------------------------------------------------

@dataclass
class MetricsReport:
    """RMSE keyed by (row name, variable name); absent cells are omitted."""

    row_names: tuple[str, ...]
    variable_names: tuple[str, ...]
    cells: dict[tuple[str, str], float] = field(default_factory=dict)
    metadata: dict[str, str] = field(default_factory=dict)

    def value(self, row: str, variable: str) -> float | None:
        return self.cells.get((row, variable))

    def set(self, row: str, variable: str, value: float) -> None:
        if value < 0:
            raise DataError(f"RMSE must be non-negative, got {value}")
        self.cells[(row, variable)] = float(value)

    def best_rows(self) -> dict[str, str]:
        """Row with the lowest value per variable (Table-1 style highlighting)."""
        best = {}
        for var in self.variable_names:
            present = [(self.cells[(r, var)], r) for r in self.row_names if (r, var) in self.cells]
            if present:
                best[var] = min(present)[1]
        return best


def render_text_table(report: MetricsReport, flag_best: bool = True) -> str:
    """Aligned text table, one row per model/config, lowest cell per column
    marked with ``*``."""
    best = report.best_rows() if flag_best else {}
    labels = [VARIABLE_LABELS.get(v, v) for v in report.variable_names]
    name_w = max([len("model")] + [len(r) for r in report.row_names])
    header = "model".ljust(name_w) + "".join(f"  {lab:>9}" for lab in labels)
    lines = [header]
    for row in report.row_names:
        cells = []
        for var in report.variable_names:
            value = report.value(row, var)
            if value is None:
                cells.append(f"  {'--':>9}")
            else:
                mark = "*" if best.get(var) == row else " "
                cells.append(f"  {mark}{value:>8.4f}")
        lines.append(row.ljust(name_w) + "".join(cells))
    return "\n".join(lines) + "\n"


def rmse_per_variable(
    predictions: np.ndarray, targets: np.ndarray, variable_names: tuple[str, ...]
) -> np.ndarray:
    """Pooled per-variable RMSE over all leading axes (windows, horizon steps)."""
    predictions = np.asarray(predictions, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if predictions.shape != targets.shape:
        raise DataError(f"rmse shapes differ: {predictions.shape} vs {targets.shape}")
    if predictions.shape[-1] != len(variable_names):
        raise DataError(
            f"last axis {predictions.shape[-1]} does not match {len(variable_names)} variables"
        )
    diff = (predictions - targets).reshape(-1, len(variable_names))
    return np.sqrt(np.mean(diff * diff, axis=0))


def predict_dataset(
    params: ModelParams, data: WindowDataset, batch_size: int = 256
) -> tuple[np.ndarray, np.ndarray]:
    """Inference-mode predictions and aligned targets for every window."""
    preds, targets = [], []
    for idx in batch_indices(data.n_windows, batch_size, seed=0, epoch=0, shuffle=False):
        batch = data.gather(idx)
        out, _ = model_forward(params, batch, training=False)
        preds.append(out)
        targets.append(batch.targets)
    return np.concatenate(preds), np.concatenate(targets)


# ---------------------------------------------------------------------------
# Experiment pipeline shared by ablation runs and the CLI
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentProtocol:
    """Everything an experiment run needs besides the data and encodings."""

    window: WindowSpec = WindowSpec()
    mode: str = "rainfall_runoff"
    split_ratio: float = 0.8
    split_seed: int = 17
    train_count: int | None = None
    normalization: str = "minmax"
    encoder_size: int = 64
    hidden_size: int = 64
    dropout_rate: float = 0.2
    cell_activation: str = "selu"
    init_seed: int = 101
    train: TrainConfig = field(default_factory=TrainConfig)


@dataclass
class PreparedData:
    """Split, normalized panels/table and spatial bounds for one experiment."""

    split: SplitAssignment
    norm_spec: object
    panels: dict[str, TimeSeriesPanel]  # normalized, keyed by catchment id
    table: StaticAttributeTable | None  # imputed + normalized
    bounds: BoundingBox | None


def prepare_experiment_data(
    panels: list[TimeSeriesPanel],
    table: StaticAttributeTable | None,
    protocol: ExperimentProtocol,
) -> PreparedData:
    """Split by location, fit normalization on training catchments, scale all."""
    by_id = {p.catchment_id: p for p in panels}
    split = spatial_split(
        list(by_id), protocol.split_ratio, protocol.split_seed, protocol.train_count
    )
    imputed = impute_static_means(table) if table is not None else None
    train_table = imputed.subset(split.train_ids) if imputed is not None else None
    spec = fit_normalization(
        [by_id[c] for c in split.train_ids], train_table, protocol.normalization
    )
    norm_panels = {cid: apply_normalization(spec, p) for cid, p in by_id.items()}
    norm_table = apply_normalization(spec, imputed) if imputed is not None else None
    bounds = spatial_bounds(imputed, split.train_ids) if imputed is not None else None
    return PreparedData(split, spec, norm_panels, norm_table, bounds)


@dataclass
class ExperimentResult:
    fit: FitResult
    selected: object  # Checkpoint chosen by the overfitting rule
    feature_names: tuple[str, ...]
    train_ds: WindowDataset
    val_ds: WindowDataset


def run_experiment(
    prepared: PreparedData,
    encoding_config: EncodingConfig,
    protocol: ExperimentProtocol,
) -> ExperimentResult:
    """Train one model on the prepared data under the given protocol."""
    roles = select_feature_roles(protocol.mode)
    train_ds, names = build_window_dataset(
        prepared.panels, prepared.split.train_ids, roles, protocol.window,
        encoding_config, prepared.table, prepared.bounds,
    )
    val_ds, _ = build_window_dataset(
        prepared.panels, prepared.split.val_ids, roles, protocol.window,
        encoding_config, prepared.table, prepared.bounds,
    )
    params = init_model(
        input_size=len(names) + len(roles.observed),
        encoder_size=protocol.encoder_size,
        hidden_size=protocol.hidden_size,
        output_size=len(roles.targets),
        seed=protocol.init_seed,
        dropout_rate=protocol.dropout_rate,
        cell_activation=protocol.cell_activation,
    )
    result = fit(params, train_ds, val_ds, protocol.train, names, encoding_config)
    selected = select_checkpoint(
        result.records, result.final, result.best, protocol.train.overfit_factor
    )
    return ExperimentResult(result, selected, names, train_ds, val_ds)


# ---------------------------------------------------------------------------
# Ablation grid
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AblationGrid:
    variants: tuple[tuple[str, EncodingConfig], ...]

    def __post_init__(self):
        names = [name for name, _ in self.variants]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate ablation variant names: {names}")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.variants)


def default_ablation_grid(with_statics: bool = False) -> AblationGrid:
    """The four encoding configurations, optionally crossed with statics.

    just_ts: no known inputs at all; linear: space-time ramps; annual: ramps
    plus the one-year Fourier pair; extra: annual plus shorter-period Fourier
    pairs and Legendre polynomials.
    """
    base = no_encodings()
    variants = [
        ("just_ts", base),
        ("linear", replace(base, use_linear_space=True, use_linear_time=True)),
        ("annual", replace(base, use_linear_space=True, use_linear_time=True,
                           use_annual_fourier=True)),
        ("extra", replace(base, use_linear_space=True, use_linear_time=True,
                          use_annual_fourier=True,
                          extra_fourier_periods=(8.0, 16.0, 32.0, 64.0, 128.0),
                          legendre_degrees=(2, 3, 4))),
    ]
    if with_statics:
        variants += [
            (f"{name}_static", replace(cfg, include_static=True)) for name, cfg in variants
        ]
    return AblationGrid(tuple(variants))


def run_ablation(
    panels: list[TimeSeriesPanel],
    table: StaticAttributeTable | None,
    grid: AblationGrid,
    protocol: ExperimentProtocol,
) -> MetricsReport:
    """Train one model per grid variant under identical seeds and protocol.

    All variants share the split, normalization and initial seed; evaluation
    is per-variable RMSE on the common validation windows.  A variant that
    fails to train is marked failed in the metadata and the rest proceed.
    """
    roles = select_feature_roles(protocol.mode)
    prepared = prepare_experiment_data(panels, table, protocol)
    report = MetricsReport(
        row_names=grid.names,
        variable_names=roles.targets,
        metadata={
            "mode": protocol.mode,
            "split_seed": str(protocol.split_seed),
            "split_ratio": str(protocol.split_ratio),
            "context_len": str(protocol.window.context_len),
            "horizon": str(protocol.window.horizon),
            "normalization": protocol.normalization,
        },
    )
    for name, enc_cfg in grid.variants:
        try:
            outcome = run_experiment(prepared, enc_cfg, protocol)
            preds, targets = predict_dataset(
                outcome.selected.params, outcome.val_ds, protocol.train.batch_size
            )
            for var, value in zip(roles.targets, rmse_per_variable(preds, targets, roles.targets)):
                report.set(name, var, value)
        except (ConfigError, DataError, NumericalError) as exc:
            report.metadata[f"failed.{name}"] = str(exc)
    return report


# ---------------------------------------------------------------------------
# External forecast comparison (Table-1 style)
# ---------------------------------------------------------------------------

FORECAST_HEADER = ("catchment_id", "date", "variable", "value")


def read_forecast_csv(path) -> dict[tuple[str, dt.date, str], float]:
    """Long-form forecast file: catchment_id,date,variable,value."""
    out: dict[tuple[str, dt.date, str], float] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != list(FORECAST_HEADER):
            raise DataError(f"{path}: expected header {','.join(FORECAST_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise DataError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
            cid, date_txt, var, value_txt = row
            try:
                date = dt.date.fromisoformat(date_txt)
                value = float(value_txt)
            except ValueError:
                raise DataError(f"{path}:{lineno}: malformed row {row}") from None
            key = (cid, date, var)
            if key in out:
                raise DataError(
                    f"{path}:{lineno}: duplicate forecast for {cid} {date_txt} {var}"
                )
            out[key] = value
    return out


def write_forecast_csv(rows, path) -> None:
    """Write (catchment_id, date, variable, value) rows in the shared format."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(FORECAST_HEADER)
        for cid, date, var, value in rows:
            writer.writerow([cid, date.isoformat(), var, repr(float(value))])


def panel_forecast_rows(panel: TimeSeriesPanel, dates=None, variables=DYNAMIC_VARIABLES):
    """Truth rows in forecast format (used for oracle tests and baselines)."""
    wanted = set(dates) if dates is not None else None
    for t, date in enumerate(panel.dates):
        if wanted is not None and date not in wanted:
            continue
        for var in variables:
            yield panel.catchment_id, date, var, float(panel.column(var)[t])


def model_forecast_rows(
    params: ModelParams,
    data: WindowDataset,
    variables: tuple[str, ...],
    batch_size: int = 256,
):
    """One-step-ahead predictions as forecast rows.

    Only the first horizon step of each window is exported so every
    (catchment, date, variable) appears at most once under stride 1.
    """
    preds, _ = predict_dataset(params, data, batch_size)
    L = data.spec.context_len
    rows = []
    for w in range(data.n_windows):
        ci, s = data.index[w]
        arrays = data.catchments[ci]
        if arrays.dates is None:
            raise ConfigError("window dataset lacks dates; build it with panels")
        date = arrays.dates[s + L]
        for j, var in enumerate(variables):
            rows.append((arrays.catchment_id, date, var, float(preds[w, 0, j])))
    return rows


def compare_external(
    truth_panels: list[TimeSeriesPanel],
    forecast_files: list[tuple[str, object]],
    eval_dates: list[dt.date],
    norm_spec=None,
    variables: tuple[str, ...] = DYNAMIC_VARIABLES,
) -> MetricsReport:
    """Per-variable RMSE of each forecast file against the truth panels.

    The caller declares the evaluation timesteps explicitly.  When
    ``norm_spec`` is given both truth and forecasts are scaled by it;
    otherwise values are compared as-is (already normalized).  Missing
    (catchment, date, variable) coverage raises an error listing the gaps.
    """
    if not truth_panels:
        raise DataError("compare_external: no truth panels")
    if not eval_dates:
        raise DataError("compare_external: empty evaluation date set")
    if norm_spec is not None:
        truth_panels = [apply_normalization(norm_spec, p) for p in truth_panels]
        pairs = norm_spec.dynamic_pairs()

    truth: dict[tuple[str, dt.date, str], float] = {}
    for panel in truth_panels:
        date_to_idx = {d: t for t, d in enumerate(panel.dates)}
        for date in eval_dates:
            if date not in date_to_idx:
                raise DataError(
                    f"truth panel {panel.catchment_id} does not cover {date.isoformat()}"
                )
            for var in variables:
                truth[(panel.catchment_id, date, var)] = float(
                    panel.column(var)[date_to_idx[date]]
                )

    report = MetricsReport(
        row_names=tuple(name for name, _ in forecast_files),
        variable_names=variables,
        metadata={"n_catchments": str(len(truth_panels)), "n_dates": str(len(eval_dates))},
    )
    for name, path in forecast_files:
        forecast = read_forecast_csv(path)
        if norm_spec is not None:
            scaled = {}
            for (cid, date, var), value in forecast.items():
                a, b = pairs[var]
                span = (b - a) if norm_spec.scheme == "minmax" else b
                scaled[(cid, date, var)] = 0.0 if span == 0 else (value - a) / span
            forecast = scaled
        gaps = sorted(
            f"{cid} {date.isoformat()} {var}"
            for (cid, date, var) in truth
            if (cid, date, var) not in forecast
        )
        if gaps:
            shown = ", ".join(gaps[:10]) + ("..." if len(gaps) > 10 else "")
            raise DataError(f"forecast {name!r} missing {len(gaps)} entries: {shown}")
        for j, var in enumerate(variables):
            errs = [
                forecast[key] - truth[key] for key in truth if key[2] == var
            ]
            report.set(name, var, math.sqrt(sum(e * e for e in errs) / len(errs)))
    return report


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SyntheticRecipe:
    """Closed-form generator settings for desk-scale rainfall-runoff data.

    Each variable is (static-dependent mean) + (annual sinusoid whose
    amplitude is modulated by the ``amp_factor`` static) + AR(1) noise.
    Streamflow adds a lagged routing of positive precipitation so the
    rainfall-runoff dependence is present by construction.
    """

    name: str = "default"
    start_date: dt.date = dt.date(1989, 10, 2)
    period_days: float = 365.25
    met_seasonal_amp: float = 1.0
    met_noise: float = 0.35
    ar_coeff: float = 0.55
    runoff_lag: int = 2
    runoff_gain: float = 1.0
    q_seasonal_amp: float = 0.35
    q_noise: float = 0.12
    amp_low: float = 0.4
    amp_high: float = 1.6
    n_filler_attributes: int = 27
    seasonal_target: str = "q"


def default_recipe() -> SyntheticRecipe:
    return SyntheticRecipe()


def strongly_annual_recipe() -> SyntheticRecipe:
    """Nearly aseasonal noisy meteorology; streamflow dominated by a
    static-modulated annual cycle.  Used for encoding-ablation experiments."""
    return SyntheticRecipe(
        name="strongly_annual",
        met_seasonal_amp=0.1,
        met_noise=1.0,
        ar_coeff=0.3,
        runoff_gain=0.12,
        q_seasonal_amp=1.0,
        q_noise=0.18,
        amp_low=0.2,
        amp_high=1.8,
    )


# (base level, seasonal amplitude, noise scale, phase) per met variable.
_MET_SHAPES = {
    "prcp": (3.0, 1.5, 1.2, 0.0),
    "srad": (250.0, 90.0, 25.0, 1.3),
    "tmax": (15.0, 11.0, 3.0, 1.1),
    "vp": (900.0, 350.0, 80.0, 1.2),
}
_Q_PHASE = 0.6
_ROUTING_KERNEL = (0.5, 0.3, 0.2)


def _ar1(rng: np.random.Generator, n: int, rho: float) -> np.ndarray:
    eps = rng.standard_normal(n)
    out = np.empty(n)
    out[0] = eps[0] / math.sqrt(max(1.0 - rho * rho, 1e-12))
    for t in range(1, n):
        out[t] = rho * out[t - 1] + eps[t]
    return out


def generate_synthetic_dataset(
    n_catchments: int,
    T: int,
    seed: int,
    recipe: SyntheticRecipe = SyntheticRecipe(),
) -> tuple[list[TimeSeriesPanel], StaticAttributeTable]:
    """Fully seeded panels plus a static table for ``n_catchments`` basins."""
    if n_catchments < 2:
        raise ConfigError(f"need at least 2 catchments, got {n_catchments}")
    if T < 2:
        raise ConfigError(f"need at least 2 days, got {T}")
    rng = np.random.default_rng(seed)
    pad = recipe.runoff_lag + len(_ROUTING_KERNEL) - 1
    omega = 2.0 * math.pi / recipe.period_days
    # Day indices extended backwards so routed streamflow has full history.
    t_ext = np.arange(-pad, T, dtype=np.float64)

    panels = []
    ids, lats, lons, static_rows = [], [], [], []
    attr_names = ("amp_factor", "base_level", "gain_factor") + tuple(
        f"filler_{k:02d}" for k in range(recipe.n_filler_attributes)
    )
    for c in range(n_catchments):
        cid = f"synth{c:04d}"
        lat = float(rng.uniform(32.0, 47.0))
        lon = float(rng.uniform(-118.0, -78.0))
        amp_factor = float(rng.uniform(recipe.amp_low, recipe.amp_high))
        base_level = float(rng.uniform(0.8, 1.2))
        gain_factor = float(rng.uniform(0.8, 1.2))
        fillers = rng.standard_normal(recipe.n_filler_attributes)

        met = {}
        for var, (base, amp, noise, phase) in _MET_SHAPES.items():
            seasonal = amp * recipe.met_seasonal_amp * amp_factor * np.sin(omega * t_ext + phase)
            noise_term = noise * recipe.met_noise * _ar1(rng, t_ext.size, recipe.ar_coeff)
            met[var] = base * base_level + seasonal + noise_term
        offset = 8.0 + 1.0 * recipe.met_noise * _ar1(rng, t_ext.size, recipe.ar_coeff)
        met["tmin"] = met["tmax"] - offset

        p_eff = np.maximum(met["prcp"], 0.0)
        routed = np.zeros(t_ext.size)
        for k, w in enumerate(_ROUTING_KERNEL):
            d = recipe.runoff_lag + k
            routed[d:] += w * p_eff[: t_ext.size - d]
        q = (
            1.5 * base_level
            + 1.2 * recipe.q_seasonal_amp * amp_factor * np.sin(omega * t_ext + _Q_PHASE)
            + recipe.runoff_gain * gain_factor * 0.5 * routed
            + recipe.q_noise * 1.2 * _ar1(rng, t_ext.size, recipe.ar_coeff)
        )

        columns = {**met, "q": q}
        values = np.stack([columns[v][pad:] for v in DYNAMIC_VARIABLES], axis=1)
        dates = tuple(recipe.start_date + dt.timedelta(days=int(k)) for k in range(T))
        panels.append(TimeSeriesPanel(cid, dates, values))
        ids.append(cid)
        lats.append(lat)
        lons.append(lon)
        static_rows.append([amp_factor, base_level, gain_factor] + list(fillers))

    table = StaticAttributeTable(
        catchment_ids=tuple(ids),
        attribute_names=attr_names,
        values=np.array(static_rows),
        gauge_lat=np.array(lats),
        gauge_lon=np.array(lons),
    )
    return panels, table
