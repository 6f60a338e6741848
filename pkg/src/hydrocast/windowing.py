"""Spatial train/validation splitting and sliding-window batch assembly.

A training example is a fixed-length window cut from one catchment's panel:
``context_len`` days of known+observed history followed by ``horizon`` days
of known-future features and forecast targets.  Splits are by location, so
validation always measures generalization to unseen basins.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .dataset import DYNAMIC_VARIABLES, StaticAttributeTable, TimeSeriesPanel
from .encodings import BoundingBox, EncodingConfig, assemble_known_inputs
from .errors import ConfigError, DataError

EXPERIMENT_MODES = ("rainfall_runoff", "multivariate")


@dataclass(frozen=True)
class SplitAssignment:
    train_ids: tuple[str, ...]
    val_ids: tuple[str, ...]
    seed: int
    ratio: float


@dataclass(frozen=True)
class WindowSpec:
    context_len: int = 21
    horizon: int = 1
    stride: int = 1

    def __post_init__(self):
        if self.context_len < 1 or self.horizon < 1 or self.stride < 1:
            raise ConfigError(f"window spec fields must be >= 1: {self}")

    @property
    def total_len(self) -> int:
        return self.context_len + self.horizon


@dataclass
class WindowBatch:
    """Aligned tensors for one batch; targets immediately follow observed_past."""

    known_past: np.ndarray  # [B, context_len, F_known]
    known_future: np.ndarray  # [B, horizon, F_known]
    observed_past: np.ndarray  # [B, context_len, F_obs]
    targets: np.ndarray  # [B, horizon, F_target]
    catchment_ids: list[str]


def spatial_split(
    ids: Sequence[str], ratio: float, seed: int, train_count: int | None = None
) -> SplitAssignment:
    """Deterministic location split: shuffle by seed, first round(ratio*N) train.

    Rounding is half-up.  ``train_count`` overrides the ratio-derived count
    (used to reproduce a fixed published split such as 534/137 on 671 ids).
    The id list is sorted before shuffling so the assignment depends only on
    the id set, the ratio/count and the seed.
    """
    ids = sorted(ids)
    n = len(ids)
    if n < 2:
        raise ConfigError(f"spatial_split: need at least 2 catchments, got {n}")
    if len(set(ids)) != n:
        raise DataError("spatial_split: duplicate catchment ids")
    if not 0.0 < ratio < 1.0:
        raise ConfigError(f"spatial_split: ratio must be in (0, 1), got {ratio}")
    if train_count is None:
        train_count = int(math.floor(ratio * n + 0.5))
    if not 1 <= train_count <= n - 1:
        raise ConfigError(
            f"spatial_split: train count {train_count} leaves an empty side for N={n}"
        )
    perm = np.random.default_rng(seed).permutation(n)
    shuffled = [ids[i] for i in perm]
    return SplitAssignment(
        train_ids=tuple(sorted(shuffled[:train_count])),
        val_ids=tuple(sorted(shuffled[train_count:])),
        seed=seed,
        ratio=ratio,
    )


def save_split_csv(split: SplitAssignment, path) -> None:
    """Persist as two columns (catchment_id, role) for external reuse."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(("catchment_id", "role"))
        for cid in split.train_ids:
            writer.writerow((cid, "train"))
        for cid in split.val_ids:
            writer.writerow((cid, "validation"))


def load_split_csv(path) -> tuple[tuple[str, ...], tuple[str, ...]]:
    train, val = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["catchment_id", "role"]:
            raise DataError(f"{path}: expected header catchment_id,role")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2 or row[1] not in ("train", "validation"):
                raise DataError(f"{path}:{lineno}: malformed split row {row}")
            (train if row[1] == "train" else val).append(row[0])
    return tuple(train), tuple(val)


def make_windows(T: int, spec: WindowSpec) -> np.ndarray:
    """Start offsets 0, stride, 2*stride, ... for full context+horizon windows."""
    if T < spec.total_len:
        raise DataError(
            f"series length {T} too short for windows: need at least "
            f"context {spec.context_len} + horizon {spec.horizon} = {spec.total_len} days"
        )
    return np.arange(0, T - spec.total_len + 1, spec.stride, dtype=np.int64)


def batch_indices(
    n_windows: int, batch_size: int, seed: int, epoch: int, shuffle: bool = True
) -> list[np.ndarray]:
    """Partition window indices into batches for one epoch.

    Shuffling is keyed by (seed, epoch) so every epoch has its own order but
    re-runs reproduce it exactly.  The last partial batch is kept.
    """
    if batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
    order = np.arange(n_windows, dtype=np.int64)
    if shuffle:
        order = np.random.default_rng([seed, epoch]).permutation(n_windows)
    return [order[i : i + batch_size] for i in range(0, n_windows, batch_size)]


@dataclass(frozen=True)
class FeatureRoles:
    """Variable names feeding the observed-input and target tensors."""

    observed: tuple[str, ...]
    targets: tuple[str, ...]


def select_feature_roles(mode: str) -> FeatureRoles:
    """Map an experiment mode to observed/target variable sets.

    ``rainfall_runoff``: streamflow is excluded from inputs and predicted
    only; ``multivariate``: all six variables are both observed and targets.
    """
    if mode == "rainfall_runoff":
        observed = tuple(v for v in DYNAMIC_VARIABLES if v != "q")
        return FeatureRoles(observed=observed, targets=DYNAMIC_VARIABLES)
    if mode == "multivariate":
        return FeatureRoles(observed=DYNAMIC_VARIABLES, targets=DYNAMIC_VARIABLES)
    raise ConfigError(f"unknown experiment mode {mode!r}; expected one of {EXPERIMENT_MODES}")


@dataclass
class CatchmentArrays:
    catchment_id: str
    known: np.ndarray  # [T, F_known]
    observed: np.ndarray  # [T, F_obs]
    targets: np.ndarray  # [T, F_target]
    dates: tuple | None = None  # calendar axis, kept for forecast export


@dataclass
class WindowDataset:
    """All windows over a set of catchments, addressable by flat index."""

    catchments: list[CatchmentArrays]
    spec: WindowSpec
    index: np.ndarray = field(init=False)  # [N, 2] rows of (catchment idx, start offset)

    def __post_init__(self):
        rows = []
        for ci, arrays in enumerate(self.catchments):
            for start in make_windows(arrays.known.shape[0], self.spec):
                rows.append((ci, start))
        self.index = np.array(rows, dtype=np.int64).reshape(len(rows), 2)

    @property
    def n_windows(self) -> int:
        return self.index.shape[0]

    def window_catchment_ids(self) -> list[str]:
        return [self.catchments[ci].catchment_id for ci in self.index[:, 0]]

    def gather(self, window_ids: np.ndarray) -> WindowBatch:
        L, H = self.spec.context_len, self.spec.horizon
        kp, kf, op, tg, cids = [], [], [], [], []
        for w in np.asarray(window_ids, dtype=np.int64):
            ci, s = self.index[w]
            arrays = self.catchments[ci]
            kp.append(arrays.known[s : s + L])
            kf.append(arrays.known[s + L : s + L + H])
            op.append(arrays.observed[s : s + L])
            tg.append(arrays.targets[s + L : s + L + H])
            cids.append(arrays.catchment_id)
        return WindowBatch(
            known_past=np.stack(kp),
            known_future=np.stack(kf),
            observed_past=np.stack(op),
            targets=np.stack(tg),
            catchment_ids=cids,
        )


def build_window_dataset(
    panels: Mapping[str, TimeSeriesPanel] | Iterable[TimeSeriesPanel],
    ids: Sequence[str],
    roles: FeatureRoles,
    window_spec: WindowSpec,
    encoding_config: EncodingConfig,
    statics: StaticAttributeTable | None = None,
    bounds: BoundingBox | None = None,
) -> tuple[WindowDataset, tuple[str, ...]]:
    """Assemble normalized panels + encodings into a WindowDataset.

    ``panels`` must already be normalized; returns the dataset and the known
    feature names (identical for every catchment under one config).
    """
    if not isinstance(panels, Mapping):
        panels = {p.catchment_id: p for p in panels}
    obs_cols = [DYNAMIC_VARIABLES.index(v) for v in roles.observed]
    tgt_cols = [DYNAMIC_VARIABLES.index(v) for v in roles.targets]
    catchments = []
    feature_names: tuple[str, ...] | None = None
    for cid in ids:
        if cid not in panels:
            raise DataError(f"no panel loaded for catchment {cid!r}")
        panel = panels[cid]
        enc = assemble_known_inputs(encoding_config, panel, statics, bounds)
        if feature_names is None:
            feature_names = enc.feature_names
        elif enc.feature_names != feature_names:
            raise DataError(f"catchment {cid}: inconsistent encoding features")
        catchments.append(
            CatchmentArrays(
                catchment_id=cid,
                known=enc.values,
                observed=panel.values[:, obs_cols],
                targets=panel.values[:, tgt_cols],
                dates=panel.dates,
            )
        )
    if feature_names is None:
        raise DataError("build_window_dataset: empty id list")
    return WindowDataset(catchments, window_spec), feature_names
