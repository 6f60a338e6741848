"""Adam optimization under MSE loss, epoch bookkeeping and checkpointing.

Training runs for up to a fixed number of epochs (default 120).  Each epoch
is tagged "improved" when either the training or the validation loss drops
relative to the previous epoch; the flag is bookkeeping by default, with an
optional stop-after-K-non-improving-epochs switch.  Checkpoint selection
returns the final snapshot unless the final validation loss exceeds
``overfit_factor`` times the running minimum, in which case the best earlier
snapshot is used.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .encodings import EncodingConfig
from .errors import ConfigError, DataError, NumericalError
from .nn import (
    DenseParams,
    LstmParams,
    ModelParams,
    clone_params,
    model_backward,
    model_forward,
    mse_loss,
    param_items,
)
from .windowing import WindowDataset, batch_indices

__all__ = [
    "AdamConfig", "AdamState", "EpochRecord", "Checkpoint", "TrainConfig", "FitResult",
    "mse_loss", "init_adam", "adam_step", "fit", "select_checkpoint",
    "save_checkpoint", "load_checkpoint", "save_training_log", "load_training_log",
    "dataset_loss",
]


@dataclass(frozen=True)
class AdamConfig:
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


@dataclass
class AdamState:
    """First/second moment estimates mirroring the parameter arrays."""

    config: AdamConfig
    first_moment: dict[str, np.ndarray]
    second_moment: dict[str, np.ndarray]
    step_count: int = 0


def init_adam(params: ModelParams, config: AdamConfig = AdamConfig()) -> AdamState:
    return AdamState(
        config=config,
        first_moment={name: np.zeros_like(arr) for name, arr in param_items(params)},
        second_moment={name: np.zeros_like(arr) for name, arr in param_items(params)},
    )


def adam_step(params: ModelParams, grads: dict[str, np.ndarray], state: AdamState):
    """Standard Adam update with bias correction, applied in place."""
    cfg = state.config
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - cfg.beta1**t
    bc2 = 1.0 - cfg.beta2**t
    for name, arr in param_items(params):
        g = grads[name]
        m = state.first_moment[name]
        v = state.second_moment[name]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * (g * g)
        arr -= cfg.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + cfg.epsilon)
    return params, state


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    improved: bool


@dataclass
class Checkpoint:
    params: ModelParams
    epoch: int
    val_loss: float
    feature_names: tuple[str, ...] = ()
    encoding_config: EncodingConfig | None = None


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 120
    batch_size: int = 256
    adam: AdamConfig = field(default_factory=AdamConfig)
    shuffle_seed: int = 0
    dropout_seed: int = 0
    shuffle: bool = True
    stop_after_non_improving: int | None = None
    overfit_factor: float = 1.05


@dataclass
class FitResult:
    final: Checkpoint
    best: Checkpoint
    records: list[EpochRecord]


def dataset_loss(params: ModelParams, data: WindowDataset, batch_size: int) -> float:
    """Full-dataset MSE in inference mode, evaluated in calendar index order."""
    total_sq = 0.0
    total_n = 0
    for idx in batch_indices(data.n_windows, batch_size, seed=0, epoch=0, shuffle=False):
        batch = data.gather(idx)
        preds, _ = model_forward(params, batch, training=False)
        diff = preds - batch.targets
        total_sq += float(np.sum(diff * diff))
        total_n += diff.size
    return total_sq / total_n


def fit(
    params: ModelParams,
    train_data: WindowDataset,
    val_data: WindowDataset,
    config: TrainConfig,
    feature_names: tuple[str, ...] = (),
    encoding_config: EncodingConfig | None = None,
) -> FitResult:
    """Optimize ``params`` in place and return final/best checkpoints.

    Per epoch: shuffle training windows keyed by (shuffle_seed, epoch), step
    Adam per batch, then score the full training and validation sets in
    inference mode.  A NaN loss aborts with the offending epoch and batch.
    """
    if config.epochs < 1:
        raise ConfigError(f"epochs must be >= 1, got {config.epochs}")
    if train_data.n_windows == 0 or val_data.n_windows == 0:
        raise DataError("fit: empty training or validation window set")

    adam = init_adam(params, config.adam)
    records: list[EpochRecord] = []
    best: Checkpoint | None = None
    non_improving = 0

    def snapshot(epoch, val_loss):
        return Checkpoint(clone_params(params), epoch, val_loss, feature_names, encoding_config)

    for epoch in range(1, config.epochs + 1):
        dropout_rng = np.random.default_rng([config.dropout_seed, epoch])
        batches = batch_indices(
            train_data.n_windows, config.batch_size, config.shuffle_seed, epoch, config.shuffle
        )
        for bi, idx in enumerate(batches):
            batch = train_data.gather(idx)
            preds, cache = model_forward(params, batch, training=True, rng=dropout_rng)
            loss, dpred = mse_loss(preds, batch.targets)
            if not np.isfinite(loss):
                raise NumericalError(f"non-finite training loss at epoch {epoch}, batch {bi}")
            grads = model_backward(cache, dpred)
            adam_step(params, grads, adam)

        train_loss = dataset_loss(params, train_data, config.batch_size)
        val_loss = dataset_loss(params, val_data, config.batch_size)
        if not (np.isfinite(train_loss) and np.isfinite(val_loss)):
            raise NumericalError(f"non-finite epoch loss at epoch {epoch}")
        if not records:
            improved = True  # first epoch improves by convention
        else:
            improved = train_loss < records[-1].train_loss or val_loss < records[-1].val_loss
        records.append(EpochRecord(epoch, train_loss, val_loss, improved))

        if best is None or val_loss < best.val_loss:
            best = snapshot(epoch, val_loss)
        non_improving = 0 if improved else non_improving + 1
        if (
            config.stop_after_non_improving is not None
            and non_improving >= config.stop_after_non_improving
        ):
            break

    final = snapshot(records[-1].epoch, records[-1].val_loss)
    return FitResult(final=final, best=best, records=records)


def select_checkpoint(
    records: list[EpochRecord],
    final_ckpt: Checkpoint,
    best_ckpt: Checkpoint,
    overfit_factor: float = 1.05,
) -> Checkpoint:
    """Final checkpoint unless the loss curve indicates overfitting.

    Overfitting rule: final validation loss strictly greater than
    ``overfit_factor`` times the minimum validation loss across epochs.
    """
    if not records:
        raise ConfigError("select_checkpoint: no epoch records")
    min_val = min(r.val_loss for r in records)
    if records[-1].val_loss > overfit_factor * min_val:
        return best_ckpt
    return final_ckpt


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

CHECKPOINT_MAGIC = "hydrocast-checkpoint v1"
LOG_HEADER = "epoch,train_loss,val_loss,improved"


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    """Versioned container: magic line, JSON metadata line, raw float64 bytes.

    Arrays are stored C-contiguous little-endian in ``param_items`` order, so
    reloading reproduces the exact in-memory parameters bit for bit.
    """
    items = param_items(ckpt.params)
    meta = {
        "epoch": ckpt.epoch,
        "val_loss": ckpt.val_loss,
        "dropout_rate": ckpt.params.dropout_rate,
        "cell_activation": ckpt.params.cell_activation,
        "feature_names": list(ckpt.feature_names),
        "encoding_config": (
            dataclasses.asdict(ckpt.encoding_config) if ckpt.encoding_config else None
        ),
        "arrays": [{"name": name, "shape": list(arr.shape)} for name, arr in items],
    }
    with open(path, "wb") as fh:
        fh.write((CHECKPOINT_MAGIC + "\n").encode("ascii"))
        fh.write((json.dumps(meta, sort_keys=True) + "\n").encode("utf-8"))
        for _, arr in items:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        magic = fh.readline().decode("ascii").rstrip("\n")
        if magic != CHECKPOINT_MAGIC:
            raise DataError(f"{path}: not a {CHECKPOINT_MAGIC!r} file (got {magic!r})")
        meta = json.loads(fh.readline().decode("utf-8"))
        arrays = {}
        for spec in meta["arrays"]:
            shape = tuple(spec["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(count * 8)
            if len(buf) != count * 8:
                raise DataError(f"{path}: truncated array {spec['name']}")
            arrays[spec["name"]] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
    params = ModelParams(
        encoder=DenseParams(arrays["encoder.weight"], arrays["encoder.bias"]),
        lstm=LstmParams(
            arrays["lstm.input_weights"], arrays["lstm.recurrent_weights"], arrays["lstm.bias"]
        ),
        decoder=DenseParams(arrays["decoder.weight"], arrays["decoder.bias"]),
        dropout_rate=meta["dropout_rate"],
        cell_activation=meta["cell_activation"],
    )
    enc_cfg = None
    if meta["encoding_config"] is not None:
        cfg = dict(meta["encoding_config"])
        cfg["extra_fourier_periods"] = tuple(cfg["extra_fourier_periods"])
        cfg["legendre_degrees"] = tuple(cfg["legendre_degrees"])
        enc_cfg = EncodingConfig(**cfg)
    return Checkpoint(
        params=params,
        epoch=meta["epoch"],
        val_loss=meta["val_loss"],
        feature_names=tuple(meta["feature_names"]),
        encoding_config=enc_cfg,
    )


def save_training_log(records: list[EpochRecord], path) -> None:
    lines = [LOG_HEADER]
    for r in records:
        lines.append(
            f"{r.epoch},{float(r.train_loss)!r},{float(r.val_loss)!r},"
            f"{'true' if r.improved else 'false'}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_training_log(path) -> list[EpochRecord]:
    text = Path(path).read_text(encoding="utf-8").strip().splitlines()
    if not text or text[0] != LOG_HEADER:
        raise DataError(f"{path}: expected header {LOG_HEADER!r}")
    records = []
    for line in text[1:]:
        epoch, train_loss, val_loss, improved = line.split(",")
        records.append(
            EpochRecord(int(epoch), float(train_loss), float(val_loss), improved == "true")
        )
    return records
