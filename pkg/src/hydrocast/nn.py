"""Dense/LSTM network with forward and exact analytic backward passes.

Pipeline per timestep: concat(known, observed) -> dense encoder (SELU) ->
dropout -> LSTM cell.  The three gates use sigmoid; the cell-candidate and
cell-output nonlinearities use SELU (``cell_activation="tanh"`` restores the
standard wiring).  Horizon steps feed known-future features with the
observed slots zeroed, and each hidden state is decoded through SELU plus a
linear output head.  Everything runs in float64; backprop through time is
exact and verified against central finite differences.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError, NumericalError
from .windowing import WindowBatch

# Self-normalizing constants for SELU.
SELU_LAMBDA = 1.0507009873554805
SELU_ALPHA = 1.6732632423543772

#: Row-block order of the stacked LSTM weight matrices and bias.
GATE_ORDER = ("input", "forget", "candidate", "output")

CELL_ACTIVATIONS = ("selu", "tanh")


def selu(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return SELU_LAMBDA * np.where(x > 0, x, SELU_ALPHA * np.expm1(np.minimum(x, 0.0)))


def selu_grad(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return SELU_LAMBDA * np.where(x > 0, 1.0, SELU_ALPHA * np.exp(np.minimum(x, 0.0)))


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function (no overflow for large |x|)."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class DenseParams:
    weight: np.ndarray  # [out, in]
    bias: np.ndarray  # [out]


@dataclass
class LstmParams:
    input_weights: np.ndarray  # [4H, in], gate blocks in GATE_ORDER
    recurrent_weights: np.ndarray  # [4H, H]
    bias: np.ndarray  # [4H]

    @property
    def hidden_size(self) -> int:
        return self.recurrent_weights.shape[1]


@dataclass
class ModelParams:
    encoder: DenseParams
    lstm: LstmParams
    decoder: DenseParams
    dropout_rate: float = 0.2
    cell_activation: str = "selu"

    def __post_init__(self):
        if self.cell_activation not in CELL_ACTIVATIONS:
            raise ConfigError(f"cell_activation must be one of {CELL_ACTIVATIONS}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        H = self.lstm.hidden_size
        if self.lstm.input_weights.shape[0] != 4 * H or self.lstm.bias.shape != (4 * H,):
            raise ConfigError("LSTM weight/bias shapes inconsistent with hidden size")
        if self.encoder.weight.shape[0] != self.lstm.input_weights.shape[1]:
            raise ConfigError("encoder output width must equal LSTM input width")
        if self.decoder.weight.shape[1] != H:
            raise ConfigError("decoder input width must equal LSTM hidden size")

    @property
    def hidden_size(self) -> int:
        return self.lstm.hidden_size

    @property
    def input_size(self) -> int:
        return self.encoder.weight.shape[1]

    @property
    def output_size(self) -> int:
        return self.decoder.weight.shape[0]


def init_model(
    input_size: int,
    encoder_size: int,
    hidden_size: int,
    output_size: int,
    seed: int,
    dropout_rate: float = 0.2,
    cell_activation: str = "selu",
) -> ModelParams:
    """Seeded uniform fan-in initialization; forget-gate bias starts at 1."""
    rng = np.random.default_rng(seed)

    def uniform(shape, fan_in):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    encoder = DenseParams(uniform((encoder_size, input_size), input_size), np.zeros(encoder_size))
    bias = np.zeros(4 * hidden_size)
    bias[hidden_size : 2 * hidden_size] = 1.0
    lstm = LstmParams(
        input_weights=uniform((4 * hidden_size, encoder_size), encoder_size),
        recurrent_weights=uniform((4 * hidden_size, hidden_size), hidden_size),
        bias=bias,
    )
    decoder = DenseParams(uniform((output_size, hidden_size), hidden_size), np.zeros(output_size))
    return ModelParams(encoder, lstm, decoder, dropout_rate, cell_activation)


def param_items(params: ModelParams) -> list[tuple[str, np.ndarray]]:
    """Canonical (name, array) ordering used by Adam, checkpoints and grad checks."""
    return [
        ("encoder.weight", params.encoder.weight),
        ("encoder.bias", params.encoder.bias),
        ("lstm.input_weights", params.lstm.input_weights),
        ("lstm.recurrent_weights", params.lstm.recurrent_weights),
        ("lstm.bias", params.lstm.bias),
        ("decoder.weight", params.decoder.weight),
        ("decoder.bias", params.decoder.bias),
    ]


def clone_params(params: ModelParams) -> ModelParams:
    return copy.deepcopy(params)


def dropout_apply(
    x: np.ndarray, rate: float, training: bool, rng: np.random.Generator | None = None
) -> tuple[np.ndarray, np.ndarray | None]:
    """Inverted dropout: survivors scaled by 1/(1-rate); identity at inference."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x, None
    if rng is None:
        raise ConfigError("training-mode dropout requires a seeded rng")
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * mask, mask


def _cell_acts(kind: str) -> tuple[Callable, Callable]:
    """(activation, gradient-from-(pre, out)) pair for candidate/cell output."""
    if kind == "selu":
        return selu, lambda pre, out: selu_grad(pre)
    return np.tanh, lambda pre, out: 1.0 - out * out


def lstm_cell_forward(
    params: LstmParams,
    x_t: np.ndarray,
    h_prev: np.ndarray,
    c_prev: np.ndarray,
    cell_activation: str = "selu",
) -> tuple[np.ndarray, np.ndarray, dict]:
    """One LSTM step over a batch.

    c_t = f * c_prev + i * g with i, f, o = sigmoid gates and candidate
    g = act(.); h_t = o * act(c_t).  The cache carries pre-activations and
    gate values for the exact backward pass.
    """
    H = params.hidden_size
    act, _ = _cell_acts(cell_activation)
    pre = x_t @ params.input_weights.T + h_prev @ params.recurrent_weights.T + params.bias
    i = sigmoid(pre[:, :H])
    f = sigmoid(pre[:, H : 2 * H])
    g = act(pre[:, 2 * H : 3 * H])
    o = sigmoid(pre[:, 3 * H :])
    c = f * c_prev + i * g
    if not np.all(np.isfinite(c)):
        raise NumericalError("LSTM cell produced non-finite state (exploding values)")
    cact = act(c)
    h = o * cact
    cache = {
        "x": x_t, "h_prev": h_prev, "c_prev": c_prev,
        "pre_g": pre[:, 2 * H : 3 * H], "i": i, "f": f, "g": g, "o": o,
        "c": c, "cact": cact,
    }
    return h, c, cache


def _lstm_cell_backward(params: LstmParams, cache: dict, dh, dc, cell_activation, grads):
    """Backprop one cell step; returns (dx, dh_prev, dc_prev)."""
    H = params.hidden_size
    _, act_grad = _cell_acts(cell_activation)
    i, f, g, o = cache["i"], cache["f"], cache["g"], cache["o"]
    do = dh * cache["cact"]
    dc = dc + dh * o * act_grad(cache["c"], cache["cact"])
    di = dc * g
    df = dc * cache["c_prev"]
    dg = dc * i
    dc_prev = dc * f
    dpre = np.empty((dh.shape[0], 4 * H))
    dpre[:, :H] = di * i * (1.0 - i)
    dpre[:, H : 2 * H] = df * f * (1.0 - f)
    dpre[:, 2 * H : 3 * H] = dg * act_grad(cache["pre_g"], g)
    dpre[:, 3 * H :] = do * o * (1.0 - o)
    grads["lstm.input_weights"] += dpre.T @ cache["x"]
    grads["lstm.recurrent_weights"] += dpre.T @ cache["h_prev"]
    grads["lstm.bias"] += dpre.sum(axis=0)
    dx = dpre @ params.input_weights
    dh_prev = dpre @ params.recurrent_weights
    return dx, dh_prev, dc_prev


@dataclass
class ForwardCache:
    params: ModelParams
    steps: list[dict] = field(default_factory=list)  # context then horizon steps
    context_len: int = 0
    horizon: int = 0
    training: bool = False


def model_forward(
    params: ModelParams,
    batch: WindowBatch,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, ForwardCache]:
    """Run the encoder->LSTM->decoder pipeline over one batch.

    Returns predictions [B, horizon, F_target] and the cache consumed by
    model_backward.  Inference mode (training=False) is a pure function of
    (params, batch).
    """
    B, L, Fk = batch.known_past.shape
    H_steps = batch.known_future.shape[1]
    Fo = batch.observed_past.shape[2]
    if Fk + Fo != params.input_size:
        raise ConfigError(
            f"feature width mismatch: known {Fk} + observed {Fo} != encoder input "
            f"{params.input_size}"
        )
    if batch.known_future.shape[2] != Fk:
        raise ConfigError("known_past and known_future feature widths differ")

    hid = params.hidden_size
    rate = params.dropout_rate
    h = np.zeros((B, hid))
    c = np.zeros((B, hid))
    cache = ForwardCache(params=params, context_len=L, horizon=H_steps, training=training)
    preds = np.empty((B, H_steps, params.output_size))

    for step in range(L + H_steps):
        if step < L:
            u = np.concatenate([batch.known_past[:, step], batch.observed_past[:, step]], axis=1)
        else:
            future = batch.known_future[:, step - L]
            u = np.concatenate([future, np.zeros((B, Fo))], axis=1)
        enc_pre = u @ params.encoder.weight.T + params.encoder.bias
        e = selu(enc_pre)
        xl, enc_mask = dropout_apply(e, rate, training, rng)
        h, c, cell_cache = lstm_cell_forward(params.lstm, xl, h, c, params.cell_activation)
        step_cache = {
            "u": u, "enc_pre": enc_pre, "enc_mask": enc_mask, "xl": xl, "cell": cell_cache,
        }
        if step >= L:
            z = selu(h)
            zd, z_mask = dropout_apply(z, rate, training, rng)
            y = zd @ params.decoder.weight.T + params.decoder.bias
            preds[:, step - L] = y
            step_cache.update({"h_out": h, "zd": zd, "z_mask": z_mask})
        cache.steps.append(step_cache)

    if not np.all(np.isfinite(preds)):
        raise NumericalError("model_forward produced non-finite predictions")
    return preds, cache


def model_backward(cache: ForwardCache, grad_output: np.ndarray) -> dict[str, np.ndarray]:
    """Exact gradients of every parameter via backprop through time.

    ``grad_output`` is dLoss/dPredictions of shape [B, horizon, F_target].
    """
    params = cache.params
    L, H_steps = cache.context_len, cache.horizon
    if grad_output.shape[1] != H_steps or grad_output.shape[2] != params.output_size:
        raise ConfigError(
            f"grad_output shape {grad_output.shape} does not match cached forward "
            f"(horizon {H_steps}, outputs {params.output_size})"
        )
    grads = {name: np.zeros_like(arr) for name, arr in param_items(params)}
    B = grad_output.shape[0]
    dh_next = np.zeros((B, params.hidden_size))
    dc_next = np.zeros((B, params.hidden_size))

    for step in range(L + H_steps - 1, -1, -1):
        sc = cache.steps[step]
        dh, dc = dh_next, dc_next
        if step >= L:
            dy = grad_output[:, step - L]
            grads["decoder.weight"] += dy.T @ sc["zd"]
            grads["decoder.bias"] += dy.sum(axis=0)
            dzd = dy @ params.decoder.weight
            dz = dzd if sc["z_mask"] is None else dzd * sc["z_mask"]
            dh = dh + dz * selu_grad(sc["h_out"])
        dxl, dh_next, dc_next = _lstm_cell_backward(
            params.lstm, sc["cell"], dh, dc, params.cell_activation, grads
        )
        de = dxl if sc["enc_mask"] is None else dxl * sc["enc_mask"]
        dpre = de * selu_grad(sc["enc_pre"])
        grads["encoder.weight"] += dpre.T @ sc["u"]
        grads["encoder.bias"] += dpre.sum(axis=0)
    return grads


def mse_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error over all elements and its gradient w.r.t. pred."""
    if pred.shape != target.shape:
        raise ConfigError(f"mse_loss: shape mismatch {pred.shape} vs {target.shape}")
    diff = pred - target
    loss = float(np.mean(diff * diff))
    return loss, 2.0 * diff / diff.size


def grad_check(params: ModelParams, batch: WindowBatch, step: float = 1e-5) -> float:
    """Max relative error of analytic vs central finite-difference gradients.

    Runs in inference mode (dropout off) so the loss is a deterministic
    function of the parameters.  The relative error guards against 0/0 with
    a max(|analytic|, |numeric|, 1e-8) denominator.
    """
    preds, cache = model_forward(params, batch, training=False)
    _, dpred = mse_loss(preds, batch.targets)
    analytic = model_backward(cache, dpred)

    def loss_at() -> float:
        out, _ = model_forward(params, batch, training=False)
        return mse_loss(out, batch.targets)[0]

    worst = 0.0
    for name, arr in param_items(params):
        flat = arr.reshape(-1)
        a_flat = analytic[name].reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + step
            up = loss_at()
            flat[k] = orig - step
            down = loss_at()
            flat[k] = orig
            numeric = (up - down) / (2.0 * step)
            denom = max(abs(a_flat[k]), abs(numeric), 1e-8)
            worst = max(worst, abs(a_flat[k] - numeric) / denom)
    return worst
