"""Run configuration: presets, overrides and the echoed key-value format.

Every training run resolves to one RunConfig.  Presets encode the published
protocols by name (``paper``, ``ablation-*``); the resolved config is echoed
to the output directory as a ``key=value`` text file and can be fed back via
``--config`` to reproduce a run bit for bit.  All randomness flows from the
named seeds; there are no entropy defaults.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, replace

from .encodings import EncodingConfig, no_encodings
from .errors import ConfigError
from .windowing import WindowSpec

CONFIG_HEADER = "# hydrocast run config v1"


@dataclass(frozen=True)
class SeedConfig:
    split: int = 17
    init: int = 101
    shuffle: int = 23
    dropout: int = 59


@dataclass(frozen=True)
class RunConfig:
    preset: str = "default"
    dynamic_csv: str = ""
    static_csv: str = ""
    output_dir: str = "runs/latest"
    mode: str = "multivariate"
    loss: str = "mse"
    start_date: str = ""  # optional ISO slice bounds; empty = full span
    end_date: str = ""
    normalization: str = "minmax"
    split_ratio: float = 0.8
    train_count: int | None = None
    epochs: int = 120
    batch_size: int = 256
    learning_rate: float = 0.001
    hidden_size: int = 64
    encoder_size: int = 64
    dropout_rate: float = 0.2
    cell_activation: str = "selu"
    overfit_factor: float = 1.05
    stop_after_non_improving: int | None = None
    threads: int | None = None
    window: WindowSpec = field(default_factory=WindowSpec)
    encoding: EncodingConfig = field(default_factory=EncodingConfig)
    seeds: SeedConfig = field(default_factory=SeedConfig)

    def __post_init__(self):
        if self.loss != "mse":
            raise ConfigError(f"only mse loss is supported, got {self.loss!r}")


def _paper_preset() -> RunConfig:
    # Multivariate protocol: linear space-time + annual Fourier encodings,
    # statics and month on, 21-day context, up to 120 epochs, Adam lr 0.001,
    # 8:2 spatial split pinned to the published 534/137 counts on 671 ids.
    return RunConfig(
        preset="paper",
        mode="multivariate",
        start_date="1989-10-02",
        end_date="2008-12-31",
        train_count=534,
        encoding=EncodingConfig(
            use_linear_space=True,
            use_linear_time=True,
            use_annual_fourier=True,
            extra_fourier_periods=(),
            legendre_degrees=(),
            include_static=True,
            include_month=True,
        ),
    )


def _ablation_preset(name: str, encoding: EncodingConfig) -> RunConfig:
    return RunConfig(preset=name, mode="rainfall_runoff", encoding=encoding)


def _preset_factories():
    base = no_encodings()
    return {
        "default": RunConfig,
        "paper": _paper_preset,
        "ablation-just-ts": lambda: _ablation_preset("ablation-just-ts", base),
        "ablation-linear": lambda: _ablation_preset(
            "ablation-linear", replace(base, use_linear_space=True, use_linear_time=True)
        ),
        "ablation-annual": lambda: _ablation_preset(
            "ablation-annual",
            replace(base, use_linear_space=True, use_linear_time=True, use_annual_fourier=True),
        ),
        "ablation-extra": lambda: _ablation_preset(
            "ablation-extra",
            replace(
                base,
                use_linear_space=True,
                use_linear_time=True,
                use_annual_fourier=True,
                extra_fourier_periods=(8.0, 16.0, 32.0, 64.0, 128.0),
                legendre_degrees=(2, 3, 4),
            ),
        ),
    }


PRESET_NAMES = tuple(_preset_factories())


def resolve_run_config(preset: str = "default", **overrides) -> RunConfig:
    """Instantiate a preset and apply explicit overrides (None = keep preset)."""
    factories = _preset_factories()
    if preset not in factories:
        raise ConfigError(f"unknown preset {preset!r}; available: {', '.join(PRESET_NAMES)}")
    cfg = factories[preset]()
    cleaned = {k: v for k, v in overrides.items() if v is not None}
    bad = set(cleaned) - {f.name for f in dataclasses.fields(RunConfig)}
    if bad:
        raise ConfigError(f"unknown run config fields: {sorted(bad)}")
    return replace(cfg, **cleaned)


# ---------------------------------------------------------------------------
# key=value serialization
# ---------------------------------------------------------------------------

def _fmt_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list)):
        return ",".join(_fmt_value(v) for v in value)
    return str(value)


def format_run_config(cfg: RunConfig) -> str:
    """Serialize as documented ``key=value`` lines (nested fields use dots)."""
    lines = [CONFIG_HEADER]
    for f in dataclasses.fields(RunConfig):
        value = getattr(cfg, f.name)
        if dataclasses.is_dataclass(value):
            for sub in dataclasses.fields(value):
                lines.append(f"{f.name}.{sub.name}={_fmt_value(getattr(value, sub.name))}")
        else:
            lines.append(f"{f.name}={_fmt_value(value)}")
    return "\n".join(lines) + "\n"


_INT_FIELDS = {"epochs", "batch_size", "hidden_size", "encoder_size"}
_OPT_INT_FIELDS = {"train_count", "stop_after_non_improving", "threads"}
_FLOAT_FIELDS = {"split_ratio", "learning_rate", "dropout_rate", "overfit_factor"}


def _parse_scalar(name: str, text: str):
    if name in _OPT_INT_FIELDS:
        return None if text == "" else int(text)
    if name in _INT_FIELDS:
        return int(text)
    if name in _FLOAT_FIELDS:
        return float(text)
    return text


def _parse_bool(text: str, key: str) -> bool:
    if text == "true":
        return True
    if text == "false":
        return False
    raise ConfigError(f"config key {key}: expected true/false, got {text!r}")


def _parse_number_list(text: str, cast):
    return tuple(cast(part) for part in text.split(",") if part != "")


def parse_run_config(text: str) -> RunConfig:
    scalars: dict[str, object] = {}
    window: dict[str, int] = {}
    encoding: dict[str, object] = {}
    seeds: dict[str, int] = {}
    known = {f.name for f in dataclasses.fields(RunConfig)}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"malformed config line {line!r}")
        if key.startswith("window."):
            window[key[7:]] = int(value)
        elif key.startswith("seeds."):
            seeds[key[6:]] = int(value)
        elif key.startswith("encoding."):
            sub = key[9:]
            if sub in ("use_linear_space", "use_linear_time", "use_annual_fourier",
                       "include_static", "include_month"):
                encoding[sub] = _parse_bool(value, key)
            elif sub == "extra_fourier_periods":
                encoding[sub] = _parse_number_list(value, float)
            elif sub == "legendre_degrees":
                encoding[sub] = _parse_number_list(value, int)
            elif sub == "annual_period_days":
                encoding[sub] = float(value)
            else:
                raise ConfigError(f"unknown encoding config key {key!r}")
        elif key in known:
            scalars[key] = _parse_scalar(key, value)
        else:
            raise ConfigError(f"unknown run config key {key!r}")
    return RunConfig(
        window=WindowSpec(**window) if window else WindowSpec(),
        encoding=EncodingConfig(**encoding) if encoding else EncodingConfig(),
        seeds=SeedConfig(**seeds) if seeds else SeedConfig(),
        **scalars,
    )


def load_run_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_run_config(fh.read())


def save_run_config(cfg: RunConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_run_config(cfg))
