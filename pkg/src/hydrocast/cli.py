"""Command-line entry point tying the pipeline together.

Subcommands: synth-data, train, evaluate, ablate, compare, plot, grad-check.
Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numerical
failure.  ``--threads N`` pins the BLAS thread pools (set before numpy is
imported, which is why the heavy modules are imported inside the handlers).
The only environment override is HYDROCAST_OUTPUT_DIR for the output
directory.
"""

from __future__ import annotations

import argparse
import datetime as dt
import os
import sys
from pathlib import Path

from .errors import ConfigError, DataError, NumericalError

GRAD_CHECK_TOLERANCE = 1e-5


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems -> exit code 1, not argparse's 2
        raise ConfigError(message)


def _parse_date(text: str) -> dt.date:
    try:
        return dt.date.fromisoformat(text)
    except ValueError:
        raise ConfigError(f"invalid ISO date {text!r}") from None


def _parse_named_path(text: str) -> tuple[str, str]:
    name, sep, path = text.partition("=")
    if not sep or not name or not path:
        raise ConfigError(f"expected NAME=PATH, got {text!r}")
    return name, path


def _output_dir(args) -> Path:
    out = os.environ.get("HYDROCAST_OUTPUT_DIR") or args.out_dir
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _resolve_config(args) -> "RunConfig":
    from .config import load_run_config, resolve_run_config

    overrides = {
        name: getattr(args, name, None)
        for name in (
            "dynamic_csv", "static_csv", "mode", "epochs", "batch_size", "learning_rate",
            "hidden_size", "encoder_size", "dropout_rate", "cell_activation",
            "normalization", "split_ratio", "train_count", "start_date", "end_date",
            "overfit_factor", "stop_after_non_improving", "threads",
        )
    }
    if getattr(args, "out_dir", None):
        overrides["output_dir"] = args.out_dir
    window = {}
    if getattr(args, "context_len", None) is not None:
        window["context_len"] = args.context_len
    if getattr(args, "horizon", None) is not None:
        window["horizon"] = args.horizon
    seeds = {}
    for key in ("split", "init", "shuffle", "dropout"):
        value = getattr(args, f"seed_{key}", None)
        if value is not None:
            seeds[key] = value

    if getattr(args, "config", None):
        cfg = load_run_config(args.config)
        import dataclasses

        cleaned = {k: v for k, v in overrides.items() if v is not None}
        cfg = dataclasses.replace(cfg, **cleaned)
    else:
        cfg = resolve_run_config(args.preset, **overrides)
    if window:
        import dataclasses

        cfg = dataclasses.replace(cfg, window=dataclasses.replace(cfg.window, **window))
    if seeds:
        import dataclasses

        cfg = dataclasses.replace(cfg, seeds=dataclasses.replace(cfg.seeds, **seeds))
    if getattr(args, "include_static", None) is not None:
        import dataclasses

        cfg = dataclasses.replace(
            cfg, encoding=dataclasses.replace(cfg.encoding, include_static=args.include_static)
        )
    return cfg


def _protocol_from_config(cfg) -> "ExperimentProtocol":
    from .evaluate import ExperimentProtocol
    from .train import AdamConfig, TrainConfig

    return ExperimentProtocol(
        window=cfg.window,
        mode=cfg.mode,
        split_ratio=cfg.split_ratio,
        split_seed=cfg.seeds.split,
        train_count=cfg.train_count,
        normalization=cfg.normalization,
        encoder_size=cfg.encoder_size,
        hidden_size=cfg.hidden_size,
        dropout_rate=cfg.dropout_rate,
        cell_activation=cfg.cell_activation,
        init_seed=cfg.seeds.init,
        train=TrainConfig(
            epochs=cfg.epochs,
            batch_size=cfg.batch_size,
            adam=AdamConfig(learning_rate=cfg.learning_rate),
            shuffle_seed=cfg.seeds.shuffle,
            dropout_seed=cfg.seeds.dropout,
            stop_after_non_improving=cfg.stop_after_non_improving,
            overfit_factor=cfg.overfit_factor,
        ),
    )


def _load_panels(cfg):
    from .dataset import load_timeseries_csv, slice_date_range

    if not cfg.dynamic_csv:
        raise ConfigError("a dynamic CSV path is required (--dynamic-csv)")
    panels = load_timeseries_csv(cfg.dynamic_csv)
    if cfg.start_date or cfg.end_date:
        if not (cfg.start_date and cfg.end_date):
            raise ConfigError("start_date and end_date must be given together")
        start, end = _parse_date(cfg.start_date), _parse_date(cfg.end_date)
        panels = [slice_date_range(p, start, end) for p in panels]
    return panels


def _load_table(cfg):
    from .dataset import load_static_csv

    needs_table = cfg.encoding.include_static or cfg.encoding.use_linear_space
    if not needs_table:
        return None
    if not cfg.static_csv:
        raise ConfigError(
            "the encoding config needs static attributes: pass --static-csv"
        )
    return load_static_csv(cfg.static_csv)


# ---------------------------------------------------------------------------
# Command handlers
# ---------------------------------------------------------------------------

def cmd_synth_data(args) -> int:
    from .dataset import write_static_csv, write_timeseries_csv
    from .evaluate import default_recipe, generate_synthetic_dataset, strongly_annual_recipe

    out = _output_dir(args)
    recipe = strongly_annual_recipe() if args.recipe == "strongly-annual" else default_recipe()
    panels, table = generate_synthetic_dataset(args.catchments, args.days, args.seed, recipe)
    dynamic_path = out / "dynamic.csv"
    static_path = out / "static.csv"
    write_timeseries_csv(panels, dynamic_path)
    write_static_csv(table, static_path)
    lines = [
        "# hydrocast synth-data config",
        f"catchments={args.catchments}",
        f"days={args.days}",
        f"seed={args.seed}",
        f"recipe={args.recipe}",
    ]
    (out / "run_config.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {dynamic_path} and {static_path}")
    return 0


def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    out = _output_dir(args)

    from .config import save_run_config
    from .dataset import save_normalization_spec
    from .encodings import write_feature_manifest
    from .evaluate import prepare_experiment_data, run_experiment
    from .train import save_checkpoint, save_training_log
    from .windowing import save_split_csv

    save_run_config(cfg, out / "run_config.txt")
    panels = _load_panels(cfg)
    table = _load_table(cfg)
    protocol = _protocol_from_config(cfg)
    prepared = prepare_experiment_data(panels, table, protocol)
    save_split_csv(prepared.split, out / "split.csv")
    save_normalization_spec(prepared.norm_spec, out / "normalization.txt")

    outcome = run_experiment(prepared, cfg.encoding, protocol)
    write_feature_manifest(outcome.feature_names, out / "features.txt")
    save_training_log(outcome.fit.records, out / "training_log.csv")
    save_checkpoint(outcome.fit.final, out / "checkpoint_final.ckpt")
    save_checkpoint(outcome.fit.best, out / "checkpoint_best.ckpt")
    save_checkpoint(outcome.selected, out / "checkpoint_selected.ckpt")

    last = outcome.fit.records[-1]
    which = "final" if outcome.selected.epoch == outcome.fit.final.epoch else "best"
    print(
        f"trained {last.epoch} epochs: train_loss={last.train_loss:.6g} "
        f"val_loss={last.val_loss:.6g}; selected {which} checkpoint "
        f"(epoch {outcome.selected.epoch})"
    )
    return 0


def _infer_mode(params, n_features: int) -> str:
    observed = params.input_size - n_features
    if observed == 5:
        return "rainfall_runoff"
    if observed == 6:
        return "multivariate"
    raise DataError(
        f"cannot infer experiment mode: checkpoint expects {observed} observed variables"
    )


def cmd_evaluate(args) -> int:
    from .dataset import load_normalization_spec, apply_normalization, load_static_csv, impute_static_means
    from .encodings import spatial_bounds
    from .evaluate import (
        model_forecast_rows,
        predict_dataset,
        render_text_table,
        rmse_per_variable,
        write_forecast_csv,
        MetricsReport,
    )
    from .train import load_checkpoint
    from .viz import export_tidy_csv
    from .windowing import build_window_dataset, load_split_csv, select_feature_roles

    out = _output_dir(args)
    ckpt = load_checkpoint(args.checkpoint)
    if ckpt.encoding_config is None:
        raise DataError(f"{args.checkpoint}: checkpoint has no encoding config")
    mode = args.mode or _infer_mode(ckpt.params, len(ckpt.feature_names))
    roles = select_feature_roles(mode)

    class _Cfg:  # minimal view for the shared loaders
        dynamic_csv = args.dynamic_csv
        static_csv = args.static_csv
        start_date = args.start_date or ""
        end_date = args.end_date or ""
        encoding = ckpt.encoding_config

    panels = _load_panels(_Cfg)
    norm_spec = load_normalization_spec(args.norm_spec)
    train_ids, val_ids = load_split_csv(args.split)
    table = None
    bounds = None
    if ckpt.encoding_config.include_static or ckpt.encoding_config.use_linear_space:
        if not args.static_csv:
            raise ConfigError("checkpoint uses static attributes: pass --static-csv")
        table = impute_static_means(load_static_csv(args.static_csv))
        bounds = spatial_bounds(table, train_ids)
        table = apply_normalization(norm_spec, table)
    norm_panels = {p.catchment_id: apply_normalization(norm_spec, p) for p in panels}

    from .windowing import WindowSpec

    spec = WindowSpec(context_len=args.context_len, horizon=args.horizon)
    val_ds, names = build_window_dataset(
        norm_panels, val_ids, roles, spec, ckpt.encoding_config, table, bounds
    )
    if names != ckpt.feature_names:
        raise DataError(
            "feature names derived from the data do not match the checkpoint manifest"
        )
    preds, targets = predict_dataset(ckpt.params, val_ds, args.batch_size)
    rmse = rmse_per_variable(preds, targets, roles.targets)
    report = MetricsReport(row_names=(args.model_name,), variable_names=roles.targets)
    for var, value in zip(roles.targets, rmse):
        report.set(args.model_name, var, value)

    (out / "report.txt").write_text(render_text_table(report), encoding="utf-8")
    (out / "report.csv").write_text(export_tidy_csv(report), encoding="utf-8")
    write_forecast_csv(
        model_forecast_rows(ckpt.params, val_ds, roles.targets, args.batch_size),
        out / "forecasts.csv",
    )
    print(render_text_table(report), end="")
    return 0


def cmd_ablate(args) -> int:
    cfg = _resolve_config(args)
    out = _output_dir(args)

    from .config import save_run_config
    from .evaluate import default_ablation_grid, render_text_table, run_ablation
    from .viz import export_tidy_csv, plot_rmse_bars

    save_run_config(cfg, out / "run_config.txt")
    panels = _load_panels(cfg)
    from .dataset import load_static_csv

    table = load_static_csv(cfg.static_csv) if cfg.static_csv else None
    grid = default_ablation_grid(with_statics=args.grid == "static")
    if grid.names and any(c.include_static or c.use_linear_space for _, c in grid.variants):
        if table is None:
            raise ConfigError("ablation grid needs static attributes: pass --static-csv")
    protocol = _protocol_from_config(cfg)
    report = run_ablation(panels, table, grid, protocol)
    (out / "report.txt").write_text(render_text_table(report), encoding="utf-8")
    (out / "report.csv").write_text(export_tidy_csv(report), encoding="utf-8")
    (out / "rmse_bars.svg").write_text(plot_rmse_bars(report), encoding="utf-8")
    failed = [k for k in report.metadata if k.startswith("failed.")]
    print(render_text_table(report), end="")
    for key in failed:
        print(f"warning: {key[7:]} failed: {report.metadata[key]}", file=sys.stderr)
    return 0


def cmd_compare(args) -> int:
    from .dataset import load_normalization_spec, load_timeseries_csv
    from .evaluate import compare_external, render_text_table
    from .viz import export_tidy_csv
    from .windowing import load_split_csv

    out = _output_dir(args)
    panels = load_timeseries_csv(args.dynamic_csv)
    if args.split:
        _, val_ids = load_split_csv(args.split)
        panels = [p for p in panels if p.catchment_id in set(val_ids)]
        if not panels:
            raise DataError("no validation panels left after applying the split file")
    norm_spec = load_normalization_spec(args.norm_spec) if args.norm_spec else None
    start, end = _parse_date(args.start_date), _parse_date(args.end_date)
    if end < start:
        raise ConfigError("end date precedes start date")
    eval_dates = [start + dt.timedelta(days=k) for k in range((end - start).days + 1)]
    forecasts = [_parse_named_path(item) for item in args.forecast]
    report = compare_external(panels, forecasts, eval_dates, norm_spec)
    (out / "comparison.txt").write_text(render_text_table(report), encoding="utf-8")
    (out / "comparison.csv").write_text(export_tidy_csv(report), encoding="utf-8")
    print(render_text_table(report), end="")
    return 0


def cmd_plot(args) -> int:
    from .viz import PlotSpec, SeriesSpec, import_tidy_report, plot_rmse_bars, plot_series

    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    if args.kind == "bars":
        if not args.report:
            raise ConfigError("plot --kind bars requires --report")
        report = import_tidy_report(Path(args.report).read_text(encoding="utf-8"))
        out_path.write_text(plot_rmse_bars(report), encoding="utf-8")
        print(f"wrote {out_path}")
        return 0

    if not args.truth_csv or not args.catchment or not args.variable:
        raise ConfigError("plot --kind series requires --truth-csv, --catchment, --variable")
    from .dataset import load_timeseries_csv, slice_date_range
    from .evaluate import read_forecast_csv

    panels = {p.catchment_id: p for p in load_timeseries_csv(args.truth_csv)}
    if args.catchment not in panels:
        raise DataError(f"catchment {args.catchment!r} not in {args.truth_csv}")
    panel = panels[args.catchment]
    if args.start_date and args.end_date:
        panel = slice_date_range(panel, _parse_date(args.start_date), _parse_date(args.end_date))
    series = [
        SeriesSpec(
            name="observed",
            timestamps=panel.dates,
            values=tuple(float(v) for v in panel.column(args.variable)),
            role="truth",
            variable=args.variable,
        )
    ]
    for name, path in (_parse_named_path(item) for item in args.forecast or []):
        data = read_forecast_csv(path)
        points = sorted(
            (date, value)
            for (cid, date, var), value in data.items()
            if cid == args.catchment and var == args.variable
        )
        if not points:
            raise DataError(f"forecast {name!r} has no rows for {args.catchment}/{args.variable}")
        series.append(
            SeriesSpec(
                name=name,
                timestamps=tuple(p[0] for p in points),
                values=tuple(p[1] for p in points),
                role="prediction",
                variable=args.variable,
            )
        )
    spec = PlotSpec(
        title=f"{args.variable} at {args.catchment}",
        series=tuple(series),
        x_label="date",
        y_label=args.variable,
    )
    out_path.write_text(plot_series(spec), encoding="utf-8")
    print(f"wrote {out_path}")
    return 0


def cmd_grad_check(args) -> int:
    import numpy as np

    from .nn import grad_check, init_model
    from .windowing import WindowBatch

    rng = np.random.default_rng(args.seed)
    known, observed, targets = 3, 4, 2
    params = init_model(
        input_size=known + observed,
        encoder_size=args.hidden,
        hidden_size=args.hidden,
        output_size=targets,
        seed=args.seed,
        dropout_rate=0.0,
    )
    batch = WindowBatch(
        known_past=rng.standard_normal((args.batch, args.context, known)),
        known_future=rng.standard_normal((args.batch, 1, known)),
        observed_past=rng.standard_normal((args.batch, args.context, observed)),
        targets=rng.standard_normal((args.batch, 1, targets)),
        catchment_ids=["gc"] * args.batch,
    )
    error = grad_check(params, batch, step=args.step)
    print(f"max relative gradient error: {error:.3e} (tolerance {GRAD_CHECK_TOLERANCE:.0e})")
    if error > GRAD_CHECK_TOLERANCE:
        raise NumericalError(f"gradient check failed: {error:.3e} > {GRAD_CHECK_TOLERANCE:.0e}")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _add_train_like_args(p, include_grid=False):
    p.add_argument("--dynamic-csv", help="daily dynamic CSV")
    p.add_argument("--static-csv", help="static attribute CSV")
    p.add_argument("--out-dir", default="runs/latest", help="output directory")
    p.add_argument("--preset", default="default", help="named protocol preset")
    p.add_argument("--config", help="run config file (key=value) to reproduce a run")
    p.add_argument("--mode", choices=("rainfall_runoff", "multivariate"))
    p.add_argument("--context-len", type=int)
    p.add_argument("--horizon", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--hidden-size", type=int)
    p.add_argument("--encoder-size", type=int)
    p.add_argument("--dropout-rate", type=float)
    p.add_argument("--cell-activation", choices=("selu", "tanh"))
    p.add_argument("--normalization", choices=("minmax", "zscore"))
    p.add_argument("--split-ratio", type=float)
    p.add_argument("--train-count", type=int)
    p.add_argument("--start-date")
    p.add_argument("--end-date")
    p.add_argument("--overfit-factor", type=float)
    p.add_argument("--stop-after-non-improving", type=int)
    p.add_argument("--seed-split", type=int)
    p.add_argument("--seed-init", type=int)
    p.add_argument("--seed-shuffle", type=int)
    p.add_argument("--seed-dropout", type=int)
    p.add_argument("--threads", type=int, help="pin BLAS thread pools (1 = deterministic)")
    static_group = p.add_mutually_exclusive_group()
    static_group.add_argument("--include-static", dest="include_static", action="store_const", const=True)
    static_group.add_argument("--no-static", dest="include_static", action="store_const", const=False)
    if include_grid:
        p.add_argument("--grid", choices=("default", "static"), default="default")


def build_parser() -> _Parser:
    parser = _Parser(prog="hydrocast", description=__doc__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("synth-data", help="generate a seeded synthetic dataset")
    p.add_argument("--catchments", type=int, default=8)
    p.add_argument("--days", type=int, default=400)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--recipe", choices=("default", "strongly-annual"), default="default")
    p.add_argument("--out-dir", default="runs/synth")
    p.set_defaults(handler=cmd_synth_data)

    p = sub.add_parser("train", help="train a model end to end")
    _add_train_like_args(p)
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint on the validation split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dynamic-csv", required=True)
    p.add_argument("--static-csv")
    p.add_argument("--split", required=True, help="split.csv written by train")
    p.add_argument("--norm-spec", required=True, help="normalization.txt written by train")
    p.add_argument("--out-dir", default="runs/latest")
    p.add_argument("--mode", choices=("rainfall_runoff", "multivariate"))
    p.add_argument("--context-len", type=int, default=21)
    p.add_argument("--horizon", type=int, default=1)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--model-name", default="LSTM-local")
    p.add_argument("--start-date")
    p.add_argument("--end-date")
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("ablate", help="run the encoding ablation grid")
    _add_train_like_args(p, include_grid=True)
    p.set_defaults(handler=cmd_ablate)

    p = sub.add_parser("compare", help="compare forecast files against truth")
    p.add_argument("--dynamic-csv", required=True, help="truth panels (raw scale)")
    p.add_argument("--split", help="optional split.csv restricting to validation ids")
    p.add_argument("--norm-spec", help="normalization spec; omit if files are pre-normalized")
    p.add_argument("--forecast", action="append", required=True, metavar="NAME=PATH")
    p.add_argument("--start-date", required=True)
    p.add_argument("--end-date", required=True)
    p.add_argument("--out-dir", default="runs/compare")
    p.set_defaults(handler=cmd_compare)

    p = sub.add_parser("plot", help="emit SVG figures")
    p.add_argument("--kind", choices=("series", "bars"), required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report", help="tidy report CSV (bars)")
    p.add_argument("--truth-csv", help="dynamic CSV with observations (series)")
    p.add_argument("--catchment")
    p.add_argument("--variable")
    p.add_argument("--forecast", action="append", metavar="NAME=PATH")
    p.add_argument("--start-date")
    p.add_argument("--end-date")
    p.set_defaults(handler=cmd_plot)

    p = sub.add_parser("grad-check", help="verify analytic gradients against finite differences")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--context", type=int, default=3)
    p.add_argument("--hidden", type=int, default=4)
    p.add_argument("--batch", type=int, default=2)
    p.add_argument("--step", type=float, default=1e-5)
    p.set_defaults(handler=cmd_grad_check)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        threads = getattr(args, "threads", None)
        if threads is not None:
            if threads < 1:
                raise ConfigError("--threads must be >= 1")
            for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                        "NUMEXPR_NUM_THREADS"):
                os.environ[var] = str(threads)
        if not getattr(args, "handler", None):
            parser.print_help()
            return 1
        return args.handler(args) or 0
    except ConfigError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"data error: missing file {exc.filename}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
