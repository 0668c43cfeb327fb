"""Command-line surface: train, eval, predict, export-graph.

Exit codes are a stable contract: 0 success, 2 usage/config/schema errors,
3 numerical aborts.  Text artifacts print floats with 6 significant digits;
full precision lives only in binary checkpoints.
"""

from __future__ import annotations

import os

# SAMBA_THREADS caps worker parallelism; BLAS pools read their env vars at
# import, so this must run before numpy loads.
_threads = os.environ.get("SAMBA_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[_var] = _threads

import argparse
import json
import sys
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from .checkpoint import CorruptCheckpointError, load_checkpoint, save_checkpoint
from .data import (
    InsufficientDataError,
    MinMaxScaler,
    SchemaError,
    SplitSpec,
    load_feature_csv,
    scaler_fit,
    split_chronological,
    window_dataset,
)
from .graph import build_adjacency
from .model import HyperParams, count_macs, count_params, forward, init_model
from .training import (
    Metrics,
    NonFiniteError,
    TrainConfig,
    evaluate,
    predict_samples,
    train,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


class ConfigError(ValueError):
    """A config file or flag value violates the schema."""


_INT_FIELDS = {
    "seed", "epochs", "batch_size", "window", "embed_dim", "state_dim",
    "ffn_hidden", "layers", "cheb_order", "node_dim",
}
_FLOAT_FIELDS = {"lr", "beta1", "beta2", "eps", "train_frac", "val_frac", "test_frac"}
_STR_FIELDS = {"dataset", "out"}

_DEFAULTS = {
    "dataset": None,
    "out": "samba-run",
    "seed": 0,
    "epochs": 1500,
    "lr": 0.001,
    "batch_size": 128,
    "beta1": 0.9,
    "beta2": 0.999,
    "eps": 1e-8,
    "window": 5,
    "embed_dim": 64,
    "state_dim": 64,
    "ffn_hidden": 32,
    "layers": 3,
    "cheb_order": 3,
    "node_dim": 10,
    "train_frac": 0.8,
    "val_frac": 0.05,
    "test_frac": 0.15,
}


def _load_run_config(path, overrides: dict) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: not valid JSON ({err})") from err
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    config = dict(_DEFAULTS)
    for key, value in raw.items():
        if key not in config:
            raise ConfigError(f"unknown config field '{key}'")
        config[key] = value
    for key, value in overrides.items():
        if value is not None:
            config[key] = value
    for key in _INT_FIELDS:
        try:
            config[key] = int(config[key])
        except (TypeError, ValueError):
            raise ConfigError(f"config field '{key}' must be an integer") from None
    for key in _FLOAT_FIELDS:
        try:
            config[key] = float(config[key])
        except (TypeError, ValueError):
            raise ConfigError(f"config field '{key}' must be a number") from None
    if config["dataset"] is None:
        raise ConfigError("config field 'dataset' is required")
    for key in _STR_FIELDS:
        config[key] = str(config[key])
    return config


@contextmanager
def _output_lock(out_dir: Path):
    """Guard an output directory against concurrent commands."""
    lock = out_dir / ".samba.lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise ConfigError(
            f"output directory {out_dir} is locked by another run ({lock})"
        ) from None
    os.write(fd, str(os.getpid()).encode())
    os.close(fd)
    try:
        yield
    finally:
        lock.unlink(missing_ok=True)


def _fmt(x: float) -> str:
    return f"{float(x):.6g}"


def _hyper_from_config(config: dict, n_features: int) -> HyperParams:
    return HyperParams(
        n_features=n_features,
        window=config["window"],
        embed_dim=config["embed_dim"],
        state_dim=config["state_dim"],
        ffn_hidden=config["ffn_hidden"],
        layers=config["layers"],
        cheb_order=config["cheb_order"],
        node_dim=config["node_dim"],
    )


def _prepare_splits(frame, window: int, spec: SplitSpec, scaler: MinMaxScaler | None):
    """Window, split, and scale; the scaler is fitted on train when absent."""
    samples = window_dataset(frame, window)
    train_s, val_s, test_s = split_chronological(samples, spec)
    if scaler is None:
        scaler = scaler_fit(train_s)
    return (
        scaler.transform(train_s),
        scaler.transform(val_s),
        scaler.transform(test_s),
        scaler,
    )


def cmd_train(args) -> int:
    overrides = {
        "seed": args.seed,
        "epochs": args.epochs,
        "lr": args.lr,
        "out": args.out,
    }
    config = _load_run_config(args.config, overrides)
    out_dir = Path(config["out"])
    out_dir.mkdir(parents=True, exist_ok=True)

    with _output_lock(out_dir):
        resolved = out_dir / "resolved-config.json"
        resolved.write_text(json.dumps(config, indent=2, sort_keys=True) + "\n")

        frame = load_feature_csv(config["dataset"], min_rows=config["window"] + 2)
        spec = SplitSpec(config["train_frac"], config["val_frac"], config["test_frac"])
        train_s, val_s, _, scaler = _prepare_splits(frame, config["window"], spec, None)

        hyper = _hyper_from_config(config, frame.n_features)
        model = init_model(hyper, seed=config["seed"])
        cfg = TrainConfig(
            lr=config["lr"],
            epochs=config["epochs"],
            batch_size=config["batch_size"],
            seed=config["seed"],
            beta1=config["beta1"],
            beta2=config["beta2"],
            eps=config["eps"],
        )
        history = train(model, train_s, val_s, cfg)

        history_path = out_dir / "history.csv"
        with open(history_path, "w", encoding="utf-8") as fh:
            fh.write("epoch,train_loss,val_rmse\n")
            for rec in history:
                fh.write(f"{rec.epoch},{_fmt(rec.train_loss)},{_fmt(rec.val_rmse)}\n")

        ckpt_path = out_dir / "checkpoint.samba"
        save_checkpoint(
            ckpt_path,
            model,
            meta={
                "feature_names": frame.feature_names,
                "split": [spec.train_frac, spec.val_frac, spec.test_frac],
                "seed": config["seed"],
                "dropped_rows": frame.dropped_rows,
            },
            buffers={
                "scaler.feature_min": scaler.feature_min,
                "scaler.feature_max": scaler.feature_max,
            },
        )
    best = min(history, key=lambda r: r.val_rmse) if val_s else history[-1]
    print(
        f"trained {config['epochs']} epochs on {len(train_s)} samples "
        f"({count_params(model)} parameters, {count_macs(model)} MACs/forward)"
    )
    print(f"best val_rmse {_fmt(best.val_rmse)} at epoch {best.epoch}")
    print(f"artifacts: {resolved}, {history_path}, {ckpt_path}")
    return EXIT_OK


def _load_eval_inputs(args):
    model, meta, bufs = load_checkpoint(args.checkpoint)
    frame = load_feature_csv(args.data, min_rows=model.hyper.window + 2)
    if frame.n_features != model.hyper.n_features:
        raise ConfigError(
            f"checkpoint expects {model.hyper.n_features} features, "
            f"dataset has {frame.n_features}"
        )
    scaler = MinMaxScaler(
        feature_min=bufs["scaler.feature_min"],
        feature_max=bufs["scaler.feature_max"],
    )
    return model, meta, frame, scaler


def cmd_eval(args) -> int:
    model, meta, frame, scaler = _load_eval_inputs(args)
    spec = SplitSpec(*meta["split"])
    _, _, test_s, _ = _prepare_splits(frame, model.hyper.window, spec, scaler)
    if len(test_s) < 2:
        raise InsufficientDataError("test split has fewer than 2 samples")

    preds = predict_samples(model, test_s)
    targets = np.array([s.target for s in test_s])
    metrics = evaluate(preds, targets)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    with _output_lock(out_dir):
        metrics_path = out_dir / "metrics.json"
        metrics_path.write_text(
            json.dumps(
                {k: float(_fmt(v)) for k, v in metrics.as_dict().items()},
                indent=2,
                sort_keys=True,
            )
            + "\n"
        )
        pred_path = out_dir / "predictions.csv"
        with open(pred_path, "w", encoding="utf-8") as fh:
            fh.write("date,predicted,actual\n")
            for s, p in zip(test_s, preds):
                fh.write(f"{frame.dates[s.target_date]},{_fmt(p)},{_fmt(s.target)}\n")
    print(
        f"test rmse={_fmt(metrics.rmse)} ic={_fmt(metrics.ic)} ric={_fmt(metrics.ric)}"
        + (" (degenerate series)" if metrics.degenerate else "")
    )
    print(f"artifacts: {metrics_path}, {pred_path}")
    return EXIT_OK


def cmd_predict(args) -> int:
    model, meta, frame, scaler = _load_eval_inputs(args)
    window = model.hyper.window
    try:
        t = frame.dates.index(args.date)
    except ValueError:
        raise ConfigError(f"date {args.date} not present in dataset") from None
    if t < window:
        raise ConfigError(
            f"date {args.date} has only {t} prior days; {window} are required"
        )
    x = scaler.transform_array(frame.features[t - window : t])
    print(_fmt(forward(model, x).item()))
    return EXIT_OK


def cmd_export_graph(args) -> int:
    model, meta, _ = load_checkpoint(args.checkpoint)
    names = meta.get("feature_names")
    if not names or len(names) != model.hyper.n_features:
        names = [f"feature_{i}" for i in range(model.hyper.n_features)]
    adjacency = build_adjacency(model.graph).data

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    with _output_lock(out_dir):
        adj_path = out_dir / "adjacency.csv"
        with open(adj_path, "w", encoding="utf-8") as fh:
            fh.write(",".join(names) + "\n")
            for row in adjacency:
                fh.write(",".join(_fmt(v) for v in row) + "\n")
        # weighted in-degree: how strongly the other features attend to each
        degrees = adjacency.sum(axis=0)
        order = np.argsort(-degrees, kind="stable")
        deg_path = out_dir / "feature_degrees.csv"
        with open(deg_path, "w", encoding="utf-8") as fh:
            fh.write("feature,weighted_in_degree\n")
            for i in order:
                fh.write(f"{names[i]},{_fmt(degrees[i])}\n")
    row_sums = adjacency.sum(axis=1)
    print(
        f"adjacency rows sum to [{_fmt(row_sums.min())}, {_fmt(row_sums.max())}] "
        f"across {adjacency.shape[0]} nodes"
    )
    print(f"artifacts: {adj_path}, {deg_path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="samba",
        description="train and inspect the return forecaster",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run the full training pipeline")
    p_train.add_argument("--config", required=True, help="flat JSON run config")
    p_train.add_argument("--seed", type=int, default=None)
    p_train.add_argument("--epochs", type=int, default=None)
    p_train.add_argument("--lr", type=float, default=None)
    p_train.add_argument("--out", default=None)
    p_train.set_defaults(fn=cmd_train)

    p_eval = sub.add_parser("eval", help="score a checkpoint on the test split")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--data", required=True)
    p_eval.add_argument("--out", default=".")
    p_eval.set_defaults(fn=cmd_eval)

    p_pred = sub.add_parser("predict", help="predict one day's return ratio")
    p_pred.add_argument("--checkpoint", required=True)
    p_pred.add_argument("--data", required=True)
    p_pred.add_argument("--date", required=True, help="target date, YYYY-MM-DD")
    p_pred.set_defaults(fn=cmd_predict)

    p_graph = sub.add_parser("export-graph", help="dump the learned adjacency")
    p_graph.add_argument("--checkpoint", required=True)
    p_graph.add_argument("--out", default=".")
    p_graph.set_defaults(fn=cmd_export_graph)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except NonFiniteError as err:
        print(f"numerical abort: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except (
        ConfigError,
        SchemaError,
        InsufficientDataError,
        CorruptCheckpointError,
        FileNotFoundError,
        ValueError,
    ) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    raise SystemExit(main())
