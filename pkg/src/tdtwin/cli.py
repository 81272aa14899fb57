"""Command-line surface: generate -> train -> predict -> evaluate.

Every subcommand is a pure function of its config file, seed, and input
files; rerunning with identical inputs produces byte-identical outputs.
Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
divergence.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .core import BurstDataset, validate_dataset
from .errors import ConfigurationError, DataError, DivergenceError, TdtwinError
from .fml import (
    TrainConfig,
    init_model,
    load_model,
    save_model,
    train,
)
from .pipeline import (
    GENERATION_CONFIG_KEYS,
    DatasetFileWriter,
    TrajectoryFileWriter,
    extract_bursts_from,
    iter_trajectories,
    load_dataset,
    load_trajectories,
    plan_from_config,
    read_json_config,
)
from .predict import (
    l2_surface_error,
    pointwise_error,
    predict_qoi,
    read_fourier_csv,
    read_series_csv,
    spectrum,
    write_series_csv,
)

__all__ = ["main", "TRAIN_CONFIG_KEYS"]

TRAIN_CONFIG_KEYS = (
    "hidden_widths",
    "n_R",
    "batch_size",
    "epochs",
    "lr_base",
    "lr_max",
    "lr_decay",
    "lr_half_cycle",
    "adam_beta1",
    "adam_beta2",
    "adam_eps",
    "window_noise",
    "average_tail",
    "seed",
)

_DATASET_FILE = "dataset.fmld"
_TRAJECTORY_FILE = "trajectories.fmlt"
_MODEL_FILE = "model.fmlm"
_LOSS_FILE = "loss_history.csv"
_PREDICTION_FILE = "prediction.csv"
_METRICS_FILE = "metrics.json"
_SPECTRUM_FILE = "spectrum.csv"
_PEAKS_FILE = "peaks.json"


def _json_dumps(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def _apply_overrides(doc: dict, sets, allowed) -> dict:
    """Apply --set key=value pairs; keys must belong to the command's
    config schema.  Values are parsed as JSON when possible, else kept
    as strings."""
    out = dict(doc)
    for item in sets or ():
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ConfigurationError(f"--set expects KEY=VALUE, got {item!r}")
        if key not in allowed:
            raise ConfigurationError(
                f"--set {key}: not a config key (allowed: {', '.join(allowed)})"
            )
        try:
            out[key] = json.loads(raw)
        except json.JSONDecodeError:
            out[key] = raw
    return out


def _load_config(args, allowed) -> dict:
    if not args.config:
        raise ConfigurationError("--config is required for this command")
    doc = read_json_config(args.config)
    doc = _apply_overrides(doc, args.set, allowed)
    if args.seed is not None:
        if "seed" not in allowed:
            raise ConfigurationError("--seed is not applicable to this command")
        doc["seed"] = args.seed
    return doc


def _out_dir(args) -> str:
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    return out


def _infer_dt(t: np.ndarray, path, override: float | None) -> float:
    if override is not None:
        if not (np.isfinite(override) and override > 0):
            raise ConfigurationError(f"--dt must be finite and > 0, got {override}")
        return float(override)
    if t.shape[0] < 2:
        raise ConfigurationError(
            f"{path}: cannot infer the time step from a single row; pass --dt"
        )
    steps = np.diff(t)
    dt = float(steps[0])
    if dt <= 0 or not np.allclose(steps, dt, rtol=1e-9, atol=1e-12):
        raise DataError(f"{path}: time column is not uniformly spaced")
    return dt


def cmd_generate(args) -> int:
    doc = _load_config(args, GENERATION_CONFIG_KEYS)
    plan = plan_from_config(doc)
    out = args.out or "."
    traj_path = os.path.join(out, _TRAJECTORY_FILE)
    data_path = os.path.join(out, _DATASET_FILE)
    print(
        f"system={plan.sim.system_id} N_sim={plan.num_sims} N_step={plan.num_steps} "
        f"n_M={plan.memory_steps} n_R={plan.rollout_steps} n_B={plan.bursts_per_traj} "
        f"N_data={plan.n_data}"
    )
    if plan.bursts_per_traj > plan.windows_per_traj:
        raise ConfigurationError(
            f"n_B={plan.bursts_per_traj} exceeds the {plan.windows_per_traj} "
            f"distinct burst windows per trajectory"
        )
    if args.dry_run:
        print(f"dry run: would write {traj_path} and {data_path}")
        return 0
    os.makedirs(out, exist_ok=True)
    qdim = plan.sim.qoi_dim
    with TrajectoryFileWriter(traj_path, qdim, 0, plan.sim.dt) as tw, DatasetFileWriter(
        data_path,
        qdim,
        0,
        plan.memory_steps,
        plan.rollout_steps,
        plan.sim.dt,
    ) as dw:
        for j, traj in enumerate(iter_trajectories(plan, workers=args.workers)):
            tw.write(traj)
            for burst in extract_bursts_from(
                traj,
                j,
                plan.memory_steps,
                plan.rollout_steps,
                plan.bursts_per_traj,
                plan.seed,
            ):
                dw.write(burst)
    print(f"wrote {traj_path}")
    print(f"wrote {data_path}")
    return 0


def _train_inputs(doc: dict, dataset: BurstDataset):
    problems: list[str] = []
    unknown = sorted(set(doc) - set(TRAIN_CONFIG_KEYS))
    if unknown:
        problems.append(
            f"unknown config keys: {', '.join(unknown)} "
            f"(allowed: {', '.join(TRAIN_CONFIG_KEYS)})"
        )
    widths = doc.get("hidden_widths")
    widths_ok = (
        isinstance(widths, list)
        and len(widths) >= 1
        and all(isinstance(w, int) and not isinstance(w, bool) and w >= 1 for w in widths)
    )
    if not widths_ok:
        problems.append(
            f"hidden_widths: expected a nonempty list of positive integers, got {widths!r}"
        )
    seed = doc.get("seed")
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
        problems.append(f"seed: expected a u64 integer, got {seed!r}")
    if problems:
        raise ConfigurationError("invalid training config:\n  " + "\n  ".join(problems))
    kwargs = {"rollout_steps": doc.get("n_R", dataset.rollout_steps), "seed": seed}
    for key in TRAIN_CONFIG_KEYS:
        if key in ("hidden_widths", "n_R", "seed"):
            continue
        if key in doc:
            kwargs[key] = doc[key]
    try:
        cfg = TrainConfig(**kwargs)
    except TypeError as e:
        raise ConfigurationError(f"invalid training config: {e}") from e
    return tuple(widths), cfg


def cmd_train(args) -> int:
    doc = _load_config(args, TRAIN_CONFIG_KEYS)
    dataset = load_dataset(args.dataset)
    widths, cfg = _train_inputs(doc, dataset)
    model = init_model(
        dataset.qoi_dim, dataset.param_dim, dataset.memory_steps, widths, cfg.seed
    )
    if cfg.rollout_steps > dataset.rollout_steps:
        raise ConfigurationError(
            f"n_R={cfg.rollout_steps} exceeds the dataset's {dataset.rollout_steps}"
        )
    batches = (dataset.n_data + cfg.batch_size - 1) // cfg.batch_size
    print(
        f"dataset {args.dataset}: N_data={dataset.n_data} n_M={dataset.memory_steps} "
        f"n_R={dataset.rollout_steps}; net widths {list(model.layer_widths)}; "
        f"{batches} batches/epoch x {cfg.epochs} epochs"
    )
    if args.dry_run:
        print("dry run: no training performed")
        return 0
    out = _out_dir(args)
    trained, history = train(model, dataset, cfg)
    model_path = os.path.join(out, _MODEL_FILE)
    loss_path = os.path.join(out, _LOSS_FILE)
    save_model(trained, model_path)
    with open(loss_path, "w", encoding="utf-8", newline="") as f:
        f.write("epoch,loss\n")
        for i, v in enumerate(history):
            f.write(f"{i},{v!r}\n")
    if history:
        print(f"final epoch loss {history[-1]:.6e} (normalized)")
    print(f"wrote {model_path}")
    print(f"wrote {loss_path}")
    return 0


def cmd_predict(args) -> int:
    model = load_model(args.model)
    t, values, names = read_series_csv(args.window)
    need = model.window_len
    if values.shape[0] != need:
        raise ConfigurationError(
            f"{args.window}: initial window must have exactly {need} rows "
            f"(memory_steps+1), got {values.shape[0]}"
        )
    if values.shape[1] != model.qoi_dim:
        raise ConfigurationError(
            f"{args.window}: window has {values.shape[1]} components, "
            f"model expects {model.qoi_dim}"
        )
    if args.horizon < 1:
        raise ConfigurationError(f"--horizon must be >= 1, got {args.horizon}")
    params = ()
    if args.params:
        params = tuple(float(v) for v in args.params.split(","))
    if len(params) != model.param_dim:
        raise ConfigurationError(
            f"model expects {model.param_dim} explicit parameters, got {len(params)}"
        )
    dt = _infer_dt(t, args.window, args.dt)
    if args.dry_run:
        print(
            f"dry run: would predict {args.horizon} steps of dt={dt} "
            f"from t={float(t[-1])!r}"
        )
        return 0
    preds = predict_qoi(model, values, params, horizon_steps=args.horizon)
    t_pred = t[-1] + dt * np.arange(1, args.horizon + 1)
    out = _out_dir(args)
    pred_path = os.path.join(out, _PREDICTION_FILE)
    write_series_csv(pred_path, t_pred, preds, names)
    print(
        f"predicted {args.horizon} steps from t={float(t[-1])!r} "
        f"to t={float(t_pred[-1])!r}"
    )
    print(f"wrote {pred_path}")
    return 0


def _is_fourier_csv(path) -> bool:
    with open(path, "r", encoding="utf-8") as f:
        return f.readline().strip() == "term,value"


def _top_peaks(result, n=4):
    return [[f, a] for f, a in result.ranked_peaks[:n]]


def cmd_evaluate(args) -> int:
    pred_fourier = _is_fourier_csv(args.pred)
    ref_fourier = _is_fourier_csv(args.ref)
    if pred_fourier != ref_fourier:
        raise DataError(
            "cannot compare a Fourier-coefficient series with a time series"
        )
    if pred_fourier:
        pred = read_fourier_csv(args.pred)
        ref = read_fourier_csv(args.ref)
        doc = {
            "mode": "fourier",
            "order": pred.order,
            "l2_surface_error": l2_surface_error(pred, ref),
        }
    else:
        t_pred, v_pred, names = read_series_csv(args.pred)
        t_ref, v_ref, names_ref = read_series_csv(args.ref)
        if names != names_ref:
            raise DataError(
                f"component names differ: {names} vs {names_ref}"
            )
        if t_pred.shape != t_ref.shape or not np.allclose(
            t_pred, t_ref, rtol=1e-9, atol=1e-12
        ):
            raise DataError("misaligned time columns between pred and ref")
        errors = pointwise_error(v_pred, v_ref)
        components = {}
        dt = float(t_pred[1] - t_pred[0]) if t_pred.shape[0] >= 2 else None
        for i, name in enumerate(names):
            entry = {
                "rms_error": float(np.sqrt(np.mean(errors[:, i] ** 2))),
                "max_error": float(np.max(errors[:, i])),
            }
            if dt is not None and t_pred.shape[0] >= 16:
                entry["pred_peaks"] = _top_peaks(spectrum(v_pred[:, i], dt))
                entry["ref_peaks"] = _top_peaks(spectrum(v_ref[:, i], dt))
            components[name] = entry
        doc = {"mode": "series", "n_rows": int(t_pred.shape[0]), "components": components}
    text = _json_dumps(doc)
    sys.stdout.write(text)
    if not args.dry_run:
        out = _out_dir(args)
        metrics_path = os.path.join(out, _METRICS_FILE)
        with open(metrics_path, "w", encoding="utf-8") as f:
            f.write(text)
        print(f"wrote {metrics_path}")
    return 0


def cmd_spectrum(args) -> int:
    t, values, names = read_series_csv(args.series)
    dt = _infer_dt(t, args.series, None)
    results = [spectrum(values[:, i], dt) for i in range(values.shape[1])]
    doc = {
        "dt": dt,
        "n_samples": int(t.shape[0]),
        "peaks": {name: _top_peaks(r) for name, r in zip(names, results)},
    }
    text = _json_dumps(doc)
    sys.stdout.write(text)
    if args.dry_run:
        return 0
    out = _out_dir(args)
    spec_path = os.path.join(out, _SPECTRUM_FILE)
    freqs = results[0].frequencies
    with open(spec_path, "w", encoding="utf-8", newline="") as f:
        f.write(",".join(["frequency"] + names) + "\n")
        for i in range(freqs.shape[0]):
            row = [repr(float(freqs[i]))] + [
                repr(float(r.amplitudes[i])) for r in results
            ]
            f.write(",".join(row) + "\n")
    peaks_path = os.path.join(out, _PEAKS_FILE)
    with open(peaks_path, "w", encoding="utf-8") as f:
        f.write(text)
    print(f"wrote {spec_path}")
    print(f"wrote {peaks_path}")
    return 0


def _sniff_magic(path) -> bytes:
    with open(path, "rb") as f:
        return f.read(4)


def cmd_validate(args) -> int:
    checked = 0
    if args.config:
        doc = read_json_config(args.config)
        doc = _apply_overrides(doc, args.set, GENERATION_CONFIG_KEYS)
        if args.seed is not None:
            doc["seed"] = args.seed
        plan = plan_from_config(doc)
        print(
            f"OK config {args.config}: system={plan.sim.system_id} "
            f"N_data={plan.n_data} windows/trajectory={plan.windows_per_traj}"
        )
        checked += 1
    for path in args.files:
        magic = _sniff_magic(path)
        if magic == b"FMLD":
            dataset = load_dataset(path)
            problems = validate_dataset(dataset)
            if problems:
                raise DataError(
                    f"{path}: dataset inconsistent:\n  " + "\n  ".join(problems)
                )
            print(
                f"OK dataset {path}: N_data={dataset.n_data} "
                f"n_M={dataset.memory_steps} n_R={dataset.rollout_steps} "
                f"qoi_dim={dataset.qoi_dim}"
            )
        elif magic == b"FMLT":
            trajs = load_trajectories(path)
            print(
                f"OK trajectories {path}: {len(trajs)} runs, "
                f"{len(trajs[0]) if trajs else 0} entries each"
            )
        else:
            model = load_model(path)
            print(
                f"OK model {path}: widths {list(model.layer_widths)} "
                f"n_M={model.memory_steps}"
            )
        checked += 1
    if checked == 0:
        raise ConfigurationError("nothing to validate: pass --config and/or files")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", help="JSON config file")
    shared.add_argument("--seed", type=int, help="override the config seed")
    shared.add_argument(
        "--dry-run", action="store_true", help="validate and report without computing"
    )
    shared.add_argument("--workers", type=int, help="worker processes for generation")
    shared.add_argument("--out", help="output directory (default: current)")
    shared.add_argument(
        "--set",
        action="append",
        metavar="KEY=VALUE",
        help="override a config key (repeatable)",
    )

    parser = argparse.ArgumentParser(
        prog="tdtwin",
        description="Targeted digital twins: data generation, flow-map training, "
        "and QoI prediction.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser(
        "generate",
        parents=[shared],
        help="run the full simulator campaign and build a burst dataset",
    )
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser(
        "train", parents=[shared], help="train a flow map on a burst dataset"
    )
    p.add_argument("dataset", help="dataset file from generate")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser(
        "predict", parents=[shared], help="roll a trained model forward in time"
    )
    p.add_argument("--model", required=True, help="model file from train")
    p.add_argument(
        "--window", required=True, help="CSV with the memory_steps+1 initial states"
    )
    p.add_argument("--horizon", required=True, type=int, help="steps to predict")
    p.add_argument("--params", help="comma-separated explicit parameters")
    p.add_argument("--dt", type=float, help="recording step if not inferable")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser(
        "evaluate",
        parents=[shared],
        help="compare a prediction against a reference series",
    )
    p.add_argument("pred", help="prediction CSV (series or Fourier coefficients)")
    p.add_argument("ref", help="reference CSV of the same kind")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser(
        "spectrum", parents=[shared], help="amplitude spectrum and ranked peaks"
    )
    p.add_argument("series", help="time-series CSV")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser(
        "validate",
        parents=[shared],
        help="check configs and data files without writing anything",
    )
    p.add_argument("files", nargs="*", help="dataset/trajectory/model files")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except DataError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except DivergenceError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except TdtwinError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
