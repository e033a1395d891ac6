"""Command-line entry point.

Subcommands: ``simulate`` (synthetic Wiener dataset), ``fit`` (run an
experiment from a JSON config), ``predict`` (load a saved model, emit a
prediction CSV + figure), ``evaluate`` (score a prediction CSV against
truth), ``gradcheck`` (finite-difference audit of the differentiation
engine). Exit codes: 0 success, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import data as data_mod
from . import experiment, figures, metrics, simulate, svi
from .errors import DyngpError


def build_parser():
    parser = argparse.ArgumentParser(
        prog="dyngp",
        description="System identification with dynamic and deep Gaussian processes.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic Wiener dataset")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="dataset", help="output directory")
    p.add_argument("--horizon", type=int, default=2500)
    p.add_argument("--boundary", type=int, default=1500)
    p.add_argument("--noise-frac", type=float, default=0.1)
    p.add_argument(
        "--nonlinearity", choices=["none", "positive_part", "quadratic"],
        default="positive_part",
    )
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="run an experiment from a JSON config")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="predict with a saved model")
    p.add_argument("--model", required=True, help="model.json from a fit run")
    p.add_argument("--data", required=True, help="input CSV (harness format)")
    p.add_argument("--out", default="predictions.csv")
    p.add_argument("--samples", type=int, default=300)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="score a prediction CSV against truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gradcheck", help="finite-difference audit of gradients")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def cmd_simulate(args):
    cfg = simulate.SimConfig(
        seed=args.seed,
        horizon=args.horizon,
        train_boundary=args.boundary,
        noise_std_fraction=args.noise_frac,
        nonlinearity=args.nonlinearity,
    )
    gen = simulate.generate_wiener_dataset(cfg)
    dataset = data_mod.from_generated(gen)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data_mod.save_csv(out / "data.csv", dataset)
    meta = {
        "seed": args.seed,
        "boundary": gen.boundary,
        "delta": dataset.delta,
        "noise_std": gen.noise_std,
        "nonlinearity": args.nonlinearity,
        "schema": {"time": "t", "inputs": ["u1", "u2"], "output": "y"},
    }
    with open(out / "meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
    print(f"wrote {out / 'data.csv'} ({dataset.n} rows, boundary {gen.boundary})")
    return 0


def cmd_fit(args):
    config = experiment.load_config(args.config)
    scores = experiment.run_experiment(config)
    print(json.dumps(scores, indent=2, sort_keys=True))
    return 0


def cmd_predict(args):
    with open(args.model, encoding="utf-8") as fh:
        blob = json.load(fh)
    if blob.get("architecture") is None:
        raise DyngpError("model.json does not contain a serialized architecture")
    arch = svi.Architecture.from_dict(blob["architecture"])
    spec = dict(blob.get("dataset") or {})
    if spec.get("kind", "csv") == "csv":
        schema = spec["schema"]
    else:
        schema = {"time": "t", "inputs": ["u1", "u2"], "output": "y"}
    dataset = data_mod.load_csv(args.data, schema, boundary=spec.get("boundary"))
    if spec.get("fourier_periods"):
        extra = data_mod.fourier_features(
            dataset.n, dataset.delta, [tuple(p) for p in spec["fourier_periods"]]
        )
        dataset = data_mod.TimeSeriesDataset(
            times=dataset.times, U=np.column_stack([dataset.U, extra]),
            y=dataset.y, boundary=dataset.boundary,
        )
    record = (
        data_mod.StandardizeRecord.from_dict(blob["standardize"])
        if blob.get("standardize")
        else None
    )
    U = record.apply_inputs(dataset.U) if record else dataset.U
    pred = svi.predict(arch, U, num_samples=args.samples, seed=args.seed)
    samples = record.invert_outputs(pred.samples) if record else pred.samples
    mean = samples.mean(axis=0)
    bands = {p: np.percentile(samples, p, axis=0) for p in experiment.PERCENTILES}
    experiment._write_predictions(args.out, dataset.times, mean, bands, dataset.y)
    figure_path = str(Path(args.out).with_suffix(".png"))
    figures.render_prediction_figure(
        figure_path, dataset.times, mean, bands, truth=dataset.y,
    )
    print(f"wrote {args.out} and {figure_path}")
    return 0


def _read_csv_columns(path):
    import csv as _csv

    with open(path, newline="", encoding="utf-8") as fh:
        reader = _csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        rows = [[float(c) for c in row] for row in reader]
    table = np.asarray(rows, dtype=float)
    return {name: table[:, i] for i, name in enumerate(header)}


def cmd_evaluate(args):
    pred = _read_csv_columns(args.pred)
    truth = _read_csv_columns(args.truth)
    if "mean" not in pred:
        raise DyngpError(f"{args.pred} has no 'mean' column")
    truth_col = "truth" if "truth" in truth else "y"
    if truth_col not in truth:
        raise DyngpError(f"{args.truth} has neither 'truth' nor 'y' column")
    yhat = pred["mean"]
    y = truth[truth_col]
    scores = {
        "rmse": metrics.rmse(y, yhat),
        "mae": metrics.mae(y, yhat),
        # a point forecast: CRPS coincides with the MAE
        "crps": metrics.crps_from_samples(yhat[None, :], y),
    }
    print(json.dumps(scores, indent=2, sort_keys=True))
    return 0


GRADCHECK_CASES = {
    "arithmetic": lambda l: ad.tensor_sum(
        ad.exp(l["x"]) * l["y"] - ad.softplus(l["x"]) / (l["y"] * l["y"] + 1.0)
    ),
    "matmul_transpose": lambda l: ad.tensor_sum(
        ad.matmul(l["m"], ad.transpose(l["m"])) * 0.5
    ),
    "cholesky_solve": lambda l: ad.tensor_sum(
        ad.triangular_solve(
            ad.cholesky(ad.matmul(l["m"], ad.transpose(l["m"])) + 3.0 * np.eye(3)),
            l["y"],
        )
    ),
    "complex_pair": lambda l: (
        lambda re, im: ad.tensor_sum(re * im)
    )(*ad.complex_exp_pair(l["x"], l["y"])),
    "scan": lambda l: (
        lambda re, im: ad.tensor_sum(re) + ad.tensor_sum(im * np.arange(3.0))
    )(*ad.cumulative_scan(l["s"], l["t"], l["x"], l["y"])),
}


def cmd_gradcheck(args):
    rng = np.random.default_rng(args.seed)
    failures = 0
    for name, builder in GRADCHECK_CASES.items():
        params = {
            "x": rng.standard_normal(3),
            "y": rng.standard_normal(3),
            "m": rng.standard_normal((3, 3)),
            "s": np.array(rng.uniform(-0.9, -0.2)),
            "t": np.array(rng.normal()),
        }
        err = ad.check_gradient(builder, params, step=1e-6)
        status = "ok" if err < args.tolerance else "FAIL"
        if err >= args.tolerance:
            failures += 1
        print(f"{name:>18s}: max relative error {err:.3e} [{status}]")
    if failures:
        raise DyngpError(f"{failures} gradient check(s) above tolerance {args.tolerance}")
    print("all gradient checks passed")
    return 0


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args) or 0
    except DyngpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failures also map to exit code 2
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
