"""Experiment harness: config schema, the train/predict/score pipeline, and
the result bundle written to disk.

A run emits, in the output directory:

* ``metrics.json``        rmse/mae/crps in original units + per-batch runtime
* ``predictions.csv``     time, posterior mean, 2.5/16/84/97.5 percentiles, truth
* ``trace.csv``           per-iteration training objective
* ``config_resolved.json``  full reproducibility record
* ``model.json``          serialized architecture + standardization transform
* ``predictions.png``, ``trace.png``  rendered figures
"""

from __future__ import annotations

import copy
import csv
import json
import time
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import data as data_mod
from . import exact_gp, figures, metrics, simulate, svi
from .errors import DomainError

__all__ = ["ExperimentConfig", "run_experiment", "load_config", "PERCENTILES"]

PERCENTILES = (2.5, 16.0, 84.0, 97.5)

DEFAULT_TRAINING = {
    "kind": "svi",
    "iterations": 200,
    "windows_per_iter": 4,
    "window_size": 375,
    "mc_samples": 8,
    "step": 1e-2,
    "seed": 0,
}

DEFAULT_PREDICTION = {"num_samples": 300, "include_observation_noise": True, "seed": 0}


@dataclass
class ExperimentConfig:
    """Validated experiment description (see README for the JSON schema)."""

    dataset: dict
    architecture: list
    training: dict
    prediction: dict
    standardize: bool
    output_dir: str
    seed: int

    @classmethod
    def from_dict(cls, payload):
        payload = copy.deepcopy(payload)
        if "dataset" not in payload or "architecture" not in payload:
            raise DomainError("config needs at least 'dataset' and 'architecture'")
        training = {**DEFAULT_TRAINING, **payload.get("training", {})}
        prediction = {**DEFAULT_PREDICTION, **payload.get("prediction", {})}
        return cls(
            dataset=payload["dataset"],
            architecture=payload["architecture"],
            training=training,
            prediction=prediction,
            standardize=bool(payload.get("standardize", True)),
            output_dir=payload.get("output_dir", "results"),
            seed=int(payload.get("seed", 0)),
        )

    def to_dict(self):
        return {
            "dataset": self.dataset,
            "architecture": self.architecture,
            "training": self.training,
            "prediction": self.prediction,
            "standardize": self.standardize,
            "output_dir": self.output_dir,
            "seed": self.seed,
        }


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return ExperimentConfig.from_dict(json.load(fh))


def _load_dataset(spec):
    kind = spec.get("kind", "csv")
    if kind == "csv":
        ds = data_mod.load_csv(spec["path"], spec["schema"], boundary=spec.get("boundary"))
        if spec.get("fourier_periods"):
            extra = data_mod.fourier_features(
                ds.n, ds.delta, [tuple(p) for p in spec["fourier_periods"]]
            )
            ds = data_mod.TimeSeriesDataset(
                times=ds.times, U=np.column_stack([ds.U, extra]),
                y=ds.y, boundary=ds.boundary,
            )
        return ds
    if kind == "wiener":
        cfg = simulate.SimConfig(
            seed=spec.get("seed", 0),
            horizon=spec.get("horizon", 2500),
            train_boundary=spec.get("boundary", 1500),
            noise_std_fraction=spec.get("noise_std_fraction", 0.1),
            nonlinearity=spec.get("nonlinearity", "positive_part"),
        )
        return data_mod.from_generated(simulate.generate_wiener_dataset(cfg))
    raise DomainError(f"unknown dataset kind {kind!r}")


def _train_svi(arch, train_ds, training):
    cfg = svi.TrainConfig(
        iterations=int(training["iterations"]),
        windows_per_iter=int(training["windows_per_iter"]),
        window_size=int(training["window_size"]),
        mc_samples=int(training["mc_samples"]),
        step=float(training["step"]),
        seed=int(training["seed"]),
    )
    started = time.perf_counter()
    arch, trace = svi.train_svi(arch, train_ds, cfg)
    elapsed = time.perf_counter() - started
    batches = max(1, cfg.iterations * cfg.windows_per_iter)
    return arch, trace, elapsed / batches


def _predict_samples(arch, dataset, prediction):
    pred = svi.predict(
        arch,
        dataset.U,
        num_samples=int(prediction["num_samples"]),
        seed=int(prediction["seed"]),
        include_observation_noise=bool(prediction["include_observation_noise"]),
    )
    return pred.samples


def _run_map(config, dataset):
    """Exact-GP path for a single dynamic layer (MAP hyperparameters)."""
    spec = config.architecture[0]
    training = config.training
    model = exact_gp.DynamicGPModel(
        num_blocks=int(spec.get("num_blocks", 5)),
        n_u=dataset.n_u,
        n_l=int(spec.get("n_l", 1)),
        delta=dataset.delta,
        seed=config.seed,
    )
    grid_data = exact_gp.TimeGridData(
        U=dataset.U, y=dataset.y[: dataset.n_train], delta=dataset.delta
    )
    started = time.perf_counter()
    fitted, trace = exact_gp.fit_map(
        model, grid_data,
        cfg=exact_gp.FitConfig(
            iterations=int(training["iterations"]), step=float(training["step"])
        ),
    )
    per_batch = (time.perf_counter() - started) / max(1, int(training["iterations"]))
    test_idx = np.arange(dataset.n)
    post = exact_gp.posterior_predict(fitted, grid_data, test_idx, include_noise=True)
    rng = np.random.default_rng(int(config.prediction["seed"]))
    samples = post.mean[None, :] + np.sqrt(post.variance)[None, :] * rng.standard_normal(
        (int(config.prediction["num_samples"]), dataset.n)
    )
    return samples, trace, per_batch, {"kind": "map", "model": fitted.values}


def run_experiment(config):
    """Train, predict on the test split, score in original units, write the
    result bundle. Returns the metrics dict."""
    if isinstance(config, dict):
        config = ExperimentConfig.from_dict(config)
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    raw_ds = _load_dataset(config.dataset)
    record = None
    dataset = raw_ds
    if config.standardize:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            dataset, record = data_mod.standardize(raw_ds)

    model_payload = None
    if config.training.get("kind", "svi") == "map":
        samples_std, trace, per_batch, model_payload = _run_map(config, dataset)
        arch_dict = None
    else:
        arch = svi.build_architecture(
            [svi.LayerSpec(**spec) for spec in config.architecture],
            dataset,
            seed=config.seed,
        )
        arch, trace, per_batch = _train_svi(arch, dataset, config.training)
        samples_std = _predict_samples(arch, dataset, config.prediction)
        arch_dict = arch.to_dict()

    samples = record.invert_outputs(samples_std) if record else samples_std
    test = raw_ds.test_slice()
    truth_test = raw_ds.y[test]
    mean_all = samples.mean(axis=0)
    scores = {
        "rmse": metrics.rmse(truth_test, mean_all[test]),
        "mae": metrics.mae(truth_test, mean_all[test]),
        "crps": metrics.crps_from_samples(samples[:, test], truth_test),
        "runtime_per_batch_seconds": per_batch,
    }

    bands = {p: np.percentile(samples, p, axis=0) for p in PERCENTILES}
    _write_metrics(out_dir / "metrics.json", scores)
    _write_predictions(
        out_dir / "predictions.csv", raw_ds.times, mean_all, bands, raw_ds.y
    )
    _write_trace(out_dir / "trace.csv", trace)
    with open(out_dir / "config_resolved.json", "w", encoding="utf-8") as fh:
        json.dump(config.to_dict(), fh, indent=2, sort_keys=True)
    model_blob = {
        "architecture": arch_dict,
        "map_model": None
        if model_payload is None
        else {k: np.asarray(v).tolist() for k, v in model_payload["model"].items()},
        "standardize": record.to_dict() if record else None,
        "dataset": config.dataset,
    }
    with open(out_dir / "model.json", "w", encoding="utf-8") as fh:
        json.dump(model_blob, fh)
    figures.render_prediction_figure(
        out_dir / "predictions.png",
        raw_ds.times,
        mean_all,
        bands,
        truth=raw_ds.y,
        boundary_time=float(raw_ds.times[raw_ds.boundary - 1]),
    )
    figures.render_trace_figure(out_dir / "trace.png", trace)
    return scores


def _write_metrics(path, scores):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scores, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_predictions(path, times, mean, bands, truth):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["t", "mean"] + [f"p{p:g}" for p in PERCENTILES] + ["truth"]
        )
        for k in range(len(times)):
            writer.writerow(
                [repr(float(times[k])), repr(float(mean[k]))]
                + [repr(float(bands[p][k])) for p in PERCENTILES]
                + [repr(float(truth[k]))]
            )


def _write_trace(path, trace):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "objective"])
        for i, v in enumerate(trace):
            writer.writerow([i, repr(float(v))])
