"""Figure rendering for experiment reports.

Every run writes its delimited outputs plus these rendered companions:
a prediction plot (posterior mean, 68%/95% bands, truth, split marker) and
the training-objective trace.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["render_prediction_figure", "render_trace_figure"]


def render_prediction_figure(path, times, mean, bands, truth=None, boundary_time=None):
    """Posterior mean with credible bands.

    ``bands`` maps percentile level (float) to arrays; expects the 2.5/16/
    84/97.5 levels produced by the harness.
    """
    fig, ax = plt.subplots(figsize=(11, 4))
    if 2.5 in bands and 97.5 in bands:
        ax.fill_between(times, bands[2.5], bands[97.5], alpha=0.25, lw=0,
                        color="tab:blue", label="95% interval")
    if 16.0 in bands and 84.0 in bands:
        ax.fill_between(times, bands[16.0], bands[84.0], alpha=0.35, lw=0,
                        color="tab:blue", label="68% interval")
    ax.plot(times, mean, color="tab:blue", lw=1.2, label="posterior mean")
    if truth is not None:
        ax.plot(times, truth, color="tab:orange", lw=0.9, alpha=0.9, label="observed")
    if boundary_time is not None:
        ax.axvline(boundary_time, color="k", ls="--", lw=1.0, label="train/test split")
    ax.set_xlabel("time")
    ax.set_ylabel("output")
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def render_trace_figure(path, trace):
    fig, ax = plt.subplots(figsize=(7, 3.2))
    trace = np.asarray(trace, dtype=float)
    ax.plot(trace, lw=0.8, alpha=0.6, color="tab:gray", label="objective")
    if len(trace) >= 50:
        kernel = np.ones(50) / 50.0
        smooth = np.convolve(trace, kernel, mode="valid")
        ax.plot(np.arange(len(smooth)) + 49, smooth, lw=1.5, color="tab:red",
                label="smoothed (50)")
    ax.set_xlabel("iteration")
    ax.set_ylabel("objective")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
