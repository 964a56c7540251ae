"""Accuracy metrics, the deep single-net baseline, and comparison reports.

The report machinery works on per-sample predictions so every number in the
emitted tables can be recomputed from the raw error files alongside them.
Quantiles interpolate linearly between closest ranks; the standard deviation
is the population form (ddof = 0). Histograms use 0.5-percentage-point bins
from zero to the maximum error.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import nn
from .data import Dataset
from .errors import ConfigurationError
from .nn import Mlp, Normalizer, TrainConfig, forward_cached, init_mlp
from .textio import fmt, fmt_row, write_text

HISTOGRAM_BIN = 0.005  # relative error per bin (0.5 percentage points)
TNN_HIDDEN_LAYERS = 28


@dataclass
class ErrorStats:
    mean: float
    std: float
    q25: float
    q50: float
    q75: float
    max: float
    bin_edges: np.ndarray
    counts: np.ndarray


def relative_error_stats(pred, truth, bin_width: float = HISTOGRAM_BIN) -> ErrorStats:
    """Statistics of |pred - truth| / truth."""
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape or pred.size == 0:
        raise ConfigurationError(f"prediction/truth shapes {pred.shape} vs {truth.shape}")
    if np.any(truth == 0.0):
        raise ConfigurationError("zero truth value in relative error")
    err = np.abs(pred - truth) / np.abs(truth)
    q25, q50, q75 = np.quantile(err, [0.25, 0.5, 0.75])  # linear rank interpolation
    emax = float(err.max())
    n_bins = max(int(np.ceil(emax / bin_width)), 1)
    edges = np.arange(n_bins + 1) * bin_width
    counts, _ = np.histogram(err, bins=edges) if emax > 0 else (np.array([len(err)]), None)
    if emax > 0 and counts.sum() < len(err):  # values exactly at the top edge
        counts[-1] += len(err) - counts.sum()
    if emax == 0:
        edges = np.array([0.0, bin_width])
    return ErrorStats(
        mean=float(err.mean()),
        std=float(err.std()),
        q25=float(q25),
        q50=float(q50),
        q75=float(q75),
        max=emax,
        bin_edges=edges,
        counts=counts,
    )


def raw_errors(pred, truth) -> np.ndarray:
    return np.abs(np.asarray(pred) - np.asarray(truth)) / np.abs(np.asarray(truth))


# ---------------------------------------------------------------------------
# deep single-net baseline


@dataclass
class TnnBaseline:
    """One deep fully connected net predicting T6 directly from the inputs."""

    mlp: Mlp
    norm_in: Normalizer
    norm_out: Normalizer
    x_schema: tuple


def train_tnn_baseline(
    data,
    cfg: TrainConfig,
    hidden: int = nn.HIDDEN_WIDTH,
    depth: int = TNN_HIDDEN_LAYERS,
    seed: int = 0,
):
    """Train the baseline on flight data with the T6 relative-MSE loss only.

    The thermodynamic losses need station states the single net never
    predicts, so they cannot constrain it. Returns (baseline, history).
    """
    train_split = data.train
    if tuple(train_split.y_schema) != ("T6",):
        raise ConfigurationError("baseline expects T6 targets")
    dims = [len(train_split.x_schema)] + [hidden] * depth + [1]
    mlp = init_mlp(dims, seed=seed)
    mlp.weights[-1] *= 0.1
    norm_in = Normalizer.fit(train_split.x)
    norm_out = Normalizer.fit(train_split.y)

    def loss_fn(nets, xb, yb):
        net = nets["tnn"]
        y_norm, acts = forward_cached(net, norm_in.encode(xb))
        pred = norm_out.decode(y_norm)
        diff = (pred - yb) / yb
        n = len(xb)
        loss = float((diff * diff).sum()) / n
        upstream = 2.0 * diff / (yb * n) * norm_out.std
        grads, _ = nn.backward(net, acts, upstream)
        return loss, {"tnn": grads}, {}

    _, history = nn.train({"tnn": mlp}, loss_fn, (train_split.x, train_split.y), cfg)
    return TnnBaseline(mlp, norm_in, norm_out, tuple(train_split.x_schema)), history


def tnn_predict(baseline: TnnBaseline, ds: Dataset) -> np.ndarray:
    if tuple(ds.x_schema) != baseline.x_schema:
        raise ConfigurationError(f"schema {ds.x_schema} mismatches baseline {baseline.x_schema}")
    y_norm, _ = forward_cached(baseline.mlp, baseline.norm_in.encode(ds.x))
    return baseline.norm_out.decode(y_norm)[:, 0]


def save_tnn(baseline: TnnBaseline, dirpath: str) -> None:
    lines = ["# tnn-baseline v1", "x_schema " + " ".join(baseline.x_schema)]
    lines += nn.mlp_to_lines(baseline.mlp, baseline.norm_in, baseline.norm_out)
    write_text(os.path.join(dirpath, "tnn.net"), "\n".join(lines) + "\n")


def load_tnn(dirpath: str) -> TnnBaseline:
    from .errors import SchemaError

    path = os.path.join(dirpath, "tnn.net")
    with open(path) as f:
        lines = f.read().splitlines()
    if not lines or lines[0] != "# tnn-baseline v1":
        raise SchemaError(f"{path}: not a tnn-baseline file")
    schema = tuple(lines[1].split()[1:])
    mlp, norm_in, norm_out = nn.mlp_from_lines(lines[2:])
    return TnnBaseline(mlp, norm_in, norm_out, schema)


# ---------------------------------------------------------------------------
# comparison report


def compare_report(predictions: dict, truth: np.ndarray, report_dir: str) -> dict:
    """Emit the comparison table and per-model raw error / histogram files.

    predictions: ordered {model name: per-sample T6 predictions}. Returns the
    per-model ErrorStats. Every table number is recomputable from the raw
    error files; the histogram bin width is 0.5 percentage points.
    """
    stats = {}
    table = [
        "# accuracy-report v1",
        "# relative T6 error; std is population (ddof=0); quantiles use linear rank interpolation",
        "# model mean std q25 q50 q75 max median_over_mean",
    ]
    for name, pred in predictions.items():
        st = relative_error_stats(pred, truth)
        stats[name] = st
        ratio = st.q50 / st.mean if st.mean > 0 else 1.0
        table.append(
            f"{name} " + fmt_row([st.mean, st.std, st.q25, st.q50, st.q75, st.max, ratio])
        )
        errors = raw_errors(pred, truth)
        write_text(
            os.path.join(report_dir, f"errors_{name}.txt"),
            "# per-sample relative T6 error\n" + "\n".join(fmt(e) for e in errors) + "\n",
        )
        hist_lines = ["# bin_lo bin_hi count"]
        for k in range(len(st.counts)):
            hist_lines.append(fmt_row([st.bin_edges[k], st.bin_edges[k + 1], st.counts[k]]))
        write_text(os.path.join(report_dir, f"hist_{name}.csv"), "\n".join(hist_lines) + "\n")
    write_text(os.path.join(report_dir, "stats.txt"), "\n".join(table) + "\n")
    return stats
