"""Two-phase training pipeline.

Phase one fits the cascade to Monte Carlo cycle data under the full
station-parameter loss plus the thermodynamic losses; phase two corrects the
component nets against (synthetic) flight records through an output selector
(typically T6 only) under the same thermodynamic losses. Normalization
constants are fitted on the phase-one training split and frozen afterwards.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .cascade import NET_ORDER, NET_WIRING, HybridModel, Y_SCHEMA, cascade_backward, cascade_forward, infer_mass_flows_model, save_model
from .data import Dataset, SplitDataset
from .errors import ConfigurationError
from .losses import loss_massflow, loss_params_fd, loss_params_mc, loss_power, selector_indices
from .nn import Normalizer, TrainConfig
from .textio import fmt, write_text

_W_GAUGE_FEATURES = {"W3": 3, "W4": 4, "W44": 44, "W13": 13, "W6": 6, "W16": 16, "W64": 64}


@dataclass(frozen=True)
class LossWeights:
    params: float = 1.0
    massflow: float = 1.0
    power: float = 1.0


def _feature_columns(model: HybridModel, ds: Dataset) -> dict:
    """Physical value columns for every feature name, targets included."""
    cols = {name: ds.x[:, k] for k, name in enumerate(ds.x_schema)}
    gauges = infer_mass_flows_model(cols["W2"], cols["W25"], cols["WF"], model.bleeds)
    for name, station in _W_GAUGE_FEATURES.items():
        cols[name] = gauges[station]
    for k, name in enumerate(ds.y_schema):
        cols[name] = ds.y[:, k]
    return cols


def fit_normalizers(model: HybridModel, train_split: Dataset) -> None:
    """Fit every net's input/output standardization on the MC training split."""
    if train_split.y_schema != Y_SCHEMA:
        raise ConfigurationError("normalizers need full station targets (MC data)")
    cols = _feature_columns(model, train_split)
    for name in NET_ORDER:
        net = model.nets[name]
        net.norm_in = Normalizer.fit(np.stack([cols[f] for f in model.net_inputs(name)], axis=1))
        net.norm_out = Normalizer.fit(np.stack([cols[f] for f in NET_WIRING[name][1]], axis=1))


def _flow_columns(ds_schema):
    return tuple(ds_schema.index(name) for name in ("W2", "W25", "WF", "T2"))


def make_loss_fn(model, x_schema, areas, shafts, gas, weights: LossWeights, selector=None):
    """Combined loss closure for nn.train.

    selector None: full-station relative MSE (phase one). Otherwise the
    selector names the target columns (phase two).
    """
    iw2, iw25, iwf, it2 = _flow_columns(x_schema)

    def loss_fn(nets, xb, yb):
        pred, ctx = cascade_forward(model, xb, x_schema)
        w2, w25, wf, t2 = xb[:, iw2], xb[:, iw25], xb[:, iwf], xb[:, it2]
        if selector is None:
            l1, d1 = loss_params_mc(pred, yb)
        else:
            l1, d1 = loss_params_fd(pred, yb, selector)
        l2, d2, _ = loss_massflow(pred, w2, w25, wf, areas, gas, model.bleeds)
        l3, d3, _ = loss_power(pred, t2, w2, w25, wf, gas, model.bleeds, shafts)
        d_pred = weights.params * d1 + weights.massflow * d2 + weights.power * d3
        grads, _ = cascade_backward(model, ctx, d_pred)
        total = weights.params * l1 + weights.massflow * l2 + weights.power * l3
        return total, grads, {"loss1": l1, "loss2": l2, "loss3": l3}

    return loss_fn


def max_rel_errors(model: HybridModel, ds: Dataset) -> dict:
    """Per-target max relative error over all samples (the accuracy measure)."""
    pred, _ = cascade_forward(model, ds.x, ds.x_schema)
    out = {}
    if ds.y_schema == Y_SCHEMA:
        err = np.abs(pred - ds.y) / np.abs(ds.y)
        for k, name in enumerate(Y_SCHEMA):
            out[f"maxerr_{name}"] = float(err[:, k].max())
    else:
        idx = selector_indices(ds.y_schema)
        err = np.abs(pred[:, idx] - ds.y) / np.abs(ds.y)
        for k, name in enumerate(ds.y_schema):
            out[f"maxerr_{name}"] = float(err[:, k].max())
    return out


def _run_phase(model, data: SplitDataset, cfg: TrainConfig, areas, shafts, gas, weights, selector, out_dir, checkpoint_every):
    loss_fn = make_loss_fn(model, data.train.x_schema, areas, shafts, gas, weights, selector)
    nets = {name: model.nets[name].mlp for name in NET_ORDER}

    def eval_fn(_, epoch):
        record = max_rel_errors(model, data.test) if len(data.test) else {}
        if out_dir and checkpoint_every and epoch % checkpoint_every == 0:
            save_model(model, os.path.join(out_dir, "checkpoints", f"epoch_{epoch:06d}"))
        return record

    _, history = nn.train(nets, loss_fn, (data.train.x, data.train.y), cfg, eval_fn=eval_fn)
    if out_dir:
        write_history(history, os.path.join(out_dir, "history.tsv"))
        save_model(model, os.path.join(out_dir, "model"))
        _write_run_config(out_dir, cfg, weights, selector)
    return model, history


def pretrain_mc(
    model: HybridModel,
    data: SplitDataset,
    cfg: TrainConfig,
    areas: dict,
    shafts,
    gas,
    weights: LossWeights = LossWeights(),
    out_dir: str | None = None,
    checkpoint_every: int = 100,
):
    """Phase one: full-station loss plus thermodynamic losses on MC data."""
    if data.train.tag != "mc":
        raise ConfigurationError(f"phase one expects MC data, got tag {data.train.tag!r}")
    fit_normalizers(model, data.train)
    return _run_phase(model, data, cfg, areas, shafts, gas, weights, None, out_dir, checkpoint_every)


def train_fd(
    model: HybridModel,
    data: SplitDataset,
    cfg: TrainConfig,
    selector,
    areas: dict,
    shafts,
    gas,
    weights: LossWeights = LossWeights(),
    out_dir: str | None = None,
    checkpoint_every: int = 100,
):
    """Phase two: selector loss on flight records; normalizers stay frozen."""
    if len(data.train) == 0:
        return model, []
    if data.train.tag != "fd":
        raise ConfigurationError(f"phase two expects FD data, got tag {data.train.tag!r}")
    if tuple(data.train.y_schema) != tuple(selector):
        raise ConfigurationError(f"target schema {data.train.y_schema} mismatches selector {selector}")
    return _run_phase(model, data, cfg, areas, shafts, gas, weights, list(selector), out_dir, checkpoint_every)


def write_history(history, path: str) -> None:
    if not history:
        write_text(path, "# training-history v1\n")
        return
    keys = list(history[0].keys())
    lines = ["# training-history v1", "# " + " ".join(keys)]
    for row in history:
        lines.append(" ".join(str(row[k]) if k == "epoch" else fmt(row[k]) for k in keys))
    write_text(path, "\n".join(lines) + "\n")


def _write_run_config(out_dir, cfg: TrainConfig, weights: LossWeights, selector) -> None:
    lines = [
        "# training-run v1",
        f"epochs = {cfg.epochs}",
        f"learning_rate = {fmt(cfg.learning_rate)}",
        f"decay_factor = {fmt(cfg.decay_factor)}",
        f"decay_every_epochs = {cfg.decay_every_epochs}",
        f"batch_size = {cfg.batch_size}",
        f"seed = {cfg.seed}",
        f"weights = {fmt(weights.params)} {fmt(weights.massflow)} {fmt(weights.power)}",
        f"selector = {' '.join(selector) if selector else 'all'}",
    ]
    write_text(os.path.join(out_dir, "run.config"), "\n".join(lines) + "\n")
