"""Cascaded per-component nets mirroring the engine gas path.

Eight component nets consume the inlet station state plus the variables
needed to fix the exit state, and emit (T, P, Ma) of the exit station(s).
Mass flow gauges come from the exact linear bookkeeping in flows.py and are
never approximated by a net. Nets see standardized features; bookkeeping
stays in physical units.

Dataflow (component: inputs -> outputs):
    lpc:    T2 P2 [Ma2] W2 W25 N1      -> T25 P25 Ma25 T13 P13 Ma13
    hpc:    T25 P25 Ma25 W25 N2        -> T3 P3 Ma3
    burner: T3 P3 Ma3 W3 WF            -> T4 P4 Ma4
    hpt:    T4 P4 Ma4 W4 T3 P3 Ma3 N2  -> T44 P44 Ma44
    lpt:    T44 P44 Ma44 W44 T3 P3 Ma3 N1 -> T6 P6 Ma6
    bypass: T13 P13 Ma13 W13           -> T16 P16 Ma16
    mixer:  T6 P6 Ma6 W6 T16 P16 Ma16 W16 -> T64 P64 Ma64
    nozzle: T64 P64 Ma64 W64 Pamb      -> T8 P8 Ma8
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, SchemaError
from .flows import Bleeds, flow_coefficients, infer_mass_flows
from .nn import HIDDEN_WIDTH, Mlp, MlpGrads, Normalizer, backward, forward_cached, init_mlp, mlp_from_lines, mlp_to_lines
from .textio import write_text

NET_ORDER = ("lpc", "hpc", "burner", "hpt", "lpt", "bypass", "mixer", "nozzle")

NET_WIRING = {
    "lpc": (["T2", "P2", "Ma2", "W2", "W25", "N1"], ["T25", "P25", "Ma25", "T13", "P13", "Ma13"]),
    "hpc": (["T25", "P25", "Ma25", "W25", "N2"], ["T3", "P3", "Ma3"]),
    "burner": (["T3", "P3", "Ma3", "W3", "WF"], ["T4", "P4", "Ma4"]),
    "hpt": (["T4", "P4", "Ma4", "W4", "T3", "P3", "Ma3", "N2"], ["T44", "P44", "Ma44"]),
    "lpt": (["T44", "P44", "Ma44", "W44", "T3", "P3", "Ma3", "N1"], ["T6", "P6", "Ma6"]),
    "bypass": (["T13", "P13", "Ma13", "W13"], ["T16", "P16", "Ma16"]),
    "mixer": (["T6", "P6", "Ma6", "W6", "T16", "P16", "Ma16", "W16"], ["T64", "P64", "Ma64"]),
    "nozzle": (["T64", "P64", "Ma64", "W64", "Pamb"], ["T8", "P8", "Ma8"]),
}

OUTPUT_STATIONS = (25, 13, 3, 4, 44, 6, 16, 64, 8)
Y_SCHEMA = tuple(f"{q}{s}" for s in OUTPUT_STATIONS for q in ("T", "P", "Ma"))
X_SCHEMA_MC = ("T2", "P2", "Ma2", "Pamb", "N1", "N2", "W2", "W25", "WF")
X_SCHEMA_FD = ("T2", "P2", "Pamb", "N1", "N2", "W2", "W25", "WF")

# W-gauge value names consumed by nets, with their bookkeeping station
_W_GAUGE_STATIONS = {"W3": 3, "W4": 4, "W44": 44, "W13": 13, "W6": 6, "W16": 16, "W64": 64}


@dataclass(frozen=True)
class EngineInputs:
    """The nine engine-level network inputs (Ma2 optional)."""

    T2: float
    P2: float
    Pamb: float
    N1: float
    N2: float
    W2: float
    W25: float
    WF: float
    Ma2: float | None = None

    def __post_init__(self):
        if min(self.T2, self.P2, self.Pamb, self.N1, self.N2, self.W2) <= 0.0:
            raise ConfigurationError("engine inputs must be positive")
        if not (0.0 < self.W25 < self.W2):
            raise ConfigurationError(f"need 0 < W25 < W2, got {self.W25} vs {self.W2}")
        if not (0.0 <= self.WF < 0.05 * self.W2):
            raise ConfigurationError(f"fuel flow {self.WF} outside [0, 0.05 W2)")


@dataclass
class ComponentNet:
    mlp: Mlp
    norm_in: Normalizer
    norm_out: Normalizer


@dataclass
class StationOutputs:
    """Cascade outputs: full (T, P, Ma) for the predicted stations and the
    bookkeeping mass flow for every gauged station (cooling planes carry W only)."""

    states: dict  # station -> (T, P, Ma)
    w: dict  # station -> mass flow


@dataclass
class HybridModel:
    nets: dict  # name -> ComponentNet
    bleeds: Bleeds
    include_ma2: bool = False

    def __post_init__(self):
        for name in NET_ORDER:
            if name not in self.nets:
                raise SchemaError(f"missing component net {name!r}")
            dims = self.nets[name].mlp.layer_dims
            n_in, n_out = expected_dims(name, self.include_ma2)
            if dims[0] != n_in or dims[-1] != n_out:
                raise SchemaError(
                    f"{name} net is {dims[0]}->{dims[-1]}, contract requires {n_in}->{n_out}"
                )

    def net_inputs(self, name: str) -> list:
        feats = NET_WIRING[name][0]
        if not self.include_ma2:
            feats = [f for f in feats if f != "Ma2"]
        return feats

    @property
    def n_params(self) -> int:
        return sum(self.nets[name].mlp.n_params for name in NET_ORDER)


def expected_dims(name: str, include_ma2: bool):
    ins, outs = NET_WIRING[name]
    n_in = len(ins) - (0 if include_ma2 or "Ma2" not in ins else 1)
    return n_in, len(outs)


def build_model(seed: int, bleeds: Bleeds | None = None, include_ma2: bool = False, hidden: int = HIDDEN_WIDTH) -> HybridModel:
    """Fresh model with He-initialized four-layer nets and unit normalizers."""
    children = np.random.SeedSequence(seed).spawn(len(NET_ORDER))
    nets = {}
    for child, name in zip(children, NET_ORDER):
        n_in, n_out = expected_dims(name, include_ma2)
        mlp = init_mlp([n_in, hidden, hidden, n_out], seed=child)
        # small output layer: initial predictions hug the output-normalizer
        # means, keeping the power-loss denominators physical from epoch one
        mlp.weights[-1] *= 0.1
        nets[name] = ComponentNet(
            mlp,
            Normalizer(np.zeros(n_in), np.ones(n_in)),
            Normalizer(np.zeros(n_out), np.ones(n_out)),
        )
    return HybridModel(nets=nets, bleeds=bleeds or Bleeds(), include_ma2=include_ma2)


def infer_mass_flows_model(w2, w25, wf, bleeds: Bleeds):
    """Vectorized station gauges for array-valued (w2, w25, wf)."""
    if np.any(w25 >= w2) or np.any(w25 <= 0.0) or np.any(wf < 0.0):
        raise ConfigurationError("need W2 > W25 > 0 and WF >= 0 in every sample")
    return {s: a * w2 + b * w25 + c * wf for s, (a, b, c) in flow_coefficients(bleeds).items()}


def _values_from_x(model: HybridModel, x: np.ndarray, x_schema) -> dict:
    cols = {name: x[:, k] for k, name in enumerate(x_schema)}
    for required in ("T2", "P2", "Pamb", "N1", "N2", "W2", "W25", "WF"):
        if required not in cols:
            raise SchemaError(f"input schema lacks {required}")
    if model.include_ma2 and "Ma2" not in cols:
        raise SchemaError("model consumes Ma2 but the input schema lacks it")
    gauges = infer_mass_flows_model(cols["W2"], cols["W25"], cols["WF"], model.bleeds)
    for name, station in _W_GAUGE_STATIONS.items():
        cols[name] = gauges[station]
    return cols


def cascade_forward(model: HybridModel, x: np.ndarray, x_schema=X_SCHEMA_MC):
    """Batch cascade evaluation: returns (Y, ctx) with Y ordered per Y_SCHEMA."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != len(x_schema):
        raise SchemaError(f"x shape {x.shape} mismatches schema of {len(x_schema)}")
    values = _values_from_x(model, x, x_schema)
    caches = {}
    for name in NET_ORDER:
        feats = model.net_inputs(name)
        net = model.nets[name]
        x_net = np.stack([values[f] for f in feats], axis=1)
        y_norm, acts = forward_cached(net.mlp, net.norm_in.encode(x_net))
        y_phys = net.norm_out.decode(y_norm)
        if not np.isfinite(y_phys).all():
            raise ConfigurationError(f"non-finite output of component net {name!r}")
        caches[name] = acts
        for k, out_name in enumerate(NET_WIRING[name][1]):
            values[out_name] = y_phys[:, k]
    y = np.stack([values[name] for name in Y_SCHEMA], axis=1)
    ctx = {"values": values, "caches": caches, "x_schema": tuple(x_schema), "n": len(x)}
    return y, ctx


def cascade_backward(model: HybridModel, ctx, d_y: np.ndarray):
    """Chain-rule pass for upstream station-output gradients d_y (n, 27).

    Returns ({net name: MlpGrads}, d_x (n, len(x_schema))) where d_x includes
    the paths through the linear mass-flow bookkeeping.
    """
    n = ctx["n"]
    if d_y.shape != (n, len(Y_SCHEMA)):
        raise SchemaError(f"upstream gradient shape {d_y.shape} mismatches ({n}, {len(Y_SCHEMA)})")
    d_vals = {name: d_y[:, k].copy() for k, name in enumerate(Y_SCHEMA)}
    param_grads = {}
    for name in reversed(NET_ORDER):
        net = model.nets[name]
        outs = NET_WIRING[name][1]
        d_out_phys = np.stack(
            [d_vals.get(out_name, np.zeros(n)) for out_name in outs], axis=1
        )
        d_out_norm = d_out_phys * net.norm_out.std
        grads, d_in_norm = backward(net.mlp, ctx["caches"][name], d_out_norm)
        param_grads[name] = grads
        d_in_phys = d_in_norm / net.norm_in.std
        for k, feat in enumerate(model.net_inputs(name)):
            if feat in d_vals:
                d_vals[feat] += d_in_phys[:, k]
            else:
                d_vals[feat] = d_in_phys[:, k].copy()
    # route W-gauge gradients into the linear bookkeeping inputs
    coeffs = flow_coefficients(model.bleeds)
    for gauge, station in _W_GAUGE_STATIONS.items():
        if gauge not in d_vals:
            continue
        a, b, c = coeffs[station]
        g = d_vals.pop(gauge)
        for target, weight in (("W2", a), ("W25", b), ("WF", c)):
            if weight != 0.0:
                d_vals[target] = d_vals.get(target, np.zeros(n)) + weight * g
    d_x = np.zeros((n, len(ctx["x_schema"])))
    for k, name in enumerate(ctx["x_schema"]):
        if name in d_vals:
            d_x[:, k] = d_vals[name]
    return param_grads, d_x


def _inputs_to_row(model: HybridModel, inputs: EngineInputs):
    if model.include_ma2:
        if inputs.Ma2 is None:
            raise ConfigurationError("model consumes Ma2 but it was not provided")
        schema = X_SCHEMA_MC
        row = [inputs.T2, inputs.P2, inputs.Ma2, inputs.Pamb, inputs.N1, inputs.N2, inputs.W2, inputs.W25, inputs.WF]
    else:
        schema = X_SCHEMA_FD
        row = [inputs.T2, inputs.P2, inputs.Pamb, inputs.N1, inputs.N2, inputs.W2, inputs.W25, inputs.WF]
    return np.array([row]), schema


def forward_cascade(model: HybridModel, inputs: EngineInputs) -> StationOutputs:
    """Single-sample cascade returning station states plus all flow gauges."""
    x, schema = _inputs_to_row(model, inputs)
    y, _ = cascade_forward(model, x, schema)
    states = {
        s: tuple(y[0, 3 * k : 3 * k + 3]) for k, s in enumerate(OUTPUT_STATIONS)
    }
    w = infer_mass_flows(inputs.W2, inputs.W25, inputs.WF, model.bleeds)
    w[2] = inputs.W2
    w[25] = inputs.W25
    return StationOutputs(states=states, w=w)


def gradient_through_cascade(model: HybridModel, inputs: EngineInputs, upstream: np.ndarray):
    """Single-sample chain-rule pass: upstream is (27,) ordered per Y_SCHEMA.

    Returns ({net: MlpGrads}, {input name: gradient}) including d/dW2, d/dW25.
    """
    x, schema = _inputs_to_row(model, inputs)
    _, ctx = cascade_forward(model, x, schema)
    grads, d_x = cascade_backward(model, ctx, np.asarray(upstream, dtype=float).reshape(1, -1))
    return grads, {name: d_x[0, k] for k, name in enumerate(schema)}


# ---------------------------------------------------------------------------
# checkpoint bundle: <dir>/model.manifest plus one <net>.net file per component

_MANIFEST_HEADER = "hybrid-model v1"


def save_model(model: HybridModel, dirpath: str) -> None:
    lines = [f"# {_MANIFEST_HEADER}"]
    lines.append(f"include_ma2 = {int(model.include_ma2)}")
    b = model.bleeds
    lines.append(f"bleeds = {b.hpt_cl!r} {b.hngv_cl!r} {b.lngv_cl!r} {b.c2b!r}")
    lines.append("nets = " + " ".join(NET_ORDER))
    write_text(os.path.join(dirpath, "model.manifest"), "\n".join(lines) + "\n")
    for name in NET_ORDER:
        net = model.nets[name]
        body = "\n".join(mlp_to_lines(net.mlp, net.norm_in, net.norm_out))
        write_text(os.path.join(dirpath, f"{name}.net"), body + "\n")


def load_model(dirpath: str) -> HybridModel:
    path = os.path.join(dirpath, "model.manifest")
    with open(path) as f:
        lines = f.read().splitlines()
    if not lines or lines[0] != f"# {_MANIFEST_HEADER}":
        raise SchemaError(f"{path}: not a {_MANIFEST_HEADER} bundle")
    kv = {}
    for line in lines[1:]:
        if line.strip():
            key, _, val = line.partition("=")
            kv[key.strip()] = val.strip()
    include_ma2 = bool(int(kv["include_ma2"]))
    bleeds = Bleeds(*(float(tok) for tok in kv["bleeds"].split()))
    nets = {}
    for name in NET_ORDER:
        with open(os.path.join(dirpath, f"{name}.net")) as f:
            mlp, n_in, n_out = mlp_from_lines(f.read().splitlines())
        nets[name] = ComponentNet(mlp, n_in, n_out)
    return HybridModel(nets=nets, bleeds=bleeds, include_ma2=include_ma2)
