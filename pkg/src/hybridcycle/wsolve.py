"""Test-time recovery of the unmeasured inlet and core mass flows.

With frozen network weights, W2 and W25 are the only free variables; the
objective is the continuity plus power-balance loss of a single sample,
minimized by damped gradient descent with a backtracking line search on the
design-scaled variables. The constraint 0 < W25 < W2 is enforced by
projection after every step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cascade import HybridModel, X_SCHEMA_FD, X_SCHEMA_MC, cascade_backward, cascade_forward
from .errors import ConfigurationError, DegenerateOperatingPointError, DomainError
from .losses import loss_massflow, loss_power

_PHYSICS_ERRORS = (DomainError, DegenerateOperatingPointError, ConfigurationError)


@dataclass
class WSolveResult:
    w2: float
    w25: float
    objective: float
    grad_norm: float  # scaled-variable gradient norm
    iterations: int
    converged: bool


@dataclass(frozen=True)
class WSolveOptions:
    max_iterations: int = 200
    grad_tol: float = 1e-8
    objective_tol: float = 1e-12
    min_w25_margin: float = 0.02  # projection keeps W25 <= (1 - margin) * W2


def similarity_init(t2: float, p2: float, design) -> tuple:
    """Corrected-flow similarity seed scaled from the design point."""
    ratio = (p2 / design.p2) * np.sqrt(design.t2 / t2)
    w2 = design.w2 * ratio
    return w2, w2 / (1.0 + design.bpr)


def _objective(model, sample: dict, schema, areas, gas, shafts, w2, w25):
    row = np.array([[sample[name] if name not in ("W2", "W25") else {"W2": w2, "W25": w25}[name] for name in schema]])
    pred, ctx = cascade_forward(model, row, schema)
    wf = np.array([sample["WF"]])
    t2 = np.array([sample["T2"]])
    l2, d2, f2 = loss_massflow(pred, np.array([w2]), np.array([w25]), wf, areas, gas, model.bleeds)
    l3, d3, f3 = loss_power(pred, t2, np.array([w2]), np.array([w25]), wf, gas, model.bleeds, shafts)
    _, d_x = cascade_backward(model, ctx, d2 + d3)
    iw2 = schema.index("W2")
    iw25 = schema.index("W25")
    g_w2 = d_x[0, iw2] + f2[0, 0] + f3[0, 0]
    g_w25 = d_x[0, iw25] + f2[0, 1] + f3[0, 1]
    return l2 + l3, g_w2, g_w25


def solve_w(
    model: HybridModel,
    sample: dict,
    areas: dict,
    gas,
    shafts,
    init: tuple | None = None,
    design=None,
    opts: WSolveOptions = WSolveOptions(),
) -> WSolveResult:
    """Recover (W2, W25) for one sample by minimizing its thermodynamic loss.

    `sample` maps the remaining input names (T2, P2, Pamb, N1, N2, WF and
    optionally Ma2) to values. init overrides the similarity seed; a design
    record is required when init is omitted. Non-convergence is reported in
    the result, never raised.
    """
    schema = X_SCHEMA_MC if model.include_ma2 else X_SCHEMA_FD
    missing = [n for n in schema if n not in ("W2", "W25") and n not in sample]
    if missing:
        raise ConfigurationError(f"sample lacks inputs {missing}")
    if init is None:
        if design is None:
            raise ConfigurationError("need an explicit init or a design record")
        init = similarity_init(sample["T2"], sample["P2"], design)
    w2, w25 = float(init[0]), float(init[1])
    if not (0.0 < w25 < w2):
        raise ConfigurationError(f"initial flows need 0 < W25 < W2, got {init}")
    s2, s25 = w2, w25  # scale by the initial point

    def project(a, b):
        a = max(a, 1e-2)
        b = min(max(b, 1e-3), (1.0 - opts.min_w25_margin) * a)
        return a, b

    w2, w25 = project(w2, w25)
    f = None
    for shrink in (1.0, 0.9, 0.8, 0.65):
        try:
            f, g2, g25 = _objective(model, sample, schema, areas, gas, shafts, w2, w25 * shrink)
            w25 = w25 * shrink
            break
        except _PHYSICS_ERRORS:
            continue
    if f is None:
        raise ConfigurationError(f"no evaluable starting point near {init}")
    alpha = 1e-2
    iterations = 0
    for iterations in range(1, opts.max_iterations + 1):
        u2, u25 = g2 * s2, g25 * s25  # gradient in scaled variables
        gnorm = float(np.hypot(u2, u25))
        if gnorm < opts.grad_tol or f < opts.objective_tol:
            return WSolveResult(w2, w25, f, gnorm, iterations - 1, True)
        moved = False
        alpha = min(alpha * 2.0, 1.0)
        for _ in range(40):
            cand = project(w2 - alpha * s2 * u2, w25 - alpha * s25 * u25)
            try:
                f_new, g2_new, g25_new = _objective(model, sample, schema, areas, gas, shafts, *cand)
            except _PHYSICS_ERRORS:
                alpha *= 0.5  # candidate left the model's validity region
                continue
            if f_new < f - 1e-4 * alpha * gnorm * gnorm:
                w2, w25 = cand
                f, g2, g25 = f_new, g2_new, g25_new
                moved = True
                break
            alpha *= 0.5
        if not moved:
            # projected stationary point or line-search floor
            return WSolveResult(w2, w25, f, gnorm, iterations, gnorm < 1e-4)
    u2, u25 = g2 * s2, g25 * s25
    return WSolveResult(w2, w25, f, float(np.hypot(u2, u25)), opts.max_iterations, False)


def solve_w_batch(model, ds, areas, gas, shafts, design, init_scale: float | None = None):
    """Per-sample independent solves over a dataset; returns (n, 2) flows plus
    the result records. init_scale (e.g. 0.8) seeds from scaled dataset truth
    when the dataset carries W2/W25 columns; otherwise similarity seeding."""
    flows = np.empty((len(ds), 2))
    results = []
    has_flows = "W2" in ds.x_schema
    for k in range(len(ds)):
        sample = {name: ds.x[k, i] for i, name in enumerate(ds.x_schema)}
        init = None
        if init_scale is not None and has_flows:
            init = (sample["W2"] * init_scale, sample["W25"] * init_scale)
        res = solve_w(model, sample, areas, gas, shafts, init=init, design=design)
        flows[k] = (res.w2, res.w25)
        results.append(res)
    return flows, results
