"""Training losses: relative station-parameter error, mass-flow continuity,
and shaft power balance, all with analytic gradients.

Continuity compares each station's bookkeeping flow gauge against the
compressible flow function Q(T, P, Ma, A) evaluated from the predicted
station state; the power loss compares gauge enthalpy flows across the two
spools. Both are relative, so they vanish exactly on reference-model
solutions. Gradients are returned with respect to the predicted (T, P, Ma)
batch and with respect to (W2, W25, WF), including the fuel-air-ratio
chain through the flow gauges.

All batch math is vectorized; the scalar property functions in gas.py are
the independent oracle the vectorized forms are tested against.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cascade import OUTPUT_STATIONS, Y_SCHEMA
from .errors import ConfigurationError, DegenerateOperatingPointError, DomainError
from .flows import FUELED_STATIONS, Bleeds, flow_coefficients
from .gas import GasModel

LOSS2_STATIONS = OUTPUT_STATIONS  # every station with a predicted full state

_IDX = {name: k for k, name in enumerate(Y_SCHEMA)}


@dataclass(frozen=True)
class LossBreakdown:
    loss1: float
    loss2: float
    loss3: float

    @property
    def total(self) -> float:
        return self.loss1 + self.loss2 + self.loss3


# ---------------------------------------------------------------------------
# vectorized gas property forms (cross-checked against gas.py scalars)


def _cp_arr(gas: GasModel, t, far):
    z = t / 1000.0
    a0, a1, a2, a3 = gas.cp_air
    b0, b1 = gas.cp_far
    return a0 + z * (a1 + z * (a2 + z * a3)) + far * (b0 + b1 * z)


def _h_arr(gas: GasModel, t, far):
    z = t / 1000.0
    zr = gas.t_ref / 1000.0
    a0, a1, a2, a3 = gas.cp_air
    b0, b1 = gas.cp_far
    h_air = (
        a0 * (z - zr)
        + a1 * (z * z - zr * zr) / 2.0
        + a2 * (z**3 - zr**3) / 3.0
        + a3 * (z**4 - zr**4) / 4.0
    )
    return 1000.0 * (h_air + far * (b0 * (z - zr) + b1 * (z * z - zr * zr) / 2.0))


def _hfar_arr(gas: GasModel, t):
    z = t / 1000.0
    zr = gas.t_ref / 1000.0
    b0, b1 = gas.cp_far
    return 1000.0 * (b0 * (z - zr) + b1 * (z * z - zr * zr) / 2.0)


def _gamma_partials_arr(gas: GasModel, t, far):
    """(gamma, dgamma/dT, dgamma/dfar) vectorized."""
    z = t / 1000.0
    a0, a1, a2, a3 = gas.cp_air
    b0, b1 = gas.cp_far
    cp = a0 + z * (a1 + z * (a2 + z * a3)) + far * (b0 + b1 * z)
    cp_t = (a1 + z * (2.0 * a2 + z * 3.0 * a3) + far * b1) / 1000.0
    cp_far = b0 + b1 * z
    cv = cp - gas.R
    return cp / cv, -gas.R * cp_t / (cv * cv), -gas.R * cp_far / (cv * cv)


def _q_partials_arr(ma, gamma):
    """(q, dq/dMa, dq/dgamma) vectorized.

    Negative Mach predictions can occur mid-training; the odd extension
    q(-m) = -q(m) keeps the continuity residual smooth there and its gradient
    pointing back toward physical values (q is odd in Ma, so dq/dMa is even)."""
    e = (gamma + 1.0) / (2.0 * (gamma - 1.0))
    de = -1.0 / (gamma - 1.0) ** 2
    u = 1.0 + 0.5 * (gamma - 1.0) * ma * ma
    b = ((gamma + 1.0) / 2.0) ** e
    q = ma * b * u**-e
    dq_dma = b * u ** (-e - 1.0) * (u - e * (gamma - 1.0) * ma * ma)
    with np.errstate(divide="ignore", invalid="ignore"):
        dq_dg = np.where(
            ma != 0.0,
            q * (de * np.log((gamma + 1.0) / (2.0 * u)) + e / (gamma + 1.0) - e * ma * ma / (2.0 * u)),
            0.0,
        )
    return q, dq_dma, dq_dg


def _flow_q_partials(gas: GasModel, t, p, ma, area, far):
    """Q and its partials w.r.t. (T, P, Ma, far), vectorized, P in kPa."""
    g, g_t, g_far = _gamma_partials_arr(gas, t, far)
    e = (g + 1.0) / (2.0 * (g - 1.0))
    de = -1.0 / (g - 1.0) ** 2
    k = np.sqrt(g / gas.R) * (2.0 / (g + 1.0)) ** e
    dk_dg = k * (0.5 / g + de * np.log(2.0 / (g + 1.0)) - e / (g + 1.0))
    q, dq_dma, dq_dg = _q_partials_arr(ma, g)
    base = (p * 1000.0) * area / np.sqrt(t)
    Q = k * base * q
    dQ_dg = base * (dk_dg * q + k * dq_dg)
    dQ_dt = -Q / (2.0 * t) + dQ_dg * g_t
    dQ_dp = Q / p
    dQ_dma = k * base * dq_dma
    dQ_dfar = dQ_dg * g_far
    return Q, dQ_dt, dQ_dp, dQ_dma, dQ_dfar


# ---------------------------------------------------------------------------
# station-parameter losses


def loss_params_mc(pred: np.ndarray, target: np.ndarray):
    """Mean over samples of the component-mean squared relative error."""
    if pred.shape != target.shape or len(pred) == 0:
        raise ConfigurationError(f"batch shapes {pred.shape} vs {target.shape}")
    if np.any(target == 0.0):
        raise ConfigurationError("zero target makes the relative error undefined")
    n, k = pred.shape
    diff = (pred - target) / target
    loss = float((diff * diff).sum()) / (n * k)
    d_pred = 2.0 * diff / (target * n * k)
    return loss, d_pred


def loss_params_fd(pred: np.ndarray, target: np.ndarray, selector):
    """Same form restricted to the selected outputs (selector: Y_SCHEMA names)."""
    idx = selector_indices(selector)
    if target.shape != (len(pred), len(idx)):
        raise ConfigurationError(f"target shape {target.shape} mismatches selector {selector}")
    sub = pred[:, idx]
    if np.any(target == 0.0):
        raise ConfigurationError("zero target makes the relative error undefined")
    n, k = sub.shape
    diff = (sub - target) / target
    loss = float((diff * diff).sum()) / (n * k)
    d_pred = np.zeros_like(pred)
    d_pred[:, idx] = 2.0 * diff / (target * n * k)
    return loss, d_pred


def selector_indices(selector):
    try:
        return [_IDX[name] for name in selector]
    except KeyError as exc:
        raise ConfigurationError(f"unknown output name {exc.args[0]!r} in selector") from None


# ---------------------------------------------------------------------------
# thermodynamic losses


def _gauges_with_partials(bleeds: Bleeds, w2, w25, wf):
    """Station gauge values and their (a, b, c) coefficients, incl. station 25."""
    coeffs = dict(flow_coefficients(bleeds))
    coeffs[25] = (0.0, 1.0, 0.0)
    values = {s: a * w2 + b * w25 + c * wf for s, (a, b, c) in coeffs.items()}
    return values, coeffs


def loss_massflow(pred: np.ndarray, w2, w25, wf, areas: dict, gas: GasModel, bleeds: Bleeds):
    """Continuity loss over the predicted stations.

    Returns (loss, d_pred, d_flows) where d_flows has columns (W2, W25, WF).
    """
    n = len(pred)
    if n == 0:
        raise ConfigurationError("empty batch")
    gauges, coeffs = _gauges_with_partials(bleeds, w2, w25, wf)
    m = len(LOSS2_STATIONS)
    loss = 0.0
    d_pred = np.zeros_like(pred)
    d_flows = np.zeros((n, 3))
    for station in LOSS2_STATIONS:
        if station not in areas:
            raise ConfigurationError(f"no sized area for station {station}")
        t = pred[:, _IDX[f"T{station}"]]
        p = pred[:, _IDX[f"P{station}"]]
        ma = pred[:, _IDX[f"Ma{station}"]]
        if np.any(t <= 0.0):
            raise DomainError(f"non-positive predicted temperature at station {station}")
        w = gauges[station]
        a, b, c = coeffs[station]
        fueled = station in FUELED_STATIONS
        if fueled:
            d = w - wf
            far = wf / d
        else:
            far = np.zeros(n)
        Q, dQ_dt, dQ_dp, dQ_dma, dQ_dfar = _flow_q_partials(gas, t, p, ma, areas[station], far)
        r = (w - Q) / w
        loss += float((r * r).sum())
        base = 2.0 * r / (n * m)
        d_pred[:, _IDX[f"T{station}"]] += base * (-dQ_dt / w)
        d_pred[:, _IDX[f"P{station}"]] += base * (-dQ_dp / w)
        d_pred[:, _IDX[f"Ma{station}"]] += base * (-dQ_dma / w)
        # dr/dW at fixed far, plus the far chain through the gauge
        dr_dw = Q / (w * w)
        if fueled:
            dfar = (-wf * a / (d * d), -wf * b / (d * d), (d - wf * (c - 1.0)) / (d * d))
        else:
            dfar = (0.0, 0.0, 0.0)
        dr_dfar = -dQ_dfar / w
        for col, (coef, dfar_col) in enumerate(zip((a, b, c), dfar)):
            d_flows[:, col] += base * (dr_dw * coef + dr_dfar * dfar_col)
    return loss / (n * m), d_pred, d_flows


def enthalpy_flow_terms(pred: np.ndarray, t2, w2, w25, wf, gas: GasModel, bleeds: Bleeds):
    """Mass-flow-weighted enthalpy rises/drops [W] of the four turbomachines.

    Returns a dict with keys lpt, hpt, hpc, lpc holding (n,) arrays.
    """
    gauges, _ = _gauges_with_partials(bleeds, w2, w25, wf)
    for required in ("T44", "T6", "T4", "T3", "T25", "T13"):
        if required not in _IDX:
            raise ConfigurationError(f"missing station column {required}")

    def h_at(station):
        t = pred[:, _IDX[f"T{station}"]]
        w = gauges[station]
        far = wf / (w - wf) if station in FUELED_STATIONS else 0.0
        return w * _h_arr(gas, t, far)

    t3 = pred[:, _IDX["T3"]]
    h3_air = _h_arr(gas, t3, 0.0)
    dh_lpt = h_at(44) + w25 * bleeds.lngv_cl * h3_air - h_at(6)
    dh_hpt = h_at(4) + w25 * bleeds.hngv_cl * h3_air - (h_at(44) - w25 * bleeds.hpt_cl * h3_air)
    dh_hpc = h_at(3) + w25 * bleeds.lngv_cl * h3_air - w25 * _h_arr(gas, pred[:, _IDX["T25"]], 0.0)
    dh_lpc = (
        gauges[13] * _h_arr(gas, pred[:, _IDX["T13"]], 0.0)
        + w25 * _h_arr(gas, pred[:, _IDX["T25"]], 0.0)
        - w2 * _h_arr(gas, np.asarray(t2, dtype=float), 0.0)
    )
    return {"lpt": dh_lpt, "hpt": dh_hpt, "hpc": dh_hpc, "lpc": dh_lpc}


def enthalpy_terms(stations: dict, w: dict, gas: GasModel, bleeds: Bleeds, wf: float, t2: float):
    """Scalar convenience form over a station-state mapping (T values), using
    the same gauge bookkeeping as the batched enthalpy_flow_terms."""
    pred = np.zeros((1, len(Y_SCHEMA)))
    for s in OUTPUT_STATIONS:
        pred[0, _IDX[f"T{s}"]] = stations[s]
    out = enthalpy_flow_terms(pred, np.array([t2]), np.array([w[2]]), np.array([w[25]]), np.array([wf]), gas, bleeds)
    return {key: float(val[0]) for key, val in out.items()}


def loss_power(pred: np.ndarray, t2, w2, w25, wf, gas: GasModel, bleeds: Bleeds, shafts):
    """Shaft power imbalance loss.

    (1/N) sum of squared relative LP and HP imbalances; the HP term subtracts
    the spool power extraction. Returns (loss, d_pred, d_flows).
    """
    n = len(pred)
    gauges, coeffs = _gauges_with_partials(bleeds, w2, w25, wf)
    terms = enthalpy_flow_terms(pred, t2, w2, w25, wf, gas, bleeds)
    dh_lpt, dh_hpt = terms["lpt"], terms["hpt"]
    dh_hpc, dh_lpc = terms["hpc"], terms["lpc"]
    # relative imbalances divide by the turbine terms; tens of watts against
    # megawatt-scale machines means the state collapsed, not a valid point
    if np.any(np.abs(dh_lpt) < 100.0) or np.any(np.abs(dh_hpt) < 100.0):
        raise DegenerateOperatingPointError("turbine enthalpy drop vanished in batch")
    a_lp = (shafts.eta_l * dh_lpt - dh_lpc) / dh_lpt
    b_hp = (shafts.eta_h * dh_hpt - dh_hpc - shafts.p_ext) / dh_hpt
    loss = float((a_lp * a_lp + b_hp * b_hp).sum()) / n

    # d(loss)/d(term) for the four enthalpy flows
    d_lp = 2.0 * a_lp / n
    d_hp = 2.0 * b_hp / n
    d_dh_lpt = d_lp * (shafts.eta_l - a_lp) / dh_lpt
    d_dh_lpc = d_lp * (-1.0 / dh_lpt)
    d_dh_hpt = d_hp * (shafts.eta_h - b_hp) / dh_hpt
    d_dh_hpc = d_hp * (-1.0 / dh_hpt)

    d_pred = np.zeros_like(pred)
    d_flows = np.zeros((n, 3))

    t = {s: pred[:, _IDX[f"T{s}"]] for s in (44, 6, 4, 3, 25, 13)}
    far = {}
    for s in (44, 6, 4, 3):
        d = gauges[s] - wf
        far[s] = wf / d
    cp44 = _cp_arr(gas, t[44], far[44])
    cp6 = _cp_arr(gas, t[6], far[6])
    cp4 = _cp_arr(gas, t[4], far[4])
    cp3_far = _cp_arr(gas, t[3], far[3])
    cp3_air = _cp_arr(gas, t[3], 0.0)
    cp25 = _cp_arr(gas, t[25], 0.0)
    cp13 = _cp_arr(gas, t[13], 0.0)
    h3_air = _h_arr(gas, t[3], 0.0)

    # temperature gradients
    d_pred[:, _IDX["T44"]] += d_dh_lpt * gauges[44] * cp44 + d_dh_hpt * (-gauges[44] * cp44)
    d_pred[:, _IDX["T6"]] += d_dh_lpt * (-gauges[6] * cp6)
    d_pred[:, _IDX["T4"]] += d_dh_hpt * gauges[4] * cp4
    d_pred[:, _IDX["T25"]] += d_dh_hpc * (-w25 * cp25) + d_dh_lpc * (w25 * cp25)
    d_pred[:, _IDX["T13"]] += d_dh_lpc * gauges[13] * cp13
    d_pred[:, _IDX["T3"]] += (
        d_dh_lpt * (w25 * bleeds.lngv_cl * cp3_air)
        + d_dh_hpt * (w25 * (bleeds.hngv_cl + bleeds.hpt_cl) * cp3_air)
        + d_dh_hpc * (gauges[3] * cp3_far + w25 * bleeds.lngv_cl * cp3_air)
    )

    # flow gradients: each W_s * h(T_s, far_s) term has gauge and far chains
    def add_gauge_term(d_out, station, sign=1.0):
        a, b, c = coeffs[station]
        ts = t[station]
        fs = far[station]
        h = _h_arr(gas, ts, fs)
        hf = _hfar_arr(gas, ts)
        d = gauges[station] - wf
        dfar = (-wf * a / (d * d), -wf * b / (d * d), (d - wf * (c - 1.0)) / (d * d))
        for col, (coef, dfar_col) in enumerate(zip((a, b, c), dfar)):
            d_flows[:, col] += sign * d_out * (coef * h + gauges[station] * hf * dfar_col)

    add_gauge_term(d_dh_lpt, 44)
    add_gauge_term(d_dh_lpt, 6, sign=-1.0)
    add_gauge_term(d_dh_hpt, 4)
    add_gauge_term(d_dh_hpt, 44, sign=-1.0)
    add_gauge_term(d_dh_hpc, 3)

    h25 = _h_arr(gas, t[25], 0.0)
    h13 = _h_arr(gas, t[13], 0.0)
    h2 = _h_arr(gas, np.asarray(t2, dtype=float), 0.0)
    # cooling terms w25 * frac * h3_air and the explicit w25/w2/w13 factors
    d_flows[:, 1] += d_dh_lpt * bleeds.lngv_cl * h3_air
    d_flows[:, 1] += d_dh_hpt * (bleeds.hngv_cl + bleeds.hpt_cl) * h3_air
    d_flows[:, 1] += d_dh_hpc * (bleeds.lngv_cl * h3_air - h25)
    d_flows[:, 0] += d_dh_lpc * (h13 - h2)  # W13 = W2 - W25
    d_flows[:, 1] += d_dh_lpc * (h25 - h13)
    return loss, d_pred, d_flows
