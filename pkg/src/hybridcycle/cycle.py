"""Reference 0-D model of a two-spool mixed turbofan.

Design sizing fixes station areas, map scale factors, and corrected-flow
references so that off-design matching at the design inputs reproduces the
design targets. Off-design points are solved by damped Newton iteration on
a seven-unknown balance system:

    unknowns  (N1, WF, beta_LPC, beta_HPC, PR_HPT, PR_LPT, W25)
    residuals HPC / HPT / LPT flow compatibility, HP and LP shaft power
              balance, mixer entry static-pressure balance, nozzle flow
              compatibility

When two throttle quantities are pinned (both spool speeds, or one speed
plus fuel flow) the system stays square by releasing the shaft power
balance that would otherwise determine the pinned quantity.

Station numbering: 2 inlet, 25/13 LPC core/bypass exits, 3 HPC exit,
4 burner exit, 41/43 HPT rotor in/out, 44/45 cooling-return planes,
5/6 LPT exit, 16 bypass exit, 64 mixer exit, 8 nozzle.

Spool speeds are fractions of the design speeds. Shaft power residuals use
the gauge enthalpy-flow forms (see losses.enthalpy_flow_terms for the
batched twin), so converged points satisfy those forms identically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import maps as mapslib
from .errors import ConvergenceError, EnvelopeError, ExtrapolationError, SizingError
from .flows import Bleeds, infer_mass_flows, station_far
from .gas import GasModel, mach_from_flow, mass_flow_q, q_ma, static_pressure, static_temperature


@dataclass(frozen=True)
class Shafts:
    eta_h: float = 0.99  # HP spool mechanical efficiency
    eta_l: float = 0.99
    p_ext: float = 80e3  # HP spool power extraction [W]

    def __post_init__(self):
        if not (0.9 < self.eta_h <= 1.0 and 0.9 < self.eta_l <= 1.0):
            raise SizingError("mechanical efficiency in (0.9, 1]")


@dataclass(frozen=True)
class DesignSpec:
    """Design-point targets and fixed cycle parameters."""

    t2: float = 288.15  # [K]
    p2: float = 101.325  # [kPa]
    pamb: float = 101.325
    w2: float = 100.0  # [kg/s]
    bpr: float = 0.45  # W13 / W25
    pr_lpc: float = 3.8  # core-stream pressure ratio of the LPC
    duct_pr_frac: float = 0.85  # (PR13 - 1) / (PR25 - 1)
    pr_hpc: float = 6.5
    t4: float = 1600.0  # burner exit total temperature [K]
    eff_lpc: float = 0.87
    eff_hpc: float = 0.85
    eff_hpt: float = 0.89
    eff_lpt: float = 0.90
    burner_dp: float = 0.04  # total pressure loss fraction
    burner_eta: float = 0.995
    fuel_lhv: float = 43.1e6  # [J/kg]
    bypass_dp: float = 0.02
    bleeds: Bleeds = field(default_factory=Bleeds)
    shafts: Shafts = field(default_factory=Shafts)
    # design Mach numbers for area sizing; 16/64/8 follow from matching
    mach: dict = field(
        default_factory=lambda: {
            2: 0.45,
            25: 0.40,
            13: 0.28,
            3: 0.25,
            4: 0.10,
            41: 0.15,
            43: 0.30,
            44: 0.32,
            45: 0.33,
            5: 0.35,
            6: 0.38,
        }
    )


@dataclass
class StationState:
    Tt: float  # [K]
    Pt: float  # [kPa]
    Ma: float
    W: float  # [kg/s]
    far: float = 0.0


@dataclass
class CyclePoint:
    inputs: dict  # T2, P2, Pamb, Ma2 plus the solved/given N1, N2, WF
    stations: dict  # station number -> StationState
    residuals: np.ndarray  # active scaled residuals at the solution
    residual_names: tuple
    unknowns: dict  # full unknown record incl. W2, W25
    iterations: int = 0

    @property
    def w2(self) -> float:
        return self.unknowns["w2"]

    @property
    def w25(self) -> float:
        return self.unknowns["w25"]


@dataclass
class EngineConfig:
    """Sized engine: everything off_design needs."""

    design: DesignSpec
    gas: GasModel
    bleeds: Bleeds
    shafts: Shafts
    areas: dict  # station -> m^2
    maps: dict  # lpc/hpc/hpt/lpt
    map_scalars: dict
    refs: dict  # component -> (T_in_design, P_in_design) for corrected terms
    design_unknowns: dict
    design_point: CyclePoint


RESIDUAL_NAMES = ("hpc_flow", "hpt_flow", "lpt_flow", "hp_power", "lp_power", "mixer_ps", "nozzle_flow")
UNKNOWN_ORDER = ("n1", "n2", "wf", "beta_l", "beta_h", "pr_hpt", "pr_lpt", "w25")

# given throttle keys -> (solved throttle unknowns, dropped residual)
_MODES = {
    frozenset({"n2"}): (("n1", "wf"), None),
    frozenset({"n1"}): (("n2", "wf"), None),
    frozenset({"wf"}): (("n1", "n2"), None),
    frozenset({"n1", "n2"}): (("wf",), "lp_power"),
    frozenset({"n1", "wf"}): (("n2",), "lp_power"),
    frozenset({"n2", "wf"}): (("n1",), "hp_power"),
}


class _ChainInfeasible(Exception):
    """Intermediate state left the model's validity region; Newton must retreat."""


# ---------------------------------------------------------------------------
# thermodynamic chain


def _compress(gas: GasModel, t_in: float, pr: float, eff: float) -> float:
    """Exit total temperature of an adiabatic compression (far = 0)."""
    t_s = gas.t_isentropic(t_in, 0.0, pr)
    h_out = gas.enthalpy(t_in) + (gas.enthalpy(t_s) - gas.enthalpy(t_in)) / eff
    return gas.t_from_h(h_out)


def _mix_total(gas: GasModel, flux: float, w: float, far: float) -> float:
    """Temperature from an enthalpy flux [W] over flow w at composition far."""
    return gas.t_from_h(flux / w, far)


def _nozzle_mach(npr: float, gamma: float) -> float:
    """Station-8 Mach for a convergent-divergent nozzle throat.

    The throat stays sonic for any useful pressure ratio, so upstream states
    are independent of ambient back-pressure; below the sustaining ratio the
    operating point is outside this model's envelope."""
    if npr <= 1.05:
        raise _ChainInfeasible
    return 1.0


def _stream_impulse(gas, tt, pt, ma, area, w, far):
    """Impulse function Ps*A + W*V [N] of a stream at total state (tt, pt)."""
    g = gas.gamma_at(tt, far)
    ts = static_temperature(tt, ma, g)
    ps = static_pressure(tt, pt, ma, g)
    v = ma * math.sqrt(g * gas.R * ts)
    return ps * 1000.0 * area + w * v


def _solve_mixed_state(gas, w, tt, area, impulse, far):
    """Constant-area mixed-out state: subsonic (Ma, Pt) from continuity plus
    the momentum balance.

    Eliminating density gives I = W*sqrt(g*R*Ts)*(Ma + 1/(g*Ma)), i.e.
    g(Ma) = (Ma + 1/(g*Ma)) / sqrt(1 + (g-1)/2 Ma^2) = I / (W*sqrt(g*R*Tt)),
    monotone decreasing on (0, 1]; solved by safeguarded Newton."""
    g = gas.gamma_at(tt, far)
    target = impulse / (w * math.sqrt(g * gas.R * tt))

    def val_slope(ma):
        u = 1.0 + 0.5 * (g - 1.0) * ma * ma
        su = math.sqrt(u)
        v = (ma + 1.0 / (g * ma)) / su
        dv = (1.0 - 1.0 / (g * ma * ma)) / su - v * 0.5 * (g - 1.0) * ma / u
        return v, dv

    v1, _ = val_slope(1.0)
    if target < v1 - 1e-12:
        raise _ChainInfeasible
    lo, hi = 1e-4, 1.0
    ma = 0.5
    for _ in range(80):
        v, dv = val_slope(ma)
        f = v - target
        if abs(f) <= 1e-12 * target:
            break
        if f > 0.0:  # g decreasing: value too high means Ma too low
            lo = ma
        else:
            hi = ma
        nxt = ma - f / dv
        ma = nxt if lo < nxt < hi else 0.5 * (lo + hi)
    ma = min(ma, 1.0)
    pt = w / mass_flow_q(tt, 1.0, ma, area, gas, far)
    return ma, pt


def _chain(cfg: EngineConfig, t2, p2, pamb, v: dict):
    """Evaluate the cycle at unknowns v; return (residual dict, stations, meta).

    Raises _ChainInfeasible when the state leaves the model's validity region
    (map hull, reversed flows, unchoked impossibilities); the Newton driver
    treats that as a failed step.
    """
    gas = cfg.gas
    d = cfg.design
    bl = cfg.bleeds
    n1, n2, wf = v["n1"], v["n2"], v["wf"]
    w25 = v["w25"]
    if min(n1, n2, wf, w25) <= 0.0:
        raise _ChainInfeasible

    try:
        # LPC: one map, two exits; bypass PR tied to the core PR
        t_ref, p_ref = cfg.refs["lpc"]
        n1c = n1 / math.sqrt(t2 / t_ref)
        wc_l, pr_l, eff_l = mapslib.interp_compressor(cfg.maps["lpc"], n1c, v["beta_l"])
        w2 = wc_l * (p2 / p_ref) * math.sqrt(t_ref / t2)
        if w25 >= 0.98 * w2:
            raise _ChainInfeasible
        t25 = _compress(gas, t2, pr_l, eff_l)
        p25 = p2 * pr_l
        pr13 = 1.0 + d.duct_pr_frac * (pr_l - 1.0)
        t13 = _compress(gas, t2, pr13, eff_l)
        p13 = p2 * pr13

        # HPC
        t_ref_h, p_ref_h = cfg.refs["hpc"]
        n2c = n2 / math.sqrt(t25 / t_ref_h)
        wc_h, pr_h, eff_h = mapslib.interp_compressor(cfg.maps["hpc"], n2c, v["beta_h"])
        r_hpc = (wc_h * (p25 / p_ref_h) * math.sqrt(t_ref_h / t25) - w25) / w25
        t3 = _compress(gas, t25, pr_h, eff_h)
        p3 = p25 * pr_h
        h3 = gas.enthalpy(t3)

        W = infer_mass_flows(w2, w25, wf, bl)

        # burner
        w4 = W[4]
        far4 = wf / (w4 - wf)
        p4 = p3 * (1.0 - d.burner_dp)
        h4 = ((w4 - wf) * h3 + wf * d.burner_eta * d.fuel_lhv) / w4
        t4 = gas.t_from_h(h4, far4)

        # HPT NGV cooling mix, rotor expansion, rotor cooling return
        w41 = W[41]
        far41 = wf / (w41 - wf)
        t41 = _mix_total(gas, w4 * h4 + w25 * bl.hngv_cl * h3, w41, far41)
        p41 = p4
        t_ref_ht, p_ref_ht = cfg.refs["hpt"]
        nhc = n2 / math.sqrt(t41 / t_ref_ht)
        wc_hpt, eff_hpt = mapslib.interp_turbine(cfg.maps["hpt"], nhc, v["pr_hpt"])
        wc41 = w41 * math.sqrt(t41 / t_ref_ht) / (p41 / p_ref_ht)
        r_hpt = (wc_hpt - wc41) / wc41
        p43 = p41 / v["pr_hpt"]
        h41 = gas.enthalpy(t41, far41)
        t43s = gas.t_isentropic(t41, far41, 1.0 / v["pr_hpt"])
        h43 = h41 - eff_hpt * (h41 - gas.enthalpy(t43s, far41))
        w44 = W[44]
        far44 = wf / (w44 - wf)
        t44 = _mix_total(gas, w41 * h43 + w25 * bl.hpt_cl * h3, w44, far44)
        h44 = gas.enthalpy(t44, far44)
        p44 = p43

        # LPT NGV cooling mix and rotor expansion
        w45 = W[45]
        far45 = wf / (w45 - wf)
        t45 = _mix_total(gas, w44 * h44 + w25 * bl.lngv_cl * h3, w45, far45)
        h45 = gas.enthalpy(t45, far45)
        p45 = p44
        t_ref_lt, p_ref_lt = cfg.refs["lpt"]
        nlc = n1 / math.sqrt(t45 / t_ref_lt)
        wc_lpt, eff_lpt = mapslib.interp_turbine(cfg.maps["lpt"], nlc, v["pr_lpt"])
        wc45 = w45 * math.sqrt(t45 / t_ref_lt) / (p45 / p_ref_lt)
        r_lpt = (wc_lpt - wc45) / wc45
        p5 = p45 / v["pr_lpt"]
        t5s = gas.t_isentropic(t45, far45, 1.0 / v["pr_lpt"])
        h5 = h45 - eff_lpt * (h45 - gas.enthalpy(t5s, far45))
        t5 = gas.t_from_h(h5, far45)
        t6, p6 = t5, p5  # LPT exit duct, lossless; areas at 5 and 6 differ
        far6 = far45

        # bypass duct; c2b leak (HPC exit air) joins ahead of the 16 gauge
        w13, w16 = W[13], W[16]
        t16 = _mix_total(gas, w13 * gas.enthalpy(t13) + bl.c2b * w25 * h3, w16, 0.0)
        p16 = p13 * (1.0 - d.bypass_dp)

        # mixer entry statics
        ma6 = mach_from_flow(W[6], t6, p6, cfg.areas[6], gas, far6)
        ma16 = mach_from_flow(w16, t16, p16, cfg.areas[16], gas, 0.0)
        g6 = gas.gamma_at(t6, far6)
        g16 = gas.gamma_at(t16)
        ps6 = static_pressure(t6, p6, ma6, g6)
        ps16 = static_pressure(t16, p16, ma16, g16)
        r_mix = (ps6 - ps16) / ps6

        # constant-area mixing; the gauge excess c2b*W25 spills at the entry
        # plane so the mixed flow equals the station-64 gauge W2 + WF
        w64 = W[64]
        spill = bl.c2b * w25
        far64 = wf / w2
        t64 = _mix_total(gas, W[6] * gas.enthalpy(t6, far6) + (w16 - spill) * gas.enthalpy(t16), w64, far64)
        impulse = _stream_impulse(gas, t6, p6, ma6, cfg.areas[6], W[6], far6) + _stream_impulse(
            gas, t16, p16, ma16, cfg.areas[16], w16 - spill, 0.0
        )
        ma64, p64 = _solve_mixed_state(gas, w64, t64, cfg.areas[64], impulse, far64)

        # nozzle throat (station 8), lossless duct 64 -> 8
        t8, p8 = t64, p64
        g8 = gas.gamma_at(t8, far64)
        ma8 = _nozzle_mach(p8 / pamb, g8)
        r_noz = (W[8] - mass_flow_q(t8, p8, ma8, cfg.areas[8], gas, far64)) / W[8]

        # shaft power balances in gauge enthalpy-flow form
        h25 = gas.enthalpy(t25)
        h13 = gas.enthalpy(t13)
        h2 = gas.enthalpy(t2)
        h6v = gas.enthalpy(t6, far6)
        far3 = wf / (W[3] - wf)
        dh_lpt = w44 * h44 + w25 * bl.lngv_cl * h3 - W[6] * h6v
        dh_hpt = w4 * h4 + w25 * bl.hngv_cl * h3 - (w44 * h44 - w25 * bl.hpt_cl * h3)
        dh_hpc = W[3] * gas.enthalpy(t3, far3) + w25 * bl.lngv_cl * h3 - w25 * h25
        dh_lpc = w13 * h13 + w25 * h25 - w2 * h2
        if abs(dh_hpt) < 1.0 or abs(dh_lpt) < 1.0:
            raise _ChainInfeasible
        r_hp = (cfg.shafts.eta_h * dh_hpt - dh_hpc - cfg.shafts.p_ext) / abs(dh_hpt)
        r_lp = (cfg.shafts.eta_l * dh_lpt - dh_lpc) / abs(dh_lpt)
    except (ExtrapolationError, ValueError, ZeroDivisionError, OverflowError) as exc:
        raise _ChainInfeasible from exc

    residuals = {
        "hpc_flow": r_hpc,
        "hpt_flow": r_hpt,
        "lpt_flow": r_lpt,
        "hp_power": r_hp,
        "lp_power": r_lp,
        "mixer_ps": r_mix,
        "nozzle_flow": r_noz,
    }
    meta = {
        "w2": w2,
        "t,p": {
            2: (t2, p2),
            25: (t25, p25),
            13: (t13, p13),
            3: (t3, p3),
            4: (t4, p4),
            41: (t41, p41),
            43: (gas.t_from_h(h43, far41), p43),
            44: (t44, p44),
            45: (t45, p45),
            5: (t5, p5),
            6: (t6, p6),
            16: (t16, p16),
            64: (t64, p64),
            8: (t8, p8),
        },
        "ma": {16: ma16, 6: ma6, 64: ma64, 8: ma8},
        "W": W,
        "power": {"dh_lpt": dh_lpt, "dh_hpt": dh_hpt, "dh_hpc": dh_hpc, "dh_lpc": dh_lpc},
    }
    return residuals, meta


def _assemble_point(cfg, t2, p2, pamb, v, res, meta, names, iterations) -> CyclePoint:
    gas = cfg.gas
    W = dict(meta["W"])
    w2 = meta["w2"]
    W[2] = w2
    W[25] = v["w25"]
    stations = {}
    for station, (tt, pt) in meta["t,p"].items():
        w = W[station]
        far = station_far(station, w, v["wf"]) if station not in (2, 25) else 0.0
        if station in meta["ma"]:
            ma = meta["ma"][station]
        else:
            ma = mach_from_flow(w, tt, pt, cfg.areas[station], gas, far)
        stations[station] = StationState(Tt=tt, Pt=pt, Ma=ma, W=w, far=far)
    inputs = {
        "t2": t2,
        "p2": p2,
        "pamb": pamb,
        "ma2": stations[2].Ma,
        "n1": v["n1"],
        "n2": v["n2"],
        "wf": v["wf"],
    }
    unknowns = dict(v)
    unknowns["w2"] = w2
    return CyclePoint(
        inputs=inputs,
        stations=stations,
        residuals=np.array([res[name] for name in names]),
        residual_names=tuple(names),
        unknowns=unknowns,
        iterations=iterations,
    )


# ---------------------------------------------------------------------------
# Newton matching


def _newton(cfg, t2, p2, pamb, given: dict, x0: dict, tol=1e-10, max_iter=50):
    """Damped Newton on the scaled unknown vector; central-difference Jacobian."""
    mode = _MODES.get(frozenset(given))
    if mode is None:
        raise ValueError(f"unsupported given-set {sorted(given)}")
    throttle_unknowns, dropped = mode
    names = [n for n in RESIDUAL_NAMES if n != dropped]
    unknown_names = list(throttle_unknowns) + ["beta_l", "beta_h", "pr_hpt", "pr_lpt", "w25"]
    scale = np.array([max(abs(x0[n]), 1e-6) for n in unknown_names])
    lo, hi = _bounds(cfg, unknown_names)

    def unpack(xs) -> dict:
        v = dict(given)
        for name, value in zip(unknown_names, xs * scale):
            v[name] = value
        return v

    def evaluate(xs):
        res, meta = _chain(cfg, t2, p2, pamb, unpack(xs))
        return np.array([res[name] for name in names]), (res, meta)

    x = np.array([x0[n] for n in unknown_names]) / scale
    x = np.clip(x, lo / scale, hi / scale)
    try:
        r, full = evaluate(x)
    except _ChainInfeasible:
        raise ConvergenceError("initial matching guess infeasible")

    iterations = 0
    for iterations in range(1, max_iter + 1):
        if np.abs(r).max() < tol:
            break
        if iterations >= 15 and np.abs(r).max() > 1e-6:
            # far from the basin; cheaper to retreat to the continuation ladder
            raise ConvergenceError("stalled matching iteration", residuals=r, iterations=iterations)
        jac = np.empty((len(r), len(x)))
        h = 1e-6
        for k in range(len(x)):
            xp, xm = x.copy(), x.copy()
            xp[k] += h
            xm[k] -= h
            try:
                rp, _ = evaluate(xp)
                rm, _ = evaluate(xm)
            except _ChainInfeasible:
                # one-sided fallback at the validity boundary
                try:
                    rp, _ = evaluate(xp)
                    jac[:, k] = (rp - r) / h
                    continue
                except _ChainInfeasible:
                    try:
                        rm, _ = evaluate(xm)
                        jac[:, k] = (r - rm) / h
                        continue
                    except _ChainInfeasible:
                        jac[:, k] = 0.0
                        continue
            jac[:, k] = (rp - rm) / (2.0 * h)
        try:
            step = np.linalg.solve(jac, -r)
        except np.linalg.LinAlgError:
            raise ConvergenceError("singular matching Jacobian", residuals=r, iterations=iterations)

        norm0 = np.linalg.norm(r)
        alpha = 1.0
        best = None
        for _ in range(9):
            x_try = np.clip(x + alpha * step, lo / scale, hi / scale)
            try:
                r_try, full_try = evaluate(x_try)
            except _ChainInfeasible:
                alpha *= 0.5
                continue
            if np.linalg.norm(r_try) < norm0 or best is None:
                best = (x_try, r_try, full_try)
                if np.linalg.norm(r_try) < norm0:
                    break
            alpha *= 0.5
        if best is None:
            raise ConvergenceError(
                f"no productive step at residual {norm0:.3e}", residuals=r, iterations=iterations
            )
        x, r, full = best
    else:
        if np.abs(r).max() >= tol:
            raise ConvergenceError(
                f"not converged after {max_iter} iterations (max residual {np.abs(r).max():.3e})",
                residuals=r,
                iterations=max_iter,
            )

    res, meta = full
    return _assemble_point(cfg, t2, p2, pamb, unpack(x), res, meta, names, iterations)


def _bounds(cfg, unknown_names):
    box = {
        "n1": (0.05, 2.0),
        "n2": (0.05, 2.0),
        "wf": (1e-4, 0.08 * cfg.design.w2),
        "beta_l": (0.0, 1.0),
        "beta_h": (0.0, 1.0),
        "pr_hpt": (float(cfg.maps["hpt"].pr_grid[0]), float(cfg.maps["hpt"].pr_grid[-1])),
        "pr_lpt": (float(cfg.maps["lpt"].pr_grid[0]), float(cfg.maps["lpt"].pr_grid[-1])),
        "w25": (1e-3, 2.0 * cfg.design_unknowns["w25"]),
    }
    lo = np.array([box[n][0] for n in unknown_names])
    hi = np.array([box[n][1] for n in unknown_names])
    return lo, hi


def off_design_general(cfg: EngineConfig, t2, p2, pamb, given: dict, x0: dict | None = None, tol=1e-10) -> CyclePoint:
    """Solve the matched cycle with an arbitrary throttle given-set.

    `given` maps a subset of {'n1','n2','wf'} to values. Falls back to a
    continuation ladder from the design point when the direct solve fails.
    """
    base = dict(cfg.design_unknowns)
    if x0:
        base.update(x0)
    try:
        return _newton(cfg, t2, p2, pamb, given, base, tol=tol)
    except ConvergenceError:
        pass

    d = cfg.design
    start_inputs = (d.t2, d.p2, d.pamb)
    start_given = {key: cfg.design_unknowns[key] for key in given}
    point = None
    for steps in (4, 12):
        guess = dict(cfg.design_unknowns)
        try:
            for k in range(1, steps + 1):
                a = k / steps
                ti = start_inputs[0] + a * (t2 - start_inputs[0])
                pi = start_inputs[1] + a * (p2 - start_inputs[1])
                pai = start_inputs[2] + a * (pamb - start_inputs[2])
                gi = {key: start_given[key] + a * (given[key] - start_given[key]) for key in given}
                point = _newton(cfg, ti, pi, pai, gi, guess, tol=tol)
                guess = {name: point.unknowns[name] for name in UNKNOWN_ORDER}
            return point
        except ConvergenceError as exc:
            last = exc
    raise EnvelopeError(f"no converged cycle at T2={t2}, P2={p2}, Pamb={pamb}, {given}: {last}")


def off_design(cfg: EngineConfig, t2, p2, pamb, n2, x0=None) -> CyclePoint:
    """Standard off-design solve: ambient state plus HP spool speed."""
    return off_design_general(cfg, t2, p2, pamb, {"n2": n2}, x0=x0)


def solve_w2_w25(cfg: EngineConfig, flight_inputs: dict, x0=None):
    """Matched-cycle (W2, W25) for a flight record.

    flight_inputs: t2, p2, pamb plus one or two of {n1, n2, wf}. With two
    throttle quantities pinned the corresponding shaft-power residual is
    released (the model cannot satisfy both for an engine it does not match).
    """
    given = {key: flight_inputs[key] for key in ("n1", "n2", "wf") if key in flight_inputs}
    point = off_design_general(
        cfg, flight_inputs["t2"], flight_inputs["p2"], flight_inputs["pamb"], given, x0=x0
    )
    return point.w2, point.w25


# ---------------------------------------------------------------------------
# design sizing


def design_point(spec: DesignSpec = DesignSpec(), maps: dict | None = None, gas: GasModel | None = None) -> EngineConfig:
    """Size areas, corrected-flow references, and map scale factors.

    After sizing, off_design at the design inputs reproduces the design
    targets; the returned config carries the polished design CyclePoint.
    """
    gas = gas or GasModel()
    d = spec
    bl = d.bleeds
    if d.t4 <= 400.0 or d.pr_lpc <= 1.0 or d.pr_hpc <= 1.0 or d.w2 <= 0.0 or d.bpr <= 0.0:
        raise SizingError("positive targets with PR > 1")

    w25 = d.w2 / (1.0 + d.bpr)
    w13 = d.w2 - w25
    t25 = _compress(gas, d.t2, d.pr_lpc, d.eff_lpc)
    p25 = d.p2 * d.pr_lpc
    pr13 = 1.0 + d.duct_pr_frac * (d.pr_lpc - 1.0)
    t13 = _compress(gas, d.t2, pr13, d.eff_lpc)
    p13 = d.p2 * pr13
    t3 = _compress(gas, t25, d.pr_hpc, d.eff_hpc)
    p3 = p25 * d.pr_hpc
    h3 = gas.enthalpy(t3)
    if d.t4 <= t3:
        raise SizingError("burner temperature rise (T4 > T3)")

    # fuel flow from the burner energy balance at the T4 target
    core4 = 1.0 - bl.hpt_cl - bl.hngv_cl - bl.lngv_cl
    w_air = w25 * core4
    wf = w_air * (gas.enthalpy(d.t4) - h3) / (d.burner_eta * d.fuel_lhv)
    for _ in range(80):
        w4 = w_air + wf
        far4 = wf / w_air
        f = (w_air * h3 + wf * d.burner_eta * d.fuel_lhv) - w4 * gas.enthalpy(d.t4, far4)
        dfdwf = d.burner_eta * d.fuel_lhv - gas.enthalpy(d.t4, far4) - gas.enthalpy_dfar(d.t4)
        step = f / dfdwf
        wf -= step
        if abs(step) < 1e-14 * max(wf, 1e-3):
            break
    if not (0.0 < wf < 0.05 * d.w2):
        raise SizingError("fuel flow inside (0, 0.05 W2)")

    W = infer_mass_flows(d.w2, w25, wf, bl)
    w4, w41, w44, w45 = W[4], W[41], W[44], W[45]
    far4 = wf / (w4 - wf)
    far41 = wf / (w41 - wf)
    far44 = wf / (w44 - wf)
    far45 = wf / (w45 - wf)
    p4 = p3 * (1.0 - d.burner_dp)
    h4 = gas.enthalpy(d.t4, far4)
    t41 = _mix_total(gas, w4 * h4 + w25 * bl.hngv_cl * h3, w41, far41)
    h41 = gas.enthalpy(t41, far41)

    # HP shaft balance fixes the HPT exit gauge state
    far3 = wf / (W[3] - wf)
    dh_hpc = W[3] * gas.enthalpy(t3, far3) + w25 * bl.lngv_cl * h3 - w25 * gas.enthalpy(t25)
    dh_hpt = (dh_hpc + d.shafts.p_ext) / d.shafts.eta_h
    h44 = (w4 * h4 + w25 * (bl.hngv_cl + bl.hpt_cl) * h3 - dh_hpt) / w44
    t44 = gas.t_from_h(h44, far44)
    h43 = (w44 * h44 - w25 * bl.hpt_cl * h3) / w41
    if h43 >= h41:
        raise SizingError("HPT enthalpy drop positive")
    h43s = h41 - (h41 - h43) / d.eff_hpt
    t43s = gas.t_from_h(h43s, far41)
    pr_hpt = math.exp((gas.entropy_fn(t41, far41) - gas.entropy_fn(t43s, far41)) / gas.R)
    if pr_hpt <= 1.0:
        raise SizingError("HPT expansion ratio > 1")
    p43 = p4 / pr_hpt
    t43 = gas.t_from_h(h43, far41)
    p44 = p43

    # LP shaft balance fixes the LPT exit gauge state
    dh_lpc = w13 * gas.enthalpy(t13) + w25 * gas.enthalpy(t25) - d.w2 * gas.enthalpy(d.t2)
    dh_lpt = dh_lpc / d.shafts.eta_l
    t45 = _mix_total(gas, w44 * h44 + w25 * bl.lngv_cl * h3, w45, far45)
    h45 = gas.enthalpy(t45, far45)
    h6 = (w44 * h44 + w25 * bl.lngv_cl * h3 - dh_lpt) / W[6]
    if h6 >= h45:
        raise SizingError("LPT enthalpy drop positive")
    h5s = h45 - (h45 - h6) / d.eff_lpt
    t5s = gas.t_from_h(h5s, far45)
    pr_lpt = math.exp((gas.entropy_fn(t45, far45) - gas.entropy_fn(t5s, far45)) / gas.R)
    if pr_lpt <= 1.0:
        raise SizingError("LPT expansion ratio > 1")
    p5 = p44 / pr_lpt
    t5 = gas.t_from_h(h6, far45)
    t6, p6 = t5, p5
    far6 = far45

    # bypass exit with the c2b leak mixed in
    w16 = W[16]
    t16 = _mix_total(gas, w13 * gas.enthalpy(t13) + bl.c2b * w25 * h3, w16, 0.0)
    p16 = p13 * (1.0 - d.bypass_dp)

    # size areas from the design Mach choices
    areas = {}
    tp = {2: (d.t2, d.p2), 25: (t25, p25), 13: (t13, p13), 3: (t3, p3), 4: (d.t4, p4),
          41: (t41, p4), 43: (t43, p43), 44: (t44, p44), 45: (t45, p44), 5: (t5, p5), 6: (t6, p6)}
    flows = dict(W)
    flows[2] = d.w2
    flows[25] = w25
    for station, (tt, pt) in tp.items():
        far = station_far(station, flows[station], wf) if station not in (2, 25) else 0.0
        ma = d.mach[station]
        areas[station] = flows[station] / mass_flow_q(tt, pt, ma, 1.0, gas, far)

    # bypass-side mixer area from the static-pressure balance at design
    g6 = gas.gamma_at(t6, far6)
    ps6 = static_pressure(t6, p6, d.mach[6], g6)
    g16 = gas.gamma_at(t16)
    if p16 <= ps6:
        raise SizingError("mixer feasibility (Pt16 > Ps6)", f"Pt16={p16:.2f} kPa, Ps6={ps6:.2f} kPa")
    ma16 = math.sqrt(2.0 / (g16 - 1.0) * ((p16 / ps6) ** ((g16 - 1.0) / g16) - 1.0))
    if ma16 >= 1.0:
        raise SizingError("subsonic bypass mixer entry", f"Ma16={ma16:.3f}")
    areas[16] = w16 / mass_flow_q(t16, p16, ma16, 1.0, gas, 0.0)
    areas[64] = areas[6] + areas[16]

    # mixed-out state and nozzle throat
    w64 = W[64]
    far64 = wf / d.w2
    spill = bl.c2b * w25
    t64 = _mix_total(gas, W[6] * gas.enthalpy(t6, far6) + (w16 - spill) * gas.enthalpy(t16), w64, far64)
    impulse = _stream_impulse(gas, t6, p6, d.mach[6], areas[6], W[6], far6) + _stream_impulse(
        gas, t16, p16, ma16, areas[16], w16 - spill, 0.0
    )
    try:
        ma64, p64 = _solve_mixed_state(gas, w64, t64, areas[64], impulse, far64)
    except _ChainInfeasible:
        raise SizingError("mixed-out state solvable at constant area")
    g8 = gas.gamma_at(t64, far64)
    npr = p64 / d.pamb
    if npr <= 1.02:
        raise SizingError("nozzle pressure ratio > 1", f"NPR={npr:.3f}")
    ma8 = _nozzle_mach(npr, g8)
    areas[8] = W[8] / mass_flow_q(t64, p64, ma8, 1.0, gas, far64)

    maps = maps or mapslib.builtin_maps(
        {
            "lpc": (d.w2, d.pr_lpc, d.eff_lpc),
            "hpc": (w25, d.pr_hpc, d.eff_hpc),
            "hpt": (w41, pr_hpt, d.eff_hpt),
            "lpt": (w45, pr_lpt, d.eff_lpt),
        }
    )
    maps, scalars = _scale_maps(maps, d, w25, w41, w45, pr_hpt, pr_lpt)

    refs = {"lpc": (d.t2, d.p2), "hpc": (t25, p25), "hpt": (t41, p4), "lpt": (t45, p44)}
    design_unknowns = {
        "n1": 1.0,
        "n2": 1.0,
        "wf": wf,
        "beta_l": 0.5,
        "beta_h": 0.5,
        "pr_hpt": pr_hpt,
        "pr_lpt": pr_lpt,
        "w25": w25,
    }
    cfg = EngineConfig(
        design=d,
        gas=gas,
        bleeds=bl,
        shafts=d.shafts,
        areas=areas,
        maps=maps,
        map_scalars=scalars,
        refs=refs,
        design_unknowns=design_unknowns,
        design_point=None,
    )
    # polish so the stored design point carries machine-zero residuals
    cfg.design_point = _newton(cfg, d.t2, d.p2, d.pamb, {"n2": 1.0}, design_unknowns, tol=1e-12, max_iter=8)
    cfg.design_unknowns = {name: cfg.design_point.unknowns[name] for name in UNKNOWN_ORDER}
    return cfg


# ---------------------------------------------------------------------------
# config serialization: <dir>/engine.cfg plus <dir>/maps/*.map

_CFG_HEADER = "engine-config v1"


def save_config(cfg: EngineConfig, dirpath: str) -> None:
    import os

    from . import textio
    from .maps import save_map

    d = cfg.design
    items = {
        "design": {
            "t2": d.t2, "p2": d.p2, "pamb": d.pamb, "w2": d.w2, "bpr": d.bpr,
            "pr_lpc": d.pr_lpc, "duct_pr_frac": d.duct_pr_frac, "pr_hpc": d.pr_hpc,
            "t4": d.t4, "eff_lpc": d.eff_lpc, "eff_hpc": d.eff_hpc,
            "eff_hpt": d.eff_hpt, "eff_lpt": d.eff_lpt,
            "burner_dp": d.burner_dp, "burner_eta": d.burner_eta,
            "fuel_lhv": d.fuel_lhv, "bypass_dp": d.bypass_dp,
        },
        "bleeds": {
            "hpt_cl": cfg.bleeds.hpt_cl, "hngv_cl": cfg.bleeds.hngv_cl,
            "lngv_cl": cfg.bleeds.lngv_cl, "c2b": cfg.bleeds.c2b,
        },
        "shafts": {"eta_h": cfg.shafts.eta_h, "eta_l": cfg.shafts.eta_l, "p_ext": cfg.shafts.p_ext},
        "gas": {"gamma": cfg.gas.gamma, "R": cfg.gas.R,
                "cp_air": list(cfg.gas.cp_air), "cp_far": list(cfg.gas.cp_far), "t_ref": cfg.gas.t_ref},
        "mach": {str(k): v for k, v in sorted(d.mach.items())},
        "areas": {str(k): v for k, v in sorted(cfg.areas.items())},
        "refs": {name: list(cfg.refs[name]) for name in ("lpc", "hpc", "hpt", "lpt")},
        "design_unknowns": {name: cfg.design_unknowns[name] for name in UNKNOWN_ORDER},
    }
    textio.write_keyvalue(os.path.join(dirpath, "engine.cfg"), _CFG_HEADER, items)
    for name, m in cfg.maps.items():
        save_map(m, os.path.join(dirpath, "maps", f"{name}.map"))


def load_config(dirpath: str) -> EngineConfig:
    import os

    from . import textio
    from .maps import load_map

    kv = textio.read_keyvalue(os.path.join(dirpath, "engine.cfg"), _CFG_HEADER)
    f = lambda key: textio.kv_float(kv, key)
    gas = GasModel(
        gamma=f("gas.gamma"), R=f("gas.R"),
        cp_air=tuple(textio.kv_floats(kv, "gas.cp_air")),
        cp_far=tuple(textio.kv_floats(kv, "gas.cp_far")),
        t_ref=f("gas.t_ref"),
    )
    bleeds = Bleeds(f("bleeds.hpt_cl"), f("bleeds.hngv_cl"), f("bleeds.lngv_cl"), f("bleeds.c2b"))
    shafts = Shafts(f("shafts.eta_h"), f("shafts.eta_l"), f("shafts.p_ext"))
    mach = {int(k.split(".")[1]): float(v) for k, v in kv.items() if k.startswith("mach.")}
    design = DesignSpec(
        t2=f("design.t2"), p2=f("design.p2"), pamb=f("design.pamb"), w2=f("design.w2"),
        bpr=f("design.bpr"), pr_lpc=f("design.pr_lpc"), duct_pr_frac=f("design.duct_pr_frac"),
        pr_hpc=f("design.pr_hpc"), t4=f("design.t4"), eff_lpc=f("design.eff_lpc"),
        eff_hpc=f("design.eff_hpc"), eff_hpt=f("design.eff_hpt"), eff_lpt=f("design.eff_lpt"),
        burner_dp=f("design.burner_dp"), burner_eta=f("design.burner_eta"),
        fuel_lhv=f("design.fuel_lhv"), bypass_dp=f("design.bypass_dp"),
        bleeds=bleeds, shafts=shafts, mach=mach,
    )
    areas = {int(k.split(".")[1]): float(v) for k, v in kv.items() if k.startswith("areas.")}
    refs = {name: tuple(textio.kv_floats(kv, f"refs.{name}")) for name in ("lpc", "hpc", "hpt", "lpt")}
    design_unknowns = {name: f(f"design_unknowns.{name}") for name in UNKNOWN_ORDER}
    maps = {name: load_map(os.path.join(dirpath, "maps", f"{name}.map")) for name in ("lpc", "hpc", "hpt", "lpt")}
    scalars = {name: maps[name].scalars for name in maps}
    cfg = EngineConfig(
        design=design, gas=gas, bleeds=bleeds, shafts=shafts, areas=areas,
        maps=maps, map_scalars=scalars, refs=refs,
        design_unknowns=design_unknowns, design_point=None,
    )
    cfg.design_point = _newton(cfg, design.t2, design.p2, design.pamb,
                               {"n2": design_unknowns["n2"]}, design_unknowns, tol=1e-12, max_iter=8)
    return cfg


def degrade_config(cfg: EngineConfig, deltas: dict) -> EngineConfig:
    """New config whose maps carry the given per-component Degradation records."""
    from dataclasses import replace as dc_replace

    new_maps = dict(cfg.maps)
    for name, d in deltas.items():
        if name not in new_maps:
            raise SizingError(f"unknown component {name!r} in degradation state")
        new_maps[name] = mapslib.apply_degradation(new_maps[name], d)
    out = dc_replace(cfg, maps=new_maps, map_scalars={k: m.scalars for k, m in new_maps.items()})
    return out


def _scale_maps(maps, d, w25, w41, w45, pr_hpt, pr_lpt):
    """Multiplicative scale factors making each map hit its design target."""
    out = {}
    scalars = {}
    targets = {
        "lpc": (d.w2, d.pr_lpc, d.eff_lpc),
        "hpc": (w25, d.pr_hpc, d.eff_hpc),
        "hpt": (w41, pr_hpt, d.eff_hpt),
        "lpt": (w45, pr_lpt, d.eff_lpt),
    }
    for name in ("lpc", "hpc"):
        wc_t, pr_t, eff_t = targets[name]
        raw = replace(maps[name], scalars=mapslib.Scalars())
        wc0, pr0, eff0 = mapslib.interp_compressor(raw, 1.0, 0.5)
        s = mapslib.Scalars(flow=wc_t / wc0, pr=pr_t / pr0, eff=eff_t / eff0)
        out[name] = replace(raw, scalars=s)
        scalars[name] = s
    for name in ("hpt", "lpt"):
        wc_t, pr_t, eff_t = targets[name]
        raw = replace(maps[name], scalars=mapslib.Scalars())
        if not (raw.pr_grid[0] <= pr_t <= raw.pr_grid[-1]):
            raise SizingError(f"{name} map covers design expansion ratio", f"pr={pr_t:.3f}")
        wc0, eff0 = mapslib.interp_turbine(raw, 1.0, pr_t)
        s = mapslib.Scalars(flow=wc_t / wc0, pr=1.0, eff=eff_t / eff0)
        out[name] = replace(raw, scalars=s)
        scalars[name] = s
    return out, scalars
