"""Working-fluid properties and compressible flow relations.

Half-ideal gas: cp(T, far) is a cubic dry-air polynomial in T/1000 plus a
linear fuel-air-ratio correction, R is constant, and the flow function q(Ma)
uses a single ratio of specific heats evaluated at the station temperature.
The dry-air polynomial is anchored to the perfect-gas value 3.5*R at the
enthalpy reference 288.15 K and fits hot-end table values (1141 J/(kg K) at
1000 K, 1210 at 1500 K, 1249 at 2000 K); it is monotone over [288, 2000] K.

Units: T [K], P [kPa], areas [m^2], mass flow [kg/s], h [J/kg].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import DomainError, InfeasibleFlowError

T_MIN, T_MAX = 200.0, 2500.0
FAR_MAX = 0.1

# cp_air(T) = sum(a_k * (T/1000)^k), J/(kg K)
CP_AIR_COEFFS = (940.7902, 227.7879, -18.3147, -9.2634)
# cp correction per unit fuel-air ratio: far * (b0 + b1 * T/1000)
CP_FAR_COEFFS = (800.0, 1050.0)


@dataclass(frozen=True)
class GasState:
    """Total state at one gas-path station."""

    Tt: float  # total temperature [K]
    Pt: float  # total pressure [kPa]
    far: float = 0.0  # fuel-air ratio

    def __post_init__(self):
        if not (self.Tt > 0.0 and self.Pt > 0.0):
            raise DomainError(f"non-physical gas state Tt={self.Tt}, Pt={self.Pt}")
        if not (0.0 <= self.far < FAR_MAX):
            raise DomainError(f"fuel-air ratio {self.far} outside [0, {FAR_MAX})")


@dataclass(frozen=True)
class GasModel:
    """Gas property model: R, nominal gamma, and the cp(T, far) polynomial."""

    gamma: float = 1.4  # nominal value at the reference temperature
    R: float = 287.05  # J/(kg K)
    cp_air: tuple = CP_AIR_COEFFS
    cp_far: tuple = CP_FAR_COEFFS
    t_ref: float = 288.15  # enthalpy and entropy-function reference [K]

    def __post_init__(self):
        if not (1.0 < self.gamma < 2.0):
            raise DomainError(f"gamma {self.gamma} outside (1, 2)")
        if self.R <= 0.0:
            raise DomainError("R must be positive")

    def _check(self, T: float, far: float) -> None:
        if not (T_MIN <= T <= T_MAX):
            raise DomainError(f"temperature {T} K outside [{T_MIN}, {T_MAX}]")
        if not (0.0 <= far < FAR_MAX):
            raise DomainError(f"fuel-air ratio {far} outside [0, {FAR_MAX})")

    def cp(self, T: float, far: float = 0.0) -> float:
        """Specific heat at constant pressure [J/(kg K)]."""
        self._check(T, far)
        z = T / 1000.0
        a0, a1, a2, a3 = self.cp_air
        b0, b1 = self.cp_far
        return a0 + z * (a1 + z * (a2 + z * a3)) + far * (b0 + b1 * z)

    def cp_dT(self, T: float, far: float = 0.0) -> float:
        """d(cp)/dT [J/(kg K^2)]."""
        z = T / 1000.0
        _, a1, a2, a3 = self.cp_air
        return (a1 + z * (2.0 * a2 + z * 3.0 * a3) + far * self.cp_far[1]) / 1000.0

    def cp_dfar(self, T: float) -> float:
        """d(cp)/d(far) at fixed T."""
        b0, b1 = self.cp_far
        return b0 + b1 * T / 1000.0

    def enthalpy(self, T: float, far: float = 0.0) -> float:
        """Specific enthalpy [J/kg], zero at t_ref for any far."""
        self._check(T, far)
        z = T / 1000.0
        zr = self.t_ref / 1000.0
        a0, a1, a2, a3 = self.cp_air
        b0, b1 = self.cp_far
        h_air = (
            a0 * (z - zr)
            + a1 * (z * z - zr * zr) / 2.0
            + a2 * (z**3 - zr**3) / 3.0
            + a3 * (z**4 - zr**4) / 4.0
        )
        h_far = b0 * (z - zr) + b1 * (z * z - zr * zr) / 2.0
        return 1000.0 * (h_air + far * h_far)

    def enthalpy_dfar(self, T: float) -> float:
        """d(h)/d(far) at fixed T [J/kg]."""
        z = T / 1000.0
        zr = self.t_ref / 1000.0
        b0, b1 = self.cp_far
        return 1000.0 * (b0 * (z - zr) + b1 * (z * z - zr * zr) / 2.0)

    def entropy_fn(self, T: float, far: float = 0.0) -> float:
        """Temperature part of entropy, integral of cp/T dT from t_ref [J/(kg K)]."""
        self._check(T, far)
        z = T / 1000.0
        zr = self.t_ref / 1000.0
        a0, a1, a2, a3 = self.cp_air
        b0, b1 = self.cp_far
        phi_air = (
            a0 * math.log(z / zr)
            + a1 * (z - zr)
            + a2 * (z * z - zr * zr) / 2.0
            + a3 * (z**3 - zr**3) / 3.0
        )
        phi_far = b0 * math.log(z / zr) + b1 * (z - zr)
        return phi_air + far * phi_far

    def gamma_at(self, T: float, far: float = 0.0) -> float:
        """Ratio of specific heats at (T, far)."""
        c = self.cp(T, far)
        return c / (c - self.R)

    def gamma_partials(self, T: float, far: float = 0.0):
        """(gamma, dgamma/dT, dgamma/dfar) at (T, far)."""
        c = self.cp(T, far)
        cv = c - self.R
        dT = -self.R * self.cp_dT(T, far) / (cv * cv)
        dfar = -self.R * self.cp_dfar(T) / (cv * cv)
        return c / cv, dT, dfar

    def _h_cp(self, t: float, far: float):
        """(enthalpy, cp) with shared polynomial work; no domain check."""
        z = t / 1000.0
        zr = self.t_ref / 1000.0
        a0, a1, a2, a3 = self.cp_air
        b0, b1 = self.cp_far
        h = 1000.0 * (
            a0 * (z - zr)
            + a1 * (z * z - zr * zr) / 2.0
            + a2 * (z**3 - zr**3) / 3.0
            + a3 * (z**4 - zr**4) / 4.0
            + far * (b0 * (z - zr) + b1 * (z * z - zr * zr) / 2.0)
        )
        cp = a0 + z * (a1 + z * (a2 + z * a3)) + far * (b0 + b1 * z)
        return h, cp

    def _phi_cp(self, t: float, far: float):
        """(entropy function, cp) with shared polynomial work; no domain check."""
        z = t / 1000.0
        zr = self.t_ref / 1000.0
        a0, a1, a2, a3 = self.cp_air
        b0, b1 = self.cp_far
        lz = math.log(z / zr)
        phi = (
            a0 * lz
            + a1 * (z - zr)
            + a2 * (z * z - zr * zr) / 2.0
            + a3 * (z**3 - zr**3) / 3.0
            + far * (b0 * lz + b1 * (z - zr))
        )
        cp = a0 + z * (a1 + z * (a2 + z * a3)) + far * (b0 + b1 * z)
        return phi, cp

    def t_from_h(self, h: float, far: float = 0.0) -> float:
        """Invert enthalpy(T, far) = h by Newton iteration."""
        t = min(max(self.t_ref + h / 1000.0, T_MIN + 1.0), T_MAX - 1.0)
        for _ in range(60):
            ht, cp = self._h_cp(t, far)
            step = (ht - h) / cp
            t = min(max(t - step, T_MIN), T_MAX)
            if abs(step) < 1e-11 * max(t, 1.0):
                self._check(t, far)
                return t
        raise DomainError(f"enthalpy {h} J/kg not invertible inside [{T_MIN}, {T_MAX}] K")

    def t_isentropic(self, T_in: float, far: float, pr: float) -> float:
        """Exit temperature of an isentropic pressure change by ratio pr (>1 compresses)."""
        self._check(T_in, far)
        target = self.entropy_fn(T_in, far) + self.R * math.log(pr)
        t = min(max(T_in * pr ** (0.2857 if pr >= 1.0 else 0.25), T_MIN + 1.0), T_MAX - 1.0)
        for _ in range(60):
            phi, cp = self._phi_cp(t, far)
            step = (phi - target) * t / cp
            t = min(max(t - step, T_MIN), T_MAX)
            if abs(step) < 1e-12 * t:
                self._check(t, far)
                return t
        raise DomainError(f"isentropic state pr={pr} from T={T_in} K not in range")


def q_ma(ma: float, gamma: float) -> float:
    """Normalized 1-D isentropic flow function, q(1) = 1."""
    if ma < 0.0:
        raise DomainError(f"negative Mach number {ma}")
    e = (gamma + 1.0) / (2.0 * (gamma - 1.0))
    u = 1.0 + 0.5 * (gamma - 1.0) * ma * ma
    return ma * ((gamma + 1.0) / 2.0) ** e * u**-e


def q_ma_dma(ma: float, gamma: float) -> float:
    """dq/dMa at fixed gamma."""
    e = (gamma + 1.0) / (2.0 * (gamma - 1.0))
    u = 1.0 + 0.5 * (gamma - 1.0) * ma * ma
    b = ((gamma + 1.0) / 2.0) ** e
    return b * u ** (-e - 1.0) * (u - e * (gamma - 1.0) * ma * ma)


def q_ma_dgamma(ma: float, gamma: float) -> float:
    """dq/dgamma at fixed Ma."""
    if ma == 0.0:
        return 0.0
    e = (gamma + 1.0) / (2.0 * (gamma - 1.0))
    de = -1.0 / (gamma - 1.0) ** 2
    u = 1.0 + 0.5 * (gamma - 1.0) * ma * ma
    q = q_ma(ma, gamma)
    return q * (de * math.log((gamma + 1.0) / (2.0 * u)) + e / (gamma + 1.0) - e * ma * ma / (2.0 * u))


def flow_constant(gamma: float, R: float) -> float:
    """K in W = K * P * A / sqrt(T) * q(Ma), with P in Pa."""
    e = (gamma + 1.0) / (2.0 * (gamma - 1.0))
    return math.sqrt(gamma / R) * (2.0 / (gamma + 1.0)) ** e


def flow_constant_dgamma(gamma: float, R: float) -> float:
    e = (gamma + 1.0) / (2.0 * (gamma - 1.0))
    de = -1.0 / (gamma - 1.0) ** 2
    k = flow_constant(gamma, R)
    return k * (0.5 / gamma + de * math.log(2.0 / (gamma + 1.0)) - e / (gamma + 1.0))


def mass_flow_q(T: float, P: float, ma: float, area: float, gas: GasModel, far: float = 0.0) -> float:
    """Mass flow through area [kg/s] from total state (T [K], P [kPa]) and Ma.

    gamma is evaluated once at (T, far); the relation is then closed-form, so
    at Ma = 1 the result is the choked flow for that gamma.
    """
    if T <= 0.0 or P <= 0.0 or area <= 0.0:
        raise DomainError(f"non-physical flow state T={T}, P={P}, A={area}")
    g = gas.gamma_at(T, far)
    return flow_constant(g, gas.R) * (P * 1000.0) * area / math.sqrt(T) * q_ma(ma, g)


def mach_from_flow(
    W: float, T: float, P: float, area: float, gas: GasModel, far: float = 0.0, branch: str = "subsonic"
) -> float:
    """Invert mass_flow_q for Ma on the requested branch ('subsonic'/'supersonic')."""
    if W < 0.0:
        raise DomainError(f"negative mass flow {W}")
    if W == 0.0:
        return 0.0
    g = gas.gamma_at(T, far)
    q_target = W * math.sqrt(T) / (flow_constant(g, gas.R) * (P * 1000.0) * area)
    if q_target > 1.0 + 1e-9:
        raise InfeasibleFlowError(f"W={W} kg/s exceeds choked flow by {(q_target - 1) * 100:.3g}%")
    if q_target >= 1.0 - 1e-13:
        return 1.0
    if branch == "subsonic":
        return _invert_q_subsonic(q_target, g)
    if branch == "supersonic":
        return _invert_q_supersonic(q_target, g)
    raise ValueError(f"unknown branch {branch!r}")


def _invert_q_subsonic(q_target: float, gamma: float) -> float:
    lo, hi = 0.0, 1.0
    ma = min(max(q_target, 1e-6), 0.95)
    for _ in range(100):
        f = q_ma(ma, gamma) - q_target
        if f > 0.0:
            hi = ma
        else:
            lo = ma
        d = q_ma_dma(ma, gamma)
        step = f / d if d > 1e-14 else 0.0
        nxt = ma - step
        if not (lo < nxt < hi):
            nxt = 0.5 * (lo + hi)
        if abs(f) <= 1e-11 * q_target:
            return ma
        ma = nxt
    return ma


def _invert_q_supersonic(q_target: float, gamma: float) -> float:
    lo, hi = 1.0, 12.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f = q_ma(mid, gamma) - q_target
        if f > 0.0:
            lo = mid
        else:
            hi = mid
        if abs(f) <= 1e-12 * q_target or hi - lo < 1e-14:
            return mid
    return 0.5 * (lo + hi)


def static_pressure(Tt: float, Pt: float, ma: float, gamma: float) -> float:
    """Static from total pressure at the given Mach number [kPa]."""
    u = 1.0 + 0.5 * (gamma - 1.0) * ma * ma
    return Pt * u ** (-gamma / (gamma - 1.0))


def static_temperature(Tt: float, ma: float, gamma: float) -> float:
    return Tt / (1.0 + 0.5 * (gamma - 1.0) * ma * ma)
