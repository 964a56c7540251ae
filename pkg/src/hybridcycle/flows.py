"""Station mass-flow bookkeeping from the two inlet flows and fuel flow.

Twelve station gauges are linear in (W2, W25, WF). The bypass gauge at
station 16 includes the core-to-bypass leak (c2b fraction of W25) while the
core gauges never subtract it; the reference cycle model reconciles this at
the mixer entry, where the same mass is spilled overboard so that the mixed
flow matches the station-64 gauge W2 + WF. Consequently
W6 + W16 - W64 == c2b * W25 is an identity of this bookkeeping.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigurationError


@dataclass(frozen=True)
class Bleeds:
    """Cooling and leakage fractions of W25."""

    hpt_cl: float = 0.04  # HPT rotor cooling, returned at station 44
    hngv_cl: float = 0.06  # HPT NGV cooling, returned at station 41
    lngv_cl: float = 0.03  # LPT NGV cooling, returned at station 45
    c2b: float = 0.01  # core-to-bypass leakage

    def __post_init__(self):
        total = self.hpt_cl + self.hngv_cl + self.lngv_cl + self.c2b
        if min(self.hpt_cl, self.hngv_cl, self.lngv_cl, self.c2b) < 0.0 or total >= 0.2:
            raise ConfigurationError(f"bleed fractions invalid (sum {total})")


# stations whose gauge contains the fuel flow term (far > 0 under bookkeeping)
FUELED_STATIONS = frozenset({3, 4, 41, 43, 44, 45, 5, 6, 64, 8})
GAUGED_STATIONS = (3, 4, 41, 43, 44, 45, 5, 6, 13, 16, 64, 8)


def flow_coefficients(bleeds: Bleeds) -> dict[int, tuple[float, float, float]]:
    """Per-station (a, b, c) with W_station = a*W2 + b*W25 + c*WF."""
    hpt, hngv, lngv, c2b = bleeds.hpt_cl, bleeds.hngv_cl, bleeds.lngv_cl, bleeds.c2b
    core4 = 1.0 - hpt - lngv - hngv
    return {
        3: (0.0, 1.0 - lngv, 1.0),
        4: (0.0, core4, 1.0),
        41: (0.0, core4 + hngv, 1.0),
        43: (0.0, core4 + hngv, 1.0),
        44: (0.0, core4 + hngv + hpt, 1.0),
        45: (0.0, 1.0, 1.0),
        5: (0.0, 1.0, 1.0),
        6: (0.0, 1.0, 1.0),
        13: (1.0, -1.0, 0.0),
        16: (1.0, -1.0 + c2b, 0.0),
        64: (1.0, 0.0, 1.0),
        8: (1.0, 0.0, 1.0),
    }


def infer_mass_flows(w2: float, w25: float, wf: float, bleeds: Bleeds) -> dict[int, float]:
    """Mass flow gauges for stations {3,4,41,43,44,45,5,6,13,16,64,8} [kg/s]."""
    if not (w2 > w25 > 0.0):
        raise ConfigurationError(f"need W2 > W25 > 0, got W2={w2}, W25={w25}")
    if wf < 0.0:
        raise ConfigurationError(f"negative fuel flow {wf}")
    flows = {
        station: a * w2 + b * w25 + c * wf
        for station, (a, b, c) in flow_coefficients(bleeds).items()
    }
    bad = [s for s, w in flows.items() if w <= 0.0]
    if bad:
        raise ConfigurationError(f"bleed fractions drive stations {bad} non-positive")
    return flows


def station_far(station: int, w_station: float, wf: float) -> float:
    """Bookkeeping fuel-air ratio at a station: WF over the air part of its gauge."""
    if station in FUELED_STATIONS and wf > 0.0:
        return wf / (w_station - wf)
    return 0.0
