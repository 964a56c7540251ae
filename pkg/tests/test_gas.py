import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hybridcycle.errors import DomainError, InfeasibleFlowError
from hybridcycle.gas import (
    GasModel,
    GasState,
    flow_constant,
    mach_from_flow,
    mass_flow_q,
    q_ma,
)

GAS = GasModel()


class TestCp:
    def test_reference_point_matches_dry_air_value(self):
        # published dry-air cp near 288 K is ~1004.7 J/(kg K) (3.5 R for a diatomic gas)
        assert GAS.cp(288.15, 0.0) == pytest.approx(1004.7, rel=2e-3)

    def test_continuity_at_reference(self):
        assert abs(GAS.cp(288.15) - GAS.cp(288.15 + 1e-6)) < 1e-3

    def test_combustion_products_raise_cp(self):
        assert GAS.cp(1500.0, 0.02) > GAS.cp(1500.0, 0.0)

    def test_monotone_nondecreasing_288_to_2000(self):
        ts = np.linspace(288.0, 2000.0, 2000)
        for far in (0.0, 0.03):
            cps = [GAS.cp(t, far) for t in ts]
            assert all(b >= a - 1e-9 for a, b in zip(cps, cps[1:]))

    def test_positive_over_domain(self):
        for t in np.linspace(200.0, 2500.0, 300):
            assert GAS.cp(float(t)) > 0.0

    def test_out_of_range_temperature_raises(self):
        with pytest.raises(DomainError):
            GAS.cp(150.0)
        with pytest.raises(DomainError):
            GAS.cp(2600.0)


class TestEnthalpy:
    def test_zero_at_reference(self):
        assert GAS.enthalpy(288.15, 0.0) == 0.0
        assert GAS.enthalpy(288.15, 0.04) == 0.0

    def test_one_kelvin_step_mean_value(self):
        dh = GAS.enthalpy(289.15) - GAS.enthalpy(288.15)
        assert dh == pytest.approx(GAS.cp(288.65) * 1.0, rel=1e-3)

    def test_against_trapezoid_quadrature(self):
        # independent oracle: trapezoid rule on cp at ~0.1 K steps
        ts = np.linspace(288.15, 800.0, 5120)
        cps = np.array([GAS.cp(float(t)) for t in ts])
        expected = np.trapezoid(cps, ts)
        assert GAS.enthalpy(800.0) == pytest.approx(expected, rel=1e-6)

    @given(
        t1=st.floats(min_value=250.0, max_value=2100.0),
        t2=st.floats(min_value=250.0, max_value=2100.0),
        far=st.floats(min_value=0.0, max_value=0.05),
    )
    def test_difference_matches_quadrature(self, t1, t2, far):
        lo, hi = sorted((t1, t2))
        ts = np.linspace(lo, hi, 512)
        cps = np.array([GAS.cp(float(t), far) for t in ts])
        expected = np.trapezoid(cps, ts)
        got = GAS.enthalpy(hi, far) - GAS.enthalpy(lo, far)
        assert got == pytest.approx(expected, rel=1e-5, abs=1e-3)

    def test_t_from_h_round_trip(self):
        for t in (250.0, 400.0, 900.0, 1700.0):
            for far in (0.0, 0.025):
                h = GAS.enthalpy(t, far)
                assert GAS.t_from_h(h, far) == pytest.approx(t, rel=1e-10)


class TestEntropyFunction:
    def test_isentropic_round_trip(self):
        t3 = GAS.t_isentropic(300.0, 0.0, 8.0)
        back = GAS.t_isentropic(t3, 0.0, 1.0 / 8.0)
        assert back == pytest.approx(300.0, rel=1e-9)

    def test_matches_perfect_gas_for_small_ratio(self):
        # near the reference temperature gamma ~ 1.4, so T ratio ~ pr^((g-1)/g)
        t_out = GAS.t_isentropic(288.15, 0.0, 1.05)
        assert t_out == pytest.approx(288.15 * 1.05 ** (0.4 / 1.4), rel=1e-4)


class TestFlowFunction:
    def test_zero_flow(self):
        assert q_ma(0.0, 1.4) == 0.0

    def test_choked_normalization(self):
        for gamma in (1.25, 1.3, 1.4, 1.66):
            assert q_ma(1.0, gamma) == pytest.approx(1.0, abs=1e-14)

    def test_half_mach_value(self):
        # direct evaluation of the closed form
        g = 1.4
        e = (g + 1) / (2 * (g - 1))
        expected = 0.5 * ((g + 1) / 2) ** e * (1 + (g - 1) / 2 * 0.25) ** -e
        assert q_ma(0.5, 1.4) == pytest.approx(expected, rel=1e-14)
        assert q_ma(0.5, 1.4) == pytest.approx(0.7464, abs=5e-5)

    def test_negative_mach_raises(self):
        with pytest.raises(DomainError):
            q_ma(-0.1, 1.4)

    @given(gamma=st.floats(min_value=1.05, max_value=1.95))
    def test_maximum_exactly_at_sonic(self, gamma):
        grid = np.arange(0.0, 2.0 + 1e-12, 1e-3)
        vals = [q_ma(float(m), gamma) for m in grid]
        assert grid[int(np.argmax(vals))] == pytest.approx(1.0, abs=1e-12)

    def test_monotone_subsonic_and_supersonic(self):
        sub = [q_ma(m, 1.4) for m in np.linspace(0.0, 1.0, 200)]
        sup = [q_ma(m, 1.4) for m in np.linspace(1.0, 3.0, 200)]
        assert all(b > a for a, b in zip(sub, sub[1:]))
        assert all(b < a for a, b in zip(sup, sup[1:]))


class TestMassFlow:
    def test_zero_mach_zero_flow(self):
        assert mass_flow_q(400.0, 200.0, 0.0, 0.3, GAS) == 0.0

    def test_linear_in_pressure(self):
        w1 = mass_flow_q(500.0, 100.0, 0.4, 0.2, GAS)
        w2 = mass_flow_q(500.0, 200.0, 0.4, 0.2, GAS)
        assert w2 == pytest.approx(2.0 * w1, rel=1e-14)

    def test_choked_standard_conditions(self):
        # independent oracle: 1-D isentropic choked flow formula
        g = GAS.gamma_at(288.15)
        expected = (
            math.sqrt(g / GAS.R)
            * (2.0 / (g + 1.0)) ** ((g + 1.0) / (2.0 * (g - 1.0)))
            * 101325.0
            / math.sqrt(288.15)
        )
        got = mass_flow_q(288.15, 101.325, 1.0, 1.0, GAS)
        assert got == pytest.approx(expected, rel=1e-12)
        assert got == pytest.approx(241.3, rel=1e-3)

    def test_mach_round_trip(self):
        w = mass_flow_q(600.0, 400.0, 0.43, 0.15, GAS)
        assert mach_from_flow(w, 600.0, 400.0, 0.15, GAS) == pytest.approx(0.43, abs=1e-9)

    def test_zero_flow_inverts_to_zero(self):
        assert mach_from_flow(0.0, 600.0, 400.0, 0.15, GAS) == 0.0

    def test_near_choke_subsonic(self):
        w_choke = mass_flow_q(600.0, 400.0, 1.0, 0.15, GAS)
        ma = mach_from_flow(0.9999 * w_choke, 600.0, 400.0, 0.15, GAS)
        assert 0.95 < ma < 1.0

    def test_supersonic_branch(self):
        w = mass_flow_q(600.0, 400.0, 1.8, 0.15, GAS)
        ma = mach_from_flow(w, 600.0, 400.0, 0.15, GAS, branch="supersonic")
        assert ma == pytest.approx(1.8, abs=1e-8)

    def test_above_choke_raises(self):
        w_choke = mass_flow_q(600.0, 400.0, 1.0, 0.15, GAS)
        with pytest.raises(InfeasibleFlowError):
            mach_from_flow(1.001 * w_choke, 600.0, 400.0, 0.15, GAS)

    @given(
        T=st.floats(min_value=250.0, max_value=2000.0),
        P=st.floats(min_value=20.0, max_value=3000.0),
        A=st.floats(min_value=0.01, max_value=2.0),
        ma=st.floats(min_value=1e-4, max_value=0.99),
        far=st.floats(min_value=0.0, max_value=0.04),
    )
    def test_mutual_inverse_subsonic(self, T, P, A, ma, far):
        w = mass_flow_q(T, P, ma, A, GAS, far)
        back = mach_from_flow(w, T, P, A, GAS, far)
        w2 = mass_flow_q(T, P, back, A, GAS, far)
        assert w2 == pytest.approx(w, rel=1e-9)


class TestGasState:
    def test_invariants_enforced(self):
        with pytest.raises(DomainError):
            GasState(Tt=-1.0, Pt=100.0)
        with pytest.raises(DomainError):
            GasState(Tt=300.0, Pt=100.0, far=0.2)
        s = GasState(Tt=300.0, Pt=100.0, far=0.01)
        assert s.far == 0.01

    def test_flow_constant_perfect_gas(self):
        assert flow_constant(1.4, 287.05) == pytest.approx(0.040415, rel=1e-4)
