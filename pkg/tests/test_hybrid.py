import numpy as np
import pytest
from hypothesis import given, strategies as st

from hybridcycle.cascade import (
    NET_ORDER,
    OUTPUT_STATIONS,
    X_SCHEMA_FD,
    X_SCHEMA_MC,
    Y_SCHEMA,
    EngineInputs,
    HybridModel,
    build_model,
    cascade_backward,
    cascade_forward,
    forward_cascade,
    gradient_through_cascade,
    load_model,
    save_model,
)
from hybridcycle.errors import ConfigurationError, SchemaError
from hybridcycle.flows import Bleeds, infer_mass_flows
from hybridcycle.nn import Normalizer

IDX = {name: k for k, name in enumerate(Y_SCHEMA)}


def plausible_batch(n, seed=0, with_ma2=False):
    rng = np.random.default_rng(seed)
    rows = []
    for _ in range(n):
        w2 = rng.uniform(60.0, 105.0)
        row = {
            "T2": rng.uniform(250.0, 315.0),
            "P2": rng.uniform(45.0, 105.0),
            "Ma2": rng.uniform(0.2, 0.6),
            "Pamb": rng.uniform(25.0, 95.0),
            "N1": rng.uniform(0.6, 1.05),
            "N2": rng.uniform(0.8, 1.0),
            "W2": w2,
            "W25": w2 / rng.uniform(1.35, 1.6),
            "WF": rng.uniform(0.5, 1.6),
        }
        schema = X_SCHEMA_MC if with_ma2 else X_SCHEMA_FD
        rows.append([row[name] for name in schema])
    return np.array(rows)


def fitted_model(seed=0, include_ma2=False):
    """Model with normalizers fitted to plausible magnitudes (outputs stay O(1))."""
    from hybridcycle.cascade import NET_WIRING, infer_mass_flows_model

    model = build_model(seed=seed, include_ma2=include_ma2)
    x = plausible_batch(64, seed=seed + 1, with_ma2=include_ma2)
    schema = X_SCHEMA_MC if include_ma2 else X_SCHEMA_FD
    cols = {name: x[:, k] for k, name in enumerate(schema)}
    gauges = infer_mass_flows_model(cols["W2"], cols["W25"], cols["WF"], model.bleeds)
    for name, station in (("W3", 3), ("W4", 4), ("W44", 44), ("W13", 13), ("W6", 6), ("W16", 16), ("W64", 64)):
        cols[name] = gauges[station]
    rng = np.random.default_rng(seed + 2)
    fake_out = {
        25: (440, 385, 0.4), 13: (424, 342, 0.3), 3: (780, 2500, 0.25), 4: (1600, 2400, 0.1),
        44: (1205, 730, 0.32), 6: (1015, 342, 0.38), 16: (432, 336, 0.33), 64: (846, 339, 0.38), 8: (846, 339, 0.95),
    }
    for s, (t, p, ma) in fake_out.items():
        cols[f"T{s}"] = t * rng.uniform(0.9, 1.1, size=len(x))
        cols[f"P{s}"] = p * rng.uniform(0.9, 1.1, size=len(x))
        cols[f"Ma{s}"] = ma * rng.uniform(0.9, 1.1, size=len(x))
    for name in NET_ORDER:
        net = model.nets[name]
        net.norm_in = Normalizer.fit(np.stack([cols[f] for f in model.net_inputs(name)], axis=1))
        net.norm_out = Normalizer.fit(np.stack([cols[f] for f in NET_WIRING[name][1]], axis=1))
    return model


class TestInferMassFlows:
    def test_zero_bleed_collapse(self):
        flows = infer_mass_flows(100.0, 30.0, 0.5, Bleeds(0.0, 0.0, 0.0, 0.0))
        assert flows[3] == pytest.approx(30.5)
        assert flows[13] == pytest.approx(70.0)
        assert flows[8] == pytest.approx(100.5)

    def test_hand_evaluated_twelve_lines(self):
        # independent hand evaluation of the bookkeeping
        w2, w25, wf = 100.0, 30.0, 0.5
        hpt, hngv, lngv, c2b = 0.04, 0.06, 0.03, 0.01
        flows = infer_mass_flows(w2, w25, wf, Bleeds(hpt, hngv, lngv, c2b))
        w4 = w25 * (1 - hpt - lngv - hngv) + wf
        assert flows[3] == pytest.approx(w25 * (1 - lngv) + wf)  # 29.6
        assert flows[4] == pytest.approx(w4)  # 26.6
        assert flows[41] == pytest.approx(w4 + w25 * hngv)  # 28.4
        assert flows[43] == pytest.approx(flows[41])
        assert flows[44] == pytest.approx(w4 + w25 * (hngv + hpt))  # 29.6
        assert flows[45] == pytest.approx(flows[44] + w25 * lngv)  # 30.5
        assert flows[5] == pytest.approx(flows[45])
        assert flows[6] == pytest.approx(flows[45])
        assert flows[13] == pytest.approx(70.0)
        assert flows[16] == pytest.approx(70.0 + c2b * w25)  # 70.3
        assert flows[64] == pytest.approx(100.5)
        assert flows[8] == pytest.approx(100.5)

    def test_hpt_cooling_return_difference(self):
        flows = infer_mass_flows(100.0, 30.0, 0.5, Bleeds())
        assert flows[44] - flows[41] == pytest.approx(30.0 * Bleeds().hpt_cl, rel=1e-14)

    def test_mixer_gauge_identity(self):
        # the bookkeeping leaves exactly the c2b leak between the mixer gauges
        b = Bleeds()
        flows = infer_mass_flows(100.0, 30.0, 0.5, b)
        assert flows[6] + flows[16] - flows[64] == pytest.approx(b.c2b * 30.0, rel=1e-12)

    @given(
        w2=st.floats(min_value=50.0, max_value=150.0),
        w25_frac=st.floats(min_value=0.3, max_value=0.9),
        wf=st.floats(min_value=0.0, max_value=2.0),
        a=st.floats(min_value=0.1, max_value=2.0),
    )
    def test_linear_in_flows(self, w2, w25_frac, wf, a):
        b = Bleeds()
        w25 = w2 * w25_frac
        f1 = infer_mass_flows(w2, w25, wf, b)
        f2 = infer_mass_flows(a * w2, a * w25, a * wf, b)
        for s in f1:
            assert f2[s] == pytest.approx(a * f1[s], rel=1e-12)

    def test_invalid_inputs_raise(self):
        with pytest.raises(ConfigurationError):
            infer_mass_flows(50.0, 60.0, 0.5, Bleeds())
        with pytest.raises(ConfigurationError):
            infer_mass_flows(100.0, 60.0, -0.1, Bleeds())


class TestModelContract:
    def test_dims_enforced_at_construction(self):
        model = build_model(seed=0)
        bad_nets = dict(model.nets)
        from hybridcycle.nn import init_mlp

        bad_nets["hpc"] = model.nets["hpc"].__class__(
            init_mlp([6, 64, 64, 3], seed=0),
            Normalizer(np.zeros(6), np.ones(6)),
            Normalizer(np.zeros(3), np.ones(3)),
        )
        with pytest.raises(SchemaError):
            HybridModel(nets=bad_nets, bleeds=Bleeds())

    def test_default_omits_ma2(self):
        model = build_model(seed=0)
        assert model.nets["lpc"].mlp.layer_dims[0] == 5
        assert "Ma2" not in model.net_inputs("lpc")

    def test_ma2_restored_by_flag(self):
        model = build_model(seed=0, include_ma2=True)
        assert model.nets["lpc"].mlp.layer_dims[0] == 6
        assert model.net_inputs("lpc")[2] == "Ma2"

    def test_engine_inputs_invariants(self):
        with pytest.raises(ConfigurationError):
            EngineInputs(T2=288, P2=100, Pamb=100, N1=1, N2=1, W2=100, W25=120, WF=1)
        with pytest.raises(ConfigurationError):
            EngineInputs(T2=288, P2=100, Pamb=100, N1=1, N2=1, W2=100, W25=60, WF=9)


class TestCascade:
    def test_deterministic(self):
        model = fitted_model(seed=3)
        x = plausible_batch(5, seed=9)
        y1, _ = cascade_forward(model, x, X_SCHEMA_FD)
        y2, _ = cascade_forward(model, x, X_SCHEMA_FD)
        assert np.array_equal(y1, y2)

    def test_pamb_touches_only_nozzle_outputs(self):
        model = fitted_model(seed=4)
        x = plausible_batch(3, seed=10)
        col = X_SCHEMA_FD.index("Pamb")
        y1, _ = cascade_forward(model, x, X_SCHEMA_FD)
        x2 = x.copy()
        x2[:, col] *= 1.05
        y2, _ = cascade_forward(model, x2, X_SCHEMA_FD)
        station8 = [IDX[f"{q}8"] for q in ("T", "P", "Ma")]
        others = [k for k in range(len(Y_SCHEMA)) if k not in station8]
        assert np.array_equal(y1[:, others], y2[:, others])
        assert not np.allclose(y1[:, station8], y2[:, station8])

    def test_n2_does_not_touch_bypass(self):
        model = fitted_model(seed=5)
        x = plausible_batch(3, seed=11)
        col = X_SCHEMA_FD.index("N2")
        y1, _ = cascade_forward(model, x, X_SCHEMA_FD)
        x2 = x.copy()
        x2[:, col] *= 1.03
        y2, _ = cascade_forward(model, x2, X_SCHEMA_FD)
        bypass_cols = [IDX[f"{q}{s}"] for s in (25, 13, 16) for q in ("T", "P", "Ma")]
        assert np.array_equal(y1[:, bypass_cols], y2[:, bypass_cols])

    def test_forward_cascade_single_sample(self):
        model = fitted_model(seed=6)
        inputs = EngineInputs(T2=288.0, P2=100.0, Pamb=95.0, N1=0.95, N2=0.97, W2=95.0, W25=64.0, WF=1.3)
        out = forward_cascade(model, inputs)
        assert set(out.states) == set(OUTPUT_STATIONS)
        assert set(out.w) == {2, 25, 3, 4, 41, 43, 44, 45, 5, 6, 13, 16, 64, 8}
        assert out.w[8] == pytest.approx(95.0 + 1.3)


class TestCascadeGradients:
    def test_zero_upstream_zero_everywhere(self):
        model = fitted_model(seed=7)
        inputs = EngineInputs(T2=288.0, P2=100.0, Pamb=95.0, N1=0.95, N2=0.97, W2=95.0, W25=64.0, WF=1.3)
        grads, d_in = gradient_through_cascade(model, inputs, np.zeros(len(Y_SCHEMA)))
        assert all(np.all(w == 0) for g in grads.values() for w in g.weights)
        assert all(v == 0.0 for v in d_in.values())

    def test_nozzle_weights_untouched_by_station25_upstream(self):
        model = fitted_model(seed=8)
        inputs = EngineInputs(T2=288.0, P2=100.0, Pamb=95.0, N1=0.95, N2=0.97, W2=95.0, W25=64.0, WF=1.3)
        upstream = np.zeros(len(Y_SCHEMA))
        upstream[IDX["T25"]] = 1.0
        grads, _ = gradient_through_cascade(model, inputs, upstream)
        assert all(np.all(w == 0) for w in grads["nozzle"].weights)
        assert not all(np.all(w == 0) for w in grads["lpc"].weights)

    def test_input_gradients_match_finite_differences(self):
        model = fitted_model(seed=12)
        x = plausible_batch(4, seed=13)
        rng = np.random.default_rng(14)
        upstream = rng.normal(size=(4, len(Y_SCHEMA)))

        y0, ctx = cascade_forward(model, x, X_SCHEMA_FD)
        _, d_x = cascade_backward(model, ctx, upstream)

        def scalar(xb):
            y, _ = cascade_forward(model, xb, X_SCHEMA_FD)
            return float((upstream * y).sum())

        for col in range(x.shape[1]):
            for i in range(2):
                h = 1e-6 * max(abs(x[i, col]), 1.0)
                up, dn = x.copy(), x.copy()
                up[i, col] += h
                dn[i, col] -= h
                fd = (scalar(up) - scalar(dn)) / (2 * h)
                assert d_x[i, col] == pytest.approx(fd, rel=2e-5, abs=1e-8)

    def test_parameter_gradients_match_finite_differences(self):
        model = fitted_model(seed=15)
        x = plausible_batch(3, seed=16)
        rng = np.random.default_rng(17)
        upstream = rng.normal(size=(3, len(Y_SCHEMA)))
        _, ctx = cascade_forward(model, x, X_SCHEMA_FD)
        grads, _ = cascade_backward(model, ctx, upstream)

        def scalar():
            y, _ = cascade_forward(model, x, X_SCHEMA_FD)
            return float((upstream * y).sum())

        for name in ("lpc", "hpt", "nozzle"):
            w = model.nets[name].mlp.weights[1]
            for idx in [(0, 0), (5, 7)]:
                h = 1e-6
                keep = w[idx]
                w[idx] = keep + h
                up = scalar()
                w[idx] = keep - h
                dn = scalar()
                w[idx] = keep
                assert grads[name].weights[1][idx] == pytest.approx((up - dn) / (2 * h), rel=2e-5, abs=1e-8)


class TestBundle:
    def test_round_trip(self, tmp_path):
        model = fitted_model(seed=21)
        save_model(model, str(tmp_path / "m"))
        back = load_model(str(tmp_path / "m"))
        x = plausible_batch(4, seed=22)
        y1, _ = cascade_forward(model, x, X_SCHEMA_FD)
        y2, _ = cascade_forward(back, x, X_SCHEMA_FD)
        assert np.array_equal(y1, y2)
        assert back.bleeds == model.bleeds

    def test_contract_enforced_at_load(self, tmp_path):
        model = fitted_model(seed=23)
        save_model(model, str(tmp_path / "m"))
        # corrupt one net's dims
        path = tmp_path / "m" / "hpc.net"
        content = path.read_text().replace("dims 5 64 64 3", "dims 5 64 64 2", 1)
        path.write_text(content)
        with pytest.raises(SchemaError):
            load_model(str(tmp_path / "m"))
