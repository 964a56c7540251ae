import numpy as np
import pytest

from hybridcycle.cascade import X_SCHEMA_FD
from hybridcycle.cycle import design_point
from hybridcycle.data import gen_mc
from hybridcycle.errors import ConfigurationError
from hybridcycle.nn import TrainConfig
from hybridcycle.training import pretrain_mc
from hybridcycle.wsolve import WSolveOptions, _objective, similarity_init, solve_w
from hybridcycle.cascade import build_model


@pytest.fixture(scope="session")
def cfg():
    return design_point()


@pytest.fixture(scope="session")
def trained(cfg):
    """Small pretrained model plus its MC data (shared across solver tests)."""
    sd, _ = gen_mc(cfg, n=256, seed=5)
    model = build_model(seed=1)
    model, _ = pretrain_mc(
        model, sd, TrainConfig(epochs=700, learning_rate=1e-3, batch_size=64, seed=0),
        cfg.areas, cfg.shafts, cfg.gas,
    )
    return model, sd


def sample_of(ds, k):
    return {name: float(ds.x[k, i]) for i, name in enumerate(ds.x_schema)}


class TestObjective:
    def test_gradient_matches_finite_differences(self, cfg, trained):
        model, sd = trained
        schema = X_SCHEMA_FD
        checked = 0
        for k in range(4):
            s = sample_of(sd.test, k)
            w2, w25 = s["W2"] * 1.05, s["W25"] * 0.95
            sample = {n: v for n, v in s.items() if n not in ("W2", "W25", "Ma2")}
            f0, g2, g25 = _objective(model, sample, schema, cfg.areas, cfg.gas, cfg.shafts, w2, w25)
            for which, grad in (("w2", g2), ("w25", g25)):
                h = 1e-5 * (w2 if which == "w2" else w25)
                up = _objective(model, sample, schema, cfg.areas, cfg.gas, cfg.shafts,
                                w2 + (h if which == "w2" else 0.0), w25 + (h if which == "w25" else 0.0))[0]
                dn = _objective(model, sample, schema, cfg.areas, cfg.gas, cfg.shafts,
                                w2 - (h if which == "w2" else 0.0), w25 - (h if which == "w25" else 0.0))[0]
                fd = (up - dn) / (2 * h)
                assert grad == pytest.approx(fd, rel=2e-5, abs=1e-12)
                checked += 1
        assert checked == 8

    def test_nonnegative(self, cfg, trained):
        model, sd = trained
        s = sample_of(sd.test, 0)
        sample = {n: v for n, v in s.items() if n not in ("W2", "W25", "Ma2")}
        f, _, _ = _objective(model, sample, X_SCHEMA_FD, cfg.areas, cfg.gas, cfg.shafts, s["W2"], s["W25"])
        assert f >= 0.0


class TestSolveW:
    def test_stationary_near_truth(self, cfg, trained):
        model, sd = trained
        s = sample_of(sd.train, 1)
        sample = {n: v for n, v in s.items() if n not in ("W2", "W25", "Ma2")}
        res = solve_w(model, sample, cfg.areas, cfg.gas, cfg.shafts, init=(s["W2"], s["W25"]))
        # the unit fixture is a coarse model; the acceptance suite enforces the
        # tight stationarity bound with the fully pretrained model
        assert abs(res.w2 - s["W2"]) / s["W2"] < 2e-2

    def test_recovers_from_scaled_init(self, cfg, trained):
        model, sd = trained
        hits = 0
        n = 8
        for k in range(n):
            s = sample_of(sd.train, k)
            sample = {name: v for name, v in s.items() if name not in ("W2", "W25", "Ma2")}
            res = solve_w(
                model, sample, cfg.areas, cfg.gas, cfg.shafts,
                init=(0.8 * s["W2"], 0.8 * s["W25"]),
                opts=WSolveOptions(max_iterations=600),
            )
            if abs(res.w2 - s["W2"]) / s["W2"] < 0.04 and abs(res.w25 - s["W25"]) / s["W25"] < 0.04:
                hits += 1
        assert hits >= int(0.75 * n)

    def test_result_independent_of_batch_order(self, cfg, trained):
        model, sd = trained
        results = []
        for order in ((2, 3), (3, 2)):
            got = {}
            for k in order:
                s = sample_of(sd.train, k)
                sample = {n: v for n, v in s.items() if n not in ("W2", "W25", "Ma2")}
                got[k] = solve_w(model, sample, cfg.areas, cfg.gas, cfg.shafts, init=(0.9 * s["W2"], 0.9 * s["W25"]))
            results.append(got)
        for k in (2, 3):
            assert results[0][k].w2 == results[1][k].w2
            assert results[0][k].w25 == results[1][k].w25

    def test_projection_keeps_constraint(self, cfg, trained):
        model, sd = trained
        s = sample_of(sd.train, 4)
        sample = {n: v for n, v in s.items() if n not in ("W2", "W25", "Ma2")}
        res = solve_w(
            model, sample, cfg.areas, cfg.gas, cfg.shafts,
            init=(s["W2"], 0.97 * s["W2"]),  # starts nearly violating W25 < W2
            opts=WSolveOptions(max_iterations=60),
        )
        assert 0.0 < res.w25 < res.w2

    def test_nonconvergence_reports_not_raises(self, cfg, trained):
        model, sd = trained
        s = sample_of(sd.train, 5)
        sample = {n: v for n, v in s.items() if n not in ("W2", "W25", "Ma2")}
        res = solve_w(
            model, sample, cfg.areas, cfg.gas, cfg.shafts,
            init=(0.7 * s["W2"], 0.7 * s["W25"]),
            opts=WSolveOptions(max_iterations=2, grad_tol=1e-30, objective_tol=0.0),
        )
        assert res.iterations <= 2
        assert isinstance(res.converged, bool)

    def test_similarity_init(self, cfg):
        w2, w25 = similarity_init(cfg.design.t2, cfg.design.p2, cfg.design)
        assert w2 == pytest.approx(cfg.design.w2)
        assert w25 == pytest.approx(cfg.design.w2 / (1 + cfg.design.bpr))

    def test_missing_inputs_raise(self, cfg, trained):
        model, _ = trained
        with pytest.raises(ConfigurationError):
            solve_w(model, {"T2": 288.0}, cfg.areas, cfg.gas, cfg.shafts, init=(100.0, 60.0))
