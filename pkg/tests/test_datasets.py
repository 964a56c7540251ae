import numpy as np
import pytest

from hybridcycle.cascade import X_SCHEMA_FD, X_SCHEMA_MC, Y_SCHEMA
from hybridcycle.cycle import degrade_config, design_point, off_design
from hybridcycle.data import (
    Dataset,
    Envelope,
    FlightSeries,
    MissionProfile,
    attach_w2_w25,
    extract_quasi_steady,
    gen_flight_series,
    gen_mc,
    load_dataset,
    load_mission,
    load_split,
    random_mission,
    reference_t6,
    save_dataset,
    save_mission,
    save_split,
    split_dataset,
)
from hybridcycle.errors import SchemaError
from hybridcycle.losses import loss_massflow, loss_power
from hybridcycle.maps import Degradation


@pytest.fixture(scope="session")
def cfg():
    return design_point()


@pytest.fixture(scope="session")
def small_mc(cfg):
    return gen_mc(cfg, n=48, seed=7)


@pytest.fixture(scope="session")
def degraded(cfg):
    return degrade_config(cfg, {"hpc": Degradation(flow=-0.015, eff=-0.02), "lpt": Degradation(eff=-0.01)})


@pytest.fixture(scope="session")
def series(degraded):
    mission = MissionProfile(
        waypoints=np.array(
            [
                [0.0, 288.0, 95.0, 80.0, 0.97],
                [60.0, 285.0, 90.0, 75.0, 0.93],
                [120.0, 283.0, 88.0, 72.0, 0.95],
            ]
        ),
        sample_rate_hz=1.0,
    )
    return gen_flight_series(degraded, mission, seed=3)


class TestSplit:
    def test_paper_scale_split_counts(self):
        # 15360 samples at ratio 0.8 -> 12288 train / 3072 test
        ds = Dataset(np.zeros((15360, 2)), np.ones((15360, 1)), ("a", "b"), ("y",), tag="mc")
        sd = split_dataset(ds, 0.8, seed=0)
        assert len(sd.train) == 12288
        assert len(sd.test) == 3072

    def test_disjoint_and_complete(self):
        x = np.arange(100, dtype=float).reshape(-1, 1)
        ds = Dataset(x, np.ones((100, 1)), ("a",), ("y",), tag="mc")
        sd = split_dataset(ds, 0.75, seed=3)
        merged = np.concatenate([sd.train.x[:, 0], sd.test.x[:, 0]])
        assert sorted(merged.tolist()) == list(range(100))


class TestGenMc:
    def test_default_arguments_mirror_baseline_sizes(self):
        import inspect

        sig = inspect.signature(gen_mc)
        assert sig.parameters["n"].default == 15360
        assert sig.parameters["split_ratio"].default == 0.8

    def test_schemas_and_sizes(self, small_mc):
        sd, report = small_mc
        assert sd.train.x_schema == X_SCHEMA_MC
        assert sd.train.y_schema == Y_SCHEMA
        assert len(sd.train) + len(sd.test) == 48
        assert report["rejections"] >= 0

    def test_bitwise_deterministic(self, cfg, small_mc):
        sd1, _ = small_mc
        sd2, _ = gen_mc(cfg, n=48, seed=7)
        assert np.array_equal(sd1.train.x, sd2.train.x)
        assert np.array_equal(sd1.test.y, sd2.test.y)

    def test_targets_physically_consistent(self, cfg, small_mc):
        # generation post-condition: thermodynamic losses vanish on targets
        sd, _ = small_mc
        ds = sd.train
        w2, w25, wf, t2 = (ds.column(k) for k in ("W2", "W25", "WF", "T2"))
        l2, _, _ = loss_massflow(ds.y, w2, w25, wf, cfg.areas, cfg.gas, cfg.bleeds)
        l3, _, _ = loss_power(ds.y, t2, w2, w25, wf, cfg.gas, cfg.bleeds, cfg.shafts)
        assert l2 < 1e-12
        assert l3 < 1e-12

    def test_inputs_inside_envelope(self, small_mc):
        sd, _ = small_mc
        env = Envelope()
        for ds in (sd.train, sd.test):
            assert np.all((ds.column("T2") >= env.t2[0]) & (ds.column("T2") <= env.t2[1]))
            assert np.all(ds.column("Pamb") <= ds.column("P2"))
            assert np.all((ds.column("N2") >= env.n2[0]) & (ds.column("N2") <= env.n2[1]))


class TestFlightSeries:
    def test_constant_profile_constant_series(self, cfg):
        mission = MissionProfile(
            waypoints=np.array([[0.0, 288.0, 95.0, 80.0, 0.96], [30.0, 288.0, 95.0, 80.0, 0.96]])
        )
        series = gen_flight_series(cfg, mission, noise={}, seed=0)
        pt = off_design(cfg, 288.0, 95.0, 80.0, 0.96)
        assert np.allclose(series.channels["T6"], pt.stations[6].Tt, rtol=1e-9)
        assert np.allclose(series.channels["N1"], pt.unknowns["n1"], rtol=1e-9)

    def test_noise_statistics(self, cfg):
        mission = MissionProfile(
            waypoints=np.array([[0.0, 288.0, 95.0, 80.0, 0.96], [10999.0, 288.0, 95.0, 80.0, 0.96]])
        )
        series = gen_flight_series(cfg, mission, noise={"T6": 0.003}, seed=5)
        rel = (series.channels["T6"] - series.truth["T6"]) / series.truth["T6"]
        assert len(rel) > 10_000
        assert np.std(rel) == pytest.approx(0.003, rel=0.10)

    def test_degraded_differs_from_clean(self, cfg, degraded):
        mission = MissionProfile(waypoints=np.array([[0.0, 288.0, 95.0, 80.0, 0.96], [5.0, 288.0, 95.0, 80.0, 0.96]]))
        clean = gen_flight_series(cfg, mission, noise={}, seed=0)
        deg = gen_flight_series(degraded, mission, noise={}, seed=0)
        assert abs(deg.channels["T6"][0] - clean.channels["T6"][0]) > 1.0

    def test_deterministic(self, degraded, series):
        mission = MissionProfile(
            waypoints=np.array(
                [[0.0, 288.0, 95.0, 80.0, 0.97], [60.0, 285.0, 90.0, 75.0, 0.93], [120.0, 283.0, 88.0, 72.0, 0.95]]
            )
        )
        again = gen_flight_series(degraded, mission, seed=3)
        assert np.array_equal(series.channels["T6"], again.channels["T6"])


class TestQuasiSteady:
    def _series(self, n1):
        n1 = np.asarray(n1, dtype=float)
        n = len(n1)
        channels = {name: np.full(n, 100.0) for name in ("N2", "WF", "T2", "P2", "Pamb", "T6")}
        channels["N1"] = n1
        truth = {"T6": np.full(n, 100.0), "W2": np.full(n, 90.0), "W25": np.full(n, 60.0)}
        return FlightSeries(sample_rate_hz=1.0, time=np.arange(n, dtype=float), channels=channels, truth=truth)

    def test_constant_series_counts_windows(self):
        qs = extract_quasi_steady(self._series(np.full(31, 0.9)))
        assert len(qs) == 10  # floor(31 / 3) non-overlapping windows

    def test_fast_ramp_yields_nothing(self):
        # 2% amplitude per 3 s exceeds the 1% criterion
        n1 = 0.9 * (1.0 + 0.0067 * np.arange(30))
        assert len(extract_quasi_steady(self._series(n1))) == 0

    def test_known_steady_segments_recovered(self):
        n1 = np.concatenate([np.full(6, 0.90), [0.90, 0.95, 1.0], np.full(6, 1.0)])
        qs = extract_quasi_steady(self._series(n1))
        assert len(qs) == 4
        assert np.allclose(sorted(set(qs.column("N1"))), [0.90, 1.0])

    def test_other_channel_fluctuation_ignored(self):
        series = self._series(np.full(9, 0.9))
        series.channels["T2"] = np.array([200.0, 400, 300, 200, 400, 300, 200, 400, 300])
        qs = extract_quasi_steady(series)
        assert len(qs) == 3
        assert np.allclose(qs.column("T2"), 300.0)

    def test_invariant_under_n1_rescaling(self):
        rng = np.random.default_rng(8)
        base = 0.9 * (1.0 + 0.002 * rng.standard_normal(60)).cumprod() ** 0.1
        a = extract_quasi_steady(self._series(base))
        b = extract_quasi_steady(self._series(3.7 * base))
        assert len(a) == len(b)
        assert np.allclose(a.meta[:, 0], b.meta[:, 0])

    def test_window_means_reported(self, series):
        qs = extract_quasi_steady(series)
        k = int(qs.meta[0, 0])
        assert qs.column("T2")[0] == pytest.approx(series.channels["T2"][k : k + 3].mean(), rel=1e-12)


class TestAttach:
    def test_round_trip_on_clean_noiseless_data(self, cfg):
        mission = MissionProfile(waypoints=np.array([[0.0, 285.0, 92.0, 70.0, 0.95], [8.0, 285.0, 92.0, 70.0, 0.95]]))
        series = gen_flight_series(cfg, mission, noise={}, seed=0)
        qs = extract_quasi_steady(series)
        fd, report = attach_w2_w25(qs, cfg)
        assert report["dropped"] == 0
        assert fd.x_schema == X_SCHEMA_FD
        assert np.allclose(fd.column("W2"), fd.meta[:, 2], rtol=1e-6)
        assert np.allclose(fd.column("W25"), fd.meta[:, 3], rtol=1e-6)

    def test_degraded_data_carries_model_mismatch(self, cfg, series):
        qs = extract_quasi_steady(series)
        fd, _ = attach_w2_w25(qs, cfg)
        rel = (fd.column("W2") - fd.meta[:, 2]) / fd.meta[:, 2]
        assert np.abs(rel).mean() > 1e-3

    def test_deterministic(self, cfg, series):
        qs = extract_quasi_steady(series)
        a, _ = attach_w2_w25(qs, cfg)
        b, _ = attach_w2_w25(qs, cfg)
        assert np.array_equal(a.x, b.x)

    def test_reference_t6_biased_on_degraded_data(self, cfg, series):
        qs = extract_quasi_steady(series)
        t6 = reference_t6(cfg, qs)
        assert np.isfinite(t6).all()
        rel = np.abs(t6 - qs.meta[:, 1]) / qs.meta[:, 1]
        assert rel.mean() > 1e-3


class TestFdExperiment:
    def test_flight_disjoint_structure(self, cfg, degraded):
        from hybridcycle.data import EVAL_MISSION_BOX, TRAIN_MISSION_BOX, build_fd_experiment

        sd = build_fd_experiment(cfg, degraded, seed=3, train_flights=1, test_flights=1, flight_duration_s=180.0)
        assert sd.train.tag == "fd" and sd.test.tag == "fd"
        assert sd.train.x_schema == X_SCHEMA_FD
        # training flights stay inside the routine box; evaluation flights roam wider
        lo, hi = TRAIN_MISSION_BOX["n2"]
        assert np.all((sd.train.column("N2") > lo - 0.01) & (sd.train.column("N2") < hi + 0.01))
        assert EVAL_MISSION_BOX["n2"][0] < lo
        # ground-truth meta present on both sides
        assert sd.train.meta is not None and sd.test.meta is not None

    def test_deterministic(self, cfg, degraded):
        from hybridcycle.data import build_fd_experiment

        a = build_fd_experiment(cfg, degraded, seed=4, train_flights=1, test_flights=1, flight_duration_s=120.0)
        b = build_fd_experiment(cfg, degraded, seed=4, train_flights=1, test_flights=1, flight_duration_s=120.0)
        assert np.array_equal(a.train.x, b.train.x)
        assert np.array_equal(a.test.y, b.test.y)


class TestFiles:
    def test_dataset_round_trip(self, small_mc, tmp_path):
        sd, _ = small_mc
        path = tmp_path / "mc.ds"
        save_dataset(sd.train, str(path))
        back = load_dataset(str(path))
        assert np.array_equal(back.x, sd.train.x)
        assert np.array_equal(back.y, sd.train.y)
        assert back.x_schema == sd.train.x_schema
        assert back.tag == "mc"

    def test_split_round_trip(self, small_mc, tmp_path):
        sd, _ = small_mc
        save_split(sd, str(tmp_path / "d"))
        back = load_split(str(tmp_path / "d"))
        assert np.array_equal(back.train.x, sd.train.x)
        assert back.split_ratio == sd.split_ratio

    def test_schema_reorder_detected(self, small_mc, tmp_path):
        sd, _ = small_mc
        path = tmp_path / "mc.ds"
        save_dataset(sd.train, str(path))
        content = path.read_text().replace("x_schema T2 P2", "x_schema P2 T2", 1)
        path.write_text(content)
        back = load_dataset(str(path))
        assert back.x_schema != sd.train.x_schema  # reorder is visible to consumers

    def test_truncated_rejected(self, small_mc, tmp_path):
        sd, _ = small_mc
        path = tmp_path / "mc.ds"
        save_dataset(sd.train, str(path))
        lines = path.read_text().splitlines()
        path.write_text("\n".join(lines[:-2]) + "\n")
        with pytest.raises(SchemaError):
            load_dataset(str(path))

    def test_byte_identical_rewrite(self, small_mc, tmp_path):
        sd, _ = small_mc
        p1, p2 = tmp_path / "a.ds", tmp_path / "b.ds"
        save_dataset(sd.train, str(p1))
        save_dataset(sd.train, str(p2))
        assert p1.read_bytes() == p2.read_bytes()

    def test_mission_round_trip(self, tmp_path):
        mission = random_mission(600.0, seed=4)
        path = tmp_path / "m.mission"
        save_mission(mission, str(path))
        back = load_mission(str(path))
        assert np.array_equal(back.waypoints, mission.waypoints)
        assert back.sample_rate_hz == mission.sample_rate_hz
