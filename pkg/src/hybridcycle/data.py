"""Dataset generation and file formats.

Monte Carlo cycle sampling over the flight envelope, synthetic
degraded-engine flight series with sensor noise (a stand-in for real
telemetry), quasi-steady-state extraction, and inlet/core flow attachment
via the clean reference model. All randomness flows through explicit seeds;
files are columnar text with schema headers and lossless float encoding.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .cascade import X_SCHEMA_FD, X_SCHEMA_MC, Y_SCHEMA
from .cycle import UNKNOWN_ORDER, EngineConfig, off_design, off_design_general
from .errors import ConvergenceError, EnvelopeError, SchemaError
from .textio import fmt_row, write_text

FD_BASE_SCHEMA = ("T2", "P2", "Pamb", "N1", "N2", "WF")
FD_META_SCHEMA = ("time_index", "T6_true", "W2_true", "W25_true")


@dataclass
class Dataset:
    """Tagged sample collection with schema records."""

    x: np.ndarray
    y: np.ndarray
    x_schema: tuple
    y_schema: tuple
    tag: str  # mc | fd
    meta: np.ndarray | None = None
    meta_schema: tuple = ()

    def __post_init__(self):
        if self.x.ndim != 2 or self.y.ndim != 2 or len(self.x) != len(self.y):
            raise SchemaError(f"sample arrays inconsistent: {self.x.shape} vs {self.y.shape}")
        if self.x.shape[1] != len(self.x_schema) or self.y.shape[1] != len(self.y_schema):
            raise SchemaError("schema length mismatches columns")
        if not (np.isfinite(self.x).all() and np.isfinite(self.y).all()):
            raise SchemaError("non-finite sample values")

    def __len__(self):
        return len(self.x)

    def take(self, idx) -> "Dataset":
        meta = self.meta[idx] if self.meta is not None else None
        return replace(self, x=self.x[idx], y=self.y[idx], meta=meta)

    def column(self, name: str) -> np.ndarray:
        return self.x[:, self.x_schema.index(name)]


@dataclass
class SplitDataset:
    train: Dataset
    test: Dataset
    split_ratio: float
    seed: int


@dataclass(frozen=True)
class Envelope:
    """Uniform sampling box for the Monte Carlo inputs (Pamb capped at P2)."""

    t2: tuple = (244.0, 320.0)
    p2: tuple = (35.0, 110.0)
    pamb: tuple = (22.0, 102.0)
    n2: tuple = (0.80, 1.00)


@dataclass
class FlightSeries:
    """Fixed-rate recorded channels plus the generator's ground truth."""

    sample_rate_hz: float
    time: np.ndarray
    channels: dict  # recorded (noisy) N1, N2, WF, T2, P2, Pamb, T6
    truth: dict  # noiseless T6, W2, W25
    failures: list = field(default_factory=list)  # time indices the solver skipped

    def __post_init__(self):
        if self.sample_rate_hz <= 0.0:
            raise SchemaError("sample rate must be positive")
        if np.any(np.diff(self.time) <= 0.0):
            raise SchemaError("time must be strictly increasing")


@dataclass(frozen=True)
class MissionProfile:
    """Waypoint table (time, T2, P2, Pamb, N2), linearly interpolated."""

    waypoints: np.ndarray  # (k, 5)
    sample_rate_hz: float = 1.0

    def duration(self) -> float:
        return float(self.waypoints[-1, 0])

    def at(self, t):
        cols = [np.interp(t, self.waypoints[:, 0], self.waypoints[:, k]) for k in range(1, 5)]
        return cols  # t2, p2, pamb, n2


# mission envelope boxes: training flights hug the routine operating region,
# evaluation flights span the certified envelope including the excursions
# routine flying never visits
TRAIN_MISSION_BOX = {"t2": (272.0, 296.0), "p2": (58.0, 88.0), "n2": (0.905, 0.965)}
EVAL_MISSION_BOX = {"t2": (246.0, 318.0), "p2": (37.0, 108.0), "n2": (0.805, 0.995)}


def random_mission(
    duration_s: float,
    seed: int,
    sample_rate_hz: float = 1.0,
    waypoint_spacing_s: float = 60.0,
    box: dict = None,
) -> MissionProfile:
    """Slow seeded random-walk mission inside an envelope box.

    Waypoint increments are bounded so spool speeds drift slowly enough for
    quasi-steady windows to qualify."""
    rng = np.random.default_rng(seed)
    bounds = TRAIN_MISSION_BOX if box is None else box
    state = {key: rng.uniform(lo + 0.25 * (hi - lo), hi - 0.25 * (hi - lo)) for key, (lo, hi) in bounds.items()}
    steps = {"t2": 3.0, "p2": 4.0, "n2": 0.012}
    rows = []
    t = 0.0
    while t <= duration_s + waypoint_spacing_s:
        pamb = state["p2"] * rng.uniform(0.55, 0.92)
        rows.append([t, state["t2"], state["p2"], max(pamb, 24.0), state["n2"]])
        for key, (lo, hi) in bounds.items():
            nxt = state[key] + rng.uniform(-steps[key], steps[key])
            state[key] = min(max(nxt, lo), hi)  # reflecting walk
        t += waypoint_spacing_s
    return MissionProfile(waypoints=np.array(rows), sample_rate_hz=sample_rate_hz)


def _fly_and_extract(cfg_degraded, missions, noise, seed0):
    parts = []
    for k, mission in enumerate(missions):
        series = gen_flight_series(cfg_degraded, mission, noise=noise, seed=seed0 + k)
        parts.append(extract_quasi_steady(series))
    x = np.concatenate([p.x for p in parts])
    y = np.concatenate([p.y for p in parts])
    meta = np.concatenate([p.meta for p in parts])
    return Dataset(x, y, parts[0].x_schema, parts[0].y_schema, tag="fd", meta=meta, meta_schema=parts[0].meta_schema)


def build_fd_experiment(
    cfg_clean: EngineConfig,
    cfg_degraded: EngineConfig,
    seed: int = 0,
    train_flights: int = 6,
    test_flights: int = 3,
    flight_duration_s: float = 2900.0,
    noise: dict = None,
    jobs: int = 1,
) -> SplitDataset:
    """Flight-disjoint train/test datasets for the degraded-engine experiment.

    Training flights sample the routine operating region; held-out test
    flights cover a wider envelope, so evaluation probes generalization the
    way a deployment does rather than interpolation within one recording.
    Both sides get (W2, W25) attached from the clean reference model.
    """
    train_missions = [
        random_mission(flight_duration_s, seed=1000 * seed + k, box=TRAIN_MISSION_BOX)
        for k in range(train_flights)
    ]
    test_missions = [
        random_mission(flight_duration_s, seed=1000 * seed + 500 + k, box=EVAL_MISSION_BOX)
        for k in range(test_flights)
    ]
    train_raw = _fly_and_extract(cfg_degraded, train_missions, noise, seed0=2000 * seed)
    test_raw = _fly_and_extract(cfg_degraded, test_missions, noise, seed0=2000 * seed + 500)
    train, _ = attach_w2_w25(train_raw, cfg_clean, jobs=jobs)
    test, _ = attach_w2_w25(test_raw, cfg_clean, jobs=jobs)
    ratio = len(train) / max(len(train) + len(test), 1)
    return SplitDataset(train=train, test=test, split_ratio=ratio, seed=seed)


def split_dataset(ds: Dataset, ratio: float, seed: int) -> SplitDataset:
    """Seeded shuffle split; the ratio is honored to the nearest sample."""
    if not (0.0 < ratio < 1.0):
        raise SchemaError(f"split ratio {ratio} outside (0, 1)")
    idx = np.random.default_rng(seed).permutation(len(ds))
    k = int(round(ratio * len(ds)))
    return SplitDataset(train=ds.take(idx[:k]), test=ds.take(idx[k:]), split_ratio=ratio, seed=seed)


# ---------------------------------------------------------------------------
# Monte Carlo generation


def _draw_candidate(rng, env: Envelope):
    t2 = rng.uniform(*env.t2)
    p2 = rng.uniform(*env.p2)
    pamb = rng.uniform(env.pamb[0], min(env.pamb[1], p2))
    n2 = rng.uniform(*env.n2)
    return t2, p2, pamb, n2


def _mc_solve(cfg: EngineConfig, candidate):
    t2, p2, pamb, n2 = candidate
    try:
        pt = off_design(cfg, t2, p2, pamb, n2)
    except (EnvelopeError, ConvergenceError):
        return None
    x = [t2, p2, pt.inputs["ma2"], pamb, pt.unknowns["n1"], n2, pt.w2, pt.w25, pt.unknowns["wf"]]
    y = []
    for name in Y_SCHEMA:
        q = name.rstrip("0123456789")
        station = int(name[len(q):])
        st = pt.stations[station]
        y.append({"T": st.Tt, "P": st.Pt, "Ma": st.Ma}[q])
    return x, y


def gen_mc(
    cfg: EngineConfig,
    n: int = 15360,
    envelope: Envelope = Envelope(),
    split_ratio: float = 0.8,
    seed: int = 0,
    jobs: int = 1,
):
    """Monte Carlo dataset: uniform inputs over the envelope, targets from the
    matched cycle. Non-converged draws are rejected and redrawn.

    Returns (SplitDataset, report dict with the rejection count)."""
    if n <= 0:
        raise SchemaError("sample count must be positive")
    rng = np.random.default_rng(seed)
    xs, ys = [], []
    rejections = 0
    while len(xs) < n:
        need = n - len(xs)
        candidates = [_draw_candidate(rng, envelope) for _ in range(need)]
        results = _pmap(_mc_solve, cfg, candidates, jobs)
        for res in results:
            if res is None:
                rejections += 1
            else:
                xs.append(res[0])
                ys.append(res[1])
        attempts = len(xs) + rejections
        if attempts >= 64 and rejections > 0.5 * attempts:
            raise EnvelopeError(
                f"rejection rate {rejections}/{attempts} exceeds 50%; shrink the envelope"
            )
    ds = Dataset(np.array(xs), np.array(ys), X_SCHEMA_MC, Y_SCHEMA, tag="mc")
    return split_dataset(ds, split_ratio, seed), {"rejections": rejections, "n": n}


def _pmap(fn, cfg, items, jobs):
    if jobs <= 1 or len(items) < 4:
        return [fn(cfg, item) for item in items]
    import functools
    import multiprocessing as mp

    with mp.get_context("fork").Pool(jobs) as pool:
        return pool.map(functools.partial(fn, cfg), items, chunksize=max(1, len(items) // (jobs * 4)))


# ---------------------------------------------------------------------------
# synthetic flight data

DEFAULT_NOISE = {"T6": 0.003, "N1": 0.002, "N2": 0.002}


def gen_flight_series(
    cfg_degraded: EngineConfig,
    mission: MissionProfile,
    noise: dict = None,
    seed: int = 0,
) -> FlightSeries:
    """Quasi-steady mission simulation on a degraded engine with sensor noise.

    Inputs follow the mission waypoints at the fixed sample rate; each step is
    a matched-cycle solve warm-started from the previous one. Gaussian
    relative noise is applied to the recorded channels only; the truth record
    keeps the noiseless values.
    """
    noise = DEFAULT_NOISE if noise is None else noise
    rng = np.random.default_rng(seed)
    dt = 1.0 / mission.sample_rate_hz
    times = np.arange(0.0, mission.duration() + 0.5 * dt, dt)
    recorded = {name: [] for name in ("N1", "N2", "WF", "T2", "P2", "Pamb", "T6")}
    truth = {name: [] for name in ("T6", "W2", "W25")}
    kept_times = []
    failures = []
    x0 = None
    for k, t in enumerate(times):
        t2, p2, pamb, n2 = mission.at(t)
        try:
            pt = off_design(cfg_degraded, t2, p2, pamb, n2, x0=x0)
        except (EnvelopeError, ConvergenceError):
            failures.append(k)
            continue
        x0 = {name: pt.unknowns[name] for name in UNKNOWN_ORDER}
        clean = {
            "N1": pt.unknowns["n1"], "N2": n2, "WF": pt.unknowns["wf"],
            "T2": t2, "P2": p2, "Pamb": pamb, "T6": pt.stations[6].Tt,
        }
        for name in recorded:
            sigma = noise.get(name, 0.0)
            recorded[name].append(clean[name] * (1.0 + sigma * rng.standard_normal()) if sigma else clean[name])
        truth["T6"].append(pt.stations[6].Tt)
        truth["W2"].append(pt.w2)
        truth["W25"].append(pt.w25)
        kept_times.append(t)
    return FlightSeries(
        sample_rate_hz=mission.sample_rate_hz,
        time=np.array(kept_times),
        channels={name: np.array(vals) for name, vals in recorded.items()},
        truth={name: np.array(vals) for name, vals in truth.items()},
        failures=failures,
    )


def extract_quasi_steady(series: FlightSeries, window_s: float = 3.0, amplitude: float = 0.01) -> Dataset:
    """One averaged sample per maximal window whose N1 swing stays below the
    relative amplitude; fluctuation of every other channel is ignored."""
    wn = max(int(round(window_s * series.sample_rate_hz)), 1)
    n1 = series.channels["N1"]
    n = len(n1)
    xs, ys, metas = [], [], []
    i = 0
    while i + wn <= n:
        window = n1[i : i + wn]
        if (window.max() - window.min()) / window.mean() < amplitude:
            sl = slice(i, i + wn)
            xs.append([series.channels[name][sl].mean() for name in FD_BASE_SCHEMA])
            ys.append([series.channels["T6"][sl].mean()])
            metas.append(
                [
                    float(i),
                    series.truth["T6"][sl].mean(),
                    series.truth["W2"][sl].mean(),
                    series.truth["W25"][sl].mean(),
                ]
            )
            i += wn
        else:
            i += 1
    x = np.array(xs) if xs else np.empty((0, len(FD_BASE_SCHEMA)))
    y = np.array(ys) if ys else np.empty((0, 1))
    meta = np.array(metas) if metas else np.empty((0, len(FD_META_SCHEMA)))
    return Dataset(x, y, FD_BASE_SCHEMA, ("T6",), tag="fd", meta=meta, meta_schema=FD_META_SCHEMA)


def _attach_solve(cfg: EngineConfig, row):
    t2, p2, pamb, n1, n2, wf = row
    try:
        pt = off_design_general(cfg, t2, p2, pamb, {"n1": n1, "n2": n2})
    except (EnvelopeError, ConvergenceError):
        return None
    return pt.w2, pt.w25


def reference_t6(cfg: EngineConfig, samples: Dataset) -> np.ndarray:
    """Clean-model T6 prediction per sample, conditioned on both spool speeds.

    Non-converged samples carry NaN (callers decide how to treat them)."""
    cols = {name: samples.column(name) for name in ("T2", "P2", "Pamb", "N1", "N2")}
    out = np.full(len(samples), np.nan)
    x0 = None
    for k in range(len(samples)):
        try:
            pt = off_design_general(
                cfg, cols["T2"][k], cols["P2"][k], cols["Pamb"][k],
                {"n1": cols["N1"][k], "n2": cols["N2"][k]}, x0=x0,
            )
        except (EnvelopeError, ConvergenceError):
            x0 = None
            continue
        x0 = {name: pt.unknowns[name] for name in UNKNOWN_ORDER}
        out[k] = pt.stations[6].Tt
    return out


def attach_w2_w25(samples: Dataset, cfg: EngineConfig, jobs: int = 1):
    """Append the reference model's matched (W2, W25) to each sample.

    Uses both recorded spool speeds (the LP power balance is released).
    Failed solves are dropped; returns (dataset, report)."""
    if samples.x_schema != FD_BASE_SCHEMA:
        raise SchemaError(f"expected schema {FD_BASE_SCHEMA}, found {samples.x_schema}")
    if jobs <= 1:
        # sequential path: warm-start each solve from the previous sample
        results = []
        x0 = None
        for row in samples.x:
            t2, p2, pamb, n1, n2, _ = row
            try:
                pt = off_design_general(cfg, t2, p2, pamb, {"n1": n1, "n2": n2}, x0=x0)
                x0 = {name: pt.unknowns[name] for name in UNKNOWN_ORDER}
                results.append((pt.w2, pt.w25))
            except (EnvelopeError, ConvergenceError):
                x0 = None
                results.append(None)
    else:
        results = _pmap(_attach_solve, cfg, [tuple(row) for row in samples.x], jobs)
    keep, w2s, w25s = [], [], []
    for k, res in enumerate(results):
        if res is not None:
            keep.append(k)
            w2s.append(res[0])
            w25s.append(res[1])
    kept = samples.take(np.array(keep, dtype=int))
    x = np.column_stack([kept.x[:, :5], np.array(w2s), np.array(w25s), kept.x[:, 5]])
    ds = replace(kept, x=x, x_schema=X_SCHEMA_FD)
    return ds, {"dropped": len(samples) - len(keep), "n": len(keep)}


# ---------------------------------------------------------------------------
# file formats

_DS_HEADER = "dataset v1"
_MISSION_HEADER = "mission-profile v1"


def save_dataset(ds: Dataset, path: str) -> None:
    lines = [f"# {_DS_HEADER}", f"tag {ds.tag}", f"n {len(ds)}"]
    lines.append("x_schema " + " ".join(ds.x_schema))
    lines.append("y_schema " + " ".join(ds.y_schema))
    if ds.meta is not None and len(ds.meta_schema):
        lines.append("meta_schema " + " ".join(ds.meta_schema))
    for k in range(len(ds)):
        row = list(ds.x[k]) + list(ds.y[k])
        if ds.meta is not None and len(ds.meta_schema):
            row += list(ds.meta[k])
        lines.append(fmt_row(row))
    write_text(path, "\n".join(lines) + "\n")


def load_dataset(path: str) -> Dataset:
    with open(path) as f:
        lines = f.read().splitlines()
    if not lines or lines[0] != f"# {_DS_HEADER}":
        raise SchemaError(f"{path}: not a {_DS_HEADER} file")
    kv = {}
    rows = []
    for line in lines[1:]:
        if not line.strip():
            continue
        head, _, rest = line.partition(" ")
        if head in ("tag", "n", "x_schema", "y_schema", "meta_schema"):
            kv[head] = rest
        else:
            rows.append([float(tok) for tok in line.split()])
    for key in ("tag", "n", "x_schema", "y_schema"):
        if key not in kv:
            raise SchemaError(f"{path}: missing {key}")
    x_schema = tuple(kv["x_schema"].split())
    y_schema = tuple(kv["y_schema"].split())
    meta_schema = tuple(kv.get("meta_schema", "").split())
    n = int(kv["n"])
    if len(rows) != n:
        raise SchemaError(f"{path}: expected {n} rows, found {len(rows)}")
    width = len(x_schema) + len(y_schema) + len(meta_schema)
    arr = np.array(rows) if rows else np.empty((0, width))
    if arr.shape[1] != width:
        raise SchemaError(f"{path}: row width {arr.shape[1]} mismatches schema total {width}")
    nx, ny = len(x_schema), len(y_schema)
    meta = arr[:, nx + ny :] if meta_schema else None
    return Dataset(arr[:, :nx], arr[:, nx : nx + ny], x_schema, y_schema, kv["tag"], meta, meta_schema)


def save_split(sd: SplitDataset, dirpath: str) -> None:
    save_dataset(sd.train, os.path.join(dirpath, "train.ds"))
    save_dataset(sd.test, os.path.join(dirpath, "test.ds"))
    write_text(
        os.path.join(dirpath, "split.manifest"),
        f"# dataset-split v1\nratio = {sd.split_ratio!r}\nseed = {sd.seed}\n",
    )


def load_split(dirpath: str) -> SplitDataset:
    train = load_dataset(os.path.join(dirpath, "train.ds"))
    test = load_dataset(os.path.join(dirpath, "test.ds"))
    ratio, seed = 0.8, 0
    manifest = os.path.join(dirpath, "split.manifest")
    if os.path.exists(manifest):
        with open(manifest) as f:
            for line in f:
                if line.startswith("ratio"):
                    ratio = float(line.partition("=")[2])
                elif line.startswith("seed"):
                    seed = int(line.partition("=")[2])
    return SplitDataset(train=train, test=test, split_ratio=ratio, seed=seed)


def save_mission(mission: MissionProfile, path: str) -> None:
    lines = [f"# {_MISSION_HEADER}", f"sample_rate_hz {mission.sample_rate_hz!r}", "# t T2 P2 Pamb N2"]
    lines.extend(fmt_row(row) for row in mission.waypoints)
    write_text(path, "\n".join(lines) + "\n")


def load_mission(path: str) -> MissionProfile:
    with open(path) as f:
        lines = f.read().splitlines()
    if not lines or lines[0] != f"# {_MISSION_HEADER}":
        raise SchemaError(f"{path}: not a {_MISSION_HEADER} file")
    rate = 1.0
    rows = []
    for line in lines[1:]:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("sample_rate_hz"):
            rate = float(line.split()[1])
        else:
            rows.append([float(tok) for tok in line.split()])
    wp = np.array(rows)
    if wp.ndim != 2 or wp.shape[1] != 5:
        raise SchemaError(f"{path}: waypoints need 5 columns (t T2 P2 Pamb N2)")
    return MissionProfile(waypoints=wp, sample_rate_hz=rate)
