"""Parametric component characteristic maps for LPC, HPC, HPT, LPT.

Compressor maps are tabulated over (corrected speed fraction, beta) where
beta in [0, 1] walks each speed line from the surge end (beta = 0: lowest
flow, highest pressure ratio) to the choke end (beta = 1). Turbine maps are
tabulated over (corrected speed fraction, pressure ratio); corrected flow
rises with pressure ratio until the choking value and is constant after.

Lookups are bilinear, exact at nodes, and raise ExtrapolationError outside
the grid hull. Scale factors apply multiplicatively after interpolation.
Tables are treated as immutable after construction.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ExtrapolationError, InvalidDegradationError, SchemaError
from .textio import fmt, fmt_row, kv_floats, write_text


@dataclass(frozen=True)
class Scalars:
    """Multiplicative map scale factors."""

    flow: float = 1.0
    pr: float = 1.0
    eff: float = 1.0


@dataclass(frozen=True)
class Degradation:
    """Relative scale-factor deltas for one component, typically in [-0.05, 0]."""

    flow: float = 0.0
    eff: float = 0.0


@dataclass(frozen=True)
class CompressorMap:
    name: str
    speed_grid: np.ndarray  # corrected speed fractions, ascending
    beta_grid: np.ndarray  # [0, 1], ascending, 0 = surge end
    wc_table: np.ndarray  # corrected mass flow [kg/s], (n_speed, n_beta)
    pr_table: np.ndarray
    eff_table: np.ndarray
    scalars: Scalars = field(default_factory=Scalars)

    def __post_init__(self):
        _check_grid(self.speed_grid, "speed_grid")
        _check_grid(self.beta_grid, "beta_grid")
        for tbl, label in ((self.wc_table, "wc"), (self.pr_table, "pr"), (self.eff_table, "eff")):
            if tbl.shape != (len(self.speed_grid), len(self.beta_grid)):
                raise SchemaError(f"{self.name}: {label} table shape {tbl.shape} mismatches grids")
        if not (self.wc_table > 0.0).all():
            raise SchemaError(f"{self.name}: corrected flow must be positive")
        if not (self.pr_table >= 1.0).all():
            raise SchemaError(f"{self.name}: pressure ratio must be >= 1")
        eff = self.eff_table * self.scalars.eff
        if not ((eff > 0.0) & (eff <= 1.0)).all():
            raise SchemaError(f"{self.name}: scaled efficiency must lie in (0, 1]")
        # surge-to-choke ordering along each speed line
        if not (np.diff(self.wc_table, axis=1) >= -1e-12).all():
            raise SchemaError(f"{self.name}: wc must not decrease from surge to choke")
        if not (np.diff(self.pr_table, axis=1) <= 1e-12).all():
            raise SchemaError(f"{self.name}: pr must not increase from surge to choke")


@dataclass(frozen=True)
class TurbineMap:
    name: str
    speed_grid: np.ndarray
    pr_grid: np.ndarray  # expansion pressure ratio, ascending
    wc_table: np.ndarray  # (n_speed, n_pr)
    eff_table: np.ndarray
    scalars: Scalars = field(default_factory=Scalars)

    def __post_init__(self):
        _check_grid(self.speed_grid, "speed_grid")
        _check_grid(self.pr_grid, "pr_grid")
        for tbl, label in ((self.wc_table, "wc"), (self.eff_table, "eff")):
            if tbl.shape != (len(self.speed_grid), len(self.pr_grid)):
                raise SchemaError(f"{self.name}: {label} table shape {tbl.shape} mismatches grids")
        if not (self.wc_table > 0.0).all():
            raise SchemaError(f"{self.name}: corrected flow must be positive")
        eff = self.eff_table * self.scalars.eff
        if not ((eff > 0.0) & (eff <= 1.0)).all():
            raise SchemaError(f"{self.name}: scaled efficiency must lie in (0, 1]")
        if not (np.diff(self.wc_table, axis=1) >= -1e-12).all():
            raise SchemaError(f"{self.name}: wc must not decrease with pressure ratio")


def _check_grid(grid: np.ndarray, label: str) -> None:
    if grid.ndim != 1 or len(grid) < 2:
        raise SchemaError(f"{label} needs at least two ascending nodes")
    if not (np.diff(grid) > 0.0).all():
        raise SchemaError(f"{label} must be strictly ascending")


def _cell(grid: np.ndarray, x: float, label: str, name: str):
    if x < grid[0] or x > grid[-1]:
        raise ExtrapolationError(
            f"{name}: {label}={x:.6g} outside hull [{grid[0]:.6g}, {grid[-1]:.6g}]"
        )
    i = min(max(bisect.bisect_right(grid, x) - 1, 0), len(grid) - 2)
    t = (x - grid[i]) / (grid[i + 1] - grid[i])
    return i, t


def _bilinear(table: np.ndarray, i: int, j: int, u: float, v: float) -> float:
    return (
        table[i, j] * (1.0 - u) * (1.0 - v)
        + table[i + 1, j] * u * (1.0 - v)
        + table[i, j + 1] * (1.0 - u) * v
        + table[i + 1, j + 1] * u * v
    )


def interp_compressor(cmap: CompressorMap, n_corr: float, beta: float):
    """Bilinear (wc, pr, eff) at (n_corr, beta), scale factors applied."""
    i, u = _cell(cmap.speed_grid, n_corr, "n_corr", cmap.name)
    j, v = _cell(cmap.beta_grid, beta, "beta", cmap.name)
    s = cmap.scalars
    return (
        _bilinear(cmap.wc_table, i, j, u, v) * s.flow,
        _bilinear(cmap.pr_table, i, j, u, v) * s.pr,
        _bilinear(cmap.eff_table, i, j, u, v) * s.eff,
    )


def interp_turbine(tmap: TurbineMap, n_corr: float, pr: float):
    """Bilinear (wc, eff) at (n_corr, pr), scale factors applied."""
    i, u = _cell(tmap.speed_grid, n_corr, "n_corr", tmap.name)
    j, v = _cell(tmap.pr_grid, pr, "pr", tmap.name)
    s = tmap.scalars
    return (
        _bilinear(tmap.wc_table, i, j, u, v) * s.flow,
        _bilinear(tmap.eff_table, i, j, u, v) * s.eff,
    )


def apply_degradation(m, d: Degradation):
    """Return a copy of the map with degraded flow/efficiency scale factors."""
    new = Scalars(
        flow=m.scalars.flow * (1.0 + d.flow),
        pr=m.scalars.pr,
        eff=m.scalars.eff * (1.0 + d.eff),
    )
    if new.flow <= 0.0:
        raise InvalidDegradationError(f"{m.name}: flow scalar {new.flow} not positive")
    eff_max = float(m.eff_table.max()) * new.eff
    eff_min = float(m.eff_table.min()) * new.eff
    if not (0.0 < eff_min and eff_max <= 1.0):
        raise InvalidDegradationError(f"{m.name}: scaled efficiency out of (0, 1]")
    return replace(m, scalars=new)


# ---------------------------------------------------------------------------
# built-in analytic maps


def _speed_grid(lo: float, hi: float, n_below: int, n_above: int) -> np.ndarray:
    """Ascending grid containing 1.0 exactly (design-point identity)."""
    below = np.linspace(lo, 1.0, n_below)
    above = np.linspace(1.0, hi, n_above)[1:]
    return np.concatenate([below, above])


def build_compressor_map(
    name: str,
    wc_design: float,
    pr_design: float,
    eff_design: float,
    n_betas: int = 21,
    speed_lo: float = 0.4,
    speed_hi: float = 1.2,
) -> CompressorMap:
    """Elliptic speed lines passing exactly through the design values at
    (n_corr = 1, beta = 0.5)."""
    speed = _speed_grid(speed_lo, speed_hi, 13, 5)
    beta = np.linspace(0.0, 1.0, n_betas)
    s45 = math.sin(math.pi / 4.0)

    wc_line = wc_design * (0.32 + 0.68 * speed**2)  # mid-beta flow per speed
    pr_line = 1.0 + (pr_design - 1.0) * speed**2.1
    dw = 0.22 * wc_line  # flow half-range of the ellipse
    dp = 0.42 * (pr_line - 1.0)

    sin_b = np.sin(beta * math.pi / 2.0)
    cos_b = np.cos(beta * math.pi / 2.0)
    wc = wc_line[:, None] + dw[:, None] * (sin_b[None, :] - s45)
    pr = pr_line[:, None] + dp[:, None] * (cos_b[None, :] - s45)

    beta_peak = 0.5 - 0.0618 * (1.0 - speed)  # design peak at beta = 0.5, off-node midpoints elsewhere
    eff = eff_design * (
        1.0 - 0.4 * (speed[:, None] - 1.0) ** 2 - 0.5 * (beta[None, :] - beta_peak[:, None]) ** 2
    )
    return CompressorMap(name, speed, beta, wc, pr, eff)


def build_turbine_map(
    name: str,
    wc_design: float,
    pr_design: float,
    eff_design: float,
    n_prs: int = 21,
    speed_lo: float = 0.5,
    speed_hi: float = 1.3,
    pr_max_factor: float = 1.8,
) -> TurbineMap:
    """Choking-curve turbine map, exact at (n_corr = 1, pr = pr_design)."""
    speed = _speed_grid(speed_lo, speed_hi, 9, 4)
    pr_max = pr_max_factor * pr_design
    lo = np.linspace(1.02, pr_design, max(n_prs // 2, 6))
    hi = np.linspace(pr_design, pr_max, max(n_prs - len(lo) + 1, 5))[1:]
    pr = np.concatenate([lo, hi])

    pr_choke = 1.0 + 0.55 * (pr_design - 1.0) * (1.0 + 0.1 * (1.0 - speed))
    wc_cap = wc_design * (1.0 + 0.03 * (1.0 - speed))
    x = np.minimum((pr[None, :] - 1.0) / (pr_choke[:, None] - 1.0), 1.0)
    wc = wc_cap[:, None] * np.sin(x * math.pi / 2.0)

    pr_peak = 1.0 + (pr_design - 1.0) * speed
    eff = eff_design * (
        1.0
        - 0.4 * (speed[:, None] - 1.0) ** 2
        - 0.25 * ((pr[None, :] - pr_peak[:, None]) / (pr_max - 1.0)) ** 2
    )
    return TurbineMap(name, speed, pr, wc, eff)


def builtin_maps(design: dict) -> dict:
    """Construct the four component maps from a design target record.

    `design` maps component name -> (corrected design flow, design PR or
    expansion ratio, design efficiency).
    """
    wc, pr, eff = design["lpc"]
    lpc = build_compressor_map("LPC", wc, pr, eff)
    wc, pr, eff = design["hpc"]
    hpc = build_compressor_map("HPC", wc, pr, eff, speed_lo=0.55, speed_hi=1.2)
    wc, pr, eff = design["hpt"]
    hpt = build_turbine_map("HPT", wc, pr, eff)
    wc, pr, eff = design["lpt"]
    lpt = build_turbine_map("LPT", wc, pr, eff, speed_lo=0.4)
    return {"lpc": lpc, "hpc": hpc, "hpt": hpt, "lpt": lpt}


# ---------------------------------------------------------------------------
# columnar text import/export

_MAP_HEADER = "component-map v1"


def save_map(m, path: str) -> None:
    lines = [f"# {_MAP_HEADER}", f"component {m.name}"]
    if isinstance(m, CompressorMap):
        lines.append("kind compressor")
        row_grid, col_grid = m.speed_grid, m.beta_grid
        grids = [("speed_grid", m.speed_grid), ("beta_grid", m.beta_grid)]
        cols = "# speed beta wc pr eff"
        tables = (m.wc_table, m.pr_table, m.eff_table)
    else:
        lines.append("kind turbine")
        row_grid, col_grid = m.speed_grid, m.pr_grid
        grids = [("speed_grid", m.speed_grid), ("pr_grid", m.pr_grid)]
        cols = "# speed pr wc eff"
        tables = (m.wc_table, m.eff_table)
    for label, value in (("flow_scalar", m.scalars.flow), ("pr_scalar", m.scalars.pr), ("eff_scalar", m.scalars.eff)):
        lines.append(f"{label} {fmt(value)}")
    for label, grid in grids:
        lines.append(f"{label} {fmt_row(grid)}")
    lines.append(cols)
    for i, a in enumerate(row_grid):
        for j, b in enumerate(col_grid):
            lines.append(fmt_row([a, b] + [t[i, j] for t in tables]))
    write_text(path, "\n".join(lines) + "\n")


def load_map(path: str):
    with open(path) as f:
        raw = f.read().splitlines()
    if not raw or raw[0] != f"# {_MAP_HEADER}":
        raise SchemaError(f"{path}: not a {_MAP_HEADER} file")
    kv = {}
    rows = []
    for line in raw[1:]:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        head, _, rest = line.partition(" ")
        try:
            rows.append([float(head)] + [float(tok) for tok in rest.split()])
        except ValueError:
            kv[head] = rest
    for key in ("component", "kind", "speed_grid", "flow_scalar", "pr_scalar", "eff_scalar"):
        if key not in kv:
            raise SchemaError(f"{path}: missing {key}")
    name = kv["component"]
    speed = np.array(kv_floats(kv, "speed_grid"))
    scal = Scalars(float(kv["flow_scalar"]), float(kv["pr_scalar"]), float(kv["eff_scalar"]))
    kind = kv["kind"]
    col_key = "beta_grid" if kind == "compressor" else "pr_grid"
    col = np.array(kv_floats(kv, col_key))
    n_vals = 3 if kind == "compressor" else 2
    if len(rows) != len(speed) * len(col):
        raise SchemaError(f"{path}: expected {len(speed) * len(col)} rows, found {len(rows)}")
    tables = [np.empty((len(speed), len(col))) for _ in range(n_vals)]
    for k, row in enumerate(rows):
        if len(row) != 2 + n_vals:
            raise SchemaError(f"{path}: malformed node row {k}")
        i, j = divmod(k, len(col))
        if row[0] != speed[i] or row[1] != col[j]:
            raise SchemaError(f"{path}: node row {k} out of order")
        for t, value in zip(tables, row[2:]):
            t[i, j] = value
    if kind == "compressor":
        return CompressorMap(name, speed, col, tables[0], tables[1], tables[2], scal)
    if kind == "turbine":
        return TurbineMap(name, speed, col, tables[0], tables[1], scal)
    raise SchemaError(f"{path}: unknown map kind {kind!r}")
