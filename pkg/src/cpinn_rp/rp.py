"""NetU-RP: the solution network fed with delayed values at fixed sensor taps.

Each tap contributes ``u(x_s, t - tau)`` (and, for deeper taps,
``t - 2 tau`` ...).  A tap with a hard sensor reads its measured series; a tap
without one reads the trained CPINN solution network.  Values before t = 0
come from the initial condition.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .cpinn import LossData, TrainConfig, hierarchical_train
from .exceptions import ConfigError, DataError, StructuralError
from .metrics import EvalResult, evaluate
from .network import MlpParams, NetSpec, forward, init_xavier
from .pde import PdeProblem
from .sampling import Dataset, EvalGrid, sample_wave

log = logging.getLogger(__name__)

HARD = "hard_sensor"
FALLBACK = "cpinn_fallback"
SOURCES = (HARD, FALLBACK)


def equispaced_taps(L, m=4):
    """``m`` interior points splitting [0, L] into ``m + 1`` equal pieces."""
    return tuple(float(L * i / (m + 1)) for i in range(1, m + 1))


@dataclass(frozen=True)
class RpConfig:
    tap_points: tuple = ()
    delay: float = 0.05
    sensor_availability: tuple = ()
    depth: int = 1

    def __post_init__(self):
        object.__setattr__(self, "tap_points", tuple(float(x) for x in self.tap_points))
        avail = tuple(self.sensor_availability) or (FALLBACK,) * len(self.tap_points)
        object.__setattr__(self, "sensor_availability", avail)
        if len(avail) != len(self.tap_points):
            raise ConfigError("sensor_availability needs one flag per tap")
        for flag in avail:
            if flag not in SOURCES:
                raise ConfigError(f"unknown tap source {flag!r}; expected one of {SOURCES}")
        if not self.delay > 0:
            raise ConfigError("delay must be > 0")
        if self.depth < 1:
            raise ConfigError("depth must be >= 1")

    @property
    def n_inputs(self):
        return len(self.tap_points) * self.depth

    def check(self, problem: PdeProblem):
        for x in self.tap_points:
            if not 0.0 <= x <= problem.L:
                raise ConfigError(f"tap at x={x} outside [0, {problem.L}]")
        if self.delay * self.depth >= problem.T:
            raise ConfigError("delay must be shorter than the time horizon")

    def as_dict(self):
        return {
            "tap_points": list(self.tap_points),
            "delay": self.delay,
            "sensor_availability": list(self.sensor_availability),
            "depth": self.depth,
        }


@dataclass
class SensorSeries:
    """Uniformly sampled measurements ``u(x, t0 + j * dt)``."""

    x: float
    t0: float
    dt: float
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).ravel()
        if self.values.size < 2:
            raise DataError("a sensor series needs at least two samples")
        if not self.dt > 0:
            raise DataError("sample spacing must be > 0")

    @classmethod
    def from_samples(cls, x, times, values):
        times = np.asarray(times, dtype=np.float64).ravel()
        values = np.asarray(values, dtype=np.float64).ravel()
        if times.size != values.size:
            raise StructuralError("times and values differ in length")
        if times.size < 2:
            raise DataError("a sensor series needs at least two samples")
        steps = np.diff(times)
        if np.any(steps <= 0):
            raise DataError("sample times must be strictly increasing")
        dt = (times[-1] - times[0]) / (times.size - 1)
        if np.max(np.abs(steps - dt)) > 1e-9 * max(abs(dt), abs(times[-1])):
            raise DataError("sample times must be uniformly spaced")
        return cls(float(x), float(times[0]), float(dt), values)

    @property
    def times(self):
        return self.t0 + self.dt * np.arange(self.values.size)

    @property
    def t_end(self):
        return self.t0 + self.dt * (self.values.size - 1)

    def at(self, t):
        """Linear interpolation at times ``t``.

        Reads only the two samples bracketing each query (one sample when
        the query falls on the sampling grid).
        """
        t = np.asarray(t, dtype=np.float64)
        pos = (t - self.t0) / self.dt
        n = self.values.size
        if np.any(pos < -1e-9) or np.any(pos > n - 1 + 1e-9):
            raise DataError(f"sensor at x={self.x:g} has no samples covering the requested times")
        pos = np.clip(pos, 0.0, n - 1)
        lo = np.floor(pos).astype(int)
        # snap to the grid so an on-grid query never touches the next sample
        on_grid = np.isclose(pos, np.round(pos), rtol=0, atol=1e-9)
        lo = np.where(on_grid, np.round(pos).astype(int), lo)
        frac = np.where(on_grid, 0.0, pos - lo)
        hi = np.minimum(lo + 1, n - 1)
        return (1.0 - frac) * self.values[lo] + frac * np.where(frac > 0, self.values[hi], 0.0)


def tap_sources(rp_cfg: RpConfig, sensors: Optional[Dict[int, SensorSeries]]):
    """Which source feeds each tap, after checking the sensors line up.

    ``sensors`` maps tap index to its series.  A hard-sensor tap must have
    one; a fallback tap never reads one even if supplied.
    """
    sensors = sensors or {}
    out = []
    for i, (x, flag) in enumerate(zip(rp_cfg.tap_points, rp_cfg.sensor_availability)):
        if flag == HARD:
            series = sensors.get(i)
            if series is None:
                raise DataError(f"tap {i} (x={x:g}) is flagged hard_sensor but has no series")
            if not np.isclose(series.x, x, rtol=0, atol=1e-9):
                raise ConfigError(f"tap {i} sits at x={x:g} but its sensor is at x={series.x:g}")
        out.append(flag)
    log.debug("tap sources: %s", ", ".join(f"{x:g}:{s}" for x, s in zip(rp_cfg.tap_points, out)))
    return out


def build_rp_input(x, t, rp_cfg: RpConfig, sensors, cpinn_u: MlpParams, problem: PdeProblem):
    """Rows ``[x, t, v_1 ... v_m]`` for NetU-RP.

    ``v`` for tap ``i`` and lag ``k`` (1..depth) is the value at
    ``(tap_i, t - k * delay)``: the sensor series for a hard-sensor tap,
    otherwise ``cpinn_u``; queries before t = 0 read the initial condition.
    """
    x = np.atleast_1d(np.asarray(x, dtype=np.float64)).ravel()
    t = np.atleast_1d(np.asarray(t, dtype=np.float64)).ravel()
    x, t = np.broadcast_arrays(x, t)
    if np.any(t < -1e-12) or np.any(t > problem.T * (1 + 1e-12)):
        raise ConfigError(f"t outside [0, {problem.T}]")
    flags = tap_sources(rp_cfg, sensors)
    cols = [x, t]
    for i, (xs, flag) in enumerate(zip(rp_cfg.tap_points, flags)):
        for k in range(1, rp_cfg.depth + 1):
            lag = t - k * rp_cfg.delay
            early = lag < 0
            v = np.empty_like(lag)
            v[early] = problem.ic(np.full(early.sum(), xs))
            late = ~early
            if late.any():
                if flag == HARD:
                    v[late] = sensors[i].at(lag[late])
                else:
                    pts = np.column_stack([np.full(late.sum(), xs), lag[late]])
                    v[late] = forward(cpinn_u, pts)
            cols.append(v)
    return np.column_stack(cols)


def init_rp_network(cpinn_u: MlpParams, rp_cfg: RpConfig, seed=0) -> MlpParams:
    """NetU-RP initialized from the trained NetU.

    The (x, t) columns of the first layer and all later layers are copied;
    tap columns are Xavier-initialized.
    """
    widths = cpinn_u.layer_sizes[1:-1]
    if len(set(widths)) != 1:
        raise StructuralError("NetU-RP needs a constant-width NetU")
    spec = NetSpec("NetU-RP", len(widths), widths[0], 2 + rp_cfg.n_inputs, seed)
    fresh = init_xavier(spec)
    weights = [W.copy() for W in cpinn_u.weights]
    biases = [b.copy() for b in cpinn_u.biases]
    W0 = fresh.weights[0].copy()
    W0[:, :2] = cpinn_u.weights[0][:, : 2]
    weights[0] = W0
    return MlpParams(spec.layer_sizes, weights, biases)


def train_netu_rp(cpinn_u, cpinn_g, dataset: Dataset, problem: PdeProblem, rp_cfg: RpConfig,
                  cfg: TrainConfig = TrainConfig(), sensors=None, seed=0, freeze_g=False):
    """Train NetU-RP with the same hybrid loss and alternation as the CPINN.

    Delayed tap values are computed once, up front, from the frozen CPINN
    and the sensor series; the collocation set is reused.  Returns
    ``(net_u_rp, net_g, report)``.
    """
    rp_cfg.check(problem)
    if cpinn_u.layer_sizes[0] != 2:
        raise StructuralError("cpinn_u must take exactly (x, t)")
    lab = dataset.labeled
    col = dataset.collocation
    lab_taps = build_rp_input(lab[:, 0], lab[:, 1], rp_cfg, sensors, cpinn_u, problem)[:, 2:]
    col_taps = build_rp_input(col[:, 0], col[:, 1], rp_cfg, sensors, cpinn_u, problem)[:, 2:]
    data = LossData.build(dataset, problem, lab_taps, col_taps)
    net = init_rp_network(cpinn_u, rp_cfg, seed)
    return hierarchical_train(problem, dataset, cfg=cfg, net_u=net, net_g=cpinn_g, data=data, freeze_g=freeze_g)


def predict(net_u_rp: MlpParams, rp_cfg: RpConfig, sensors, cpinn_u: MlpParams, grid_or_points,
            problem: PdeProblem):
    """Soft-sensor output of NetU-RP at every grid point."""
    pts = grid_or_points.points if isinstance(grid_or_points, EvalGrid) else np.asarray(grid_or_points, dtype=np.float64)
    pts = pts.reshape(-1, 2)
    inputs = build_rp_input(pts[:, 0], pts[:, 1], rp_cfg, sensors, cpinn_u, problem)
    if inputs.shape[1] != net_u_rp.layer_sizes[0]:
        raise StructuralError(
            f"NetU-RP expects {net_u_rp.layer_sizes[0]} inputs, the tap layout gives {inputs.shape[1]}"
        )
    return forward(net_u_rp, inputs)


# --------------------------------------------------------------------------
# sensor CSV files

MANIFEST = "manifest.csv"


def write_series(path, series: SensorSeries):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "u"])
        for t, u in zip(series.times, series.values):
            w.writerow([repr(float(t)), repr(float(u))])


def read_series(path, x) -> SensorSeries:
    from .sampling import read_csv

    rows = read_csv(path, ("t", "u"))
    return SensorSeries.from_samples(x, rows[:, 0], rows[:, 1])


def save_sensors(directory, series_list: Sequence[SensorSeries]):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / MANIFEST, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["file", "x"])
        for i, s in enumerate(series_list, start=1):
            name = f"sensor{i}.csv"
            write_series(directory / name, s)
            w.writerow([name, repr(float(s.x))])


def load_sensors(directory) -> List[SensorSeries]:
    directory = Path(directory)
    manifest = directory / MANIFEST
    if not manifest.exists():
        raise DataError(f"missing sensor manifest {manifest}")
    with open(manifest, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [h.strip() for h in rows[0]] != ["file", "x"]:
        raise StructuralError(f"{manifest}: expected header file,x")
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 2:
            raise StructuralError(f"{manifest}:{lineno}: expected 2 fields")
        try:
            x = float(row[1])
        except ValueError:
            raise DataError(f"{manifest}:{lineno}: non-numeric x") from None
        out.append(read_series(directory / row[0].strip(), x))
    if not out:
        raise DataError(f"{manifest}: no sensors listed")
    return out


# --------------------------------------------------------------------------
# masked-sensor experiment


def synthetic_series(problem: PdeProblem, locs, n_samples=4096, noise_std=0.0, seed=0) -> List[SensorSeries]:
    """Sample the exact solution at each location, uniformly over [0, T]."""
    if problem.exact_u is None:
        raise ConfigError("synthetic sensors need an exact solution")
    rng = np.random.default_rng(seed)
    times = np.linspace(0.0, problem.T, n_samples)
    out = []
    for x in locs:
        u = problem.exact_u(np.full(n_samples, x), times)
        if noise_std > 0:
            u = u + rng.normal(0.0, noise_std, n_samples)
        out.append(SensorSeries(float(x), 0.0, float(times[1] - times[0]), u))
    return out


@dataclass
class SensorScore:
    index: int
    x: float
    masked: bool
    train: Optional[EvalResult]
    full: EvalResult


@dataclass
class SoftSensorResult:
    scores: List[SensorScore]
    net_u: MlpParams
    net_g: MlpParams
    net_u_rp: MlpParams
    rp_cfg: RpConfig
    dataset: Dataset
    reports: dict = field(default_factory=dict)

    def rows(self):
        header = ["sensor", "x", "masked", "scope", "n", "rmse", "cc"]
        out = [header]
        for s in self.scores:
            for res in (s.train, s.full):
                if res is not None:
                    out.append([str(s.index), repr(s.x), str(int(s.masked)), res.scope, str(res.n), repr(res.rmse), repr(res.cc)])
        return out

    def write(self, path):
        with open(path, "w", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerows(self.rows())

    def masked_score(self):
        return next(s for s in self.scores if s.masked)


def _training_indices(n_samples, fraction):
    k = max(2, int(round(n_samples * fraction)))
    return np.unique(np.linspace(0, n_samples - 1, k).round().astype(int))


def masked_sensor_experiment(problem: PdeProblem, sensor_locs=None, masked_idx: Optional[int] = 3,
                             cfg: TrainConfig = TrainConfig(), rp_train: Optional[TrainConfig] = None,
                             series: Optional[List[SensorSeries]] = None, train_fraction=0.01,
                             delay=None, seed=0, specs=None, n_boundary=None,
                             n_collocation=100) -> SoftSensorResult:
    """Soft-sense one sensor from the others.

    Labels come from the known boundary/initial conditions plus about
    ``train_fraction`` of each unmasked sensor's samples; ``n_collocation``
    random interior points carry the physics loss elsewhere.  The CPINN is
    trained first; NetU-RP then takes hard taps at the unmasked sensors and
    a CPINN tap at the masked one.  Every sensor is scored over its full
    series (the masked one against its withheld measurements).
    ``masked_idx`` is 0-based; ``None`` masks nothing.
    """
    if series is None:
        locs = equispaced_taps(problem.L) if sensor_locs is None else tuple(sensor_locs)
        series = synthetic_series(problem, locs, seed=seed)
    locs = tuple(s.x for s in series)
    if len(series) < 2:
        raise ConfigError("the soft-sensor experiment needs at least two sensors")
    if masked_idx is not None and not 0 <= masked_idx < len(series):
        raise ConfigError(f"masked sensor index {masked_idx} out of range for {len(series)} sensors")
    for s in series:
        if s.t0 > 1e-12 or s.t_end < problem.T * (1 - 1e-9):
            raise DataError(f"sensor at x={s.x:g} does not cover [0, {problem.T}]")

    # labeled set: known boundary/initial rows + a thin slice of each unmasked sensor
    base = _boundary_base(problem, seed, n_boundary)
    labels, train_idx = [], {}
    for i, s in enumerate(series):
        if i == masked_idx:
            continue
        idx = _training_indices(s.values.size, train_fraction)
        train_idx[i] = idx
        labels.append(np.column_stack([np.full(idx.size, s.x), s.times[idx], s.values[idx]]))
    rng = np.random.default_rng([seed, 1])
    extra = np.column_stack([rng.uniform(0, problem.L, n_collocation), rng.uniform(0, problem.T, n_collocation)])
    dataset = Dataset(base.d_b, np.vstack(labels), extra)

    specs = specs or {"NetU": NetSpec.default("NetU", seed=2 * seed), "NetG": NetSpec.default("NetG", seed=2 * seed + 1)}
    net_u, net_g, rep = hierarchical_train(problem, dataset, specs, cfg)

    flags = tuple(FALLBACK if i == masked_idx else HARD for i in range(len(series)))
    rp_cfg = RpConfig(locs, delay if delay is not None else problem.T / 200, flags)
    sensors = {i: s for i, s in enumerate(series) if i != masked_idx}
    net_rp, net_g_rp, rep_rp = train_netu_rp(net_u, net_g, dataset, problem, rp_cfg, rp_train or cfg, sensors, seed)

    scores = []
    for i, s in enumerate(series):
        pts = np.column_stack([np.full(s.values.size, s.x), s.times])
        pred = predict(net_rp, rp_cfg, sensors, net_u, pts, problem)
        full = evaluate(pred, s.values, f"sensor {i + 1} all samples")
        train = None
        if i in train_idx:
            idx = train_idx[i]
            train = evaluate(pred[idx], s.values[idx], f"sensor {i + 1} training samples")
        scores.append(SensorScore(i + 1, s.x, i == masked_idx, train, full))
        log.info("sensor %d (x=%.4g%s): rmse=%.3e cc=%.6f", i + 1, s.x, ", masked" if i == masked_idx else "",
                 full.rmse, full.cc)
    return SoftSensorResult(scores, net_u, net_g, net_rp, rp_cfg, dataset, {"cpinn": rep, "rp": rep_rp})


def _boundary_base(problem, seed, n_boundary):
    from .sampling import sample_heat

    kw = {} if n_boundary is None else {"n_boundary": n_boundary}
    if problem.kind == "Wave1D":
        return sample_wave(problem, seed=seed, n_interior=0, **kw)
    return sample_heat(problem, seed=seed, n_collocation=0, **kw)
