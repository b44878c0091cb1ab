"""Training sets, collocation sets and evaluation grids for the benchmarks."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import ConfigError, DataError, StructuralError
from .pde import PdeProblem

HEAT_BOUNDARY = 130
HEAT_COLLOCATION = 20
WAVE_BOUNDARY = 170
WAVE_INTERIOR = 40


def _empty(cols):
    return np.zeros((0, cols))


@dataclass
class Dataset:
    """Labeled boundary/initial rows ``d_b``, labeled interior rows ``d_i``
    (both ``(n, 3)`` arrays of ``x, t, u``) and unlabeled extra collocation
    points ``(m, 2)``.

    Collocation sets ``e_b``/``e_i`` sit on the labeled points.  Rows on a
    Neumann edge are additionally held to the edge's slope condition (see
    :meth:`neumann_mask`); their ``u`` may be NaN when no value was observed
    there.
    """

    d_b: np.ndarray = field(default_factory=lambda: _empty(3))
    d_i: np.ndarray = field(default_factory=lambda: _empty(3))
    extra_collocation: np.ndarray = field(default_factory=lambda: _empty(2))

    def __post_init__(self):
        self.d_b = np.asarray(self.d_b, dtype=np.float64).reshape(-1, 3)
        self.d_i = np.asarray(self.d_i, dtype=np.float64).reshape(-1, 3)
        self.extra_collocation = np.asarray(self.extra_collocation, dtype=np.float64).reshape(-1, 2)

    @property
    def e_b(self):
        return self.d_b[:, :2]

    @property
    def e_i(self):
        return self.d_i[:, :2]

    @property
    def labeled(self):
        return np.vstack([self.d_b, self.d_i])

    @property
    def collocation(self):
        return np.vstack([self.e_b, self.e_i, self.extra_collocation])

    def neumann_mask(self, problem: PdeProblem):
        """Boolean mask over :attr:`labeled` marking slope-target rows."""
        lab = self.labeled
        mask = np.zeros(len(lab), dtype=bool)
        if problem.bc_right.kind == "neumann":
            mask |= np.isclose(lab[:, 0], problem.L, rtol=0, atol=1e-12)
        if problem.bc_left.kind == "neumann":
            mask |= np.isclose(lab[:, 0], 0.0, rtol=0, atol=1e-12)
        return mask

    def velocity_mask(self, problem: PdeProblem):
        """Rows on t = 0 that also carry a zero initial-velocity target."""
        lab = self.labeled
        if problem.ic_velocity is None:
            return np.zeros(len(lab), dtype=bool)
        return np.isclose(lab[:, 1], 0.0, rtol=0, atol=1e-12)

    def with_extra_labels(self, rows) -> "Dataset":
        return Dataset(self.d_b, np.vstack([self.d_i, np.asarray(rows, dtype=np.float64).reshape(-1, 3)]), self.extra_collocation)

    def equals(self, other) -> bool:
        return (
            np.array_equal(self.d_b, other.d_b)
            and np.array_equal(self.d_i, other.d_i)
            and np.array_equal(self.extra_collocation, other.extra_collocation)
        )


@dataclass
class EvalGrid:
    nx: int
    nt: int
    points: np.ndarray  # (nx * nt, 2), x varies slowest

    @property
    def x(self):
        return self.points[:, 0]

    @property
    def t(self):
        return self.points[:, 1]

    @property
    def dt(self):
        return self.points[1, 1] - self.points[0, 1]


def make_grid(problem: PdeProblem, nx: int, nt: int) -> EvalGrid:
    if nx < 2 or nt < 2:
        raise ConfigError("grid needs nx >= 2 and nt >= 2")
    xs = np.linspace(0.0, problem.L, nx)
    ts = np.linspace(0.0, problem.T, nt)
    X, T = np.meshgrid(xs, ts, indexing="ij")
    return EvalGrid(nx, nt, np.column_stack([X.ravel(), T.ravel()]))


def split_counts(total, measures):
    """Largest-remainder allocation of ``total`` points proportional to ``measures``."""
    measures = np.asarray(measures, dtype=np.float64)
    raw = total * measures / measures.sum()
    counts = np.floor(raw).astype(int)
    order = np.argsort(-(raw - counts), kind="stable")
    for k in order[: total - counts.sum()]:
        counts[k] += 1
    return counts


def _boundary_points(problem, n_total, rng):
    """Random points on t=0, x=0 and x=L, proportional to edge length."""
    L, T = problem.L, problem.T
    n0, n_left, n_right = split_counts(n_total, [L, T, T])
    x_ic = rng.uniform(0.0, L, n0)
    t_left = rng.uniform(0.0, T, n_left)
    t_right = rng.uniform(0.0, T, n_right)
    return (
        np.column_stack([x_ic, np.zeros(n0)]),
        np.column_stack([np.zeros(n_left), t_left]),
        np.column_stack([np.full(n_right, L), t_right]),
    )


def _label_boundary(problem, ic_pts, left_pts, right_pts, neumann_values=True):
    rows = [np.column_stack([ic_pts, problem.ic(ic_pts[:, 0])])]
    for pts, bc in ((left_pts, problem.bc_left), (right_pts, problem.bc_right)):
        if bc.kind == "dirichlet":
            u = np.full(len(pts), bc.value)
        elif neumann_values and problem.exact_u is not None:
            u = problem.exact_u(pts[:, 0], pts[:, 1])
        else:
            u = np.full(len(pts), np.nan)
        rows.append(np.column_stack([pts, u]))
    return np.vstack(rows)


def _add_noise(rows, noise_std, rng):
    if noise_std > 0:
        rows = rows.copy()
        rows[:, 2] += rng.normal(0.0, noise_std, len(rows))
    return rows


def sample_heat(problem: PdeProblem, seed=0, n_boundary=HEAT_BOUNDARY, n_collocation=HEAT_COLLOCATION,
                noise_std=0.0, neumann_values=True) -> Dataset:
    """130 labeled boundary/initial rows and 20 interior collocation points.

    Rows on the insulated edge x = L carry the measured temperature when
    ``neumann_values`` is set (and an exact solution exists); they always
    carry the zero-slope condition.
    """
    if problem.kind != "Heat1D":
        raise ConfigError("sample_heat needs a Heat1D problem")
    rng = np.random.default_rng(seed)
    d_b = _label_boundary(problem, *_boundary_points(problem, n_boundary, rng), neumann_values)
    extra = np.column_stack([rng.uniform(0.0, problem.L, n_collocation), rng.uniform(0.0, problem.T, n_collocation)])
    return Dataset(d_b=_add_noise(d_b, noise_std, rng), extra_collocation=extra)


def sample_wave(problem: PdeProblem, seed=0, n_boundary=WAVE_BOUNDARY, n_interior=WAVE_INTERIOR, noise_std=0.0) -> Dataset:
    if problem.kind != "Wave1D":
        raise ConfigError("sample_wave needs a Wave1D problem")
    if problem.exact_u is None:
        raise ConfigError("interior labels need an exact solution")
    rng = np.random.default_rng(seed)
    d_b = _label_boundary(problem, *_boundary_points(problem, n_boundary, rng))
    xi = rng.uniform(0.0, problem.L, n_interior)
    ti = rng.uniform(0.0, problem.T, n_interior)
    d_i = np.column_stack([xi, ti, problem.exact_u(xi, ti)])
    return Dataset(d_b=_add_noise(d_b, noise_std, rng), d_i=_add_noise(d_i, noise_std, rng))


def sample(problem: PdeProblem, seed=0, **counts) -> Dataset:
    """Dispatch to :func:`sample_heat` or :func:`sample_wave`."""
    if problem.kind == "Heat1D":
        return sample_heat(problem, seed, **counts)
    return sample_wave(problem, seed, **counts)


# CSV ---------------------------------------------------------------------

def write_csv(path, rows, header):
    rows = np.asarray(rows, dtype=np.float64).reshape(-1, len(header))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) for v in row])


def read_csv(path, header):
    path = Path(path)
    if not path.exists():
        raise DataError(f"missing data file {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            got = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if [h.strip() for h in got] != list(header):
            raise StructuralError(f"{path}: expected header {','.join(header)}, got {','.join(got)}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise StructuralError(f"{path}:{lineno}: expected {len(header)} fields")
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric field") from None
    return np.asarray(rows, dtype=np.float64).reshape(-1, len(header))


DATASET_FILES = {"d_b": "d_b.csv", "d_i": "d_i.csv", "extra_collocation": "collocation.csv"}


def save_dataset(dataset: Dataset, directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_csv(directory / DATASET_FILES["d_b"], dataset.d_b, ("x", "t", "u"))
    write_csv(directory / DATASET_FILES["d_i"], dataset.d_i, ("x", "t", "u"))
    write_csv(directory / DATASET_FILES["extra_collocation"], dataset.extra_collocation, ("x", "t"))


def load_dataset(directory) -> Dataset:
    directory = Path(directory)
    return Dataset(
        d_b=read_csv(directory / DATASET_FILES["d_b"], ("x", "t", "u")),
        d_i=read_csv(directory / DATASET_FILES["d_i"], ("x", "t", "u")),
        extra_collocation=read_csv(directory / DATASET_FILES["extra_collocation"], ("x", "t")),
    )
