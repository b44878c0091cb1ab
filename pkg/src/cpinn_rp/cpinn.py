"""Coupled solution/source networks trained by alternating L-BFGS phases.

NetU approximates the solution ``u``; NetG stands in for the unmeasured
source ``g`` inside the physics residual.  Each outer iteration first fits
NetG to the residual left by the current NetU, then refits NetU to data plus
physics with NetG frozen.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np

from .autodiff import Jet2, loss_grad, propagate, traced_jet, value_of
from .exceptions import ConfigError, NumericError, UnsupportedDiagnosticError
from .lbfgs import lbfgs_minimize
from .network import MlpParams, NetSpec, init_xavier
from .pde import PdeProblem, residual
from .sampling import Dataset, EvalGrid

log = logging.getLogger(__name__)

CONVERGED = "converged"
MAX_ITERS = "max_iters"
DIVERGED = "diverged"


@dataclass(frozen=True)
class TrainConfig:
    max_outer_iters: int = 50
    inner_iters_u: int = 500
    inner_iters_g: int = 500
    lbfgs_memory: int = 20
    tol_loss: float = 1e-6
    tol_stall: float = 1e-8
    physics_weight: float = 1.0
    seed: int = 0

    def __post_init__(self):
        for name in ("max_outer_iters", "inner_iters_u", "inner_iters_g"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.lbfgs_memory < 1:
            raise ConfigError("lbfgs_memory must be >= 1")
        if not (self.tol_loss > 0 and self.tol_stall > 0):
            raise ConfigError("tolerances must be > 0")
        if self.physics_weight < 0:
            raise ConfigError("physics_weight must be >= 0")


@dataclass
class HybridLossParts:
    mse_dn: float
    mse_pn: float

    @property
    def total(self):
        return self.mse_dn + self.mse_pn


@dataclass
class IterationRecord:
    k: int
    mse_dn: float
    mse_pn: float
    total: float
    mse_pn_after_g: float
    wall_ms: float


@dataclass
class TrainReport:
    records: List[IterationRecord] = field(default_factory=list)
    u_checkpoints: List[MlpParams] = field(default_factory=list)
    g_checkpoints: List[MlpParams] = field(default_factory=list)
    status: str = MAX_ITERS
    message: str = ""

    def totals(self):
        return [r.total for r in self.records]

    def to_lines(self) -> str:
        """One JSON record per outer iteration (k, mse_dn, mse_pn, total, wall_ms)."""
        out = []
        for r in self.records:
            out.append(json.dumps({"k": r.k, "mse_dn": r.mse_dn, "mse_pn": r.mse_pn, "total": r.total, "wall_ms": r.wall_ms}))
        return "".join(line + "\n" for line in out)

    def write(self, path, include_wall=True):
        with open(path, "w") as fh:
            for r in self.records:
                rec = {"k": r.k, "mse_dn": r.mse_dn, "mse_pn": r.mse_pn, "total": r.total}
                rec["wall_ms"] = r.wall_ms if include_wall else 0.0
                fh.write(json.dumps(rec) + "\n")

    @staticmethod
    def read(path) -> List[dict]:
        with open(path) as fh:
            return [json.loads(line) for line in fh if line.strip()]


# --------------------------------------------------------------------------
# field evaluation: real networks or analytic stand-ins


class ExactField:
    """Analytic stand-in with the network evaluation interface.

    ``jet_fn(x, t) -> Jet2`` and ``value_fn(x, t)``; used as exact surrogate
    for NetU/NetG in tests and diagnostics.
    """

    def __init__(self, value_fn, jet_fn=None):
        self.value_fn = value_fn
        self.jet_fn = jet_fn

    def jet_batch(self, inputs):
        return self.jet_fn(inputs[:, 0], inputs[:, 1])

    def value_batch(self, inputs):
        return np.asarray(self.value_fn(inputs[:, 0], inputs[:, 1]), dtype=np.float64)


def field_jet(net, inputs, slots=("v", "dx", "dt", "dxx", "dtt", "dxt")) -> Jet2:
    if hasattr(net, "jet_batch"):
        return net.jet_batch(inputs)
    return traced_jet(net, inputs, slots)


def field_value(net, inputs):
    if hasattr(net, "value_batch"):
        return net.value_batch(inputs)
    return propagate(net.weights, net.biases, inputs, ("v",))["v"]


def _operator_slots(problem):
    return ("dt", "dxx") if problem.kind == "Heat1D" else ("dtt", "dxx")


# --------------------------------------------------------------------------
# losses


@dataclass
class LossData:
    """Arrays the hybrid loss reads, prepared once per training phase.

    ``lab_inputs``/``col_inputs`` are the NetU inputs (x, t and any delay
    taps); NetG sees ``col_xt`` (t pinned to 0 for a stationary source).
    ``lab_target`` holds NaN where a row has no value label; ``neumann`` rows
    are held to ``u_x = slope_target`` and ``velocity`` rows to ``u_t = 0``.
    """

    lab_inputs: np.ndarray
    lab_target: np.ndarray
    neumann: np.ndarray
    velocity: np.ndarray
    col_inputs: np.ndarray
    col_xt: np.ndarray
    slope_target: float = 0.0

    @classmethod
    def build(cls, dataset: Dataset, problem: PdeProblem, lab_taps=None, col_taps=None):
        lab = dataset.labeled
        col = dataset.collocation
        lab_inputs = lab[:, :2] if lab_taps is None else np.column_stack([lab[:, :2], lab_taps])
        col_inputs = col if col_taps is None else np.column_stack([col, col_taps])
        slope = problem.bc_right.value if problem.bc_right.kind == "neumann" else problem.bc_left.value
        return cls(
            lab_inputs=lab_inputs,
            lab_target=lab[:, 2],
            neumann=dataset.neumann_mask(problem),
            velocity=dataset.velocity_mask(problem),
            col_inputs=col_inputs,
            col_xt=problem.source_inputs(col),
            slope_target=slope,
        )


def _data_loss(net_u, data: LossData):
    n = len(data.lab_target)
    if n == 0:
        raise ConfigError("MSE_DN needs at least one labeled point")
    has_value = np.isfinite(data.lab_target)
    slots = ["v"]
    if data.neumann.any():
        slots.append("dx")
    if data.velocity.any():
        slots.append("dt")
    jet = field_jet(net_u, data.lab_inputs, tuple(slots))
    value_err = jet.v - np.where(has_value, data.lab_target, 0.0)
    per_row = value_err * value_err * has_value.astype(np.float64)
    if data.neumann.any():
        slope_err = jet.dx - data.slope_target
        per_row = per_row + slope_err * slope_err * data.neumann.astype(np.float64)
    if data.velocity.any():
        per_row = per_row + jet.dt * jet.dt * data.velocity.astype(np.float64)
    return per_row.mean()


def _operator(net_u, data: LossData, problem: PdeProblem):
    """``u_t + N[u]`` at the collocation points (zero source)."""
    jet = field_jet(net_u, data.col_inputs, _operator_slots(problem))
    return residual(problem, jet, 0.0)


def _physics_loss(lhs, g_vals):
    r = lhs - g_vals
    return (r * r).mean()


def mse_dn(net_u, dataset: Dataset, problem: Optional[PdeProblem] = None) -> float:
    """Mean squared label error over ``D_B ∪ D_I``.

    Rows on a Neumann edge are compared through ``u_x``; on the wave problem
    the t = 0 rows also penalize the initial velocity.
    """
    if problem is None:
        lab = dataset.labeled
        none = np.zeros(len(lab), bool)
        data = LossData(lab[:, :2], lab[:, 2], none, none, dataset.collocation, dataset.collocation)
    else:
        data = LossData.build(dataset, problem)
    return float(value_of(_data_loss(net_u, data)))


def mse_pn(net_u, net_g, dataset: Dataset, problem: PdeProblem) -> float:
    data = LossData.build(dataset, problem)
    if len(data.col_xt) == 0:
        raise ConfigError("MSE_PN needs at least one collocation point")
    lhs = value_of(_operator(net_u, data, problem))
    g_vals = field_value(net_g, data.col_xt)
    return float(_physics_loss(np.asarray(lhs), g_vals))


def loss_parts(net_u, net_g, data: LossData, problem: PdeProblem) -> HybridLossParts:
    dn = float(value_of(_data_loss(net_u, data)))
    if len(data.col_xt):
        lhs = np.asarray(value_of(_operator(net_u, data, problem)))
        pn = float(_physics_loss(lhs, field_value(net_g, data.col_xt)))
    else:
        pn = 0.0
    return HybridLossParts(dn, pn)


def hybrid_loss(net_u, net_g, dataset: Dataset, problem: PdeProblem) -> HybridLossParts:
    return loss_parts(net_u, net_g, LossData.build(dataset, problem), problem)


# --------------------------------------------------------------------------
# phases


def _flat_objective(template: MlpParams, loss):
    sizes = template.layer_sizes

    def objective(theta):
        return loss_grad(loss, MlpParams.unflatten(sizes, theta))

    return objective


def _g_phase(net_g, lhs, data, cfg):
    if cfg.inner_iters_g == 0 or len(data.col_xt) == 0:
        return net_g, None
    xt = data.col_xt

    def loss(p):
        g = propagate(p.weights, p.biases, xt, ("v",))["v"]
        return _physics_loss(lhs, g)

    res = lbfgs_minimize(_flat_objective(net_g, loss), net_g.flatten(), cfg.inner_iters_g, cfg.lbfgs_memory)
    return net_g.with_flat(res.x), res


def _u_phase(net_u, g_vals, data, problem, cfg):
    if cfg.inner_iters_u == 0:
        return net_u, None
    w = cfg.physics_weight
    has_col = len(data.col_xt) > 0

    def loss(p):
        total = _data_loss(p, data)
        if has_col and w > 0:
            total = total + w * _physics_loss(_operator(p, data, problem), g_vals)
        return total

    res = lbfgs_minimize(_flat_objective(net_u, loss), net_u.flatten(), cfg.inner_iters_u, cfg.lbfgs_memory)
    return net_u.with_flat(res.x), res


def train_netg_phase(net_g, net_u_frozen, dataset, problem, cfg: TrainConfig, data: LossData = None):
    """Fit NetG to the residual ``u_t + N[u]`` of the frozen NetU (MSE_PN only)."""
    data = data or LossData.build(dataset, problem)
    if len(data.col_xt) == 0:
        raise ConfigError("the NetG phase needs collocation points")
    lhs = np.asarray(value_of(_operator(net_u_frozen, data, problem)))
    return _g_phase(net_g, lhs, data, cfg)[0]


def train_netu_phase(net_u, net_g_frozen, dataset, problem, cfg: TrainConfig, data: LossData = None):
    """Fit NetU to MSE_DN + MSE_PN with NetG frozen."""
    data = data or LossData.build(dataset, problem)
    g_vals = field_value(net_g_frozen, data.col_xt) if len(data.col_xt) else np.zeros(0)
    return _u_phase(net_u, g_vals, data, problem, cfg)[0]


def _init_networks(specs):
    spec_u = specs.get("NetU") or NetSpec.default("NetU")
    spec_g = specs.get("NetG") or NetSpec.default("NetG", seed=spec_u.seed + 1)
    return init_xavier(spec_u), init_xavier(spec_g)


def hierarchical_train(problem: PdeProblem, dataset: Dataset, specs=None, cfg: TrainConfig = TrainConfig(),
                       net_u=None, net_g=None, data: LossData = None, freeze_g=False):
    """Alternate NetG and NetU phases until the stop criterion fires.

    The loop stops after ``cfg.max_outer_iters`` outer iterations, once the
    total loss reaches ``cfg.tol_loss``, or when an outer iteration improves
    the total by less than ``cfg.tol_stall`` relative.  With ``freeze_g`` the
    NetG phase is skipped (homogeneous PINN when NetG is zero).

    Returns ``(net_u, net_g, report)``.
    """
    specs = specs or {}
    if net_u is None or net_g is None:
        init_u, init_g = _init_networks(specs)
        net_u = init_u if net_u is None else net_u
        net_g = init_g if net_g is None else net_g
    data = data or LossData.build(dataset, problem)
    report = TrainReport()
    if cfg.max_outer_iters == 0:
        return net_u, net_g, report
    prev = loss_parts(net_u, net_g, data, problem).total
    report.status = MAX_ITERS
    for k in range(1, cfg.max_outer_iters + 1):
        start = time.perf_counter()
        try:
            if freeze_g:
                new_g = net_g
            else:
                lhs = np.asarray(value_of(_operator(net_u, data, problem)))
                new_g, _ = _g_phase(net_g, lhs, data, cfg)
            after_g = loss_parts(net_u, new_g, data, problem)
            g_vals = field_value(new_g, data.col_xt) if len(data.col_xt) else np.zeros(0)
            new_u, _ = _u_phase(net_u, g_vals, data, problem, cfg)
            parts = loss_parts(new_u, new_g, data, problem)
            if not np.isfinite(parts.total):
                raise NumericError("non-finite total loss", "outer")
        except NumericError as exc:
            report.status = DIVERGED
            report.message = str(exc)
            log.warning("training diverged at outer iteration %d: %s", k, exc)
            break
        net_u, net_g = new_u, new_g
        wall_ms = (time.perf_counter() - start) * 1e3
        report.records.append(IterationRecord(k, parts.mse_dn, parts.mse_pn, parts.total, after_g.mse_pn, wall_ms))
        report.u_checkpoints.append(net_u)
        report.g_checkpoints.append(net_g)
        log.info("outer %d: mse_dn=%.3e mse_pn=%.3e total=%.3e", k, parts.mse_dn, parts.mse_pn, parts.total)
        if parts.total <= cfg.tol_loss:
            report.status = CONVERGED
            break
        if (prev - parts.total) <= cfg.tol_stall * max(abs(prev), 1e-300):
            report.status = CONVERGED
            break
        prev = parts.total
    return net_u, net_g, report


# --------------------------------------------------------------------------
# diagnostics


@dataclass
class Diagnostics:
    l_dn: float
    l_pn: float
    l_u: float
    solution_error: float
    source_error: float
    residual_norm: float
    lipschitz_ratio: float
    source_rms: float

    def as_dict(self):
        return asdict(self)


def diagnostics(net_u, net_g, problem: PdeProblem, grid: EvalGrid) -> Diagnostics:
    """Monte-Carlo estimates of the continuous losses on an evaluation grid.

    ``l_dn`` and ``l_pn`` approximate the space-time integrals of the squared
    solution error and squared residual (true source), ``l_u`` is their sum
    divided by the domain measure ``T * L``.  Norms are L2 estimates on the
    same grid; ``lipschitz_ratio`` is ``||u_hat - u|| / ||f_hat||``.
    """
    if problem.exact_u is None or problem.exact_g is None:
        raise UnsupportedDiagnosticError("diagnostics need the exact solution and source")
    x, t = grid.points[:, 0], grid.points[:, 1]
    measure = problem.T * problem.L
    jet = field_jet(net_u, grid.points).values()
    e = jet.v - problem.exact_u(x, t)
    g_true = problem.exact_g(x, t)
    f = residual(problem, jet, g_true)
    g_hat = np.asarray(field_value(net_g, problem.source_inputs(grid.points)))
    gd = g_hat - g_true
    l_dn = measure * float(np.mean(e * e))
    l_pn = measure * float(np.mean(f * f))
    e_norm = np.sqrt(l_dn)
    f_norm = np.sqrt(l_pn)
    return Diagnostics(
        l_dn=l_dn,
        l_pn=l_pn,
        l_u=(l_dn + l_pn) / measure,
        solution_error=float(e_norm),
        source_error=float(np.sqrt(measure * np.mean(gd * gd))),
        residual_norm=float(f_norm),
        lipschitz_ratio=float(e_norm / f_norm) if f_norm > 0 else float("inf"),
        source_rms=float(np.sqrt(np.mean(gd * gd))),
    )
