"""scikit-learn style wrappers: ``fit(X, y)`` on labeled (x, t) points.

``X`` holds ``(x, t)`` rows and ``y`` the measured values; a NaN in ``y``
marks a point on a Neumann edge where only the slope condition applies.
Extra unlabeled collocation points go to ``fit`` as ``collocation=``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, clone
from sklearn.utils.validation import check_array, check_is_fitted

from . import config as C
from .cpinn import TrainConfig, hierarchical_train
from .exceptions import StructuralError
from .network import NetSpec, forward
from .pde import make_problem
from .rp import RpConfig, equispaced_taps, predict as rp_predict, train_netu_rp
from .sampling import Dataset

_TRAIN_KEYS = ("max_outer_iters", "inner_iters_u", "inner_iters_g", "tol_loss", "tol_stall")


def _check_xt(X, name="X"):
    X = check_array(X, dtype=np.float64, input_name=name)
    if X.shape[1] != 2:
        raise StructuralError(f"{name} needs exactly two columns (x, t), got {X.shape[1]}")
    return X


def _check_targets(y, n):
    y = check_array(y, dtype=np.float64, ensure_2d=False, ensure_all_finite="allow-nan", input_name="y")
    y = y.ravel()
    if y.size != n:
        raise StructuralError(f"X has {n} rows but y has {y.size}")
    return y


def _dataset(X, y, collocation):
    X = _check_xt(X)
    y = _check_targets(y, len(X))
    extra = np.zeros((0, 2)) if collocation is None else _check_xt(collocation, "collocation")
    return Dataset(d_b=np.column_stack([X, y]), extra_collocation=extra)


class CPINNRegressor(RegressorMixin, BaseEstimator):
    """Coupled solution/source networks for one of the benchmark PDEs.

    Training hyperparameters left as ``None`` take the benchmark's defaults.
    After ``fit``: ``net_u_``, ``net_g_``, ``report_`` and ``problem_``.
    """

    def __init__(self, kind="Heat1D", a=1.0, L=np.pi, T=None, stationary_source=None,
                 u_layers=3, u_width=30, g_layers=8, g_width=20,
                 max_outer_iters=None, inner_iters_u=None, inner_iters_g=None,
                 tol_loss=None, tol_stall=None, lbfgs_memory=20, physics_weight=1.0, random_state=0):
        self.kind = kind
        self.a = a
        self.L = L
        self.T = T
        self.stationary_source = stationary_source
        self.u_layers = u_layers
        self.u_width = u_width
        self.g_layers = g_layers
        self.g_width = g_width
        self.max_outer_iters = max_outer_iters
        self.inner_iters_u = inner_iters_u
        self.inner_iters_g = inner_iters_g
        self.tol_loss = tol_loss
        self.tol_stall = tol_stall
        self.lbfgs_memory = lbfgs_memory
        self.physics_weight = physics_weight
        self.random_state = random_state

    def _train_config(self, section=C.TRAIN_DEFAULTS):
        base = dict(section.get(self.kind, {}))
        for key in _TRAIN_KEYS:
            if getattr(self, key) is not None:
                base[key] = getattr(self, key)
        return TrainConfig(lbfgs_memory=self.lbfgs_memory, physics_weight=self.physics_weight, **base)

    def _specs(self):
        seed = int(self.random_state)
        return {
            "NetU": NetSpec("NetU", self.u_layers, self.u_width, 2, 2 * seed),
            "NetG": NetSpec("NetG", self.g_layers, self.g_width, 2, 2 * seed + 1),
        }

    def fit(self, X, y, collocation=None):
        dataset = _dataset(X, y, collocation)
        self.problem_ = make_problem(self.kind, self.a, self.L, self.T, self.stationary_source)
        self.problem_.check_domain(dataset.labeled[:, 0], dataset.labeled[:, 1])
        self.dataset_ = dataset
        self.net_u_, self.net_g_, self.report_ = hierarchical_train(self.problem_, dataset, self._specs(), self._train_config())
        self.n_features_in_ = 2
        return self

    def predict(self, X):
        check_is_fitted(self, "net_u_")
        return forward(self.net_u_, _check_xt(X))

    def predict_source(self, X):
        """NetG's estimate of the unmeasured source at ``X``."""
        check_is_fitted(self, "net_g_")
        X = _check_xt(X)
        return forward(self.net_g_, self.problem_.source_inputs(X))


class CPINNRPRegressor(RegressorMixin, BaseEstimator):
    """NetU-RP on top of a CPINN.

    ``cpinn`` is cloned and fitted on the same data unless ``prefit`` is set,
    in which case the given fitted estimator is used as is.  ``sensors``
    passed to ``fit`` map tap index to :class:`~cpinn_rp.rp.SensorSeries`.
    """

    def __init__(self, cpinn=None, prefit=False, tap_points=None, delay=None, sensor_availability=None,
                 depth=1, max_outer_iters=None, inner_iters_u=None, inner_iters_g=None,
                 tol_loss=None, tol_stall=None, random_state=0):
        self.cpinn = cpinn
        self.prefit = prefit
        self.tap_points = tap_points
        self.delay = delay
        self.sensor_availability = sensor_availability
        self.depth = depth
        self.max_outer_iters = max_outer_iters
        self.inner_iters_u = inner_iters_u
        self.inner_iters_g = inner_iters_g
        self.tol_loss = tol_loss
        self.tol_stall = tol_stall
        self.random_state = random_state

    def fit(self, X, y, collocation=None, sensors=None):
        base = self.cpinn if self.cpinn is not None else CPINNRegressor()
        if self.prefit:
            check_is_fitted(base, "net_u_")
            self.cpinn_ = base
        else:
            self.cpinn_ = clone(base).fit(X, y, collocation)
        problem = self.cpinn_.problem_
        taps = equispaced_taps(problem.L) if self.tap_points is None else tuple(self.tap_points)
        delay = problem.T / 200 if self.delay is None else self.delay
        self.rp_config_ = RpConfig(taps, delay, tuple(self.sensor_availability or ()), self.depth)
        rp_train = dict(C.RP_TRAIN_DEFAULTS[problem.kind])
        for key in _TRAIN_KEYS:
            if getattr(self, key) is not None:
                rp_train[key] = getattr(self, key)
        self.sensors_ = dict(sensors or {})
        self.net_u_rp_, self.net_g_, self.report_ = train_netu_rp(
            self.cpinn_.net_u_, self.cpinn_.net_g_, _dataset(X, y, collocation), problem, self.rp_config_,
            TrainConfig(**rp_train), self.sensors_, int(self.random_state),
        )
        self.n_features_in_ = 2
        return self

    def predict(self, X):
        check_is_fitted(self, "net_u_rp_")
        return rp_predict(self.net_u_rp_, self.rp_config_, self.sensors_, self.cpinn_.net_u_, _check_xt(X),
                          self.cpinn_.problem_)
