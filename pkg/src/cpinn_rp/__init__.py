"""Coupled physics-informed networks for PDEs with unmeasured sources, plus
a delayed-input soft sensor built on the trained solution network."""

from .autodiff import Jet2, jet_forward, loss_grad
from .cpinn import TrainConfig, TrainReport, diagnostics, hierarchical_train, hybrid_loss
from .estimators import CPINNRegressor, CPINNRPRegressor
from .exceptions import (ConfigError, CpinnError, DataError, DomainError, NumericError, StructuralError,
                         UndefinedCorrelationError)
from .lbfgs import lbfgs_minimize
from .metrics import EvalResult, evaluate, pearson_cc, rmse, snapshot_eval
from .network import MlpParams, NetSpec, forward, init_xavier
from .pde import PdeProblem, heat_problem, make_problem, residual, wave_problem
from .rp import RpConfig, SensorSeries, build_rp_input, masked_sensor_experiment, train_netu_rp
from .sampling import Dataset, EvalGrid, make_grid, sample

__version__ = "0.1.0"
