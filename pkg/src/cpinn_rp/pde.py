"""Benchmark problems: 1-D forced heat and wave equations on (0, L) x (0, T].

Both sources excite a single eigenmode, so the exact solutions are closed
forms:

* heat, ``u_t = a^2 u_xx + sin(x/2)`` with ``u(x,0) = sin(x/2)``,
  ``u(0,t) = 0``, ``u_x(pi,t) = 0``:  ``u = (4 - 3 exp(-t/4)) sin(x/2)``.
* wave, ``u_tt = a^2 u_xx + sin(2x) sin(2t)`` at rest initially with
  clamped ends: ``u = (sin(2t)/8 - t cos(2t)/4) sin(2x)`` (resonant, the
  amplitude grows linearly in t).

The closed forms assume the default constants (a = 1, L = pi).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, Optional

import numpy as np

from .exceptions import ConfigError, DomainError

KINDS = ("Heat1D", "Wave1D")

_EPS = 1e-12


@dataclass(frozen=True)
class Boundary:
    """Condition on one edge: ``kind`` is "dirichlet" or "neumann"."""

    kind: str
    value: float = 0.0


@dataclass
class PdeProblem:
    kind: str
    a: float = 1.0
    L: float = np.pi
    T: float = 10.0
    bc_left: Boundary = field(default_factory=lambda: Boundary("dirichlet"))
    bc_right: Boundary = field(default_factory=lambda: Boundary("dirichlet"))
    ic: Optional[Callable] = None
    ic_velocity: Optional[Callable] = None
    exact_u: Optional[Callable] = None
    exact_g: Optional[Callable] = None
    exact_jet: Optional[Callable] = None
    source_time_dependent: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown problem kind {self.kind!r}; expected one of {KINDS}")
        if not (self.L > 0 and self.T > 0):
            raise ConfigError("domain needs L > 0 and T > 0")

    @property
    def time_order(self):
        return 1 if self.kind == "Heat1D" else 2

    def check_domain(self, x, t):
        x = np.asarray(x, dtype=np.float64)
        t = np.asarray(t, dtype=np.float64)
        if np.any(x < -_EPS) or np.any(x > self.L * (1 + _EPS) + _EPS):
            raise DomainError(f"x outside [0, {self.L}]")
        if np.any(t < -_EPS) or np.any(t > self.T * (1 + _EPS) + _EPS):
            raise DomainError(f"t outside [0, {self.T}]")

    def describe(self) -> Dict[str, object]:
        return {"kind": self.kind, "a": self.a, "L": self.L, "T": self.T}

    def source_inputs(self, xt):
        """NetG inputs for (x, t) points; t is pinned to 0 for a stationary source."""
        xt = np.asarray(xt, dtype=np.float64)
        if self.source_time_dependent:
            return xt
        out = xt.copy()
        out[:, 1] = 0.0
        return out


def residual(problem: PdeProblem, jet, g_hat):
    """Nonhomogeneous residual ``u_t + N[u] - g``.

    Works slot-wise on scalars, arrays or tape nodes.
    """
    a2 = problem.a * problem.a
    if problem.kind == "Heat1D":
        return jet.dt - a2 * jet.dxx - g_hat
    return jet.dtt - a2 * jet.dxx - g_hat


def exact_heat(x, t):
    _check(x, t, np.pi, None)
    return (4.0 - 3.0 * np.exp(-np.asarray(t) / 4.0)) * np.sin(np.asarray(x) / 2.0)


def exact_source_heat(x, t=None):
    _check(x, 0.0 if t is None else t, np.pi, None)
    g = np.sin(np.asarray(x, dtype=np.float64) / 2.0)
    if t is not None:
        g = g + np.zeros_like(np.asarray(t, dtype=np.float64))
    return g


def exact_heat_jet(x, t):
    from .autodiff import Jet2

    x = np.asarray(x, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    c = 4.0 - 3.0 * np.exp(-t / 4.0)
    dc = 0.75 * np.exp(-t / 4.0)
    ddc = -0.1875 * np.exp(-t / 4.0)
    s, co = np.sin(x / 2.0), np.cos(x / 2.0)
    return Jet2(v=c * s, dx=0.5 * c * co, dt=dc * s, dxx=-0.25 * c * s, dtt=ddc * s, dxt=0.5 * dc * co)


def exact_wave(x, t):
    _check(x, t, np.pi, 6.0)
    t = np.asarray(t, dtype=np.float64)
    return (np.sin(2 * t) / 8.0 - t * np.cos(2 * t) / 4.0) * np.sin(2 * np.asarray(x))


def exact_source_wave(x, t):
    _check(x, t, np.pi, 6.0)
    return np.sin(2 * np.asarray(x, dtype=np.float64)) * np.sin(2 * np.asarray(t, dtype=np.float64))


def exact_wave_jet(x, t):
    from .autodiff import Jet2

    x = np.asarray(x, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    # T(t) = sin(2t)/8 - t cos(2t)/4 ; T' = t sin(2t)/2 ; T'' = sin(2t)/2 + t cos(2t)
    T0 = np.sin(2 * t) / 8.0 - t * np.cos(2 * t) / 4.0
    T1 = t * np.sin(2 * t) / 2.0
    T2 = np.sin(2 * t) / 2.0 + t * np.cos(2 * t)
    s, co = np.sin(2 * x), np.cos(2 * x)
    return Jet2(v=T0 * s, dx=2 * T0 * co, dt=T1 * s, dxx=-4 * T0 * s, dtt=T2 * s, dxt=2 * T1 * co)


def _check(x, t, L, T):
    x = np.asarray(x, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if np.any(x < -_EPS) or np.any(x > L + 1e-9):
        raise DomainError(f"x outside [0, {L}]")
    if np.any(t < -_EPS) or (T is not None and np.any(t > T + 1e-9)):
        raise DomainError("t outside the problem horizon")


def heat_problem(a=1.0, L=np.pi, T=10.0, stationary_source=True) -> PdeProblem:
    """Forced heat benchmark; the closed forms are attached only for the default constants.

    With ``stationary_source`` NetG is fed ``(x, 0)``: the heat source is
    known to be time-independent, and with an (x, t) source the coupled
    problem has no unique solution.
    """
    default = np.isclose(a, 1.0) and np.isclose(L, np.pi)
    return PdeProblem(
        kind="Heat1D",
        a=a,
        L=L,
        T=T,
        bc_left=Boundary("dirichlet", 0.0),
        bc_right=Boundary("neumann", 0.0),
        ic=lambda x: np.sin(np.asarray(x, dtype=np.float64) / 2.0),
        exact_u=exact_heat if default else None,
        exact_g=exact_source_heat if default else None,
        exact_jet=exact_heat_jet if default else None,
        source_time_dependent=not stationary_source,
    )


def wave_problem(a=1.0, L=np.pi, T=6.0) -> PdeProblem:
    default = np.isclose(a, 1.0) and np.isclose(L, np.pi) and T <= 6.0 + 1e-12
    return PdeProblem(
        kind="Wave1D",
        a=a,
        L=L,
        T=T,
        bc_left=Boundary("dirichlet", 0.0),
        bc_right=Boundary("dirichlet", 0.0),
        ic=lambda x: np.zeros_like(np.asarray(x, dtype=np.float64)),
        ic_velocity=lambda x: np.zeros_like(np.asarray(x, dtype=np.float64)),
        exact_u=exact_wave if default else None,
        exact_g=exact_source_wave if default else None,
        exact_jet=exact_wave_jet if default else None,
    )


def make_problem(kind, a=1.0, L=np.pi, T=None, stationary_source=None) -> PdeProblem:
    if kind == "Heat1D":
        return heat_problem(a, L, 10.0 if T is None else T, True if stationary_source is None else stationary_source)
    if kind == "Wave1D":
        problem = wave_problem(a, L, 6.0 if T is None else T)
        if stationary_source:
            problem.source_time_dependent = False
        return problem
    raise ConfigError(f"unknown problem kind {kind!r}; expected one of {KINDS}")
