"""Limited-memory BFGS with a strong-Wolfe line search.

Deterministic full-batch minimizer for small smooth objectives.  Every
accepted step satisfies the sufficient-decrease condition, so the objective
never increases between iterations.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, List

import numpy as np

from .exceptions import NumericError

CONVERGED = "converged"
BUDGET = "budget"
STALLED = "stalled"
LINE_SEARCH_FAILED = "line_search_failed"


@dataclass
class LbfgsResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    n_iter: int
    n_eval: int
    status: str
    history: List[float] = field(default_factory=list)

    def __iter__(self):
        # allows ``params, loss = lbfgs_minimize(...)``
        yield self.x
        yield self.fun


def _cubic_min(a1, f1, d1, a2, f2, d2, lo, hi):
    """Minimizer of the cubic matching (f, f') at a1 and a2, clipped to [lo, hi]."""
    if a1 == a2:
        return 0.5 * (lo + hi)
    t1 = d1 + d2 - 3.0 * (f1 - f2) / (a1 - a2)
    disc = t1 * t1 - d1 * d2
    if disc < 0 or not math.isfinite(disc):
        return 0.5 * (lo + hi)
    t2 = math.copysign(math.sqrt(disc), a2 - a1)
    denom = d2 - d1 + 2.0 * t2
    if denom == 0:
        return 0.5 * (lo + hi)
    a = a2 - (a2 - a1) * (d2 + t2 - t1) / denom
    if not math.isfinite(a):
        return 0.5 * (lo + hi)
    return min(max(a, lo), hi)


def strong_wolfe(phi, f0, d0, step=1.0, c1=1e-4, c2=0.9, max_evals=25, tol=1e-12):
    """Find a step length satisfying the strong Wolfe conditions.

    ``phi(a)`` returns ``(f, grad, dphi)`` at ``x + a p``.  Returns
    ``(a, f, grad, n_evals, ok)``; when ``ok`` is False the returned step is
    the best sufficient-decrease point seen (possibly ``a = 0``).
    """
    a_prev, f_prev, d_prev, g_prev = 0.0, f0, d0, None
    best = (0.0, f0, None)
    a = step
    evals = 0
    bracket = None
    while evals < max_evals:
        f, g, d = phi(a)
        evals += 1
        if not math.isfinite(f):
            # shrink into the finite region
            bracket = (a_prev, f_prev, d_prev, g_prev, a, math.inf, math.nan)
            break
        if f > f0 + c1 * a * d0 or (evals > 1 and f >= f_prev):
            bracket = (a_prev, f_prev, d_prev, g_prev, a, f, d)
            break
        best = (a, f, g)
        if abs(d) <= -c2 * d0:
            return a, f, g, evals, True
        if d >= 0:
            bracket = (a, f, d, g, a_prev, f_prev, d_prev)
            break
        a_next = _cubic_min(a_prev, f_prev, d_prev, a, f, d, a + 0.01 * (a - a_prev), 10.0 * a)
        a_prev, f_prev, d_prev, g_prev = a, f, d, g
        a = a_next
    if bracket is None:
        return best[0], best[1], best[2], evals, False

    # zoom: lo always satisfies sufficient decrease and has the lowest f so far
    a_lo, f_lo, d_lo, g_lo, a_hi, f_hi, d_hi = bracket
    while evals < max_evals:
        width = abs(a_hi - a_lo)
        if width <= tol * max(1.0, abs(a_lo)):
            break
        lo, hi = min(a_lo, a_hi), max(a_lo, a_hi)
        if math.isfinite(f_hi) and math.isfinite(d_hi):
            a = _cubic_min(a_lo, f_lo, d_lo, a_hi, f_hi, d_hi, lo, hi)
        else:
            a = 0.5 * (lo + hi)
        # keep trial points away from the bracket ends
        margin = 0.1 * width
        if a - lo < margin or hi - a < margin:
            a = 0.5 * (lo + hi)
        f, g, d = phi(a)
        evals += 1
        if not math.isfinite(f) or f > f0 + c1 * a * d0 or f >= f_lo:
            a_hi, f_hi, d_hi = a, f, d
            continue
        if abs(d) <= -c2 * d0:
            return a, f, g, evals, True
        if d * (a_hi - a_lo) >= 0:
            a_hi, f_hi, d_hi = a_lo, f_lo, d_lo
        a_lo, f_lo, d_lo, g_lo = a, f, d, g
    return a_lo, f_lo, g_lo, evals, False


def lbfgs_minimize(
    objective: Callable,
    x0,
    budget: int = 500,
    memory: int = 20,
    gtol: float = 1e-9,
    ftol: float = 0.0,
    c1: float = 1e-4,
    c2: float = 0.9,
    max_ls: int = 25,
    callback: Callable = None,
) -> LbfgsResult:
    """Minimize ``objective(x) -> (f, grad)`` from ``x0``.

    Stops after ``budget`` iterations, when the sup-norm of the gradient
    drops to ``gtol``, when a step improves ``f`` by no more than
    ``ftol * max(1, |f|)`` (``ftol = 0`` disables that test), or when the line
    search cannot make progress.  ``budget = 0`` returns ``x0`` untouched.
    """
    x = np.array(x0, dtype=np.float64, copy=True)
    f, g = objective(x)
    f = float(f)
    g = np.asarray(g, dtype=np.float64)
    n_eval = 1
    if not math.isfinite(f) or not np.all(np.isfinite(g)):
        raise NumericError("objective is not finite at the initial point", "init")
    history = [f]
    if budget <= 0:
        return LbfgsResult(x, f, g, 0, n_eval, BUDGET, history)
    if np.max(np.abs(g), initial=0.0) <= gtol:
        return LbfgsResult(x, f, g, 0, n_eval, CONVERGED, history)

    s_hist, y_hist, rho_hist = deque(maxlen=memory), deque(maxlen=memory), deque(maxlen=memory)
    status = BUDGET
    n_iter = 0
    for n_iter in range(1, budget + 1):
        # two-loop recursion
        q = -g
        alphas = []
        for s, y, rho in zip(reversed(s_hist), reversed(y_hist), reversed(rho_hist)):
            alpha = rho * s.dot(q)
            alphas.append(alpha)
            q = q - alpha * y
        if s_hist:
            s, y = s_hist[-1], y_hist[-1]
            q = q * (s.dot(y) / y.dot(y))
        else:
            q = q / max(1.0, np.linalg.norm(g))
        for (s, y, rho), alpha in zip(zip(s_hist, y_hist, rho_hist), reversed(alphas)):
            beta = rho * y.dot(q)
            q = q + s * (alpha - beta)
        p = q
        d0 = g.dot(p)
        if not d0 < 0:
            # lost descent direction: restart from steepest descent
            s_hist.clear(), y_hist.clear(), rho_hist.clear()
            p = -g / max(1.0, np.linalg.norm(g))
            d0 = g.dot(p)

        def phi(a, x=x, p=p):
            fa, ga = objective(x + a * p)
            fa = float(fa)
            ga = np.asarray(ga, dtype=np.float64)
            if not np.all(np.isfinite(ga)):
                fa = math.inf
            return fa, ga, (ga.dot(p) if math.isfinite(fa) else math.nan)

        a, f_new, g_new, evals, ok = strong_wolfe(phi, f, d0, 1.0, c1, c2, max_ls)
        n_eval += evals
        if a == 0.0 or g_new is None or not f_new < f:
            status = LINE_SEARCH_FAILED
            n_iter -= 1
            break
        s = a * p
        y = g_new - g
        sy = s.dot(y)
        if sy > 1e-10 * np.linalg.norm(s) * np.linalg.norm(y):
            s_hist.append(s)
            y_hist.append(y)
            rho_hist.append(1.0 / sy)
        x = x + s
        improvement = f - f_new
        f, g = f_new, g_new
        history.append(f)
        if callback is not None:
            callback(x, f)
        if np.max(np.abs(g)) <= gtol:
            status = CONVERGED
            break
        if ftol > 0 and improvement <= ftol * max(1.0, abs(f)):
            status = STALLED
            break
        if not ok and improvement <= 0:
            status = LINE_SEARCH_FAILED
            break
    return LbfgsResult(x, f, g, n_iter, n_eval, status, history)
