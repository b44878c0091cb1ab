"""RMSE and Pearson correlation between predictions and ground truth."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError, StructuralError, UndefinedCorrelationError


@dataclass
class EvalResult:
    rmse: float
    cc: float
    n: int
    scope: str = "full domain"

    def row(self):
        return [self.scope, str(self.n), repr(self.rmse), repr(self.cc)]


def _pair(pred, truth):
    pred = np.asarray(pred, dtype=np.float64).ravel()
    truth = np.asarray(truth, dtype=np.float64).ravel()
    if pred.shape != truth.shape:
        raise StructuralError(f"length mismatch: {pred.size} predictions vs {truth.size} targets")
    if pred.size == 0:
        raise StructuralError("cannot score an empty set")
    return pred, truth


def rmse(pred, truth) -> float:
    pred, truth = _pair(pred, truth)
    d = pred - truth
    return float(np.sqrt(np.mean(d * d)))


def pearson_cc(pred, truth) -> float:
    pred, truth = _pair(pred, truth)
    if pred.size < 2:
        raise UndefinedCorrelationError("correlation needs at least two points")
    dp = pred - pred.mean()
    dt = truth - truth.mean()
    vp = float(np.dot(dp, dp))
    vt = float(np.dot(dt, dt))
    # relative test so that float noise around a constant still counts as constant
    if vp <= 1e-28 * max(1.0, float(np.dot(pred, pred))) or vt <= 1e-28 * max(1.0, float(np.dot(truth, truth))):
        raise UndefinedCorrelationError("correlation is undefined for a zero-variance input")
    cc = float(np.dot(dp, dt) / np.sqrt(vp * vt))
    return min(1.0, max(-1.0, cc))


def evaluate(pred, truth, scope="full domain") -> EvalResult:
    pred, truth = _pair(pred, truth)
    return EvalResult(rmse(pred, truth), pearson_cc(pred, truth), pred.size, scope)


def snapshot_eval(field, exact_u, t_fixed, nx, L=np.pi, T=None, scope=None) -> EvalResult:
    """Score ``field(x, t)`` against ``exact_u`` along the line ``t = t_fixed``.

    ``field`` and ``exact_u`` take coordinate arrays and return values.
    """
    if t_fixed < 0 or (T is not None and t_fixed > T):
        raise DomainError(f"snapshot time {t_fixed} outside [0, {T}]")
    x = np.linspace(0.0, L, nx)
    t = np.full(nx, float(t_fixed))
    return evaluate(field(x, t), exact_u(x, t), scope or f"t={t_fixed:g}")


def write_report(path, results):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["scope", "n", "rmse", "cc"])
        for r in results:
            writer.writerow(r.row())
