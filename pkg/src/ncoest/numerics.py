"""Dense LU solves, Newton iteration for estimating equations, sandwich covariance.

Matrices here are small (at most a dozen or so rows); everything is plain
numpy with Python-level loops over pivots.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NonConvergence, SingularMatrix

log = logging.getLogger(__name__)

PIVOT_TOL = 1e-12


def lu_factor(A, pivot_tol: float = PIVOT_TOL):
    """LU decomposition with partial pivoting, packed as (LU, perm).

    ``perm[i]`` is the original row placed at position ``i``.
    """
    lu = np.array(A, dtype=float, copy=True)
    if lu.ndim != 2 or lu.shape[0] != lu.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {lu.shape}")
    n = lu.shape[0]
    perm = np.arange(n)
    for k in range(n):
        p = k + int(np.argmax(np.abs(lu[k:, k])))
        piv = lu[p, k]
        if not abs(piv) > pivot_tol:
            raise SingularMatrix(k, piv)
        if p != k:
            lu[[k, p]] = lu[[p, k]]
            perm[[k, p]] = perm[[p, k]]
        lu[k + 1 :, k] /= piv
        lu[k + 1 :, k + 1 :] -= np.outer(lu[k + 1 :, k], lu[k, k + 1 :])
    return lu, perm


def lu_solve(factors, b):
    lu, perm = factors
    n = lu.shape[0]
    x = np.array(b, dtype=float, copy=True)[perm]
    for i in range(1, n):
        x[i] -= lu[i, :i] @ x[:i]
    for i in range(n - 1, -1, -1):
        x[i] = (x[i] - lu[i, i + 1 :] @ x[i + 1 :]) / lu[i, i]
    return x


def solve_linear(A, b):
    """Solve ``A x = b``; raises SingularMatrix on a pivot below 1e-12."""
    return lu_solve(lu_factor(A), b)


def invert(A):
    A = np.asarray(A, dtype=float)
    return lu_solve(lu_factor(A), np.eye(A.shape[0]))


class MeatDenominator(str, enum.Enum):
    N = "N"
    UnitsMinusOne = "UnitsMinusOne"


@dataclass
class EstimatingSystem:
    """A stacked estimating equation sum_i w_i U(unit_i; theta) = 0.

    ``score`` maps theta to the (units, dim) array of per-unit scores and
    ``jacobian`` to the (units, dim, dim) array of dU/dtheta. ``mean_jacobian``
    is an optional fast path returning (1/N) sum_i w_i dU_i/dtheta directly.
    ``feasible`` restricts Newton steps (e.g. fitted probabilities below 1).
    """

    dim: int
    score: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray] | None = None
    weights: np.ndarray | None = None
    meat_denominator: MeatDenominator = MeatDenominator.N
    feasible: Callable[[np.ndarray], bool] | None = None
    mean_jacobian: Callable[[np.ndarray], np.ndarray] | None = None

    def weighted_scores(self, theta):
        u = np.asarray(self.score(theta), dtype=float)
        if u.ndim == 1:
            u = u.reshape(-1, self.dim)
        if self.weights is not None:
            u = u * np.asarray(self.weights, dtype=float)[:, None]
        return u

    def mean_score(self, theta):
        u = self.weighted_scores(theta)
        return u.sum(axis=0) / u.shape[0]

    def bread(self, theta):
        if self.mean_jacobian is not None:
            return np.asarray(self.mean_jacobian(theta), dtype=float)
        if self.jacobian is None:
            raise ValueError("system has no Jacobian")
        j = np.asarray(self.jacobian(theta), dtype=float).reshape(-1, self.dim, self.dim)
        if self.weights is not None:
            j = j * np.asarray(self.weights, dtype=float)[:, None, None]
        return j.sum(axis=0) / j.shape[0]

    def is_feasible(self, theta) -> bool:
        return bool(np.all(np.isfinite(theta))) and (self.feasible is None or bool(self.feasible(theta)))


def newton_solve(sys: EstimatingSystem, theta0, tol: float = 1e-10, max_iter: int = 100, max_halvings: int = 30):
    """Solve the estimating equation by damped Newton iteration.

    Convergence is declared when the sup-norm of the per-unit mean score
    (1/N) sum_i w_i U_i is at most ``tol``. A full step is halved while it
    leaves the feasible region or fails to reduce the residual.
    """
    theta = np.array(theta0, dtype=float, copy=True)
    if not np.all(np.isfinite(theta)):
        raise ValueError("theta0 must be finite")
    if tol <= 0:
        raise ValueError("tol must be positive")
    f = sys.mean_score(theta)
    r = float(np.max(np.abs(f)))
    for it in range(max_iter):
        if r <= tol:
            return theta
        step = solve_linear(sys.bread(theta), -f)
        lam = 1.0
        for _ in range(max_halvings + 1):
            cand = theta + lam * step
            with np.errstate(over="ignore", invalid="ignore"):
                better = False
                if sys.is_feasible(cand):
                    fc = sys.mean_score(cand)
                    rc = float(np.max(np.abs(fc)))
                    better = np.isfinite(rc) and (rc < r or fc @ fc < f @ f)
            if better:
                theta, f, r = cand, fc, rc
                break
            lam *= 0.5
        else:
            raise NonConvergence(theta, r, it + 1)
    if r <= tol:
        return theta
    raise NonConvergence(theta, r, max_iter)


def sandwich_cov(sys: EstimatingSystem, theta_hat):
    """(1/N) B^-1 M B^-T with B the mean weighted Jacobian and M the meat.

    The meat averages (w_i U_i)(w_i U_i)^T over N units, or over N - 1 when
    ``sys.meat_denominator`` is UnitsMinusOne. A one-unit system is
    degenerate: it returns NaNs under UnitsMinusOne and a finite (but
    meaningless) matrix otherwise.
    """
    u = sys.weighted_scores(theta_hat)
    n = u.shape[0]
    denom = n if sys.meat_denominator is MeatDenominator.N else n - 1
    if n <= 1:
        log.warning("sandwich covariance computed from a single unit; result is degenerate")
    if denom <= 0:
        return np.full((sys.dim, sys.dim), np.nan)
    meat = u.T @ u / denom
    binv = invert(sys.bread(theta_hat))
    cov = binv @ meat @ binv.T / n
    return (cov + cov.T) / 2


def fd_jacobian(sys: EstimatingSystem, theta, h: float = 1e-6):
    """Central finite differences of the mean weighted score."""
    theta = np.asarray(theta, dtype=float)
    out = np.empty((sys.dim, sys.dim))
    for j in range(sys.dim):
        e = np.zeros(sys.dim)
        e[j] = h
        out[:, j] = (sys.mean_score(theta + e) - sys.mean_score(theta - e)) / (2 * h)
    return out
