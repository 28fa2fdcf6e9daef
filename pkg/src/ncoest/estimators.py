"""Targeted/nontargeted joint estimators and their naive Y1-only counterparts.

Every joint method estimates a log rate ratio for Y1 (beta1*) and for the
nontargeted count Y2 (beta2*) and reports beta1* - beta2*, with the sandwich
covariance of the stacked estimating equation.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .core import EstimateReport, Method, StudyDataset, require_valid
from .errors import EmptyArm, EstimationError, MissingCovariates, NoInformativeStrata, RankDeficientDesign, ZeroCell
from .numerics import EstimatingSystem, MeatDenominator, newton_solve, sandwich_cov

log = logging.getLogger(__name__)

RANK_TOL = 1e-10


def log_ratio(r: Fraction) -> float:
    """log of a positive rational, as log(numerator) - log(denominator) in lowest terms.

    Reducing first makes the result invariant to a common factor in the
    inputs, and swapping numerator and denominator negates it bit for bit.
    """
    return math.log(r.numerator) - math.log(r.denominator)


def _contrast(theta, cov, i1, i2):
    c = float(theta[i1] - theta[i2])
    v = float(cov[i1, i1] + cov[i2, i2] - 2 * cov[i1, i2])
    return c, v


# Subject-level log-linear systems


def loglinear_system(x1, y1, x2=None, y2=None) -> EstimatingSystem:
    """Stacked scores for a log-binomial model of Y1 and a log-linear count model of Y2.

    Y1 block: x (y1 - p1) / (1 - p1) with p1 = exp(x1 @ b1).
    Y2 block: x (y2 - p2) with p2 = exp(x2 @ b2). Omit x2/y2 for the Y1 block alone.
    """
    x1 = np.asarray(x1, dtype=float)
    y1 = np.asarray(y1, dtype=float)
    k1 = x1.shape[1]
    joint = x2 is not None
    if joint:
        x2 = np.asarray(x2, dtype=float)
        y2 = np.asarray(y2, dtype=float)
    k2 = x2.shape[1] if joint else 0
    dim = k1 + k2
    n = x1.shape[0]

    def parts(theta):
        p1 = np.exp(x1 @ theta[:k1])
        p2 = np.exp(x2 @ theta[k1:]) if joint else None
        return p1, p2

    def score(theta):
        p1, p2 = parts(theta)
        u = np.empty((n, dim))
        u[:, :k1] = x1 * ((y1 - p1) / (1 - p1))[:, None]
        if joint:
            u[:, k1:] = x2 * (y2 - p2)[:, None]
        return u

    def jacobian(theta):
        p1, p2 = parts(theta)
        j = np.zeros((n, dim, dim))
        c1 = p1 * (y1 - 1) / (1 - p1) ** 2
        j[:, :k1, :k1] = c1[:, None, None] * x1[:, :, None] * x1[:, None, :]
        if joint:
            j[:, k1:, k1:] = -p2[:, None, None] * x2[:, :, None] * x2[:, None, :]
        return j

    def mean_jacobian(theta):
        p1, p2 = parts(theta)
        out = np.zeros((dim, dim))
        c1 = p1 * (y1 - 1) / (1 - p1) ** 2
        out[:k1, :k1] = x1.T @ (c1[:, None] * x1) / n
        if joint:
            out[k1:, k1:] = -(x2.T @ (p2[:, None] * x2)) / n
        return out

    def feasible(theta):
        return bool(np.all(x1 @ theta[:k1] < 0))

    return EstimatingSystem(
        dim=dim, score=score, jacobian=jacobian, mean_jacobian=mean_jacobian, feasible=feasible
    )


def _arm_sums(data: StudyDataset):
    t = data.t
    n1 = int(t.sum())
    n0 = data.n - n1
    x1 = int((t * data.y1).sum())
    z1 = int(((1 - t) * data.y1).sum())
    x2 = int((t * data.y2).sum())
    z2 = int(((1 - t) * data.y2).sum())
    return n1, n0, x1, z1, x2, z2


NC_NAMES = ["alpha1", "beta1", "alpha2", "beta2"]


def joint_nc_closed_form(data: StudyDataset) -> np.ndarray:
    """(alpha1*, beta1*, alpha2*, beta2*) from arm-level sums."""
    require_valid(data)
    n1, n0, x1, z1, x2, z2 = _arm_sums(data)
    cells = (
        ("sum T*Y1", x1),
        ("sum (1-T)*Y1", z1),
        ("sum T*Y2", x2),
        ("sum (1-T)*Y2", z2),
        # a Y1 risk of exactly 1 in an arm leaves the log-binomial score undefined
        ("sum T*(1-Y1)", n1 - x1),
        ("sum (1-T)*(1-Y1)", n0 - z1),
    )
    for name, v in cells:
        if v == 0:
            raise ZeroCell(name)
    return np.array(
        [
            log_ratio(Fraction(z1, n0)),
            log_ratio(Fraction(x1 * n0, n1 * z1)),
            log_ratio(Fraction(z2, n0)),
            log_ratio(Fraction(x2 * n0, n1 * z2)),
        ]
    )


def nc_system(data: StudyDataset) -> EstimatingSystem:
    x = np.column_stack([np.ones(data.n), data.t])
    return loglinear_system(x, data.y1, x, data.y2)


def joint_nc(data: StudyDataset) -> EstimateReport:
    theta = joint_nc_closed_form(data)
    cov = sandwich_cov(nc_system(data), theta)
    c, v = _contrast(theta, cov, 1, 3)
    return EstimateReport(Method.JointNC, theta, cov, list(NC_NAMES), c, v)


# Mantel-Haenszel


@dataclass(frozen=True, eq=False)
class StratumTable:
    """Per-stratum arm sizes and outcome sums; arrays share the stratum axis."""

    keys: np.ndarray
    n1: np.ndarray
    n0: np.ndarray
    x1: np.ndarray
    z1: np.ndarray
    x2: np.ndarray
    z2: np.ndarray

    @property
    def n(self):
        return self.n1 + self.n0

    @property
    def weights(self):
        return self.n1 * self.n0 / self.n

    @property
    def k(self) -> int:
        return int(self.n1.shape[0])


def stratum_labels(data: StudyDataset, strata_by: Sequence[str] | None) -> np.ndarray:
    """Integer label per subject for the cross-classification of the given columns."""
    if not strata_by:
        return np.zeros(data.n, dtype=np.int64)
    cols = []
    for name in strata_by:
        col = getattr(data, name, None)
        if col is None:
            raise MissingCovariates(f"stratification by {name}")
        cols.append(np.unique(col, return_inverse=True)[1])
    key = np.zeros(data.n, dtype=np.int64)
    for c in cols:
        key = key * (int(c.max()) + 1) + c
    return np.unique(key, return_inverse=True)[1]


def stratum_table(data: StudyDataset, strata_by: Sequence[str] | None = ("w_site", "w_age")) -> StratumTable:
    lab = stratum_labels(data, strata_by)
    k = int(lab.max()) + 1
    t = data.t.astype(float)

    def s(v):
        return np.bincount(lab, weights=v, minlength=k)

    return StratumTable(
        keys=np.arange(k),
        n1=s(t),
        n0=s(1 - t),
        x1=s(t * data.y1),
        z1=s((1 - t) * data.y1),
        x2=s(t * data.y2),
        z2=s((1 - t) * data.y2),
    )


def mh_closed_form(tab: StratumTable, joint: bool = True) -> np.ndarray:
    w = tab.weights
    if not np.any(w > 0):
        raise NoInformativeStrata("every stratum has a single arm")
    outcomes = [("Y1", tab.x1, tab.z1)] + ([("Y2", tab.x2, tab.z2)] if joint else [])
    # exact rational sums: the counts are integers
    n0, n1, n = (tab.n0.astype(np.int64).tolist(), tab.n1.astype(np.int64).tolist(), tab.n.astype(np.int64).tolist())
    out = []
    for name, x, z in outcomes:
        xs, zs = x.astype(np.int64).tolist(), z.astype(np.int64).tolist()
        num = sum((Fraction(a * b, c) for a, b, c in zip(n0, xs, n)), Fraction(0))
        den = sum((Fraction(a * b, c) for a, b, c in zip(n1, zs, n)), Fraction(0))
        if num == 0:
            raise ZeroCell(f"MH numerator for {name}")
        if den == 0:
            raise ZeroCell(f"MH denominator for {name}")
        out.append(log_ratio(num / den))
    return np.array(out)


def mh_system(tab: StratumTable, joint: bool = True) -> EstimatingSystem:
    """Stratum-level system sum_k w_k U_k = 0 with U_k = X_k/n1_k - exp(beta) Z_k/n0_k."""
    ok = tab.weights > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        pairs = [(np.where(ok, tab.x1 / tab.n1, 0.0), np.where(ok, tab.z1 / tab.n0, 0.0))]
        if joint:
            pairs.append((np.where(ok, tab.x2 / tab.n1, 0.0), np.where(ok, tab.z2 / tab.n0, 0.0)))
    dim = len(pairs)

    def score(theta):
        return np.column_stack([a - np.exp(theta[j]) * b for j, (a, b) in enumerate(pairs)])

    def jacobian(theta):
        j = np.zeros((tab.k, dim, dim))
        for i, (_, b) in enumerate(pairs):
            j[:, i, i] = -np.exp(theta[i]) * b
        return j

    return EstimatingSystem(
        dim=dim, score=score, jacobian=jacobian, weights=tab.weights, meat_denominator=MeatDenominator.UnitsMinusOne
    )


def _mh(data: StudyDataset, strata_by, joint: bool) -> EstimateReport:
    require_valid(data)
    tab = stratum_table(data, strata_by)
    theta = mh_closed_form(tab, joint)
    n_single = int(np.sum(tab.weights == 0))
    if n_single:
        log.warning("%d single-arm strata get zero Mantel-Haenszel weight", n_single)
    if tab.k < 2:
        log.warning("Mantel-Haenszel sandwich needs at least two strata; covariance is undefined")
    cov = sandwich_cov(mh_system(tab, joint), theta)
    info = {"strata": tab.k, "single_arm_strata": n_single}
    if joint:
        c, v = _contrast(theta, cov, 0, 1)
        return EstimateReport(Method.JointMH, theta, cov, ["beta1", "beta2"], c, v, info)
    return EstimateReport(Method.NaiveMH, theta, cov, ["beta1"], float(theta[0]), float(cov[0, 0]), info)


def joint_mh(data: StudyDataset, strata_by: Sequence[str] | None = ("w_site", "w_age")) -> EstimateReport:
    return _mh(data, strata_by, joint=True)


def naive_mh(data: StudyDataset, strata_by: Sequence[str] | None = ("w_site", "w_age")) -> EstimateReport:
    return _mh(data, strata_by, joint=False)


# Regression


@dataclass(frozen=True)
class RegressionSpec:
    """Covariates shared by the Y1 and Y2 equations.

    Columns: intercept, T, then (W_age - age_center)^d for d = 1..age_degree,
    then site indicators for sites 1 and 2 (site 0 is the reference).
    Centering age only reparameterizes the intercept and age terms; the
    treatment coefficient is unaffected.
    """

    age_degree: int = 2
    site_dummies: bool = True
    age_center: float = 18.0

    @classmethod
    def intercept_only(cls) -> "RegressionSpec":
        return cls(age_degree=0, site_dummies=False)


def design_matrix(data: StudyDataset, spec: RegressionSpec) -> tuple[np.ndarray, list[str]]:
    cols = [np.ones(data.n), data.t.astype(float)]
    names = ["alpha", "beta"]
    if spec.age_degree > 0:
        if data.w_age is None:
            raise MissingCovariates("regression on age")
        a = data.w_age - spec.age_center
        for d in range(1, spec.age_degree + 1):
            cols.append(a**d)
            names.append("age" if d == 1 else f"age^{d}")
    if spec.site_dummies:
        if data.w_site is None:
            raise MissingCovariates("regression on site")
        for s in (1, 2):
            cols.append((data.w_site == s).astype(float))
            names.append(f"site{s}")
    return np.column_stack(cols), names


def check_rank(x, names, tol: float = RANK_TOL) -> None:
    """Raise RankDeficientDesign naming the first column dependent on earlier ones.

    Unpivoted elimination on the Gram matrix of unit-norm columns: pivot k
    is the squared residual of column k after projecting out columns < k.
    """
    x = np.asarray(x, dtype=float)
    norms = np.linalg.norm(x, axis=0)
    for j in np.flatnonzero(norms == 0):
        raise RankDeficientDesign(names[j])
    g = (x / norms).T @ (x / norms)
    p = g.shape[0]
    for k in range(p):
        piv = g[k, k]
        if piv <= tol:
            raise RankDeficientDesign(names[k])
        g[k + 1 :, k + 1 :] -= np.outer(g[k + 1 :, k], g[k, k + 1 :]) / piv


def joint_loglinear(x1, y1, x2=None, y2=None, names1=None, names2=None, tol: float = 1e-10, max_iter: int = 100):
    """Solve the stacked regression scores by Newton; returns (theta, cov, names)."""
    x1 = np.asarray(x1, dtype=float)
    names1 = list(names1 or [f"x{j}" for j in range(x1.shape[1])])
    check_rank(x1, names1)
    y1 = np.asarray(y1, dtype=float)
    if not y1.any():
        raise ZeroCell("sum Y1")
    theta0 = [np.log(y1.mean())] + [0.0] * (x1.shape[1] - 1)
    names = [f"y1:{v}" for v in names1]
    if x2 is not None:
        x2 = np.asarray(x2, dtype=float)
        names2 = list(names2 or [f"x{j}" for j in range(x2.shape[1])])
        check_rank(x2, names2)
        y2 = np.asarray(y2, dtype=float)
        if not y2.any():
            raise ZeroCell("sum Y2")
        theta0 += [np.log(y2.mean())] + [0.0] * (x2.shape[1] - 1)
        names += [f"y2:{v}" for v in names2]
    sys = loglinear_system(x1, y1, x2, y2)
    theta = newton_solve(sys, np.array(theta0), tol=tol, max_iter=max_iter)
    return theta, sandwich_cov(sys, theta), names


def _reg(data: StudyDataset, spec: RegressionSpec, joint: bool) -> EstimateReport:
    require_valid(data)
    x, cols = design_matrix(data, spec)
    if joint:
        theta, cov, names = joint_loglinear(x, data.y1, x, data.y2, cols, cols)
        i1, i2 = names.index("y1:beta"), names.index("y2:beta")
        c, v = _contrast(theta, cov, i1, i2)
        return EstimateReport(Method.JointReg, theta, cov, names, c, v)
    theta, cov, names = joint_loglinear(x, data.y1, names1=cols)
    i1 = names.index("y1:beta")
    return EstimateReport(Method.NaiveReg, theta, cov, names, float(theta[i1]), float(cov[i1, i1]))


def joint_reg(data: StudyDataset, spec: RegressionSpec = RegressionSpec()) -> EstimateReport:
    return _reg(data, spec, joint=True)


def naive_reg(data: StudyDataset, spec: RegressionSpec = RegressionSpec()) -> EstimateReport:
    return _reg(data, spec, joint=False)


# Stratum-specific pooling


def inverse_variance_pool(estimates, variances) -> tuple[float, float]:
    b = np.asarray(estimates, dtype=float)
    w = 1 / np.asarray(variances, dtype=float)
    return float(np.sum(w * b) / np.sum(w)), float(1 / np.sum(w))


def ss_joint(data: StudyDataset, strata_by: Sequence[str] | None = ("w_site",)) -> EstimateReport:
    """Joint-NC within each stratum, pooled with inverse-variance weights."""
    require_valid(data)
    lab = stratum_labels(data, strata_by)
    ests, vars_, dropped = [], [], 0
    for k in range(int(lab.max()) + 1):
        try:
            r = joint_nc(data.subset(lab == k))
        except (EstimationError, EmptyArm) as exc:
            log.debug("stratum %d dropped: %s", k, exc)
            dropped += 1
            continue
        if not r.contrast_var > 0:
            dropped += 1
            continue
        ests.append(r.contrast)
        vars_.append(r.contrast_var)
    if not ests:
        raise NoInformativeStrata("joint_nc failed in every stratum")
    b, v = inverse_variance_pool(ests, vars_)
    info = {"strata": len(ests) + dropped, "dropped_strata": dropped, "stratum_contrasts": ests, "stratum_vars": vars_}
    return EstimateReport(Method.SSJoint, np.array([b]), np.array([[v]]), ["contrast"], b, v, info)


def estimate(data: StudyDataset, method: Method, strata_by=None, spec: RegressionSpec | None = None) -> EstimateReport:
    """Dispatch on the method tag with per-method defaults."""
    method = Method(method)
    if method is Method.JointNC:
        return joint_nc(data)
    if method in (Method.JointMH, Method.NaiveMH):
        fn = joint_mh if method is Method.JointMH else naive_mh
        return fn(data, ("w_site", "w_age") if strata_by is None else strata_by)
    if method in (Method.JointReg, Method.NaiveReg):
        fn = joint_reg if method is Method.JointReg else naive_reg
        return fn(data, spec or RegressionSpec())
    if method is Method.SSJoint:
        return ss_joint(data, ("w_site",) if strata_by is None else strata_by)
    raise ValueError(method)
