"""Seedable study generation under the observational and trial designs.

The law is W_site -> W_age -> A -> T -> A_tilde -> (Y1, Y2^(1..20)), with
discrete site, age and behavior and log-linear Bernoulli outcome means that
scale with the behavior level value.

Random streams: every (seed, replicate) pair gets its own Philox
counter-based generator keyed through ``numpy.random.SeedSequence``
with ``spawn_key=(replicate,)``, so a replicate's data never depends on
which worker runs it or in which order.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import tables
from .core import Design, StudyDataset
from .errors import CalibrationMissing, ConfigError, MeanOutOfRange

LEVELS = ("low", "medium", "high")
N_SITES = 3
N_AGES = len(tables.AGE_GRID)


def _renormalize(p, axis=-1, slack=1e-2):
    p = np.asarray(p, dtype=float)
    s = p.sum(axis=axis, keepdims=True)
    if np.any(np.abs(s - 1) > slack):
        raise ConfigError("probability table rows must sum to 1 (up to rounding)")
    return p / s


@dataclass(frozen=True, eq=False)
class GenerativeParams:
    w_site_probs: np.ndarray
    w_age_grid: np.ndarray
    w_age_probs: np.ndarray  # (site, age)
    a_probs: np.ndarray  # (site, age, A level)
    a_levels: np.ndarray
    alpha_t: float
    gamma_t: float
    delta_t: float
    zeta_t: float
    mediator: np.ndarray  # (age, A level, A_tilde level), T = 1
    beta1: float
    lambda1: float
    mu_site: np.ndarray
    lambda2: np.ndarray
    mu2: np.ndarray
    p_y1_target: float
    p_y2_targets: np.ndarray
    alpha1: float | None = None
    alpha2: np.ndarray | None = None
    calibrated_for: Design | None = None

    @property
    def n_strains(self) -> int:
        return int(self.lambda2.shape[0])

    @property
    def calibrated(self) -> bool:
        return self.alpha1 is not None and self.alpha2 is not None

    def replace(self, **changes) -> "GenerativeParams":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, np.ndarray):
                v = v.tolist()
            elif isinstance(v, Design):
                v = v.value
            out[f.name] = v
        return out


def default_params(a_levels=(0.0, 1.0, 2.5), p_y1_target: float = 0.14) -> GenerativeParams:
    """Reference simulation parameters with the intercepts left uncalibrated."""
    a_levels = np.asarray(a_levels, dtype=float)
    if a_levels.shape != (3,) or np.any(a_levels < 0) or np.any(np.diff(a_levels) < 0):
        raise ConfigError("a_levels must be three nonnegative nondecreasing values")
    if not 0 < p_y1_target < 1:
        raise ConfigError("p_y1_target must lie in (0, 1)")
    a_probs = np.stack([tables.A_LOW, tables.A_MEDIUM, tables.A_HIGH], axis=-1)
    # (A, age, A_tilde) -> (age, A, A_tilde)
    med = np.stack([tables.A_TILDE_LOW, tables.A_TILDE_MEDIUM, tables.A_TILDE_HIGH], axis=-1).transpose(1, 0, 2)
    strains = np.asarray(tables.Y2_STRAINS, dtype=float)
    return GenerativeParams(
        w_site_probs=np.full(N_SITES, 1 / 3),
        w_age_grid=np.asarray(tables.AGE_GRID, dtype=float),
        w_age_probs=_renormalize(tables.W_AGE_GIVEN_SITE),
        a_probs=_renormalize(a_probs),
        a_levels=a_levels,
        alpha_t=tables.TREATMENT["alpha_t"],
        gamma_t=tables.TREATMENT["gamma_t"],
        delta_t=tables.TREATMENT["delta_t"],
        zeta_t=tables.TREATMENT["zeta_t"],
        mediator=_renormalize(med),
        beta1=tables.Y1["beta1"],
        lambda1=tables.Y1["lambda1"],
        mu_site=np.asarray(tables.Y1["mu_site"], dtype=float),
        lambda2=strains[:, 1].copy(),
        mu2=strains[:, 2].copy(),
        p_y1_target=float(p_y1_target),
        p_y2_targets=strains[:, 0].copy(),
    )


def age_index(params: GenerativeParams, w_age):
    idx = np.rint((np.asarray(w_age, dtype=float) - params.w_age_grid[0]) * 2).astype(np.int64)
    if np.any(idx < 0) or np.any(idx >= params.w_age_grid.shape[0]):
        raise ValueError("age outside the simulation grid")
    return idx


def treatment_prob(params: GenerativeParams, w_site, w_age, a_value, design: Design = Design.Observational):
    """P(T = 1 | W, A): logistic in site, age and behavior; 1/2 in trials."""
    eta = params.alpha_t + params.gamma_t * np.asarray(w_site) + params.delta_t * np.asarray(w_age) + params.zeta_t * np.asarray(a_value)
    if Design(design).randomized:
        return np.full_like(eta, 0.5, dtype=float)[()]
    return 1 / (1 + np.exp(-eta))


def mediator_probs(params: GenerativeParams, design: Design, age_idx, a_idx, t):
    """Distribution of the post-treatment behavior level given age, A and T.

    Behavior is unchanged (A_tilde = A) for untreated subjects and for
    everyone in a blinded trial.
    """
    age_idx, a_idx, t = np.broadcast_arrays(np.asarray(age_idx), np.asarray(a_idx), np.asarray(t))
    stay = np.eye(3)[a_idx]
    if Design(design) is Design.BlindedRCT:
        return stay
    moved = params.mediator[age_idx, a_idx]
    return np.where((t == 1)[..., None], moved, stay)


def y1_mean(params: GenerativeParams, w_site, w_age, t, a_tilde_value):
    if params.alpha1 is None:
        raise CalibrationMissing()
    w_site = np.asarray(w_site)
    return np.asarray(a_tilde_value) * np.exp(
        params.alpha1 + params.beta1 * np.asarray(t) + params.lambda1 * np.asarray(w_age) + params.mu_site[w_site]
    )


def y2_means(params: GenerativeParams, w_site, w_age, a_tilde_value):
    """Per-strain means, strain index on the last axis."""
    if params.alpha2 is None:
        raise CalibrationMissing()
    w_site = np.asarray(w_site, dtype=float)[..., None]
    w_age = np.asarray(w_age, dtype=float)[..., None]
    return np.asarray(a_tilde_value)[..., None] * np.exp(params.alpha2 + params.mu2 * w_site + params.lambda2 * w_age)


def _check_range(outcome, m, w_site, w_age, t, a_tilde_value):
    bad = (m > 1) | (m < 0) | ~np.isfinite(m)
    if np.any(bad):
        pos = np.unravel_index(int(np.flatnonzero(bad)[0]), bad.shape)
        coords = np.broadcast_arrays(*(np.asarray(c, dtype=float) for c in (w_site, w_age, t, a_tilde_value)))
        state = dict(zip(("w_site", "w_age", "t", "a_tilde"), (float(c[pos[: c.ndim]]) for c in coords)))
        raise MeanOutOfRange(outcome, state, float(m[pos]))


def outcome_means(params: GenerativeParams, w_site, w_age, t, a_tilde_value):
    """(E(Y1 | W, T, A_tilde), per-strain E(Y2^(j) | W, T, A_tilde)).

    Y1 uses site indicator effects, Y2 a linear site term. Raises
    MeanOutOfRange rather than clipping.
    """
    m1 = y1_mean(params, w_site, w_age, t, a_tilde_value)
    m2 = y2_means(params, w_site, w_age, a_tilde_value)
    _check_range("Y1", np.asarray(m1), w_site, w_age, t, a_tilde_value)
    _check_range("Y2", np.asarray(m2), w_site, w_age, t, a_tilde_value)
    return m1, m2


def replicate_rng(seed: int, replicate: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(replicate),))
    return np.random.Generator(np.random.Philox(ss))


def _categorical(rng_u, probs):
    cum = np.cumsum(probs, axis=-1)
    idx = (rng_u[:, None] >= cum).sum(axis=-1)
    return np.minimum(idx, probs.shape[-1] - 1)


@dataclass(frozen=True, eq=False)
class StudyDraw:
    """A generated dataset together with its unobserved behavior trace."""

    data: StudyDataset
    a_idx: np.ndarray
    a_tilde_idx: np.ndarray


def draw_study(params: GenerativeParams, design: Design, n: int, seed: int, replicate: int) -> StudyDraw:
    if not params.calibrated:
        raise CalibrationMissing()
    if n < 2:
        raise ValueError("n must be at least 2")
    design = Design(design)
    rng = replicate_rng(seed, replicate)
    u = rng.random((5, n))

    site = _categorical(u[0], np.broadcast_to(params.w_site_probs, (n, N_SITES)))
    age_i = _categorical(u[1], params.w_age_probs[site])
    a_i = _categorical(u[2], params.a_probs[site, age_i])
    age = params.w_age_grid[age_i]
    a_val = params.a_levels[a_i]
    t = (u[3] < treatment_prob(params, site, age, a_val, design)).astype(np.int64)
    at_i = _categorical(u[4], mediator_probs(params, design, age_i, a_i, t))
    at_val = params.a_levels[at_i]

    m1, m2 = outcome_means(params, site, age, t, at_val)
    y1 = (rng.random(n) < m1).astype(np.int64)
    strains = (rng.random((n, params.n_strains)) < m2).astype(np.int64)

    data = StudyDataset(
        t=t, y1=y1, y2=strains.sum(axis=1), y2_strains=strains, w_site=site, w_age=age, ids=np.arange(n)
    )
    return StudyDraw(data=data, a_idx=a_i, a_tilde_idx=at_i)


def gen_study(params: GenerativeParams, design: Design, n: int, seed: int, replicate: int) -> StudyDataset:
    """One simulated study; identical output for identical arguments."""
    return draw_study(params, design, n, seed, replicate).data
