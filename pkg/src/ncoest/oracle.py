"""Exact intercept calibration and causal truths by enumerating the discrete states.

The state space is (site, age, A, T, A_tilde): 3 x 13 x 3 x 2 x 3 = 702 cells.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Design, TrueEffects
from .datagen import GenerativeParams, mediator_probs, treatment_prob
from .errors import CalibrationImpossible, CalibrationMissing, MeanOutOfRange


@dataclass(frozen=True, eq=False)
class StateSpace:
    """Joint probabilities over (site, age, A, T, A_tilde) plus broadcastable coordinates."""

    prob: np.ndarray
    site: np.ndarray
    age: np.ndarray
    a_value: np.ndarray
    t: np.ndarray
    a_tilde_value: np.ndarray

    @property
    def size(self) -> int:
        return int(self.prob.size)


def _grids(params: GenerativeParams):
    n_age = params.w_age_grid.shape[0]
    site = np.arange(3).reshape(3, 1, 1, 1, 1)
    age_i = np.arange(n_age).reshape(1, n_age, 1, 1, 1)
    a_i = np.arange(3).reshape(1, 1, 3, 1, 1)
    t = np.arange(2).reshape(1, 1, 1, 2, 1)
    at_i = np.arange(3).reshape(1, 1, 1, 1, 3)
    return site, age_i, a_i, t, at_i


def _pre_treatment(params: GenerativeParams):
    """P(site, age, A) as a (3, 13, 3) array."""
    return params.w_site_probs[:, None, None] * params.w_age_probs[:, :, None] * params.a_probs


def state_space(params: GenerativeParams, design: Design) -> StateSpace:
    site, age_i, a_i, t, at_i = _grids(params)
    age = params.w_age_grid[age_i]
    a_val = params.a_levels[a_i]
    p_wa = _pre_treatment(params)[..., None, None]
    p1 = treatment_prob(params, site, age, a_val, design)
    p_t = np.where(t == 1, p1, 1 - p1)
    med = mediator_probs(params, design, age_i[..., 0], a_i[..., 0], t[..., 0])
    prob = p_wa * p_t * med
    return StateSpace(prob=prob, site=site, age=age, a_value=a_val, t=t, a_tilde_value=params.a_levels[at_i])


def _y1_kernel(params, site, age, t, a_tilde):
    """Y1 mean without the intercept factor exp(alpha1)."""
    return a_tilde * np.exp(params.beta1 * t + params.lambda1 * age + params.mu_site[site])


def _y2_kernel(params, site, age, a_tilde):
    """Per-strain Y2 means without exp(alpha2); strain on the last axis."""
    return a_tilde[..., None] * np.exp(params.mu2 * site[..., None] + params.lambda2 * age[..., None])


def calibrate_intercepts(
    params: GenerativeParams,
    design: Design,
    p_y1_target: float | None = None,
    p_y2_targets=None,
) -> GenerativeParams:
    """Solve for alpha1 and every alpha2^(j) so the marginal outcome means hit their targets.

    The outcome means are log-linear in the intercept, so each intercept is
    log(target) - log(sum_states p(state) * mean_without_intercept(state)).
    """
    design = Design(design)
    p1 = params.p_y1_target if p_y1_target is None else float(p_y1_target)
    p2 = params.p_y2_targets if p_y2_targets is None else np.asarray(p_y2_targets, dtype=float)
    if not 0 < p1 < 1 or np.any((p2 <= 0) | (p2 >= 1)):
        raise ValueError("calibration targets must lie in (0, 1)")

    s = state_space(params, design)
    k1 = _y1_kernel(params, s.site, s.age, s.t, s.a_tilde_value)
    k2 = _y2_kernel(params, s.site, s.age, np.broadcast_to(s.a_tilde_value, s.prob.shape))
    e1 = float(np.sum(s.prob * k1))
    e2 = (s.prob[..., None] * k2).reshape(-1, k2.shape[-1]).sum(axis=0)
    if not e1 > 0 or np.any(e2 <= 0):
        raise CalibrationImpossible("outcome means are zero in every state; no intercept reaches the target")
    alpha1 = float(np.log(p1) - np.log(e1))
    alpha2 = np.log(p2) - np.log(e2)

    m1 = np.broadcast_to(np.exp(alpha1) * k1, s.prob.shape)
    m2 = np.exp(alpha2) * k2
    for name, m in (("Y1", m1), ("Y2", m2)):
        if np.any(m > 1):
            pos = np.unravel_index(int(np.argmax(m)), m.shape)
            raise MeanOutOfRange(name, pos, float(m[pos]))

    return params.replace(
        alpha1=alpha1, alpha2=alpha2, p_y1_target=p1, p_y2_targets=np.array(p2), calibrated_for=design
    )


def calibrated_params(a_levels, p_y1_target: float, design: Design) -> GenerativeParams:
    from .datagen import default_params

    return calibrate_intercepts(default_params(a_levels, p_y1_target), design)


def _require(params):
    if not params.calibrated:
        raise CalibrationMissing()


def marginal_means(params: GenerativeParams, design: Design):
    """Exact E(Y1) and per-strain E(Y2^(j)) under the design."""
    _require(params)
    s = state_space(params, design)
    m1 = np.exp(params.alpha1) * _y1_kernel(params, s.site, s.age, s.t, s.a_tilde_value)
    m2 = np.exp(params.alpha2) * _y2_kernel(params, s.site, s.age, np.broadcast_to(s.a_tilde_value, s.prob.shape))
    return float(np.sum(s.prob * m1)), (s.prob[..., None] * m2).reshape(-1, m2.shape[-1]).sum(axis=0)


def counterfactual_y1_mean(params: GenerativeParams, design: Design, t: int, t_star: int) -> float:
    """E(Y1^{t, A_tilde^{t*}}): treatment set to t, behavior drawn as under t*."""
    _require(params)
    site, age_i, a_i, _, at_i = _grids(params)
    site, age_i, a_i, at_i = site[..., 0, :], age_i[..., 0, :], a_i[..., 0, :], at_i[..., 0, :]
    p_wa = _pre_treatment(params)[..., None]
    med = mediator_probs(params, design, age_i[..., 0], a_i[..., 0], t_star)
    m1 = np.exp(params.alpha1) * _y1_kernel(params, site, params.w_age_grid[age_i], t, params.a_levels[at_i])
    return float(np.sum(p_wa * med * m1))


def true_effects(params: GenerativeParams, design: Design) -> TrueEffects:
    _require(params)
    e11 = counterfactual_y1_mean(params, design, 1, 1)
    e10 = counterfactual_y1_mean(params, design, 1, 0)
    e00 = counterfactual_y1_mean(params, design, 0, 0)
    log_ate = float(np.log(e11) - np.log(e00))
    log_nde = float(np.log(e10) - np.log(e00))
    return TrueEffects(log_ate=log_ate, log_nde=log_nde, log_nie=log_ate - log_nde)


def arm_means(params: GenerativeParams, design: Design):
    """Exact E(Y1 | T = t) and E(Y2 | T = t) for t = 0, 1 as two length-2 arrays."""
    _require(params)
    s = state_space(params, design)
    k1 = np.exp(params.alpha1) * _y1_kernel(params, s.site, s.age, s.t, s.a_tilde_value)
    k2 = (np.exp(params.alpha2) * _y2_kernel(params, s.site, s.age, np.broadcast_to(s.a_tilde_value, s.prob.shape))).sum(-1)
    axes = (0, 1, 2, 4)
    p_t = s.prob.sum(axis=axes)
    e1 = (s.prob * k1).sum(axis=axes) / p_t
    e2 = (s.prob * k2).sum(axis=axes) / p_t
    return e1, e2


def naive_population_contrasts(params: GenerativeParams, design: Design) -> tuple[float, float]:
    """Population log ratios log E(Y1|T=1)/E(Y1|T=0) and the same for Y2."""
    e1, e2 = arm_means(params, design)
    return float(np.log(e1[1] / e1[0])), float(np.log(e2[1] / e2[0]))


def true_y2_contrast(params: GenerativeParams, design: Design) -> float:
    """Population log ratio of E(Y2) between arms; defined here for trial designs only."""
    design = Design(design)
    if not design.randomized:
        raise ValueError("the Y2 arm contrast is a causal quantity only under randomized designs")
    return naive_population_contrasts(params, design)[1]


def stratum_contrasts(params: GenerativeParams, design: Design):
    """Within each (site, age) cell: log E(Y1|W,T) ratio, log E(Y2|W,T) ratio.

    Returned as two (3, 13) arrays. Within a cell the Y1-minus-Y2 difference
    equals beta1 exactly whenever both outcomes scale with the same
    function of behavior.
    """
    _require(params)
    s = state_space(params, design)
    k1 = np.exp(params.alpha1) * _y1_kernel(params, s.site, s.age, s.t, s.a_tilde_value)
    k2 = (np.exp(params.alpha2) * _y2_kernel(params, s.site, s.age, np.broadcast_to(s.a_tilde_value, s.prob.shape))).sum(-1)
    axes = (2, 4)
    p = s.prob.sum(axis=axes)
    e1 = (s.prob * k1).sum(axis=axes) / p
    e2 = (s.prob * k2).sum(axis=axes) / p
    return np.log(e1[..., 1] / e1[..., 0]), np.log(e2[..., 1] / e2[..., 0])
