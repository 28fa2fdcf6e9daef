import logging

import numpy as np
import pytest

from conftest import arms, random_dataset
from ncoest.core import Method, StudyDataset
from ncoest.datagen import gen_study
from ncoest.errors import EmptyArm, MissingCovariates, NoInformativeStrata, RankDeficientDesign, ZeroCell
from ncoest.estimators import (
    RegressionSpec,
    design_matrix,
    estimate,
    inverse_variance_pool,
    joint_loglinear,
    joint_mh,
    joint_nc,
    joint_reg,
    loglinear_system,
    mh_system,
    naive_mh,
    naive_reg,
    nc_system,
    ss_joint,
    stratum_table,
)
from ncoest.numerics import fd_jacobian, newton_solve

LOG2 = np.log(2)


def test_joint_nc_hand_example(hand_data):
    r = joint_nc(hand_data)
    assert r.param("beta1") == pytest.approx(-LOG2, abs=1e-12)
    assert r.param("beta2") == pytest.approx(LOG2, abs=1e-12)
    assert r.contrast == pytest.approx(-2 * LOG2, abs=1e-12)
    assert r.param("alpha1") == pytest.approx(np.log(0.5))
    # binomial log-ratio variance from the counts: 1/1 - 1/4 + 1/2 - 1/4
    assert r.var("beta1") == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(r.cov, r.cov.T)
    assert r.exp_contrast == pytest.approx(0.25)


def test_joint_nc_identical_arms_gives_zero():
    r = joint_nc(arms([1, 0, 0], [0, 1, 0], [2, 0, 1], [1, 2, 0]))
    assert r.theta[1] == 0 and r.theta[3] == 0 and r.contrast == 0


def test_joint_nc_zero_cells():
    with pytest.raises(ZeroCell) as exc:
        joint_nc(arms([0, 0], [1, 0], [1, 1], [1, 0]))
    assert "T*Y1" in exc.value.which
    with pytest.raises(ZeroCell):
        joint_nc(arms([1, 0], [1, 0], [0, 0], [1, 0]))


def test_empty_arm():
    with pytest.raises(EmptyArm):
        joint_nc(StudyDataset.from_arrays([1, 1], [1, 0], [1, 1]))


def test_mh_one_stratum_collapses_to_joint_nc(hand_data):
    nc = joint_nc(hand_data)
    mh = joint_mh(hand_data, strata_by=None)
    assert mh.param("beta1") == pytest.approx(nc.param("beta1"), abs=1e-12)
    assert mh.param("beta2") == pytest.approx(nc.param("beta2"), abs=1e-12)
    # the stratum-level meat divides by K - 1 = 0
    assert np.isnan(mh.cov).all()


def two_strata():
    # stratum A: (n1, n0, X1, Z1) = (2, 2, 1, 2); stratum B: (2, 2, 1, 1)
    t = [1, 1, 0, 0, 1, 1, 0, 0]
    y1 = [1, 0, 1, 1, 1, 0, 1, 0]
    y2 = [1, 2, 0, 1, 3, 0, 1, 1]
    return StudyDataset.from_arrays(t, y1, y2, w_site=[0] * 4 + [1] * 4, w_age=[15.0] * 8)


def test_mh_two_strata_hand_example():
    r = joint_mh(two_strata())
    assert r.param("beta1") == pytest.approx(np.log(1 / 1.5), abs=1e-12)
    assert r.param("beta1") == pytest.approx(-0.405465, abs=1e-6)
    tab = stratum_table(two_strata())
    np.testing.assert_array_equal(tab.weights, [1.0, 1.0])
    np.testing.assert_array_equal(tab.n1 + tab.n0, tab.n)
    assert np.all(np.isfinite(r.cov))


def test_mh_coarse_and_fine_strata(params):
    d = gen_study(params(), "Observational", 3000, 5, 0)
    fine = joint_mh(d)
    coarse = joint_mh(d, strata_by=("w_site",))
    assert fine.info["strata"] > coarse.info["strata"] == 3


def test_mh_single_arm_strata_get_zero_weight(caplog):
    d = two_strata()
    extra = StudyDataset.from_arrays(
        list(d.t) + [1, 1], list(d.y1) + [1, 1], list(d.y2) + [5, 5], w_site=list(d.w_site) + [2, 2], w_age=[15.0] * 10
    )
    with caplog.at_level(logging.WARNING):
        r = joint_mh(extra)
    assert r.info == {"strata": 3, "single_arm_strata": 1}
    assert r.param("beta1") == pytest.approx(joint_mh(d).param("beta1"), abs=1e-12)
    assert "single-arm" in caplog.text


def test_mh_no_informative_strata():
    d = StudyDataset.from_arrays([1, 1, 0, 0], [1, 0, 1, 0], [1, 1, 1, 1], w_site=[0, 0, 1, 1], w_age=[15.0] * 4)
    with pytest.raises(NoInformativeStrata):
        joint_mh(d)


def test_mh_zero_sum():
    d = StudyDataset.from_arrays([1, 0, 1, 0], [0, 1, 0, 1], [1, 1, 1, 1], w_site=[0, 0, 1, 1], w_age=[15.0] * 4)
    with pytest.raises(ZeroCell):
        joint_mh(d)


def test_mh_requires_covariates(hand_data):
    with pytest.raises(MissingCovariates):
        joint_mh(hand_data)


def test_naive_mh_examples(hand_data):
    r = naive_mh(hand_data, strata_by=None)
    assert r.contrast == pytest.approx(-0.693147, abs=1e-6)
    assert r.names == ["beta1"]
    null = StudyDataset.from_arrays([1, 0, 1, 0], [1, 1, 0, 0], [0, 1, 1, 0], w_site=[0, 0, 1, 1], w_age=[15.0] * 4)
    assert naive_mh(null).contrast == pytest.approx(0.0, abs=1e-15)


def test_reg_intercept_only_matches_joint_nc():
    rng = np.random.default_rng(8)
    d = random_dataset(rng, 400, covariates=True)
    nc = joint_nc(d)
    reg = joint_reg(d, RegressionSpec.intercept_only())
    np.testing.assert_allclose(reg.theta, nc.theta, atol=1e-8)
    np.testing.assert_allclose(reg.cov, nc.cov, atol=1e-8)
    assert reg.contrast == pytest.approx(nc.contrast, abs=1e-8)


def test_reg_full_spec_solves_the_score(params):
    d = gen_study(params(), "Observational", 4000, 3, 0)
    r = joint_reg(d)
    assert r.names[:2] == ["y1:alpha", "y1:beta"] and len(r.names) == 12
    x, _ = design_matrix(d, RegressionSpec())
    sys = loglinear_system(x, d.y1, x, d.y2)
    assert np.max(np.abs(sys.mean_score(r.theta))) < 1e-10
    assert r.contrast == pytest.approx(r.param("y1:beta") - r.param("y2:beta"))


def test_reg_age_centering_only_moves_the_intercept(params):
    d = gen_study(params(), "Observational", 3000, 4, 0)
    a = joint_reg(d, RegressionSpec(age_center=18.0))
    b = joint_reg(d, RegressionSpec(age_center=0.0))
    assert a.contrast == pytest.approx(b.contrast, abs=1e-7)
    assert a.contrast_var == pytest.approx(b.contrast_var, rel=1e-5)


def test_rank_deficiency():
    rng = np.random.default_rng(1)
    d = random_dataset(rng, 200)
    x = np.column_stack([np.ones(d.n), d.t, d.t])
    with pytest.raises(RankDeficientDesign) as exc:
        joint_loglinear(x, d.y1, x, d.y2, ["1", "t", "t_copy"], ["1", "t", "t_copy"])
    assert exc.value.column == "t_copy"
    const_age = d.replace(w_site=rng.integers(0, 3, d.n), w_age=np.full(d.n, 17.0))
    with pytest.raises(RankDeficientDesign) as exc:
        joint_reg(const_age)
    assert exc.value.column == "age"


def test_reg_zero_outcome():
    d = StudyDataset.from_arrays([1, 0, 1, 0], [1, 1, 0, 0], [0, 0, 0, 0])
    with pytest.raises(ZeroCell):
        joint_reg(d, RegressionSpec.intercept_only())


def test_reg_requires_covariates(hand_data):
    with pytest.raises(MissingCovariates):
        joint_reg(hand_data)
    with pytest.raises(MissingCovariates):
        naive_reg(hand_data)


def test_naive_reg_is_the_y1_half(params):
    d = gen_study(params(), "Observational", 3000, 6, 0)
    j, n = joint_reg(d), naive_reg(d)
    k = len(n.theta)
    np.testing.assert_allclose(n.theta, j.theta[:k], atol=1e-9)
    np.testing.assert_allclose(n.cov, j.cov[:k, :k], rtol=1e-7, atol=1e-12)
    assert n.contrast == pytest.approx(j.param("y1:beta"), abs=1e-9)


def test_ss_joint_one_stratum(hand_data):
    nc = joint_nc(hand_data)
    ss = ss_joint(hand_data, strata_by=None)
    assert ss.contrast == pytest.approx(nc.contrast, abs=1e-15)
    assert ss.contrast_var == pytest.approx(nc.contrast_var, abs=1e-15)


def test_inverse_variance_pool_examples():
    assert inverse_variance_pool([-1.0, -0.5], [0.04, 0.16]) == pytest.approx((-0.9, 0.032))
    assert inverse_variance_pool([0.3, 0.3], [0.1, 0.1]) == pytest.approx((0.3, 0.05))


def test_ss_joint_drops_failing_strata(hand_data):
    n = hand_data.n
    # site 1 copies the hand example; site 2 has no treated Y1 events, so joint_nc fails there
    d = StudyDataset.from_arrays(
        list(hand_data.t) * 2 + [1, 0, 1, 0],
        list(hand_data.y1) * 2 + [0, 1, 0, 1],
        list(hand_data.y2) * 2 + [1, 1, 1, 1],
        w_site=[0] * n + [1] * n + [2] * 4,
        w_age=[15.0] * (2 * n + 4),
    )
    r = ss_joint(d)
    assert r.info["dropped_strata"] == 1 and r.info["strata"] == 3
    nc = joint_nc(hand_data)
    assert r.contrast == pytest.approx(nc.contrast, abs=1e-12)
    assert r.contrast_var == pytest.approx(nc.contrast_var / 2, abs=1e-12)


def test_joint_nc_certain_outcome_is_a_zero_cell():
    with pytest.raises(ZeroCell) as exc:
        joint_nc(arms([1, 0], [1, 1], [1, 0], [1, 0]))
    assert exc.value.which == "sum (1-T)*(1-Y1)"


def test_ss_joint_nothing_left():
    d = StudyDataset.from_arrays([1, 1, 0, 0], [1, 0, 1, 0], [1, 1, 1, 1], w_site=[0, 0, 1, 1], w_age=[15.0] * 4)
    with pytest.raises(NoInformativeStrata):
        ss_joint(d)


def test_newton_reproduces_nc_closed_forms():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        d = random_dataset(rng, int(rng.integers(20, 200)))
        try:
            want = joint_nc(d).theta
        except ZeroCell:
            continue
        sys = nc_system(d)
        got = newton_solve(sys, [np.log(d.y1.mean()), 0, np.log(d.y2.mean()), 0], tol=1e-13)
        np.testing.assert_allclose(got, want, atol=1e-10)


def test_analytic_jacobians_match_finite_differences(params):
    d = gen_study(params(), "Observational", 2000, 7, 0)
    for sys, theta in (
        (nc_system(d), joint_nc(d).theta),
        (mh_system(stratum_table(d)), joint_mh(d).theta),
    ):
        np.testing.assert_allclose(sys.bread(theta), fd_jacobian(sys, theta), rtol=1e-4, atol=1e-9)
        sys.mean_jacobian = None if sys.jacobian is not None else sys.mean_jacobian
        np.testing.assert_allclose(sys.bread(theta), fd_jacobian(sys, theta), rtol=1e-4, atol=1e-9)
    x, _ = design_matrix(d, RegressionSpec())
    sys = loglinear_system(x, d.y1, x, d.y2)
    theta = joint_reg(d).theta
    fd = fd_jacobian(sys, theta, h=1e-6)
    np.testing.assert_allclose(sys.bread(theta), fd, rtol=1e-4, atol=1e-8)
    per_unit = sys.jacobian(theta).mean(axis=0)
    np.testing.assert_allclose(per_unit, sys.bread(theta), rtol=1e-10, atol=1e-14)


def test_estimate_dispatch(params):
    d = gen_study(params(), "Observational", 2000, 8, 0)
    for m in Method:
        r = estimate(d, m)
        assert r.method is m
        assert np.isfinite(r.contrast) and r.contrast_var > 0


def test_null_consistency(params):
    # no treatment effect, no confounding, no behavior change: joint and naive agree
    eye = np.broadcast_to(np.eye(3), (13, 3, 3)).copy()
    from ncoest.datagen import default_params
    from ncoest.oracle import calibrate_intercepts

    p = calibrate_intercepts(default_params().replace(beta1=0.0, zeta_t=0.0, mediator=eye), "Observational")
    js, ns = [], []
    for r in range(40):
        d = gen_study(p, "Observational", 4000, 99, r)
        js.append(joint_mh(d).contrast)
        ns.append(naive_mh(d).contrast)
    js, ns = np.array(js), np.array(ns)
    se = np.std(js - ns, ddof=1) / np.sqrt(len(js))
    assert abs(np.mean(js - ns)) < 4 * se + 1e-3
    assert abs(np.mean(ns)) < 4 * np.std(ns, ddof=1) / np.sqrt(len(ns))


def test_sandwich_validity_over_2000_replicates():
    from ncoest.core import ScenarioConfig
    from ncoest.harness import run_scenario

    cfg = ScenarioConfig(n=10_000, reps=2000, seed=3, design="Observational", p_y1_target=0.14, a_levels=(0, 1, 2.5), methods=("JointMH", "JointNC"))
    res = run_scenario(cfg)
    for m in ("JointMH", "JointNC"):
        row = res.row(m)
        assert abs(row.mean_sandwich_se / row.sample_sd - 1) < 0.10
