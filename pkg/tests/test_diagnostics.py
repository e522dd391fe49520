import numpy as np
import pytest
from scipy import stats

import _zoo
from irflab import diagnostics as D
from irflab import noise as N
from irflab.errors import GateViolated
from irflab.lyapunov import SATISFIED, VIOLATED
from irflab.models import make_affine, make_sg, mm1_mean_wait


def test_ks_statistic_matches_scipy():
    rng = np.random.default_rng(0)
    for n1, n2 in ((50, 70), (1000, 1000), (300, 17)):
        x, y = rng.normal(size=n1), rng.normal(0.1, 1.0, size=n2)
        assert D.ks_statistic(x, y) == pytest.approx(stats.ks_2samp(x, y).statistic, abs=1e-12)
    # ties across samples
    x, y = np.array([0.0, 1.0, 1.0, 2.0]), np.array([1.0, 1.0, 3.0])
    assert D.ks_statistic(x, y) == pytest.approx(stats.ks_2samp(x, y).statistic)


def test_ks_critical_close_to_exact():
    exact = stats.kstwo.ppf(0.99, 5000)  # one-sample n = n1 n2 / (n1 + n2)
    assert D.ks_critical(10_000, 10_000, 0.01) == pytest.approx(exact, rel=0.02)


def test_time_average_mm1():
    m, p = _zoo.mm1()
    avg, se = D.time_average(m, p, [0.0], 2_000_000)
    assert abs(avg[0] - mm1_mean_wait(1.0, 2.0)) < 4 * se[0] + 0.005


def test_time_average_batch_edges():
    # constant noise: X_i = i for x -> x + 1, so the average is (n + 1) / 2
    law = N.AffineLaw(1, ("constant", [[1.0]]), ("constant", [1.0]))
    avg, se = D.time_average(make_affine(law), N.make_matrix_pair(law), [0.0], 1000)
    assert avg[0] == pytest.approx(500.5)


def test_slln_affine():
    m, p = _zoo.affine_scalar(0.5)
    r = D.slln_check(m, p, [3.0], 200_000, ensemble=2000)
    err = np.asarray(r.abs_error)
    assert np.all(err < 4 * np.hypot(r.time_average_stderr, r.ensemble_stderr))


def test_stationarity_from_vstar_and_transient():
    m, p = _zoo.mm1()
    assert D.stationarity_check(m, p, 2000, 100).status == SATISFIED
    assert D.stationarity_check(m, p, 2000, 100, start=[0.0]).status == VIOLATED


def test_forward_backward_iid_and_gate():
    m, p = _zoo.affine_entrywise()
    v = D.forward_backward_compare(m, p, 20, 5000)
    assert v.status == SATISFIED
    ma = N.make_moving_average([1.0, 0.5], N.Exponential(1.0))
    law = N.DrivenLaw(ma, 1, a0=0.5, a1=0.0)
    with pytest.raises(GateViolated):
        D.forward_backward_compare(make_affine(law), N.make_matrix_pair(law), 10, 100)


def test_forward_backward_random_coefficient_calibration():
    # rejection rate at alpha = 0.05 over independent seeds stays near 0.05
    rejections = 0
    for seed in range(20):
        m, p = _zoo.affine_scaled(-0.9, 0.9, seed=seed)
        rejections += D.forward_backward_compare(m, p, 50, 2000, alpha=0.05).status == VIOLATED
    assert rejections <= 4  # P(Bin(20, 0.05) > 4) < 0.003


def test_forward_backward_detects_non_reversible_difference():
    # a deterministic cycle of non-commuting matrices: forward and backward products differ
    law = N.AffineLaw(2, ("constant", [[0.0, 1.0], [0.0, 0.0]]), ("iid", N.Normal()))
    m, p = make_affine(law), N.make_matrix_pair(law)
    assert D.forward_backward_compare(m, p, 5, 2000).status == SATISFIED
    A = [[[0.9, 0.5], [0.0, 0.1]], [[0.1, 0.0], [0.5, 0.9]], [[0.5, 0.0], [0.0, 0.5]]]
    law = N.AffineLaw(2, ("cycle", A), ("constant", [1.0, 0.0]))
    with pytest.raises(GateViolated):
        D.forward_backward_compare(make_affine(law), N.make_matrix_pair(law), 5, 100)


def test_moment_bound_gwi():
    m, p = _zoo.gwi_single()
    v = D.moment_bound_check(m, p, 2000)
    assert v.status == SATISFIED
    assert v.threshold == pytest.approx(1 / 0.6)


def test_coupling_summary_and_coalescence():
    m, p = _zoo.affine_scalar(0.9)
    s = D.coupling_summary(m, p, [0.0], [1.0], 400, np.arange(20))
    assert s["fraction_below"] == 1.0
    assert s["rate"] == pytest.approx(np.log(0.9))
    m, p = _zoo.gwi_single()
    c = D.coalescence_summary(m, p, [0], [10], 500, np.arange(50))
    assert c["success_rate"] == 1.0


def test_honig_divergence_small_run():
    r = D.honig_divergence(1.0, n_max=3, replicas=200_000, coupling_n=2000, coupling_replicas=100, log_horizon=100_000)
    assert r.ratios_within(0.05)
    assert r.coupling["fraction_below"] == 1.0
    assert abs(r.log_rate + 2 / 3) < 0.02
    assert len(r.means) == 5 and len(r.ratios) == 4


def test_honig_ratio_standard_error_grows():
    r = D.honig_divergence(1.0, n_max=8, replicas=100_000, coupling_n=10, coupling_replicas=2, log_horizon=None)
    se = np.asarray(r.ratio_stderrs)
    # the relative error grows like (E Z^2 / (E Z)^2)^{n/2} = 1.671^n
    growth = se[8] / se[2]
    assert 1.671**6 / 3 < growth < 1.671**6 * 3


def test_sg_bias_iid_and_dependent():
    # i.i.d. pairs: unbiased; dependent scalar pairs A = W^2, V = W with W an MA(1):
    # the stationary mean differs from the target
    m, p = _zoo.sg_regression()
    from irflab.models import bias_estimate, target

    assert bias_estimate(m, p, target(p.law), 20_000, 20).within(3.0)
    src = N.make_moving_average([1.0, 0.9], N.Normal(0.5, 1.0), 3)
    law = N.DrivenLaw(src, 1, a0=0.5, a1=0.5, b0=0.0, b1=1.0)
    pd = N.make_matrix_pair(law, 3)
    small = bias_estimate(make_sg(0.1, 1), pd, target(law), 50_000, 20)
    large = bias_estimate(make_sg(0.2, 1), pd, target(law), 50_000, 20)
    assert not small.within(3.0)
    # the bias grows with the gain
    assert abs(large.delta[0]) > abs(small.delta[0]) + 3 * np.hypot(large.stderr[0], small.stderr[0])


def test_stability_report_overall():
    rep = D.StabilityReport("x")
    assert rep.overall() == SATISFIED
    from irflab.lyapunov import ConditionVerdict, INCONCLUSIVE

    rep.add(ConditionVerdict("a", INCONCLUSIVE, 0.0, 0.0, 1))
    assert rep.overall() == INCONCLUSIVE
    rep.add(ConditionVerdict("b", VIOLATED, 0.0, 0.0, 1))
    assert rep.overall() == VIOLATED
    assert [v["condition"] for v in rep.as_dict()["verdicts"]] == ["a", "b"]
