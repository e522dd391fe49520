import numpy as np
import pytest

import _zoo
from irflab import lyapunov as L
from irflab import noise as N
from irflab.errors import MethodUnavailable
from irflab.models import make_affine


def test_operator_norm_matches_svd():
    rng = np.random.default_rng(3)
    for d in (1, 2, 5):
        A = rng.normal(size=(d, d))
        assert L.matrix_operator_norm(A) == pytest.approx(np.linalg.svd(A, compute_uv=False)[0], rel=1e-8)
    # start vector in the kernel of A^T A must not return 0
    A = np.array([[1.0, -1.0], [1.0, -1.0]]) / 2
    assert L.matrix_operator_norm(A) == pytest.approx(1.0)


def test_exact_exponent_of_constant_affine():
    m, p = _zoo.affine_scalar(0.9)
    logs = L.log_composite_norms(m, p, [1, 10, 100], [0, 1])
    assert np.allclose(logs, np.log(0.9) * np.array([[1], [10], [100]]))


def test_exact_renormalised_products_match_direct_product():
    m, p = _zoo.affine_entrywise(d=3, half=0.8, seed=2)
    A = p.sample(np.arange(1, 31), [0]).fields["A"][:, 0]
    P = np.eye(3)
    for t in range(30):
        P = A[t] @ P
    got = L.log_composite_norms(m, p, [30], [0], L.EXACT)[0, 0]
    assert got == pytest.approx(np.log(np.linalg.svd(P, compute_uv=False)[0]), rel=1e-9)


@pytest.mark.parametrize("name", ["affine-entrywise", "langevin-rotating", "sg-regression"])
def test_method_ordering(name):
    m, p = _zoo.ONE_STEP_ZOO[name]()
    c = L.composite_lipschitz(m, p, 8, stream=1, pairs=500)
    assert c.lower <= c.exact * (1 + 1e-9)
    assert c.exact <= c.upper * (1 + 1e-9)


def test_unavailable_method():
    m, p = _zoo.langevin_tanh()
    with pytest.raises(MethodUnavailable):
        L.log_composite_norms(m, p, [1], [0], L.EXACT)
    assert L.best_method(m) == L.UPPER
    m, p = _zoo.gwi_single()
    assert L.best_method(m) == L.LOWER
    with pytest.raises(MethodUnavailable):
        L.check_one_step(m, p, 10)


def test_sampled_pairs_integer_coalescence_gives_minus_inf():
    m, p = _zoo.gwi_single()
    logs = L.log_composite_norms(m, p, [200], [0], L.LOWER, pairs=50)
    assert logs[0, 0] == -np.inf


def test_lyapunov_honig_single_trajectory():
    m, p = _zoo.honig()
    est = L.estimate_lyapunov(m, p, [1000, 100_000])
    assert abs(est.point_estimate + 2 / 3) < 0.02
    assert 0 < est.standard_error < 0.02


def test_lyapunov_replicas_error_bars():
    m, p = _zoo.affine_scaled()
    est = L.estimate_lyapunov(m, p, [50, 200], replicas=200)
    # E log|U(-1.2, 1.2)| = log 1.2 - 1
    assert abs(est.point_estimate - (np.log(1.2) - 1)) < 4 * est.standard_error + 1e-3


def test_hill_estimator_pareto():
    x = np.random.default_rng(1).pareto(2.0, 200_000) + 1.0
    alpha, k = L.hill_tail_index(x)
    assert abs(alpha - 2.0) < 0.1 and k == 2000
    assert L.hill_tail_index(np.ones(100))[0] == float("inf")


def test_theorem_gen_on_heavy_tail_violates():
    # |A| = exp(Pareto(0.8)) has E (log|A|)^+ = inf
    src = N.make_iid(N.Uniform(0.0, 1.0), 4)

    class HeavyScale(N.DrivingProcess):
        iid = True
        time_reversible = True

        def _fields(self, indices, streams):
            u = src.sample(indices, streams).fields["z"]
            with np.errstate(over="ignore"):
                return {"z": np.exp(u ** (-1 / 0.8))}

        def describe(self):
            return {"kind": "heavyScale"}

    law = N.AffineLaw(1, ("scaled", [[1.0]], HeavyScale(0)), ("constant", [1.0]))
    m, p = make_affine(law), N.make_matrix_pair(law)
    with np.errstate(over="ignore", invalid="ignore"):
        v1, _ = L.check_theorem_gen(m, p, 1, 20_000)
    assert v1.status == L.VIOLATED


def test_one_step_honig():
    m, p = _zoo.honig()
    v = L.check_one_step(m, p, 1_000_000)
    assert v.status == L.SATISFIED
    assert abs(v.estimate + 2 / 3) < 0.01


def test_one_step_and_drift_violations():
    m, p = _zoo.mm1()
    assert L.check_one_step(m, p, 1000).status == L.VIOLATED
    law = N.AffineLaw(1, ("constant", [[1.5]]), ("iid", N.Normal()))
    _, v = L.check_drift(make_affine(law), N.make_matrix_pair(law))
    assert v.status == L.VIOLATED


def test_drift_fit_gwi():
    m, p = _zoo.gwi_single()
    fit, v = L.check_drift(m, p)
    assert v.status == L.SATISFIED and fit.consistent
    assert abs(fit.rho - 0.4) < 4 * fit.rho_stderr + 0.01


def test_drift_tail_slope_catches_local_contraction():
    # x -> 0.5 x near 0 but x -> 1.2 x far out
    from irflab.engine import ModelSpec

    def step(X, z):
        return np.where(np.abs(X) < 10, 0.5 * X, 1.2 * X) + z["z"][:, None]

    m = ModelSpec("piecewise", 1, apply=None, step=step)
    probes = np.array([[0.0], [1.0], [2.0], [4.0], [8.0], [9.0], [100.0], [200.0]])
    _, v = L.check_drift(m, N.make_iid(N.Normal(), 0), probes)
    assert v.status == L.VIOLATED


def test_longrun_honig_violated_affine_satisfied():
    m, p = _zoo.honig()
    v = L.check_longrun(m, p, 8, 10_000)
    assert v.status == L.VIOLATED and v.estimate > 1.5
    m, p = _zoo.affine_scalar(0.9)
    v = L.check_longrun(m, p, 8, 1000)
    assert v.status == L.SATISFIED and v.estimate == pytest.approx(0.9)
