import numpy as np
import pytest

import _zoo
from irflab import engine as E
from irflab import noise as N
from irflab.errors import MonotoneDivergence, NotCoalesced, NotConverged, StateEscaped
from irflab.models import make_affine


def _apply_loop(m, p, v, indices, stream=0):
    x = m.as_state(v)
    out = [x]
    for i in indices:
        x = m.apply(x, p.sample_at(int(i), stream))
        out.append(np.asarray(x))
    return np.array(out)


@pytest.mark.parametrize("name", ["affine-entrywise", "lindley-mm1", "langevin-tanh", "sg-regression", "honig"])
def test_forward_matches_single_step_apply(name):
    m, p = _zoo.ONE_STEP_ZOO[name]()
    traj = E.forward_iterate(m, p, m.zero() + 1.0, 40, stream=2)
    ref = _apply_loop(m, p, m.zero() + 1.0, range(1, 41), stream=2)
    assert np.allclose(traj.values, ref, rtol=1e-12, atol=1e-12)


def test_gwi_forward_matches_apply():
    m, p = _zoo.gwi_two_type(seed=3)
    traj = E.forward_iterate(m, p, [3, 1], 30, stream=1)
    ref = _apply_loop(m, p, [3, 1], range(1, 31), stream=1)
    assert np.array_equal(traj.values, ref)


def test_backward_applies_index_one_last():
    m, p = _zoo.affine_entrywise(seed=4)
    n = 12
    x = m.zero() + 0.5
    for i in range(n, 0, -1):
        x = m.apply(x, p.sample_at(i, 0))
    assert np.allclose(E.backward_iterate(m, p, m.zero() + 0.5, n), x, rtol=1e-13)


def test_negative_iterate_is_affine_series():
    # X^{(k)}_0 = sum_{j=0}^{-k-1} a^j B_{-j} for x -> a x + B started at 0
    a = 0.9
    m, p = _zoo.affine_scalar(a, seed=1)
    k = -30
    B = p.sample(np.arange(k + 1, 1), [0]).fields["B"][:, 0, 0]
    series = sum(a**j * B[-1 - j] for j in range(-k))
    assert E.negative_iterate(m, p, k)[0] == pytest.approx(series, rel=1e-12)


def test_chunking_does_not_change_paths(monkeypatch):
    m, p = _zoo.langevin_rotating()
    ref = E.forward_batch(m, p, m.zero(3), 500, [0, 1, 2])
    monkeypatch.setattr(E, "CHUNK_ELEMS", 7)
    assert np.array_equal(E.forward_batch(m, p, m.zero(3), 500, [0, 1, 2]), ref)


def test_vstar_affine_matches_truncated_series():
    a = 0.8
    m, p = _zoo.affine_scalar(a, seed=6)
    lad = E.estimate_vstar(m, p, tol=1e-12, stream=5)
    assert lad.converged and lad.depths[-1] >= 32
    depth = 400
    B = p.sample(np.arange(-depth + 1, 1), [5]).fields["B"][:, 0, 0]
    series = np.sum(a ** np.arange(depth) * B[::-1])
    assert lad.vstar[0] == pytest.approx(series, abs=1e-10)


def test_vstar_samples_match_single_stream():
    m, p = _zoo.mm1(seed=2)
    vs = E.vstar_samples(m, p, [3, 4, 5])
    for k, s in enumerate([3, 4, 5]):
        assert vs[k, 0] == pytest.approx(E.estimate_vstar(m, p, stream=s).vstar[0], abs=1e-9)


def test_vstar_integer_model_exact():
    m, p = _zoo.gwi_single(seed=1)
    lad = E.estimate_vstar(m, p, stream=0)
    assert lad.vstar.dtype == np.int64
    # settled values are exactly constant across the last doubling blocks
    assert lad.increments[-1] == 0 and lad.increments[-2] == 0


def test_not_converged_and_monotone_divergence():
    # x -> x + 1 drifts off to infinity
    law = N.AffineLaw(1, ("constant", [[1.0]]), ("constant", [1.0]))
    ma = make_affine(law)
    with pytest.raises(NotConverged):
        E.estimate_vstar(ma, N.make_matrix_pair(law), max_depth=64)
    ma = E.ModelSpec(**{**ma.__dict__, "monotone": True})
    with pytest.raises(MonotoneDivergence):
        E.estimate_vstar(ma, N.make_matrix_pair(law), max_depth=1 << 12, ceiling=100.0)


def test_state_escape_reports_step():
    law = N.AffineLaw(1, ("constant", [[1e200]]), ("constant", [1.0]))
    with pytest.raises(StateEscaped) as exc:
        E.forward_iterate(make_affine(law), N.make_matrix_pair(law), [1.0], 10)
    assert exc.value.step == 2


def test_coupling_distance_contracts_geometrically():
    m, p = _zoo.affine_scalar(0.9)
    d = E.coupling_distance(m, p, [0.0], [1.0], 50)
    assert np.allclose(d, 0.9 ** np.arange(51), rtol=1e-9)


def test_coalescence_lindley_and_failure():
    m, p = _zoo.mm1(seed=3)
    tau = E.coalescence_time(m, p, [0.0], [3.0], 5000)
    d = E.coupling_distance(m, p, [0.0], [3.0], tau + 100)
    assert np.all(d[tau:] == 0) and d[tau - 1] > 0
    ma, pa = _zoo.affine_scalar(0.9)
    with pytest.raises(NotCoalesced):
        E.coalescence_time(ma, pa, [0.0], [1.0], 50)


def test_metadata_validators():
    m, p = _zoo.langevin_rotating()
    assert E.lipschitz_violations(m, p, 2000) == 0
    m, p = _zoo.mm1()
    assert E.monotone_violations(m, p, 2000) == 0
    ma, pa = _zoo.affine_scaled()
    # negative coefficients break monotonicity
    assert E.monotone_violations(ma, pa, 2000) > 0
