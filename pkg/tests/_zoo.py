"""Small library of models shared by the test modules."""
import numpy as np

from irflab import noise as N
from irflab.models import (LinearDataDrift, QuadraticDrift, TanhDrift, make_affine, make_gwi, make_langevin,
                           make_lindley, make_multiplicative, make_sg)


def affine_scalar(a=0.9, seed=0):
    law = N.AffineLaw(1, ("constant", [[a]]), ("iid", N.Normal()))
    p = N.make_matrix_pair(law, seed)
    return make_affine(law), p


def affine_entrywise(d=2, half=0.5, seed=0):
    law = N.AffineLaw(d, ("entrywise", N.Uniform(-half, half)), ("iid", N.Normal()))
    p = N.make_matrix_pair(law, seed)
    return make_affine(law), p


def affine_scaled(low=-1.2, high=1.2, seed=0):
    law = N.AffineLaw(1, ("scaled", [[1.0]], N.Uniform(low, high)), ("iid", N.Normal()))
    p = N.make_matrix_pair(law, seed)
    return make_affine(law), p


def affine_cycle(seed=0):
    law = N.AffineLaw(1, ("cycle", [[[2.0]], [[0.1]]]), ("constant", [1.0]))
    p = N.make_matrix_pair(law, seed)
    return make_affine(law), p


def honig(seed=0):
    return make_multiplicative(), N.make_honig(seed)


def mult_uniform(seed=0):
    return make_multiplicative(), N.make_iid(N.Uniform(0.5, 1.5), seed)


def mm1(seed=0):
    return make_lindley(), N.make_queue_traffic(N.Exponential(0.5), N.Exponential(1.0), seed)


def langevin_rotating(lam=0.1, seed=0):
    drift = QuadraticDrift([1.0, 2.0], rotation=1.0)
    return make_langevin(lam, drift), N.make_langevin_traffic(N.Normal(), 2, seed=seed)


def langevin_scalar(lam=0.1, gamma=1.0, seed=0):
    drift = QuadraticDrift([gamma])
    return make_langevin(lam, drift), N.make_langevin_traffic(N.Normal(), 1, seed=seed)


def langevin_tanh(lam=0.2, seed=0):
    drift = TanhDrift(2, c0=0.5, c1=0.5, a=1.0, shift_slope=0.3)
    return make_langevin(lam, drift), N.make_langevin_traffic(N.Normal(), 2, seed=seed)


def sg_regression(lam=0.05, seed=0):
    law = N.RegressionLaw([1.0, -0.5], noise_sd=0.5)
    return make_sg(lam, 2), N.make_matrix_pair(law, seed)


def gwi_single(seed=0):
    env = N.make_branching_environment(1, [[0.4]], "bernoulli", [1.0], seed=seed)
    return make_gwi(env), env


def gwi_two_type(seed=0):
    means = [[0.2, 0.3], [0.1, 0.4]]
    env = N.make_branching_environment(2, means, "poisson", [0.5, 1.0], seed=seed)
    return make_gwi(env), env


class FlattenedPairs(N.DrivingProcess):
    """Data records ``Y_{i-1} = (A_i, V_i)`` flattened, so that Langevin with
    :class:`LinearDataDrift` sees the same pair the stochastic gradient map
    uses at step ``i``."""

    kind = "flattenedPairs"
    iid = True
    time_reversible = True

    def __init__(self, pairs):
        super().__init__(pairs.seed)
        self.pairs = pairs

    def _fields(self, indices, streams):
        f = self.pairs.sample(indices + 1, streams).fields
        A, V = f["A"], f["B"]
        flat = A.reshape(A.shape[:2] + (-1,))
        return {"z": np.concatenate([flat, V], axis=-1)}


def langevin_as_sg(lam, pairs):
    d = pairs.dim
    zero = N.make_iid(N.Constant(0.0), 0, dim=d)
    traffic = N.make_langevin_traffic(FlattenedPairs(pairs), d, noise=zero)
    return make_langevin(lam, LinearDataDrift(d)), traffic


# models whose per-step factors exist, for the condition-implication property
ONE_STEP_ZOO = {
    "affine-scalar": affine_scalar,
    "affine-entrywise": affine_entrywise,
    "affine-scaled": affine_scaled,
    "affine-cycle": affine_cycle,
    "honig": honig,
    "mult-uniform": mult_uniform,
    "lindley-mm1": mm1,
    "langevin-rotating": langevin_rotating,
    "langevin-tanh": langevin_tanh,
    "sg-regression": sg_regression,
}
