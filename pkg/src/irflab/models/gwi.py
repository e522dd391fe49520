"""Multi-type Galton-Watson branching with immigration on N^d.

``F(x, z) = sum_j sum_{i <= x_j} z_{i;j} + z_0``: every type-``j`` individual
is replaced by its offspring vector, then immigrants are added.
"""
import numpy as np

from .. import _kernels as K
from ..engine import INTEGER, Drift, ModelSpec
from ..errors import DriftViolated
from ..noise import BranchingEnvironment


def make_gwi(env: BranchingEnvironment, rho: float | None = None) -> ModelSpec:
    """Monotone branching map with drift data ``(p=1, rho, K=E|B|_1)``.

    ``rho`` defaults to the largest row mass of the (already capped) mean
    tables of ``env``. Raises :class:`DriftViolated` when ``rho >= 1`` or a
    row mass exceeds ``rho``; build the environment with ``cap=rho`` to clip.
    """
    d = env.dim
    mass = env.max_row_mass
    rho = mass if rho is None else float(rho)
    if not rho < 1.0:
        raise DriftViolated(f"drift bound rho = {rho} is not below 1")
    if mass > rho + 1e-12:
        raise DriftViolated(f"row mass {mass} exceeds rho = {rho}; construct the environment with cap={rho}")

    def apply(x, record):
        x = np.asarray(x, dtype=np.int64).reshape(d)
        out = np.array(record.immigration, dtype=np.int64)
        for j in range(d):
            for i in range(1, int(x[j]) + 1):
                out += record.offspring(j, i)
        return out

    def _scan(x0, process, env_states, indices, streams):
        off, imm = process.keys(streams)
        return K.gwi_scan(x0, env_states, indices, off, imm, process.means, process.law, process.immigration_means)

    def step(X, z):
        idx = np.array([z["index"]], dtype=np.int64)
        return _scan(X, z["process"], z["env"][None], idx, z["streams"])[1]

    def scan(x0, block):
        return _scan(x0, block.process, block.fields["env"], block.indices, block.streams)

    return ModelSpec(
        name="gwi",
        dim=d,
        apply=apply,
        step=step,
        state_space=INTEGER,
        monotone=True,
        drift=Drift(p=1.0, rho=rho, K=env.immigration_mass),
        scan=scan,
        params={"family": "gwi", "rho": rho},
    )


def stationary_mean(means, immigration_means, weights=None) -> np.ndarray:
    """``E X = (I - M^T)^{-1} mu`` with ``M`` the (environment-averaged) mean table.

    Valid when the environment is independent of the current population,
    e.g. i.i.d. environments with state probabilities ``weights``.
    """
    means = np.asarray(means, dtype=np.float64)
    if means.ndim == 2:
        means = means[None]
    w = np.full(means.shape[0], 1.0 / means.shape[0]) if weights is None else np.asarray(weights, dtype=np.float64)
    M = np.tensordot(w, means, axes=1)
    mu = np.asarray(immigration_means, dtype=np.float64).reshape(M.shape[0])
    return np.linalg.solve(np.eye(M.shape[0]) - M.T, mu)
