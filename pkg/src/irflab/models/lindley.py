"""Lindley recursion ``X_{n+1} = (X_n + Z_{n+1})^+`` and its closed forms."""
import numpy as np

from .. import _kernels as K
from ..engine import NONNEG, ModelSpec
from ..noise import DrivingProcess


def _increments(fields):
    # direct scalar noise, or queue records Z_i = S_{i-1} - T_i
    if "z" in fields:
        return fields["z"]
    return fields["S"] - fields["T"]


def make_lindley() -> ModelSpec:
    """Waiting-time map on [0, inf). Accepts scalar noise or queue records."""

    def apply(x, z):
        inc = float(z.S - z.T) if hasattr(z, "S") else float(z)
        v = float(np.asarray(x).reshape(())) + inc
        return np.array([v if v > 0.0 else 0.0])

    def step(X, z):
        Y = X + _increments(z)[:, None]
        Y[Y < 0.0] = 0.0
        return Y

    def scan(x0, block):
        return K.lindley_scan(x0[:, 0], _increments(block.fields))[..., None]

    return ModelSpec(
        name="lindley",
        dim=1,
        apply=apply,
        step=step,
        state_space=NONNEG,
        monotone=True,
        lipschitz=lambda z: np.ones(np.shape(_increments(z))),
        scan=scan,
        params={"family": "lindley"},
    )


def increments(p: DrivingProcess, indices, stream: int = 0) -> np.ndarray:
    return _increments(p.sample(indices, [stream]).fields)[:, 0]


def vstar_closed_form(p: DrivingProcess, depth: int, stream: int = 0) -> np.ndarray:
    """``max(0, max_{1<=j<=n} Z_{-j+1} + ... + Z_0)`` for every ``n = 1..depth``.

    Uses the same noise indices as negative iteration from depth ``n``.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    z = increments(p, np.arange(-depth + 1, 1), stream)
    suffix = np.cumsum(z[::-1])
    return np.maximum(np.maximum.accumulate(suffix), 0.0)


def lindley_ladder_all(p: DrivingProcess, depth: int, stream: int = 0) -> np.ndarray:
    """``X^{(-n)}_0(0)`` for all ``n = 1..depth`` by staggered negative iteration."""
    return K.lindley_ladder(increments(p, np.arange(-depth + 1, 1), stream))


def mm1_mean_wait(arrival_rate: float, service_rate: float) -> float:
    """Mean waiting time in queue of a stable M/M/1: ``rho / (mu - lambda)``."""
    if arrival_rate >= service_rate:
        return float("inf")
    rho = arrival_rate / service_rate
    return rho / (service_rate - arrival_rate)
