"""Constant-gain stochastic gradient ``X_{n+1} = X_n - lam (A_{n+1} X_n - V_{n+1})``."""
from dataclasses import dataclass

import numpy as np

from .. import _kernels as K
from ..engine import REAL, ModelSpec, propagate
from ..errors import SingularMeanMatrix
from ..noise import AffineLaw, Dist, DrivenLaw, MatrixLaw, RegressionLaw
from .affine import _matvec


def make_sg(lam: float, dim: int) -> ModelSpec:
    """Stochastic gradient map on matrix-pair noise ``(A_n, V_n)`` (``V`` in field ``B``)."""
    if lam <= 0:
        raise ValueError("gain must be positive")
    lam = float(lam)

    def apply(x, z):
        x = np.asarray(x, dtype=np.float64)
        return x - lam * (_matvec(np.asarray(z.A)[None], x[None])[0] - z.B)

    def step(X, z):
        return X - lam * (_matvec(z["A"], X) - z["B"])

    def scan(x0, block):
        A, V = block.fields["A"], block.fields["B"]
        return K.gradient_scan(x0, A, V, np.zeros_like(V), lam, 0.0)

    def lipschitz(z):
        # ||I - lam A|| for each record
        I = np.eye(dim)
        M = I - lam * z["A"]
        return np.abs(M[..., 0, 0]) if dim == 1 else np.linalg.norm(M, ord=2, axis=(-2, -1))

    return ModelSpec(
        name="sg",
        dim=int(dim),
        apply=apply,
        step=step,
        state_space=REAL,
        lipschitz=lipschitz,
        jacobian=lambda z: np.eye(dim) - lam * z["A"],
        scan=scan,
        params={"family": "sg", "gain": lam},
    )


def _dist_mean(src):
    if isinstance(src, Dist):
        return src.mean
    mean = getattr(src, "mean", None)
    if isinstance(mean, float):
        return mean
    if hasattr(src, "dist"):
        return src.dist.mean
    raise ValueError(f"no closed-form mean for {type(src).__name__}")


def _second_moment(src):
    if isinstance(src, Dist):
        return src.var + src.mean**2
    if hasattr(src, "autocovariance"):
        mu = _dist_mean(src)
        return src.autocovariance(0) + mu * mu
    if hasattr(src, "dist"):
        return src.dist.var + src.dist.mean**2
    raise ValueError(f"no closed-form second moment for {type(src).__name__}")


def mean_pair(law: MatrixLaw):
    """``(E A_n, E V_n)`` for the matrix-pair laws that admit closed forms."""
    d = law.dim
    if isinstance(law, RegressionLaw):
        return law.mean_A, law.mean_B
    if isinstance(law, DrivenLaw):
        m1, m2 = _dist_mean(law.source), _second_moment(law.source)
        return (law.a0 + law.a1 * m2) * np.eye(d), np.full(d, law.b0 + law.b1 * m1)
    if isinstance(law, AffineLaw):
        kind = law.A[0]
        if kind == "constant":
            EA = law.A[1]
        elif kind == "scaled":
            EA = _dist_mean(law.A[2]) * law.A[1]
        elif kind == "cycle":
            EA = np.mean(np.stack(law.A[1]), axis=0)
        else:
            EA = np.full((d, d), law.A[1].mean)
        kind = law.B[0]
        if kind == "constant":
            EB = law.B[1]
        elif kind == "iid":
            EB = np.full(d, law.B[1].mean)
        else:
            EB = _dist_mean(law.B[2]) * law.B[1]
        return np.asarray(EA, dtype=np.float64), np.asarray(EB, dtype=np.float64)
    raise ValueError(f"no closed-form means for {type(law).__name__}")


def target(law: MatrixLaw) -> np.ndarray:
    """``theta = (E A)^{-1} E V``."""
    EA, EV = mean_pair(law)
    if np.linalg.matrix_rank(EA) < EA.shape[0]:
        raise SingularMeanMatrix("mean matrix E A is singular")
    return np.linalg.solve(EA, EV)


def average_trajectory(values) -> np.ndarray:
    """Running means ``(1/n) sum_{i=1}^n X_i`` for ``n = 1..len-1`` (``X_0`` excluded)."""
    X = np.asarray(values, dtype=np.float64)
    X = X.reshape(X.shape[0], -1)[1:]
    return np.cumsum(X, axis=0) / np.arange(1, X.shape[0] + 1)[:, None]


@dataclass
class BiasEstimate:
    gain: float
    horizon: int
    replicas: int
    delta: np.ndarray  # mean of (Xbar_n - theta) over replicas
    stderr: np.ndarray
    per_replica: np.ndarray

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.delta))

    def within(self, k: float = 3.0) -> bool:
        return bool(np.all(np.abs(self.delta) <= k * self.stderr))


def bias_estimate(model: ModelSpec, process, theta, horizon: int, replicas: int, x0=None,
                  first_stream: int = 0) -> BiasEstimate:
    """``Xbar_n - theta`` at ``n = horizon`` with replica-dispersion error bars."""
    theta = np.asarray(theta, dtype=np.float64).reshape(model.dim)
    streams = np.arange(first_stream, first_stream + replicas)
    X0 = np.zeros((replicas, model.dim)) if x0 is None else np.broadcast_to(np.asarray(x0, float), (replicas, model.dim))
    total = np.zeros((replicas, model.dim))

    def accumulate(path, t0):
        total[...] += path[1:].sum(axis=0)

    propagate(model, process, X0, range(1, horizon + 1), streams, on_chunk=accumulate)
    dev = total / horizon - theta
    se = dev.std(axis=0, ddof=1) / np.sqrt(replicas) if replicas > 1 else np.full(model.dim, np.nan)
    return BiasEstimate(model.params.get("gain", float("nan")), horizon, replicas, dev.mean(axis=0), se, dev)


def constant_pair(A, V) -> AffineLaw:
    """Deterministic ``A_n = A``, ``V_n = V``."""
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    return AffineLaw(A.shape[0], ("constant", A), ("constant", np.asarray(V, dtype=np.float64)))


__all__ = ["make_sg", "mean_pair", "target", "average_trajectory", "bias_estimate", "BiasEstimate",
           "constant_pair"]
