"""Unadjusted Langevin iteration ``X_{n+1} = X_n - lam H(X_n, Y_n) + sqrt(2 lam) N_{n+1}``.

A drift object supplies ``H`` and its convexity envelope ``(m(y), M(y))``:
``m(y) |x - x'|^2 <= <H(x,y) - H(x',y), x - x'>`` and
``|H(x,y) - H(x',y)| <= M(y) |x - x'|``. The one-step Lipschitz factor then
obeys ``K_z <= (1 + lam^2 M^2 - 2 lam m)^{1/2}``.
"""
import numpy as np

from .. import _kernels as K
from ..engine import REAL, ModelSpec
from ..errors import InvalidEnvelope
from .affine import _matvec


def contraction_bound(lam, m, M):
    """``(1 + lam^2 M^2 - 2 lam m)^{1/2}``, elementwise."""
    lam = np.asarray(lam, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    M = np.asarray(M, dtype=np.float64)
    _check_envelope(m, M)
    m = np.clip(m, 0.0, M)
    out = np.sqrt(np.maximum(1.0 + lam * lam * M * M - 2.0 * lam * m, 0.0))
    return float(out) if out.ndim == 0 else out


def stepsize_threshold(mean_m: float, mean_M2: float) -> float:
    """Gains below ``2 E m / E M^2`` make ``E K_z^2 < 1``."""
    if mean_M2 <= 0:
        raise InvalidEnvelope("E M^2 must be positive")
    return 2.0 * mean_m / mean_M2


def _check_envelope(m, M):
    # slack for eigenvalues computed in floating point
    tol = 1e-12 * (1.0 + np.abs(M))
    if np.any(m < -tol):
        raise InvalidEnvelope("convexity modulus m(y) is negative")
    if np.any(m > M + tol):
        raise InvalidEnvelope("envelope has m(y) > M(y)")


def _scalar_data(Y):
    return Y[..., 0]


class QuadraticDrift:
    """``H(x, y) = Gamma(y) x - b(y)`` with ``Gamma(y) = Q(y) diag(base + slope y) Q(y)^T``.

    ``Q(y)`` rotates the first two coordinates by the angle ``rotation * y``
    (identity when ``d = 1``), so the curvature directions move with the data
    while the spectrum gives the envelope exactly: ``m(y)`` and ``M(y)`` are
    the smallest and largest eigenvalues. ``b(y) = shift_base + shift_slope y``.
    """

    kind = "quadratic"

    def __init__(self, base, slope=0.0, rotation=0.0, shift_base=0.0, shift_slope=0.0):
        self.base = np.atleast_1d(np.asarray(base, dtype=np.float64))
        self.dim = d = self.base.size
        self.slope = np.broadcast_to(np.asarray(slope, dtype=np.float64), (d,)).copy()
        self.rotation = float(rotation)
        self.shift_base = np.broadcast_to(np.asarray(shift_base, dtype=np.float64), (d,)).copy()
        self.shift_slope = np.broadcast_to(np.asarray(shift_slope, dtype=np.float64), (d,)).copy()

    def eigenvalues(self, Y):
        y = _scalar_data(Y)
        return self.base + self.slope * y[..., None]

    def gamma(self, Y):
        y = _scalar_data(Y)
        lam = self.eigenvalues(Y)
        Q = np.broadcast_to(np.eye(self.dim), y.shape + (self.dim, self.dim)).copy()
        if self.dim > 1 and self.rotation != 0.0:
            c, s = np.cos(self.rotation * y), np.sin(self.rotation * y)
            Q[..., 0, 0], Q[..., 0, 1], Q[..., 1, 0], Q[..., 1, 1] = c, -s, s, c
        return (Q * lam[..., None, :]) @ np.swapaxes(Q, -1, -2)

    def shift(self, Y):
        return self.shift_base + self.shift_slope * _scalar_data(Y)[..., None]

    def H(self, X, Y):
        return _matvec(self.gamma(Y), X) - self.shift(Y)

    def envelope(self, Y):
        lam = self.eigenvalues(Y)
        return lam.min(axis=-1), lam.max(axis=-1)

    def linear_part(self, Y):
        return self.gamma(Y), self.shift(Y)

    def describe(self):
        return {
            "drift": self.kind,
            "base": self.base.tolist(),
            "slope": self.slope.tolist(),
            "rotation": self.rotation,
            "shift_base": self.shift_base.tolist(),
            "shift_slope": self.shift_slope.tolist(),
        }


class TanhDrift:
    """Gradient of ``c(y)/2 |x - b(y)|^2 + a sum log cosh(x_i - b_i(y))``.

    ``H(x, y) = c(y)(x - b) + a tanh(x - b)`` with ``c(y) = c0 + c1 y^2`` and
    ``b(y) = shift_slope y``. The Hessian is diagonal with entries in
    ``[c(y), c(y) + a]``, which is the envelope (not attained in general).
    """

    kind = "tanh"

    def __init__(self, dim: int, c0: float = 1.0, c1: float = 0.0, a: float = 1.0, shift_slope=0.0):
        if a < 0 or c0 < 0 or c1 < 0:
            raise InvalidEnvelope("tanh drift needs c0, c1, a >= 0")
        self.dim = int(dim)
        self.c0, self.c1, self.a = float(c0), float(c1), float(a)
        self.shift_slope = np.broadcast_to(np.asarray(shift_slope, dtype=np.float64), (self.dim,)).copy()

    def H(self, X, Y):
        y = _scalar_data(Y)
        c = (self.c0 + self.c1 * y * y)[..., None]
        u = X - self.shift_slope * y[..., None]
        return c * u + self.a * np.tanh(u)

    def envelope(self, Y):
        y = _scalar_data(Y)
        c = self.c0 + self.c1 * y * y
        return c, c + self.a

    linear_part = None

    def describe(self):
        return {"drift": self.kind, "dim": self.dim, "c0": self.c0, "c1": self.c1, "a": self.a,
                "shift_slope": self.shift_slope.tolist()}


class LinearDataDrift:
    """``H(x, (a, v)) = a x - v`` with the data vector ``y`` holding ``a`` (row-major) then ``v``.

    With zero Gaussian term this is the stochastic gradient recursion.
    Envelope: ``m = lambda_min((a + a^T)/2)`` and ``M = ||a||``.
    """

    kind = "linearData"

    def __init__(self, dim: int):
        self.dim = int(dim)

    def split(self, Y):
        d = self.dim
        if Y.shape[-1] != d * d + d:
            raise ValueError(f"data vectors must have length {d * d + d}")
        return Y[..., : d * d].reshape(Y.shape[:-1] + (d, d)), Y[..., d * d :]

    def H(self, X, Y):
        A, V = self.split(Y)
        return _matvec(A, X) - V

    def envelope(self, Y):
        A, _ = self.split(Y)
        S = 0.5 * (A + np.swapaxes(A, -1, -2))
        m = np.linalg.eigvalsh(S)[..., 0]
        M = np.linalg.norm(A, ord=2, axis=(-2, -1))
        return m, M

    def linear_part(self, Y):
        return self.split(Y)

    def describe(self):
        return {"drift": self.kind, "dim": self.dim}


def make_langevin(lam: float, drift) -> ModelSpec:
    """Langevin map on noise records ``z = (Y, N)`` (fields ``"Y"``, ``"N"``)."""
    if lam <= 0:
        raise ValueError("gain must be positive")
    lam = float(lam)
    d = drift.dim
    scale = float(np.sqrt(2.0 * lam))

    def apply(x, z):
        X = np.asarray(x, dtype=np.float64).reshape(1, d)
        Y = np.atleast_1d(np.asarray(z.Y, dtype=np.float64))[None]
        N = np.asarray(z.N, dtype=np.float64).reshape(1, d)
        return (X - lam * drift.H(X, Y) + scale * N)[0]

    def step(X, z):
        return X - lam * drift.H(X, z["Y"]) + scale * z["N"]

    scan = None
    jacobian = None
    if drift.linear_part is not None:

        def scan(x0, block):
            A, V = drift.linear_part(block.fields["Y"])
            return K.gradient_scan(x0, A, V, block.fields["N"], lam, scale)

        def jacobian(z):
            return np.eye(d) - lam * drift.linear_part(z["Y"])[0]

    def lipschitz(z):
        m, M = drift.envelope(z["Y"])
        return contraction_bound(lam, m, M)

    return ModelSpec(
        name="langevin",
        dim=d,
        apply=apply,
        step=step,
        state_space=REAL,
        lipschitz=lipschitz,
        jacobian=jacobian,
        scan=scan,
        params={"family": "langevin", "gain": lam, "drift": drift.describe()},
    )


def langevin_stationary_variance(lam: float, gamma: float) -> float:
    """Variance of the scalar constant-curvature chain: ``2 lam / (1 - (1 - lam gamma)^2)``."""
    a = 1.0 - lam * gamma
    if abs(a) >= 1:
        return float("inf")
    return 2.0 * lam / (1.0 - a * a)
