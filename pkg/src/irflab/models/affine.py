"""Affine recursion ``X_{n+1} = A_{n+1} X_n + B_{n+1}`` and scalar products."""
import numpy as np

from .. import _kernels as K
from ..engine import NONNEG, REAL, ModelSpec
from ..errors import DimensionMismatch
from ..noise import MatrixLaw


def _matvec(A, X):
    # same accumulation order as the compiled kernel
    y = A[..., 0] * X[:, None, 0]
    for k in range(1, X.shape[1]):
        y = y + A[..., k] * X[:, None, k]
    return y


def spectral_norms(A) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    if A.shape[-1] == 1:
        return np.abs(A[..., 0, 0])
    return np.linalg.norm(A, ord=2, axis=(-2, -1))


def make_affine(law) -> ModelSpec:
    """Affine map on R^d driven by ``(A, B)`` records of a matrix-pair process.

    ``law`` is a :class:`~irflab.noise.MatrixLaw` (its dimension is used and
    its description stored) or a plain dimension. ``K_z = ||A||`` exactly.
    """
    if isinstance(law, MatrixLaw):
        d = law.dim
        desc = law.describe()
    else:
        d = int(law)
        desc = {}
    if d < 1:
        raise DimensionMismatch("dimension must be >= 1")

    def check(A, B):
        if A.shape[-2:] != (d, d) or B.shape[-1] != d:
            raise DimensionMismatch(f"expected A {d}x{d} and B of length {d}, got {A.shape} and {B.shape}")

    def apply(x, z):
        A, B = np.asarray(z.A, dtype=np.float64), np.asarray(z.B, dtype=np.float64)
        check(A, B)
        return _matvec(A[None], np.asarray(x, dtype=np.float64)[None])[0] + B

    def step(X, z):
        check(z["A"], z["B"])
        return _matvec(z["A"], X) + z["B"]

    def scan(x0, block):
        A, B = block.fields["A"], block.fields["B"]
        check(A, B)
        return K.affine_scan(x0, A, B)

    return ModelSpec(
        name="affine",
        dim=d,
        apply=apply,
        step=step,
        state_space=REAL,
        lipschitz=lambda z: spectral_norms(z["A"]),
        jacobian=lambda z: z["A"],
        scan=scan,
        params={"family": "affine", "law": desc},
    )


def make_multiplicative() -> ModelSpec:
    """Scalar map ``x -> z x`` on [0, inf) for positive scalar noise, ``K_z = z``.

    This is the affine recursion with ``A = Z`` and ``B = 0``; it is monotone.
    """

    def apply(x, z):
        return np.asarray(x, dtype=np.float64) * float(z)

    def step(X, z):
        return z["z"][:, None] * X

    def scan(x0, block):
        return K.scalar_mult_scan(x0[:, 0], block.fields["z"])[..., None]

    return ModelSpec(
        name="multiplicative",
        dim=1,
        apply=apply,
        step=step,
        state_space=NONNEG,
        monotone=True,
        lipschitz=lambda z: np.abs(z["z"]),
        jacobian=lambda z: z["z"][..., None, None],
        scan=scan,
        params={"family": "multiplicative"},
    )


def make_log_multiplicative() -> ModelSpec:
    """The multiplicative map in log coordinates: ``y -> y + log z``.

    Long runs of the product underflow to 0 in floating point; this variant
    keeps ``log X_n`` instead. It is an isometry, so it has no contraction
    metadata of its own.
    """

    def apply(y, z):
        return np.asarray(y, dtype=np.float64) + np.log(float(z))

    def step(Y, z):
        return Y + np.log(z["z"])[:, None]

    return ModelSpec(name="log-multiplicative", dim=1, apply=apply, step=step, state_space=REAL,
                     lipschitz=lambda z: np.ones(np.shape(z["z"])), params={"family": "log-multiplicative"})


def stationary_variance_scalar(a: float, b_var: float) -> float:
    """Variance of ``sum_i a^i B_i`` for i.i.d. ``B``: ``b_var / (1 - a^2)``."""
    if abs(a) >= 1:
        return float("inf")
    return b_var / (1.0 - a * a)
