"""Two-sided stationary driving sequences with random access.

Every value is a pure function of ``(seed, stream, index, slot)``: a counter
hash (:func:`irflab._kernels.uniforms`) turns that tuple into an open-interval
uniform, and each distribution consumes a fixed number of uniforms through a
documented transform. Negative iteration can therefore deepen towards
``-inf`` and reuse bit-identical noise for indices it has already seen.

Gaussians use the cosine branch of Box-Muller on two uniforms,
``sqrt(-2 log u1) * cos(2 pi u2)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, NamedTuple

import numpy as np

from . import _kernels as K
from .errors import IndexBelowFloor, InvalidDimension, NonReversible

# ---------------------------------------------------------------------------
# distributions


class Dist:
    """A one-dimensional law sampled from a fixed number of uniforms."""

    n_uniforms = 1
    mean = float("nan")
    var = float("nan")

    def from_uniforms(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def describe(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Constant(Dist):
    value: float
    n_uniforms = 0

    @property
    def mean(self):
        return float(self.value)

    @property
    def var(self):
        return 0.0

    def from_uniforms(self, u):
        return np.full(u.shape[:-1], float(self.value))

    def describe(self):
        return {"law": "constant", "value": self.value}


@dataclass(frozen=True)
class Normal(Dist):
    mu: float = 0.0
    sigma: float = 1.0
    n_uniforms = 2

    @property
    def mean(self):
        return float(self.mu)

    @property
    def var(self):
        return float(self.sigma) ** 2

    def from_uniforms(self, u):
        g = np.sqrt(-2.0 * np.log(u[..., 0])) * np.cos(2.0 * np.pi * u[..., 1])
        return self.mu + self.sigma * g

    def describe(self):
        return {"law": "normal", "mu": self.mu, "sigma": self.sigma}


@dataclass(frozen=True)
class Exponential(Dist):
    scale: float = 1.0  # the mean

    @property
    def mean(self):
        return float(self.scale)

    @property
    def var(self):
        return float(self.scale) ** 2

    def from_uniforms(self, u):
        return -self.scale * np.log(u[..., 0])

    def describe(self):
        return {"law": "exponential", "mean": self.scale}


@dataclass(frozen=True)
class Uniform(Dist):
    low: float = 0.0
    high: float = 1.0

    @property
    def mean(self):
        return 0.5 * (self.low + self.high)

    @property
    def var(self):
        return (self.high - self.low) ** 2 / 12.0

    def from_uniforms(self, u):
        return self.low + (self.high - self.low) * u[..., 0]

    def describe(self):
        return {"law": "uniform", "low": self.low, "high": self.high}


class Discrete(Dist):
    """Finite support ``values`` with probabilities ``probs`` (inversion)."""

    def __init__(self, values, probs):
        values = np.asarray(values, dtype=np.float64)
        probs = np.asarray(probs, dtype=np.float64)
        if values.shape != probs.shape or values.ndim != 1:
            raise ValueError("values and probs must be 1-d and of equal length")
        if np.any(probs < 0) or not math.isclose(probs.sum(), 1.0, rel_tol=1e-12):
            raise ValueError("probs must be non-negative and sum to 1")
        self.values = values
        self.probs = probs
        self._cdf = np.cumsum(probs)
        self._cdf[-1] = 1.0

    @property
    def mean(self):
        return float(np.dot(self.values, self.probs))

    @property
    def var(self):
        return float(np.dot(self.values**2, self.probs) - self.mean**2)

    def from_uniforms(self, u):
        k = np.searchsorted(self._cdf, u[..., 0], side="right")
        return self.values[np.minimum(k, self.values.size - 1)]

    def describe(self):
        return {"law": "discrete", "values": self.values.tolist(), "probs": self.probs.tolist()}

    def __eq__(self, other):
        return (
            isinstance(other, Discrete)
            and np.array_equal(self.values, other.values)
            and np.array_equal(self.probs, other.probs)
        )

    def __hash__(self):
        return hash((self.values.tobytes(), self.probs.tobytes()))


class Bernoulli(Discrete):
    def __init__(self, p):
        super().__init__([0.0, 1.0], [1.0 - p, p])
        self.p = float(p)

    def describe(self):
        return {"law": "bernoulli", "p": self.p}


@dataclass(frozen=True)
class Poisson(Dist):
    lam: float = 1.0

    @property
    def mean(self):
        return float(self.lam)

    @property
    def var(self):
        return float(self.lam)

    def from_uniforms(self, u):
        return K.poisson_inv_np(self.lam, u[..., 0]).astype(np.float64)

    def describe(self):
        return {"law": "poisson", "mean": self.lam}


HONIG_LOW = math.exp(-2.0)
HONIG_HIGH = math.exp(2.0)


def honig_law() -> Discrete:
    """Two-point law: e^-2 with probability 2/3, e^2 with probability 1/3."""
    return Discrete([HONIG_LOW, HONIG_HIGH], [2.0 / 3.0, 1.0 / 3.0])


def dist_from_config(cfg: dict) -> Dist:
    cfg = dict(cfg)
    law = cfg.pop("law")
    if law == "constant":
        return Constant(float(cfg.pop("value")))
    if law == "normal":
        return Normal(float(cfg.pop("mu", 0.0)), float(cfg.pop("sigma", 1.0)))
    if law == "exponential":
        return Exponential(float(cfg.pop("mean", 1.0)))
    if law == "uniform":
        return Uniform(float(cfg.pop("low", 0.0)), float(cfg.pop("high", 1.0)))
    if law == "discrete":
        return Discrete(cfg.pop("values"), cfg.pop("probs"))
    if law == "bernoulli":
        return Bernoulli(float(cfg.pop("p")))
    if law == "poisson":
        return Poisson(float(cfg.pop("mean", 1.0)))
    if law == "honig":
        return honig_law()
    raise ValueError(f"unknown law {law!r}")


def _draw(dist: Dist, seed: int, indices, streams, slot: int) -> np.ndarray:
    """Draws of ``dist`` at every (index, stream) pair, shape (T, R)."""
    indices = np.asarray(indices, dtype=np.int64)
    streams = np.asarray(streams, dtype=np.int64)
    if dist.n_uniforms == 0:
        return dist.from_uniforms(np.empty((indices.size, streams.size, 0)))
    u = np.stack(
        [K.uniforms(K.derive_keys(seed, streams, slot + j), indices) for j in range(dist.n_uniforms)],
        axis=-1,
    )
    return dist.from_uniforms(u)


# ---------------------------------------------------------------------------
# noise values


class MatrixPair(NamedTuple):
    A: np.ndarray
    B: np.ndarray


class QueuePair(NamedTuple):
    S: float
    T: float


class LangevinPair(NamedTuple):
    Y: np.ndarray
    N: np.ndarray


class BranchingRecord:
    """Noise of one branching step; offspring are materialised on access."""

    def __init__(self, process: "BranchingEnvironment", stream: int, index: int, env: int):
        self.process = process
        self.stream = int(stream)
        self.index = int(index)
        self.env = int(env)

    def offspring(self, j: int, i: int) -> np.ndarray:
        """Offspring vector of individual ``i`` (1-based) of type ``j`` (0-based)."""
        p = self.process
        d = p.dim
        key = K.derive_keys(p.seed, [self.stream], BranchingEnvironment.SLOT_OFFSPRING)[0]
        u = np.array([K.branching_uniform(key, self.index, (i * d + j) * d + l) for l in range(d)])
        mu = p.means[self.env, j]
        if p.law == K.LAW_BERNOULLI:
            return (u < mu).astype(np.int64)
        return K.poisson_inv_np(mu, u)

    @property
    def immigration(self) -> np.ndarray:
        p = self.process
        key = K.derive_keys(p.seed, [self.stream], BranchingEnvironment.SLOT_IMMIGRATION)[0]
        u = np.array([K.branching_uniform(key, self.index, l) for l in range(p.dim)])
        return K.poisson_inv_np(p.immigration_means, u)

    def __repr__(self):
        return f"BranchingRecord(stream={self.stream}, index={self.index}, env={self.env})"


# ---------------------------------------------------------------------------
# blocks


@dataclass
class NoiseBlock:
    """Noise over a grid of time indices (axis 0) and streams (axis 1)."""

    process: "DrivingProcess"
    indices: np.ndarray
    streams: np.ndarray
    fields: dict = field(default_factory=dict)

    def __len__(self):
        return self.indices.size

    def at(self, t: int) -> dict:
        z = {name: arr[t] for name, arr in self.fields.items()}
        z["index"] = int(self.indices[t])
        z["streams"] = self.streams
        z["process"] = self.process
        return z

    def value(self, t: int, r: int = 0):
        return self.process._value({k: v[t, r] for k, v in self.fields.items()}, int(self.indices[t]), int(self.streams[r]))

    def reversed(self) -> "NoiseBlock":
        return NoiseBlock(
            self.process,
            self.indices[::-1].copy(),
            self.streams,
            {k: np.ascontiguousarray(v[::-1]) for k, v in self.fields.items()},
        )


# ---------------------------------------------------------------------------
# processes


class DrivingProcess:
    """A two-sided stationary ergodic sequence ``{Z_i}``, ``i`` in Z.

    Subclasses implement ``_fields(indices, streams)`` returning arrays with
    leading shape ``(T, R)`` and ``_value`` to package one entry.
    """

    kind = "abstract"
    floor: int | None = None
    iid = False
    time_reversible = False

    def __init__(self, seed: int):
        self.seed = int(seed) & ((1 << 64) - 1)

    # public surface ------------------------------------------------------
    def sample(self, indices, streams=(0,)) -> NoiseBlock:
        indices = np.atleast_1d(np.asarray(indices, dtype=np.int64))
        streams = np.atleast_1d(np.asarray(streams, dtype=np.int64))
        if self.floor is not None and indices.size and indices.min() < self.floor:
            raise IndexBelowFloor(int(indices.min()), self.floor)
        return NoiseBlock(self, indices, streams, self._fields(indices, streams))

    def block(self, start: int, stop: int, stream: int = 0) -> NoiseBlock:
        """Indices ``start, ..., stop - 1`` for one stream."""
        return self.sample(np.arange(start, stop, dtype=np.int64), [stream])

    def sample_at(self, i: int, stream: int = 0):
        return self.sample([i], [stream]).value(0, 0)

    def describe(self) -> dict:
        raise NotImplementedError

    # subclass hooks ------------------------------------------------------
    def _fields(self, indices, streams) -> dict:
        raise NotImplementedError

    def _value(self, entry: dict, index: int, stream: int):
        return entry["z"]


class IIDProcess(DrivingProcess):
    """i.i.d. values of ``dist``; ``dim`` gives vectors with i.i.d. coordinates."""

    iid = True
    time_reversible = True

    def __init__(self, dist: Dist, seed: int = 0, dim: int | None = None, kind: str = "iid"):
        super().__init__(seed)
        if dim is not None and dim < 1:
            raise InvalidDimension("dim must be >= 1")
        self.dist = dist
        self.dim = dim
        self.kind = kind

    def _fields(self, indices, streams):
        if self.dim is None:
            return {"z": _draw(self.dist, self.seed, indices, streams, 0)}
        n = max(self.dist.n_uniforms, 1)
        cols = [_draw(self.dist, self.seed, indices, streams, c * n) for c in range(self.dim)]
        return {"z": np.stack(cols, axis=-1)}

    def _value(self, entry, index, stream):
        z = entry["z"]
        return float(z) if self.dim is None else np.array(z)

    def describe(self):
        return {"kind": self.kind, "seed": self.seed, "dist": self.dist.describe(), "dim": self.dim}


class MovingAverageProcess(DrivingProcess):
    """``Z_i = sum_l c_l eps_{i-l}`` over i.i.d. innovations; q-dependent."""

    kind = "movingAverage"

    def __init__(self, coeffs, innovation: Dist | None = None, seed: int = 0):
        super().__init__(seed)
        self.coeffs = np.asarray(coeffs, dtype=np.float64)
        if self.coeffs.ndim != 1 or self.coeffs.size == 0:
            raise ValueError("coeffs must be a non-empty 1-d sequence")
        self.innovation = innovation if innovation is not None else Normal()
        # stationary Gaussian sequences are reversible in law
        self.time_reversible = isinstance(self.innovation, Normal) or self.coeffs.size == 1
        self.iid = self.coeffs.size == 1

    @property
    def order(self) -> int:
        return self.coeffs.size - 1

    @property
    def mean(self) -> float:
        return float(self.innovation.mean * self.coeffs.sum())

    def autocovariance(self, lag: int) -> float:
        lag = abs(int(lag))
        c = self.coeffs
        if lag > self.order:
            return 0.0
        return float(self.innovation.var * np.dot(c[: c.size - lag], c[lag:]))

    def _fields(self, indices, streams):
        z = np.zeros((indices.size, streams.size))
        for lag, c in enumerate(self.coeffs):
            z += c * _draw(self.innovation, self.seed, indices - lag, streams, 0)
        return {"z": z}

    def _value(self, entry, index, stream):
        return float(entry["z"])

    def describe(self):
        return {
            "kind": self.kind,
            "seed": self.seed,
            "coeffs": self.coeffs.tolist(),
            "innovation": self.innovation.describe(),
        }


class ThreeDependentProcess(DrivingProcess):
    """Window function of four consecutive innovations.

    ``Z_i = eps_i * eps_{i-3} + eps_{i-1} + eps_{i-2}``. Values more than
    three steps apart share no innovation and are therefore independent;
    the product term carries dependence all the way to lag 3. For
    innovations with mean ``mu`` and variance ``s2`` the autocovariances are

    ====  ==================================
    lag   covariance
    ====  ==================================
    0     ``(s2 + mu^2)^2 - mu^4 + 2 s2``
    1     ``s2 + 2 mu s2``
    2     ``2 mu s2``
    3     ``mu^2 s2``
    >3    0
    ====  ==================================

    The default innovation is ``N(0.5, 1)`` so every lag up to 3 is nonzero.
    """

    kind = "threeDependent"

    def __init__(self, innovation: Dist | None = None, seed: int = 0):
        super().__init__(seed)
        self.innovation = innovation if innovation is not None else Normal(0.5, 1.0)

    def autocovariance(self, lag: int) -> float:
        mu, s2 = self.innovation.mean, self.innovation.var
        return three_dependent_autocovariance(lag, mu, s2)

    @property
    def mean(self) -> float:
        mu = self.innovation.mean
        return mu * mu + 2.0 * mu

    def _fields(self, indices, streams):
        e = [_draw(self.innovation, self.seed, indices - lag, streams, 0) for lag in range(4)]
        return {"z": e[0] * e[3] + e[1] + e[2]}

    def _value(self, entry, index, stream):
        return float(entry["z"])

    def describe(self):
        return {"kind": self.kind, "seed": self.seed, "innovation": self.innovation.describe()}


def three_dependent_autocovariance(lag: int, mu: float, s2: float) -> float:
    lag = abs(int(lag))
    if lag == 0:
        return (s2 + mu * mu) ** 2 - mu**4 + 2.0 * s2
    if lag == 1:
        return s2 + 2.0 * mu * s2
    if lag == 2:
        return 2.0 * mu * s2
    if lag == 3:
        return mu * mu * s2
    return 0.0


class ReversibleMarkovProcess(DrivingProcess):
    """Stationary finite-state Markov chain mapped through ``values``.

    The chain is anchored at index 0 with ``X_0 ~ pi`` and extended forward
    with the kernel ``P`` and backward with the time-reversal kernel, which is
    ``P`` itself for reversible chains. A non-reversible kernel is accepted
    only with a ``floor``: the chain then starts from ``pi`` at the floor and
    runs forward, and indices below the floor raise :class:`IndexBelowFloor`.
    """

    kind = "reversibleMarkov"
    SLOT_ANCHOR, SLOT_FORWARD, SLOT_BACKWARD = 0, 1, 2

    def __init__(self, P, values=None, seed: int = 0, floor: int | None = None):
        super().__init__(seed)
        P = np.asarray(P, dtype=np.float64)
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise InvalidDimension("transition matrix must be square")
        if np.any(P < 0) or not np.allclose(P.sum(axis=1), 1.0, atol=1e-12):
            raise ValueError("transition matrix rows must be probability vectors")
        self.P = P
        self.values = np.arange(P.shape[0], dtype=np.float64) if values is None else np.asarray(values, dtype=np.float64)
        self.pi = stationary_law(P)
        flux = self.pi[:, None] * P
        self.reversible = bool(np.allclose(flux, flux.T, atol=1e-12))
        if not self.reversible and floor is None:
            raise NonReversible("non-reversible kernels need an explicit floor")
        self.floor = None if floor is None else int(floor)
        self.time_reversible = self.reversible
        self._cdf = _row_cdf(P)
        self._pi_cdf = _row_cdf(self.pi[None, :])[0]

    def states(self, indices, streams) -> np.ndarray:
        indices = np.asarray(indices, dtype=np.int64)
        streams = np.asarray(streams, dtype=np.int64)
        anchor = 0 if self.floor is None else self.floor
        lo = min(int(indices.min()), anchor)
        hi = max(int(indices.max()), anchor)
        u0 = K.uniforms(K.derive_keys(self.seed, streams, self.SLOT_ANCHOR), [anchor])[0]
        s0 = np.minimum(np.searchsorted(self._pi_cdf, u0, side="right"), self.P.shape[0] - 1)
        path = np.empty((hi - lo + 1, streams.size), dtype=np.int64)
        path[anchor - lo] = s0
        if hi > anchor:
            u = K.uniforms(K.derive_keys(self.seed, streams, self.SLOT_FORWARD), np.arange(anchor + 1, hi + 1))
            path[anchor - lo + 1:] = K.markov_walk(s0, self._cdf, u)
        if lo < anchor:
            u = K.uniforms(K.derive_keys(self.seed, streams, self.SLOT_BACKWARD), np.arange(anchor - 1, lo - 1, -1))
            back = K.markov_walk(s0, self._cdf, u)
            path[: anchor - lo] = back[::-1]
        return path[indices - lo]

    def _fields(self, indices, streams):
        s = self.states(indices, streams)
        return {"z": self.values[s], "state": s}

    def _value(self, entry, index, stream):
        return float(entry["z"])

    def describe(self):
        return {
            "kind": self.kind,
            "seed": self.seed,
            "P": self.P.tolist(),
            "values": self.values.tolist(),
            "floor": self.floor,
        }


def stationary_law(P) -> np.ndarray:
    P = np.asarray(P, dtype=np.float64)
    w, v = np.linalg.eig(P.T)
    k = int(np.argmin(np.abs(w - 1.0)))
    pi = np.real(v[:, k])
    pi = np.abs(pi) / np.abs(pi).sum()
    return pi


def _row_cdf(P):
    cdf = np.cumsum(P, axis=1)
    cdf[:, -1] = 1.0
    return cdf


def _as_process(src, seed: int) -> DrivingProcess:
    if isinstance(src, DrivingProcess):
        return src
    if isinstance(src, Dist):
        return IIDProcess(src, seed=seed)
    raise TypeError(f"expected a Dist or DrivingProcess, got {type(src).__name__}")


class QueueTrafficProcess(DrivingProcess):
    """Records ``(S_{i-1}, T_i)``: previous service time, current interarrival."""

    kind = "queueTraffic"

    def __init__(self, service, interarrival, seed: int = 0):
        super().__init__(seed)
        self.service = _as_process(service, K.derive_seed(self.seed, 1))
        self.interarrival = _as_process(interarrival, K.derive_seed(self.seed, 2))
        self.iid = self.service.iid and self.interarrival.iid
        self.time_reversible = self.service.time_reversible and self.interarrival.time_reversible
        floors = [f for f in (self.service.floor, self.interarrival.floor) if f is not None]
        self.floor = max(floors) + 1 if floors else None

    def _fields(self, indices, streams):
        S = self.service.sample(indices - 1, streams).fields["z"]
        T = self.interarrival.sample(indices, streams).fields["z"]
        if np.any(S < 0) or np.any(T < 0):
            raise ValueError("service and interarrival times must be non-negative")
        return {"S": S, "T": T}

    def _value(self, entry, index, stream):
        return QueuePair(float(entry["S"]), float(entry["T"]))

    def describe(self):
        return {
            "kind": self.kind,
            "seed": self.seed,
            "service": self.service.describe(),
            "interarrival": self.interarrival.describe(),
        }


class LangevinTrafficProcess(DrivingProcess):
    """Records ``(Y_{i-1}, N_i)``: data vector and Gaussian innovation."""

    kind = "langevinTraffic"

    def __init__(self, data, dim: int, noise: DrivingProcess | None = None, seed: int = 0):
        super().__init__(seed)
        if dim < 1:
            raise InvalidDimension("dim must be >= 1")
        self.dim = int(dim)
        self.data = _as_process(data, K.derive_seed(self.seed, 1))
        self.noise = noise if noise is not None else IIDProcess(Normal(), K.derive_seed(self.seed, 2), dim=self.dim)
        self.iid = self.data.iid and self.noise.iid
        self.time_reversible = self.data.time_reversible and self.noise.time_reversible

    def _fields(self, indices, streams):
        Y = self.data.sample(indices - 1, streams).fields["z"]
        if Y.ndim == 2:
            Y = Y[..., None]
        N = self.noise.sample(indices, streams).fields["z"]
        if N.ndim == 2:
            N = N[..., None]
        if N.shape[-1] != self.dim:
            raise InvalidDimension("noise dimension does not match")
        return {"Y": Y, "N": N}

    def _value(self, entry, index, stream):
        return LangevinPair(np.array(entry["Y"]), np.array(entry["N"]))

    def describe(self):
        return {
            "kind": self.kind,
            "seed": self.seed,
            "dim": self.dim,
            "data": self.data.describe(),
            "noise": self.noise.describe(),
        }


# ---------------------------------------------------------------------------
# matrix pairs (A_n, B_n)


class MatrixPairProcess(DrivingProcess):
    """Random pairs ``(A_n, B_n)`` with ``A_n`` d x d and ``B_n`` in R^d."""

    kind = "matrixPair"

    def __init__(self, law: "MatrixLaw", seed: int = 0):
        super().__init__(seed)
        self.law = law
        self.dim = law.dim
        self.iid = law.iid
        self.time_reversible = law.time_reversible

    def _fields(self, indices, streams):
        A, B = self.law.sample(self.seed, indices, streams)
        return {"A": A, "B": B}

    def _value(self, entry, index, stream):
        return MatrixPair(np.array(entry["A"]), np.array(entry["B"]))

    def describe(self):
        return {"kind": self.kind, "seed": self.seed, "law": self.law.describe()}


class MatrixLaw:
    dim = 1
    iid = True
    time_reversible = True

    def sample(self, seed, indices, streams):
        raise NotImplementedError

    def describe(self):
        raise NotImplementedError


class AffineLaw(MatrixLaw):
    """Independent laws for ``A_n`` and ``B_n``.

    ``A`` is one of
      * ``("constant", M)``
      * ``("scaled", M, src)``: ``s_n M`` with ``s_n`` from a Dist or scalar process
      * ``("cycle", [M0, M1, ...])``: deterministic cycle with a random phase per stream
      * ``("entrywise", dist)``: i.i.d. entries
    ``B`` is one of ``("constant", v)``, ``("iid", dist)`` or ``("scaled", v, src)``.
    """

    def __init__(self, dim: int, A, B):
        if dim < 1:
            raise InvalidDimension("dim must be >= 1")
        self.dim = int(dim)
        self.A = self._check_A(A)
        self.B = self._check_B(B)
        flags = []
        for spec in (self.A, self.B):
            if spec[0] == "scaled":
                src = spec[2]
                flags.append((True, True) if isinstance(src, Dist) else (src.iid, src.time_reversible))
            elif spec[0] == "cycle":
                L = len(spec[1])
                flags.append((L == 1, L <= 2))
        self.iid = all(f[0] for f in flags)
        self.time_reversible = all(f[1] for f in flags)

    def _check_A(self, A):
        kind = A[0]
        d = self.dim
        if kind == "constant":
            M = np.asarray(A[1], dtype=np.float64).reshape(d, d)
            return ("constant", M)
        if kind == "scaled":
            M = np.asarray(A[1], dtype=np.float64).reshape(d, d)
            return ("scaled", M, A[2])
        if kind == "cycle":
            Ms = [np.asarray(M, dtype=np.float64).reshape(d, d) for M in A[1]]
            if not Ms:
                raise ValueError("cycle needs at least one matrix")
            return ("cycle", Ms)
        if kind == "entrywise":
            return ("entrywise", A[1])
        raise ValueError(f"unknown matrix law {kind!r}")

    def _check_B(self, B):
        kind = B[0]
        d = self.dim
        if kind == "constant":
            return ("constant", np.asarray(B[1], dtype=np.float64).reshape(d))
        if kind == "iid":
            return ("iid", B[1])
        if kind == "scaled":
            return ("scaled", np.asarray(B[1], dtype=np.float64).reshape(d), B[2])
        raise ValueError(f"unknown vector law {kind!r}")

    def sample(self, seed, indices, streams):
        T, R, d = indices.size, streams.size, self.dim
        sa, sb = K.derive_seed(seed, 11), K.derive_seed(seed, 12)
        kind = self.A[0]
        if kind == "constant":
            A = np.broadcast_to(self.A[1], (T, R, d, d)).copy()
        elif kind == "scaled":
            s = _as_process(self.A[2], sa).sample(indices, streams).fields["z"]
            A = s[..., None, None] * self.A[1]
        elif kind == "cycle":
            Ms = np.stack(self.A[1])
            L = Ms.shape[0]
            u = K.uniforms(K.derive_keys(sa, streams, 0), [0])[0]
            phase = np.minimum((u * L).astype(np.int64), L - 1)
            A = Ms[(indices[:, None] + phase[None, :]) % L]
        else:
            dist = self.A[1]
            n = max(dist.n_uniforms, 1)
            A = np.stack([_draw(dist, sa, indices, streams, c * n) for c in range(d * d)], axis=-1)
            A = A.reshape(T, R, d, d)
        kind = self.B[0]
        if kind == "constant":
            B = np.broadcast_to(self.B[1], (T, R, d)).copy()
        elif kind == "iid":
            dist = self.B[1]
            n = max(dist.n_uniforms, 1)
            B = np.stack([_draw(dist, sb, indices, streams, c * n) for c in range(d)], axis=-1)
        else:
            s = _as_process(self.B[2], sb).sample(indices, streams).fields["z"]
            B = s[..., None] * self.B[1]
        return A, B

    def describe(self):
        def enc(x):
            if isinstance(x, np.ndarray):
                return x.tolist()
            if isinstance(x, (Dist, DrivingProcess)):
                return x.describe()
            if isinstance(x, list):
                return [enc(y) for y in x]
            return x

        return {"type": "affine", "dim": self.dim, "A": [enc(a) for a in self.A], "B": [enc(b) for b in self.B]}


class RegressionLaw(MatrixLaw):
    """Least-squares pairs: ``g ~ N(0, s^2 I)``, ``A = g g^T``, ``B = g (g^T theta + e)``.

    ``E A = s^2 I`` so the averaged target is ``theta``.
    """

    def __init__(self, theta, noise_sd: float = 1.0, feature_sd: float = 1.0):
        self.theta = np.asarray(theta, dtype=np.float64).reshape(-1)
        self.dim = self.theta.size
        self.noise_sd = float(noise_sd)
        self.feature_sd = float(feature_sd)

    @property
    def mean_A(self):
        return self.feature_sd**2 * np.eye(self.dim)

    @property
    def mean_B(self):
        return self.mean_A @ self.theta

    def sample(self, seed, indices, streams):
        d = self.dim
        g = np.stack([_draw(Normal(0.0, self.feature_sd), seed, indices, streams, 2 * c) for c in range(d)], axis=-1)
        e = _draw(Normal(0.0, self.noise_sd), seed, indices, streams, 2 * d)
        A = g[..., :, None] * g[..., None, :]
        y = g @ self.theta + e
        return A, g * y[..., None]

    def describe(self):
        return {"type": "regression", "theta": self.theta.tolist(), "noise_sd": self.noise_sd, "feature_sd": self.feature_sd}


class DrivenLaw(MatrixLaw):
    """``A_n = (a0 + a1 W_n^2) I`` and ``B_n = (b0 + b1 W_n) 1`` for a scalar source ``W``."""

    def __init__(self, source: DrivingProcess, dim: int = 1, a0=0.0, a1=1.0, b0=0.0, b1=1.0):
        self.source = source
        self.dim = int(dim)
        self.a0, self.a1, self.b0, self.b1 = float(a0), float(a1), float(b0), float(b1)
        self.iid = source.iid
        self.time_reversible = source.time_reversible

    def sample(self, seed, indices, streams):
        w = self.source.sample(indices, streams).fields["z"]
        a = self.a0 + self.a1 * w * w
        A = a[..., None, None] * np.eye(self.dim)
        B = np.repeat((self.b0 + self.b1 * w)[..., None], self.dim, axis=-1)
        return A, B

    def describe(self):
        return {
            "type": "driven",
            "dim": self.dim,
            "source": self.source.describe(),
            "a0": self.a0,
            "a1": self.a1,
            "b0": self.b0,
            "b1": self.b1,
        }


# ---------------------------------------------------------------------------
# branching environment


class BranchingEnvironment(DrivingProcess):
    """Records for a d-type branching process with immigration.

    A scalar environment ``e_n`` (finite states) selects a mean matrix
    ``means[e_n]``; row ``j`` is the mean offspring vector of a type-``j``
    parent. Given the environment, parent ``i`` of type ``j`` at time ``n``
    has offspring counts toward each child type ``l`` drawn independently
    (Bernoulli or Poisson) from the hash of ``(seed, stream, n, i, j, l)``.
    Rows whose ``l_1`` mass exceeds ``cap`` are rescaled to ``cap``.
    Immigrants are independent Poisson counts per type.
    """

    kind = "branchingEnvironment"
    SLOT_OFFSPRING, SLOT_IMMIGRATION = 1, 2

    def __init__(self, dim: int, means, law: str = "bernoulli", immigration_means=None,
                 environment: DrivingProcess | None = None, cap: float | None = None, seed: int = 0):
        super().__init__(seed)
        if dim < 1:
            raise InvalidDimension("dimension must be >= 1")
        self.dim = d = int(dim)
        means = np.asarray(means, dtype=np.float64)
        if means.ndim == 2:
            means = means[None]
        if means.shape[1:] != (d, d):
            raise InvalidDimension(f"means must have shape (E, {d}, {d})")
        if np.any(means < 0):
            raise ValueError("offspring means must be non-negative")
        if law not in ("bernoulli", "poisson"):
            raise ValueError("law must be 'bernoulli' or 'poisson'")
        self.law_name = law
        self.law = K.LAW_BERNOULLI if law == "bernoulli" else K.LAW_POISSON
        self.cap = None if cap is None else float(cap)
        if self.cap is not None:
            rows = means.sum(axis=2, keepdims=True)
            scale = np.where(rows > self.cap, self.cap / np.where(rows > 0, rows, 1.0), 1.0)
            means = means * scale
        if self.law == K.LAW_BERNOULLI and np.any(means > 1.0):
            raise ValueError("Bernoulli offspring means must be <= 1")
        self.means = means
        self.immigration_means = (
            np.zeros(d) if immigration_means is None else np.asarray(immigration_means, dtype=np.float64).reshape(d)
        )
        self.environment = environment
        if means.shape[0] > 1 and environment is None:
            raise ValueError("several mean matrices need an environment process")
        env_iid = environment.iid if environment is not None else True
        env_rev = environment.time_reversible if environment is not None else True
        self.iid = env_iid
        self.time_reversible = env_rev
        self.floor = environment.floor if environment is not None else None

    @property
    def max_row_mass(self) -> float:
        return float(self.means.sum(axis=2).max())

    @property
    def immigration_mass(self) -> float:
        return float(self.immigration_means.sum())

    def environment_states(self, indices, streams) -> np.ndarray:
        if self.environment is None:
            return np.zeros((indices.size, streams.size), dtype=np.int64)
        f = self.environment.sample(indices, streams).fields
        s = f["state"] if "state" in f else f["z"].astype(np.int64)
        if s.min() < 0 or s.max() >= self.means.shape[0]:
            raise ValueError("environment state outside the mean table")
        return s

    def keys(self, streams):
        return (
            K.derive_keys(self.seed, streams, self.SLOT_OFFSPRING),
            K.derive_keys(self.seed, streams, self.SLOT_IMMIGRATION),
        )

    def _fields(self, indices, streams):
        return {"env": self.environment_states(indices, streams)}

    def _value(self, entry, index, stream):
        return BranchingRecord(self, stream, index, int(entry["env"]))

    def describe(self):
        return {
            "kind": self.kind,
            "seed": self.seed,
            "dim": self.dim,
            "law": self.law_name,
            "means": self.means.tolist(),
            "immigration_means": self.immigration_means.tolist(),
            "cap": self.cap,
            "environment": None if self.environment is None else self.environment.describe(),
        }


# ---------------------------------------------------------------------------
# constructors


def make_iid(dist: Dist, seed: int = 0, dim: int | None = None) -> IIDProcess:
    return IIDProcess(dist, seed=seed, dim=dim)


def make_honig(seed: int = 0) -> IIDProcess:
    """i.i.d. two-point multiplicative noise with ``E log Z = -2/3`` and ``E Z > 1``."""
    return IIDProcess(honig_law(), seed=seed, kind="twoPointHonig")


def make_moving_average(coeffs, innovation: Dist | None = None, seed: int = 0) -> MovingAverageProcess:
    return MovingAverageProcess(coeffs, innovation, seed)


def make_three_dependent(innovation: Dist | None = None, seed: int = 0) -> ThreeDependentProcess:
    return ThreeDependentProcess(innovation, seed)


def make_reversible_markov(P, values=None, seed: int = 0, floor: int | None = None) -> ReversibleMarkovProcess:
    return ReversibleMarkovProcess(P, values, seed, floor)


def make_queue_traffic(service, interarrival, seed: int = 0) -> QueueTrafficProcess:
    return QueueTrafficProcess(service, interarrival, seed)


def make_langevin_traffic(data, dim: int, noise: DrivingProcess | None = None, seed: int = 0) -> LangevinTrafficProcess:
    return LangevinTrafficProcess(data, dim, noise, seed)


def make_matrix_pair(law: MatrixLaw, seed: int = 0) -> MatrixPairProcess:
    return MatrixPairProcess(law, seed)


def make_branching_environment(d: int, offspring_means, law: str = "bernoulli", immigration_means=None,
                               environment: DrivingProcess | None = None, cap: float | None = None,
                               seed: int = 0) -> BranchingEnvironment:
    return BranchingEnvironment(d, offspring_means, law, immigration_means, environment, cap, seed)


def sample_at(p: DrivingProcess, i: int, stream: int = 0) -> Any:
    return p.sample_at(i, stream)
