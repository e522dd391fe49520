"""Forward, backward and negative iteration of random maps.

States are numpy arrays of shape ``(d,)`` for a single trajectory and
``(R, d)`` for a batch of replicas. A batch uses one stream id per replica;
two replicas given the same stream id see identical noise, which is how the
coupling operations share randomness.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import IndexBelowFloor, MonotoneDivergence, NotCoalesced, NotConverged, StateEscaped
from .noise import DrivingProcess, NoiseBlock

REAL, NONNEG, INTEGER = "real", "nonneg", "int"

# noise entries materialised per chunk; bounds memory of long runs
CHUNK_ELEMS = 1 << 21


@dataclass(frozen=True)
class Drift:
    """Foster-Lyapunov data: ``E |F(x, Z)|_p <= rho |x|_p + K``."""

    p: float
    rho: float
    K: float

    @property
    def moment_bound(self) -> float:
        return self.K / (1.0 - self.rho)


@dataclass(frozen=True)
class ModelSpec:
    """A random map ``F(x, z)`` with the metadata the checks rely on.

    ``apply`` acts on one state and one noise value. ``step`` acts on a batch
    ``X`` of shape ``(R, d)`` and one time slice of a :class:`NoiseBlock`.
    ``scan`` is an optional compiled path kernel returning ``(T + 1, R, d)``.
    ``lipschitz`` returns exact per-step factors ``K_z`` and ``jacobian`` the
    matrices of a linear part, when the family has them; both accept noise
    fields with any leading shape (a time slice or a whole block).
    """

    name: str
    dim: int
    apply: Callable
    step: Callable
    state_space: str = REAL
    monotone: bool = False
    lipschitz: Callable | None = None
    jacobian: Callable | None = None
    drift: Drift | None = None
    scan: Callable | None = None
    params: dict = field(default_factory=dict)

    @property
    def norm_p(self) -> float:
        return self.drift.p if self.drift is not None else 2.0

    @property
    def integer(self) -> bool:
        return self.state_space == INTEGER

    def zero(self, R: int | None = None) -> np.ndarray:
        dtype = np.int64 if self.integer else np.float64
        return np.zeros(self.dim if R is None else (R, self.dim), dtype=dtype)

    def as_state(self, v) -> np.ndarray:
        dtype = np.int64 if self.integer else np.float64
        return np.asarray(v, dtype=dtype).reshape(self.dim)

    def norm(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        p = self.norm_p
        if p == 2.0:
            return np.sqrt(np.sum(X * X, axis=-1))
        if p == 1.0:
            return np.sum(np.abs(X), axis=-1)
        return np.sum(np.abs(X) ** p, axis=-1) ** (1.0 / p)

    def path(self, x0, block: NoiseBlock) -> np.ndarray:
        """Path of the batch ``x0`` (R, d) through ``block``; shape (T+1, R, d)."""
        if self.scan is not None:
            return self.scan(x0, block)
        out = np.empty((len(block) + 1,) + x0.shape, dtype=x0.dtype)
        out[0] = x0
        X = x0
        for t in range(len(block)):
            X = self.step(X, block.at(t))
            out[t + 1] = X
        return out


@dataclass
class Trajectory:
    start_index: int
    values: np.ndarray  # (n + 1, d)

    def __len__(self):
        return self.values.shape[0]


@dataclass
class NegativeLadder:
    depths: list
    values_at_zero: list
    increments: list
    converged: bool = False
    vstar: np.ndarray | None = None

    @property
    def values(self) -> np.ndarray:
        return np.array(self.values_at_zero)


def _chunk_len(p: DrivingProcess, R: int) -> int:
    return max(1, CHUNK_ELEMS // max(R, 1))


def _check_finite(path, offset):
    if path.dtype.kind == "f" and not np.all(np.isfinite(path)):
        bad = int(np.argmax(~np.all(np.isfinite(path.reshape(path.shape[0], -1)), axis=1)))
        raise StateEscaped(offset + bad)


def propagate(m: ModelSpec, p: DrivingProcess, X0, indices, streams, on_chunk=None, chunk=None):
    """Push the batch ``X0`` through the noise at ``indices`` (in that order).

    ``indices`` may be a ``range``, which is materialised one chunk at a time.
    ``on_chunk(path, t0)`` receives each chunk path of shape (L+1, R, d)
    whose row 0 is the state before step ``t0``. Returns the final batch.
    """
    X = np.array(X0, dtype=np.int64 if m.integer else np.float64)
    streams = np.atleast_1d(np.asarray(streams, dtype=np.int64))
    if not isinstance(indices, range):
        indices = np.asarray(indices, dtype=np.int64)
    L = chunk or _chunk_len(p, streams.size)
    for t0 in range(0, len(indices), L):
        part = indices[t0:t0 + L]
        block = p.sample(np.arange(part.start, part.stop, part.step) if isinstance(part, range) else part, streams)
        path = m.path(X, block)
        _check_finite(path, t0)
        if on_chunk is not None:
            on_chunk(path, t0)
        X = path[-1].copy()
    return X


def _run_path(m, p, X0, indices, streams):
    parts = [np.array(X0, dtype=np.int64 if m.integer else np.float64)[None]]
    propagate(m, p, X0, indices, streams, on_chunk=lambda path, t0: parts.append(path[1:].copy()))
    return np.concatenate(parts, axis=0)


def forward_iterate(m: ModelSpec, p: DrivingProcess, v, n: int, stream: int = 0) -> Trajectory:
    """``X_0 = v`` and ``X_{k+1} = F(X_k, Z_{k+1})`` for ``k < n``."""
    if n < 0:
        raise ValueError("horizon must be non-negative")
    x0 = m.as_state(v)[None]
    path = _run_path(m, p, x0, np.arange(1, n + 1), [stream])
    return Trajectory(0, path[:, 0, :])


def backward_iterate(m: ModelSpec, p: DrivingProcess, v, n: int, stream: int = 0) -> np.ndarray:
    """``F(...F(F(v, Z_n), Z_{n-1})..., Z_1)``: the noise at index 1 acts last."""
    if n < 0:
        raise ValueError("horizon must be non-negative")
    x0 = m.as_state(v)[None]
    return propagate(m, p, x0, range(n, 0, -1), [stream])[0]


def negative_iterate(m: ModelSpec, p: DrivingProcess, k: int, n: int = 0, stream: int = 0) -> np.ndarray:
    """``X^{(k)}_n``: start from 0 at time ``k`` and apply ``Z_{k+1}, ..., Z_n``."""
    if k > 0 or k > n:
        raise ValueError("need k <= 0 and k <= n")
    return propagate(m, p, m.zero(1), range(k + 1, n + 1), [stream])[0]


def forward_batch(m: ModelSpec, p: DrivingProcess, X0, n: int, streams, start: int = 1) -> np.ndarray:
    """Final states after ``n`` steps for a batch, noise indices ``start .. start+n-1``."""
    return propagate(m, p, X0, range(start, start + n), streams)


def backward_batch(m: ModelSpec, p: DrivingProcess, X0, n: int, streams) -> np.ndarray:
    return propagate(m, p, X0, range(n, 0, -1), streams)


# ---------------------------------------------------------------------------
# negative iteration towards V*


class _NegativeNoise:
    """Noise for indices ``-D+1 .. 0`` that grows towards the past on demand."""

    def __init__(self, p, streams):
        self.p = p
        self.streams = streams
        self.depth = 0
        self.fields = None
        self.indices = np.empty(0, dtype=np.int64)

    def ensure(self, depth):
        if depth <= self.depth:
            return
        new_idx = np.arange(-depth + 1, -self.depth + 1)
        blk = self.p.sample(new_idx, self.streams)
        if self.fields is None:
            self.fields = blk.fields
        else:
            self.fields = {k: np.concatenate([blk.fields[k], self.fields[k]]) for k in self.fields}
        self.indices = np.concatenate([new_idx, self.indices])
        self.depth = depth

    def last(self, n) -> NoiseBlock:
        s = self.depth - n
        return NoiseBlock(self.p, self.indices[s:], self.streams, {k: v[s:] for k, v in self.fields.items()})


def _value_at_zero(m, noise, n, R):
    return m.path(m.zero(R), noise.last(n))[-1]


def _doubling(max_depth):
    n = 1
    while n <= max_depth:
        yield n
        n *= 2


def estimate_vstar(m: ModelSpec, p: DrivingProcess, tol: float = 1e-9, max_depth: int = 1 << 20,
                   stream: int = 0, min_depth: int = 32, ceiling: float | None = None) -> NegativeLadder:
    """Deepen ``X^{(-n)}_0(0)`` over ``n = 1, 2, 4, ...`` until it settles.

    Real states settle when the increment across a doubling block is below
    ``tol``; integer states when the value is unchanged across the block,
    which for monotone maps pins every intermediate depth too. Either way
    two consecutive settled blocks and ``n >= min_depth`` are required.
    """
    if max_depth < 1:
        raise ValueError("max_depth must be >= 1")
    noise = _NegativeNoise(p, np.array([stream]))
    ladder = NegativeLadder([], [], [])
    streak = 0
    for n in _doubling(max_depth):
        try:
            noise.ensure(n)
        except IndexBelowFloor as exc:
            # sources without backward access stop the deepening here
            raise NotConverged(ladder.depths[-1] if ladder.depths else 0, ladder,
                               message=f"reached the source floor {exc.floor} before converging") from exc
        val = _value_at_zero(m, noise, n, 1)[0]
        _check_finite(val[None], n)
        if ladder.values_at_zero:
            prev = ladder.values_at_zero[-1]
            inc = float(m.norm(val.astype(np.float64) - prev))
            ladder.increments.append(inc)
            settled = inc == 0.0 if m.integer else inc < tol
            streak = streak + 1 if settled else 0
        ladder.depths.append(n)
        ladder.values_at_zero.append(val)
        if ceiling is not None and m.monotone and float(m.norm(val.astype(np.float64))) > ceiling:
            raise MonotoneDivergence(n, val, ceiling, ladder)
        if streak >= 2 and n >= min_depth:
            ladder.converged = True
            ladder.vstar = val
            return ladder
    raise NotConverged(max_depth, ladder)


def ladder_values(m: ModelSpec, p: DrivingProcess, depths, stream: int = 0) -> np.ndarray:
    """``X^{(-n)}_0(0)`` for each requested depth, shape (len(depths), d)."""
    depths = np.asarray(depths, dtype=np.int64)
    noise = _NegativeNoise(p, np.array([stream]))
    noise.ensure(int(depths.max()))
    return np.stack([_value_at_zero(m, noise, int(n), 1)[0] for n in depths])


def vstar_samples(m: ModelSpec, p: DrivingProcess, streams, tol: float = 1e-9, max_depth: int = 1 << 16,
                  min_depth: int = 32, chunk: int = 4096, return_depths: bool = False):
    """Converged ``V*`` for many independent streams, shape (R, d)."""
    streams = np.atleast_1d(np.asarray(streams, dtype=np.int64))
    out = np.empty((streams.size, m.dim), dtype=np.int64 if m.integer else np.float64)
    depths = np.empty(streams.size, dtype=np.int64)
    for c0 in range(0, streams.size, chunk):
        s = streams[c0:c0 + chunk]
        noise = _NegativeNoise(p, s)
        prev = None
        streak = np.zeros(s.size, dtype=np.int64)
        done_at = np.full(s.size, -1, dtype=np.int64)
        for n in _doubling(max_depth):
            noise.ensure(n)
            val = _value_at_zero(m, noise, n, s.size)
            _check_finite(val, n)
            if prev is not None:
                inc = m.norm(val.astype(np.float64) - prev)
                settled = inc == 0.0 if m.integer else inc < tol
                streak = np.where(settled, streak + 1, 0)
            newly = (streak >= 2) & (n >= min_depth) & (done_at < 0)
            out[c0:c0 + s.size][newly] = val[newly]
            done_at[newly] = n
            prev = val.astype(np.float64)
            if np.all(done_at >= 0):
                break
        if np.any(done_at < 0):
            raise NotConverged(max_depth, message=f"{int(np.sum(done_at < 0))} of {s.size} replicas "
                                                  f"did not converge by depth {max_depth}")
        depths[c0:c0 + s.size] = done_at
    return (out, depths) if return_depths else out


# ---------------------------------------------------------------------------
# coupling


def coupling_distances(m: ModelSpec, p: DrivingProcess, v, v2, n: int, streams) -> np.ndarray:
    """``|X_i(v) - X_i(v2)|`` for ``i = 0..n`` per stream, shape (n + 1, R)."""
    streams = np.atleast_1d(np.asarray(streams, dtype=np.int64))
    R = streams.size
    x, y = m.as_state(v), m.as_state(v2)
    X0 = np.concatenate([np.broadcast_to(x, (R, m.dim)), np.broadcast_to(y, (R, m.dim))])
    both = np.concatenate([streams, streams])
    dist = np.empty((n + 1, R))
    dist[0] = m.norm((x - y).astype(np.float64))

    def record(path, t0):
        diff = path[1:, :R].astype(np.float64) - path[1:, R:].astype(np.float64)
        dist[t0 + 1:t0 + path.shape[0]] = m.norm(diff)

    propagate(m, p, X0, range(1, n + 1), both, on_chunk=record)
    return dist


def coupling_distance(m: ModelSpec, p: DrivingProcess, v, v2, n: int, stream: int = 0) -> np.ndarray:
    """Distances between two trajectories driven by the same noise."""
    return coupling_distances(m, p, v, v2, n, [stream])[:, 0]


def coalescence_times(m: ModelSpec, p: DrivingProcess, v, v2, max_n: int, streams, window: int = 100) -> np.ndarray:
    """First index from which the two trajectories agree exactly; -1 if none by ``max_n``.

    Agreement must persist for ``window`` further steps to count.
    """
    streams = np.atleast_1d(np.asarray(streams, dtype=np.int64))
    R = streams.size
    total = max_n + window
    x, y = m.as_state(v), m.as_state(v2)
    X0 = np.concatenate([np.broadcast_to(x, (R, m.dim)), np.broadcast_to(y, (R, m.dim))])
    both = np.concatenate([streams, streams])
    equal = np.empty((total + 1, R), dtype=bool)
    equal[0] = np.all(x == y)

    def record(path, t0):
        equal[t0 + 1:t0 + path.shape[0]] = np.all(path[1:, :R] == path[1:, R:], axis=-1)

    propagate(m, p, X0, range(1, total + 1), both, on_chunk=record)
    # tau = first t <= max_n with equal[t : t + window + 1] all true
    neq = (~equal).astype(np.int64)
    csum = np.concatenate([np.zeros((1, R), dtype=np.int64), np.cumsum(neq, axis=0)])
    ts = np.arange(max_n + 1)
    breaks = csum[ts + window + 1] - csum[ts]
    ok = breaks == 0
    return np.where(ok.any(axis=0), np.argmax(ok, axis=0), -1)


def coalescence_time(m: ModelSpec, p: DrivingProcess, v, v2, max_n: int, stream: int = 0, window: int = 100) -> int:
    tau = int(coalescence_times(m, p, v, v2, max_n, [stream], window)[0])
    if tau < 0:
        raise NotCoalesced(max_n)
    return tau


# ---------------------------------------------------------------------------
# metadata validation


def _sample_states(m, rng, n, scale):
    if m.integer:
        return rng.integers(0, int(scale) + 1, size=(n, m.dim))
    X = rng.uniform(-scale, scale, size=(n, m.dim))
    return np.abs(X) if m.state_space == NONNEG else X


def lipschitz_violations(m: ModelSpec, p: DrivingProcess, samples: int = 1000, seed: int = 0,
                         scale: float = 10.0, slack: float = 1e-9) -> int:
    """Count sampled ``(x, x', z)`` with ``|F(x,z) - F(x',z)| > K_z |x - x'| + slack``."""
    if m.lipschitz is None:
        raise ValueError("model has no Lipschitz factor")
    rng = np.random.default_rng(seed)
    X, Y = _sample_states(m, rng, samples, scale), _sample_states(m, rng, samples, scale)
    streams = np.arange(samples)
    blk = p.sample([1], np.concatenate([streams, streams]))
    z = blk.at(0)
    out = m.step(np.concatenate([X, Y]), z)
    Kz = m.lipschitz(z)[:samples]
    lhs = np.sqrt(np.sum((out[:samples] - out[samples:]).astype(np.float64) ** 2, axis=-1))
    rhs = Kz * np.sqrt(np.sum((X - Y).astype(np.float64) ** 2, axis=-1)) + slack
    return int(np.sum(lhs > rhs))


def monotone_violations(m: ModelSpec, p: DrivingProcess, samples: int = 1000, seed: int = 0, scale: float = 10.0) -> int:
    """Count sampled ordered pairs ``x <= x'`` whose images are not ordered."""
    rng = np.random.default_rng(seed)
    X = _sample_states(m, rng, samples, scale)
    bump = _sample_states(m, rng, samples, scale)
    Y = X + np.abs(bump)
    streams = np.arange(samples)
    z = p.sample([1], np.concatenate([streams, streams])).at(0)
    out = m.step(np.concatenate([X, Y]), z)
    return int(np.sum(np.any(out[:samples] > out[samples:], axis=-1)))
