"""Hot loops: counter hashing, recursion scans and the branching step.

Every kernel has a loop form (compiled by numba when available) and a numpy
form that vectorises over replicas. Both forms perform the same floating point
operations in the same order, so the two backends agree bit-for-bit.
"""
import numpy as np

from ._backend import USE_NUMBA, njit

GAMMA = np.uint64(0x9E3779B97F4A7C15)
GAMMA2 = np.uint64(0xD1B54A32D192ED03)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_TWO_M53 = 2.0 ** -53

_MASK = (1 << 64) - 1


def mix64(z):
    """splitmix64 finaliser; works on uint64 scalars (numba) and arrays (numpy)."""
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def _mix64_int(z: int) -> int:
    z &= _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def derive_seed(seed: int, tag: int) -> int:
    """Child seed for a sub-process; pure function of (seed, tag)."""
    return _mix64_int(_mix64_int(seed + 0x9E3779B97F4A7C15) ^ ((tag * 0xD1B54A32D192ED03) & _MASK))


def derive_keys(seed: int, streams, slot: int) -> np.ndarray:
    """Per-stream 64-bit keys for one randomness slot of a process."""
    base = np.uint64(_mix64_int(_mix64_int(seed + 0x9E3779B97F4A7C15) ^ ((slot * 0x632BE59BD9B4E019) & _MASK)))
    s = np.asarray(streams, dtype=np.int64).astype(np.uint64)
    return mix64(mix64(base ^ (s * GAMMA2)))


# --- uniforms -------------------------------------------------------------


def _mix_s(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def _uniform_one(key, counter):
    h = _mix_s(_mix_s(key ^ (counter * GAMMA)))
    return (np.float64(h >> _S11) + 0.5) * _TWO_M53


def _uniforms_loop(keys, counters, out):
    for t in range(counters.size):
        c = counters[t]
        for r in range(keys.size):
            out[t, r] = _uniform_one(keys[r], c)
    return out


def _uniforms_np(keys, counters):
    h = mix64(mix64(keys[None, :] ^ (counters[:, None] * GAMMA)))
    return ((h >> _S11).astype(np.float64) + 0.5) * _TWO_M53


def uniforms(keys, counters) -> np.ndarray:
    """Open-interval uniforms ``u[t, r] = U(keys[r], counters[t])`` in (0, 1)."""
    keys = np.ascontiguousarray(keys, dtype=np.uint64)
    counters = np.ascontiguousarray(np.asarray(counters, dtype=np.int64).astype(np.uint64))
    if USE_NUMBA:
        out = np.empty((counters.size, keys.size))
        return _uniforms_nb(keys, counters, out)
    return _uniforms_np(keys, counters)


# --- scalar recursions ----------------------------------------------------


def _lindley_loop(x0, z, out):
    # time-major so reads and writes stay contiguous
    T, R = z.shape
    for r in range(R):
        out[0, r] = x0[r]
    for t in range(T):
        for r in range(R):
            x = out[t, r] + z[t, r]
            out[t + 1, r] = 0.0 if x < 0.0 else x
    return out


def _lindley_np(x0, z):
    T, R = z.shape
    out = np.empty((T + 1, R))
    x = x0.copy()
    out[0] = x
    for t in range(T):
        x = x + z[t]
        x[x < 0.0] = 0.0
        out[t + 1] = x
    return out


def _lindley_ladder_loop(z, out):
    # z[t] is the noise at time -N+1+t; chain j starts at t = N-1-j, so it
    # runs j+1 steps and out[n-1] = x[n-1] = X^{(-n)}_0(0)
    N = z.size
    x = np.zeros(N)
    for t in range(N):
        for j in range(N - 1 - t, N):
            v = x[j] + z[t]
            x[j] = v if v > 0.0 else 0.0
    for n in range(N):
        out[n] = x[n]
    return out


def _lindley_ladder_np(z):
    N = z.size
    x = np.zeros(N)
    for t in range(N):
        seg = x[N - 1 - t:] + z[t]
        seg[seg < 0.0] = 0.0
        x[N - 1 - t:] = seg
    return x


def _scalar_mult_loop(x0, a, out):
    T, R = a.shape
    for r in range(R):
        out[0, r] = x0[r]
    for t in range(T):
        for r in range(R):
            out[t + 1, r] = a[t, r] * out[t, r]
    return out


def _scalar_mult_np(x0, a):
    T, R = a.shape
    out = np.empty((T + 1, R))
    out[0] = x0
    x = x0.copy()
    for t in range(T):
        x = a[t] * x
        out[t + 1] = x
    return out


# --- vector recursions ----------------------------------------------------


def _affine_loop(x0, A, B, out):
    # x <- A x + B with the matrix-vector sum accumulated left to right
    T, R, d = B.shape
    for r in range(R):
        for i in range(d):
            out[0, r, i] = x0[r, i]
    for t in range(T):
        for r in range(R):
            for i in range(d):
                acc = A[t, r, i, 0] * out[t, r, 0]
                for k in range(1, d):
                    acc += A[t, r, i, k] * out[t, r, k]
                out[t + 1, r, i] = acc + B[t, r, i]
    return out


def _matvec_np(A, x):
    y = A[..., 0] * x[:, None, 0]
    for k in range(1, x.shape[1]):
        y = y + A[..., k] * x[:, None, k]
    return y


def _affine_np(x0, A, B):
    T, R, d = B.shape
    out = np.empty((T + 1, R, d))
    out[0] = x0
    x = x0
    for t in range(T):
        x = _matvec_np(A[t], x) + B[t]
        out[t + 1] = x
    return out


def _gradient_loop(x0, A, V, N, lam, scale, out):
    # x <- x - lam * (A x - V) + scale * N
    T, R, d = V.shape
    for r in range(R):
        for i in range(d):
            out[0, r, i] = x0[r, i]
    for t in range(T):
        for r in range(R):
            for i in range(d):
                acc = A[t, r, i, 0] * out[t, r, 0]
                for k in range(1, d):
                    acc += A[t, r, i, k] * out[t, r, k]
                out[t + 1, r, i] = out[t, r, i] - lam * (acc - V[t, r, i]) + scale * N[t, r, i]
    return out


def _gradient_np(x0, A, V, N, lam, scale):
    T, R, d = V.shape
    out = np.empty((T + 1, R, d))
    out[0] = x0
    x = x0
    for t in range(T):
        x = x - lam * (_matvec_np(A[t], x) - V[t]) + scale * N[t]
        out[t + 1] = x
    return out


# --- finite-state walks ---------------------------------------------------


def _walk_loop(s0, cdf, u, out):
    T, R = u.shape
    S = cdf.shape[1]
    for t in range(T):
        for r in range(R):
            s = s0[r] if t == 0 else out[t - 1, r]
            k = 0
            while k < S - 1 and u[t, r] >= cdf[s, k]:
                k += 1
            out[t, r] = k
    return out


def _walk_np(s0, cdf, u):
    T, R = u.shape
    S = cdf.shape[1]
    out = np.empty((T, R), dtype=np.int64)
    s = s0.copy()
    for t in range(T):
        s = np.minimum((u[t][:, None] >= cdf[s]).sum(axis=1), S - 1)
        out[t] = s
    return out


# --- branching ------------------------------------------------------------

LAW_BERNOULLI = 0
LAW_POISSON = 1


def _poisson_inv(mu, u):
    if mu <= 0.0:
        return 0
    p = np.exp(-mu)
    F = p
    k = 0
    while u > F and k < 10000:
        k += 1
        p = p * mu / k
        F = F + p
    return k


def _gwi_loop(x0, env, times, off_keys, imm_keys, means, law, imm_means, out):
    # offspring of individual i (1-based) of type j at time n, child type l,
    # keyed by (stream key, n, (i * d + j) * d + l)
    T, R = env.shape
    d = x0.shape[1]
    for r in range(R):
        for j in range(d):
            out[0, r, j] = x0[r, j]
        for t in range(T):
            n = times[t]
            e = env[t, r]
            kn = _mix_s(off_keys[r] ^ (n * GAMMA))
            ki = _mix_s(imm_keys[r] ^ (n * GAMMA))
            for l in range(d):
                out[t + 1, r, l] = _poisson_inv(imm_means[l], _uniform_one(ki, np.uint64(l)))
            for j in range(d):
                xj = out[t, r, j]
                for i in range(1, xj + 1):
                    for l in range(d):
                        mu = means[e, j, l]
                        u = _uniform_one(kn, np.uint64((i * d + j) * d + l))
                        if law == LAW_BERNOULLI:
                            c = 1 if u < mu else 0
                        else:
                            c = _poisson_inv(mu, u)
                        out[t + 1, r, l] += c
    return out


def poisson_inv_np(mu, u):
    """Vectorised Poisson inversion matching the scalar kernel."""
    mu = np.broadcast_to(np.asarray(mu, dtype=np.float64), np.shape(u))
    u = np.asarray(u, dtype=np.float64)
    p = np.exp(-mu)
    F = p.copy()
    k = np.zeros(u.shape, dtype=np.int64)
    active = (u > F) & (mu > 0.0)
    step = 0
    while active.any() and step < 10000:
        step += 1
        p = np.where(active, p * mu / np.maximum(k + 1, 1), p)
        k = np.where(active, k + 1, k)
        F = np.where(active, F + p, F)
        active = active & (u > F)
    k[mu <= 0.0] = 0
    return k


def _gwi_np(x0, env, times, off_keys, imm_keys, means, law, imm_means):
    T, R = env.shape
    d = x0.shape[1]
    out = np.empty((T + 1, R, d), dtype=np.int64)
    out[0] = x0
    ls = np.arange(d, dtype=np.uint64)
    for t in range(T):
        n = times[t : t + 1]
        kn = mix64(off_keys ^ (n * GAMMA))
        ki = mix64(imm_keys ^ (n * GAMMA))
        ui = _uniforms_from_keys(ki[:, None], ls[None, :])
        nxt = poisson_inv_np(imm_means[None, :], ui)
        x = out[t]
        counts = x.reshape(-1)
        total = int(counts.sum())
        if total:
            rr = np.repeat(np.repeat(np.arange(R), d), counts)
            jj = np.repeat(np.tile(np.arange(d), R), counts)
            starts = np.repeat(np.cumsum(counts) - counts, counts)
            ii = np.arange(total) - starts + 1
            e = env[t][rr]
            for l in range(d):
                sub = ((ii * d + jj) * d + l).astype(np.uint64)
                u = _uniforms_from_keys(kn[rr], sub)
                mu = means[e, jj, l]
                if law == LAW_BERNOULLI:
                    c = (u < mu).astype(np.int64)
                else:
                    c = poisson_inv_np(mu, u)
                nxt[:, l] += np.bincount(rr, weights=c, minlength=R).astype(np.int64)
        out[t + 1] = nxt
    return out


def _uniforms_from_keys(keys, counters):
    h = mix64(mix64(keys ^ (counters * GAMMA)))
    return ((h >> _S11).astype(np.float64) + 0.5) * _TWO_M53


def branching_uniform(key, n, sub):
    """Uniform for (stream key, time n, sub-counter); matches the kernels."""
    n = np.array([n], dtype=np.int64).astype(np.uint64)
    kn = mix64(np.array([key], dtype=np.uint64) ^ (n * GAMMA))
    return float(_uniforms_from_keys(kn, np.array([sub], dtype=np.uint64))[0])


# --- dispatch -------------------------------------------------------------

if USE_NUMBA:
    # rebind scalar helpers first so the loop kernels resolve jitted globals
    _mix_s = njit(_mix_s)
    _uniform_one = njit(_uniform_one)
    _poisson_inv = njit(_poisson_inv)
    _uniforms_nb = njit(_uniforms_loop)
    _lindley_nb = njit(_lindley_loop)
    _lindley_ladder_nb = njit(_lindley_ladder_loop)
    _scalar_mult_nb = njit(_scalar_mult_loop)
    _affine_nb = njit(_affine_loop)
    _gradient_nb = njit(_gradient_loop)
    _walk_nb = njit(_walk_loop)
    _gwi_nb = njit(_gwi_loop)


def lindley_scan(x0, z):
    """Paths of ``x <- (x + z)^+`` for each replica; returns shape (T+1, R)."""
    x0 = np.ascontiguousarray(x0, dtype=np.float64)
    z = np.ascontiguousarray(z, dtype=np.float64)
    if USE_NUMBA:
        return _lindley_nb(x0, z, np.empty((z.shape[0] + 1, z.shape[1])))
    return _lindley_np(x0, z)


def lindley_ladder(z):
    """All negative-iteration values X^{(-n)}_0(0), n = 1..N, in one pass.

    ``z`` holds the noise at times -N+1, ..., 0 in that order.
    """
    z = np.ascontiguousarray(z, dtype=np.float64)
    if USE_NUMBA:
        return _lindley_ladder_nb(z, np.empty(z.size))
    return _lindley_ladder_np(z)


def scalar_mult_scan(x0, a):
    x0 = np.ascontiguousarray(x0, dtype=np.float64)
    a = np.ascontiguousarray(a, dtype=np.float64)
    if USE_NUMBA:
        return _scalar_mult_nb(x0, a, np.empty((a.shape[0] + 1, a.shape[1])))
    return _scalar_mult_np(x0, a)


def affine_scan(x0, A, B):
    """Paths of ``x <- A x + B``; x0 (R, d), A (T, R, d, d), B (T, R, d)."""
    x0 = np.ascontiguousarray(x0, dtype=np.float64)
    A = np.ascontiguousarray(A, dtype=np.float64)
    B = np.ascontiguousarray(B, dtype=np.float64)
    if USE_NUMBA:
        T, R, d = B.shape
        return _affine_nb(x0, A, B, np.empty((T + 1, R, d)))
    return _affine_np(x0, A, B)


def gradient_scan(x0, A, V, N, lam, scale):
    """Paths of ``x <- x - lam (A x - V) + scale N``."""
    x0 = np.ascontiguousarray(x0, dtype=np.float64)
    A = np.ascontiguousarray(A, dtype=np.float64)
    V = np.ascontiguousarray(V, dtype=np.float64)
    N = np.ascontiguousarray(N, dtype=np.float64)
    if USE_NUMBA:
        T, R, d = V.shape
        return _gradient_nb(x0, A, V, N, float(lam), float(scale), np.empty((T + 1, R, d)))
    return _gradient_np(x0, A, V, N, float(lam), float(scale))


def markov_walk(s0, cdf, u):
    """Finite-state walk: ``s_t`` = first k with ``u_t < cdf[s_{t-1}, k]``."""
    s0 = np.ascontiguousarray(s0, dtype=np.int64)
    cdf = np.ascontiguousarray(cdf, dtype=np.float64)
    u = np.ascontiguousarray(u, dtype=np.float64)
    if USE_NUMBA:
        return _walk_nb(s0, cdf, u, np.empty(u.shape, dtype=np.int64))
    return _walk_np(s0, cdf, u)


def gwi_scan(x0, env, times, off_keys, imm_keys, means, law, imm_means):
    """Paths of the branching recursion with individually keyed offspring."""
    x0 = np.ascontiguousarray(x0, dtype=np.int64)
    env = np.ascontiguousarray(env, dtype=np.int64)
    times = np.ascontiguousarray(np.asarray(times, dtype=np.int64).astype(np.uint64))
    off_keys = np.ascontiguousarray(off_keys, dtype=np.uint64)
    imm_keys = np.ascontiguousarray(imm_keys, dtype=np.uint64)
    means = np.ascontiguousarray(means, dtype=np.float64)
    imm_means = np.ascontiguousarray(imm_means, dtype=np.float64)
    if USE_NUMBA:
        T, R = env.shape
        out = np.zeros((T + 1, R, x0.shape[1]), dtype=np.int64)
        return _gwi_nb(x0, env, times, off_keys, imm_keys, means, int(law), imm_means, out)
    return _gwi_np(x0, env, times, off_keys, imm_keys, means, int(law), imm_means)
