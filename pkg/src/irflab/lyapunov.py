"""Lipschitz norms of composite maps, Lyapunov exponents and stability verdicts.

Every verdict is a 3-sigma statement: SATISFIED when the estimate clears the
threshold by three standard errors, VIOLATED when it misses by three, and
INCONCLUSIVE in between.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .engine import NONNEG, ModelSpec, _chunk_len
from .errors import MethodUnavailable
from .noise import DrivingProcess

EXACT = "exactMatrixNorm"
UPPER = "perStepFactorUpperBound"
LOWER = "sampledPairsLowerBound"
METHODS = (EXACT, UPPER, LOWER)

SATISFIED, VIOLATED, INCONCLUSIVE = "satisfied", "violated", "inconclusive"

THM_GEN_I, THM_GEN_II = "thmGen_i", "thmGen_ii"
ONE_STEP, DRIFT, LONG_RUN = "oneStep_con", "drift_Fo", "longRun"

# sampled-pairs defaults
PAIR_RADIUS = 10.0
PAIR_COUNT = 1000


@dataclass
class ConditionVerdict:
    condition: str
    status: str
    estimate: float
    stderr: float
    samples: int
    threshold: float = 0.0
    confidence: str = "3-sigma"
    details: dict = field(default_factory=dict)

    @property
    def satisfied(self) -> bool:
        return self.status == SATISFIED

    def as_dict(self) -> dict:
        return {
            "condition": self.condition,
            "status": self.status,
            "estimate": self.estimate,
            "stderr": self.stderr,
            "samples": self.samples,
            "threshold": self.threshold,
            "confidence": self.confidence,
            "details": self.details,
        }


def _below(condition, est, se, samples, threshold=0.0, details=None) -> ConditionVerdict:
    """Verdict for the claim ``est < threshold``."""
    if est + 3.0 * se < threshold:
        status = SATISFIED
    elif est - 3.0 * se >= threshold:
        status = VIOLATED
    else:
        status = INCONCLUSIVE
    return ConditionVerdict(condition, status, float(est), float(se), int(samples), threshold, details=details or {})


def _mean_se(x) -> tuple[float, float]:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.size < 2:
        return float(x.mean()), float("nan")
    return float(x.mean()), float(x.std(ddof=1) / np.sqrt(x.size))


# ---------------------------------------------------------------------------
# norms


def matrix_operator_norm(A, tol: float = 1e-10, max_iter: int = 100_000) -> float:
    """Spectral norm by power iteration on ``A^T A``.

    The start vector is ``(1, 2, ..., d)`` normalised plus ``(1, -1, 1, ...)
    * 1e-3``, a fixed choice with no special alignment to coordinate axes.
    Iteration stops when the Rayleigh quotient changes by less than
    ``tol`` relative to itself.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise ValueError("expected a matrix")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    if A.size == 0 or not np.any(A):
        return 0.0
    B = A.T @ A
    d = B.shape[0]
    v = np.arange(1.0, d + 1.0) + 1e-3 * (-1.0) ** np.arange(d)
    v /= np.linalg.norm(v)
    lam = float(v @ B @ v)
    for _ in range(max_iter):
        w = B @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            # start vector in the kernel; fall back to the largest column
            j = int(np.argmax(np.linalg.norm(B, axis=0)))
            w = B[:, j].copy()
            nw = np.linalg.norm(w)
        v = w / nw
        new = float(v @ B @ v)
        if abs(new - lam) <= tol * abs(new):
            lam = new
            break
        lam = new
    return float(np.sqrt(max(lam, 0.0)))


def _spectral(P):
    if P.shape[-1] == 1:
        return np.abs(P[..., 0, 0])
    return np.linalg.norm(P, ord=2, axis=(-2, -1))


def best_method(m: ModelSpec) -> str:
    if m.jacobian is not None:
        return EXACT
    if m.lipschitz is not None:
        return UPPER
    return LOWER


def _available(m: ModelSpec, method: str):
    if method == EXACT and m.jacobian is None:
        raise MethodUnavailable(f"{m.name} has no linear part for exact composite norms")
    if method == UPPER and m.lipschitz is None:
        raise MethodUnavailable(f"{m.name} has no per-step Lipschitz factors")
    if method not in METHODS:
        raise MethodUnavailable(f"unknown method {method!r}")


def _pair_points(m: ModelSpec, pairs: int, radius: float, seed: int):
    rng = np.random.default_rng(seed)
    if m.integer:
        X = rng.integers(0, int(radius) + 1, size=(pairs, m.dim))
        Y = rng.integers(0, int(radius) + 1, size=(pairs, m.dim))
        same = np.all(X == Y, axis=1)
        Y[same, 0] += 1
        return X, Y
    X = rng.normal(size=(2, pairs, m.dim))
    r = radius * rng.uniform(size=(2, pairs, 1)) ** (1.0 / m.dim)
    X = r * X / np.linalg.norm(X, axis=-1, keepdims=True)
    if m.state_space == NONNEG:
        X = np.abs(X)
    return X[0], X[1]


def log_composite_norms(m: ModelSpec, p: DrivingProcess, checkpoints, streams, method: str | None = None,
                        pairs: int = PAIR_COUNT, radius: float = PAIR_RADIUS, start: int = 1,
                        seed: int = 0) -> np.ndarray:
    """``log ||F_n o ... o F_1||`` at each ``n`` in ``checkpoints``; shape (len, R).

    The maps use the noise at indices ``start, start+1, ...``. ``method``
    selects exact matrix products (renormalised at every step), the sum of
    ``log K_z``, or the largest difference quotient over sampled pairs.
    """
    method = method or best_method(m)
    _available(m, method)
    checkpoints = np.asarray(checkpoints, dtype=np.int64)
    if checkpoints.size == 0 or checkpoints.min() < 1:
        raise ValueError("checkpoints must be >= 1")
    streams = np.atleast_1d(np.asarray(streams, dtype=np.int64))
    R = streams.size
    n = int(checkpoints.max())
    out = np.empty((checkpoints.size, R))

    if method == LOWER:
        X, Y = _pair_points(m, pairs, radius, seed)
        X0 = np.concatenate([np.tile(X, (R, 1)), np.tile(Y, (R, 1))])
        base = m.norm((X - Y).astype(np.float64))
        all_streams = np.tile(np.repeat(streams, pairs), 2)
        L = _chunk_len(p, all_streams.size)
        state = np.array(X0, dtype=np.int64 if m.integer else np.float64)
        for t0 in range(0, n, L):
            idx = np.arange(start + t0, start + min(n, t0 + L))
            path = m.path(state, p.sample(idx, all_streams))
            state = path[-1]
            for c, k in enumerate(checkpoints):
                if t0 < k <= t0 + idx.size:
                    s = path[k - t0]
                    q = m.norm((s[: R * pairs] - s[R * pairs:]).astype(np.float64)).reshape(R, pairs) / base
                    with np.errstate(divide="ignore"):
                        out[c] = np.log(q.max(axis=1))
        return out

    L = _chunk_len(p, R)
    acc = np.zeros(R)
    P = None
    for t0 in range(0, n, L):
        idx = np.arange(start + t0, start + min(n, t0 + L))
        f = p.sample(idx, streams).fields
        if method == UPPER:
            with np.errstate(divide="ignore"):
                run = acc + np.cumsum(np.log(m.lipschitz(f)), axis=0)
        else:
            J = np.asarray(m.jacobian(f), dtype=np.float64)
            J = np.broadcast_to(J, (idx.size, R, m.dim, m.dim))
            if m.dim == 1:
                with np.errstate(divide="ignore"):
                    run = acc + np.cumsum(np.log(np.abs(J[..., 0, 0])), axis=0)
            else:
                run = np.empty((idx.size, R))
                if P is None:
                    P = np.broadcast_to(np.eye(m.dim), (R, m.dim, m.dim)).copy()
                for t in range(idx.size):
                    P = J[t] @ P
                    s = np.linalg.norm(P, axis=(-2, -1))
                    with np.errstate(divide="ignore"):
                        nz = s > 0
                        run[t] = acc + np.log(np.where(nz, _spectral(P), 0.0))
                        acc = acc + np.log(np.where(nz, s, 1.0))
                    P = P / np.where(nz, s, 1.0)[:, None, None]
        for c, k in enumerate(checkpoints):
            if t0 < k <= t0 + idx.size:
                out[c] = run[k - t0 - 1]
        if method == UPPER or m.dim == 1:
            acc = run[-1]
    return out


@dataclass
class CompositeNorm:
    n: int
    lower: float
    upper: float | None
    exact: float | None

    def as_dict(self):
        return {"n": self.n, "lower": self.lower, "upper": self.upper, "exact": self.exact}


def composite_lipschitz(m: ModelSpec, p: DrivingProcess, n: int, stream: int = 0, pairs: int = PAIR_COUNT,
                        radius: float = PAIR_RADIUS, seed: int = 0) -> CompositeNorm:
    """Bounds on ``||F_n o ... o F_1||`` over one noise window.

    ``lower`` is the largest sampled difference quotient; ``upper`` is
    ``prod K_{Z_i}`` when factors exist; ``exact`` uses matrix products.
    """
    if n < 1:
        raise ValueError("n must be >= 1")

    def one(method):
        return float(np.exp(log_composite_norms(m, p, [n], [stream], method, pairs, radius, seed=seed)[0, 0]))

    return CompositeNorm(
        n,
        one(LOWER),
        one(UPPER) if m.lipschitz is not None else None,
        one(EXACT) if m.jacobian is not None else None,
    )


# ---------------------------------------------------------------------------
# Lyapunov exponent


@dataclass
class LyapunovEstimate:
    horizons: list
    averages: list  # E_n per horizon
    stderrs: list
    point_estimate: float
    standard_error: float
    method: str
    replicas: int

    def as_dict(self):
        return {
            "horizons": list(self.horizons),
            "averages": list(self.averages),
            "stderrs": list(self.stderrs),
            "point_estimate": self.point_estimate,
            "standard_error": self.standard_error,
            "method": self.method,
            "replicas": self.replicas,
        }


def estimate_lyapunov(m: ModelSpec, p: DrivingProcess, horizons, replicas: int = 1, method: str | None = None,
                      first_stream: int = 0, batches: int = 20, **pair_opts) -> LyapunovEstimate:
    """``E_n = (1/n) mean log ||F_n o ... o F_1||`` per horizon.

    Standard errors come from replica dispersion; with a single replica they
    come from ``batches`` consecutive batch increments of the log norm.
    """
    hz = [int(h) for h in horizons]
    if not hz or any(h < 1 for h in hz) or any(b <= a for a, b in zip(hz, hz[1:])):
        raise ValueError("horizons must be increasing and >= 1")
    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    method = method or best_method(m)
    streams = np.arange(first_stream, first_stream + replicas)
    n = hz[-1]
    cps = list(hz)
    use_batches = replicas == 1 and n >= 2 * batches
    if use_batches:
        edges = [n * b // batches for b in range(1, batches + 1)]
        cps = sorted(set(cps) | set(edges))
    logs = log_composite_norms(m, p, cps, streams, method, **pair_opts)
    at = {k: logs[i] for i, k in enumerate(cps)}
    averages, stderrs = [], []
    for h in hz:
        mean, se = _mean_se(at[h] / h)
        averages.append(mean)
        stderrs.append(se)
    if use_batches:
        seq = np.array([at[e][0] for e in edges])
        inc = np.diff(np.concatenate([[0.0], seq])) / np.diff(np.concatenate([[0], edges]))
        # the log norm is subadditive, so batch increments estimate the per-step rate
        stderrs[-1] = float(inc.std(ddof=1) / np.sqrt(batches))
    return LyapunovEstimate(hz, averages, stderrs, averages[-1], stderrs[-1], method, replicas)


# ---------------------------------------------------------------------------
# stability conditions


def hill_tail_index(x, fraction: float = 0.01, min_k: int = 10) -> tuple[float, int]:
    """Hill estimate of the tail index from the top ``fraction`` order statistics.

    Returns ``(alpha, k)``; ``alpha = inf`` when the top values are tied or
    there are too few positive values to estimate a tail.
    """
    x = np.sort(np.asarray(x, dtype=np.float64).reshape(-1))[::-1]
    x = x[x > 0]
    k = max(min_k, int(fraction * x.size))
    if x.size <= k:
        return float("inf"), 0
    logs = np.log(x[:k]) - np.log(x[k])
    h = logs.mean()
    return (float("inf") if h <= 0 else float(1.0 / h)), k


def check_theorem_gen(m: ModelSpec, p: DrivingProcess, n: int, samples: int = 10_000, method: str | None = None,
                      first_stream: int = 0, **pair_opts) -> tuple[ConditionVerdict, ConditionVerdict]:
    """Verdicts for ``E (log ||F_1||)^+ < inf`` and ``E log ||F_n o ... o F_1|| < 0``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    method = method or best_method(m)
    streams = np.arange(first_stream, first_stream + samples)
    cps = [1] if n == 1 else [1, n]
    logs = log_composite_norms(m, p, cps, streams, method, **pair_opts)
    pos = np.maximum(logs[0], 0.0)
    mean1, se1 = _mean_se(pos)
    alpha, k = hill_tail_index(pos)
    finite = bool(np.isfinite(mean1))
    if not finite:
        status = VIOLATED
    elif k == 0 or np.isinf(alpha) or alpha - 3.0 * alpha / np.sqrt(k) > 1.0:
        status = SATISFIED
    elif alpha + 3.0 * alpha / np.sqrt(k) < 1.0:
        status = VIOLATED
    else:
        status = INCONCLUSIVE
    v1 = ConditionVerdict(THM_GEN_I, status, mean1, se1, samples, float("inf"),
                          details={"tail_index": alpha, "tail_k": k, "method": method})
    En = logs[-1] / n
    mean, se = _mean_se(En)
    v2 = _below(THM_GEN_II, mean, se, samples, 0.0, {"n": n, "method": method})
    return v1, v2


def check_one_step(m: ModelSpec, p: DrivingProcess, samples: int = 100_000, first_stream: int = 0,
                   index: int = 1) -> ConditionVerdict:
    """Verdict for ``E log K_{Z_1} < 0``, with ``E |F(0, Z)|`` screened for finiteness."""
    if m.lipschitz is None:
        raise MethodUnavailable(f"{m.name} has no exact per-step Lipschitz factors")
    streams = np.arange(first_stream, first_stream + samples)
    blk = p.sample([index], streams)
    z = blk.at(0)
    with np.errstate(divide="ignore"):
        logK = np.log(np.asarray(m.lipschitz(z), dtype=np.float64))
    mean, se = _mean_se(logK)
    F0 = m.norm(m.step(m.zero(samples), z).astype(np.float64))
    f_mean, f_se = _mean_se(F0)
    v = _below(ONE_STEP, mean, se if np.isfinite(se) else 0.0, samples, 0.0,
               {"mean_abs_F0": f_mean, "mean_abs_F0_stderr": f_se})
    if not np.isfinite(f_mean) and v.status == SATISFIED:
        v.status = INCONCLUSIVE
    return v


@dataclass
class DriftFit:
    rho: float
    rho_stderr: float
    K: float
    K_stderr: float
    tail_slope: float
    tail_stderr: float
    probes: list
    declared: dict | None = None
    consistent: bool | None = None

    def as_dict(self):
        return {k: getattr(self, k) for k in ("rho", "rho_stderr", "K", "K_stderr", "tail_slope", "tail_stderr",
                                              "probes", "declared", "consistent")}


def default_probes(m: ModelSpec, count: int = 11, largest: float = 1024.0) -> np.ndarray:
    """States ``s * u`` along the all-ones direction with ``|u|_p = 1``, ``s`` geometric from 0."""
    scales = np.concatenate([[0.0], np.geomspace(1.0, largest, count - 1)])
    if m.integer:
        return np.round(scales)[:, None].astype(np.int64) * np.ones(m.dim, dtype=np.int64)
    u = np.ones(m.dim) / m.norm(np.ones(m.dim))
    return scales[:, None] * u


def check_drift(m: ModelSpec, p: DrivingProcess, probes=None, samples: int = 2000, first_stream: int = 0,
                index: int = 1) -> tuple[DriftFit, ConditionVerdict]:
    """Fit ``E |F(x, Z)|_p ~ rho |x|_p + K`` over probe states.

    Every probe sees the same ``samples`` noise draws; a least-squares line is
    fitted per draw and the replica spread gives the error bars. The verdict
    needs both the fitted slope and the slope between the two largest probes
    to be below 1: the latter catches maps that only contract near 0.
    """
    P = default_probes(m) if probes is None else np.asarray(probes)
    if P.ndim == 1:
        P = P[:, None]
    P = P.astype(np.int64 if m.integer else np.float64)
    xs = m.norm(P.astype(np.float64))
    if np.unique(xs).size < 2:
        raise ValueError("probe states need at least two distinct norms")
    streams = np.arange(first_stream, first_stream + samples)
    z = p.sample([index], np.tile(streams, P.shape[0])).at(0)
    X0 = np.repeat(P, samples, axis=0)
    Y = m.norm(m.step(X0, z).astype(np.float64)).reshape(P.shape[0], samples)
    xc = xs - xs.mean()
    slopes = (xc @ (Y - Y.mean(axis=0))) / (xc @ xc)
    intercepts = Y.mean(axis=0) - slopes * xs.mean()
    order = np.argsort(xs)
    hi, lo = order[-1], order[-2]
    tail = (Y[hi] - Y[lo]) / (xs[hi] - xs[lo])
    rho, rho_se = _mean_se(slopes)
    K, K_se = _mean_se(intercepts)
    t, t_se = _mean_se(tail)
    fit = DriftFit(rho, rho_se, K, K_se, t, t_se, P.tolist())
    if m.drift is not None:
        fit.declared = {"p": m.drift.p, "rho": m.drift.rho, "K": m.drift.K}
        fit.consistent = bool(rho <= m.drift.rho + 3 * rho_se + 1e-9 and K <= m.drift.K + 3 * K_se + 1e-9)
    worst, worst_se = (t, t_se) if t + 3 * t_se > rho + 3 * rho_se else (rho, rho_se)
    if rho + 3 * rho_se < 1.0 and t + 3 * t_se < 1.0:
        status = SATISFIED
    elif rho - 3 * rho_se > 1.0 + 1e-9 or t - 3 * t_se > 1.0 + 1e-9:
        status = VIOLATED
    else:
        status = INCONCLUSIVE
    verdict = ConditionVerdict(DRIFT, status, worst, worst_se, samples, 1.0, details=fit.as_dict())
    return fit, verdict


def check_longrun(m: ModelSpec, p: DrivingProcess, k_max: int = 16, replicas: int = 10_000,
                  method: str | None = None, first_stream: int = 0, **pair_opts) -> ConditionVerdict:
    """Root test ``limsup_k (E ||F_k o ... o F_1||)^{1/k} < 1``.

    The limsup is proxied by the largest root over ``k`` in ``(k_max/2, k_max]``.
    """
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    method = method or best_method(m)
    ks = np.arange(1, k_max + 1)
    streams = np.arange(first_stream, first_stream + replicas)
    logs = log_composite_norms(m, p, ks, streams, method, **pair_opts)
    R = logs.shape[1]
    top = logs.max(axis=1, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    w = np.exp(logs - top)  # norms scaled by their per-k maximum
    log_mean = np.log(w.mean(axis=1)) + top[:, 0]
    rel_se = w.std(axis=1, ddof=1) / np.sqrt(R) / np.maximum(w.mean(axis=1), 1e-300) if R > 1 else np.zeros(k_max)
    roots = np.exp(log_mean / ks)
    root_se = roots * rel_se / ks
    block = ks > k_max // 2
    j = int(np.argmax(np.where(block, roots, -np.inf)))
    v = _below(LONG_RUN, roots[j], root_se[j], replicas, 1.0,
               {"k": int(ks[j]), "roots": roots.tolist(), "root_stderrs": root_se.tolist(), "method": method})
    return v
