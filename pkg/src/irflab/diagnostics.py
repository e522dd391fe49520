"""Statistical checks built on the engine: SLLN, stationarity, forward/backward
equality in law, moment bounds and the two-point multiplicative counterexample.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .engine import (ModelSpec, backward_batch, coalescence_times, coupling_distances, forward_batch, propagate,
                     vstar_samples)
from .errors import GateViolated, MethodUnavailable
from .lyapunov import INCONCLUSIVE, SATISFIED, VIOLATED, ConditionVerdict
from .models.affine import make_multiplicative
from .noise import DrivingProcess, honig_law, make_honig

STATIONARITY, FORWARD_BACKWARD, SLLN, MOMENT_BOUND = "stationarity", "forwardBackward", "slln", "momentBound"


def _mean_se(x, axis=0):
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[axis]
    se = x.std(axis=axis, ddof=1) / np.sqrt(n) if n > 1 else np.full(np.delete(x.shape, axis), np.nan)
    return x.mean(axis=axis), se


def _lst(a):
    a = np.asarray(a)
    return a.tolist() if a.ndim else a.item()


# ---------------------------------------------------------------------------
# SLLN


@dataclass
class SllnResult:
    time_average: list
    time_average_stderr: list
    ensemble_mean: list
    ensemble_stderr: list
    abs_error: list
    horizon: int
    ensemble: int

    def as_dict(self):
        return asdict(self)


def time_average(m: ModelSpec, p: DrivingProcess, v, horizon: int, stream: int = 0, batches: int = 20):
    """``(1/n) sum_{i=1}^n X_i(v)`` and a batch-means standard error."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    edges = np.linspace(0, horizon, batches + 1).astype(np.int64)
    sums = np.zeros((batches, m.dim))
    cum = np.zeros(m.dim)
    marks = {}

    def acc(path, t0):
        nonlocal cum
        vals = path[1:, 0].astype(np.float64)
        cs = np.cumsum(vals, axis=0) + cum
        for b, e in enumerate(edges[1:]):
            if t0 < e <= t0 + vals.shape[0]:
                marks[b] = cs[e - t0 - 1]
        cum = cs[-1]

    propagate(m, p, m.as_state(v)[None], range(1, horizon + 1), [stream], on_chunk=acc)
    prev = np.zeros(m.dim)
    for b in range(batches):
        sums[b] = marks[b] - prev
        prev = marks[b]
    avg = cum / horizon
    if horizon >= 2 * batches:
        bm = sums / np.diff(edges)[:, None]
        se = bm.std(axis=0, ddof=1) / np.sqrt(batches)
    else:
        se = np.full(m.dim, np.nan)
    return avg, se


def slln_check(m: ModelSpec, p: DrivingProcess, v, horizon: int, stream: int = 0, ensemble: int = 1000,
               tol: float = 1e-9, max_depth: int = 1 << 16) -> SllnResult:
    """Time average of one trajectory against the mean of ``ensemble`` draws of V*.

    The V* draws use streams ``stream+1 .. stream+ensemble``, disjoint from
    the trajectory's stream.
    """
    avg, se = time_average(m, p, v, horizon, stream)
    vs = vstar_samples(m, p, np.arange(stream + 1, stream + 1 + ensemble), tol, max_depth)
    em, ese = _mean_se(vs.astype(np.float64))
    return SllnResult(_lst(avg), _lst(se), _lst(em), _lst(ese), _lst(np.abs(avg - em)), int(horizon), int(ensemble))


# ---------------------------------------------------------------------------
# stationarity


def stationarity_check(m: ModelSpec, p: DrivingProcess, streams: int = 1000, window: int = 100, start=None,
                       first_stream: int = 0, tol: float = 1e-9, max_depth: int = 1 << 16) -> ConditionVerdict:
    """Compare the first two moments of ``X_0, X_{w/2}, X_w`` across streams.

    Trajectories start at V* built from the noise at indices ``<= 0`` of each
    stream (or at the fixed state ``start``) and run on indices ``1..w``.
    Differences against time 0 are paired per stream; any difference beyond
    three standard errors fails the check.
    """
    if window < 2:
        raise ValueError("window must be >= 2")
    s = np.arange(first_stream, first_stream + streams)
    if start is None:
        X0 = vstar_samples(m, p, s, tol, max_depth)
    else:
        X0 = np.broadcast_to(m.as_state(start), (streams, m.dim)).copy()
    times = [0, window // 2, window]
    snaps = {0: X0.astype(np.float64)}

    def grab(path, t0):
        for t in times[1:]:
            if t0 < t <= t0 + path.shape[0] - 1:
                snaps[t] = path[t - t0].astype(np.float64)

    propagate(m, p, X0, np.arange(1, window + 1), s, on_chunk=grab)
    rows, worst, worst_se, failed = [], 0.0, 0.0, False
    for t in times[1:]:
        for k, f in ((1, lambda x: x), (2, lambda x: x * x)):
            d = f(snaps[t]) - f(snaps[0])
            mean, se = _mean_se(d)
            z = np.where(se > 0, np.abs(mean) / np.where(se > 0, se, 1.0), np.where(mean != 0, np.inf, 0.0))
            failed |= bool(np.any(z > 3.0))
            j = int(np.argmax(z))
            if z[j] >= worst:
                worst, worst_se = float(z[j]), float(se[j])
            rows.append({"time": t, "moment": k, "mean_diff": _lst(mean), "stderr": _lst(se)})
    means = {t: _lst(snaps[t].mean(axis=0)) for t in times}
    status = VIOLATED if failed else SATISFIED
    return ConditionVerdict(STATIONARITY, status, worst, worst_se, streams, 3.0,
                            details={"times": times, "means": means, "differences": rows,
                                     "start": "vstar" if start is None else _lst(m.as_state(start))})


# ---------------------------------------------------------------------------
# forward / backward equality in law


def ks_statistic(x, y) -> float:
    """Two-sample Kolmogorov-Smirnov statistic ``sup |F_x - F_y|``."""
    x = np.sort(np.asarray(x, dtype=np.float64))
    y = np.sort(np.asarray(y, dtype=np.float64))
    grid = np.concatenate([x, y])
    fx = np.searchsorted(x, grid, side="right") / x.size
    fy = np.searchsorted(y, grid, side="right") / y.size
    return float(np.max(np.abs(fx - fy)))


def ks_critical(n1: int, n2: int, alpha: float) -> float:
    """Asymptotic two-sample critical value ``sqrt(-log(alpha/2)/2) sqrt((n1+n2)/(n1 n2))``."""
    return float(np.sqrt(-0.5 * np.log(alpha / 2.0)) * np.sqrt((n1 + n2) / (n1 * n2)))


def forward_backward_compare(m: ModelSpec, p: DrivingProcess, n: int, samples: int = 10_000, v=None,
                             first_stream: int = 0, alpha: float = 0.01) -> ConditionVerdict:
    """Two-sample test that forward ``X_n`` and backward ``X~_n`` share a law.

    Forward samples use streams ``first .. first+samples-1``; backward samples
    use the next ``samples`` streams. One KS statistic per coordinate, each
    against the ``alpha / d`` critical value (union bound).
    """
    if not (p.iid or p.time_reversible):
        raise GateViolated("forward/backward equality is only asserted for i.i.d. or time-reversible noise")
    x0 = m.zero() if v is None else m.as_state(v)
    fs = np.arange(first_stream, first_stream + samples)
    bs = fs + samples
    X0 = np.broadcast_to(x0, (samples, m.dim)).copy()
    if n == 0:
        F, B = X0, X0.copy()
    else:
        F = forward_batch(m, p, X0, n, fs)
        B = backward_batch(m, p, X0, n, bs)
    stats = [ks_statistic(F[:, j], B[:, j]) for j in range(m.dim)]
    crit = ks_critical(samples, samples, alpha / m.dim)
    D = max(stats)
    status = SATISFIED if D < crit else VIOLATED
    return ConditionVerdict(FORWARD_BACKWARD, status, D, 0.0, 2 * samples, crit,
                            confidence=f"alpha={alpha}", details={"n": n, "statistics": stats})


# ---------------------------------------------------------------------------
# moment bound


def moment_bound_check(m: ModelSpec, p: DrivingProcess, replicas: int = 1000, first_stream: int = 0,
                       tol: float = 1e-9, max_depth: int = 1 << 16) -> ConditionVerdict:
    """``E |V*|_p`` from ``replicas`` V* draws against the drift bound ``K / (1 - rho)``."""
    if m.drift is None:
        raise MethodUnavailable(f"{m.name} carries no drift metadata")
    vs = vstar_samples(m, p, np.arange(first_stream, first_stream + replicas), tol, max_depth)
    est, se = _mean_se(m.norm(vs.astype(np.float64)))
    bound = m.drift.moment_bound
    status = SATISFIED if est - 3.0 * se <= bound else VIOLATED
    return ConditionVerdict(MOMENT_BOUND, status, float(est), float(se), replicas, bound,
                            details={"rho": m.drift.rho, "K": m.drift.K, "p": m.drift.p})


# ---------------------------------------------------------------------------
# coupling and coalescence summaries


def coupling_summary(m: ModelSpec, p: DrivingProcess, v, v2, n: int, streams, threshold: float = 1e-10) -> dict:
    """Decay of ``|X_i(v) - X_i(v2)|`` over shared noise.

    ``rate`` is the median over streams of ``log(d_k / d_0) / k`` at the last
    step ``k`` whose distance is still above ``threshold``; smaller distances
    are dominated by floating-point rounding.
    """
    streams = np.atleast_1d(np.asarray(streams, dtype=np.int64))
    D = coupling_distances(m, p, v, v2, n, streams)
    d0 = D[0]
    below = D[-1] < threshold
    pos = D > threshold
    last = np.where(pos.any(axis=0), D.shape[0] - 1 - np.argmax(pos[::-1], axis=0), 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        rates = np.where(last > 0, np.log(D[last, np.arange(D.shape[1])] / d0) / np.maximum(last, 1), np.nan)
    q = np.quantile(D[-1], [0.5, 0.9, 0.99])
    return {
        "n": int(n),
        "replicas": int(streams.size),
        "threshold": threshold,
        "fraction_below": float(below.mean()),
        "terminal_quantiles": {"q50": float(q[0]), "q90": float(q[1]), "q99": float(q[2])},
        "rate": float(np.nanmedian(rates)) if np.any(np.isfinite(rates)) else None,
    }


def coalescence_summary(m: ModelSpec, p: DrivingProcess, v, v2, max_n: int, streams, window: int = 100) -> dict:
    streams = np.atleast_1d(np.asarray(streams, dtype=np.int64))
    tau = coalescence_times(m, p, v, v2, max_n, streams, window)
    ok = tau >= 0
    q = np.quantile(tau[ok], [0.5, 0.9, 0.99]).tolist() if ok.any() else [None] * 3
    return {
        "max_n": int(max_n),
        "replicas": int(streams.size),
        "window": window,
        "success_rate": float(ok.mean()),
        "tau_quantiles": {"q50": q[0], "q90": q[1], "q99": q[2]},
    }


# ---------------------------------------------------------------------------
# the two-point multiplicative counterexample


@dataclass
class HonigResult:
    v: float
    replicas: int
    means: list  # E X_n, n = 0..n_max+1
    ratios: list  # E X_{n+1} / E X_n, n = 0..n_max
    ratio_stderrs: list
    exact_ratio: float
    coupling: dict
    log_rate: float | None = None
    log_rate_horizon: int | None = None
    notes: list = field(default_factory=list)

    def ratios_within(self, rel: float = 0.05) -> bool:
        return bool(np.all(np.abs(np.asarray(self.ratios) / self.exact_ratio - 1.0) <= rel))

    def as_dict(self):
        return asdict(self)


def _ratio_of_means(X, Y):
    """``mean(Y) / mean(X)`` with a delta-method standard error (paired samples)."""
    R = X.size
    mx, my = X.mean(), Y.mean()
    r = my / mx
    resid = (Y - r * X) / mx
    return float(r), float(resid.std(ddof=1) / np.sqrt(R))


def honig_divergence(v: float = 1.0, n_max: int = 8, replicas: int = 1_000_000, seed: int = 0,
                     coupling_n: int = 10_000, coupling_replicas: int = 1000, v2: float = 2.0,
                     log_horizon: int | None = 1_000_000, chunk: int = 250_000) -> HonigResult:
    """Mean growth ``E X_{n+1} / E X_n`` next to almost-sure coupling.

    The first ``replicas`` streams give ``X_0..X_{n_max+1}`` of ``x -> Z x``;
    the same run also reports the coupling distance between starts ``v`` and
    ``v2`` after ``coupling_n`` steps on ``coupling_replicas`` streams, and
    ``(1/n) log X_n`` along one long trajectory.
    """
    if v < 0:
        raise ValueError("v must be >= 0")
    p = make_honig(seed)
    m = make_multiplicative()
    steps = n_max + 1
    sums = np.zeros(steps + 1)
    paths = []
    for c0 in range(0, replicas, chunk):
        s = np.arange(c0, min(replicas, c0 + chunk))
        z = p.sample(np.arange(1, steps + 1), s).fields["z"]
        X = np.empty((steps + 1, s.size))
        X[0] = v
        X[1:] = v * np.cumprod(z, axis=0)
        paths.append(X)
    X = np.concatenate(paths, axis=1)
    means = X.mean(axis=1)
    if v == 0:
        ratios, ses = [float("nan")] * steps, [0.0] * steps
    else:
        pairs = [_ratio_of_means(X[n], X[n + 1]) for n in range(steps)]
        ratios, ses = [r for r, _ in pairs], [s for _, s in pairs]
    coup = coupling_summary(m, p, v, v2, coupling_n, np.arange(coupling_replicas))
    res = HonigResult(float(v), int(replicas), means.tolist(), ratios, ses, float(honig_law().mean), coup)
    if log_horizon and v > 0:
        # log X_n - log v is the sum of log Z_i; the product itself underflows
        z = p.sample(np.arange(1, log_horizon + 1), [replicas]).fields["z"][:, 0]
        res.log_rate = float(np.sum(np.log(z)) / log_horizon)
        res.log_rate_horizon = int(log_horizon)
    res.notes.append("mean estimates are dominated by rare high products; the ratio error grows like "
                     "(E Z^2 / (E Z)^2)^{n/2}")
    return res


# ---------------------------------------------------------------------------
# report


@dataclass
class StabilityReport:
    model: str
    verdicts: list = field(default_factory=list)
    coupling: dict | None = None
    coalescence: dict | None = None
    slln: dict | None = None
    moment: dict | None = None
    notes: list = field(default_factory=list)

    def add(self, verdict: ConditionVerdict):
        self.verdicts.append(verdict)

    @property
    def statuses(self) -> list:
        return [v.status for v in self.verdicts]

    def overall(self) -> str:
        s = self.statuses
        if any(x == VIOLATED for x in s):
            return VIOLATED
        if any(x == INCONCLUSIVE for x in s):
            return INCONCLUSIVE
        return SATISFIED

    def as_dict(self):
        return {
            "model": self.model,
            "verdicts": [v.as_dict() for v in self.verdicts],
            "coupling": self.coupling,
            "coalescence": self.coalescence,
            "slln": self.slln,
            "moment": self.moment,
            "notes": list(self.notes),
        }
