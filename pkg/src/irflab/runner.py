"""Experiment runner: validates a configuration, executes its checks and
assembles the report document.

A check returns a result mapping and a list of verdicts. Exit codes are a
function of the verdict statuses only: 0 when every verdict is satisfied,
1 when any is violated, 2 when some are inconclusive and none violated.
"""
from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from . import config as C
from . import diagnostics as D
from . import engine as E
from . import lyapunov as L
from .errors import ConfigError, GateViolated
from .lyapunov import INCONCLUSIVE, SATISFIED, VIOLATED, ConditionVerdict
from .models import lindley as lindley_model
from .models import sg as sg_model

REPORT_FORMAT = "irflab-report"
REPORT_VERSION = 1
DEFAULT_BUDGET = 600.0

EXIT_OK, EXIT_FAIL, EXIT_INCONCLUSIVE, EXIT_CONFIG, EXIT_BUDGET, EXIT_RUNTIME = 0, 1, 2, 3, 4, 5


def plain(x):
    """Recursively convert config containers and numpy values to plain Python."""
    if isinstance(x, dict):
        return {str(k): plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return plain(x.tolist())
    if isinstance(x, np.generic):
        x = x.item()
    if isinstance(x, float) and not np.isfinite(x):
        # strict JSON has no NaN or Infinity
        return "nan" if np.isnan(x) else ("inf" if x > 0 else "-inf")
    return x


@dataclass
class Context:
    seed: int
    model_cfg: dict
    noise_cfg: dict

    def build(self, f: C.Fields):
        """Model and noise for a check, honouring per-check overrides."""
        noise_cfg = f.raw("noise", self.noise_cfg)
        model_cfg = f.raw("model", self.model_cfg)
        if noise_cfg is None or model_cfg is None:
            raise ConfigError(f"{f.what}: needs model and noise blocks", f.line())
        process = C.build_noise(noise_cfg, self.seed)
        model = C.build_model(model_cfg, process)
        return model, process


@dataclass
class CheckOutcome:
    name: str
    label: str
    params: dict
    result: dict
    verdicts: list = field(default_factory=list)
    seconds: float = 0.0

    def as_dict(self):
        return {
            "check": self.name,
            "label": self.label,
            "params": plain(self.params),
            "result": plain(self.result),
            "verdicts": [plain(v.as_dict()) for v in self.verdicts],
        }


# ---------------------------------------------------------------------------
# expectations


def _parse_expect(expect, f: C.Fields) -> list:
    """``expect: {field: {value, tol | rel}}`` as (field, value, bound) triples."""
    if expect is None:
        return []
    ef = C.Fields(expect, f"{f.what}.expect", f.line("expect"))
    out = []
    for key in list(expect):
        spec = C.Fields(ef.raw(key), f"{f.what}.expect.{key}", ef.line(key))
        value = spec.get("value", float)
        tol = spec.get("tol", float, None, C.nonneg)
        rel = spec.get("rel", float, None, C.nonneg)
        spec.done()
        if (tol is None) == (rel is None):
            raise ConfigError(f"{spec.what}: give exactly one of tol or rel", spec.line())
        out.append((key, value, tol if tol is not None else rel * abs(value), ef.line(key)))
    ef.done()
    return out


def _expect_verdicts(specs, result, what) -> list:
    out = []
    for key, value, bound, line in specs:
        if key not in result:
            raise ConfigError(f"{what}.expect: result has no field {key!r}", line)
        got = np.asarray(result[key], dtype=np.float64)
        err = np.abs(got - value)
        ok = bool(np.all(err <= bound))
        out.append(ConditionVerdict(f"expect:{key}", SATISFIED if ok else VIOLATED, float(np.max(err)), 0.0,
                                    int(result.get("samples", 0) or 0), float(bound),
                                    confidence="tolerance", details={"value": value, "observed": plain(got)}))
    return out


def _apply_expect_status(verdicts, expected):
    """Turn condition verdicts into checks of an expected status."""
    if expected is None:
        return verdicts
    out = []
    for v in verdicts:
        ok = v.status == expected
        d = dict(v.details)
        d["observed_status"] = v.status
        d["expected_status"] = expected
        out.append(ConditionVerdict(v.condition, SATISFIED if ok else VIOLATED, v.estimate, v.stderr, v.samples,
                                    v.threshold, v.confidence, d))
    return out


STATUS = C.one_of(SATISFIED, VIOLATED, INCONCLUSIVE)


# ---------------------------------------------------------------------------
# checks


def check_lyapunov(ctx, f):
    m, p = ctx.build(f)
    hz = f.get("horizons", list)
    reps = f.get("replicas", int, 1, C.positive)
    method = f.get("method", str, None, C.one_of(*L.METHODS))
    first = f.get("first_stream", int, 0, C.nonneg)

    def run():
        est = L.estimate_lyapunov(m, p, hz, reps, method, first)
        res = est.as_dict()
        res["samples"] = reps
        res["provenance"] = {"streams": [first, first + reps - 1]}
        v = L._below("lyapunovNegative", est.point_estimate, np.nan_to_num(est.standard_error), reps, 0.0)
        return res, [v]

    return run


def check_one_step(ctx, f):
    m, p = ctx.build(f)
    n = f.get("samples", int, 100_000, C.positive)

    def run():
        v = L.check_one_step(m, p, n)
        return {"estimate": v.estimate, "stderr": v.stderr, "samples": n, **v.details,
                "provenance": {"streams": [0, n - 1], "index": 1}}, [v]

    return run


def check_theorem_gen(ctx, f):
    m, p = ctx.build(f)
    ns = f.get("n", list, [1])
    samples = f.get("samples", int, 10_000, C.positive)
    method = f.get("method", str, None, C.one_of(*L.METHODS))

    def run():
        verdicts, rows = [], []
        for n in ns:
            v1, v2 = L.check_theorem_gen(m, p, int(n), samples, method)
            verdicts += [v1, v2]
            rows.append({"n": int(n), "i": v1.as_dict(), "ii": v2.as_dict()})
        return {"rows": rows, "samples": samples, "provenance": {"streams": [0, samples - 1]}}, verdicts

    return run


def check_drift(ctx, f):
    m, p = ctx.build(f)
    samples = f.get("samples", int, 2000, C.positive)
    probes = f.get("probes", list, None)

    def run():
        fit, v = L.check_drift(m, p, probes, samples)
        res = fit.as_dict()
        res["samples"] = samples
        res["provenance"] = {"streams": [0, samples - 1], "index": 1}
        return res, [v]

    return run


def check_longrun(ctx, f):
    m, p = ctx.build(f)
    k = f.get("k_max", int, 16, C.positive)
    reps = f.get("replicas", int, 10_000, C.positive)
    method = f.get("method", str, None, C.one_of(*L.METHODS))

    def run():
        v = L.check_longrun(m, p, k, reps, method)
        return {"root": v.estimate, "stderr": v.stderr, **v.details, "samples": reps,
                "provenance": {"streams": [0, reps - 1]}}, [v]

    return run


def check_vstar(ctx, f):
    m, p = ctx.build(f)
    n = f.get("samples", int, 1000, C.positive)
    tol = f.get("tol", float, 1e-9, C.positive)
    depth = f.get("max_depth", int, 1 << 16, C.positive)
    first = f.get("first_stream", int, 0, C.nonneg)

    def run():
        vs, depths = E.vstar_samples(m, p, np.arange(first, first + n), tol, depth, return_depths=True)
        x = vs.astype(np.float64)
        mean = x.mean(axis=0)
        var = x.var(axis=0, ddof=1)
        c = x - mean
        m4 = (c**4).mean(axis=0)
        var_se = np.sqrt(np.maximum(m4 - var**2 * (n - 3) / (n - 1), 0.0) / n) if n > 3 else np.full_like(var, np.nan)
        res = {
            "mean": D._lst(mean),
            "mean_stderr": D._lst(x.std(axis=0, ddof=1) / np.sqrt(n)),
            "var": D._lst(var),
            "var_stderr": D._lst(var_se),
            "depth_quantiles": np.quantile(depths, [0.5, 0.9, 1.0]).tolist(),
            "samples": n,
            "provenance": {"streams": [first, first + n - 1], "indices": "<= 0"},
        }
        return res, []

    return run


def check_time_average(ctx, f):
    m, p = ctx.build(f)
    v = f.get("v", list, None)
    horizon = f.get("horizon", int, check=C.positive)
    stream = f.get("stream", int, 0, C.nonneg)

    def run():
        avg, se = D.time_average(m, p, m.zero() if v is None else v, horizon, stream)
        return {"mean": D._lst(avg if m.dim > 1 else avg[0]), "stderr": D._lst(se if m.dim > 1 else se[0]),
                "horizon": horizon, "samples": horizon,
                "provenance": {"streams": [stream, stream], "indices": [1, horizon]}}, []

    return run


def check_slln(ctx, f):
    m, p = ctx.build(f)
    v = f.get("v", list, None)
    horizon = f.get("horizon", int, check=C.positive)
    ens = f.get("ensemble", int, 1000, C.positive)

    def run():
        r = D.slln_check(m, p, m.zero() if v is None else v, horizon, 0, ens)
        res = r.as_dict()
        res["samples"] = ens
        res["provenance"] = {"trajectory_stream": 0, "ensemble_streams": [1, ens]}
        se = np.hypot(np.nan_to_num(r.time_average_stderr), np.nan_to_num(r.ensemble_stderr))
        ok = bool(np.all(np.asarray(r.abs_error) <= 3.0 * se + 1e-12))
        verdict = ConditionVerdict(D.SLLN, SATISFIED if ok else VIOLATED, float(np.max(r.abs_error)), float(np.max(se)),
                                   ens, details={"horizon": horizon})
        return res, [verdict]

    return run


def check_stationarity(ctx, f):
    m, p = ctx.build(f)
    streams = f.get("streams", int, 1000, C.positive)
    window = f.get("window", int, 100, C.positive)
    start = f.get("start", list, None)

    def run():
        v = D.stationarity_check(m, p, streams, window, start)
        return {**v.details, "samples": streams, "provenance": {"streams": [0, streams - 1]}}, [v]

    return run


def check_forward_backward(ctx, f):
    m, p = ctx.build(f)
    n = f.get("n", int, check=C.nonneg)
    samples = f.get("samples", int, 10_000, C.positive)
    alpha = f.get("alpha", float, 0.01, C.positive)
    v0 = f.get("v", list, None)

    def run():
        try:
            v = D.forward_backward_compare(m, p, n, samples, v0, 0, alpha)
        except GateViolated as e:
            return {"gated": True, "reason": str(e), "samples": 0}, []
        return {"gated": False, "statistic": v.estimate, "critical": v.threshold, **v.details, "samples": 2 * samples,
                "provenance": {"forward_streams": [0, samples - 1],
                               "backward_streams": [samples, 2 * samples - 1]}}, [v]

    return run


def check_moment_bound(ctx, f):
    m, p = ctx.build(f)
    reps = f.get("replicas", int, 1000, C.positive)

    def run():
        v = D.moment_bound_check(m, p, reps)
        return {"estimate": v.estimate, "stderr": v.stderr, "bound": v.threshold, "samples": reps,
                "provenance": {"streams": [0, reps - 1]}}, [v]

    return run


def check_coupling(ctx, f):
    m, p = ctx.build(f)
    v = f.get("v", list)
    v2 = f.get("v2", list)
    n = f.get("n", int, check=C.positive)
    reps = f.get("replicas", int, 100, C.positive)
    thr = f.get("threshold", float, 1e-10, C.positive)

    def run():
        res = D.coupling_summary(m, p, v, v2, n, np.arange(reps), thr)
        res["samples"] = reps
        res["provenance"] = {"streams": [0, reps - 1]}
        return res, []

    return run


def check_coalescence(ctx, f):
    m, p = ctx.build(f)
    v = f.get("v", list)
    v2 = f.get("v2", list)
    n = f.get("max_n", int, check=C.positive)
    reps = f.get("replicas", int, 100, C.positive)
    window = f.get("window", int, 100, C.positive)

    def run():
        res = D.coalescence_summary(m, p, v, v2, n, np.arange(reps), window)
        res["samples"] = reps
        res["provenance"] = {"streams": [0, reps - 1]}
        return res, []

    return run


def check_honig(ctx, f):
    v = f.get("v", float, 1.0, C.nonneg)
    n_max = f.get("n_max", int, 8, C.positive)
    reps = f.get("replicas", int, 1_000_000, C.positive)
    cn = f.get("coupling_n", int, 10_000, C.positive)
    cr = f.get("coupling_replicas", int, 1000, C.positive)
    v2 = f.get("v2", float, 2.0, C.nonneg)
    lh = f.get("log_horizon", int, 1_000_000, C.positive)
    rel = f.get("rel", float, 0.05, C.positive)
    frac = f.get("min_fraction", float, 0.99, C.positive)
    log_tol = f.get("log_tol", float, 0.02, C.positive)

    def run():
        r = D.honig_divergence(v, n_max, reps, ctx.seed, cn, cr, v2, lh)
        res = r.as_dict()
        res["samples"] = reps
        res["provenance"] = {"seed": ctx.seed, "streams": [0, reps - 1], "coupling_streams": [0, cr - 1],
                             "log_stream": reps}
        dev = np.abs(np.asarray(r.ratios) / r.exact_ratio - 1.0)
        verdicts = [
            ConditionVerdict("meanRatio", SATISFIED if r.ratios_within(rel) else VIOLATED, float(dev.max()), 0.0,
                             reps, rel, confidence="tolerance", details={"worst_n": int(dev.argmax())}),
            ConditionVerdict("couplingBelow", SATISFIED if r.coupling["fraction_below"] >= frac else VIOLATED,
                             r.coupling["fraction_below"], 0.0, cr, frac, confidence="fraction"),
        ]
        if r.log_rate is not None:
            err = abs(r.log_rate - (-2.0 / 3.0))
            verdicts.append(ConditionVerdict("logRate", SATISFIED if err <= log_tol else VIOLATED, err, 0.0, lh,
                                             log_tol, confidence="tolerance"))
        return res, verdicts

    return run


def check_sg_bias(ctx, f):
    m, p = ctx.build(f)
    gains = f.get("gains", list)
    horizon = f.get("horizon", int, check=C.positive)
    reps = f.get("replicas", int, 100, C.positive)
    assert_zero = f.get("assert_zero", bool, True)
    law = getattr(p, "law", None)
    if law is None or m.params.get("family") != "sg":
        raise ConfigError(f"{f.what}: needs an sg model on matrixPair noise", f.line())

    def run():
        theta = sg_model.target(law)
        rows, verdicts = [], []
        for g in gains:
            est = sg_model.bias_estimate(sg_model.make_sg(float(g), m.dim), p, theta, horizon, reps)
            rows.append({"gain": float(g), "delta": est.delta.tolist(), "stderr": est.stderr.tolist(),
                         "norm": est.norm})
            if assert_zero:
                z = np.abs(est.delta) / est.stderr
                verdicts.append(ConditionVerdict("biasZero", SATISFIED if est.within(3.0) else VIOLATED, float(z.max()),
                                                 0.0, reps, 3.0, details={"gain": float(g)}))
        return {"theta": theta.tolist(), "curve": rows, "samples": reps, "horizon": horizon,
                "provenance": {"streams": [0, reps - 1], "indices": [1, horizon]}}, verdicts

    return run


def check_lipschitz(ctx, f):
    m, p = ctx.build(f)
    samples = f.get("samples", int, 10_000, C.positive)
    scale = f.get("scale", float, 10.0, C.positive)
    bound = f.get("bound", float, None, C.positive)
    slack = f.get("slack", float, 1e-9, C.nonneg)
    if m.lipschitz is None:
        raise ConfigError(f"{f.what}: model {m.name} has no Lipschitz factors", f.line())

    def run():
        rng = np.random.default_rng(ctx.seed)
        X, Y = E._sample_states(m, rng, samples, scale), E._sample_states(m, rng, samples, scale)
        s = np.arange(samples)
        z = p.sample([1], np.concatenate([s, s])).at(0)
        out = m.step(np.concatenate([X, Y]), z).astype(np.float64)
        num = np.sqrt(np.sum((out[:samples] - out[samples:]) ** 2, axis=-1))
        den = np.sqrt(np.sum((X - Y).astype(np.float64) ** 2, axis=-1))
        keep = den > 0
        q = num[keep] / den[keep]
        Kz = np.asarray(m.lipschitz(z), dtype=np.float64)[:samples][keep]
        excess = float(np.max(q - Kz))
        res = {"max_quotient": float(q.max()), "max_excess_over_Kz": excess, "samples": int(keep.sum()),
               "provenance": {"streams": [0, samples - 1], "index": 1, "state_seed": ctx.seed}}
        verdicts = [ConditionVerdict("lipschitzFactor", SATISFIED if excess <= slack else VIOLATED, excess, 0.0,
                                     int(keep.sum()), slack, confidence="exact")]
        if bound is not None:
            res["bound"] = bound
            verdicts.append(ConditionVerdict("quotientBound", SATISFIED if q.max() <= bound + slack else VIOLATED,
                                             float(q.max()), 0.0, int(keep.sum()), bound + slack, confidence="exact"))
        return res, verdicts

    return run


def check_monotone(ctx, f):
    m, p = ctx.build(f)
    samples = f.get("samples", int, 10_000, C.positive)

    def run():
        bad = E.monotone_violations(m, p, samples, ctx.seed)
        v = ConditionVerdict("monotone", SATISFIED if bad == 0 else VIOLATED, float(bad), 0.0, samples, 0.0,
                             confidence="exact")
        return {"violations": bad, "samples": samples, "provenance": {"streams": [0, samples - 1]}}, [v]

    return run


def check_ladder(ctx, f):
    """Negative-iteration ladders: nondecreasing for monotone models, closed form for Lindley."""
    m, p = ctx.build(f)
    depth = f.get("depth", int, check=C.positive)
    streams = f.get("streams", int, 10, C.positive)

    def run():
        verdicts, res = [], {"depth": depth, "samples": streams, "provenance": {"streams": [0, streams - 1]}}
        if m.params.get("family") == "lindley":
            worst = 0.0
            for s in range(streams):
                a = lindley_model.lindley_ladder_all(p, depth, s)
                b = lindley_model.vstar_closed_form(p, depth, s)
                worst = max(worst, float(np.max(np.abs(a - b))))
            res["max_abs_diff"] = worst
            verdicts.append(ConditionVerdict("lindleyIdentity", SATISFIED if worst <= 1e-12 else VIOLATED, worst, 0.0,
                                             streams, 1e-12, confidence="exact"))
        if m.monotone:
            depths = np.unique(np.geomspace(1, depth, 12).astype(np.int64))
            worst_drop = 0.0
            for s in range(streams):
                vals = E.ladder_values(m, p, depths, s).astype(np.float64)
                worst_drop = max(worst_drop, float(np.max(vals[:-1] - vals[1:], initial=0.0)))
            tol = 0.0 if m.integer else 1e-12
            res["max_drop"] = worst_drop
            verdicts.append(ConditionVerdict("monotoneLadder", SATISFIED if worst_drop <= tol else VIOLATED, worst_drop,
                                             0.0, streams, tol, confidence="exact"))
        return res, verdicts

    return run


def check_composite(ctx, f):
    m, p = ctx.build(f)
    n = f.get("n", int, check=C.positive)
    stream = f.get("stream", int, 0, C.nonneg)
    pairs = f.get("pairs", int, L.PAIR_COUNT, C.positive)
    radius = f.get("radius", float, L.PAIR_RADIUS, C.positive)

    def run():
        c = L.composite_lipschitz(m, p, n, stream, pairs, radius, ctx.seed)
        res = c.as_dict()
        res["samples"] = pairs
        res["provenance"] = {"streams": [stream, stream], "indices": [1, n]}
        chain = [x for x in (c.lower, c.exact, c.upper) if x is not None]
        ok = all(a <= b * (1 + 1e-9) + 1e-12 for a, b in zip(chain, chain[1:]))
        return res, [ConditionVerdict("normOrdering", SATISFIED if ok else VIOLATED, c.lower, 0.0, pairs,
                                      confidence="exact")]

    return run


CHECKS = {
    "lyapunov": check_lyapunov,
    "one_step": check_one_step,
    "theorem_gen": check_theorem_gen,
    "drift": check_drift,
    "longrun": check_longrun,
    "vstar": check_vstar,
    "time_average": check_time_average,
    "slln": check_slln,
    "stationarity": check_stationarity,
    "forward_backward": check_forward_backward,
    "moment_bound": check_moment_bound,
    "coupling": check_coupling,
    "coalescence": check_coalescence,
    "honig_divergence": check_honig,
    "sg_bias": check_sg_bias,
    "lipschitz": check_lipschitz,
    "monotone": check_monotone,
    "ladder": check_ladder,
    "composite": check_composite,
}

# checks whose statistical verdicts may be replaced by ``expect_status``
_CONDITION_CHECKS = {"lyapunov", "one_step", "theorem_gen", "drift", "longrun", "stationarity", "forward_backward",
                     "moment_bound"}


# ---------------------------------------------------------------------------
# experiments


@dataclass
class Experiment:
    name: str
    description: str
    seed: int
    echo: dict
    tasks: list  # (label, name, Fields, callable)
    budget: float
    out_format: str
    out_path: str | None


def validate(doc, seed_override=None) -> Experiment:
    """Check the whole configuration up front, building every model and process once."""
    f = C.Fields(doc, "config", 1)
    name = f.get("experiment", str)
    desc = f.get("description", str, "")
    seed = f.get("seed", int, check=lambda v: None if 0 <= v < 2**64 else "must be in [0, 2^64)")
    if seed_override is not None:
        seed = int(seed_override)
    model = f.raw("model", None)
    noise = f.raw("noise", None)
    checks = f.get("checks", list)
    if not checks:
        raise ConfigError("config.checks: at least one check is required", f.line("checks"))
    budget_cfg = f.raw("budget", {})
    bf = C.Fields(budget_cfg, "budget", f.line("budget"))
    budget = bf.get("seconds", float, DEFAULT_BUDGET, C.positive)
    bf.done()
    out_cfg = f.raw("output", {})
    of = C.Fields(out_cfg, "output", f.line("output"))
    fmt = of.get("format", str, "json", C.one_of("json", "csv"))
    path = of.get("path", str, None)
    of.done()
    f.done()
    ctx = Context(seed, model, noise)
    tasks, labels = [], set()
    for i, item in enumerate(checks):
        line = getattr(item, "line", None) or getattr(checks, "line", None)
        cf = C.Fields(item, f"checks[{i}]", line)
        cname = cf.get("check", str, check=C.one_of(*CHECKS))
        label = cf.get("label", str, cname)
        if label in labels:
            raise ConfigError(f"checks[{i}]: duplicate label {label!r}", cf.line("label"))
        labels.add(label)
        # parse every field now (building models and noise) so that mistakes fail before any run
        _prepare(label, cname, item, line, ctx)
        tasks.append((label, cname, item, line, ctx))
    echo = plain(doc)
    echo["seed"] = seed
    return Experiment(name, desc, seed, echo, tasks, budget, fmt, path)


def _prepare(label, cname, item, line, ctx):
    cf = C.Fields(item, f"check {label}", line)
    cf.get("check", str)
    cf.get("label", str, cname)
    specs = _parse_expect(cf.raw("expect", None), cf)
    expected_status = cf.get("expect_status", str, None, STATUS)
    if expected_status is not None and cname not in _CONDITION_CHECKS:
        raise ConfigError(f"check {label}: expect_status applies to condition checks only", cf.line("expect_status"))
    job = CHECKS[cname](ctx, cf)
    cf.done()
    return job, specs, expected_status, cf.what


def run_check(label, cname, item, line, ctx) -> CheckOutcome:
    job, specs, expected_status, what = _prepare(label, cname, item, line, ctx)
    t0 = time.perf_counter()
    result, verdicts = job()
    verdicts = _apply_expect_status(verdicts, expected_status) + _expect_verdicts(specs, result, what)
    params = {k: v for k, v in item.items() if k not in ("check", "label")}
    return CheckOutcome(cname, label, params, result, verdicts, time.perf_counter() - t0)


def exit_code(statuses) -> int:
    s = list(statuses)
    if any(x == VIOLATED for x in s):
        return EXIT_FAIL
    if any(x == INCONCLUSIVE for x in s):
        return EXIT_INCONCLUSIVE
    return EXIT_OK


def execute(exp: Experiment, parallel: int = 1) -> tuple[dict, dict]:
    """Run every check; returns the report document and the timings record."""
    t0 = time.perf_counter()
    if parallel > 1 and len(exp.tasks) > 1:
        with ThreadPoolExecutor(max_workers=parallel) as pool:
            futures = [pool.submit(run_check, *t) for t in exp.tasks]
            outcomes = [fu.result() for fu in futures]
    else:
        outcomes = [run_check(*t) for t in exp.tasks]
    top_model = exp.echo.get("model")
    stability = D.StabilityReport(top_model.get("family", "mixed") if isinstance(top_model, dict) else "mixed")
    for o in outcomes:
        for v in o.verdicts:
            stability.add(v)
        if o.name == "coupling":
            stability.coupling = plain(o.result)
        elif o.name == "coalescence":
            stability.coalescence = plain(o.result)
        elif o.name == "slln":
            stability.slln = plain(o.result)
        elif o.name == "moment_bound":
            stability.moment = plain(o.result)
    statuses = stability.statuses
    code = exit_code(statuses)
    report = {
        "format": REPORT_FORMAT,
        "version": REPORT_VERSION,
        "package_version": __version__,
        "experiment": exp.name,
        "description": exp.description,
        "seed": exp.seed,
        "config": exp.echo,
        "checks": [o.as_dict() for o in outcomes],
        "stability": plain(stability.as_dict()),
        "summary": {
            "verdicts": len(statuses),
            SATISFIED: statuses.count(SATISFIED),
            VIOLATED: statuses.count(VIOLATED),
            INCONCLUSIVE: statuses.count(INCONCLUSIVE),
            "overall": stability.overall() if statuses else SATISFIED,
            "exit_code": code,
        },
    }
    timings = {"experiment": exp.name, "total_seconds": time.perf_counter() - t0,
               "checks": {o.label: o.seconds for o in outcomes}}
    return report, timings


def to_json(report: dict) -> str:
    return json.dumps(plain(report), indent=2, allow_nan=False) + "\n"


def _flatten(prefix, x, rows):
    if isinstance(x, dict):
        for k, v in x.items():
            _flatten(f"{prefix}.{k}" if prefix else str(k), v, rows)
    elif isinstance(x, list):
        for i, v in enumerate(x):
            _flatten(f"{prefix}[{i}]", v, rows)
    else:
        rows.append((prefix, x))


def to_csv(report: dict) -> str:
    """Flat table ``check,label,field,value`` over every result and verdict leaf."""
    import csv
    import io

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["check", "label", "field", "value"])
    for c in report["checks"]:
        rows = []
        _flatten("result", c["result"], rows)
        for i, v in enumerate(c["verdicts"]):
            _flatten(f"verdicts[{i}]", {k: v[k] for k in ("condition", "status", "estimate", "stderr", "samples",
                                                        "threshold")}, rows)
        for key, val in rows:
            w.writerow([c["check"], c["label"], key, repr(val) if isinstance(val, float) else val])
    return buf.getvalue()
