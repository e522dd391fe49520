"""Experiment configuration: YAML parsing with line diagnostics and object builders.

The schema is documented in ``docs/config.md``. Every mapping read from the
file remembers the line of each key, so unknown fields, missing fields and
bad values are reported as ``line N: ...``.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
import yaml

from . import noise as N
from .errors import ConfigError, IrfError
from .models import (LinearDataDrift, QuadraticDrift, TanhDrift, make_affine, make_gwi, make_langevin, make_lindley,
                     make_multiplicative, make_sg)

TOP_KEYS = {"experiment", "description", "seed", "model", "noise", "checks", "budget", "output"}


class Map(dict):
    """A mapping that remembers where it and its keys appear in the file."""

    line: int | None = None
    key_lines: dict

    def where(self, key=None):
        if key is not None and key in getattr(self, "key_lines", {}):
            return self.key_lines[key]
        return self.line


class Seq(list):
    line: int | None = None


class _Loader(yaml.SafeLoader):
    pass


def _construct_map(loader, node):
    loader.flatten_mapping(node)
    out = Map()
    out.line = node.start_mark.line + 1
    out.key_lines = {}
    for k, v in node.value:
        key = loader.construct_object(k, deep=True)
        if key in out:
            raise ConfigError(f"duplicate key {key!r}", k.start_mark.line + 1)
        out[key] = loader.construct_object(v, deep=True)
        out.key_lines[key] = k.start_mark.line + 1
    return out


def _construct_seq(loader, node):
    out = Seq(loader.construct_object(v, deep=True) for v in node.value)
    out.line = node.start_mark.line + 1
    return out


_Loader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_map)
_Loader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_SEQUENCE_TAG, _construct_seq)


def parse_text(text: str) -> Map:
    try:
        doc = yaml.load(text, Loader=_Loader)
    except yaml.MarkedYAMLError as e:
        line = e.problem_mark.line + 1 if e.problem_mark is not None else None
        raise ConfigError(f"malformed YAML: {e.problem}", line) from None
    if not isinstance(doc, Map):
        raise ConfigError("configuration must be a mapping", 1)
    return doc


def load(path) -> Map:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e.strerror}") from None
    return parse_text(text)


# ---------------------------------------------------------------------------
# field access


class Fields:
    """Typed reads from a :class:`Map`; :meth:`done` rejects leftover keys."""

    def __init__(self, m, what: str, line=None):
        if not isinstance(m, dict):
            raise ConfigError(f"{what} must be a mapping", line)
        self.m = m
        self.what = what
        self.used = set()

    def line(self, key=None):
        return self.m.where(key) if isinstance(self.m, Map) else None

    def has(self, key):
        return key in self.m

    def get(self, key, kind=None, default=..., check=None):
        self.used.add(key)
        if key not in self.m:
            if default is ...:
                raise ConfigError(f"{self.what}: missing required field {key!r}", self.line())
            return default
        v = self.m[key]
        where = self.line(key)
        if kind is not None:
            v = _coerce(v, kind, f"{self.what}.{key}", where)
        if check is not None:
            msg = check(v)
            if msg:
                raise ConfigError(f"{self.what}.{key}: {msg}", where)
        return v

    def raw(self, key, default=...):
        return self.get(key, None, default)

    def done(self):
        extra = [k for k in self.m if k not in self.used]
        if extra:
            k = extra[0]
            raise ConfigError(f"{self.what}: unknown field {k!r}", self.line(k))


def _coerce(v, kind, name, line):
    try:
        if kind is int:
            if isinstance(v, bool) or not isinstance(v, (int, float)) or int(v) != v:
                raise TypeError
            return int(v)
        if kind is float:
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise TypeError
            return float(v)
        if kind is str:
            if not isinstance(v, str):
                raise TypeError
            return v
        if kind is bool:
            if not isinstance(v, bool):
                raise TypeError
            return v
        if kind is list:
            if not isinstance(v, list):
                raise TypeError
            return v
        if kind == "array":
            return np.asarray(v, dtype=np.float64)
    except (TypeError, ValueError):
        pass
    tname = kind if isinstance(kind, str) else kind.__name__
    raise ConfigError(f"{name} must be of type {tname}, got {v!r}", line)


def positive(v):
    return None if v > 0 else "must be positive"


def nonneg(v):
    return None if v >= 0 else "must be non-negative"


def one_of(*opts):
    return lambda v: None if v in opts else f"must be one of {', '.join(map(str, opts))}"


def _wrap(fn, line):
    try:
        return fn()
    except ConfigError:
        raise
    except (IrfError, ValueError, TypeError, KeyError) as e:
        raise ConfigError(str(e).strip("'\""), line) from None


# ---------------------------------------------------------------------------
# distributions and noise


LAW_FIELDS = {
    "constant": {"value"},
    "normal": {"mu", "sigma"},
    "exponential": {"mean"},
    "uniform": {"low", "high"},
    "discrete": {"values", "probs"},
    "bernoulli": {"p"},
    "poisson": {"mean"},
    "honig": set(),
}


def build_dist(m, what="law") -> N.Dist:
    f = Fields(m, what, getattr(m, "line", None))
    law = f.get("law", str, check=one_of(*LAW_FIELDS))
    params = {}
    for k in LAW_FIELDS[law]:
        if f.has(k):
            params[k] = f.get(k, list if k in ("values", "probs") else float)
    f.done()
    return _wrap(lambda: N.dist_from_config({"law": law, **params}), f.line())


NOISE_KINDS = ("iid", "honig", "movingAverage", "threeDependent", "reversibleMarkov", "queue", "langevinTraffic",
               "matrixPair", "branching")


def _dist_or_noise(m, seed, what):
    # a nested block is a distribution when it has "law", a process when it has "kind"
    if isinstance(m, dict) and "kind" in m:
        return build_noise(m, seed, what)
    return build_dist(m, what)


def build_noise(m, seed: int, what="noise") -> N.DrivingProcess:
    f = Fields(m, what, getattr(m, "line", None))
    kind = f.get("kind", str, check=one_of(*NOISE_KINDS))
    s = f.get("seed", int, seed, nonneg)
    line = f.line()
    if kind == "iid":
        dist = build_dist(f.raw("law"), f"{what}.law")
        dim = f.get("dim", int, None, positive)
        f.done()
        return N.make_iid(dist, s, dim)
    if kind == "honig":
        f.done()
        return N.make_honig(s)
    if kind == "movingAverage":
        coeffs = f.get("coeffs", list)
        inn = build_dist(f.raw("innovation"), f"{what}.innovation") if f.has("innovation") else None
        f.done()
        return _wrap(lambda: N.make_moving_average(coeffs, inn, s), line)
    if kind == "threeDependent":
        inn = build_dist(f.raw("innovation"), f"{what}.innovation") if f.has("innovation") else None
        f.done()
        return N.make_three_dependent(inn, s)
    if kind == "reversibleMarkov":
        P = f.get("P", list)
        values = f.get("values", list, None)
        floor = f.get("floor", int, None)
        f.done()
        return _wrap(lambda: N.make_reversible_markov(P, values, s, floor), line)
    if kind == "queue":
        svc = _dist_or_noise(f.raw("service"), N.K.derive_seed(s, 1), f"{what}.service")
        arr = _dist_or_noise(f.raw("interarrival"), N.K.derive_seed(s, 2), f"{what}.interarrival")
        f.done()
        return _wrap(lambda: N.make_queue_traffic(svc, arr, s), line)
    if kind == "langevinTraffic":
        dim = f.get("dim", int, check=positive)
        data = _dist_or_noise(f.raw("data"), N.K.derive_seed(s, 1), f"{what}.data")
        noise = build_noise(f.raw("noise"), N.K.derive_seed(s, 2), f"{what}.noise") if f.has("noise") else None
        f.done()
        return _wrap(lambda: N.make_langevin_traffic(data, dim, noise, s), line)
    if kind == "matrixPair":
        law = build_matrix_law(f.raw("law"), s, f"{what}.law")
        f.done()
        return N.make_matrix_pair(law, s)
    # branching
    dim = f.get("dim", int, check=positive)
    means = f.get("means", list)
    law = f.get("law", str, "bernoulli", one_of("bernoulli", "poisson"))
    imm = f.get("immigration_means", list, None)
    env = build_noise(f.raw("environment"), N.K.derive_seed(s, 3), f"{what}.environment") if f.has("environment") else None
    cap = f.get("cap", float, None, positive)
    f.done()
    return _wrap(lambda: N.make_branching_environment(dim, means, law, imm, env, cap, s), line)


def build_matrix_law(m, seed, what):
    f = Fields(m, what, getattr(m, "line", None))
    typ = f.get("type", str, check=one_of("affine", "regression", "driven"))
    line = f.line()
    if typ == "regression":
        theta = f.get("theta", list)
        out = _wrap(lambda: N.RegressionLaw(theta, f.get("noise_sd", float, 1.0, positive),
                                            f.get("feature_sd", float, 1.0, positive)), line)
        f.done()
        return out
    if typ == "driven":
        src = _dist_or_noise(f.raw("source"), N.K.derive_seed(seed, 5), f"{what}.source")
        if isinstance(src, N.Dist):
            src = N.make_iid(src, N.K.derive_seed(seed, 5))
        kw = {k: f.get(k, float, d) for k, d in (("a0", 0.0), ("a1", 1.0), ("b0", 0.0), ("b1", 1.0))}
        dim = f.get("dim", int, 1, positive)
        f.done()
        return N.DrivenLaw(src, dim, **kw)
    dim = f.get("dim", int, check=positive)
    A = _matrix_spec(f.raw("A"), seed, f"{what}.A")
    B = _vector_spec(f.raw("B"), seed, f"{what}.B")
    f.done()
    return _wrap(lambda: N.AffineLaw(dim, A, B), line)


def _matrix_spec(m, seed, what):
    f = Fields(m, what, getattr(m, "line", None))
    kind = f.get("kind", str, check=one_of("constant", "scaled", "cycle", "entrywise"))
    if kind == "constant":
        out = ("constant", f.get("matrix", "array"))
    elif kind == "scaled":
        out = ("scaled", f.get("matrix", "array"), _dist_or_noise(f.raw("scale"), N.K.derive_seed(seed, 6), f"{what}.scale"))
    elif kind == "cycle":
        out = ("cycle", [np.asarray(x, dtype=np.float64) for x in f.get("matrices", list)])
    else:
        out = ("entrywise", build_dist(f.raw("entry"), f"{what}.entry"))
    f.done()
    return out


def _vector_spec(m, seed, what):
    f = Fields(m, what, getattr(m, "line", None))
    kind = f.get("kind", str, check=one_of("constant", "iid", "scaled"))
    if kind == "constant":
        out = ("constant", f.get("vector", "array"))
    elif kind == "iid":
        out = ("iid", build_dist(f.raw("entry"), f"{what}.entry"))
    else:
        out = ("scaled", f.get("vector", "array"), _dist_or_noise(f.raw("scale"), N.K.derive_seed(seed, 7), f"{what}.scale"))
    f.done()
    return out


# ---------------------------------------------------------------------------
# models


FAMILIES = ("affine", "multiplicative", "lindley", "sg", "langevin", "gwi")


def build_drift(m, what):
    f = Fields(m, what, getattr(m, "line", None))
    typ = f.get("type", str, check=one_of("quadratic", "tanh", "linearData"))
    line = f.line()
    if typ == "quadratic":
        out = _wrap(lambda: QuadraticDrift(f.get("base", list), f.get("slope", "array", 0.0), f.get("rotation", float, 0.0),
                                           f.get("shift_base", "array", 0.0), f.get("shift_slope", "array", 0.0)), line)
    elif typ == "tanh":
        out = _wrap(lambda: TanhDrift(f.get("dim", int, check=positive), f.get("c0", float, 1.0), f.get("c1", float, 0.0),
                                      f.get("a", float, 1.0), f.get("shift_slope", "array", 0.0)), line)
    else:
        out = LinearDataDrift(f.get("dim", int, check=positive))
    f.done()
    return out


def build_model(m, process, what="model"):
    f = Fields(m, what, getattr(m, "line", None))
    family = f.get("family", str, check=one_of(*FAMILIES))
    line = f.line()
    if family == "affine":
        dim = f.get("dim", int, None, positive)
        f.done()
        law = getattr(process, "law", None)
        return _wrap(lambda: make_affine(law if dim is None and law is not None else (dim or 1)), line)
    if family == "multiplicative":
        f.done()
        return make_multiplicative()
    if family == "lindley":
        f.done()
        return make_lindley()
    if family == "sg":
        lam = f.get("gain", float, check=positive)
        dim = f.get("dim", int, check=positive)
        f.done()
        return make_sg(lam, dim)
    if family == "langevin":
        lam = f.get("gain", float, check=positive)
        drift = build_drift(f.raw("drift"), f"{what}.drift")
        f.done()
        return make_langevin(lam, drift)
    rho = f.get("rho", float, None, positive)
    f.done()
    if not isinstance(process, N.BranchingEnvironment):
        raise ConfigError("family gwi needs noise of kind branching", line)
    return _wrap(lambda: make_gwi(process, rho), line)

