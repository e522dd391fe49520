"""Time the hot kernels under the numba and numpy backends.

The backend is fixed at import time, so each backend runs in its own
subprocess with ``IRFLAB_BACKEND`` set. Each kernel is warmed up once (which
also triggers compilation) and then timed as the best of ``--repeat`` runs.

    python benchmarks/bench_kernels.py [--scale 1.0] [--repeat 3] [--json out.json]
"""
import argparse
import json
import os
import subprocess
import sys
import time

WORKER = r"""
import json, sys, time
import numpy as np
from irflab import BACKEND
from irflab import _kernels as K

scale, repeat = float(sys.argv[1]), int(sys.argv[2])
rng = np.random.default_rng(0)

def n(x):
    return max(1, int(x * scale))

T, R = n(20000), 64
z = rng.normal(-0.1, 1.0, (T, R))
a = rng.uniform(-0.9, 0.9, (T, R))
A = rng.uniform(-0.4, 0.4, (n(5000), R, 3, 3))
B = rng.normal(size=(n(5000), R, 3))
V = rng.normal(size=(n(5000), R, 3))
Nz = rng.normal(size=(n(5000), R, 3))
ladder = rng.normal(-0.1, 1.0, n(4000))
keys = K.derive_keys(7, np.arange(R), 1)
counters = np.arange(n(20000), dtype=np.int64)
cdf = np.cumsum(np.full((4, 4), 0.25), axis=1)
u = rng.random((T, R))

cases = {
    "uniforms": lambda: K.uniforms(keys, counters),
    "lindley_scan": lambda: K.lindley_scan(np.zeros(R), z),
    "lindley_ladder": lambda: K.lindley_ladder(ladder),
    "scalar_mult_scan": lambda: K.scalar_mult_scan(np.ones(R), a),
    "affine_scan": lambda: K.affine_scan(np.zeros((R, 3)), A, B),
    "gradient_scan": lambda: K.gradient_scan(np.zeros((R, 3)), A + np.eye(3), V, Nz, 0.1, 0.4),
    "markov_walk": lambda: K.markov_walk(np.zeros(R, dtype=np.int64), cdf, u),
    "gwi_scan": lambda: K.gwi_scan(np.zeros((R, 2), dtype=np.int64), np.zeros((n(2000), R), dtype=np.int64),
                                   np.arange(1, n(2000) + 1), keys, K.derive_keys(7, np.arange(R), 2),
                                   np.full((1, 2, 2), 0.2), K.LAW_BERNOULLI, np.ones(2)),
}
out = {}
for name, fn in cases.items():
    fn()
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    out[name] = best
print(json.dumps({"backend": BACKEND, "times": out}))
"""


def run(backend, scale, repeat):
    env = dict(os.environ, IRFLAB_BACKEND=backend)
    res = subprocess.run([sys.executable, "-c", WORKER, str(scale), str(repeat)], env=env, capture_output=True,
                         text=True, check=True)
    return json.loads(res.stdout.strip().splitlines()[-1])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scale", type=float, default=1.0, help="multiply problem sizes")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json", help="also write the results here")
    args = ap.parse_args(argv)
    t0 = time.perf_counter()
    fast = run("numba", args.scale, args.repeat)
    slow = run("numpy", args.scale, args.repeat)
    if fast["backend"] != "numba":
        print("numba is not importable; both runs used the numpy backend", file=sys.stderr)
    print(f"{'kernel':<18} {'numba [s]':>11} {'numpy [s]':>11} {'speedup':>9}")
    rows = {}
    for k in fast["times"]:
        a, b = fast["times"][k], slow["times"][k]
        rows[k] = {"numba": a, "numpy": b, "speedup": b / a if a > 0 else float("inf")}
        print(f"{k:<18} {a:>11.5f} {b:>11.5f} {rows[k]['speedup']:>8.1f}x")
    print(f"(total wall time {time.perf_counter() - t0:.1f}s)")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"scale": args.scale, "repeat": args.repeat, "kernels": rows}, fh, indent=2)


if __name__ == "__main__":
    main()
