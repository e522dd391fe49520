"""Command line interface: ``irflab run`` and ``irflab list``.

Exit codes: 0 all verdicts satisfied, 1 a verdict violated, 2 inconclusive
verdicts only, 3 configuration or usage error, 4 time budget exceeded,
5 runtime failure inside the library.
"""
from __future__ import annotations

import argparse
import json
import os
import signal
import sys
import threading
from importlib import resources
from pathlib import Path

from . import config as C
from . import runner as Rn
from .errors import BudgetExceeded, ConfigError, IrfError


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(Rn.EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def preset_names() -> list:
    root = resources.files("irflab") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def preset_text(name: str) -> str:
    return (resources.files("irflab") / "presets" / f"{name}.yaml").read_text()


def load_target(target: str):
    """A path to a YAML file, or the name of a bundled preset."""
    if Path(target).is_file():
        return C.load(target)
    if target in preset_names():
        return C.parse_text(preset_text(target))
    raise ConfigError(f"{target!r} is neither a config file nor a preset (see `irflab list`)")


_fired = threading.Event()


def _budget_alarm(seconds, parallel):
    def fire(signum, frame):
        _fired.set()
        if parallel:
            # worker threads cannot be interrupted; leave without cleanup
            sys.stderr.write(f"irflab: time budget of {seconds:g}s exceeded\n")
            sys.stderr.flush()
            os._exit(Rn.EXIT_BUDGET)
        raise BudgetExceeded(f"time budget of {seconds:g}s exceeded")

    if threading.current_thread() is not threading.main_thread() or not hasattr(signal, "setitimer"):
        return None
    old = signal.signal(signal.SIGALRM, fire)
    signal.setitimer(signal.ITIMER_REAL, seconds)
    return old


def _clear_alarm(old):
    if old is None:
        return
    signal.setitimer(signal.ITIMER_REAL, 0)
    signal.signal(signal.SIGALRM, old)


def cmd_run(args) -> int:
    doc = load_target(args.target)
    exp = Rn.validate(doc, args.seed)
    if args.budget is not None:
        exp.budget = args.budget
    fmt = args.format or exp.out_format
    out = args.out or exp.out_path
    old = _budget_alarm(exp.budget, args.parallel > 1)
    try:
        report, timings = Rn.execute(exp, args.parallel)
    finally:
        _clear_alarm(old)
    text = Rn.to_json(report) if fmt == "json" else Rn.to_csv(report)
    if out:
        Path(out).write_text(text)
        Path(f"{out}.timings.json").write_text(json.dumps(timings, indent=2) + "\n")
    else:
        sys.stdout.write(text)
    if args.timings and not out:
        sys.stderr.write(json.dumps(timings) + "\n")
    s = report["summary"]
    sys.stderr.write(f"{exp.name}: {s['satisfied']} satisfied, {s['violated']} violated, "
                     f"{s['inconclusive']} inconclusive -> exit {s['exit_code']}\n")
    return s["exit_code"]


def cmd_list(args) -> int:
    for name in preset_names():
        doc = C.parse_text(preset_text(name))
        print(f"{name:<22} {doc.get('description', '')}")
    return Rn.EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="irflab", description="Stability checks for iterated random functions.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    r = sub.add_parser("run", help="run an experiment config or a bundled preset")
    r.add_argument("target", help="path to a YAML config, or a preset name")
    r.add_argument("--seed", type=int, help="override the config seed")
    r.add_argument("--out", help="write the report here (timings go to <out>.timings.json)")
    r.add_argument("--format", choices=("json", "csv"), help="report format (default from config, else json)")
    r.add_argument("--parallel", type=int, default=1, help="run checks on this many threads")
    r.add_argument("--budget", type=float, help="wall-clock budget in seconds (overrides the config)")
    r.add_argument("--timings", action="store_true", help="print timings to stderr when writing to stdout")
    r.set_defaults(func=cmd_run)
    ls = sub.add_parser("list", help="list bundled presets")
    ls.set_defaults(func=cmd_list)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _fired.clear()
    if getattr(args, "parallel", 1) < 1:
        sys.stderr.write("irflab: --parallel must be >= 1\n")
        return Rn.EXIT_CONFIG
    if getattr(args, "seed", None) is not None and not 0 <= args.seed < 2**64:
        sys.stderr.write("irflab: --seed must be in [0, 2^64)\n")
        return Rn.EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as e:
        sys.stderr.write(f"irflab: config error: {e}\n")
        return Rn.EXIT_CONFIG
    except BudgetExceeded as e:
        sys.stderr.write(f"irflab: {e}\n")
        return Rn.EXIT_BUDGET
    except Exception as e:
        # an alarm landing inside compiled code surfaces as a SystemError wrapping BudgetExceeded
        if _fired.is_set():
            sys.stderr.write("irflab: time budget exceeded\n")
            return Rn.EXIT_BUDGET
        if isinstance(e, IrfError):
            sys.stderr.write(f"irflab: {type(e).__name__}: {e}\n")
            return Rn.EXIT_RUNTIME
        raise


if __name__ == "__main__":
    sys.exit(main())
