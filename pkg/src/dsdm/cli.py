"""Command-line entry point.

    dsdm simulate --scenario PATH|NAME --out PATH [--dt X] [--duration X]
    dsdm verify [--seed N] [--cases N]

Exit codes: 0 ok, 1 usage, 2 scenario parse/validation, 3 simulation failure,
4 verification failure.
"""

from __future__ import annotations

import argparse
import sys
import time
import warnings
from pathlib import Path

from . import verification
from .scenario import ScenarioError, ScenarioWarning, bundled_scenarios, load_scenario, with_overrides
from .simulator import SimulationDiverged, run_scenario, write_csv

EXIT_OK, EXIT_USAGE, EXIT_PARSE, EXIT_SIM, EXIT_VERIFY = 0, 1, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _resolve_scenario(arg: str) -> Path:
    path = Path(arg)
    if path.exists():
        return path
    bundled = bundled_scenarios()
    stem = path.stem if path.suffix == ".scenario" else arg
    if stem in bundled and path.parent == Path("."):
        return bundled[stem]
    raise FileNotFoundError(arg)


def _fmt(v) -> str:
    if v is None:
        return "absent"
    if isinstance(v, float):
        return f"{v:.4g}" if abs(v) >= 1e-3 or v == 0 else f"{v:.3e}"
    return str(v)


def cmd_simulate(args) -> int:
    try:
        path = _resolve_scenario(args.scenario)
    except FileNotFoundError:
        known = ", ".join(sorted(bundled_scenarios()))
        print(f"error: scenario {args.scenario!r} not found (bundled: {known})", file=sys.stderr)
        return EXIT_USAGE
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", ScenarioWarning)
            spec = with_overrides(load_scenario(path), dt=args.dt, duration=args.duration)
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
    except (ScenarioError, ValueError) as e:
        print(f"{path}: {e}", file=sys.stderr)
        return EXIT_PARSE

    t0 = time.perf_counter()
    try:
        result = run_scenario(spec.actuator, spec.load, spec.controller, spec.sim)
    except SimulationDiverged as e:
        print(f"simulation failed: {e}", file=sys.stderr)
        if e.last_record is not None:
            print(f"last record: {e.last_record}", file=sys.stderr)
        return EXIT_SIM
    elapsed = time.perf_counter() - t0

    try:
        write_csv(result.trace, args.out)
    except OSError as e:
        print(f"cannot write {args.out}: {e}", file=sys.stderr)
        return EXIT_USAGE

    print(f"scenario: {spec.name}")
    print(f"rows: {len(result.trace)}")
    if result.metrics is not None:
        for k, v in result.metrics.summary().items():
            print(f"{k}: {_fmt(v)}")
        final = result.trace[-1]
        print(f"final_mode: {final.mode.value}")
        print(f"final_theta_o: {final.theta_o:.6g}")
    print(f"events: {len(result.events)}")
    print(f"wall_time_s: {elapsed:.3f}")
    return EXIT_OK


def cmd_verify(args) -> int:
    results = verification.run_all(seed=args.seed, cases=args.cases)
    ok = True
    for r in results:
        print(r.line())
        for note in r.notes:
            print(f"    {note}")
        if not r.passed:
            ok = False
            print(f"    failing instance: {r.failure}")
    print("all properties pass" if ok else "verification FAILED")
    return EXIT_OK if ok else EXIT_VERIFY


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="dsdm", description="Dual-speed dual-motor actuator simulator.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sim = sub.add_parser("simulate", help="run a scenario and write its CSV trace")
    sim.add_argument("--scenario", required=True, help="scenario file, or a bundled name")
    sim.add_argument("--out", required=True, help="CSV output path")
    sim.add_argument("--dt", type=float, help="override [sim] dt")
    sim.add_argument("--duration", type=float, help="override [sim] duration")
    sim.set_defaults(func=cmd_simulate)

    ver = sub.add_parser("verify", help="run the seeded model property checks")
    ver.add_argument("--seed", type=int, default=0)
    ver.add_argument("--cases", type=int, default=1000)
    ver.set_defaults(func=cmd_verify)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "cases", 1) < 1:
        print("error: --cases must be positive", file=sys.stderr)
        return EXIT_USAGE
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
