"""Command-line front end for running sweep scenarios.

Exit codes: 0 on success, 1 for configuration problems (bad scenario, bad
key, unreadable file), 2 when one or more sweep points failed numerically —
partial results are still written in that case.
"""

from __future__ import annotations

import argparse
import sys

from .experiments import (
    ConfigError,
    apply_settings,
    builtin_scenarios,
    emit,
    fast_variant,
    path_label,
    resolve_scenario,
    run_scenario,
)


class _Parser(argparse.ArgumentParser):
    # argparse reserves exit code 2 for usage errors; here 2 means a
    # numerical failure, so usage errors are routed to the config path
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="kpo-anneal",
                     description="Run Kerr-oscillator sweep scenarios.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario and write a result table")
    run.add_argument("--scenario", required=True,
                     help="built-in name or path to a scenario file")
    run.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                     help="override a scenario key (repeatable; same keys as "
                          "scenario files, e.g. gamma_khz=6.8 or "
                          "sweep.theta_p_pi=0,0.5,1)")
    run.add_argument("--fast", action="store_true",
                     help="desk-scale variant: 14 levels per mode, pumps "
                          "rescaled to amplitude 2")
    run.add_argument("--out", required=True, help="output file path")
    run.add_argument("--format", choices=("csv", "json"), default="csv")
    run.add_argument("--workers", type=int, default=1,
                     help="parallel sweep points (default 1)")
    run.add_argument("--dim", type=int, default=None,
                     help="override levels per mode")
    run.add_argument("--dt", type=float, default=None, metavar="NS",
                     help="fixed integrator step in nanoseconds")
    run.set_defaults(func=_cmd_run)

    ls = sub.add_parser("list-scenarios", help="list built-in scenarios")
    ls.set_defaults(func=_cmd_list)

    val = sub.add_parser("validate", help="check a scenario file")
    val.add_argument("file")
    val.set_defaults(func=_cmd_validate)
    return parser


def _split_kv(text: str):
    key, sep, value = text.partition("=")
    if not sep or not key.strip() or not value.strip():
        raise ConfigError(f"--set expects KEY=VALUE, got {text!r}")
    return key.strip(), value.strip()


def _cmd_run(args) -> int:
    scenario = resolve_scenario(args.scenario)
    if args.set:
        scenario = apply_settings(scenario, [_split_kv(s) for s in args.set])
    if args.fast:
        scenario = fast_variant(scenario)
    overrides = []
    if args.dim is not None:
        overrides.append(("dim_per_mode", str(args.dim)))
    if args.dt is not None:
        overrides.append(("dt_ns", str(args.dt)))
    if overrides:
        scenario = apply_settings(scenario, overrides)
    result = run_scenario(scenario, workers=args.workers)
    emit(result, args.format, args.out)
    failed = [r for r in result.rows if r.error]
    if failed:
        print(f"{len(failed)} of {len(result.rows)} sweep points failed; "
              f"first error: {failed[0].error}", file=sys.stderr)
        return 2
    print(f"wrote {len(result.rows)} row(s) to {args.out}")
    return 0


def _cmd_list(args) -> int:
    for name, s in sorted(builtin_scenarios().items()):
        dims = "x".join(str(d) for d in s.truncation.dims)
        axes = ", ".join(f"{path_label(p)} ({len(v)} values)"
                         for p, v in s.sweep) or "single point"
        print(f"{name:13s} {s.system.n_modes} mode(s), dims {dims:6s} sweep: {axes}")
    return 0


def _cmd_validate(args) -> int:
    scenario = resolve_scenario(args.file)
    n_points = 1
    for _, values in scenario.sweep:
        n_points *= len(values)
    dims = "x".join(str(d) for d in scenario.truncation.dims)
    print(f"ok: {scenario.name}: {scenario.system.n_modes} mode(s), "
          f"dims {dims}, {n_points} sweep point(s)")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
