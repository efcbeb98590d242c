"""Command-line front door: build, verify and simulate delivery plans.

Subcommands
-----------

``plan``      build a delivery plan from a config file (or elevate a saved
              single-stream baseline) and write it as JSON.
``verify``    check a saved plan file for symbol-level decodability.
``simulate``  Monte-Carlo SNR sweep; emits CSV.
``fixtures``  regenerate the shipped six-user worked-example files.

Exit codes: 0 success (and verification pass), 1 verification failure,
2 usage or parse error, 3 numerical failure.  JSON and CSV payloads go to
standard output only; every diagnostic goes to standard error.  The default
simulation seed comes from the ``MIMO_CC_SEED`` environment variable when
set; the ``--seed`` flag overrides it.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .errors import MimoCcError, NumericalError
from .evaluator import (
    EVAL_MODES,
    STRATEGIES,
    SimulationParams,
    run_sweep,
    write_csv_many,
)
from .fixtures import k6_baseline, k6_elevated
from .model import NetworkConfig, apply_overrides, parse_config_file, validate_config
from .optimizer import OptSchedule
from .plan_io import (
    export_plan,
    import_baseline,
    import_plan,
    load_baseline,
    save_baseline,
    save_plan,
)
from .schemes import (
    build_multicast_plan,
    build_unicast_plan,
    count_dof,
    elevate_baseline,
    plan_subpacketization,
    validate_baseline,
    with_demands,
)
from .verifier import format_report, report_to_dict, verify_plan

SEED_ENV_VAR = "MIMO_CC_SEED"


def _parse_demands(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(","))
    except ValueError:
        raise MimoCcError(f"demands must be comma-separated integers, got {text!r}")


def parse_snr_points(text: str) -> tuple[float, ...]:
    """Either a comma list ("0,5,10") or an inclusive range "start:step:stop"."""
    try:
        if ":" in text:
            parts = text.split(":")
            if len(parts) != 3:
                raise ValueError("range needs exactly start:step:stop")
            start, step, stop = (float(p) for p in parts)
            if step <= 0:
                raise ValueError("step must be positive")
            if stop < start:
                raise ValueError("stop must not precede start")
            count = int((stop - start) / step + 1e-9) + 1
            return tuple(start + i * step for i in range(count))
        return tuple(float(p) for p in text.split(","))
    except ValueError as exc:
        raise MimoCcError(f"bad SNR argument {text!r}: {exc}") from None


def _load_config(path: str, overrides) -> NetworkConfig:
    raw = parse_config_file(path)
    if overrides:
        raw = apply_overrides(raw, overrides)
    return validate_config(raw)


def _emit(text: str, out_path: str | None) -> None:
    if out_path is None:
        sys.stdout.write(text)
    else:
        with open(out_path, "w", encoding="utf-8") as f:
            f.write(text)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_plan(args) -> int:
    demands = _parse_demands(args.demands) if args.demands else None
    if args.mode == "elevated":
        if args.baseline is None:
            raise _Usage("--mode elevated requires --baseline")
        if args.config is not None:
            raise _Usage(
                "elevated plans take their dimensions from the baseline; "
                "drop the config argument"
            )
        baseline = load_baseline(args.baseline)
        streams = args.streams if args.streams is not None else baseline.multiplexing
        plan = elevate_baseline(baseline, streams)
        if demands is not None:
            plan = with_demands(plan, demands)
    else:
        if args.config is None:
            raise _Usage(f"--mode {args.mode} requires a config file argument")
        config = _load_config(args.config, args.set)
        builder = build_multicast_plan if args.mode == "multicast" else build_unicast_plan
        plan = builder(config, demands)

    _emit(export_plan(plan), args.out)
    config = plan.config
    print(
        f"mode={plan.mode} users={config.num_users} transmissions="
        f"{len(plan.transmissions)} dof={count_dof(config, plan.mode)} "
        f"subpacketization={plan_subpacketization(plan)}",
        file=sys.stderr,
    )
    return 0


def cmd_verify(args) -> int:
    with open(args.plan, "r", encoding="utf-8") as f:
        text = f.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        print(f"error: not JSON: {exc}", file=sys.stderr)
        return 2
    if isinstance(doc, dict) and doc.get("format") == "mimo-cc-baseline":
        baseline = import_baseline(text)
        try:
            validate_baseline(baseline)
        except MimoCcError as exc:
            print(f"verification failed: {exc}", file=sys.stderr)
            return 1
        print(
            f"baseline ok: {len(baseline.transmissions)} transmissions, "
            f"{baseline.num_users} users",
            file=sys.stderr,
        )
        return 0

    plan = import_plan(text)
    report = verify_plan(plan)
    if args.format == "json":
        print(json.dumps(report_to_dict(report), indent=2, sort_keys=True))
    else:
        print(format_report(report))
    return 0 if report.verdict else 1


def cmd_simulate(args) -> int:
    config = _load_config(args.config, args.set)
    snr = parse_snr_points(args.snr)
    if args.seed is not None:
        seed = args.seed
    else:
        seed = int(os.environ.get(SEED_ENV_VAR, "0"))
    schedule_args = {
        key: value
        for key, value in (
            ("tol", args.tol),
            ("max_outer", args.max_outer),
            ("max_inner", args.max_inner),
            ("softmin_temperature_factor", args.softmin_temperature_factor),
        )
        if value is not None
    }
    schedule = OptSchedule(**schedule_args) if schedule_args else None

    modes = args.modes.split(",")
    strategies = args.strategies.split(",")
    reports = []
    for mode in modes:
        for strategy in strategies:
            params = SimulationParams(
                config=config,
                snr_points_db=snr,
                trials=args.trials,
                master_seed=seed,
                mode=mode,
                strategy=strategy,
                schedule=schedule,
            )

            def progress(done, total, _mode=mode, _strategy=strategy):
                print(
                    f"{_mode}/{_strategy}: trial {done}/{total}",
                    file=sys.stderr,
                    flush=True,
                )

            reports.append(run_sweep(params, progress=progress if args.progress else None))
    if args.out is None:
        write_csv_many(reports, sys.stdout)
    else:
        write_csv_many(reports, args.out)
    return 0


def cmd_fixtures(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    baseline_path = os.path.join(args.out, "k6_baseline.json")
    elevated_path = os.path.join(args.out, "k6_elevated.json")
    save_baseline(k6_baseline(), baseline_path)
    save_plan(k6_elevated(), elevated_path)
    print(f"wrote {baseline_path}", file=sys.stderr)
    print(f"wrote {elevated_path}", file=sys.stderr)
    return 0


# ---------------------------------------------------------------------------
# parser and dispatch
# ---------------------------------------------------------------------------


class _Usage(Exception):
    """Command-level usage error (exit 2)."""


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mimo-cc",
        description="Cache-aided MIMO delivery: plan construction, "
        "verification and rate simulation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_plan = sub.add_parser("plan", help="build a delivery plan")
    p_plan.add_argument("config", nargs="?", help="config file (key=value lines)")
    p_plan.add_argument(
        "--mode",
        choices=("unicast", "multicast", "elevated"),
        default="unicast",
    )
    p_plan.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a config key",
    )
    p_plan.add_argument("--demands", help="comma list, one file index per user")
    p_plan.add_argument("--baseline", help="saved single-stream plan to elevate")
    p_plan.add_argument(
        "--streams",
        type=int,
        help="streams per user for elevation (default: the baseline's "
        "multiplexing order)",
    )
    p_plan.add_argument("--out", help="output path (default: stdout)")
    p_plan.set_defaults(func=cmd_plan)

    p_verify = sub.add_parser("verify", help="check a saved plan decodes")
    p_verify.add_argument("plan", help="plan file to verify")
    p_verify.add_argument("--format", choices=("table", "json"), default="table")
    p_verify.set_defaults(func=cmd_verify)

    p_sim = sub.add_parser("simulate", help="Monte-Carlo SNR sweep")
    p_sim.add_argument("config", help="config file (key=value lines)")
    p_sim.add_argument(
        "--set", action="append", default=[], metavar="KEY=VALUE",
        help="override a config key",
    )
    p_sim.add_argument(
        "--modes",
        default="mimo-unicast,mimo-multicast,virtual-miso",
        help=f"comma list from {','.join(EVAL_MODES)}",
    )
    p_sim.add_argument(
        "--strategies", default="zf", help=f"comma list from {','.join(STRATEGIES)}"
    )
    p_sim.add_argument(
        "--snr",
        default="0:5:30",
        help="dB points: comma list or inclusive start:step:stop",
    )
    p_sim.add_argument("--trials", type=int, default=50)
    p_sim.add_argument(
        "--seed",
        type=int,
        help=f"master seed (default: ${SEED_ENV_VAR} or 0)",
    )
    p_sim.add_argument("--out", help="CSV path (default: stdout)")
    p_sim.add_argument(
        "--progress", action="store_true", help="report per-trial progress on stderr"
    )
    p_sim.add_argument("--tol", type=float, help="optimizer convergence tolerance")
    p_sim.add_argument("--max-outer", type=int, help="optimizer outer iteration cap")
    p_sim.add_argument("--max-inner", type=int, help="optimizer inner iteration cap")
    p_sim.add_argument(
        "--softmin-temperature-factor",
        type=float,
        help="soft-min temperature as a fraction of the current objective",
    )
    p_sim.set_defaults(func=cmd_simulate)

    p_fix = sub.add_parser(
        "fixtures", help="regenerate the shipped worked-example files"
    )
    p_fix.add_argument("--out", default="fixtures", help="output directory")
    p_fix.set_defaults(func=cmd_fixtures)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 2
    try:
        return args.func(args)
    except _Usage as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except (MimoCcError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
