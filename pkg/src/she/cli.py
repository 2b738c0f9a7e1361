"""Command-line entry point.

Exit codes: 0 on success, 2 when the radar target had to be relaxed, 1 on error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import runner, serialization as ser
from .array_model import desk_config
from .metrics import transmit_beampattern, write_beampattern_csv

log = logging.getLogger("she")

EXIT_OK, EXIT_ERROR, EXIT_RELAXED = 0, 1, 2


def _load_config(path: Optional[str]):
    return ser.load_config(path) if path else desk_config()


def _load_options(path: Optional[str]) -> runner.RunOptions:
    return ser.options_from_dict(ser.read_json(path)) if path else runner.RunOptions()


def _write_run(result: runner.RunResult, config, out: Path) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    checks = runner.post_hoc_checks(result, config)
    record = {"summary": result.summary(), "checks": checks,
              "config": ser.config_to_dict(config)}
    ser.write_json(out / "result.json", record)
    ser.save_beamformers(out / "beamformers.json", result.beamformers, result.filter)
    ser.write_rows_csv(out / "trace.csv", result.trace)
    if result.inner_trace:
        ser.write_rows_csv(out / "inner_trace.csv", result.inner_trace)
    return record


def _report(result: runner.RunResult, record: dict) -> int:
    s = record["summary"]
    print(f"{s['variant']} seed={s['seed']} status={s['status']} "
          f"worst_case_sr={s['secrecy_rate_worst']:.6f} outer={s['outer_iterations']} "
          f"time={s['wall_time']:.1f}s")
    failed = [k for k, ok in record["checks"].items() if not ok]
    if failed:
        print("post-hoc checks failed: " + ", ".join(failed))
    if result.status == runner.INFEASIBLE_RELAXED:
        print(f"WARNING: radar SINR target relaxed to {s['achieved_gamma_db']:.2f} dB",
              file=sys.stderr)
        return EXIT_RELAXED
    return EXIT_OK


def cmd_run(args) -> int:
    config = _load_config(args.config)
    opts = _load_options(args.options)
    if args.max_outer is not None:
        opts.max_outer = args.max_outer
    variant = getattr(args, "variant", "SHE")
    result = runner.run_baseline(config, variant, args.seed, opts)
    record = _write_run(result, config, Path(args.out))
    return _report(result, record)


def cmd_sweep(args) -> int:
    spec = ser.experiment_from_dict(ser.read_json(args.spec), Path(args.spec).parent)
    if args.out:
        spec.output_dir = args.out
    report = runner.run_experiment(spec)
    for e in report["entries"]:
        print(f"{e['variant']:>14} {spec.sweep_param}={e['value']:<8g} "
              f"mean={e['mean']:.4f} std={e['std']:.4f} trials={e['trials']} "
              f"failures={e['failures']}")
    return EXIT_OK


def cmd_pattern(args) -> int:
    bf = ser.load_beamformers(args.beamformers)
    grid = np.arange(args.start, args.stop + 0.5 * args.step, args.step)
    write_beampattern_csv(args.out, grid, transmit_beampattern(bf, grid, args.spacing))
    print(f"wrote {len(grid)} angles to {args.out}")
    return EXIT_OK


def cmd_validate(args) -> int:
    config = ser.load_config(args.config)
    print(json.dumps(ser.config_to_dict(config), indent=2, default=ser._json_default))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="she", description="Secure hybrid beamforming for DFRC "
                                "transmitters with an integrated sensing-and-security stream.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def run_args(sp):
        sp.add_argument("--config", help="JSON config (default: desk preset)")
        sp.add_argument("--options", help="JSON run options")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", default="run_output")
        sp.add_argument("--max-outer", type=int)

    sp = sub.add_parser("run", help="single run of the proposed design")
    run_args(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("baseline", help="single run of a benchmark variant")
    run_args(sp)
    sp.add_argument("--variant", required=True, choices=runner.VARIANTS)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("sweep", help="Monte Carlo sweep from a JSON experiment spec")
    sp.add_argument("--spec", required=True)
    sp.add_argument("--out", help="override the spec's output directory")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("pattern", help="transmit beampattern CSV of saved beamformers")
    sp.add_argument("--beamformers", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--start", type=float, default=-90.0)
    sp.add_argument("--stop", type=float, default=90.0)
    sp.add_argument("--step", type=float, default=0.5)
    sp.add_argument("--spacing", type=float, default=0.5, help="element spacing / wavelength")
    sp.set_defaults(func=cmd_pattern)

    sp = sub.add_parser("validate-config", help="parse a config and print it as run")
    sp.add_argument("--config", required=True)
    sp.set_defaults(func=cmd_validate)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # usage errors share the generic error code
        return EXIT_OK if exc.code in (0, None) else EXIT_ERROR
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Exception as exc:  # any failure maps to exit code 1
        log.debug("command failed", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
