"""Command-line front end: simulate, compare, verify-operators.

Exit codes: 0 success, 1 unexpected internal failure, 2 bad input
(config, arguments, malformed files), 3 simulation went unstable
(partial outputs are still written, plus a FAILED marker).
"""
import argparse
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import ConfigError, build_clock, build_model, parse_config
from .coupling import build_interface_operators, compatibility_residual
from .outputs import (
    OutputError,
    compare_seismograms,
    read_seismogram,
    write_energy,
    write_manifest,
    write_seismogram,
)
from .sbp1d import (
    OperatorBuildError,
    bounded_staggered_pair,
    periodic_staggered_pair,
    sbp_identity_residual,
)
from .simulation import MODES, UnstableRunError, run_model

SBP_SIZES = (8, 16, 33, 100)
COUPLING_SIZES = (4, 7, 200)
VERIFY_SPACINGS = (1.0, 0.005)


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="hybridwave",
        description="2D elastic wave propagation with a coupled "
        "finite-element / staggered finite-difference discretization.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a config and write CSV outputs")
    sim.add_argument("config", help="path to a run config file")
    sim.add_argument("--mode", choices=MODES, help="override the config's run mode")
    sim.add_argument("--out", help="override the output directory")
    sim.add_argument("--energy-stride", type=int, dest="energy_stride",
                     help="record energies every N steps")

    cmp_cmd = sub.add_parser("compare", help="misfit metrics for two seismograms")
    cmp_cmd.add_argument("trace_a", help="first seismogram CSV")
    cmp_cmd.add_argument("trace_b", help="second seismogram CSV")

    verify = sub.add_parser(
        "verify-operators",
        help="check the discrete integration-by-parts and coupling identities",
    )
    verify.add_argument("--sizes", type=int, nargs="+",
                        help="grid/interface sizes to test (default: built-in sets)")
    return parser


def _run_simulate(args):
    try:
        config = parse_config(args.config)
    except ConfigError as err:
        print(err, file=sys.stderr)
        return 2
    if args.energy_stride is not None and args.energy_stride < 1:
        print(f"--energy-stride must be at least 1, got {args.energy_stride}",
              file=sys.stderr)
        return 2
    overrides = {}
    if args.mode:
        overrides["mode"] = args.mode
    if args.out:
        overrides["out_dir"] = args.out
    if args.energy_stride:
        overrides["energy_stride"] = args.energy_stride
    config = replace(config, **overrides)

    try:
        model = build_model(config)
    except (ConfigError, ValueError) as err:
        print(err, file=sys.stderr)
        return 2
    clock = build_clock(config)

    out_dir = Path(config.out_dir) if config.out_dir else Path(
        f"runs/{Path(config.path).stem}"
    )
    out_dir.mkdir(parents=True, exist_ok=True)

    start = time.perf_counter()
    failure = None
    try:
        outputs = run_model(model, clock, energy_stride=config.energy_stride)
        status = "completed"
    except UnstableRunError as err:
        outputs = err.partial
        failure = err
        status = str(err)
    wall = time.perf_counter() - start

    write_seismogram(out_dir / "seismogram.csv", outputs.times, outputs.seismogram)
    write_energy(out_dir / "energy.csv", outputs.energy_times, outputs.energy)
    write_manifest(out_dir / "manifest.txt", config, config.mode, out_dir,
                   config.energy_stride, wall, status)
    if failure is not None:
        (out_dir / "FAILED").write_text(status + "\n")
        print(status, file=sys.stderr)
        print(f"partial outputs written to {out_dir}", file=sys.stderr)
        return 3
    print(f"{config.mode} run, {clock.n_steps} steps, "
          f"{len(config.receivers)} receiver(s), {wall:.1f}s")
    print(f"outputs written to {out_dir}")
    return 0


def _run_compare(args):
    try:
        times_a, traces_a = read_seismogram(args.trace_a)
        times_b, traces_b = read_seismogram(args.trace_b)
        if traces_a.shape != traces_b.shape:
            raise OutputError(
                f"shapes differ: {traces_a.shape} vs {traces_b.shape}"
            )
        if len(times_a) and np.abs(times_a - times_b).max() > 1e-12 * times_a[-1]:
            raise OutputError("time axes differ; traces are not comparable")
        for k in range(traces_a.shape[1]):
            rel, max_diff, lag = compare_seismograms(traces_a[:, k], traces_b[:, k])
            print(f"receiver_{k + 1}: relative_l2 = {rel:.6e}  "
                  f"max_abs_diff = {max_diff:.6e}  lag = {lag} samples")
    except OutputError as err:
        print(err, file=sys.stderr)
        return 2
    return 0


def _check(label, residual, bound):
    ok = residual <= bound
    print(f"  {label}: residual {residual:.3e} (bound {bound:.1e})"
          f"{'' if ok else '  FAIL'}")
    return ok


def _run_verify(args):
    sbp_sizes = tuple(args.sizes) if args.sizes else SBP_SIZES
    coupling_sizes = tuple(args.sizes) if args.sizes else COUPLING_SIZES
    all_ok = True

    print("staggered derivative pairs (integration-by-parts identity):")
    for dx in VERIFY_SPACINGS:
        for n in sbp_sizes:
            try:
                pair = bounded_staggered_pair(n, dx)
            except OperatorBuildError as err:
                print(f"  bounded n={n} dx={dx:g}: skipped ({err})")
            else:
                all_ok &= _check(f"bounded  n={n:>3} dx={dx:g}",
                                 sbp_identity_residual(pair), 1e-14 / dx)
            try:
                pair = periodic_staggered_pair(n, dx)
            except OperatorBuildError as err:
                print(f"  periodic n={n} dx={dx:g}: skipped ({err})")
            else:
                all_ok &= _check(f"periodic n={n:>3} dx={dx:g}",
                                 sbp_identity_residual(pair), 1e-14 / dx)

    print("interface quadrature compatibility:")
    for family in ("gauss3", "gll3"):
        for dx in VERIFY_SPACINGS:
            for n in coupling_sizes:
                ops = build_interface_operators(n, dx, family)
                all_ok &= _check(f"{family} n={n:>3} dx={dx:g}",
                                 compatibility_residual(ops), 1e-14)

    print("all identities hold" if all_ok else "FAILED: at least one residual too large")
    return 0 if all_ok else 1


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "simulate":
        return _run_simulate(args)
    if args.command == "compare":
        return _run_compare(args)
    return _run_verify(args)


if __name__ == "__main__":
    sys.exit(main())
