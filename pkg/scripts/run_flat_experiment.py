#!/usr/bin/env python3
"""Flat-interface benchmark: hybrid vs single-discretization references.

Runs the flat preset in all three modes (about 1.5e5 unknowns for 20000
steps each, a few minutes per mode), then prints pairwise seismogram
misfits and the relative energy drift after the source tapers off.
"""
import argparse
import sys
from pathlib import Path

import numpy as np

from hybridwave.cli import main as cli_main
from hybridwave.outputs import compare_seismograms, read_energy, read_seismogram

REPO = Path(__file__).resolve().parents[1]


def energy_flatness(energy_path, settle_time):
    times, table = read_energy(energy_path)
    total = table[times >= settle_time, 4]
    return float((total.max() - total.min()) / total.mean())


def run(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", default=str(REPO / "configs/flat.cfg"))
    parser.add_argument("--out-root", default="runs/flat-experiment")
    parser.add_argument("--modes", nargs="+", default=["hybrid", "fem", "fdm"],
                        choices=["hybrid", "fem", "fdm"])
    parser.add_argument("--settle-time", type=float, default=0.5,
                        help="start of the window for the energy-drift check")
    args = parser.parse_args(argv)

    root = Path(args.out_root)
    for mode in args.modes:
        print(f"=== {mode} ===", flush=True)
        code = cli_main(["simulate", args.config, "--mode", mode,
                         "--out", str(root / mode)])
        if code != 0:
            return code

    for mode in args.modes:
        drift = energy_flatness(root / mode / "energy.csv", args.settle_time)
        print(f"{mode}: relative energy drift after t={args.settle_time:g}s: "
              f"{drift:.3e}")

    for i, mode_a in enumerate(args.modes):
        for mode_b in args.modes[i + 1:]:
            _, traces_a = read_seismogram(root / mode_a / "seismogram.csv")
            _, traces_b = read_seismogram(root / mode_b / "seismogram.csv")
            for k in range(traces_a.shape[1]):
                rel, _, lag = compare_seismograms(traces_a[:, k], traces_b[:, k])
                print(f"{mode_a} vs {mode_b}, receiver_{k + 1}: "
                      f"relative_l2 = {rel:.4f}, lag = {lag}")
    return 0


if __name__ == "__main__":
    sys.exit(run())
