#!/usr/bin/env python3
"""Sinusoidal-topography benchmark: hybrid vs an all-element reference.

The full preset (1250 x 400 cells/elements, 30000 steps) takes a while;
--scaled shrinks the domain to one fifth in each direction and runs 6000
steps, which finishes in a few minutes and shows the same behavior.
"""
import argparse
import sys
from pathlib import Path

from hybridwave.cli import main as cli_main
from hybridwave.outputs import compare_seismograms, read_energy, read_seismogram

REPO = Path(__file__).resolve().parents[1]

SCALED = """\
# one-fifth version of configs/sinusoidal.cfg (auto-generated)
[scenario]
kind = sinusoidal
mode = hybrid

[geometry]
width = 1250
dx = 5
nx = 250
fem_ny = 20
fdm_ny = 60
base_height = 100
amplitude_fraction = 0.2

[medium]
kind = constant
rho = 2300
cp = 3500
cs = 1800

[time]
dt = 2e-4
n_steps = 6000

[discretization]
quadrature = gll3

[source]
frequency = 5.0
delay = 0.25
amplitude = 1.0
x = 312.5
y = 356.2

[receivers]
point = 625 334

[output]
energy_stride = 10
"""


def run(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", default=str(REPO / "configs/sinusoidal.cfg"))
    parser.add_argument("--out-root", default="runs/sinusoidal-experiment")
    parser.add_argument("--scaled", action="store_true",
                        help="run the one-fifth domain instead of the full preset")
    parser.add_argument("--settle-time", type=float, default=0.5)
    args = parser.parse_args(argv)

    root = Path(args.out_root)
    config = args.config
    if args.scaled:
        root.mkdir(parents=True, exist_ok=True)
        config = root / "scaled.cfg"
        config.write_text(SCALED)
        config = str(config)

    for mode in ("hybrid", "fem"):
        print(f"=== {mode} ===", flush=True)
        code = cli_main(["simulate", config, "--mode", mode,
                         "--out", str(root / mode)])
        if code != 0:
            return code

    for mode in ("hybrid", "fem"):
        times, table = read_energy(root / mode / "energy.csv")
        total = table[times >= args.settle_time, 4]
        drift = (total.max() - total.min()) / total.mean()
        print(f"{mode}: relative energy drift after t={args.settle_time:g}s: "
              f"{drift:.3e}")

    _, traces_h = read_seismogram(root / "hybrid" / "seismogram.csv")
    _, traces_f = read_seismogram(root / "fem" / "seismogram.csv")
    for k in range(traces_h.shape[1]):
        rel, _, lag = compare_seismograms(traces_h[:, k], traces_f[:, k])
        print(f"hybrid vs fem, receiver_{k + 1}: relative_l2 = {rel:.4f}, "
              f"lag = {lag}")
    return 0


if __name__ == "__main__":
    sys.exit(run())
