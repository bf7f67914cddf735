"""Run outputs: CSV tables, seismogram comparison, and the manifest.

Tables are plain CSV with a header row; floats carry 17 significant
digits so a read-back reproduces the in-memory values bit-exactly.
Seismogram files hold a time column plus one column per receiver; energy
files hold the six bookkeeping columns produced by the stepper.
"""
import platform
import sys
from pathlib import Path

import numpy as np

ENERGY_COLUMNS = (
    "E_fem_kin", "E_fem_pot", "E_fdm_kin", "E_fdm_pot", "E_total", "E_total_naive"
)
XCORR_WINDOW = 50


class OutputError(ValueError):
    """An output file is malformed or tables are incompatible."""


def _write_table(path, header, times, values):
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if values.ndim != 2 or len(times) != len(values):
        raise OutputError(
            f"{path}: need one value row per time, got {values.shape} "
            f"for {len(times)} times"
        )
    rows = [",".join(header)]
    for t, row in zip(times, values):
        rows.append(",".join("%.17g" % v for v in (t, *row)))
    try:
        Path(path).write_text("\n".join(rows) + "\n")
    except OSError as err:
        raise OutputError(f"cannot write {path}: {err}") from None


def _read_table(path):
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as err:
        raise OutputError(f"cannot read {path}: {err}") from None
    if not lines:
        raise OutputError(f"{path}: empty file, expected a CSV header")
    header = lines[0].split(",")
    data = np.empty((len(lines) - 1, len(header)))
    for i, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != len(header):
            raise OutputError(
                f"{path}:{i}: expected {len(header)} columns, got {len(parts)}"
            )
        try:
            data[i - 2] = [float(p) for p in parts]
        except ValueError as err:
            raise OutputError(f"{path}:{i}: {err}") from None
    return header, data[:, 0], data[:, 1:]


def write_seismogram(path, times, traces):
    """Write receiver traces; ``traces`` is (n_times, n_receivers)."""
    traces = np.asarray(traces, dtype=float)
    header = ["t"] + [f"receiver_{k + 1}" for k in range(traces.shape[1])]
    _write_table(path, header, times, traces)


def read_seismogram(path):
    header, times, traces = _read_table(path)
    if not header or header[0] != "t":
        raise OutputError(f"{path}: expected a 't' column first, got {header[:1]}")
    return times, traces


def write_energy(path, times, table):
    """Write the energy table; ``table`` is (n_samples, 6)."""
    table = np.asarray(table, dtype=float)
    if table.ndim != 2 or table.shape[1] != len(ENERGY_COLUMNS):
        raise OutputError(
            f"{path}: energy table needs {len(ENERGY_COLUMNS)} columns, "
            f"got {table.shape}"
        )
    _write_table(path, ("t",) + ENERGY_COLUMNS, times, table)


def read_energy(path):
    header, times, table = _read_table(path)
    if tuple(header) != ("t",) + ENERGY_COLUMNS:
        raise OutputError(f"{path}: unexpected energy header {header}")
    return times, table


def compare_seismograms(a, b):
    """(relative_l2, max_abs_diff, lag_at_peak_xcorr) for two equal traces.

    The relative misfit normalizes by the larger of the two norms (or the
    smallest positive float, so identical zero traces compare as 0).  The
    lag scans +-XCORR_WINDOW samples; positive lag means b trails a, and
    ties go to the smallest magnitude.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 1 or b.ndim != 1:
        raise OutputError("compare_seismograms works on single traces")
    if len(a) != len(b):
        raise OutputError(f"trace lengths differ: {len(a)} vs {len(b)}")
    n = len(a)
    if n == 0:
        return 0.0, 0.0, 0
    norm_a = float(np.linalg.norm(a))
    norm_b = float(np.linalg.norm(b))
    relative = float(np.linalg.norm(a - b)) / max(norm_a, norm_b, np.finfo(float).tiny)
    max_diff = float(np.abs(a - b).max())

    best_lag, best_score = 0, -np.inf
    for lag in range(-min(XCORR_WINDOW, n - 1), min(XCORR_WINDOW, n - 1) + 1):
        if lag >= 0:
            score = float(a[: n - lag] @ b[lag:])
        else:
            score = float(a[-lag:] @ b[: n + lag])
        if score > best_score or (score == best_score and abs(lag) < abs(best_lag)):
            best_lag, best_score = lag, score
    return relative, max_diff, best_lag


def write_manifest(path, config, mode, out_dir, energy_stride, wall_seconds,
                   status, versions=None):
    """Record everything needed to re-run: versions, settings, config echo."""
    if versions is None:
        import scipy

        from . import __version__

        versions = {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "hybridwave": __version__,
        }
    lines = [
        "hybridwave run manifest",
        f"config: {config.path}",
        f"scenario: {config.scenario}",
        f"mode: {mode}",
        f"out: {out_dir}",
        f"energy_stride: {energy_stride}",
        f"status: {status}",
        f"wall_seconds: {wall_seconds:.3f}",
        f"command: {' '.join(sys.argv)}",
    ]
    lines += [f"version {name}: {value}" for name, value in sorted(versions.items())]
    lines += ["", "--- config echo ---", config.raw_text.rstrip("\n"), ""]
    Path(path).write_text("\n".join(lines))
