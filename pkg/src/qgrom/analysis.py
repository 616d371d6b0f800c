"""Post-processing: rescaled-range Hurst estimation, mean-field error norms,
trajectory time averages, and CSV exports of coefficient time series.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np

from qgrom.fields import Field2D, l2_grid_norm
from qgrom.galerkin import RomTrajectory
from qgrom.pod import PodBasis, reconstruct_field


@dataclass
class HurstResult:
    h: float
    n_values: np.ndarray     # chunk sizes, strictly increasing
    rs_values: np.ndarray    # mean R/S per chunk size
    fit_r2: float


@dataclass
class ErrorReport:
    model: str
    r: int
    sigma: Optional[int]
    vorticity_l2: float
    streamfunction_l2: float

    def __post_init__(self):
        if self.vorticity_l2 < 0 or self.streamfunction_l2 < 0:
            raise ValueError("errors must be >= 0")


def hurst_exponent(series: np.ndarray) -> HurstResult:
    """R/S estimate of long-term persistence.

    Chunk-size ladder: powers of two from 8 up to len/2; disjoint chunks;
    per-chunk R = range of cumulative mean-deviations, S = population std.
    h is the slope of log(R/S) vs log(n).
    """
    series = np.asarray(series, dtype=np.float64).ravel()
    length = len(series)
    if length < 64:
        raise ValueError(f"series too short for R/S analysis: {length} < 64")
    n_values = []
    rs_values = []
    n = 8
    while n <= length // 2:
        n_chunks = length // n
        rs_sum = 0.0
        used = 0
        for c in range(n_chunks):
            chunk = series[c * n : (c + 1) * n]
            dev = chunk - chunk.mean()
            s = np.sqrt(np.mean(dev**2))
            if s == 0.0:
                continue    # flat chunk carries no R/S information
            z = np.cumsum(dev)
            rs_sum += (z.max() - z.min()) / s
            used += 1
        if used > 0:
            n_values.append(n)
            rs_values.append(rs_sum / used)
        n *= 2
    if len(n_values) < 2:
        raise ValueError("all chunks have zero variance; R/S undefined")
    log_n = np.log(np.array(n_values, dtype=np.float64))
    log_rs = np.log(np.array(rs_values))
    slope, intercept = np.polyfit(log_n, log_rs, 1)
    fitted = slope * log_n + intercept
    ss_res = np.sum((log_rs - fitted) ** 2)
    ss_tot = np.sum((log_rs - log_rs.mean()) ** 2)
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return HurstResult(
        h=float(slope),
        n_values=np.array(n_values),
        rs_values=np.array(rs_values),
        fit_r2=float(r2),
    )


def mean_field_error(rom_mean: Field2D, fom_mean: Field2D) -> float:
    """Grid L2 norm of the difference between two time-averaged fields."""
    return l2_grid_norm(rom_mean - fom_mean)


def trajectory_mean_fields(
    traj: RomTrajectory, basis: PodBasis
) -> tuple[Field2D, Field2D]:
    """Time-averaged vorticity and streamfunction of a ROM trajectory.

    Reconstruction is linear in the coefficients, so averaging the
    coefficients first gives the same result as averaging reconstructions.
    """
    if traj.a.shape[1] == 0:
        raise ValueError("empty trajectory")
    a_mean = traj.a.mean(axis=1)
    return (
        reconstruct_field(a_mean, basis, "omega"),
        reconstruct_field(a_mean, basis, "psi"),
    )


def export_timeseries(
    traj: RomTrajectory,
    true_proj: RomTrajectory,
    path,
    train_end: Optional[float] = None,
) -> None:
    """Write aligned predicted/true coefficient series as CSV.

    Columns: t, a1_pred..aR_pred, a1_true..aR_true. When train_end is given,
    a single comment row `# train_end = <t>` marks the training/testing
    boundary.
    """
    if traj.a.shape != true_proj.a.shape or not np.allclose(
        traj.times, true_proj.times
    ):
        raise ValueError("trajectories are not aligned on the same time grid")
    r = traj.r
    header = (
        ["t"]
        + [f"a{k + 1}_pred" for k in range(r)]
        + [f"a{k + 1}_true" for k in range(r)]
    )
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        if train_end is not None:
            fh.write(f"# train_end = {train_end!r}\n")
        for idx, t in enumerate(traj.times):
            row = [repr(float(t))]
            row += [repr(float(x)) for x in traj.a[:, idx]]
            row += [repr(float(x)) for x in true_proj.a[:, idx]]
            writer.writerow(row)


def parse_timeseries(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Inverse of export_timeseries: (times, a_pred (r,T), a_true (r,T))."""
    times, pred, true = [], [], []
    with open(path, newline="") as fh:
        rows = [line for line in fh if not line.startswith("#")]
    reader = csv.reader(rows)
    header = next(reader)
    r = (len(header) - 1) // 2
    for row in reader:
        times.append(float(row[0]))
        pred.append([float(x) for x in row[1 : 1 + r]])
        true.append([float(x) for x in row[1 + r :]])
    return np.array(times), np.array(pred).T, np.array(true).T


def write_error_report(reports: list[ErrorReport], path) -> None:
    """CSV table: model,R,sigma,vort_l2,psi_l2."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "R", "sigma", "vort_l2", "psi_l2"])
        for rep in reports:
            writer.writerow(
                [
                    rep.model,
                    rep.r,
                    "" if rep.sigma is None else rep.sigma,
                    repr(rep.vorticity_l2),
                    repr(rep.streamfunction_l2),
                ]
            )
