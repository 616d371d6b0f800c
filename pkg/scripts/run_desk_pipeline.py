"""Desk-scale end-to-end experiment: FOM -> POD -> ROM-GP / ROM-LSTM -> report.

Runs the whole pipeline through the CLI stage commands so every artifact is a
reloadable QGRM file. Expect roughly half an hour; the FOM integration
(129x257, dt=5e-5, t=0..50) dominates.

    python3 scripts/run_desk_pipeline.py [outdir]
"""

import pathlib
import sys
import time

from qgrom.cli import main

OUT = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else "artifacts")
OUT.mkdir(parents=True, exist_ok=True)

FOM_CFG = """\
# double-gyre barotropic vorticity run, desk resolution
nx = 129
ny = 257
re = 450
ro = 3.6e-3
dt = 5e-5
t_start = 0
t_end = 50
snapshot_t0 = 10
snapshot_t1 = 50
n_snapshots = 200
perturbation = 1e-3
mean_t0 = 10
mean_t1 = 50
"""

# snapshot spacing of the training window
STEP = 40.0 / 199.0


def stage(name, argv):
    t0 = time.perf_counter()
    rc = main(argv)
    print(f"[{name}] rc={rc} {time.perf_counter() - t0:.1f}s", flush=True)
    if rc != 0:
        sys.exit(rc)


def write(name, text):
    p = OUT / name
    p.write_text(text)
    return str(p)


fom_cfg = write("fom.cfg", FOM_CFG)
stage("fom", ["fom", "--config", fom_cfg, "--out", str(OUT / "snaps.qgrm")])

pod_cfg = write("pod.cfg", f"snapshots = {OUT / 'snaps.qgrm'}\nr = 10\n")
stage("pod", ["pod", "--config", pod_cfg, "--out", str(OUT / "basis.qgrm")])

gp_cfg = write(
    "gp.cfg",
    f"basis = {OUT / 'basis.qgrm'}\nre = 450\nro = 3.6e-3\ndt = 1e-4\nt0 = 10\nt1 = 100\n",
)
stage("rom-gp", ["rom-gp", "--config", gp_cfg, "--out", str(OUT / "traj_gp.qgrm")])

for sigma in (1, 5):
    train_cfg = write(
        f"train_s{sigma}.cfg",
        f"basis = {OUT / 'basis.qgrm'}\nsigma = {sigma}\nseed = 0\n",
    )
    stage(
        f"train s={sigma}",
        ["train", "--config", train_cfg, "--out", str(OUT / f"model_s{sigma}.qgrm")],
    )
    pred_cfg = write(
        f"pred_s{sigma}.cfg",
        f"model = {OUT / f'model_s{sigma}.qgrm'}\nbasis = {OUT / 'basis.qgrm'}\n"
        f"t0 = 10\nt1 = 100\nstep = {STEP!r}\n",
    )
    stage(
        f"predict s={sigma}",
        ["predict", "--config", pred_cfg, "--out", str(OUT / f"traj_lstm_s{sigma}.qgrm")],
    )

an_cfg = write(
    "analyze.cfg",
    f"basis = {OUT / 'basis.qgrm'}\nsnapshots = {OUT / 'snaps.qgrm'}\n"
    f"trajectories = {OUT / 'traj_gp.qgrm'}, {OUT / 'traj_lstm_s5.qgrm'}, "
    f"{OUT / 'traj_lstm_s1.qgrm'}\n"
    "labels = rom-gp, rom-lstm, rom-lstm\n"
    "sigmas = , 5, 1\n"
    f"timeseries_out = {OUT / 'series_gp.csv'}\n"
    "train_end = 50\n"
    "hurst_modes = 3\n",
)
stage("analyze", ["analyze", "--config", an_cfg, "--out", str(OUT / "report.csv")])
print((OUT / "report.csv").read_text())
