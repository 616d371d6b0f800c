"""Command-line pipeline: one subcommand per stage.

    qgrom fom     --config run.cfg --out snaps.qgrm
    qgrom pod     --config run.cfg --out basis.qgrm
    qgrom rom-gp  --config run.cfg --out traj_gp.qgrm
    qgrom train   --config run.cfg --out model.qgrm
    qgrom predict --config run.cfg --out traj_lstm.qgrm
    qgrom analyze --config run.cfg --out report.csv

Configs are flat `key = value` files; unknown keys are rejected. Exit codes:
1 configuration error, 2 I/O or artifact-format error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from qgrom import analysis, galerkin, io, lstm, pod
from qgrom.fields import Grid, l2_grid_norm
from qgrom.fom import DivergenceError, FomConfig, run_fom
from qgrom.galerkin import RomTrajectory
from qgrom.io import ConfigError
from qgrom.pod import RankError

EXIT_CONFIG = 1
EXIT_IO = 2
EXIT_NUMERICAL = 3


def cmd_fom(cfg: dict, seed: int | None, out: str) -> None:
    io.check_keys(
        cfg,
        required={
            "nx", "ny", "re", "ro", "dt", "t_start", "t_end",
            "snapshot_t0", "snapshot_t1", "n_snapshots",
        },
        optional={"perturbation", "mean_t0", "mean_t1"},
    )
    grid = Grid(nx=io.get_int(cfg, "nx"), ny=io.get_int(cfg, "ny"))
    fom_cfg = FomConfig(
        grid=grid,
        re=io.get_float(cfg, "re"),
        ro=io.get_float(cfg, "ro"),
        dt=io.get_float(cfg, "dt"),
        t_start=io.get_float(cfg, "t_start"),
        t_end=io.get_float(cfg, "t_end"),
        snapshot_t0=io.get_float(cfg, "snapshot_t0"),
        snapshot_t1=io.get_float(cfg, "snapshot_t1"),
        n_snapshots=io.get_int(cfg, "n_snapshots"),
        seed_perturbation_amplitude=(
            io.get_float(cfg, "perturbation") if "perturbation" in cfg else 0.0
        ),
        mean_t0=io.get_float(cfg, "mean_t0") if "mean_t0" in cfg else None,
        mean_t1=io.get_float(cfg, "mean_t1") if "mean_t1" in cfg else None,
    )
    snaps = run_fom(fom_cfg)
    io.write_snapshots(out, snaps)
    print(
        f"grid={grid.nx}x{grid.ny} snapshots={snaps.n_snapshots} "
        f"t=[{snaps.times[0]:g},{snaps.times[-1]:g}] "
        f"|omega_mean|={l2_grid_norm(snaps.omega_mean):.6g} "
        f"|psi_mean|={l2_grid_norm(snaps.psi_mean):.6g}"
    )


def cmd_pod(cfg: dict, seed: int | None, out: str) -> None:
    io.check_keys(cfg, required={"snapshots", "r"}, optional=set())
    snaps = io.read_snapshots(cfg["snapshots"])
    basis = pod.build_basis(snaps, io.get_int(cfg, "r"))
    io.write_basis(out, basis)
    frac = basis.lambdas[: basis.r].sum() / basis.lambdas.sum()
    print(
        f"r={basis.r} snapshots={basis.n_snapshots} "
        f"energy_captured={frac:.6f} lambda1={basis.lambdas[0]:.6g}"
    )


def cmd_romgp(cfg: dict, seed: int | None, out: str) -> None:
    io.check_keys(cfg, required={"basis", "re", "ro", "dt", "t0", "t1"}, optional=set())
    basis = io.read_basis(cfg["basis"])
    tensors = galerkin.assemble_tensors(
        basis, io.get_float(cfg, "re"), io.get_float(cfg, "ro")
    )
    traj = galerkin.integrate_gp(
        basis.a_train[:, 0],
        tensors,
        io.get_float(cfg, "dt"),
        (io.get_float(cfg, "t0"), io.get_float(cfg, "t1")),
    )
    io.write_trajectory(out, traj)
    note = f" diverged_at={traj.diverged_at:g}" if traj.diverged_at is not None else ""
    print(f"r={traj.r} states={traj.a.shape[1]} t_last={traj.times[-1]:g}{note}")


def cmd_train(cfg: dict, seed: int | None, out: str) -> None:
    io.check_keys(
        cfg,
        required={"basis", "sigma"},
        optional={
            "epochs", "batch_size", "learning_rate", "validation_fraction",
            "n_layers", "hidden", "seed",
        },
    )
    basis = io.read_basis(cfg["basis"])
    kwargs = {}
    for key, getter in (
        ("epochs", io.get_int),
        ("batch_size", io.get_int),
        ("learning_rate", io.get_float),
        ("validation_fraction", io.get_float),
        ("n_layers", io.get_int),
        ("hidden", io.get_int),
        ("seed", io.get_int),
    ):
        if key in cfg:
            kwargs[key] = getter(cfg, key)
    if seed is not None:
        kwargs["seed"] = seed
    train_cfg = lstm.TrainConfig(**kwargs)
    model, history = lstm.train(basis.a_train, io.get_int(cfg, "sigma"), train_cfg)
    io.write_model(out, model)
    print(
        f"r={model.r} sigma={model.sigma} layers={len(model.layers)}x{model.hidden} "
        f"epochs={train_cfg.epochs} train_mse={history['train'][-1]:.6g} "
        f"val_mse={history['val'][-1]:.6g}"
    )


def cmd_predict(cfg: dict, seed: int | None, out: str) -> None:
    io.check_keys(cfg, required={"model", "basis", "t0", "t1", "step"}, optional=set())
    model = io.read_model(cfg["model"])
    basis = io.read_basis(cfg["basis"])
    if basis.r != model.r:
        raise ConfigError(f"basis has {basis.r} modes but model expects {model.r}")
    t0 = io.get_float(cfg, "t0")
    t1 = io.get_float(cfg, "t1")
    step = io.get_float(cfg, "step")
    if step <= 0 or t1 <= t0:
        raise ConfigError("need step > 0 and t1 > t0")
    n_steps = int(round((t1 - t0) / step))
    seed_states = basis.a_train[:, : model.sigma].T
    traj = lstm.predict_recursive(model, seed_states, n_steps, t0=t0, step=step)
    io.write_trajectory(out, traj)
    print(f"r={traj.r} predicted_states={traj.a.shape[1]} t_last={traj.times[-1]:g}")


def cmd_analyze(cfg: dict, seed: int | None, out: str) -> None:
    io.check_keys(
        cfg,
        required={"basis", "snapshots", "trajectories"},
        optional={"labels", "sigmas", "timeseries_out", "train_end", "hurst_modes"},
    )
    basis = io.read_basis(cfg["basis"])
    snaps = io.read_snapshots(cfg["snapshots"])
    paths = [p.strip() for p in cfg["trajectories"].split(",") if p.strip()]
    if not paths:
        raise ConfigError("trajectories: no paths given")
    trajs = [io.read_trajectory(p) for p in paths]
    labels = (
        [s.strip() for s in cfg["labels"].split(",")]
        if "labels" in cfg
        else [t.provenance for t in trajs]
    )
    sigmas = (
        [int(s) if s.strip() else None for s in cfg["sigmas"].split(",")]
        if "sigmas" in cfg
        else [None] * len(trajs)
    )
    if len(labels) != len(trajs) or len(sigmas) != len(trajs):
        raise ConfigError("labels/sigmas length does not match trajectories")

    fom_omega = snaps.omega_mean_ref or snaps.omega_mean
    fom_psi = snaps.psi_mean_ref or snaps.psi_mean
    reports = []
    for label, sig, traj in zip(labels, sigmas, trajs):
        om, ps = analysis.trajectory_mean_fields(traj, basis)
        reports.append(
            analysis.ErrorReport(
                model=label,
                r=traj.r,
                sigma=sig,
                vorticity_l2=analysis.mean_field_error(om, fom_omega),
                streamfunction_l2=analysis.mean_field_error(ps, fom_psi),
            )
        )
    analysis.write_error_report(reports, out)
    for rep in reports:
        print(
            f"{rep.model}: R={rep.r} vort_l2={rep.vorticity_l2:.6g} "
            f"psi_l2={rep.streamfunction_l2:.6g}"
        )

    if "timeseries_out" in cfg:
        true_traj = RomTrajectory(
            times=snaps.times.copy(), a=basis.a_train, provenance="true_projection"
        )
        n = min(trajs[0].a.shape[1], true_traj.a.shape[1])
        aligned_pred = RomTrajectory(
            times=trajs[0].times[:n], a=trajs[0].a[:, :n], provenance=trajs[0].provenance
        )
        aligned_true = RomTrajectory(
            times=trajs[0].times[:n], a=true_traj.a[:, :n], provenance="true_projection"
        )
        train_end = io.get_float(cfg, "train_end") if "train_end" in cfg else None
        analysis.export_timeseries(
            aligned_pred, aligned_true, cfg["timeseries_out"], train_end=train_end
        )
    if "hurst_modes" in cfg:
        for k in range(min(io.get_int(cfg, "hurst_modes"), basis.r)):
            res = analysis.hurst_exponent(basis.a_train[k])
            print(f"hurst a{k + 1}: H={res.h:.4f} r2={res.fit_r2:.4f}")


_COMMANDS = {
    "fom": cmd_fom,
    "pod": cmd_pod,
    "rom-gp": cmd_romgp,
    "train": cmd_train,
    "predict": cmd_predict,
    "analyze": cmd_analyze,
}


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="qgrom",
        description="Reduced order modeling pipeline for 2D quasi-geostrophic turbulence",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="key = value config file")
        p.add_argument("--seed", type=int, default=None, help="override RNG seed")
        p.add_argument("--out", required=True, help="output artifact path")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else 0

    try:
        cfg = io.parse_config(args.config)
        _COMMANDS[args.command](cfg, args.seed, args.out)
    except (RankError, lstm.DegenerateScaleError, DivergenceError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (io.FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, ValueError) as exc:
        # domain validation errors (bad shapes, bad parameters) are config-class
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return 0


if __name__ == "__main__":
    sys.exit(main())
