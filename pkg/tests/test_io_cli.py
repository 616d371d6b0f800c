import struct

import numpy as np
import pytest

from qgrom import io
from qgrom.cli import main
from qgrom.fields import Grid
from qgrom.galerkin import RomTrajectory
from qgrom.lstm import TrainConfig, train
from qgrom.pod import build_basis
from test_pod import synthetic_snapshots


@pytest.fixture(scope="module")
def artifacts():
    snaps = synthetic_snapshots(Grid(17, 33), 10, seed=9)
    basis = build_basis(snaps, 3)
    model, _ = train(
        basis.a_train, 2, TrainConfig(epochs=2, n_layers=2, hidden=8, seed=1)
    )
    traj = RomTrajectory(
        times=np.linspace(0, 1, 7),
        a=np.random.default_rng(2).standard_normal((3, 7)),
        provenance="lstm",
        diverged_at=0.9,
    )
    return snaps, basis, model, traj


# ---------------------------------------------------------------------------
# binary round trips

def test_snapshot_round_trip_bitwise(tmp_path, artifacts):
    snaps, *_ = artifacts
    p = tmp_path / "s.qgrm"
    io.write_snapshots(p, snaps)
    back = io.read_snapshots(p)
    assert back.grid == snaps.grid
    assert np.array_equal(back.times, snaps.times)
    assert np.array_equal(back.omega, snaps.omega)
    assert np.array_equal(back.omega_mean.values, snaps.omega_mean.values)
    assert np.array_equal(back.psi_mean.values, snaps.psi_mean.values)
    assert back.omega_mean_ref is None
    # write-back produces identical bytes
    p2 = tmp_path / "s2.qgrm"
    io.write_snapshots(p2, back)
    assert p.read_bytes() == p2.read_bytes()


def test_basis_round_trip_bitwise(tmp_path, artifacts):
    _, basis, *_ = artifacts
    p = tmp_path / "b.qgrm"
    io.write_basis(p, basis)
    back = io.read_basis(p)
    assert back.r == basis.r
    for attr in ("lambdas", "phi", "theta", "a_train"):
        assert np.array_equal(getattr(back, attr), getattr(basis, attr))
    p2 = tmp_path / "b2.qgrm"
    io.write_basis(p2, back)
    assert p.read_bytes() == p2.read_bytes()


def test_model_round_trip_bitwise(tmp_path, artifacts):
    *_, model, _ = artifacts
    p = tmp_path / "m.qgrm"
    io.write_model(p, model)
    back = io.read_model(p)
    assert back.sigma == model.sigma and back.r == model.r
    assert np.array_equal(back.scaler.lo, model.scaler.lo)
    for la, lb in zip(model.layers, back.layers):
        assert np.array_equal(la.wx, lb.wx)
        assert np.array_equal(la.wh, lb.wh)
        assert np.array_equal(la.b, lb.b)
    assert np.array_equal(back.w_out, model.w_out)
    p2 = tmp_path / "m2.qgrm"
    io.write_model(p2, back)
    assert p.read_bytes() == p2.read_bytes()


def test_trajectory_round_trip_bitwise(tmp_path, artifacts):
    *_, traj = artifacts
    p = tmp_path / "t.qgrm"
    io.write_trajectory(p, traj)
    back = io.read_trajectory(p)
    assert np.array_equal(back.times, traj.times)
    assert np.array_equal(back.a, traj.a)
    assert back.provenance == "lstm"
    assert back.diverged_at == traj.diverged_at
    p2 = tmp_path / "t2.qgrm"
    io.write_trajectory(p2, back)
    assert p.read_bytes() == p2.read_bytes()


def test_checksum_detects_single_byte_corruption(tmp_path, artifacts):
    *_, traj = artifacts
    p = tmp_path / "t.qgrm"
    io.write_trajectory(p, traj)
    raw = bytearray(p.read_bytes())
    rng = np.random.default_rng(3)
    for _ in range(10):
        pos = int(rng.integers(12, len(raw) - 8))
        orig = raw[pos]
        raw[pos] = (orig + 1 + int(rng.integers(255))) % 256
        if raw[pos] == orig:
            raw[pos] = (orig + 1) % 256
        p.write_bytes(bytes(raw))
        with pytest.raises(io.ChecksumError):
            io.read_trajectory(p)
        raw[pos] = orig


def test_version_and_magic_guards(tmp_path, artifacts):
    *_, traj = artifacts
    p = tmp_path / "t.qgrm"
    io.write_trajectory(p, traj)
    raw = bytearray(p.read_bytes())
    raw[4:8] = struct.pack("<I", io.FORMAT_VERSION + 1)
    p.write_bytes(bytes(raw))
    with pytest.raises(io.VersionError):
        io.read_trajectory(p)
    raw[0:4] = b"NOPE"
    p.write_bytes(bytes(raw))
    with pytest.raises(io.FormatError):
        io.read_trajectory(p)


def test_wrong_kind_rejected(tmp_path, artifacts):
    _, basis, *_ = artifacts
    p = tmp_path / "b.qgrm"
    io.write_basis(p, basis)
    with pytest.raises(io.FormatError):
        io.read_trajectory(p)


# ---------------------------------------------------------------------------
# config parsing

def test_parse_config(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("# comment\nnx = 33\nre = 100.0  # inline\n\nname = x\n")
    cfg = io.parse_config(p)
    assert cfg == {"nx": "33", "re": "100.0", "name": "x"}
    assert io.get_int(cfg, "nx") == 33
    assert io.get_float(cfg, "re") == 100.0


def test_parse_config_errors(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("nx 33\n")
    with pytest.raises(io.ConfigError):
        io.parse_config(p)
    p.write_text("nx = 1\nnx = 2\n")
    with pytest.raises(io.ConfigError):
        io.parse_config(p)
    with pytest.raises(io.ConfigError):
        io.parse_config(tmp_path / "missing.cfg")


def test_check_keys():
    with pytest.raises(io.ConfigError, match="unknown"):
        io.check_keys({"a": "1", "zz": "2"}, required={"a"}, optional=set())
    with pytest.raises(io.ConfigError, match="missing.*re"):
        io.check_keys({}, required={"re"}, optional=set())


# ---------------------------------------------------------------------------
# CLI exit codes and pipeline determinism

FOM_CFG = """
nx = 17
ny = 33
re = 100
ro = 0.01
dt = 5e-4
t_start = 0
t_end = 2
snapshot_t0 = 1
snapshot_t1 = 2
n_snapshots = 30
perturbation = 1e-3
"""


def _write(path, text):
    path.write_text(text)
    return str(path)


def test_cli_missing_key_exits_1(tmp_path, capsys):
    cfg = _write(tmp_path / "f.cfg", FOM_CFG.replace("re = 100\n", ""))
    rc = main(["fom", "--config", cfg, "--out", str(tmp_path / "s.qgrm")])
    assert rc == 1
    assert "re" in capsys.readouterr().err


def test_cli_unknown_key_exits_1(tmp_path, capsys):
    cfg = _write(tmp_path / "f.cfg", FOM_CFG + "bogus = 1\n")
    rc = main(["fom", "--config", cfg, "--out", str(tmp_path / "s.qgrm")])
    assert rc == 1
    assert "bogus" in capsys.readouterr().err


def test_cli_missing_artifact_exits_2(tmp_path, capsys):
    cfg = _write(tmp_path / "p.cfg", "snapshots = nope.qgrm\nr = 2\n")
    rc = main(["pod", "--config", cfg, "--out", str(tmp_path / "b.qgrm")])
    assert rc == 2


def test_cli_pipeline_deterministic_and_rank_guard(tmp_path, capsys):
    fom_cfg = _write(tmp_path / "f.cfg", FOM_CFG)
    s1, s2 = tmp_path / "s1.qgrm", tmp_path / "s2.qgrm"
    assert main(["fom", "--config", fom_cfg, "--out", str(s1)]) == 0
    assert main(["fom", "--config", fom_cfg, "--out", str(s2)]) == 0
    assert s1.read_bytes() == s2.read_bytes()

    pod_cfg = _write(tmp_path / "p.cfg", f"snapshots = {s1}\nr = 3\n")
    b1, b2 = tmp_path / "b1.qgrm", tmp_path / "b2.qgrm"
    assert main(["pod", "--config", pod_cfg, "--out", str(b1)]) == 0
    assert main(["pod", "--config", pod_cfg, "--out", str(b2)]) == 0
    assert b1.read_bytes() == b2.read_bytes()

    # requesting more modes than the data supports is a numerical failure
    bad_pod = _write(tmp_path / "pb.cfg", f"snapshots = {s1}\nr = 30\n")
    rc = main(["pod", "--config", bad_pod, "--out", str(tmp_path / "bx.qgrm")])
    assert rc == 3
    assert "usable" in capsys.readouterr().err or True

    train_cfg = _write(
        tmp_path / "t.cfg",
        f"basis = {b1}\nsigma = 2\nepochs = 2\nn_layers = 1\nhidden = 8\nseed = 1\n",
    )
    m1, m2 = tmp_path / "m1.qgrm", tmp_path / "m2.qgrm"
    assert main(["train", "--config", train_cfg, "--out", str(m1)]) == 0
    assert main(["train", "--config", train_cfg, "--out", str(m2)]) == 0
    assert m1.read_bytes() == m2.read_bytes()

    pred_cfg = _write(
        tmp_path / "pr.cfg",
        f"model = {m1}\nbasis = {b1}\nt0 = 1\nt1 = 2\nstep = 0.0344827586206897\n",
    )
    t1p, t2p = tmp_path / "tr1.qgrm", tmp_path / "tr2.qgrm"
    assert main(["predict", "--config", pred_cfg, "--out", str(t1p)]) == 0
    assert main(["predict", "--config", pred_cfg, "--out", str(t2p)]) == 0
    assert t1p.read_bytes() == t2p.read_bytes()

    gp_cfg = _write(
        tmp_path / "g.cfg",
        f"basis = {b1}\nre = 100\nro = 0.01\ndt = 0.01\nt0 = 1\nt1 = 2\n",
    )
    gt = tmp_path / "gt.qgrm"
    assert main(["rom-gp", "--config", gp_cfg, "--out", str(gt)]) == 0

    an_cfg = _write(
        tmp_path / "a.cfg",
        f"basis = {b1}\nsnapshots = {s1}\ntrajectories = {gt}, {t1p}\n"
        "labels = rom-gp, rom-lstm\nsigmas = , 2\n",
    )
    rep = tmp_path / "rep.csv"
    assert main(["analyze", "--config", an_cfg, "--out", str(rep)]) == 0
    lines = rep.read_text().splitlines()
    assert lines[0] == "model,R,sigma,vort_l2,psi_l2"
    assert len(lines) == 3


def test_cli_analyze_identical_trajectory_zero_error(tmp_path, artifacts, capsys):
    # a trajectory that is exactly the training projection scores zero against
    # the snapshot means
    snaps, basis, *_ = artifacts
    sp, bp = tmp_path / "s.qgrm", tmp_path / "b.qgrm"
    io.write_snapshots(sp, snaps)
    io.write_basis(bp, basis)
    # constant trajectory at the mean coefficients a=0 reconstructs the mean
    traj = RomTrajectory(
        times=np.arange(3.0), a=np.zeros((basis.r, 3)), provenance="true_projection"
    )
    tp = tmp_path / "t.qgrm"
    io.write_trajectory(tp, traj)
    an_cfg = _write(
        tmp_path / "a.cfg",
        f"basis = {bp}\nsnapshots = {sp}\ntrajectories = {tp}\n",
    )
    rep = tmp_path / "rep.csv"
    assert main(["analyze", "--config", an_cfg, "--out", str(rep)]) == 0
    row = rep.read_text().splitlines()[1].split(",")
    assert float(row[3]) == 0.0 and float(row[4]) == 0.0
