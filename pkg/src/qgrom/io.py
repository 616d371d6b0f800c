"""Persistence and configuration: bit-exact binary artifact files shared by
the pipeline stages, and the flat key=value run-configuration format.

Binary layout (all little-endian): magic `QGRM`, format version u32, payload
kind u32, then a payload of u64 dimensions/flags and f64 arrays, then a
trailing u64 checksum — the byte sum of the payload modulo 2^64.
"""

from __future__ import annotations

import struct

import numpy as np

from qgrom.fields import Field2D, Grid
from qgrom.fom import SnapshotSet
from qgrom.galerkin import RomTrajectory
from qgrom.lstm import LstmLayerParams, LstmModel, Scaler
from qgrom.pod import PodBasis

MAGIC = b"QGRM"
FORMAT_VERSION = 1

KIND_SNAPSHOTS = 1
KIND_BASIS = 2
KIND_MODEL = 3
KIND_TRAJECTORY = 4

_PROVENANCE_CODES = {"gp": 0, "lstm": 1, "true_projection": 2}
_PROVENANCE_NAMES = {v: k for k, v in _PROVENANCE_CODES.items()}


class FormatError(ValueError):
    """Corrupt, truncated, or wrong-kind artifact file."""


class ChecksumError(FormatError):
    pass


class VersionError(FormatError):
    pass


# ---------------------------------------------------------------------------
# low-level payload encoding

class _PayloadWriter:
    def __init__(self):
        self.chunks: list[bytes] = []

    def u64(self, *values: int) -> None:
        self.chunks.append(struct.pack(f"<{len(values)}Q", *values))

    def f64(self, arr) -> None:
        a = np.ascontiguousarray(np.asarray(arr, dtype="<f8"))
        self.chunks.append(a.tobytes())

    def payload(self) -> bytes:
        return b"".join(self.chunks)


class _PayloadReader:
    def __init__(self, payload: bytes):
        self.buf = payload
        self.pos = 0

    def _take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError("truncated payload")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def u64(self, count: int = 1):
        vals = struct.unpack(f"<{count}Q", self._take(8 * count))
        return vals[0] if count == 1 else vals

    def f64(self, shape) -> np.ndarray:
        n = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(self._take(8 * n), dtype="<f8")
        return arr.reshape(shape).copy()

    def done(self) -> None:
        if self.pos != len(self.buf):
            raise FormatError(f"{len(self.buf) - self.pos} trailing payload bytes")


def _checksum(payload: bytes) -> int:
    return int(np.frombuffer(payload, dtype=np.uint8).sum(dtype=np.uint64))


def _write_artifact(path, kind: int, payload: bytes) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, kind))
        fh.write(payload)
        fh.write(struct.pack("<Q", _checksum(payload)))


def _read_artifact(path, expected_kind: int) -> _PayloadReader:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 20 or raw[:4] != MAGIC:
        raise FormatError(f"{path}: not a QGRM artifact")
    version, kind = struct.unpack("<II", raw[4:12])
    if version != FORMAT_VERSION:
        raise VersionError(
            f"{path}: format version {version}, expected {FORMAT_VERSION}"
        )
    if kind != expected_kind:
        raise FormatError(f"{path}: payload kind {kind}, expected {expected_kind}")
    payload = raw[12:-8]
    (stored,) = struct.unpack("<Q", raw[-8:])
    actual = _checksum(payload)
    if stored != actual:
        raise ChecksumError(f"{path}: checksum mismatch ({actual} != {stored})")
    return _PayloadReader(payload)


def _put_grid(w: _PayloadWriter, grid: Grid) -> None:
    w.u64(grid.nx, grid.ny)
    w.f64([grid.x_min, grid.x_max, grid.y_min, grid.y_max])


def _get_grid(r: _PayloadReader) -> Grid:
    nx, ny = r.u64(2)
    x0, x1, y0, y1 = r.f64(4)
    return Grid(nx=int(nx), ny=int(ny), x_min=x0, x_max=x1, y_min=y0, y_max=y1)


# ---------------------------------------------------------------------------
# artifact formats

def write_snapshots(path, snapshots: SnapshotSet) -> None:
    w = _PayloadWriter()
    _put_grid(w, snapshots.grid)
    has_ref = snapshots.omega_mean_ref is not None
    w.u64(snapshots.n_snapshots, 1 if has_ref else 0)
    w.f64(snapshots.times)
    w.f64(snapshots.omega)
    w.f64(snapshots.omega_mean.values)
    w.f64(snapshots.psi_mean.values)
    if has_ref:
        w.f64(snapshots.omega_mean_ref.values)
        w.f64(snapshots.psi_mean_ref.values)
    _write_artifact(path, KIND_SNAPSHOTS, w.payload())


def read_snapshots(path) -> SnapshotSet:
    r = _read_artifact(path, KIND_SNAPSHOTS)
    grid = _get_grid(r)
    n, has_ref = r.u64(2)
    shape = (grid.nx, grid.ny)
    times = r.f64(int(n))
    omega = r.f64((int(n),) + shape)
    omega_mean = Field2D(grid, r.f64(shape))
    psi_mean = Field2D(grid, r.f64(shape))
    omega_mean_ref = psi_mean_ref = None
    if has_ref:
        omega_mean_ref = Field2D(grid, r.f64(shape))
        psi_mean_ref = Field2D(grid, r.f64(shape))
    r.done()
    return SnapshotSet(
        grid=grid,
        times=times,
        omega=omega,
        omega_mean=omega_mean,
        psi_mean=psi_mean,
        omega_mean_ref=omega_mean_ref,
        psi_mean_ref=psi_mean_ref,
    )


def write_basis(path, basis: PodBasis) -> None:
    w = _PayloadWriter()
    _put_grid(w, basis.grid)
    w.u64(basis.r, basis.n_snapshots)
    w.f64(basis.lambdas)
    w.f64(basis.phi)
    w.f64(basis.theta)
    w.f64(basis.a_train)
    w.f64(basis.omega_mean.values)
    w.f64(basis.psi_mean.values)
    _write_artifact(path, KIND_BASIS, w.payload())


def read_basis(path) -> PodBasis:
    rd = _read_artifact(path, KIND_BASIS)
    grid = _get_grid(rd)
    r, n = rd.u64(2)
    r, n = int(r), int(n)
    shape = (grid.nx, grid.ny)
    lambdas = rd.f64(n)
    phi = rd.f64((r,) + shape)
    theta = rd.f64((r,) + shape)
    a_train = rd.f64((r, n))
    omega_mean = Field2D(grid, rd.f64(shape))
    psi_mean = Field2D(grid, rd.f64(shape))
    rd.done()
    return PodBasis(
        grid=grid,
        r=r,
        lambdas=lambdas,
        phi=phi,
        theta=theta,
        a_train=a_train,
        omega_mean=omega_mean,
        psi_mean=psi_mean,
    )


def write_model(path, model: LstmModel) -> None:
    if model.scaler is None:
        raise ValueError("refusing to persist an unscaled (untrained) model")
    w = _PayloadWriter()
    w.u64(model.r, model.sigma, len(model.layers), model.hidden, model.seed)
    w.f64(model.scaler.lo)
    w.f64(model.scaler.hi)
    for layer in model.layers:
        w.f64(layer.wx)
        w.f64(layer.wh)
        w.f64(layer.b)
    w.f64(model.w_out)
    w.f64(model.b_out)
    _write_artifact(path, KIND_MODEL, w.payload())


def read_model(path) -> LstmModel:
    rd = _read_artifact(path, KIND_MODEL)
    r, sigma, n_layers, hidden, seed = (int(v) for v in rd.u64(5))
    lo = rd.f64((r, 1))
    hi = rd.f64((r, 1))
    layers = []
    in_dim = r
    for _ in range(n_layers):
        wx = rd.f64((4 * hidden, in_dim))
        wh = rd.f64((4 * hidden, hidden))
        b = rd.f64(4 * hidden)
        layers.append(LstmLayerParams(wx=wx, wh=wh, b=b))
        in_dim = hidden
    w_out = rd.f64((r, hidden))
    b_out = rd.f64(r)
    rd.done()
    return LstmModel(
        layers=layers,
        w_out=w_out,
        b_out=b_out,
        scaler=Scaler(lo=lo, hi=hi),
        sigma=sigma,
        r=r,
        seed=seed,
    )


def write_trajectory(path, traj: RomTrajectory) -> None:
    if traj.provenance not in _PROVENANCE_CODES:
        raise ValueError(f"unknown provenance {traj.provenance!r}")
    w = _PayloadWriter()
    n_times = len(traj.times)
    diverged = traj.diverged_at is not None
    w.u64(traj.r, n_times, _PROVENANCE_CODES[traj.provenance], 1 if diverged else 0)
    w.f64([traj.diverged_at if diverged else 0.0])
    w.f64(traj.times)
    w.f64(traj.a)
    _write_artifact(path, KIND_TRAJECTORY, w.payload())


def read_trajectory(path) -> RomTrajectory:
    rd = _read_artifact(path, KIND_TRAJECTORY)
    r, n_times, prov, diverged = (int(v) for v in rd.u64(4))
    if prov not in _PROVENANCE_NAMES:
        raise FormatError(f"unknown provenance code {prov}")
    (div_t,) = rd.f64(1)
    times = rd.f64(n_times)
    a = rd.f64((r, n_times))
    rd.done()
    return RomTrajectory(
        times=times,
        a=a,
        provenance=_PROVENANCE_NAMES[prov],
        diverged_at=div_t if diverged else None,
    )


# ---------------------------------------------------------------------------
# key=value run configuration

class ConfigError(ValueError):
    pass


def parse_config(path) -> dict[str, str]:
    """Read a UTF-8 `key = value` file; `#` starts a comment."""
    out: dict[str, str] = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for lineno, line in enumerate(lines, start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, _, value = stripped.partition("=")
        key = key.strip()
        value = value.strip()
        if not key or not value:
            raise ConfigError(f"{path}:{lineno}: empty key or value")
        if key in out:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def check_keys(cfg: dict[str, str], required: set[str], optional: set[str]) -> None:
    unknown = set(cfg) - required - optional
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    missing = required - set(cfg)
    if missing:
        raise ConfigError(f"missing config keys: {', '.join(sorted(missing))}")


def get_float(cfg: dict[str, str], key: str) -> float:
    try:
        return float(cfg[key])
    except ValueError as exc:
        raise ConfigError(f"config key {key!r}: not a number: {cfg[key]!r}") from exc


def get_int(cfg: dict[str, str], key: str) -> int:
    try:
        return int(cfg[key])
    except ValueError as exc:
        raise ConfigError(f"config key {key!r}: not an integer: {cfg[key]!r}") from exc
