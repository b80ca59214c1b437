"""Binary field snapshots and checkpoints.

Snapshot (all little-endian)::

    offset  size  content
    0       4     magic b"MPSF"
    4       4     u32 format version (1)
    8       4     u32 dim
    12      4     u32 n (points per axis)
    16      4     u32 component count c
    20      16*c*n^dim  complex coefficients as (f64 real, f64 imag) pairs

Coefficients are stored component-major, then in row-major (C) order over the
FFT index layout of each axis: index i holds wavenumber i for i < n/2 and
i - n otherwise.

Checkpoint::

    0       4     magic b"MPCK"
    4       4     u32 format version (1)
    8       8     f64 time
    16      32    SHA-256 of the model spec
    48      32    SHA-256 of the stepper config and cutoff
    80      ...   snapshot of u, then snapshot of w
"""

from __future__ import annotations

import hashlib
import io as _io
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO

import numpy as np

from .dynamics import GalerkinCutoff, ModelSpec, State, StepperConfig
from .spectral_core import Grid, SpectralVectorField, make_grid

SNAPSHOT_MAGIC = b"MPSF"
CHECKPOINT_MAGIC = b"MPCK"
FORMAT_VERSION = 1
_SNAP_HEADER = struct.Struct("<4sIIII")
_CKPT_HEADER = struct.Struct("<4sId32s32s")


class FormatError(ValueError):
    """Malformed snapshot or checkpoint; ``offset`` is the failing byte position."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


def _read_exact(fh: BinaryIO, size: int, what: str) -> bytes:
    start = fh.tell()
    data = fh.read(size)
    if len(data) != size:
        raise FormatError(f"truncated {what}: expected {size} bytes, got {len(data)}", start + len(data))
    return data


def write_snapshot(fh: BinaryIO, coef: np.ndarray, grid: Grid) -> None:
    coef = np.asarray(coef)
    if coef.shape == grid.shape:
        coef = coef[None]
    if coef.shape[1:] != grid.shape:
        raise ValueError("coefficient shape does not match grid")
    fh.write(_SNAP_HEADER.pack(SNAPSHOT_MAGIC, FORMAT_VERSION, grid.dim, grid.n, coef.shape[0]))
    fh.write(np.ascontiguousarray(coef, dtype="<c16").tobytes())


def read_snapshot(fh: BinaryIO) -> tuple[Grid, np.ndarray]:
    start = fh.tell()
    magic, version, dim, n, ncomp = _SNAP_HEADER.unpack(_read_exact(fh, _SNAP_HEADER.size, "snapshot header"))
    if magic != SNAPSHOT_MAGIC:
        raise FormatError(f"bad snapshot magic {magic!r}", start)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported snapshot version {version}", start + 4)
    try:
        grid = make_grid(dim, n)
    except ValueError as exc:
        raise FormatError(f"invalid grid in snapshot header: {exc}", start + 8) from None
    if ncomp < 1 or ncomp > 3:
        raise FormatError(f"invalid component count {ncomp}", start + 16)
    count = ncomp * n**dim
    raw = _read_exact(fh, 16 * count, "snapshot payload")
    coef = np.frombuffer(raw, dtype="<c16").astype(complex).reshape((ncomp,) + grid.shape)
    if not np.all(np.isfinite(coef)):
        bad = int(np.argmax(~np.isfinite(coef.ravel())))
        raise FormatError("non-finite coefficient", start + _SNAP_HEADER.size + 16 * bad)
    return grid, coef


def _digest(text: str) -> bytes:
    return hashlib.sha256(text.encode()).digest()


def spec_hash(spec: ModelSpec) -> bytes:
    p = spec.params
    g = p.g.label if p.g is not None else "none"
    return _digest(f"{spec.model.value}|{p.nu!r}|{p.kappa!r}|{p.gamma!r}|{p.mu!r}|{p.alpha!r}|{p.beta!r}|{g}")


def config_hash(cfg: StepperConfig, cutoff: GalerkinCutoff) -> bytes:
    return _digest(f"{cfg.dt!r}|{cfg.scheme.value}|{cfg.cfl_safety!r}|{cfg.nonlinear}|{cutoff.n_cut!r}")


@dataclass(frozen=True)
class Checkpoint:
    state: State
    spec_hash: bytes
    cfg_hash: bytes


def checkpoint_bytes(state: State, spec: ModelSpec, cfg: StepperConfig, cutoff: GalerkinCutoff) -> bytes:
    buf = _io.BytesIO()
    buf.write(_CKPT_HEADER.pack(CHECKPOINT_MAGIC, FORMAT_VERSION, state.t, spec_hash(spec), config_hash(cfg, cutoff)))
    write_snapshot(buf, state.u.coef, state.grid)
    write_snapshot(buf, state.w.coef, state.grid)
    return buf.getvalue()


def write_checkpoint(path, state: State, spec: ModelSpec, cfg: StepperConfig, cutoff: GalerkinCutoff) -> None:
    Path(path).write_bytes(checkpoint_bytes(state, spec, cfg, cutoff))


def read_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        return read_checkpoint_stream(fh)


def read_checkpoint_stream(fh: BinaryIO) -> Checkpoint:
    magic, version, t, sh, ch = _CKPT_HEADER.unpack(_read_exact(fh, _CKPT_HEADER.size, "checkpoint header"))
    if magic != CHECKPOINT_MAGIC:
        raise FormatError(f"bad checkpoint magic {magic!r}", 0)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", 4)
    u_at = fh.tell()
    grid, u = read_snapshot(fh)
    w_at = fh.tell()
    grid_w, w = read_snapshot(fh)
    if grid_w != grid:
        raise FormatError("u and w snapshots live on different grids", w_at)
    if u.shape[0] != grid.dim:
        raise FormatError(f"velocity snapshot has {u.shape[0]} components, expected {grid.dim}", u_at + 16)
    if fh.read(1):
        raise FormatError("trailing bytes after checkpoint", fh.tell() - 1)
    try:
        uf = SpectralVectorField(grid, u, divergence_free=True)
    except ValueError as exc:
        raise FormatError(f"velocity snapshot is not divergence-free: {exc}", u_at) from None
    return Checkpoint(State(t, uf, SpectralVectorField(grid, w)), sh, ch)
