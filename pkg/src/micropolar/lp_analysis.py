"""Littlewood-Paley blocks, Besov norms and Bernstein ratios on the torus.

The low-frequency bump is the C-infinity cutoff

    phi(r) = 1 on [0, 3/4],  0 on [4/3, inf),

bridged with the exp(-1/x) mollifier, and psi(r) = phi(r/2) - phi(r).  Then
phi(r) + sum_{j=0}^{J} psi(2^-j r) telescopes to phi(2^-(J+1) r).

Blocks are pure Fourier multipliers; the convolution kernels are never formed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .spectral_core import (
    Field,
    Grid,
    RadialSymbol,
    SpectralVectorField,
    fractional_laplacian,
    lq_norm,
)

PHI_INNER = 0.75
PHI_OUTER = 4.0 / 3.0


def _mollifier(x: np.ndarray) -> np.ndarray:
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = np.exp(-1.0 / x[pos])
    return out


def _smooth_step(x: np.ndarray) -> np.ndarray:
    """0 for x <= 0, 1 for x >= 1, C-infinity in between."""
    a = _mollifier(x)
    b = _mollifier(1.0 - x)
    return a / (a + b)


def phi_eval(r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    return _smooth_step((PHI_OUTER - r) / (PHI_OUTER - PHI_INNER))


def psi_eval(r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    return phi_eval(r / 2.0) - phi_eval(r)


PHI = RadialSymbol(phi_eval, "phi")
PSI = RadialSymbol(psi_eval, "psi")


@dataclass(frozen=True)
class DyadicPartition:
    """Sampled partition for one grid.

    ``j_max`` is the last block used for Bernstein sweeps; ``j_top`` is the
    last block with any support on the lattice (blocks in ``(j_max, j_top]``
    are truncated by the box and reported as such).
    """

    grid: Grid
    phi: RadialSymbol
    psi: RadialSymbol
    j_max: int
    j_top: int

    def block_symbol(self, j: int) -> np.ndarray:
        return _block_weights(self.grid, j)

    def is_truncated(self, j: int) -> bool:
        return j > self.j_max


@lru_cache(maxsize=None)
def build_partition(grid: Grid) -> DyadicPartition:
    j_max = int(math.floor(math.log2(grid.n / 2))) - 1
    kmax = float(grid.kmag.max())
    # psi(2^-j r) vanishes for r < 2^j * 3/4
    j_top = int(math.floor(math.log2(kmax / PHI_INNER)))
    return DyadicPartition(grid, PHI, PSI, j_max, max(j_top, j_max))


@lru_cache(maxsize=64)
def _block_weights(grid: Grid, j: int) -> np.ndarray:
    if j <= -2:
        w = np.zeros(grid.shape)
    elif j == -1:
        w = phi_eval(grid.kmag)
    else:
        w = psi_eval(grid.kmag / 2.0**j)
    w.flags.writeable = False
    return w


def _low_pass_weights(grid: Grid, j: int) -> np.ndarray:
    # S_j = sum_{l <= j-1} Delta_l, whose symbol telescopes to phi(2^-j r)
    if j <= -1:
        return np.zeros(grid.shape)
    return phi_eval(grid.kmag / 2.0**j)


def _apply(f: Field, w: np.ndarray) -> Field:
    if isinstance(f, SpectralVectorField):
        return f.with_coef(f.coef * w, f.divergence_free)
    return f.with_coef(f.coef * w)


def dyadic_block(f: Field, j: int) -> Field:
    """Delta_j f (zero for j <= -2)."""
    return _apply(f, _block_weights(f.grid, j))


def low_pass(f: Field, j: int) -> Field:
    """S_j f = sum of Delta_l f over l <= j - 1."""
    return _apply(f, _low_pass_weights(f.grid, j))


def reconstruct(f: Field, j_last: int) -> Field:
    total = np.zeros_like(f.coef)
    for j in range(-1, j_last + 1):
        total = total + dyadic_block(f, j).coef
    return f.with_coef(total)


def block_lp_norms(f: Field, p: float) -> list[float]:
    """||Delta_j f||_{L^p} for j = -1 .. j_top."""
    part = build_partition(f.grid)
    out = []
    for j in range(-1, part.j_top + 1):
        blk = dyadic_block(f, j)
        if p == 2:
            out.append(float(math.sqrt(np.sum(np.abs(blk.coef) ** 2))))
        else:
            out.append(lq_norm(blk, p))
    return out


@dataclass(frozen=True)
class BesovIndex:
    s: float
    p: float = 2.0
    q: float = 2.0

    def __post_init__(self):
        if not (1 <= self.p <= math.inf and 1 <= self.q <= math.inf):
            raise ValueError("Besov exponents p, q must lie in [1, inf]")


def besov_norm(f: Field, idx: BesovIndex) -> float:
    """|| 2^{js} ||Delta_j f||_{L^p} ||_{l^q} over every block with lattice support."""
    norms = np.asarray(block_lp_norms(f, idx.p))
    js = np.arange(-1, len(norms) - 1)
    seq = 2.0 ** (js * idx.s) * norms
    if math.isinf(idx.q):
        return float(seq.max())
    return float(np.sum(seq**idx.q) ** (1.0 / idx.q))


def annulus_index(f: Field, tol: float = 1e-14) -> tuple[int, float, float] | None:
    """(j, K1, K2) with supp f-hat inside K1 2^j <= |k| <= K2 2^j and [K1, K2] within [3/4, 8/3].

    None when f has no such localization (including the zero field).
    """
    power = np.abs(f.coef) ** 2
    if f.coef.ndim > f.grid.dim:
        power = power.sum(axis=0)
    scale = power.max()
    if scale == 0:
        return None
    occupied = f.grid.kmag[power > tol * scale]
    kmin, kmax = float(occupied.min()), float(occupied.max())
    if kmin == 0 or kmax / kmin > (8.0 / 3.0) / 0.75 + 1e-12:
        return None
    j = int(math.floor(math.log2(kmin / 0.75) + 1e-12))
    if j < 0 or kmax > (8.0 / 3.0) * 2.0**j + 1e-12:
        return None
    return j, kmin / 2.0**j, kmax / 2.0**j


def bernstein_ratio(f: Field, alpha: float, p: float, q: float, j: int | None = None) -> tuple[float, float]:
    """Measured constants of the fractional Bernstein inequalities for a block-localized f.

    lower = ||(-Delta)^a f||_q / (2^{2aj} ||f||_q)
    upper = ||(-Delta)^a f||_q / (2^{2aj + j d (1/p - 1/q)} ||f||_p)
    """
    found = annulus_index(f)
    if found is None:
        raise ValueError("f is not localized in a dyadic annulus")
    if j is None:
        j = found[0]
    d = f.grid.dim
    lf = fractional_laplacian(f, alpha)
    num = _lq(lf, q)
    lower = num / (2.0 ** (2 * alpha * j) * _lq(f, q))
    inv = (1.0 / p if not math.isinf(p) else 0.0) - (1.0 / q if not math.isinf(q) else 0.0)
    upper = num / (2.0 ** (2 * alpha * j + j * d * inv) * _lq(f, p))
    return float(lower), float(upper)


def _lq(f: Field, q: float) -> float:
    if q == 2:
        return float(math.sqrt(np.sum(np.abs(f.coef) ** 2)))
    return lq_norm(f, q)


def block_energies(f: Field) -> list[float]:
    """||Delta_j f||_2^2 for j = -1 .. j_top."""
    return [x * x for x in block_lp_norms(f, 2)]


__all__ = [
    "PHI",
    "PSI",
    "BesovIndex",
    "DyadicPartition",
    "annulus_index",
    "bernstein_ratio",
    "besov_norm",
    "block_energies",
    "block_lp_norms",
    "build_partition",
    "dyadic_block",
    "low_pass",
    "phi_eval",
    "psi_eval",
    "reconstruct",
]
