"""Periodic spectral fields on the 2*pi torus.

Coefficients are stored on the full integer lattice ``k in [-n/2, n/2)^dim`` in
FFT order.  The forward transform carries the ``1/n**dim`` factor, so the zero
coefficient is the spatial mean and every norm in this package uses the
normalized measure ``dx / (2*pi)**dim``::

    ||f||_2**2 = (2*pi)**-dim * integral |f|**2 dx = sum_k |c_k|**2

A real field ``a*cos(k.x)`` therefore has L2 norm ``a/sqrt(2)``.

Products are evaluated on a zero-padded physical grid.  Padding only carries
the modes with ``|k_i| < n/2``; the Nyquist planes are treated as zero there,
which is exact for every field produced by the dynamics (they are band-limited
by construction).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Callable, Union

import numpy as np
import scipy.fft as sfft

DOMAIN_LENGTH = 2.0 * math.pi
HERMITIAN_DRIFT_TOL = 1e-12
DIV_FREE_TOL = 1e-12

# worker count handed to scipy.fft; set by the CLI --threads flag
_FFT_WORKERS = 1


def set_fft_workers(workers: int) -> None:
    global _FFT_WORKERS
    if workers < 1:
        raise ValueError("workers must be >= 1")
    _FFT_WORKERS = int(workers)


def get_fft_workers() -> int:
    return _FFT_WORKERS


class GridMismatchError(ValueError):
    pass


class HermitianDriftError(RuntimeError):
    """A nonlinear evaluation produced a visibly non-real field."""


@dataclass(frozen=True)
class Grid:
    """Lattice description; wavenumber arrays are built lazily and cached."""

    dim: int
    n: int

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {self.dim}")
        if self.n < 8 or self.n % 2:
            raise ValueError(f"n must be even and >= 8, got {self.n}")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def axes(self) -> tuple[int, ...]:
        return tuple(range(-self.dim, 0))

    @property
    def domain_length(self) -> float:
        return DOMAIN_LENGTH

    @property
    def spacing(self) -> float:
        return DOMAIN_LENGTH / self.n

    @cached_property
    def k1d(self) -> np.ndarray:
        return sfft.fftfreq(self.n, 1.0 / self.n)

    @cached_property
    def k(self) -> np.ndarray:
        """Integer wavevectors, shape ``(dim, n, ..., n)``."""
        k = np.stack(np.meshgrid(*([self.k1d] * self.dim), indexing="ij"))
        k.flags.writeable = False
        return k

    @cached_property
    def k2(self) -> np.ndarray:
        k2 = np.sum(self.k**2, axis=0)
        k2.flags.writeable = False
        return k2

    @cached_property
    def kmag(self) -> np.ndarray:
        km = np.sqrt(self.k2)
        km.flags.writeable = False
        return km

    @cached_property
    def resolved(self) -> np.ndarray:
        """True where no component of k sits on the Nyquist plane."""
        mask = np.all(np.abs(self.k) < self.n // 2, axis=0)
        mask.flags.writeable = False
        return mask

    @cached_property
    def neg_index(self) -> tuple[np.ndarray, ...]:
        idx = (-np.arange(self.n)) % self.n
        return np.ix_(*([idx] * self.dim))

    @cached_property
    def x1d(self) -> np.ndarray:
        return np.arange(self.n) * self.spacing

    @cached_property
    def x(self) -> np.ndarray:
        """Physical coordinates, shape ``(dim, n, ..., n)``."""
        return np.stack(np.meshgrid(*([self.x1d] * self.dim), indexing="ij"))


@lru_cache(maxsize=None)
def make_grid(dim: int, n: int) -> Grid:
    return Grid(dim, n)


@dataclass(frozen=True)
class RadialSymbol:
    """Fourier multiplier depending only on |k|.

    ``eval`` must be vectorized and finite at r = 0.
    """

    eval: Callable[[np.ndarray], np.ndarray]
    label: str = ""

    def __call__(self, r):
        return self.eval(np.asarray(r, dtype=float))


def power_symbol(p: float, label: str | None = None) -> RadialSymbol:
    """``r**p``; for negative p the value at r = 0 is defined to be 0."""
    p = float(p)

    def _eval(r):
        r = np.asarray(r, dtype=float)
        if p == 0.0:
            return np.ones_like(r)
        out = np.zeros_like(r)
        nz = r > 0
        out[nz] = r[nz] ** p
        return out

    return RadialSymbol(_eval, label or f"|k|^{p:g}")


# ---------------------------------------------------------------------------
# fields


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.complex128)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class SpectralScalarField:
    grid: Grid
    coef: np.ndarray

    def __post_init__(self):
        if self.coef.shape != self.grid.shape:
            raise GridMismatchError(f"coefficient shape {self.coef.shape} != grid shape {self.grid.shape}")
        object.__setattr__(self, "coef", _freeze(self.coef))

    @property
    def ncomp(self) -> int:
        return 1

    def stacked(self) -> np.ndarray:
        return self.coef[None]

    def with_coef(self, coef) -> "SpectralScalarField":
        return SpectralScalarField(self.grid, coef)

    def __add__(self, other):
        return self.with_coef(self.coef + _coef_of(other, self))

    def __sub__(self, other):
        return self.with_coef(self.coef - _coef_of(other, self))

    def __neg__(self):
        return self.with_coef(-self.coef)

    def __mul__(self, a: complex):
        return self.with_coef(a * self.coef)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class SpectralVectorField:
    """Stacked components, ``coef.shape == (ncomp,) + grid.shape``."""

    grid: Grid
    coef: np.ndarray
    divergence_free: bool = False

    def __post_init__(self):
        if self.coef.ndim != self.grid.dim + 1 or self.coef.shape[1:] != self.grid.shape:
            raise GridMismatchError(f"coefficient shape {self.coef.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "coef", _freeze(self.coef))
        if self.divergence_free:
            if self.ncomp != self.grid.dim:
                raise ValueError("only dim-component fields can be divergence-free")
            scale = np.max(np.abs(self.coef)) if self.coef.size else 0.0
            div = np.max(np.abs(np.einsum("i...,i...->...", self.grid.k, self.coef)))
            if div > DIV_FREE_TOL * max(scale, 1e-300) and div > 0:
                raise ValueError(f"field flagged divergence-free has max|k.c| = {div:.3e} (scale {scale:.3e})")

    @property
    def ncomp(self) -> int:
        return self.coef.shape[0]

    def component(self, i: int) -> SpectralScalarField:
        return SpectralScalarField(self.grid, self.coef[i])

    @property
    def components(self) -> tuple[SpectralScalarField, ...]:
        return tuple(self.component(i) for i in range(self.ncomp))

    def stacked(self) -> np.ndarray:
        return self.coef

    def with_coef(self, coef, divergence_free: bool = False) -> "SpectralVectorField":
        return SpectralVectorField(self.grid, coef, divergence_free)

    def __add__(self, other):
        flag = self.divergence_free and getattr(other, "divergence_free", False)
        return self.with_coef(self.coef + _coef_of(other, self), flag)

    def __sub__(self, other):
        flag = self.divergence_free and getattr(other, "divergence_free", False)
        return self.with_coef(self.coef - _coef_of(other, self), flag)

    def __neg__(self):
        return self.with_coef(-self.coef, self.divergence_free)

    def __mul__(self, a: complex):
        return self.with_coef(a * self.coef, self.divergence_free)

    __rmul__ = __mul__


Field = Union[SpectralScalarField, SpectralVectorField]


def _solenoidal(grid: Grid, coef: np.ndarray) -> SpectralVectorField:
    """Flag a field divergence-free without the roundoff check.

    Only for operator outputs that are solenoidal by construction; a
    projected pure gradient is all roundoff and would fail a relative test.
    """
    v = SpectralVectorField(grid, coef)
    object.__setattr__(v, "divergence_free", True)
    return v


def _coef_of(other, ref) -> np.ndarray:
    if other.grid != ref.grid:
        raise GridMismatchError("fields live on different grids")
    if other.coef.shape != ref.coef.shape:
        raise GridMismatchError("fields have different component counts")
    return other.coef


def zeros_scalar(grid: Grid) -> SpectralScalarField:
    return SpectralScalarField(grid, np.zeros(grid.shape, complex))


def zeros_vector(grid: Grid, ncomp: int | None = None, divergence_free: bool = False) -> SpectralVectorField:
    ncomp = grid.dim if ncomp is None else ncomp
    return SpectralVectorField(grid, np.zeros((ncomp,) + grid.shape, complex), divergence_free)


def mode(grid: Grid, k, amplitude: complex = 1.0) -> SpectralScalarField:
    """Single complex exponential ``amplitude * exp(i k.x)``."""
    coef = np.zeros(grid.shape, complex)
    coef[tuple(int(ki) % grid.n for ki in k)] = amplitude
    return SpectralScalarField(grid, coef)


# ---------------------------------------------------------------------------
# transforms


def transform_forward(grid: Grid, samples: np.ndarray) -> Field:
    """Physical samples -> coefficients, with coef(0) equal to the mean.

    ``samples`` has shape ``grid.shape`` (scalar) or ``(c,) + grid.shape``.
    """
    samples = np.asarray(samples)
    if samples.shape == grid.shape:
        return SpectralScalarField(grid, sfft.fftn(samples, axes=grid.axes, norm="forward", workers=_FFT_WORKERS))
    if samples.ndim == grid.dim + 1 and samples.shape[1:] == grid.shape:
        coef = sfft.fftn(samples, axes=grid.axes, norm="forward", workers=_FFT_WORKERS)
        return SpectralVectorField(grid, coef)
    raise GridMismatchError(f"sample shape {samples.shape} does not match grid {grid.shape}")


def transform_backward(f: Field, real: bool = True) -> np.ndarray:
    out = sfft.ifftn(f.coef, axes=f.grid.axes, norm="forward", workers=_FFT_WORKERS)
    return out.real.copy() if real else out


@lru_cache(maxsize=None)
def _pad_index(n: int, m: int, dim: int):
    """Index tuples mapping resolved modes of an n-grid into an m-grid."""
    src = np.r_[0 : n // 2, n // 2 + 1 : n]
    k = src.copy()
    k[k > n // 2] -= n
    dst = k % m
    return np.ix_(*([src] * dim)), np.ix_(*([dst] * dim))


def padded_size(n: int, factor: float = 1.5) -> int:
    m = int(math.ceil(factor * n))
    return m + (m % 2)


def to_physical_padded(coef: np.ndarray, n: int, m: int, dim: int) -> np.ndarray:
    """Real samples of Hermitian ``coef`` (leading component axes allowed) on an m-grid."""
    src, dst = _pad_index(n, m, dim)
    lead = coef.shape[: coef.ndim - dim]
    big = np.zeros(lead + (m,) * dim, complex)
    big[(Ellipsis,) + dst] = coef[(Ellipsis,) + src]
    # real transform on the half spectrum; Hermitian input makes this exact
    half = big[..., : m // 2 + 1]
    return sfft.irfftn(half, s=(m,) * dim, axes=tuple(range(-dim, 0)), norm="forward", workers=_FFT_WORKERS)


def from_physical_padded(samples: np.ndarray, n: int, m: int, dim: int) -> np.ndarray:
    """Forward transform on the m-grid truncated back to resolved n-grid modes."""
    src, dst = _pad_index(n, m, dim)
    half = sfft.rfftn(samples, axes=tuple(range(-dim, 0)), norm="forward", workers=_FFT_WORKERS)
    lead = samples.shape[: samples.ndim - dim]
    out = np.zeros(lead + (n,) * dim, complex)
    # last axis: copy k >= 0, then fill k < 0 from the conjugate partner
    src_h = src[:-1] + (src[-1][..., : n // 2],)
    dst_h = dst[:-1] + (dst[-1][..., : n // 2],)
    out[(Ellipsis,) + src_h] = half[(Ellipsis,) + dst_h]
    neg = np.r_[0, n - 1 : 0 : -1]
    flipped = np.conj(out[(Ellipsis,) + np.ix_(*([neg] * dim))])
    out[..., n // 2 + 1 :] = flipped[..., n // 2 + 1 :]
    return out


def enforce_hermitian(grid: Grid, coef: np.ndarray, tol: float = HERMITIAN_DRIFT_TOL) -> np.ndarray:
    """Average coef(k) with conj(coef(-k)); raise if they disagreed by more than tol."""
    partner = np.conj(coef[(Ellipsis,) + grid.neg_index])
    sym = 0.5 * (coef + partner)
    scale = np.max(np.abs(coef)) if coef.size else 0.0
    if scale > 0:
        drift = np.max(np.abs(coef - sym)) / scale
        if drift > tol:
            raise HermitianDriftError(f"Hermitian drift {drift:.3e} exceeds {tol:.1e}")
    return sym


def hermitian_defect(f: Field) -> float:
    partner = np.conj(f.coef[(Ellipsis,) + f.grid.neg_index])
    scale = np.max(np.abs(f.coef))
    return float(np.max(np.abs(f.coef - partner)) / scale) if scale > 0 else 0.0


# ---------------------------------------------------------------------------
# multipliers and differential operators


def apply_radial_multiplier(f: Field, m: RadialSymbol) -> Field:
    weights = m(f.grid.kmag)
    if isinstance(f, SpectralVectorField):
        return f.with_coef(f.coef * weights, f.divergence_free)
    return f.with_coef(f.coef * weights)


def _scale(f: Field, weights: np.ndarray) -> Field:
    if isinstance(f, SpectralVectorField):
        return f.with_coef(f.coef * weights, f.divergence_free)
    return f.with_coef(f.coef * weights)


def fractional_laplacian(f: Field, rho: float) -> Field:
    """(-Delta)**rho, i.e. the multiplier |k|**(2 rho).  rho = 0 returns f."""
    if rho < 0:
        raise ValueError(f"rho must be >= 0, got {rho}")
    if rho == 0:
        return f
    # k2 holds exact integers, so integer rho is exact
    return _scale(f, f.grid.k2**rho)


def lambda_power(f: Field, s: float) -> Field:
    """Lambda**s = (-Delta)**(s/2) for any real s; the zero mode maps to 0 when s != 0."""
    if s == 0:
        return f
    return _scale(f, power_symbol(s)(f.grid.kmag))


def gradient(f: SpectralScalarField) -> SpectralVectorField:
    return SpectralVectorField(f.grid, 1j * f.grid.k * f.coef[None])


def divergence(v: SpectralVectorField) -> SpectralScalarField:
    if v.ncomp != v.grid.dim:
        raise GridMismatchError("divergence needs a dim-component field")
    return SpectralScalarField(v.grid, 1j * np.einsum("i...,i...->...", v.grid.k, v.coef))


def curl(v: SpectralVectorField) -> Field:
    """3D: i k x c.  2D: the scalar i(k1 c2 - k2 c1)."""
    k, c = v.grid.k, v.coef
    if v.ncomp != v.grid.dim:
        raise GridMismatchError("curl needs a dim-component field")
    if v.grid.dim == 2:
        return SpectralScalarField(v.grid, 1j * (k[0] * c[1] - k[1] * c[0]))
    out = 1j * np.stack(
        [
            k[1] * c[2] - k[2] * c[1],
            k[2] * c[0] - k[0] * c[2],
            k[0] * c[1] - k[1] * c[0],
        ]
    )
    return _solenoidal(v.grid, out)


def perp_gradient(f: SpectralScalarField) -> SpectralVectorField:
    """2D (-d2 f, d1 f)."""
    if f.grid.dim != 2:
        raise GridMismatchError("perp_gradient is two-dimensional")
    k = f.grid.k
    return _solenoidal(f.grid, 1j * np.stack([-k[1] * f.coef, k[0] * f.coef]))


def perp_divergence(v: SpectralVectorField) -> SpectralScalarField:
    """2D -d2 v1 + d1 v2 (equal to the 2D curl)."""
    return curl(v)


def grad_div(v: SpectralVectorField) -> SpectralVectorField:
    kc = np.einsum("i...,i...->...", v.grid.k, v.coef)
    return SpectralVectorField(v.grid, -v.grid.k * kc[None])


def leray_matrix(grid: Grid) -> np.ndarray:
    """Per-mode projector I - k k^T/|k|^2, shape (dim, dim, *grid.shape); identity at k = 0."""
    k = grid.k
    k2 = grid.k2.copy()
    k2[(0,) * grid.dim] = 1.0
    eye = np.eye(grid.dim).reshape((grid.dim, grid.dim) + (1,) * grid.dim)
    return eye - k[:, None] * k[None, :] / k2


def leray_coef(grid: Grid, c: np.ndarray) -> np.ndarray:
    k2 = grid.k2.copy()
    k2[(0,) * grid.dim] = 1.0
    kc = np.einsum("i...,i...->...", grid.k, c)
    return c - grid.k * (kc / k2)[None]


def leray_project(v: SpectralVectorField) -> SpectralVectorField:
    """c - k (k.c)/|k|^2 for k != 0; the mean passes through."""
    if v.ncomp != v.grid.dim:
        raise GridMismatchError("Leray projection needs a dim-component field")
    return _solenoidal(v.grid, leray_coef(v.grid, v.coef))


def apply_cutoff_coef(grid: Grid, coef: np.ndarray, n_cut: float | None) -> np.ndarray:
    if n_cut is None:
        return coef
    return np.where(grid.kmag <= n_cut, coef, 0.0)


# ---------------------------------------------------------------------------
# nonlinear term


def advect_coef(grid: Grid, u: np.ndarray, f: np.ndarray, pad: float = 1.5) -> np.ndarray:
    """(u.grad) f on raw coefficient stacks, dealiased by zero padding.

    ``u`` has shape (dim, ...) and ``f`` shape (c, ...).  Output is truncated
    to the resolved modes and symmetrized.
    """
    n, d = grid.n, grid.dim
    m = padded_size(n, pad)
    u_phys = to_physical_padded(u, n, m, d)
    df = 1j * grid.k[:, None] * f[None]  # (dim, c, ...)
    df_phys = to_physical_padded(df, n, m, d)
    prod = np.einsum("i...,ic...->c...", u_phys, df_phys)
    out = from_physical_padded(prod, n, m, d)
    return enforce_hermitian(grid, out)


def advect(u: SpectralVectorField, f: Field, pad: float = 1.5) -> Field:
    """Pseudo-spectral (u.grad) f; alias-free for fields with |k_i| < n/2."""
    if not getattr(u, "divergence_free", False):
        raise ValueError("advect requires a velocity flagged divergence-free")
    if u.grid != f.grid:
        raise GridMismatchError("fields live on different grids")
    if pad < 1.5:
        raise ValueError("padding factor must be >= 3/2")
    out = advect_coef(u.grid, u.coef, f.stacked(), pad)
    if isinstance(f, SpectralScalarField):
        return SpectralScalarField(f.grid, out[0])
    return SpectralVectorField(f.grid, out)


def product_coef(grid: Grid, a: np.ndarray, b: np.ndarray, pad: float = 2.0) -> np.ndarray:
    """Pointwise product of two scalar coefficient arrays, padded."""
    n, d = grid.n, grid.dim
    m = padded_size(n, pad)
    pa = to_physical_padded(a, n, m, d)
    pb = to_physical_padded(b, n, m, d)
    return from_physical_padded(pa * pb, n, m, d)


# ---------------------------------------------------------------------------
# norms


def inner_product_l2(f: Field, g: Field) -> float:
    """Re sum_k f_k conj(g_k), summed over components (normalized measure)."""
    _coef_of(g, f)
    return float(np.sum((f.coef * np.conj(g.coef)).real))


def sobolev_seminorm(f: Field, s: float) -> float:
    """||Lambda^s f||_2 by Parseval; k = 0 excluded for s != 0, included for s = 0."""
    power = np.abs(f.coef) ** 2
    if f.coef.ndim > f.grid.dim:
        power = power.sum(axis=0)
    if s == 0:
        return float(math.sqrt(power.sum()))
    w = power_symbol(2.0 * s)(f.grid.kmag)
    return float(math.sqrt(np.sum(w * power)))


def sobolev_norm(f: Field, s: float) -> float:
    """Inhomogeneous ||f||_{H^s} = (sum (1+|k|^2)^s |c_k|^2)^(1/2)."""
    power = np.abs(f.coef) ** 2
    if f.coef.ndim > f.grid.dim:
        power = power.sum(axis=0)
    return float(math.sqrt(np.sum((1.0 + f.grid.k2) ** s * power)))


def _pointwise_magnitude(samples: np.ndarray, dim: int) -> np.ndarray:
    if samples.ndim == dim:
        return np.abs(samples)
    return np.sqrt(np.sum(samples.reshape((-1,) + samples.shape[-dim:]) ** 2, axis=0))


def lq_norm(f: Field, q: float) -> float:
    """L^q norm on the unpadded physical grid; vectors use the pointwise Euclidean length."""
    if q < 1:
        raise ValueError("q must be >= 1")
    mag = _pointwise_magnitude(transform_backward(f), f.grid.dim)
    if math.isinf(q):
        return float(mag.max())
    return float(np.mean(mag**q) ** (1.0 / q))


def sup_norm_refined(coef: np.ndarray, grid: Grid, factor: float = 2.0) -> float:
    """max |f| evaluated on a zero-padded (refined) physical grid."""
    m = padded_size(grid.n, factor)
    phys = to_physical_padded(coef, grid.n, m, grid.dim)
    return float(_pointwise_magnitude(phys, grid.dim).max())


def band_limit_mask(grid: Grid, kmax: float) -> np.ndarray:
    return (grid.kmag <= kmax) & grid.resolved


def random_field(
    grid: Grid,
    rng: np.random.Generator,
    ncomp: int | None = None,
    kmax: float | None = None,
    slope: float = 0.0,
    divergence_free: bool = False,
    scalar: bool = False,
) -> Field:
    """Real random field, band-limited to ``|k| <= kmax`` with amplitude ~ |k|**-slope.

    ``kmax`` defaults to n/3.  The zero mode is removed.
    """
    kmax = grid.n / 3 if kmax is None else kmax
    shape = grid.shape if scalar else ((grid.dim if ncomp is None else ncomp),) + grid.shape
    noise = rng.standard_normal(shape)
    coef = sfft.fftn(noise, axes=grid.axes, norm="forward", workers=_FFT_WORKERS)
    weight = np.where(band_limit_mask(grid, kmax) & (grid.k2 > 0), power_symbol(-slope)(grid.kmag), 0.0)
    coef = coef * weight
    coef = 0.5 * (coef + np.conj(coef[(Ellipsis,) + grid.neg_index]))
    if scalar:
        return SpectralScalarField(grid, coef)
    v = SpectralVectorField(grid, coef)
    return leray_project(v) if divergence_free else v
