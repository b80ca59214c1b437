"""Energy ledgers, monitored norms, inequality probes and the (alpha, beta) sweep.

Inequalities with unknown constants are only sampled: every probe reports an
empirical ratio lhs / rhs, and callers test its scale invariance and its
stability across resolution.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from . import spectral_core as sc
from .dissipation import GChoice
from .dynamics import (
    GalerkinCutoff,
    Model,
    ModelSpec,
    NO_CUTOFF,
    SimulationAborted,
    PhysicalParams,
    State,
    StepperConfig,
    _coupling_u,
    _coupling_w,
    simulate,
    taylor_green,
)
from .spectral_core import Grid, SpectralVectorField

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# energy ledger


@dataclass(frozen=True)
class EnergyLedger:
    """Terms of the L2 balance at one record; ``residual`` is NaN at the ends."""

    t: float
    kinetic: float
    micro: float
    dissipation_u: float
    dissipation_w: float
    damping: float
    graddiv: float
    cross: float
    cross_wu: float  # integral of (curl w).u
    cross_uw: float  # integral of (curl u).w
    forcing: float = 0.0
    residual: float = math.nan

    @property
    def energy(self) -> float:
        return self.kinetic + self.micro

    @property
    def dissipative(self) -> float:
        return self.dissipation_u + self.dissipation_w + self.damping + self.graddiv

    CSV_HEADER = (
        "t",
        "kinetic",
        "micro",
        "dissipation_u",
        "dissipation_w",
        "damping",
        "graddiv",
        "cross",
        "cross_wu",
        "cross_uw",
        "forcing",
        "residual",
    )

    def row(self) -> tuple[float, ...]:
        return tuple(getattr(self, k) for k in self.CSV_HEADER)


def _sq(c: np.ndarray) -> float:
    return float(np.sum(np.abs(c) ** 2))


def ledger_terms(state: State, spec: ModelSpec, forcing: Callable | None = None) -> EnergyLedger:
    """Instantaneous balance terms of ``state`` (residual left unset)."""
    grid = state.grid
    c = spec.coefficients()
    u, w = state.u.coef, state.w.coef
    diss_u = c.visc_u * float(np.sum(c.diss_u.weights_k2(grid.k2) * np.abs(u) ** 2))
    diss_w = c.visc_w * float(np.sum(c.diss_w.weights_k2(grid.k2) * np.abs(w) ** 2))
    gd = 0.0
    if c.graddiv and spec.dim == 3:
        gd = c.graddiv * _sq(np.einsum("i...,i...->...", grid.k, w))
    cwu = float(np.real(np.vdot(u, _coupling_u(grid, w))))
    cuw = float(np.real(np.vdot(w, _coupling_w(grid, u))))
    power = 0.0
    if forcing is not None:
        fu, fw = forcing(state.t)
        power = float(np.real(np.vdot(u, sc.leray_coef(grid, fu)) + np.vdot(w, fw)))
    return EnergyLedger(
        t=state.t,
        kinetic=0.5 * _sq(u),
        micro=0.5 * _sq(w),
        dissipation_u=diss_u,
        dissipation_w=diss_w,
        damping=c.damp_w * _sq(w),
        graddiv=gd,
        cross=c.couple_u * cwu + c.couple_w * cuw,
        cross_wu=cwu,
        cross_uw=cuw,
        forcing=power,
    )


def energy_budget(records: Sequence[EnergyLedger]) -> list[EnergyLedger]:
    """Fill residual = dE/dt + dissipative terms - cross - forcing by centered differences."""
    if len(records) < 3:
        raise ValueError(f"energy budget needs at least 3 records, got {len(records)}")
    out = [dataclasses.replace(records[0], residual=math.nan)]
    for prev, cur, nxt in zip(records[:-2], records[1:-1], records[2:]):
        h0, h1 = cur.t - prev.t, nxt.t - cur.t
        # second-order derivative on a possibly non-uniform stencil
        dE = (h0**2 * nxt.energy - h1**2 * prev.energy + (h1**2 - h0**2) * cur.energy) / (h0 * h1 * (h0 + h1))
        res = dE + cur.dissipative - cur.cross - cur.forcing
        out.append(dataclasses.replace(cur, residual=res))
    out.append(dataclasses.replace(records[-1], residual=math.nan))
    return out


def integrated_residual(ledger: Sequence[EnergyLedger]) -> float:
    """Trapezoid integral of |residual| over the interior records."""
    inner = [r for r in ledger if not math.isnan(r.residual)]
    if len(inner) < 2:
        return abs(inner[0].residual) if inner else 0.0
    t = np.array([r.t for r in inner])
    return float(integrate.trapezoid(np.abs([r.residual for r in inner]), t))


# ---------------------------------------------------------------------------
# monitored norms


def refined_sup(coef: np.ndarray, grid: Grid, factor: float = 2.0) -> float:
    """max |f(x)| (Euclidean over leading components) on a refined grid."""
    return sc.sup_norm_refined(coef, grid, factor)


def grad_u_sup(u: SpectralVectorField, factor: float = 2.0) -> float:
    """||grad u||_inf with the pointwise Frobenius norm, on a refined grid."""
    grad = 1j * u.grid.k[:, None] * u.coef[None]
    return refined_sup(grad.reshape((-1,) + u.grid.shape), u.grid, factor)


def default_sigma_list(params: PhysicalParams, s: float = 2.6) -> tuple[float, ...]:
    """0, 5/4, alpha+beta-1, a mid-range rho, 3/2 and s (duplicates dropped, order kept)."""
    a, b = params.alpha, params.beta
    rho = 0.5 * ((9 / 4 - (a + b)) + (1 + b))
    out: list[float] = []
    for v in (0.0, 1.25, a + b - 1, rho, 1.5, s):
        if v not in out:
            out.append(v)
    return tuple(out)


@dataclass(frozen=True)
class NormRecord:
    t: float
    sigma: tuple[float, ...]
    u: tuple[float, ...]  # ||Lambda^sigma u||_2
    w: tuple[float, ...]
    grad_u_inf: float
    w_inf: float

    def header(self) -> list[str]:
        cols = ["t"]
        cols += [f"u_sigma_{s:g}" for s in self.sigma]
        cols += [f"w_sigma_{s:g}" for s in self.sigma]
        return cols + ["grad_u_inf", "w_inf"]

    def row(self) -> list[float]:
        return [self.t, *self.u, *self.w, self.grad_u_inf, self.w_inf]


def monitor_norms(state: State, sigma_list: Sequence[float], sup_norms: bool = True) -> NormRecord:
    sig = tuple(float(s) for s in sigma_list)
    un = tuple(sc.sobolev_seminorm(state.u, s) for s in sig)
    wn = tuple(sc.sobolev_seminorm(state.w, s) for s in sig)
    gu = grad_u_sup(state.u) if sup_norms else math.nan
    wi = refined_sup(state.w.coef, state.grid) if sup_norms else math.nan
    return NormRecord(state.t, sig, un, wn, gu, wi)


@dataclass
class NormSeries:
    """Records sharing one sigma list, fixed by the first record."""

    records: list[NormRecord] = field(default_factory=list)

    def append(self, rec: NormRecord) -> None:
        if self.records and rec.sigma != self.records[0].sigma:
            raise ValueError("sigma list is fixed for the lifetime of a series")
        if any(v < 0 for v in rec.u + rec.w):
            raise ValueError("norms must be nonnegative")
        self.records.append(rec)

    @property
    def times(self) -> np.ndarray:
        return np.array([r.t for r in self.records])

    def column(self, name: str) -> np.ndarray:
        header = self.records[0].header()
        i = header.index(name)
        return np.array([r.row()[i] for r in self.records])


@dataclass(frozen=True)
class BoundednessReport:
    threshold: float
    violations: tuple[str, ...]
    max_growth: dict

    @property
    def ok(self) -> bool:
        return not self.violations


def check_bounded(series: NormSeries, threshold: float) -> BoundednessReport:
    """Flag every column whose value ever exceeds threshold x its initial value."""
    header = series.records[0].header()[1:]
    data = np.array([r.row()[1:] for r in series.records])
    bad, growth = [], {}
    for j, name in enumerate(header):
        col = data[:, j]
        if np.all(np.isnan(col)):
            continue
        init = col[0]
        peak = float(np.nanmax(col))
        growth[name] = peak / init if init > 0 else (1.0 if peak == 0 else math.inf)
        if peak > threshold * init:
            bad.append(name)
    return BoundednessReport(threshold, tuple(bad), growth)


def time_integral(t: Sequence[float], values: Sequence[float]) -> float:
    if len(t) < 2:
        return 0.0
    return float(integrate.trapezoid(np.asarray(values, dtype=float), np.asarray(t, dtype=float)))


# ---------------------------------------------------------------------------
# Kato-Ponce commutator probe


@dataclass(frozen=True)
class CommutatorSample:
    s_exponent: float
    lhs: float
    rhs_bound: float

    @property
    def ratio(self) -> float:
        return 0.0 if self.lhs == 0 else self.lhs / self.rhs_bound


def _lift(coef: np.ndarray, n: int, m: int, dim: int) -> np.ndarray:
    src, dst = sc._pad_index(n, m, dim)
    big = np.zeros(coef.shape[: coef.ndim - dim] + (m,) * dim, complex)
    big[(Ellipsis,) + dst] = coef[(Ellipsis,) + src]
    return big


def kato_ponce_sample(f: SpectralVectorField, g, s: float, pad: float = 2.0) -> CommutatorSample:
    """lhs = ||Lambda^s (f.grad g) - f.grad Lambda^s g||_2 against
    rhs = ||grad f||_inf ||Lambda^(s-1) grad g||_2 + ||Lambda^s f||_2 ||grad g||_inf.

    Products are formed on a grid padded by ``pad`` >= 2 and kept there, so
    the commutator of band-limited inputs is exact.
    """
    grid = f.grid
    if pad < 2:
        raise ValueError("commutator probes need padding >= 2")
    if s < 0:
        raise ValueError("s must be >= 0")
    m = sc.padded_size(grid.n, pad)
    kmax_big = math.sqrt(grid.dim) * m / 2
    if s * math.log10(kmax_big) > 250:
        raise ValueError(f"|k|^s overflow risk for s={s} on the padded grid")
    big = sc.make_grid(grid.dim, m)
    gc = g.stacked()
    f_big = _lift(f.coef, grid.n, m, grid.dim)
    g_big = _lift(gc, grid.n, m, grid.dim)
    ls = np.where(big.k2 > 0, big.k2 ** (0.5 * s), 0.0) if s > 0 else np.ones(big.shape)

    fp = sc.transform_backward(SpectralVectorField(big, f_big))

    def f_dot_grad(h):
        dh = sc.transform_backward(SpectralVectorField(big, (1j * big.k[:, None] * h[None]).reshape((-1,) + big.shape)))
        dh = dh.reshape((big.dim, -1) + big.shape)
        return sc.transform_forward(big, np.einsum("i...,ic...->c...", fp, dh)).coef

    comm = ls * f_dot_grad(g_big) - f_dot_grad(ls * g_big)
    lhs = math.sqrt(_sq(comm))
    grad_f = (1j * grid.k[:, None] * f.coef[None]).reshape((-1,) + grid.shape)
    grad_g = (1j * grid.k[:, None] * gc[None]).reshape((-1,) + grid.shape)
    ls1 = np.zeros(grid.shape)
    np.power(grid.k2, 0.5 * (s - 1), out=ls1, where=grid.k2 > 0)
    rhs = refined_sup(grad_f, grid) * math.sqrt(_sq(ls1 * grad_g)) + sc.sobolev_seminorm(f, s) * refined_sup(grad_g, grid)
    return CommutatorSample(float(s), lhs, float(rhs))


# ---------------------------------------------------------------------------
# high-low splitting of ||grad u||_inf


@dataclass(frozen=True)
class HighLowSample:
    lhs: float
    terms: tuple[float, float, float]

    @property
    def ratio(self) -> float:
        total = sum(self.terms)
        return 0.0 if self.lhs == 0 else self.lhs / total


def highlow_gradient_bound(u: SpectralVectorField, n_split: int, g: GChoice, k1: float, eps2: float) -> HighLowSample:
    """||grad u||_inf against ||u||_2, g^2(2^N) sqrt(N) ||Lambda^(5/2) g^-2(Lambda) u||_2
    and 2^(N(eps2 + 3/4 - k1)) ||Lambda^(k1 + 7/4 - eps2) u||_2."""
    if not k1 > eps2 + 0.75:
        raise ValueError(f"need k1 > eps2 + 3/4, got k1={k1}, eps2={eps2}")
    if n_split < 1:
        raise ValueError("n_split must be >= 1")
    grid = u.grid
    r = grid.kmag
    mult = np.where(r > 0, r**2.5 / g(r) ** 2, 0.0)
    t1 = sc.sobolev_seminorm(u, 0)
    t2 = float(g(2.0**n_split)) ** 2 * math.sqrt(n_split) * math.sqrt(_sq(mult * u.coef))
    t3 = 2.0 ** (n_split * (eps2 + 0.75 - k1)) * sc.sobolev_seminorm(u, k1 + 1.75 - eps2)
    return HighLowSample(grad_u_sup(u), (t1, t2, t3))


# ---------------------------------------------------------------------------
# (alpha, beta) sweep


@dataclass(frozen=True)
class SweepBase:
    dim: int = 3
    n: int = 32
    amplitude: float = 0.1
    t_end: float = 1.0
    dt: float = 0.01
    s: float = 2.6
    nu: float = 0.5
    kappa: float = 0.5
    gamma: float = 1.0
    mu: float = 1.0
    probe_cadence: int = 1
    zero_data: bool = False


@dataclass(frozen=True)
class SweepCell:
    alpha: float
    beta: float
    status: str  # "ok" or "aborted"
    growth_factor: float
    sup_hs: float
    int_grad_u_inf: float
    int_w_inf_sq: float
    steps: int
    message: str = ""

    CSV_HEADER = ("alpha", "beta", "status", "growth_factor", "sup_hs", "int_grad_u_inf", "int_w_inf_sq", "steps", "message")

    def row(self) -> tuple:
        return tuple(getattr(self, k) for k in self.CSV_HEADER)


def hs_norm(state: State, s: float) -> float:
    return math.hypot(sc.sobolev_norm(state.u, s), sc.sobolev_norm(state.w, s))


def run_cell(alpha: float, beta: float, base: SweepBase, cutoff: GalerkinCutoff = NO_CUTOFF) -> SweepCell:
    grid = sc.make_grid(base.dim, base.n)
    model = Model.FRACTIONAL_3D if base.dim == 3 else Model.FRACTIONAL_2D
    params = PhysicalParams(nu=base.nu, kappa=base.kappa, gamma=base.gamma, mu=base.mu, alpha=alpha, beta=beta)
    spec = ModelSpec(model, params)
    init = taylor_green(grid, 0.0 if base.zero_data else base.amplitude)
    cfg = StepperConfig(dt=base.dt, t_end=base.t_end)

    def probe(st: State):
        return st.t, hs_norm(st, base.s), grad_u_sup(st.u), refined_sup(st.w.coef, grid) ** 2

    status, msg = "ok", ""
    try:
        res = simulate(init, spec, cutoff, cfg, probe=probe, probe_cadence=base.probe_cadence)
        recs, steps = res.records, res.steps
    except SimulationAborted as exc:
        status, msg = "aborted", str(exc)
        recs, steps = exc.records, exc.steps
    t, hs, gu, wi = (np.array(x) for x in zip(*recs))
    h0 = hs[0]
    peak = float(np.max(hs))
    growth = peak / h0 if h0 > 0 else (1.0 if peak == 0 else math.inf)
    return SweepCell(alpha, beta, status, growth, peak, time_integral(t, gu), time_integral(t, wi), int(steps), msg)


def dedupe_cells(alphas: Sequence[float], betas: Sequence[float]) -> list[tuple[float, float]]:
    cells, seen = [], set()
    for a in alphas:
        for b in betas:
            key = (float(a), float(b))
            if key in seen:
                log.warning("duplicate sweep cell (alpha=%g, beta=%g) skipped", a, b)
                continue
            seen.add(key)
            cells.append(key)
    return cells


def threshold_sweep(alphas: Sequence[float], betas: Sequence[float], base: SweepBase) -> list[SweepCell]:
    """Exploratory growth table over (alpha, beta); aborted cells are rows, not errors."""
    out = []
    for a, b in dedupe_cells(alphas, betas):
        cell = run_cell(a, b, base)
        log.info("sweep cell alpha=%g beta=%g: %s growth=%.4g", a, b, cell.status, cell.growth_factor)
        out.append(cell)
    return out
