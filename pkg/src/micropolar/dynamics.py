"""Micropolar model systems, Galerkin truncation and time stepping.

Every model is reduced to one set of linear coefficients::

    du/dt = -P J (u.grad)u - c_u m_u(|k|) u + a_u P C_u(w)
    dw/dt = -J (u.grad)w - d_w w - c_w m_w(|k|) w + a_w C_w(u) + mu grad div w

where C_u, C_w are curl in 3D and (grad-perp, perp-div) in 2D, and J is the
sharp spectral cutoff.  The linear part is block-diagonal in k, so it is
integrated exactly with per-mode matrix exponentials.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Iterator

import numpy as np
from scipy import linalg

from . import spectral_core as sc
from .dissipation import DissipationSpec, GChoice
from .spectral_core import Grid, SpectralScalarField, SpectralVectorField

log = logging.getLogger(__name__)


class Model(enum.Enum):
    CLASSICAL_3D = "classical_3d"
    FRACTIONAL_3D = "fractional_3d"
    FRACTIONAL_2D = "fractional_2d"
    LOG_NO_ANGULAR = "log_no_angular"
    LOG_WITH_ANGULAR = "log_with_angular"
    NO_GRAD_DIV = "no_grad_div"

    @property
    def dim(self) -> int:
        return 2 if self is Model.FRACTIONAL_2D else 3

    @property
    def logarithmic(self) -> bool:
        return self in (Model.LOG_NO_ANGULAR, Model.LOG_WITH_ANGULAR)


@dataclass(frozen=True)
class PhysicalParams:
    # defaults are the normalization nu = kappa = 1/2, mu = gamma = 1
    nu: float = 0.5
    kappa: float = 0.5
    gamma: float = 1.0
    mu: float = 1.0
    alpha: float = 1.0
    beta: float = 1.0
    g: GChoice | None = None

    def __post_init__(self):
        for name in ("nu", "kappa", "gamma", "mu", "alpha", "beta"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass(frozen=True)
class LinearCoefficients:
    visc_u: float
    diss_u: DissipationSpec
    couple_u: float
    damp_w: float
    visc_w: float
    diss_w: DissipationSpec
    couple_w: float
    graddiv: float


@dataclass(frozen=True)
class ModelSpec:
    model: Model
    params: PhysicalParams = PhysicalParams()

    def __post_init__(self):
        if self.model.logarithmic:
            if self.params.g is None:
                raise ValueError(f"model {self.model.value} needs a g choice")
            if self.params.alpha <= 0:
                raise ValueError("logarithmic dissipation needs alpha > 0")
        elif self.params.g is not None:
            raise ValueError(f"model {self.model.value} does not take a g choice")

    @property
    def dim(self) -> int:
        return self.model.dim

    @property
    def ncomp_w(self) -> int:
        return 1 if self.dim == 2 else 3

    def coefficients(self) -> LinearCoefficients:
        p, m = self.params, self.model
        frac = DissipationSpec.fractional
        if m is Model.CLASSICAL_3D:
            diss_u, diss_w, visc_w, mu = frac(1.0), frac(1.0), p.gamma, p.mu
        elif m is Model.FRACTIONAL_3D:
            diss_u, diss_w, visc_w, mu = frac(p.alpha), frac(p.beta), p.gamma, p.mu
        elif m is Model.FRACTIONAL_2D:
            diss_u, diss_w, visc_w, mu = frac(p.alpha), frac(p.beta), p.gamma, 0.0
        elif m is Model.LOG_NO_ANGULAR:
            diss_u, diss_w, visc_w, mu = DissipationSpec.logarithmic(p.alpha, p.g), DissipationSpec.none(), 0.0, p.mu
        elif m is Model.LOG_WITH_ANGULAR:
            diss_u, diss_w, visc_w, mu = DissipationSpec.logarithmic(p.alpha, p.g), frac(p.beta), p.gamma, p.mu
        elif m is Model.NO_GRAD_DIV:
            diss_u, diss_w, visc_w, mu = frac(p.alpha), DissipationSpec.none(), 0.0, 0.0
        else:  # pragma: no cover
            raise ValueError(m)
        return LinearCoefficients(
            visc_u=p.nu + p.kappa,
            diss_u=diss_u,
            couple_u=2.0 * p.kappa,
            damp_w=4.0 * p.kappa,
            visc_w=visc_w,
            diss_w=diss_w,
            couple_w=2.0 * p.kappa,
            graddiv=mu,
        )


@dataclass(frozen=True)
class GalerkinCutoff:
    """Sharp ball cutoff |k| <= n_cut; inactive means identity."""

    n_cut: float | None = None

    @property
    def active(self) -> bool:
        return self.n_cut is not None

    def apply_coef(self, grid: Grid, coef: np.ndarray) -> np.ndarray:
        return sc.apply_cutoff_coef(grid, coef, self.n_cut)


NO_CUTOFF = GalerkinCutoff(None)


def apply_cutoff(f, cutoff: GalerkinCutoff):
    coef = cutoff.apply_coef(f.grid, f.coef)
    if isinstance(f, SpectralVectorField):
        return f.with_coef(coef, f.divergence_free)
    return f.with_coef(coef)


class Scheme(enum.Enum):
    STRANG = "strang"
    IMEX_CN = "imex_cn"


Forcing = Callable[[float], "tuple[np.ndarray, np.ndarray]"]


@dataclass(frozen=True)
class StepperConfig:
    dt: float
    t_end: float = 0.0
    scheme: Scheme = Scheme.STRANG
    cfl_safety: float = 0.5
    nonlinear: bool = True
    # manufactured-solution hook: t -> (f_u, f_w) coefficient stacks
    forcing: Forcing | None = None

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not 0 < self.cfl_safety <= 1:
            raise ValueError("cfl_safety must lie in (0, 1]")


@dataclass(frozen=True)
class State:
    t: float
    u: SpectralVectorField
    w: SpectralVectorField

    @property
    def grid(self) -> Grid:
        return self.u.grid

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.u.coef, self.w.coef], axis=0)

    @classmethod
    def from_stacked(cls, t: float, grid: Grid, y: np.ndarray) -> "State":
        d = grid.dim
        u = SpectralVectorField(grid, sc.leray_coef(grid, y[:d]), divergence_free=True)
        return cls(t, u, SpectralVectorField(grid, y[d:]))


class NumericalAbort(RuntimeError):
    """Raised on CFL violation or non-finite values."""


class CFLViolation(NumericalAbort):
    pass


# ---------------------------------------------------------------------------
# linear part


def _curl_matrix(k: np.ndarray) -> np.ndarray:
    """(M, 3) wavevectors -> (M, 3, 3) matrices of a -> i k x a."""
    M = k.shape[0]
    C = np.zeros((M, 3, 3), complex)
    C[:, 0, 1], C[:, 0, 2] = -k[:, 2], k[:, 1]
    C[:, 1, 0], C[:, 1, 2] = k[:, 2], -k[:, 0]
    C[:, 2, 0], C[:, 2, 1] = -k[:, 1], k[:, 0]
    return 1j * C


def _projector(k: np.ndarray) -> np.ndarray:
    d = k.shape[1]
    k2 = np.sum(k**2, axis=1)
    safe = np.where(k2 == 0, 1.0, k2)
    return np.eye(d)[None] - k[:, :, None] * k[:, None, :] / safe[:, None, None]


def linear_matrices(k: np.ndarray, spec: ModelSpec) -> np.ndarray:
    """Generators for a batch of wavevectors k (M, dim) -> (M, D, D).

    D = 6 in 3D acting on (u1, u2, u3, w1, w2, w3) and D = 3 in 2D on (u1, u2, w).
    """
    k = np.asarray(k, dtype=float)
    if k.ndim != 2 or k.shape[1] != spec.dim:
        raise ValueError(f"wavevectors must have shape (M, {spec.dim})")
    c = spec.coefficients()
    M, d = k.shape
    k2 = np.sum(k**2, axis=1)
    m_u = c.visc_u * c.diss_u.weights_k2(k2)
    m_w = c.visc_w * c.diss_w.weights_k2(k2) + c.damp_w
    P = _projector(k)
    if d == 3:
        L = np.zeros((M, 6, 6), complex)
        C = _curl_matrix(k)
        eye = np.eye(3)[None]
        L[:, :3, :3] = -m_u[:, None, None] * eye
        L[:, :3, 3:] = c.couple_u * (P @ C)
        L[:, 3:, :3] = c.couple_w * C
        L[:, 3:, 3:] = -m_w[:, None, None] * eye - c.graddiv * k[:, :, None] * k[:, None, :]
        return L
    L = np.zeros((M, 3, 3), complex)
    perp = 1j * np.stack([-k[:, 1], k[:, 0]], axis=1)  # grad-perp symbol
    L[:, 0, 0] = L[:, 1, 1] = -m_u
    L[:, :2, 2] = c.couple_u * np.einsum("mij,mj->mi", P, perp)
    L[:, 2, :2] = c.couple_w * perp  # perp-div symbol has the same entries
    L[:, 2, 2] = -m_w
    return L


def linear_matrix(k, spec: ModelSpec) -> np.ndarray:
    """Per-mode generator of the linearized coupled system at one wavevector."""
    return linear_matrices(np.asarray(k, dtype=float)[None], spec)[0]


def linear_propagator(k, spec: ModelSpec, dt: float) -> np.ndarray:
    """exp(dt * linear_matrix(k)), scaling-and-squaring Pade (scipy)."""
    if dt < 0:
        raise ValueError("dt must be >= 0")
    return linalg.expm(dt * linear_matrix(k, spec))


@lru_cache(maxsize=6)
def _grid_propagator(grid: Grid, spec: ModelSpec, dt: float) -> np.ndarray:
    if grid.dim != spec.dim:
        raise ValueError("spec/grid dimension mismatch")
    k = grid.k.reshape(grid.dim, -1).T
    E = linalg.expm(dt * linear_matrices(k, spec))
    E.flags.writeable = False
    log.debug("built %d propagators for dt=%g", E.shape[0], dt)
    return E


def apply_propagator(grid: Grid, E: np.ndarray, y: np.ndarray) -> np.ndarray:
    D = y.shape[0]
    flat = y.reshape(D, -1)
    out = np.einsum("mij,jm->im", E, flat)
    return out.reshape(y.shape)


# ---------------------------------------------------------------------------
# right-hand side


def _check_dims(state: State, spec: ModelSpec) -> None:
    if state.grid.dim != spec.dim or state.w.ncomp != spec.ncomp_w:
        raise ValueError(
            f"state (dim {state.grid.dim}, w components {state.w.ncomp}) does not match model {spec.model.value}"
        )


def nonlinear_coef(grid: Grid, u: np.ndarray, w: np.ndarray, cutoff: GalerkinCutoff) -> tuple[np.ndarray, np.ndarray]:
    """(-P J (u.grad)u, -J (u.grad)w) on coefficient stacks."""
    adv = sc.advect_coef(grid, u, np.concatenate([u, w], axis=0))
    adv = cutoff.apply_coef(grid, adv)
    d = grid.dim
    return -sc.leray_coef(grid, adv[:d]), -adv[d:]


def _coupling_u(grid: Grid, w: np.ndarray) -> np.ndarray:
    if grid.dim == 3:
        return sc.curl(SpectralVectorField(grid, w)).coef
    return sc.perp_gradient(SpectralScalarField(grid, w[0])).coef


def _coupling_w(grid: Grid, u: np.ndarray) -> np.ndarray:
    out = sc.curl(SpectralVectorField(grid, u)).coef
    return out if grid.dim == 3 else out[None]


def linear_rhs_coef(grid: Grid, spec: ModelSpec, u: np.ndarray, w: np.ndarray, dissipation: bool = True):
    """Linear right-hand side assembled from the differential operators."""
    c = spec.coefficients()
    du = c.couple_u * sc.leray_coef(grid, _coupling_u(grid, w))
    dw = c.couple_w * _coupling_w(grid, u) - c.damp_w * w
    if c.graddiv:
        dw = dw + c.graddiv * sc.grad_div(SpectralVectorField(grid, w)).coef
    if dissipation:
        du = du - c.visc_u * c.diss_u.weights_k2(grid.k2) * u
        dw = dw - c.visc_w * c.diss_w.weights_k2(grid.k2) * w
    return du, dw


def rhs(state: State, spec: ModelSpec, cutoff: GalerkinCutoff = NO_CUTOFF, nonlinear: bool = True):
    """(du/dt, dw/dt) of the truncated system as spectral fields."""
    _check_dims(state, spec)
    grid = state.grid
    u, w = state.u.coef, state.w.coef
    du, dw = linear_rhs_coef(grid, spec, u, w)
    if nonlinear:
        nu, nw = nonlinear_coef(grid, u, w, cutoff)
        du, dw = du + nu, dw + nw
    return SpectralVectorField(grid, sc.leray_coef(grid, du), divergence_free=True), SpectralVectorField(grid, dw)


def recover_pressure(state: State, spec: ModelSpec) -> SpectralScalarField:
    """Pressure p with grad p = (I - P) F, F = a_u curl w - (u.grad)u the explicit momentum forces.

    Solves -|k|^2 p = i k.F with a zero mean.  The curl term is solenoidal, so
    only advection contributes.
    """
    if spec.dim != 3:
        raise ValueError("recover_pressure is implemented for 3D states")
    grid = state.grid
    F = momentum_forces(state, spec)
    k2 = grid.k2.copy()
    k2[(0,) * 3] = 1.0
    p = -1j * np.einsum("i...,i...->...", grid.k, F.coef) / k2
    p[(0,) * 3] = 0.0
    return SpectralScalarField(grid, p)


def momentum_forces(state: State, spec: ModelSpec) -> SpectralVectorField:
    grid = state.grid
    c = spec.coefficients()
    adv = sc.advect_coef(grid, state.u.coef, state.u.coef)
    return SpectralVectorField(grid, c.couple_u * _coupling_u(grid, state.w.coef) - adv)


# ---------------------------------------------------------------------------
# stepping


def max_speed(u: SpectralVectorField) -> float:
    phys = sc.transform_backward(u)
    return float(np.sqrt(np.max(np.sum(phys**2, axis=0))))


def cfl_limit(u: SpectralVectorField, safety: float) -> float:
    vmax = max_speed(u)
    return math.inf if vmax == 0 else safety * u.grid.spacing / vmax


def _explicit_terms(grid, spec, cutoff, cfg: StepperConfig, y, t, linear_explicit: bool):
    d = grid.dim
    u, w = y[:d], y[d:]
    du = np.zeros_like(u)
    dw = np.zeros_like(w)
    if cfg.nonlinear:
        du, dw = nonlinear_coef(grid, u, w, cutoff)
    if linear_explicit:
        lu, lw = linear_rhs_coef(grid, spec, u, w, dissipation=False)
        du, dw = du + lu, dw + lw
    if cfg.forcing is not None:
        fu, fw = cfg.forcing(t)
        du, dw = du + sc.leray_coef(grid, fu), dw + fw
    return np.concatenate([du, dw], axis=0)


def _dissipation_diag(grid: Grid, spec: ModelSpec) -> np.ndarray:
    c = spec.coefficients()
    mu_ = -c.visc_u * c.diss_u.weights_k2(grid.k2)
    mw_ = -c.visc_w * c.diss_w.weights_k2(grid.k2)
    return np.concatenate([np.broadcast_to(mu_, (grid.dim,) + grid.shape), np.broadcast_to(mw_, (spec.ncomp_w,) + grid.shape)])


def step(state: State, spec: ModelSpec, cutoff: GalerkinCutoff, cfg: StepperConfig, dt: float | None = None) -> State:
    """Advance one step.

    Strang: half exact linear step, Heun (RK2) step of the projected
    nonlinear terms, half exact linear step.  IMEX_CN: Crank-Nicolson on the
    dissipation, Heun predictor-corrector on everything else.
    """
    _check_dims(state, spec)
    dt = cfg.dt if dt is None else dt
    grid = state.grid
    if cfg.nonlinear:
        limit = cfl_limit(state.u, cfg.cfl_safety)
        if dt > limit:
            raise CFLViolation(f"dt={dt:.4g} exceeds CFL limit {limit:.4g} at t={state.t:.6g}")
    y = state.stacked()
    t = state.t
    explicit = cfg.nonlinear or cfg.forcing is not None
    if cfg.scheme is Scheme.STRANG:
        E = _grid_propagator(grid, spec, 0.5 * dt)
        y = apply_propagator(grid, E, y)
        if explicit:
            k1 = _explicit_terms(grid, spec, cutoff, cfg, y, t, False)
            k2 = _explicit_terms(grid, spec, cutoff, cfg, y + dt * k1, t + dt, False)
            y = y + 0.5 * dt * (k1 + k2)
        y = apply_propagator(grid, E, y)
    else:
        D = _dissipation_diag(grid, spec)
        lhs = 1.0 / (1.0 - 0.5 * dt * D)
        expl = (1.0 + 0.5 * dt * D) * y
        k1 = _explicit_terms(grid, spec, cutoff, cfg, y, t, True)
        y_pred = lhs * (expl + dt * k1)
        k2 = _explicit_terms(grid, spec, cutoff, cfg, y_pred, t + dt, True)
        y = lhs * (expl + 0.5 * dt * (k1 + k2))
    if not np.all(np.isfinite(y)):
        raise NumericalAbort(f"non-finite values after step at t={t:.6g}")
    return State.from_stacked(t + dt, grid, y)


def step_linear_exact(state: State, spec: ModelSpec, t: float) -> State:
    """Exact solution of the linear system at time state.t + t."""
    grid = state.grid
    E = _grid_propagator(grid, spec, float(t))
    return State.from_stacked(state.t + t, grid, apply_propagator(grid, E, state.stacked()))


class SimulationAborted(NumericalAbort):
    def __init__(self, message: str, records: list, last_state: State, steps: int = 0):
        super().__init__(message)
        self.records = records
        self.last_state = last_state
        self.steps = steps


@dataclass
class SimulationResult:
    records: list
    final: State
    steps: int
    checkpoints: list = field(default_factory=list)


def step_schedule(t0: float, t_end: float, dt: float) -> Iterator[float]:
    """Step sizes: dt repeated, with a shortened last step landing on t_end."""
    t = t0
    eps = 1e-9 * dt
    while t < t_end - eps:
        h = dt if t + dt <= t_end + eps else t_end - t
        yield h
        t = t + h


def simulate(
    initial: State,
    spec: ModelSpec,
    cutoff: GalerkinCutoff,
    cfg: StepperConfig,
    probe: Callable[[State], object] | None = None,
    probe_cadence: int = 1,
    checkpoint_cadence: int = 0,
    on_checkpoint: Callable[[State, int], object] | None = None,
    on_record: Callable[[object], None] | None = None,
) -> SimulationResult:
    """Step from ``initial`` to ``cfg.t_end``.

    ``probe(state)`` runs at step 0, every ``probe_cadence`` steps and at the
    final step.  Records are also streamed to ``on_record`` so a consumer can
    flush them before a possible abort.
    """
    if probe_cadence < 1:
        raise ValueError("probe_cadence must be >= 1")
    records: list = []
    checkpoints: list = []

    def _probe(s: State):
        if probe is None:
            return
        rec = probe(s)
        records.append(rec)
        if on_record is not None:
            on_record(rec)

    state = initial
    _probe(state)
    nsteps = 0
    last_probed = 0
    for h in step_schedule(initial.t, cfg.t_end, cfg.dt):
        try:
            state = step(state, spec, cutoff, cfg, dt=h)
        except NumericalAbort as exc:
            raise SimulationAborted(str(exc), records, state, nsteps) from exc
        nsteps += 1
        if nsteps % probe_cadence == 0:
            _probe(state)
            last_probed = nsteps
        if checkpoint_cadence and nsteps % checkpoint_cadence == 0:
            checkpoints.append(state)
            if on_checkpoint is not None:
                on_checkpoint(state, nsteps)
    if nsteps and last_probed != nsteps:
        _probe(state)
    return SimulationResult(records, state, nsteps, checkpoints)


# ---------------------------------------------------------------------------
# initial data


def taylor_green(grid: Grid, amplitude: float = 1.0) -> State:
    """Deterministic Taylor-Green velocity with a smooth microrotation."""
    x = grid.x
    A = amplitude
    if grid.dim == 3:
        X, Y, Z = x
        u = A * np.stack([np.sin(X) * np.cos(Y) * np.cos(Z), -np.cos(X) * np.sin(Y) * np.cos(Z), np.zeros_like(X)])
        # solenoidal ABC part plus a gradient part so the grad-div term is active
        w = A * (
            np.stack([np.cos(Y) * np.sin(Z), np.cos(Z) * np.sin(X), np.cos(X) * np.sin(Y)])
            + 0.5 * np.stack([np.cos(X) * np.sin(Y) * np.sin(Z), np.sin(X) * np.cos(Y) * np.sin(Z), np.sin(X) * np.sin(Y) * np.cos(Z)])
        )
    else:
        X, Y = x
        u = A * np.stack([np.sin(X) * np.cos(Y), -np.cos(X) * np.sin(Y)])
        w = A * (np.cos(X) * np.cos(Y))[None]
    return _state_from_physical(grid, u, w)


def _state_from_physical(grid: Grid, u: np.ndarray, w: np.ndarray) -> State:
    uc = sc.transform_forward(grid, u).coef * grid.resolved
    wc = sc.transform_forward(grid, w).coef * grid.resolved
    uc = 0.5 * (uc + np.conj(uc[(Ellipsis,) + grid.neg_index]))
    wc = 0.5 * (wc + np.conj(wc[(Ellipsis,) + grid.neg_index]))
    return State(0.0, SpectralVectorField(grid, sc.leray_coef(grid, uc), divergence_free=True), SpectralVectorField(grid, wc))


def random_state(
    grid: Grid,
    seed: int,
    amplitude: float = 1.0,
    kmax: float | None = None,
    slope: float = 2.0,
) -> State:
    """Seeded divergence-free u and generic w, each with L2 norm ``amplitude``."""
    rng = np.random.default_rng(seed)
    u = sc.random_field(grid, rng, kmax=kmax, slope=slope, divergence_free=True)
    ncw = 3 if grid.dim == 3 else 1
    w = sc.random_field(grid, rng, ncomp=ncw, kmax=kmax, slope=slope)
    nu_, nw_ = sc.sobolev_seminorm(u, 0), sc.sobolev_seminorm(w, 0)
    return State(0.0, u * (amplitude / nu_), w * (amplitude / nw_))


def zero_state(grid: Grid) -> State:
    ncw = 3 if grid.dim == 3 else 1
    return State(0.0, sc.zeros_vector(grid, divergence_free=True), sc.zeros_vector(grid, ncw))


def truncate_state(state: State, cutoff: GalerkinCutoff) -> State:
    """J_N applied to both fields (initial data of the truncated system)."""
    return State(state.t, apply_cutoff(state.u, cutoff), apply_cutoff(state.w, cutoff))


def with_params(spec: ModelSpec, **changes) -> ModelSpec:
    return ModelSpec(spec.model, replace(spec.params, **changes))
