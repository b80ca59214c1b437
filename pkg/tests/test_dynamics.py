import math

import numpy as np
import pytest
import sympy as sp
from scipy import linalg

from micropolar import dissipation as ds
from micropolar import dynamics as dy
from micropolar import spectral_core as sc
from micropolar import verify
from conftest import rel

FRAC = dy.ModelSpec(dy.Model.FRACTIONAL_3D, dy.PhysicalParams(alpha=1.25, beta=0.5))


def spec_with(model, **kw):
    return dy.ModelSpec(model, dy.PhysicalParams(**kw))


# ---------------------------------------------------------------------------
# model specs


def test_log_models_require_g():
    with pytest.raises(ValueError, match="g choice"):
        dy.ModelSpec(dy.Model.LOG_NO_ANGULAR)
    with pytest.raises(ValueError):
        spec_with(dy.Model.FRACTIONAL_3D, g=ds.G1)
    dy.ModelSpec(dy.Model.LOG_WITH_ANGULAR, dy.PhysicalParams(g=ds.G1))


def test_params_nonnegative():
    with pytest.raises(ValueError):
        dy.PhysicalParams(nu=-1.0)


def test_no_grad_div_coefficients():
    c = spec_with(dy.Model.NO_GRAD_DIV, alpha=1.25).coefficients()
    # normalized form: visc 1, coupling 1, damping 2, no angular viscosity, no grad-div
    assert (c.visc_u, c.couple_u, c.couple_w, c.damp_w, c.graddiv) == (1.0, 1.0, 1.0, 2.0, 0.0)
    assert not np.any(c.diss_w.weights_k2(np.arange(5.0)))


# ---------------------------------------------------------------------------
# linear operator


def test_linear_matrix_eigenvalues_oracle():
    # k = e1, normalized coefficients, alpha = beta = 1: the (u2, w3) and (u3, w2) pairs
    # give [[-1, -i], [i, -3]] with eigenvalues -2 +- sqrt(2); u1 decays at -1, w1 at -4
    L = dy.linear_matrix((1, 0, 0), spec_with(dy.Model.FRACTIONAL_3D, alpha=1.0, beta=1.0))
    ev = np.sort(np.linalg.eigvals(L).real)
    r2 = math.sqrt(2)
    expect = np.sort([-1.0, -4.0, -2 - r2, -2 - r2, -2 + r2, -2 + r2])
    assert np.max(np.abs(ev - expect)) <= 1e-13
    assert np.max(np.abs(np.linalg.eigvals(L).imag)) <= 1e-13


def test_linear_matrix_matches_dense_assembly():
    for make in verify.LINOP_SPECS.values():
        spec = make()
        for k in [(1, 2, 3), (-2, 0, 5), (0, 0, 1)]:
            assert rel(dy.linear_matrix(k, spec), verify.dense_generator(k, spec)) <= 1e-15
    spec2 = spec_with(dy.Model.FRACTIONAL_2D, alpha=1.0, beta=0.5)
    assert rel(dy.linear_matrix((2, -3), spec2), verify.dense_generator((2, -3), spec2)) <= 1e-15


def test_kappa_zero_decouples():
    spec = spec_with(dy.Model.FRACTIONAL_3D, kappa=0.0, alpha=1.25, beta=0.5)
    L = dy.linear_matrix((1, 2, 2), spec)
    assert not np.any(L[:3, 3:]) and not np.any(L[3:, :3])
    assert np.allclose(np.diag(L[:3, :3]).real, -0.5 * 3.0**2.5)


def test_propagator_examples():
    spec = FRAC
    assert np.array_equal(dy.linear_propagator((1, 1, 0), spec, 0.0), np.eye(6))
    P1 = dy.linear_propagator((1, 1, 0), spec, 0.25)
    P2 = dy.linear_propagator((1, 1, 0), spec, 0.5)
    assert rel(P1 @ P1, P2) <= 1e-11
    k0 = spec_with(dy.Model.FRACTIONAL_3D, kappa=0.0, alpha=1.25, beta=0.5)
    P = dy.linear_propagator((0, 3, 0), k0, 0.1)
    assert P[0, 0].real == pytest.approx(math.exp(-0.5 * 3.0**2.5 * 0.1), rel=1e-13)


def test_propagator_against_taylor_oracle():
    # independent oracle: truncated Taylor series of exp(dt L) for a small dt
    spec = verify.LINOP_SPECS["log_with_angular"]()
    L = dy.linear_matrix((1, -1, 2), spec) * 0.01
    taylor = np.eye(6, dtype=complex)
    term = np.eye(6, dtype=complex)
    for j in range(1, 30):
        term = term @ L / j
        taylor = taylor + term
    assert rel(dy.linear_propagator((1, -1, 2), spec, 0.01), taylor) <= 1e-12


def test_dissipative_on_divergence_free_subspace():
    for make in verify.LINOP_SPECS.values():
        spec = make()
        for k in [(1, 0, 0), (1, 1, 1), (3, -2, 4), (7, 0, 1)]:
            basis = linalg.null_space(np.asarray(k, float)[None])
            Q = linalg.block_diag(basis, np.eye(3))
            assert np.max(np.linalg.eigvals(Q.T @ dy.linear_matrix(k, spec) @ Q).real) <= 1e-12


# ---------------------------------------------------------------------------
# right-hand side


def test_zero_state_zero_rhs(g3):
    du, dw = dy.rhs(dy.zero_state(g3), FRAC)
    assert not np.any(du.coef) and not np.any(dw.coef)


def test_rhs_single_mode_w(g3):
    w = np.zeros((3,) + g3.shape, complex)
    w[2][0, 1, 0] = w[2][0, -1, 0] = 0.5
    st = dy.State(0.0, sc.zeros_vector(g3, divergence_free=True), sc.SpectralVectorField(g3, w))
    du, dw = dy.rhs(st, FRAC)
    wf = sc.SpectralVectorField(g3, w)
    assert rel(du.coef, sc.leray_project(sc.curl(wf)).coef) <= 1e-15
    lin_u, lin_w = dy.linear_rhs_coef(g3, FRAC, np.zeros_like(w), w)
    assert rel(dw.coef, lin_w) <= 1e-15


def test_rhs_rejects_dimension_mismatch(g2):
    with pytest.raises(ValueError):
        dy.rhs(dy.zero_state(g2), FRAC)


def test_rhs_matches_linear_matrix(g3, rng):
    st = dy.random_state(g3, 3)
    du, dw = dy.rhs(st, FRAC, nonlinear=False)
    y = st.stacked()
    E = dy.linear_matrices(g3.k.reshape(3, -1).T, FRAC)
    ref = np.einsum("mij,jm->im", E, y.reshape(6, -1)).reshape(y.shape)
    got = np.concatenate([du.coef, dw.coef])
    assert rel(got, ref) <= 1e-13


@pytest.mark.parametrize(
    "a,b",
    [
        (
            dy.ModelSpec(dy.Model.FRACTIONAL_3D, dy.PhysicalParams(alpha=1.0, beta=1.0, nu=0.3, kappa=0.2, gamma=0.7, mu=0.4)),
            dy.ModelSpec(dy.Model.CLASSICAL_3D, dy.PhysicalParams(nu=0.3, kappa=0.2, gamma=0.7, mu=0.4)),
        ),
        (
            dy.ModelSpec(dy.Model.LOG_WITH_ANGULAR, dy.PhysicalParams(alpha=1.25, beta=0.5, g=ds.G_UNIT)),
            dy.ModelSpec(dy.Model.FRACTIONAL_3D, dy.PhysicalParams(alpha=1.25, beta=0.5)),
        ),
        (
            dy.ModelSpec(dy.Model.NO_GRAD_DIV, dy.PhysicalParams(alpha=1.25)),
            dy.ModelSpec(dy.Model.FRACTIONAL_3D, dy.PhysicalParams(alpha=1.25, beta=0.0, mu=0.0)),
        ),
    ],
    ids=["classical", "log_unit_g", "no_grad_div"],
)
def test_model_equivalences(a, b, g3):
    for seed in range(3):
        st = dy.random_state(g3, seed)
        ra, rb = dy.rhs(st, a), dy.rhs(st, b)
        assert rel(ra[0].coef, rb[0].coef) <= 1e-13
        assert rel(ra[1].coef, rb[1].coef) <= 1e-13


# ---------------------------------------------------------------------------
# cutoff and pressure


def test_cutoff_examples(g3, rng):
    f = sc.random_field(g3, rng, kmax=g3.n)
    big = dy.GalerkinCutoff(math.sqrt(3) * g3.n / 2)
    assert np.array_equal(dy.apply_cutoff(f, big).coef, f.coef)
    band = sc.random_field(g3, rng)  # |k| <= n/3
    assert np.array_equal(dy.apply_cutoff(band, dy.GalerkinCutoff(g3.n / 2)).coef, band.coef)
    j = dy.GalerkinCutoff(5.0)
    once = dy.apply_cutoff(f, j)
    assert np.array_equal(dy.apply_cutoff(once, j).coef, once.coef)
    zero = dy.apply_cutoff(f, dy.GalerkinCutoff(0.0))
    assert np.count_nonzero(np.any(zero.coef != 0, axis=0)) <= 1
    assert not dy.NO_CUTOFF.active


def test_pressure_zero_velocity(g3, rng):
    st = dy.State(0.0, sc.zeros_vector(g3, divergence_free=True), sc.random_field(g3, rng))
    assert np.max(np.abs(dy.recover_pressure(st, FRAC).coef)) <= 1e-15


def test_pressure_helmholtz(g3):
    st = dy.random_state(g3, 4)
    p = dy.recover_pressure(st, FRAC)
    F = dy.momentum_forces(st, FRAC)
    recon = sc.leray_project(F).coef + sc.gradient(p).coef
    assert rel(recon, F.coef) <= 1e-11


def test_pressure_of_taylor_green(g3):
    # physical pressure of the 2D-like Taylor-Green flow: p = A^2/16 (cos 2x + cos 2y)(cos 2z + 2)
    A = 0.3
    st = dy.taylor_green(g3, A)
    st = dy.State(0.0, st.u, sc.zeros_vector(g3))
    x, y, z = g3.x
    expect = A**2 / 16 * (np.cos(2 * x) + np.cos(2 * y)) * (np.cos(2 * z) + 2)
    expect -= expect.mean()
    got = sc.transform_backward(dy.recover_pressure(st, FRAC))
    assert np.max(np.abs(got - expect)) <= 1e-14


def test_pressure_rejects_2d(g2):
    with pytest.raises(ValueError):
        dy.recover_pressure(dy.zero_state(g2), spec_with(dy.Model.FRACTIONAL_2D))


# ---------------------------------------------------------------------------
# stepping


def test_zero_state_stays_zero(g3):
    out = dy.step(dy.zero_state(g3), FRAC, dy.NO_CUTOFF, dy.StepperConfig(dt=0.1))
    assert not np.any(out.stacked())
    assert out.t == pytest.approx(0.1)


def test_linear_stepping_matches_propagator(g3):
    st = dy.random_state(g3, 5)
    cfg = dy.StepperConfig(dt=0.05, t_end=0.5, nonlinear=False)
    got = dy.simulate(st, FRAC, dy.NO_CUTOFF, cfg).final.stacked()
    exact = dy.step_linear_exact(st, FRAC, 0.5).stacked()
    assert rel(got, exact) <= 1e-12


def test_linear_modes_match_dense_oracle():
    errs = verify.linear_mode_errors(count=4)
    assert max(errs.values()) <= 1e-8


def test_cfl_violation_aborts(g3):
    st = dy.taylor_green(g3, 50.0)
    with pytest.raises(dy.CFLViolation):
        dy.step(st, FRAC, dy.NO_CUTOFF, dy.StepperConfig(dt=0.5))


def test_nonfinite_aborts(g3):
    c = np.zeros((3,) + g3.shape, complex)
    c[2][1, 0, 0] = c[2][-1, 0, 0] = np.nan
    st = dy.State(0.0, sc.zeros_vector(g3, divergence_free=True), sc.SpectralVectorField(g3, c))
    with pytest.raises(dy.NumericalAbort):
        dy.step(st, FRAC, dy.NO_CUTOFF, dy.StepperConfig(dt=0.01, nonlinear=False))


def test_divergence_free_and_hermitian_during_run(g3):
    st = dy.taylor_green(g3, 1.0)
    cfg = dy.StepperConfig(dt=0.02, t_end=0.2)

    def probe(s):
        div = np.max(np.abs(np.einsum("i...,i...->...", g3.k, s.u.coef))) / np.max(np.abs(s.u.coef))
        return div, sc.hermitian_defect(s.u), sc.hermitian_defect(s.w)

    recs = dy.simulate(st, FRAC, dy.NO_CUTOFF, cfg, probe=probe).records
    assert max(r[0] for r in recs) <= 1e-11
    assert max(max(r[1], r[2]) for r in recs) <= 1e-12


def test_step_schedule_lands_on_t_end():
    steps = list(dy.step_schedule(0.0, 1.0, 0.3))
    assert len(steps) == 4 and sum(steps) == pytest.approx(1.0)
    assert list(dy.step_schedule(0.0, 0.0, 0.1)) == []


def test_simulate_t_end_zero(g3):
    st = dy.taylor_green(g3, 0.1)
    res = dy.simulate(st, FRAC, dy.NO_CUTOFF, dy.StepperConfig(dt=0.1, t_end=0.0), probe=lambda s: s.t)
    assert res.records == [0.0] and res.final is st and res.steps == 0


def test_probe_and_checkpoint_cadence(g3):
    st = dy.taylor_green(g3, 0.1)
    seen = []
    res = dy.simulate(
        st,
        FRAC,
        dy.NO_CUTOFF,
        dy.StepperConfig(dt=0.01, t_end=0.07),
        probe=lambda s: round(s.t, 10),
        probe_cadence=3,
        checkpoint_cadence=2,
        on_checkpoint=lambda s, n: seen.append(n),
    )
    assert res.records == [0.0, 0.03, 0.06, 0.07]
    assert seen == [2, 4, 6]


def test_restart_is_bit_identical(g3):
    st = dy.taylor_green(g3, 1.0)
    cfg = dy.StepperConfig(dt=0.02, t_end=0.2)
    full = dy.simulate(st, FRAC, dy.NO_CUTOFF, cfg, checkpoint_cadence=5)
    mid = full.checkpoints[0]
    rest = dy.simulate(mid, FRAC, dy.NO_CUTOFF, cfg)
    assert np.array_equal(rest.final.stacked(), full.final.stacked())


def test_abort_carries_partial_records(g3):
    st = dy.taylor_green(g3, 3.0)
    cfg = dy.StepperConfig(dt=0.05, t_end=1.0, cfl_safety=0.1)
    with pytest.raises(dy.SimulationAborted) as info:
        dy.simulate(st, FRAC, dy.NO_CUTOFF, cfg, probe=lambda s: s.t)
    assert info.value.records == [0.0]


def test_galerkin_consistency_linear(g3):
    # N-band-limited data under linear dynamics: cutoffs N and N' > N agree
    st = dy.truncate_state(dy.random_state(g3, 6), dy.GalerkinCutoff(4.0))
    cfg = dy.StepperConfig(dt=0.05, t_end=0.3, nonlinear=False)
    a = dy.simulate(st, FRAC, dy.GalerkinCutoff(4.0), cfg).final.stacked()
    b = dy.simulate(st, FRAC, dy.GalerkinCutoff(6.0), cfg).final.stacked()
    assert np.max(np.abs(a - b)) <= 1e-10 * np.max(np.abs(a))


def test_cutoff_removes_high_modes_in_nonlinear_run(g3):
    st = dy.truncate_state(dy.taylor_green(g3, 1.0), dy.GalerkinCutoff(3.0))
    out = dy.simulate(st, FRAC, dy.GalerkinCutoff(3.0), dy.StepperConfig(dt=0.02, t_end=0.1)).final
    outside = g3.kmag > 3.0
    assert np.max(np.abs(out.stacked()[:, outside])) <= 1e-15


# ---------------------------------------------------------------------------
# transport-only conservation


def transport_only(dim):
    model = dy.Model.FRACTIONAL_3D if dim == 3 else dy.Model.FRACTIONAL_2D
    return dy.ModelSpec(model, dy.PhysicalParams(nu=0.0, kappa=0.0, gamma=0.0, mu=0.0, alpha=0.0, beta=0.0))


def transport_drift(grid, dt, steps=3):
    """Worst per-step relative change of ||u||^2 and ||w||^2 with every linear term off."""
    spec = transport_only(grid.dim)
    st = dy.random_state(grid, 11, kmax=grid.n / 4)
    e0 = np.array([sc.sobolev_seminorm(st.u, 0), sc.sobolev_seminorm(st.w, 0)]) ** 2
    worst = 0.0
    for _ in range(steps):
        st = dy.step(st, spec, dy.NO_CUTOFF, dy.StepperConfig(dt=dt))
        e1 = np.array([sc.sobolev_seminorm(st.u, 0), sc.sobolev_seminorm(st.w, 0)]) ** 2
        worst = max(worst, float(np.max(np.abs(e1 - e0) / e0)))
        e0 = e1
    return worst


def test_transport_only_drift_order():
    # Heun on a skew operator loses energy at O(dt^4) per step, better than the required dt^3
    g = sc.make_grid(2, 32)
    d1 = transport_drift(g, 0.01)
    d2 = transport_drift(g, 0.005)
    assert d1 / d2 >= 8.0 * 0.9


def test_transport_only_drift_small():
    assert transport_drift(sc.make_grid(2, 64), 1e-3) <= 1e-10


# ---------------------------------------------------------------------------
# manufactured solution


def manufactured_problem(grid):
    x, y, z, t = sp.symbols("x y z t", real=True)
    a, b, c = 0.8, 0.6, 0.7
    decay = sp.exp(-t)
    u = sp.Matrix([a * sp.sin(y), 0, b * sp.sin(x)]) * decay
    w = sp.Matrix([c * sp.cos(z), 0, 0]) * decay
    X = (x, y, z)

    def curl(v):
        return sp.Matrix(
            [
                sp.diff(v[2], y) - sp.diff(v[1], z),
                sp.diff(v[0], z) - sp.diff(v[2], x),
                sp.diff(v[1], x) - sp.diff(v[0], y),
            ]
        )

    def adv(v, f):
        return sp.Matrix([sum(v[i] * sp.diff(f[j], X[i]) for i in range(3)) for j in range(3)])

    nu, kap, gam, mu = 0.5, 0.5, 1.0, 1.0
    # every mode has |k| = 1, so any fractional power of -Laplacian acts as the identity
    for f in (u, w):
        lap = sp.Matrix([sum(sp.diff(f[j], X[i], 2) for i in range(3)) for j in range(3)])
        assert sp.simplify(lap + f) == sp.zeros(3, 1)
    divw = sum(sp.diff(w[i], X[i]) for i in range(3))
    fu = sp.diff(u, t) + adv(u, u) + (nu + kap) * u - 2 * kap * curl(w)
    fw = sp.diff(w, t) + adv(u, w) + 4 * kap * w + gam * w - 2 * kap * curl(u)
    fw = fw - mu * sp.Matrix([sp.diff(divw, X[i]) for i in range(3)])
    funcs = [sp.lambdify((x, y, z, t), list(e), "numpy") for e in (u, w, fu, fw)]

    def sample(F, tt):
        return sc.transform_forward(grid, np.stack([np.broadcast_to(np.asarray(v, float), grid.shape) for v in F(*grid.x, tt)])).coef

    def forcing(tt):
        return sample(funcs[2], tt), sample(funcs[3], tt)

    def exact(tt):
        return np.concatenate([sample(funcs[0], tt), sample(funcs[1], tt)])

    init = dy.State.from_stacked(0.0, grid, exact(0.0))
    return init, forcing, exact


@pytest.mark.parametrize("scheme", list(dy.Scheme))
def test_manufactured_solution_second_order(scheme):
    g = sc.make_grid(3, 16)
    init, forcing, exact = manufactured_problem(g)
    T = 0.5
    ref = exact(T)
    errs = []
    for dt in (0.05, 0.025, 0.0125):
        cfg = dy.StepperConfig(dt=dt, t_end=T, scheme=scheme, forcing=forcing)
        errs.append(np.linalg.norm(dy.simulate(init, FRAC, dy.NO_CUTOFF, cfg).final.stacked() - ref))
    slopes = [math.log2(errs[i] / errs[i + 1]) for i in range(2)]
    assert all(1.8 <= s <= 2.2 for s in slopes), slopes


def test_random_state_normalized(g3):
    st = dy.random_state(g3, 0, amplitude=0.3)
    assert sc.sobolev_seminorm(st.u, 0) == pytest.approx(0.3)
    assert sc.sobolev_seminorm(st.w, 0) == pytest.approx(0.3)
    again = dy.random_state(g3, 0, amplitude=0.3)
    assert np.array_equal(st.stacked(), again.stacked())


def test_taylor_green_2d(g2):
    st = dy.taylor_green(g2, 1.0)
    assert st.w.ncomp == 1 and st.u.divergence_free
