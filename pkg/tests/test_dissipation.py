import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from micropolar import dissipation as ds
from micropolar import spectral_core as sc

# mpmath oracles
G1_AT_E2_MINUS_E = 1.18920711500272106671749997056  # ln(e^2)^(1/4) = 2^(1/4)
L_SYMBOL_R1_A74_G1 = 0.93414045672624215600955121663  # ln(e+1)^(-1/4)


def test_registry_contents():
    labels = {g.label for g in ds.g_registry()}
    assert {"g1", "g2", "g3", "g_bad"} <= labels
    assert ds.get_g("g1") is ds.G1
    with pytest.raises(KeyError):
        ds.get_g("nope")


def test_g1_values():
    assert ds.G1(0.0) == 1.0
    assert ds.G1(math.e**2 - math.e) == pytest.approx(G1_AT_E2_MINUS_E, rel=1e-15)


@pytest.mark.parametrize("g", ds.g_registry(), ids=lambda g: g.label)
def test_registry_admissible(g):
    assert ds.check_g_admissible(g, tau_max=1e12)


@settings(max_examples=50, deadline=None)
@given(a=st.floats(0, 1e12), b=st.floats(0, 1e12))
def test_g1_monotone(a, b):
    lo, hi = sorted((a, b))
    assert ds.G1(lo) <= ds.G1(hi)


def test_g1_monotone_bulk(rng):
    t = np.sort(rng.uniform(0, 1e9, size=(10_000, 2)), axis=1)
    assert np.all(ds.G1(t[:, 0]) <= ds.G1(t[:, 1]))


def test_plugin_hook():
    g = ds.GChoice("test_sqrt_log", lambda t: np.sqrt(np.log(np.e + t)))
    assert ds.register_g(g) is g
    assert ds.get_g("test_sqrt_log") is g
    with pytest.raises(ValueError):
        ds.register_g(ds.GChoice("test_sqrt_log", lambda t: t))


def test_l_symbol_oracle():
    val = float(ds.l_operator_symbol(1.75, ds.G1)(np.array(1.0)))
    assert val == pytest.approx(L_SYMBOL_R1_A74_G1, rel=1e-14)


def test_l_symbol_unit_g_is_lambda_power():
    r = np.linspace(0, 50, 501)
    assert np.array_equal(ds.l_operator_symbol(1.3, ds.G_UNIT)(r), sc.power_symbol(1.3)(r))


def test_l_squared_is_square():
    r = np.logspace(-3, 6, 400)
    for g in ds.g_registry():
        a = ds.l_operator_symbol(1.25, g)(r) ** 2
        b = ds.l_squared_symbol(1.25, g)(r)
        assert np.max(np.abs(a - b) / b) <= 1e-15 * 4


def test_symbols_vanish_at_origin():
    assert ds.l_operator_symbol(1.0, ds.G2)(np.array(0.0)) == 0.0
    with pytest.raises(ValueError):
        ds.l_operator_symbol(0.0, ds.G1)


def test_dissipation_spec_conventions():
    k2 = np.arange(10.0)
    assert not np.any(ds.DissipationSpec.fractional(0.0).weights_k2(k2))
    assert not np.any(ds.DissipationSpec.none().weights_k2(k2))
    assert np.array_equal(ds.DissipationSpec.fractional(1.0).weights_k2(k2), k2)
    log_unit = ds.DissipationSpec.logarithmic(1.25, ds.G_UNIT).weights_k2(k2)
    assert np.allclose(log_unit, ds.DissipationSpec.fractional(1.25).weights_k2(k2), rtol=1e-14, atol=0)


def test_unit_quartic_closed_form():
    for T in (math.e, 10.0, 1e3, 1e9):
        got = ds.g_condition_partial_integral(ds.G_UNIT, ds.GCondition.QUARTIC_LOG, T)
        assert got == pytest.approx(math.log(T) - 1, abs=1e-12)


def test_partial_integral_rejects_small_t():
    with pytest.raises(ValueError):
        ds.g_condition_partial_integral(ds.G1, ds.GCondition.LOG_SQRT, 2.0)


def test_g1_log_sqrt_asymptotic_slope():
    # integrand ~ 1 / (tau ln tau): increments follow ln ln T with slope 1
    for slope in ds_slopes():
        assert abs(slope - 1.0) <= 0.05


def ds_slopes():
    Ts = (1e3, 1e6, 1e9)
    vals = [ds.g_condition_partial_integral(ds.G1, ds.GCondition.LOG_SQRT, T) for T in Ts]
    x = [math.log(math.log(T)) for T in Ts]
    return [(vals[i + 1] - vals[i]) / (x[i + 1] - x[i]) for i in range(2)]


def test_g_bad_converges():
    vals = [ds.g_condition_partial_integral(ds.G_BAD, ds.GCondition.LOG_SQRT, T) for T in (1e3, 1e6, 1e9, 1e12)]
    assert all(a < b for a, b in zip(vals, vals[1:]))
    assert vals[2] - vals[1] <= 1e-2
    # comparison oracle: integrand <= s^(-5/2) after s = ln tau, so the tail beyond ln T is <= (2/3) (ln T)^(-3/2)
    assert vals[3] - vals[2] <= (2 / 3) * math.log(1e9) ** -1.5


def test_quadrature_accuracy_against_closed_form():
    # for g = 1 the log-sqrt integral is 2 (sqrt(ln T) - 1)
    for T in (1e2, 1e8):
        got = ds.g_condition_partial_integral(ds.G_UNIT, ds.GCondition.LOG_SQRT, T)
        assert got == pytest.approx(2 * (math.sqrt(math.log(T)) - 1), rel=1e-8)


@pytest.mark.parametrize("g", [ds.G1, ds.G2, ds.G3, ds.G2_TRIPLE, ds.G3_TRIPLE, ds.G_BAD], ids=lambda g: g.label)
def test_log_weaker_than_fractional(g):
    r = np.logspace(0, 12, 2000)
    assert np.all(ds.l_squared_symbol(1.25, g)(r) <= r**2.5)
    thr = ds.weakness_threshold(1.25, g, 0.5)
    assert math.isfinite(thr)
    big = r[r >= thr]
    assert np.all(ds.l_squared_symbol(1.25, g)(big) >= big ** (2.5 - 0.5))
