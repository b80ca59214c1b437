"""Fractional and logarithmically weakened dissipation symbols.

The weakened operator L has symbol |k|^alpha / g(|k|) for a non-decreasing
g >= 1; the equations use L^2 with symbol |k|^(2 alpha) / g(|k|)^2.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate

from .spectral_core import RadialSymbol, power_symbol

E = math.e


@dataclass(frozen=True)
class GChoice:
    label: str
    eval: Callable[[np.ndarray], np.ndarray]
    description: str = ""

    def __call__(self, tau):
        return self.eval(np.asarray(tau, dtype=float))


def _ln1(t):
    return np.log(E + t)


def _ln2(t):
    return np.log(E + np.log(E + t))


def _ln3(t):
    return np.log(E + np.log(E + np.log(E + t)))


G_UNIT = GChoice("unit", lambda t: np.ones_like(t), "g = 1 (collapses L to Lambda^alpha)")
G1 = GChoice("g1", lambda t: _ln1(t) ** 0.25, "[ln(e+t)]^(1/4)")
G2 = GChoice("g2", lambda t: _ln1(t) ** 0.25 * _ln2(t) ** 0.5, "[ln(e+t)]^(1/4) [ln(e+ln(e+t))]^(1/2)")
G3 = GChoice("g3", lambda t: (_ln1(t) * _ln2(t)) ** 0.25, "[ln(e+t) ln(e+ln(e+t))]^(1/4)")
G2_TRIPLE = GChoice(
    "g2_triple",
    lambda t: _ln1(t) ** 0.25 * (_ln2(t) * _ln3(t)) ** 0.5,
    "[ln(e+t)]^(1/4) [ln(e+ln(e+t)) ln(e+ln(e+ln(e+t)))]^(1/2)",
)
G3_TRIPLE = GChoice(
    "g3_triple",
    lambda t: (_ln1(t) * _ln2(t) * _ln3(t)) ** 0.25,
    "[ln(e+t) ln(e+ln(e+t)) ln(e+ln(e+ln(e+t)))]^(1/4)",
)
# control: grows too fast for the log-sqrt condition
G_BAD = GChoice("g_bad", lambda t: _ln1(t), "ln(e+t)")

_REGISTRY: dict[str, GChoice] = {}


def register_g(choice: GChoice) -> GChoice:
    """Plugin hook: make a user GChoice addressable by label (config key ``g``)."""
    if choice.label in _REGISTRY and _REGISTRY[choice.label] is not choice:
        raise ValueError(f"g label {choice.label!r} already registered")
    _REGISTRY[choice.label] = choice
    return choice


for _g in (G1, G2, G3, G2_TRIPLE, G3_TRIPLE, G_BAD, G_UNIT):
    register_g(_g)


def g_registry() -> list[GChoice]:
    return list(_REGISTRY.values())


def get_g(label: str) -> GChoice:
    try:
        return _REGISTRY[label]
    except KeyError:
        raise KeyError(f"unknown g {label!r}; known: {sorted(_REGISTRY)}") from None


def check_g_admissible(g: GChoice, tau_max: float = 1e12, samples: int = 4001) -> bool:
    """Monotone and >= 1 on a dense log-spaced sample of [0, tau_max]."""
    tau = np.concatenate([[0.0], np.logspace(-6, math.log10(tau_max), samples)])
    vals = g(tau)
    return bool(np.all(vals >= 1.0) and np.all(np.diff(vals) >= 0.0))


def l_operator_symbol(alpha: float, g: GChoice) -> RadialSymbol:
    if alpha <= 0:
        raise ValueError("alpha must be positive")

    def _eval(r):
        return np.where(r > 0, np.abs(r) ** alpha / g(r), 0.0)

    return RadialSymbol(_eval, f"|k|^{alpha:g}/{g.label}")


def l_squared_symbol(alpha: float, g: GChoice) -> RadialSymbol:
    if alpha <= 0:
        raise ValueError("alpha must be positive")

    def _eval(r):
        return np.where(r > 0, np.abs(r) ** (2 * alpha) / g(r) ** 2, 0.0)

    return RadialSymbol(_eval, f"|k|^{2 * alpha:g}/{g.label}^2")


class DissipationKind(enum.Enum):
    NONE = "none"
    FRACTIONAL = "fractional"
    LOGARITHMIC = "logarithmic"


@dataclass(frozen=True)
class DissipationSpec:
    """Which multiplier damps a field: |k|^(2 rho), |k|^(2 alpha)/g^2, or nothing."""

    kind: DissipationKind
    exponent: float = 0.0
    g: GChoice | None = None

    @classmethod
    def fractional(cls, rho: float) -> "DissipationSpec":
        if rho < 0:
            raise ValueError("rho must be >= 0")
        return cls(DissipationKind.FRACTIONAL, float(rho))

    @classmethod
    def logarithmic(cls, alpha: float, g: GChoice) -> "DissipationSpec":
        return cls(DissipationKind.LOGARITHMIC, float(alpha), g)

    @classmethod
    def none(cls) -> "DissipationSpec":
        return cls(DissipationKind.NONE)

    def symbol(self) -> RadialSymbol:
        if self.kind is DissipationKind.NONE or (self.kind is DissipationKind.FRACTIONAL and self.exponent == 0):
            # zero power means no dissipation at all
            return RadialSymbol(lambda r: np.zeros_like(r), "0")
        if self.kind is DissipationKind.FRACTIONAL:
            return power_symbol(2 * self.exponent)
        return l_squared_symbol(self.exponent, self.g)

    def weights_k2(self, k2: np.ndarray) -> np.ndarray:
        """Symbol sampled from exact integer |k|^2 (exact for integer powers)."""
        if self.kind is DissipationKind.NONE or (self.kind is DissipationKind.FRACTIONAL and self.exponent == 0):
            return np.zeros_like(k2, dtype=float)
        if self.kind is DissipationKind.FRACTIONAL:
            return np.asarray(k2, dtype=float) ** self.exponent
        return self.symbol()(np.sqrt(k2))


class GCondition(enum.Enum):
    LOG_SQRT = "log_sqrt"  # int_e^inf dt / (t sqrt(ln t) g^2(t)) = inf
    QUARTIC_LOG = "quartic_log"  # int_e^inf dt / (t g^4(t)) = inf


def g_condition_integrand_log(g: GChoice, condition: GCondition) -> Callable[[float], float]:
    """Integrand after the substitution s = ln t (so dt / t = ds)."""
    if condition is GCondition.LOG_SQRT:
        return lambda s: 1.0 / (math.sqrt(s) * float(g(math.exp(s))) ** 2)
    return lambda s: 1.0 / float(g(math.exp(s))) ** 4


def g_condition_partial_integral(g: GChoice, condition: GCondition, T: float, rtol: float = 1e-10) -> float:
    """int_e^T of the condition integrand, by adaptive quadrature in s = ln t."""
    if T < E:
        raise ValueError(f"T must be >= e, got {T}")
    upper = math.log(T)
    if upper == 1.0:
        return 0.0
    h = g_condition_integrand_log(g, condition)
    # split on a geometric mesh in s so each panel is well resolved
    edges = [1.0]
    while edges[-1] * 2 < upper:
        edges.append(edges[-1] * 2)
    edges.append(upper)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        val, _ = integrate.quad(h, a, b, epsabs=0.0, epsrel=rtol, limit=200)
        total += val
    return total


def weakness_threshold(alpha: float, g: GChoice, sigma: float, r_max: float = 1e12, samples: int = 4000) -> float:
    """Smallest sampled r1 beyond which l_squared(r) >= r^(2 alpha - sigma) on the sample."""
    r = np.logspace(0, math.log10(r_max), samples)
    ok = l_squared_symbol(alpha, g)(r) >= r ** (2 * alpha - sigma)
    bad = np.nonzero(~ok)[0]
    if bad.size == 0:
        return float(r[0])
    if bad[-1] == r.size - 1:
        return math.inf
    return float(r[bad[-1] + 1])
