"""Flat ``key = value`` run configuration.

Blank lines and ``#`` comments are ignored.  Every key is validated against
the chosen model before any field is allocated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

from .dissipation import get_g
from .dynamics import GalerkinCutoff, Model, ModelSpec, PhysicalParams, Scheme, StepperConfig

DEFAULTS = {
    "model": None,
    "n": None,
    "dt": None,
    "t_end": "1.0",
    "alpha": "1.0",
    "beta": "1.0",
    "nu": "0.5",
    "kappa": "0.5",
    "gamma": "1.0",
    "mu": "1.0",
    "g": None,
    "cutoff": "none",
    "seed": "0",
    "probe_cadence": "1",
    "checkpoint_cadence": "0",
    "scheme": "strang",
    "cfl_safety": "0.5",
    "init": "taylor_green",
    "amplitude": "0.1",
    "s": "2.6",
    "sigma": "",
    "alpha_list": "",
    "beta_list": "",
}
REQUIRED = ("model", "n", "dt")
INITS = ("taylor_green", "random", "zero")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    spec: ModelSpec
    n: int
    stepper: StepperConfig
    cutoff: GalerkinCutoff
    seed: int
    probe_cadence: int
    checkpoint_cadence: int
    init: str
    amplitude: float
    s: float
    sigma: tuple[float, ...] = ()
    alpha_list: tuple[float, ...] = ()
    beta_list: tuple[float, ...] = ()
    raw: dict = field(default_factory=dict, compare=False)

    @property
    def dim(self) -> int:
        return self.spec.dim


def parse_text(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        key, value = (x.strip() for x in line.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def _num(raw: dict, key: str, kind=float, lo: float | None = None, strict: bool = False):
    text = raw[key]
    try:
        val = kind(text)
    except ValueError:
        raise ConfigError(f"key {key!r}: cannot parse {text!r} as {kind.__name__}") from None
    if kind is float and not math.isfinite(val):
        raise ConfigError(f"key {key!r}: must be finite")
    if lo is not None and (val <= lo if strict else val < lo):
        raise ConfigError(f"key {key!r}: must be {'>' if strict else '>='} {lo}, got {val}")
    return val


def _floats(raw: dict, key: str) -> tuple[float, ...]:
    text = raw[key].strip()
    if not text:
        return ()
    try:
        return tuple(float(x) for x in text.split(","))
    except ValueError:
        raise ConfigError(f"key {key!r}: expected comma-separated numbers, got {text!r}") from None


def build(values: dict[str, str], seed: int | None = None) -> RunConfig:
    missing = [k for k in REQUIRED if k not in values]
    if missing:
        raise ConfigError(f"missing required key(s): {', '.join(missing)}")
    raw = {k: v for k, v in DEFAULTS.items() if v is not None}
    raw.update(values)
    try:
        model = Model(raw["model"])
    except ValueError:
        raise ConfigError(f"key 'model': unknown model {raw['model']!r}; choose from {[m.value for m in Model]}") from None
    if model.logarithmic and "g" not in raw:
        raise ConfigError(f"key 'g' is required for model {model.value}")
    if not model.logarithmic and "g" in raw:
        raise ConfigError(f"key 'g' is only valid for logarithmic models, not {model.value}")
    g = None
    if "g" in raw:
        try:
            g = get_g(raw["g"])
        except KeyError as exc:
            raise ConfigError(f"key 'g': {exc.args[0]}") from None
    n = _num(raw, "n", int, 8)
    if n % 2:
        raise ConfigError(f"key 'n': must be even, got {n}")
    params = {k: _num(raw, k, float, 0.0) for k in ("nu", "kappa", "gamma", "mu", "alpha", "beta")}
    if model.logarithmic and params["alpha"] <= 0:
        raise ConfigError("key 'alpha': logarithmic models need alpha > 0")
    spec = ModelSpec(model, PhysicalParams(g=g, **params))
    try:
        scheme = Scheme(raw["scheme"])
    except ValueError:
        raise ConfigError(f"key 'scheme': unknown scheme {raw['scheme']!r}") from None
    cfl = _num(raw, "cfl_safety", float, 0.0, strict=True)
    if cfl > 1:
        raise ConfigError("key 'cfl_safety': must lie in (0, 1]")
    stepper = StepperConfig(
        dt=_num(raw, "dt", float, 0.0, strict=True), t_end=_num(raw, "t_end", float, 0.0), scheme=scheme, cfl_safety=cfl
    )
    cut = raw["cutoff"].strip().lower()
    cutoff = GalerkinCutoff(None) if cut == "none" else GalerkinCutoff(_num(raw, "cutoff", float, 0.0))
    if raw["init"] not in INITS:
        raise ConfigError(f"key 'init': choose from {INITS}, got {raw['init']!r}")
    return RunConfig(
        spec=spec,
        n=n,
        stepper=stepper,
        cutoff=cutoff,
        seed=_num(raw, "seed", int, 0) if seed is None else int(seed),
        probe_cadence=_num(raw, "probe_cadence", int, 1),
        checkpoint_cadence=_num(raw, "checkpoint_cadence", int, 0),
        init=raw["init"],
        amplitude=_num(raw, "amplitude", float, 0.0),
        s=_num(raw, "s", float),
        sigma=_floats(raw, "sigma"),
        alpha_list=_floats(raw, "alpha_list"),
        beta_list=_floats(raw, "beta_list"),
        raw=dict(raw),
    )


def load(path, seed: int | None = None) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return build(parse_text(text), seed)
