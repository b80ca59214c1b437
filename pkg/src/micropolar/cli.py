"""Command-line entry point: run, verify, sweep, spectra.

Exit codes: 0 success, 1 configuration or input error, 2 numerical abort
(CFL or non-finite values), 3 property failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import diagnostics as dg
from . import dynamics as dy
from . import lp_analysis as lp
from . import persistence
from . import spectral_core as sc
from . import verify

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_PROPERTY = 0, 1, 2, 3
SUMMARY_VERSION = 1

log = logging.getLogger("micropolar")

SUMMARY_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": ["summary_version", "command", "status", "model", "n", "dim", "steps", "t_final", "records", "properties", "config"],
    "properties": {
        "summary_version": {"const": SUMMARY_VERSION},
        "command": {"enum": ["run"]},
        "status": {"enum": ["ok", "aborted"]},
        "message": {"type": "string"},
        "model": {"type": "string"},
        "n": {"type": "integer", "minimum": 8},
        "dim": {"enum": [2, 3]},
        "steps": {"type": "integer", "minimum": 0},
        "t_final": {"type": "number"},
        "records": {"type": "integer", "minimum": 0},
        "properties": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "required": ["pass", "value"],
                "properties": {"pass": {"type": "boolean"}, "value": {"type": ["number", "null"]}},
            },
        },
        "config": {"type": "object", "additionalProperties": {"type": "string"}},
    },
}


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for r in rows:
            wr.writerow([_fmt(v) for v in r])


def _json_num(x: float):
    return None if x is None or not math.isfinite(x) else float(x)


# ---------------------------------------------------------------------------


def initial_state(rc: cfgmod.RunConfig) -> dy.State:
    grid = sc.make_grid(rc.dim, rc.n)
    if rc.init == "taylor_green":
        st = dy.taylor_green(grid, rc.amplitude)
    elif rc.init == "random":
        st = dy.random_state(grid, rc.seed, rc.amplitude, kmax=rc.n / 4)
    else:
        st = dy.zero_state(grid)
    return dy.truncate_state(st, rc.cutoff)


def cmd_run(args) -> int:
    try:
        rc = cfgmod.load(args.config, args.seed)
    except cfgmod.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    spec = rc.spec
    sigma = rc.sigma or dg.default_sigma_list(spec.params, rc.s)
    state0 = initial_state(rc)

    def probe(st: dy.State):
        return dg.ledger_terms(st, spec), dg.monitor_norms(st, sigma), _div_defect(st)

    def on_checkpoint(st: dy.State, step: int):
        persistence.write_checkpoint(out / f"checkpoint_{step:06d}.mpck", st, spec, rc.stepper, rc.cutoff)

    status, message = "ok", ""
    try:
        result = dy.simulate(
            state0,
            spec,
            rc.cutoff,
            rc.stepper,
            probe=probe,
            probe_cadence=rc.probe_cadence,
            checkpoint_cadence=rc.checkpoint_cadence,
            on_checkpoint=on_checkpoint,
        )
        records, final, steps = result.records, result.final, result.steps
    except dy.SimulationAborted as exc:
        status, message = "aborted", str(exc)
        records, final, steps = exc.records, exc.last_state, exc.steps
        log.error("numerical abort: %s", exc)
    persistence.write_checkpoint(out / "final.mpck", final, spec, rc.stepper, rc.cutoff)
    _write_run_outputs(out, rc, records, final, steps, status, message)
    if status != "ok":
        print(f"numerical abort: {message}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def _div_defect(st: dy.State) -> float:
    div = np.abs(np.einsum("i...,i...->...", st.grid.k, st.u.coef)).max()
    scale = np.abs(st.u.coef).max()
    return float(div / scale) if scale > 0 else 0.0


def _write_run_outputs(out: Path, rc, records, final, steps, status, message) -> None:
    ledgers = [r[0] for r in records]
    if len(ledgers) >= 3:
        ledgers = dg.energy_budget(ledgers)
    write_csv(out / "ledger.csv", dg.EnergyLedger.CSV_HEADER, [r.row() for r in ledgers])
    norms = [r[1] for r in records]
    header = norms[0].header() if norms else ["t"]
    write_csv(out / "norms.csv", header, [r.row() for r in norms])

    residuals = [abs(r.residual) for r in ledgers if not math.isnan(r.residual)]
    div = max((r[2] for r in records), default=0.0)
    props = {
        "divergence_free": {"pass": div <= 1e-11, "value": _json_num(div)},
        "energy_residual_max": {"pass": True, "value": _json_num(max(residuals)) if residuals else None},
        "finite": {"pass": status == "ok", "value": None},
    }
    if norms:
        series = dg.NormSeries(list(norms))
        rep = dg.check_bounded(series, 10.0)
        props["bounded_norms_10x"] = {"pass": rep.ok, "value": _json_num(max(rep.max_growth.values(), default=0.0))}
        t = series.times
        props["int_grad_u_inf"] = {"pass": True, "value": _json_num(dg.time_integral(t, series.column("grad_u_inf")))}
    summary = {
        "summary_version": SUMMARY_VERSION,
        "command": "run",
        "status": status,
        "message": message,
        "model": rc.spec.model.value,
        "n": rc.n,
        "dim": rc.dim,
        "steps": int(steps),
        "t_final": float(final.t),
        "records": len(records),
        "properties": props,
        "config": {k: str(v) for k, v in sorted(rc.raw.items())},
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")


def cmd_verify(args) -> int:
    fn = verify.SUITES[args.suite]
    res = fn(args.seed if args.seed is not None else 0)
    for p in res.properties:
        print(p.line())
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for name, (header, rows) in res.tables.items():
            write_csv(out / name, header, rows)
    print(f"suite {res.suite}: {'PASS' if res.passed else 'FAIL'}")
    return EXIT_OK if res.passed else EXIT_PROPERTY


def cmd_sweep(args) -> int:
    try:
        rc = cfgmod.load(args.config, args.seed)
    except cfgmod.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if not rc.alpha_list or not rc.beta_list:
        print("config error: sweep needs alpha_list and beta_list", file=sys.stderr)
        return EXIT_CONFIG
    if rc.spec.model not in (dy.Model.FRACTIONAL_3D, dy.Model.FRACTIONAL_2D):
        print("config error: key 'model': sweeps use fractional_3d or fractional_2d", file=sys.stderr)
        return EXIT_CONFIG
    p = rc.spec.params
    base = dg.SweepBase(
        dim=rc.dim,
        n=rc.n,
        amplitude=rc.amplitude,
        t_end=rc.stepper.t_end,
        dt=rc.stepper.dt,
        s=rc.s,
        nu=p.nu,
        kappa=p.kappa,
        gamma=p.gamma,
        mu=p.mu,
        probe_cadence=rc.probe_cadence,
        zero_data=rc.init == "zero",
    )
    cells = dg.threshold_sweep(rc.alpha_list, rc.beta_list, base)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "sweep.csv", dg.SweepCell.CSV_HEADER, [c.row() for c in cells])
    return EXIT_OK


def radial_spectrum(state: dy.State) -> list[tuple[int, float, float]]:
    """(shell, E_u, E_w) with shell = round(|k|) and E = sum of |coef|^2 in the shell."""
    grid = state.grid
    shell = np.rint(grid.kmag).astype(int).ravel()
    eu = np.sum(np.abs(state.u.coef) ** 2, axis=0).ravel()
    ew = np.sum(np.abs(state.w.coef) ** 2, axis=0).ravel()
    nbins = int(shell.max()) + 1
    su = np.bincount(shell, weights=eu, minlength=nbins)
    sw = np.bincount(shell, weights=ew, minlength=nbins)
    return [(i, float(su[i]), float(sw[i])) for i in range(nbins)]


def cmd_spectra(args) -> int:
    try:
        ck = persistence.read_checkpoint(args.checkpoint)
    except persistence.FormatError as exc:
        print(f"corrupt checkpoint: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot read checkpoint: {exc.strerror}", file=sys.stderr)
        return EXIT_CONFIG
    st = ck.state
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    part = lp.build_partition(st.grid)
    eu = lp.block_energies(st.u)
    ew = lp.block_energies(st.w)
    rows = [(j, a, b, j > part.j_max) for j, a, b in zip(range(-1, part.j_top + 1), eu, ew)]
    write_csv(out / "dyadic_spectrum.csv", ("j", "energy_u", "energy_w", "truncated"), rows)
    write_csv(out / "radial_spectrum.csv", ("shell", "energy_u", "energy_w"), radial_spectrum(st))
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="micropolar", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--seed", type=int, default=None, help="RNG seed (overrides the config)")
    common.add_argument("--threads", type=int, default=1, help="FFT worker threads (1 keeps outputs byte-identical)")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", parents=[common], help="simulate one configuration")
    r.add_argument("--config", required=True)
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("verify", parents=[common], help="run a property suite")
    v.add_argument("--suite", required=True, choices=sorted(verify.SUITES))
    v.set_defaults(func=cmd_verify, out=None)

    s = sub.add_parser("sweep", parents=[common], help="(alpha, beta) growth table")
    s.add_argument("--config", required=True)
    s.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("spectra", parents=[common], help="dyadic and radial spectra of a checkpoint")
    sp.add_argument("checkpoint")
    sp.set_defaults(func=cmd_spectra)
    return p


def _setup_logging() -> None:
    level = os.environ.get("MPS_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("--threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    sc.set_fft_workers(args.threads)
    try:
        return args.func(args)
    finally:
        sc.set_fft_workers(1)


if __name__ == "__main__":
    sys.exit(main())
