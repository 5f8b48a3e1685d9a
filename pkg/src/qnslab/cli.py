"""Command line driver: ``qnslab {stationary,evolve,decay,check} --config FILE``.

Exit codes: 0 success, 1 failed verdict or check, 2 usage or configuration
error, 3 solver abort. Every failure also leaves ``error.json`` in the output
directory.
"""
from __future__ import annotations

import argparse
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import artifacts as art
from . import checks
from . import evolution as ev
from . import semigroup as sg
from . import spectral as sp
from . import stationary as st
from .config import KINDS, RunConfig, load_config
from .errors import ConfigError, QNSError
from .model import Forcing, ModelParams, State, make_forcing
from .spectral import Grid, SpectralField

EXIT_OK, EXIT_VERDICT, EXIT_CONFIG, EXIT_ABORT = 0, 1, 2, 3
OUT_DIR_ENV = "QNSLAB_OUT_DIR"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qnslab", description=__doc__.splitlines()[0])
    parser.add_argument("kind", choices=KINDS)
    parser.add_argument("--config", required=True, help="path to the run configuration")
    parser.add_argument("--out-dir", default=None, help=f"output directory (else ${OUT_DIR_ENV}, else ./qnslab-out)")
    parser.add_argument("--seed", type=int, default=None, help="overrides [run] seed")
    parser.add_argument("--threads", type=int, default=None, help="FFT worker threads (overrides [run] threads)")
    return parser


# setup helpers


def grid_from(cfg: RunConfig) -> Grid:
    g = cfg["grid"]
    try:
        return Grid(g["dim"], g["n"], g["box_length"])
    except QNSError as err:
        raise ConfigError(f"[grid] {err}") from err


def params_from(cfg: RunConfig) -> ModelParams:
    p = cfg["params"]
    try:
        return ModelParams(
            mu=p["mu"], lam=p["lambda"], hbar=p["hbar"], gamma=p["gamma"], rho_bar=p["rho_bar"], rho_floor=p["rho_floor"]
        )
    except QNSError as err:
        raise ConfigError(f"[params] {err}") from err


def forcing_from(cfg: RunConfig, grid: Grid) -> Forcing:
    f = cfg["forcing"]
    if f["kind"] == "zero":
        return Forcing.zero(grid)
    table = None
    if f["kind"] == "custom-table":
        if not f["table"]:
            raise ConfigError("[forcing] custom-table needs a table path prefix")
        G, _ = art.read_snapshot(f["table"] + "_G")
        F, _ = art.read_snapshot(f["table"] + "_F")
        table = {"G": G, "F": F}
    center = tuple(f["center"]) if f["center"] else None
    if center is not None and len(center) != grid.dim:
        raise ConfigError(f"[forcing] center needs {grid.dim} coordinates")
    return make_forcing(
        grid,
        f["kind"],
        amplitude=f["amplitude"],
        width=f["width"],
        center=center,
        profile=f["profile"],
        decay_exponent=f["decay_exponent"],
        table=table,
    )


def _solve(cfg: RunConfig, forcing: Forcing, params: ModelParams, with_norms: bool = True) -> st.StationarySolution:
    s = cfg["stationary"]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return st.fixed_point(
            forcing,
            params,
            outer_tol=s["outer_tol"],
            max_outer=s["max_outer"],
            inner_tol=s["inner_tol"],
            threshold=s["threshold"],
            smallness=s["smallness"],
            compat_bound=s["compat_bound"],
            with_norms=with_norms,
        )


# runs


def run_stationary(cfg: RunConfig, out: Path, chash: str) -> int:
    grid, params = grid_from(cfg), params_from(cfg)
    forcing = forcing_from(cfg, grid)
    sol = _solve(cfg, forcing, params)
    art.write_snapshot(out / "sigma_star", sol.sigma_star.real, grid, chash, "sigma_star")
    art.write_snapshot(out / "u_star", sol.u_star.real, grid, chash, "u_star")
    art.write_ndjson(out / "iterations.ndjson", sol.history, chash)
    art.write_json(out / "hypothesis_report.json", sol.hypothesis, chash)
    amp = cfg["forcing"]["amplitude"] if cfg["forcing"]["kind"] != "zero" else 0.0
    summary = {
        "iterations": sol.iterations,
        "contraction_ratios": sol.contraction_ratios,
        "differences": sol.differences,
        "residual_continuity": sol.residual_continuity,
        "residual_momentum": sol.residual_momentum,
        "residual_over_amplitude": sol.residual / amp if amp else 0.0,
        "norm_report": sol.norm_report,
    }
    art.write_json(out / "stationary_summary.json", summary, chash)
    print(f"stationary: converged in {sol.iterations} iterations, residual {sol.residual:.3e}")
    return EXIT_OK


def _reference(cfg: RunConfig, grid: Grid, forcing: Forcing, params: ModelParams) -> State:
    snap = cfg["evolve"]["snapshot"].strip()
    if snap in ("", "zero"):
        return State.constant(grid, params)
    if snap == "solve":
        sol = _solve(cfg, forcing, params, with_norms=False)
        return sol.state()
    base = Path(snap)
    sigma, meta = art.read_snapshot(base / "sigma_star")
    u, _ = art.read_snapshot(base / "u_star")
    g = meta["grid"]
    if (g["dim"], g["n"], g["box_length"]) != (grid.dim, grid.n, grid.box_length):
        raise ConfigError(f"snapshot grid {g} does not match the configured grid")
    return st.stationary_fields(SpectralField.from_real(grid, sigma), SpectralField.from_real(grid, u), params)


def run_evolve(cfg: RunConfig, out: Path, chash: str) -> int:
    grid, params = grid_from(cfg), params_from(cfg)
    forcing = forcing_from(cfg, grid)
    e = cfg["evolve"]
    reference = _reference(cfg, grid, forcing, params)
    initial = ev.make_perturbation(reference, params, e["delta"], seed=cfg.seed)
    if e["form"] == "raw":
        stepping_ref = State.constant(grid, params)
    else:
        stepping_ref = reference
    tcfg = ev.TimeStepperConfig(
        dt=e["dt"], t_end=e["t_end"], scheme=e["scheme"], cfl_safety=e["cfl_safety"], output_stride=e["output_stride"]
    )
    header = art.csv_header(chash, ev.CSV_COLUMNS)
    try:
        record = ev.evolve(initial, stepping_ref, forcing, params, tcfg)
    except QNSError as err:
        record = getattr(err, "record", None)
        if record is not None:
            record.norm_series.to_csv(out / "trajectory.csv", header)
            art.write_json(out / "abort.json", record.summary(), chash)
        raise
    record.norm_series.to_csv(out / "trajectory.csv", header)
    art.write_json(out / "stability_summary.json", record.summary(), chash)
    print(f"evolve: {record.steps} steps, C_emp = {record.sup_ratio:.4g}")
    return EXIT_OK


def run_decay(cfg: RunConfig, out: Path, chash: str) -> int:
    params = params_from(cfg)
    d = cfg["decay"]
    if len(d["window"]) != 2:
        raise ConfigError("[decay] window needs two numbers")
    times = sg.default_times(d["t_max"], d["per_decade"])
    hook = None if d["hook"] == "none" else d["hook"]
    fits = []
    ok = True
    for s in d["s"]:
        res = sg.hs_negative_decay_run(s, params, times, eta=d["eta"], window=tuple(d["window"]), tol=d["tol"])
        res.series.to_csv(out / f"semigroup_s{s:g}.csv", art.csv_header(chash, list(res.series.columns)))
        summary = res.summary()
        summary["Hs_verdict"] = res.monotone_defect <= 1e-6
        ok &= res.fit_grad.verdict and res.fit_L2.verdict and summary["Hs_verdict"]
        fits.append(summary)
    lp = []
    profile = sg.p1_proxy_profile()
    for k in d["lp_orders"]:
        fit = sg.lp_lq_decay_check(profile, 1.0, 2.0, k, params, times, hook=hook)
        ok &= fit.verdict
        lp.append(dict(fit.as_dict(), p=1.0, q=2.0, k=k))
    art.write_json(out / "decay_fits.json", {"hs_runs": fits, "lp_checks": lp, "verdict": ok}, chash)
    for f in fits:
        print(f"decay: s={f['s']:g} slope_grad={f['slope_grad']:.4f} slope_L2={f['slope_L2']:.4f}")
    return EXIT_OK if ok else EXIT_VERDICT


def run_check(cfg: RunConfig, out: Path, chash: str) -> int:
    c = cfg["check"]
    checks.inject_fault("spectral.parseval" if c["inject_fault"] else None)
    try:
        report = checks.run_checks(c["suites"], cfg.seed, c["samples"])
    except ValueError as err:
        raise ConfigError(str(err)) from err
    finally:
        checks.inject_fault(None)
    art.write_json(out / "check_report.json", report, chash)
    for w in report["warnings"]:
        print(f"check: warning: {w}")
    print(f"check: {report['count'] - len(report['failed'])}/{report['count']} passed")
    for ident in report["failed"]:
        print(f"check: FAILED {ident}")
    return EXIT_OK if report["passed"] else EXIT_VERDICT


RUNS = {"stationary": run_stationary, "evolve": run_evolve, "decay": run_decay, "check": run_check}


def _write_error(out: Path | None, err: BaseException, code: int) -> None:
    body = {"error": type(err).__name__, "message": str(err), "exit_code": code}
    info = getattr(err, "info", None)
    if info:
        body["info"] = info
    print(f"qnslab: error: {err}", file=sys.stderr)
    if out is not None:
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / "error.json").write_text(art.dumps(body) + "\n")
        except OSError:
            pass


def main(argv=None) -> int:
    out = None
    try:
        args = build_parser().parse_args(argv)
        out = Path(args.out_dir or os.environ.get(OUT_DIR_ENV) or "qnslab-out")
        overrides = {}
        if args.seed is not None:
            overrides["run.seed"] = args.seed
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigError("--threads must be >= 1")
            overrides["run.threads"] = args.threads
        cfg = load_config(args.config, overrides, expect_kind=args.kind)
        out.mkdir(parents=True, exist_ok=True)
        stale = out / "error.json"
        if stale.exists():
            stale.unlink()
        chash = art.config_hash(cfg.resolved())
        sp.set_fft_workers(cfg.threads)
        with np.errstate(all="ignore"):
            return RUNS[args.kind](cfg, out, chash)
    except UsageError as err:
        print(build_parser().format_usage(), file=sys.stderr, end="")
        _write_error(out, err, EXIT_CONFIG)
        return EXIT_CONFIG
    except ConfigError as err:
        _write_error(out, err, EXIT_CONFIG)
        return EXIT_CONFIG
    except QNSError as err:
        _write_error(out, err, EXIT_ABORT)
        return EXIT_ABORT
    finally:
        sp.set_fft_workers(1)


if __name__ == "__main__":
    sys.exit(main())
