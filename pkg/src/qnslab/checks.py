"""Registry of quick invariant checks, grouped by module, for the ``check`` run."""
from __future__ import annotations

import math
import warnings
import zlib
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg

from . import analysis as an
from . import evolution as ev
from . import oracle
from . import semigroup as sg
from . import spectral as sp
from . import stationary as st
from .model import (
    Forcing,
    ModelParams,
    State,
    bohm_force,
    compute_Q,
    linear_momentum_part,
    make_forcing,
    momentum_rhs,
)
from .spectral import Grid, SpectralField

SUITES = ("spectral", "model", "stationary", "evolution", "semigroup", "analysis", "oracle")


@dataclass(frozen=True)
class Check:
    ident: str
    suite: str
    func: Callable[[np.random.Generator, int], tuple[bool, dict]]


REGISTRY: list[Check] = []
# Set by the fault hook; names a check whose verdict gets flipped.
_FAULT: dict[str, str | None] = {"target": None}


def register(suite: str):
    def wrap(func):
        REGISTRY.append(Check(f"{suite}.{func.__name__}", suite, func))
        return func

    return wrap


def inject_fault(ident: str | None = "spectral.parseval") -> None:
    """Force the named check to fail (``None`` clears it). Used to test the harness."""
    _FAULT["target"] = ident


def _random_field(grid: Grid, rng: np.random.Generator, rank: int = 0, modes: int = 3) -> SpectralField:
    freq = np.abs(np.stack(np.meshgrid(*[grid.integer_frequencies] * grid.dim, indexing="ij")))
    low = np.all(freq <= modes, axis=0)
    shape = (grid.dim,) * rank + grid.shape
    vals = grid.to_real((rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * low)
    return SpectralField.from_real(grid, vals / max(np.max(np.abs(vals)), 1e-300), dealias=True)


def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(abs(b), 1e-300)


# spectral


@register("spectral")
def parseval(rng, samples):
    g = Grid(2, 32, 7.0)
    worst = 0.0
    for _ in range(samples):
        v = rng.standard_normal(g.shape)
        worst = max(worst, _rel(sp.l2_norm(SpectralField.from_real(g, v)), sp.real_l2_norm(g, v)))
    return worst <= 1e-12, {"max_rel_diff": worst}


@register("spectral")
def leray_split(rng, samples):
    g = Grid(3, 16, 2 * math.pi)
    v = _random_field(g, rng, 1)
    sol, pot = sp.leray_decompose(v)
    recon = sp.l2_norm(sol + pot - v)
    div = sp.l2_norm(sp.divergence(sol))
    rot = sp.l2_norm(sp.curl(pot))
    ok = max(recon, div, rot) <= 1e-12 * sp.l2_norm(v)
    return ok, {"reconstruction": recon, "div_solenoidal": div, "curl_potential": rot}


@register("spectral")
def real_symmetry(rng, samples):
    g = Grid(2, 16, 3.0)
    f = SpectralField.from_real(g, rng.standard_normal(g.shape))
    d = f.conjugate_symmetry_defect()
    return d <= 1e-12, {"defect": d}


# model


@register("model")
def bohm_paths(rng, samples):
    g = Grid(2, 64, 2 * math.pi)
    p = ModelParams()
    rho = SpectralField.from_real(g, 1 + 0.1 * _random_field(g, rng).real, dealias=True)
    a, b = bohm_force(rho, p, "expanded"), bohm_force(rho, p, "sqrt")
    d = sp.l2_norm(a - b) / sp.l2_norm(a)
    return d <= 1e-8, {"rel_diff": d}


@register("model")
def q_identity(rng, samples):
    g = Grid(2, 32, 2 * math.pi)
    p = ModelParams(mu=1.0, lam=0.5, hbar=0.7)
    rho_s = SpectralField.from_real(g, 1 + 0.05 * _random_field(g, rng).real, dealias=True)
    m_s = 0.05 * _random_field(g, rng, 1)
    vr = 0.02 * _random_field(g, rng)
    M = 0.02 * _random_field(g, rng, 1)
    forcing = Forcing(0.01 * _random_field(g, rng), 0.01 * _random_field(g, rng, 1))
    Q = compute_Q(vr, M, rho_s, m_s, forcing, p)
    full = momentum_rhs(rho_s + vr, m_s + M, forcing.F, p)
    star = momentum_rhs(rho_s, m_s, forcing.F, p)
    d = sp.l2_norm(full - star - linear_momentum_part(vr, M, p) - Q) / sp.l2_norm(full - star)
    return d <= 1e-10, {"rel_defect": d}


@register("model")
def forcing_means(rng, samples):
    g = Grid(2, 32, 20.0)
    worst = 0.0
    for kind in ("gaussian-bump", "dipole-divergence"):
        f = make_forcing(g, kind, amplitude=1e-3)
        worst = max(worst, abs(f.G.mean()), float(np.max(np.abs(f.F.mean()))))
    return worst <= 1e-15, {"max_abs_mean": worst}


# stationary


@register("stationary")
def manufactured_solve(rng, samples):
    g = Grid(1, 64, 2 * math.pi)
    p = ModelParams()
    sigma = 0.02 * _random_field(g, rng)
    u = 0.01 * _random_field(g, rng, 1)
    sigma.hat[g.zero_mode] = 0
    u.hat[(slice(None),) + g.zero_mode] = 0
    f = st.manufactured_forcing(sigma, u, p)
    s2, u2 = st.solve_linearized(sigma, u, f, p)
    err = (st.h2_norm(s2 - sigma) + st.h2_norm(u2 - u)) / (st.h2_norm(sigma) + st.h2_norm(u))
    return err <= 1e-8, {"rel_H2_error": err}


@register("stationary")
def contraction(rng, samples):
    g = Grid(2, 32, 20.0)
    p = ModelParams()
    f = make_forcing(g, "gaussian-bump", amplitude=1e-4)
    sol = st.fixed_point(f, p, smallness="ignore", with_norms=False)
    ratios = sol.contraction_ratios
    ok = all(r < 1 for r in ratios) and sol.residual <= 1e-7 * 1e-4
    return ok, {"iterations": sol.iterations, "max_ratio": max(ratios) if ratios else 0.0, "residual": sol.residual}


# evolution


@register("evolution")
def mass_conservation(rng, samples):
    g = Grid(2, 16, 2 * math.pi)
    p = ModelParams()
    ref = State.constant(g, p)
    v = sp.leray_decompose(0.01 * _random_field(g, rng, 1))[0]
    init = State.from_primitive(ref.rho, v)
    out = ev.run_steps(init, ref, Forcing.zero(g), p, 0.05, 20)
    mass0, mass1 = init.rho.mean(), out.rho.mean()
    d = _rel(mass1, mass0)
    return d <= 1e-12, {"rel_mass_change": d}


@register("evolution")
def temporal_order(rng, samples):
    orders = linear_order_study("imex-rk2")
    return min(orders) >= 1.8, {"orders": orders}


# semigroup


@register("semigroup")
def small_k_dispersion(rng, samples):
    p = ModelParams(mu=1.0, lam=0.0, hbar=1.0)
    k = 1e-3
    lp, lm = sg.dispersion(k, p)
    expect = 1j * k - p.nu * k**2 / 2
    d = max(abs(complex(lp) - expect), abs(complex(lm) - np.conj(expect)))
    if abs(complex(lm) - expect) < abs(complex(lp) - expect):
        d = max(abs(complex(lm) - expect), abs(complex(lp) - np.conj(expect)))
    return d <= 1e-6, {"abs_diff": d}


@register("semigroup")
def semigroup_property(rng, samples):
    p = ModelParams()
    k = rng.uniform(0.05, 5.0, size=8)
    sys = sg.ModeSystem(k, p)
    u0 = sg.ModeState(rng.standard_normal(8), rng.standard_normal(8), rng.standard_normal(8))
    a = sys.propagate(sys.propagate(u0, 0.7), 1.3)
    b = sys.propagate(u0, 2.0)
    d = float(np.max(np.abs(a.as_vector() - b.as_vector())))
    return d <= 1e-12, {"max_abs_diff": d}


@register("semigroup")
def hs_monotone(rng, samples):
    p = ModelParams()
    profile = sg.borderline_profile(0.5)
    run = sg.propagate_profile(profile, p, sg.default_times(1000.0, 5), s=0.5)
    d = sg.monotone_defect(run.series.column("Hs_energy"))
    return d <= 1e-6, {"monotone_defect": d}


# analysis


@register("analysis")
def energy_equivalence(rng, samples):
    g = Grid(2, 16, 2 * math.pi)
    p = ModelParams()
    bad = 0
    for _ in range(samples):
        vr = 0.1 * _random_field(g, rng)
        om = 0.1 * _random_field(g, rng, 1)
        lo, N, hi = an.equivalence_bounds(vr, om, p)
        bad += not (lo <= N <= hi)
    return bad == 0, {"violations": bad, "samples": samples}


@register("analysis")
def conv_lattice(rng, samples):
    fails = 0
    for r1, r2, t in conv_lattice_points():
        fails += not an.conv_ineq_probe(r1, r2, t)["holds"]
    return fails == 0, {"violations": fails}


# oracle


@register("oracle")
def expm_reference(rng, samples):
    worst = 0.0
    for _ in range(samples):
        A = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
        t = float(rng.uniform(0, 2))
        worst = max(worst, float(np.max(np.abs(oracle.expm_2x2(A, t) - scipy.linalg.expm(A * t)))))
    return worst <= 1e-10, {"max_abs_diff": worst}


@register("oracle")
def dense_vs_spectral(rng, samples):
    err = dense_spectral_errors((16,))[0]
    return err <= 5e-2, {"rel_L2_diff": err}


# shared studies (also used by the tests)


def conv_lattice_points() -> list[tuple[float, float, float]]:
    """20 (r1, r2, t) points with r1 > 1 and r1 >= r2 >= 0."""
    pts = []
    for r1 in (1.5, 2.0, 3.0, 5.0):
        for r2, t in ((0.0, 0.5), (0.5, 2.0), (1.0, 10.0), (1.5, 100.0), (r1, 1000.0)):
            pts.append((r1, min(r2, r1), t))
    return pts


def oracle_fields(grid: Grid):
    x = grid.x[0]
    G = 1e-2 * np.cos(x)
    F = 1e-2 * np.stack([np.sin(x)])
    sigma_t = 0.05 * np.cos(x)
    u_t = 0.05 * np.stack([np.sin(x + 0.3)])
    return G, F, sigma_t, u_t


def dense_spectral_errors(sizes=(16, 32, 64), fine: int = 128) -> list[float]:
    """Relative nodal L2 gap between the dense FD oracle and a fine spectral solve (1D, L = 2 pi)."""
    p = ModelParams()
    L = 2 * math.pi
    gf = Grid(1, fine, L)
    G, F, sig_t, u_t = oracle_fields(gf)
    forcing = Forcing(SpectralField.from_real(gf, G), SpectralField.from_real(gf, F))
    s, u = st.solve_linearized(SpectralField.from_real(gf, sig_t), SpectralField.from_real(gf, u_t), forcing, p)
    errs = []
    for n in sizes:
        g = Grid(1, n, L)
        G, F, sig_t, u_t = oracle_fields(g)
        so, uo = oracle.dense_stationary_solve(G, F, p, L, sig_t, u_t)
        step = fine // n
        ref = np.concatenate([s.real[::step], u.real[0][::step]])
        got = np.concatenate([so, uo[0]])
        errs.append(float(np.linalg.norm(got - ref) / np.linalg.norm(ref)))
    return errs


def linear_order_study(scheme: str, steps=(20, 40, 80, 160), t_end: float = 1.0) -> list[float]:
    """Observed orders of the stepper with the explicit part switched off, against exact exponentials."""
    p = ModelParams()
    g = Grid(1, 16, 2 * math.pi)
    ref = State.constant(g, p)
    x = g.x[0]
    r0 = SpectralField.from_real(g, 1e-3 * np.cos(x) + 2e-4 * np.sin(2 * x))
    m0 = SpectralField.from_real(g, np.stack([1e-3 * np.sin(x)]))
    init = State(ref.rho + r0, m0)
    exact_r = np.zeros_like(r0.hat)
    exact_m = np.zeros_like(m0.hat)
    for i, kk in enumerate(g.k[0]):
        kk = float(kk)
        A = [[0, -1j * kk], [-1j * kk * (p.sound_speed_sq + p.hbar**2 * kk**2 / 4), -p.nu / p.rho_bar * kk**2]]
        v = oracle.expm_2x2(A, t_end) @ np.array([r0.hat[i], m0.hat[0, i]])
        exact_r[i], exact_m[0, i] = v
    mask = g.dealias_mask
    zero = lambda r, m, t: (np.zeros_like(r), np.zeros_like(m))
    errs = []
    for n in steps:
        out = ev.run_steps(init, ref, Forcing.zero(g), p, t_end / n, n, scheme, explicit=zero)
        diff = np.concatenate([(out.rho - ref.rho).hat - exact_r * mask, out.m.hat[0] - exact_m[0] * mask])
        errs.append(float(np.linalg.norm(diff)))
    e = np.asarray(errs)
    return [float(v) for v in np.log2(e[:-1] / e[1:])]


def duhamel_order_study(scheme: str, steps=(20, 40, 80), t_end: float = 2.0, omega: float = 0.7) -> list[float]:
    """Observed orders with a known time-dependent momentum source on one mode, against Duhamel quadrature."""
    p = ModelParams()
    g = Grid(1, 16, 2 * math.pi)
    ref = State.constant(g, p)
    amp = 1e-3 * g.npoints / 2

    def explicit(r, m, t):
        out = np.zeros_like(m)
        # real source 1e-3 cos(omega t) cos(x) lives on modes +1 and -1
        out[0, 1] = out[0, -1] = amp * math.cos(omega * t)
        return np.zeros_like(r), out

    system = sg.ModeSystem(1.0, p)
    taus = np.linspace(0, t_end, 2001)
    qs = amp * np.cos(omega * taus)
    exact = sg.duhamel_step(system, sg.ModeState(0.0, 0.0, 0.0), taus, qs, np.zeros_like(qs), t_end, rule="simpson")
    errs = []
    for n in steps:
        init = State(ref.rho.copy(), ref.m.copy())
        out = ev.run_steps(init, ref, Forcing.zero(g), p, t_end / n, n, scheme, explicit)
        errs.append(abs((out.rho - ref.rho).hat[1] - exact.rho) + abs(out.m.hat[0, 1] - exact.m_par))
    e = np.asarray(errs)
    return [float(v) for v in np.log2(e[:-1] / e[1:])]


def run_checks(suites=("all",), seed: int = 0, samples: int = 20) -> dict:
    """Run the selected suites; each check gets its own generator derived from ``seed``."""
    chosen = SUITES if "all" in suites else tuple(suites)
    unknown = [s for s in chosen if s not in SUITES]
    if unknown:
        raise ValueError(f"unknown suites {unknown}; available {SUITES}")
    results = []
    for check in REGISTRY:
        if check.suite not in chosen:
            continue
        rng = np.random.default_rng([seed, zlib.crc32(check.ident.encode())])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            try:
                ok, detail = check.func(rng, samples)
            except Exception as err:  # a crashing invariant is a failing invariant
                ok, detail = False, {"error": f"{type(err).__name__}: {err}"}
        if _FAULT["target"] == check.ident:
            ok, detail = False, dict(detail, injected_fault=True)
        results.append({"id": check.ident, "suite": check.suite, "passed": bool(ok), "detail": detail})
    failed = [r["id"] for r in results if not r["passed"]]
    report = {
        "seed": seed,
        "suites": list(chosen),
        "count": len(results),
        "failed": failed,
        "passed": not failed,
        "results": results,
        "warnings": [] if results else ["no checks selected"],
    }
    return report
