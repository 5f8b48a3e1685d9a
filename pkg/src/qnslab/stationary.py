"""Stationary solutions by contraction of a linearized solve.

With sigma = rho - rho_bar, one application of the map T freezes (sigma~, u~)
and solves, mode by mode,

    div u + b . grad sigma = g,                       b = u~ / rho~, g = G / rho~
    -mu lap u - (mu + lam) grad div u + c^2 grad sigma - (hbar^2/4) grad lap sigma = f

where rho~ = rho_bar + sigma~ and f collects every remaining term evaluated at
the frozen fields. The transport term b . grad sigma is lagged in an inner
Picard loop so that each sweep is a diagonal Fourier solve.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import analysis as an
from . import spectral as sp
from .errors import CompatibilityError, ContractionError, ConvergenceError, DomainError, HypothesisWarning
from .model import Forcing, ModelParams, State, check_positivity, momentum_rhs, quantum_remainder
from .spectral import SpectralField

INNER_TOL = 1e-10
MAX_INNER = 200
COMPAT_BOUND = 0.05


def h2_norm(f: SpectralField) -> float:
    return an.sobolev_norm(f, 2)


@dataclass
class LinearSolveInfo:
    inner_iterations: int
    inner_ratio: float
    compatibility_defect: float
    momentum_mean: float


def _frozen_data(sigma_t: SpectralField, u_t: SpectralField, forcing: Forcing, params: ModelParams):
    g = sigma_t.grid
    s = sigma_t.real
    if np.max(np.abs(s)) >= params.rho_bar / 2:
        raise DomainError("frozen density perturbation must stay below rho_bar/2", sigma_max=float(np.max(np.abs(s))))
    rho = params.rho_bar + s
    u = u_t.real
    G = forcing.G.real
    grad_u = np.stack([np.stack([g.to_real(1j * kj * u_t.hat[i]) for kj in g.k]) for i in range(g.dim)])
    conv = np.einsum("j...,ij...->i...", u, grad_u)
    grad_s = np.stack([g.to_real(1j * kj * sigma_t.hat) for kj in g.k])
    f = (
        -rho * conv
        + rho * forcing.F.real
        - u * G
        - (params.dpressure(rho) - params.sound_speed_sq) * grad_s
        + params.hbar**2 / 4 * quantum_remainder(g, sigma_t.hat, rho)
    )
    g_hat = g.to_hat(G / rho, dealias=True)
    return g_hat, u / rho, g.to_hat(f, dealias=True)


def solve_linearized_info(
    sigma_tilde: SpectralField,
    u_tilde: SpectralField,
    forcing: Forcing,
    params: ModelParams,
    inner_tol: float = INNER_TOL,
    max_inner: int = MAX_INNER,
    sigma_guess: SpectralField | None = None,
    compat_bound: float = COMPAT_BOUND,
) -> tuple[SpectralField, SpectralField, LinearSolveInfo]:
    grid = sigma_tilde.grid
    g_hat, b, f_hat = _frozen_data(sigma_tilde, u_tilde, forcing, params)
    k2 = grid.k2
    inv_k2 = sp._safe_inverse_k2(grid)
    k_dot_f = sum(kj * f_hat[j] for j, kj in enumerate(grid.k))
    sol_f = f_hat - np.stack([kj * k_dot_f * inv_k2 for kj in grid.k])
    omega_hat = sol_f * inv_k2 / params.mu
    psi_hat = -1j * k_dot_f * inv_k2
    symbol = params.sound_speed_sq + params.hbar**2 * k2 / 4
    momentum_mean = float(np.max(np.abs(f_hat[(slice(None),) + grid.zero_mode]))) / grid.npoints

    sigma_hat = (sigma_tilde if sigma_guess is None else sigma_guess).hat.copy()
    sigma_hat[grid.zero_mode] = 0.0
    prev_diff = None
    ratio = 0.0
    for it in range(1, max_inner + 1):
        transport = np.sum(b * np.stack([grid.to_real(1j * kj * sigma_hat) for kj in grid.k]), axis=0)
        r_hat = g_hat - grid.to_hat(transport, dealias=True)
        defect = float(r_hat[grid.zero_mode].real) / grid.npoints
        r_hat[grid.zero_mode] = 0.0
        new = (psi_hat + params.nu * r_hat) / symbol
        new[grid.zero_mode] = 0.0
        diff = h2_norm(SpectralField(grid, new - sigma_hat))
        scale = h2_norm(SpectralField(grid, new))
        if prev_diff:
            ratio = diff / prev_diff
        prev_diff = diff
        sigma_hat = new
        if diff <= inner_tol * scale or diff == 0.0:
            break
    else:
        raise ConvergenceError(
            f"inner transport loop did not converge in {max_inner} iterations",
            iterations=max_inner,
            last_ratio=ratio,
        )
    r_scale = float(np.max(np.abs(grid.to_real(r_hat)))) if np.any(r_hat) else 0.0
    if abs(defect) > compat_bound * r_scale:
        raise CompatibilityError(
            f"mean of the continuity source {defect:.3e} exceeds {compat_bound:g} x max|R| = {compat_bound * r_scale:.3e}",
            defect=defect,
        )
    p_hat = -r_hat * inv_k2
    u_hat = omega_hat + np.stack([1j * kj * p_hat for kj in grid.k])
    info = LinearSolveInfo(it, ratio, defect, momentum_mean)
    return SpectralField(grid, sigma_hat), SpectralField(grid, u_hat), info


def solve_linearized(
    sigma_tilde: SpectralField,
    u_tilde: SpectralField,
    forcing: Forcing,
    params: ModelParams,
    inner_tol: float = INNER_TOL,
    **kwargs,
) -> tuple[SpectralField, SpectralField]:
    """One application of the map T: returns (sigma, u) for frozen (sigma~, u~)."""
    sigma, u, _ = solve_linearized_info(sigma_tilde, u_tilde, forcing, params, inner_tol, **kwargs)
    return sigma, u


def linearized_defect(
    sigma: SpectralField, u: SpectralField, sigma_tilde: SpectralField, u_tilde: SpectralField, forcing: Forcing, params: ModelParams
) -> tuple[float, float]:
    """L2 defects of both linearized equations after substituting (sigma, u)."""
    grid = sigma.grid
    g_hat, b, f_hat = _frozen_data(sigma_tilde, u_tilde, forcing, params)
    transport = np.sum(b * np.stack([grid.to_real(1j * kj * sigma.hat) for kj in grid.k]), axis=0)
    cont = sp.divergence(u).hat + grid.to_hat(transport, dealias=True) - g_hat
    cont[grid.zero_mode] = 0.0
    div_u = sp.divergence(u).hat
    mom = (
        params.mu * grid.k2 * u.hat
        - (params.mu + params.lam) * np.stack([1j * kj * div_u for kj in grid.k])
        + np.stack([1j * kj * (params.sound_speed_sq + params.hbar**2 * grid.k2 / 4) * sigma.hat for kj in grid.k])
        - f_hat
    )
    mom[(slice(None),) + grid.zero_mode] = 0.0
    return sp.l2_norm(SpectralField(grid, cont)), sp.l2_norm(SpectralField(grid, mom))


def manufactured_forcing(
    sigma: SpectralField,
    u: SpectralField,
    params: ModelParams,
    sigma_tilde: SpectralField | None = None,
    u_tilde: SpectralField | None = None,
) -> Forcing:
    """Forcing whose linearized problem, frozen at (sigma~, u~), is solved exactly by (sigma, u).

    Frozen fields default to (sigma, u) themselves, which makes (sigma, u) a
    fixed point of T. The targets must be mean-zero and inside the dealiased
    band.
    """
    grid = sigma.grid
    st = sigma if sigma_tilde is None else sigma_tilde
    ut = u if u_tilde is None else u_tilde
    rho = params.rho_bar + st.real
    b = ut.real / rho
    grad_s = np.stack([grid.to_real(1j * kj * sigma.hat) for kj in grid.k])
    g_target = sp.divergence(u).real + np.sum(b * grad_s, axis=0)
    G = SpectralField.from_real(grid, rho * g_target)
    div_u = sp.divergence(u).hat
    f_target = (
        params.mu * grid.k2 * u.hat
        - (params.mu + params.lam) * np.stack([1j * kj * div_u for kj in grid.k])
        + np.stack([1j * kj * (params.sound_speed_sq + params.hbar**2 * grid.k2 / 4) * sigma.hat for kj in grid.k])
    )
    _, _, rest = _frozen_data(st, ut, Forcing(G, SpectralField.zeros(grid, 1)), params)
    F = SpectralField.from_real(grid, (grid.to_real(f_target) - grid.to_real(rest)) / rho)
    return Forcing(G, F)


def stationary_fields(sigma: SpectralField, u: SpectralField, params: ModelParams) -> State:
    """(rho*, m*) with m* the dealiased product rho* u*."""
    grid = sigma.grid
    rho = sigma.copy()
    rho.hat[grid.zero_mode] += params.rho_bar * grid.npoints
    return State.from_primitive(rho, u)


def stationary_residual_fields(sigma: SpectralField, u: SpectralField, forcing: Forcing, params: ModelParams):
    state = stationary_fields(sigma, u, params)
    check_positivity(state.rho.real, params)
    res_c = forcing.G - sp.divergence(state.m)
    res_m = momentum_rhs(state.rho, state.m, forcing.F, params)
    return sp.l2_norm(res_c), sp.l2_norm(res_m)


def stationary_residual(solution: "StationarySolution", forcing: Forcing, params: ModelParams) -> tuple[float, float]:
    """L2 norms of div(rho* u*) - G and of the steady momentum defect."""
    return stationary_residual_fields(solution.sigma_star, solution.u_star, forcing, params)


def hypothesis_report(forcing: Forcing, center=None, threshold: float = 0.1) -> dict:
    """Weighted forcing sizes K0, K and ||(1+|x-c|)^-1 G||_{L1}."""
    c = forcing.center if center is None else center
    G, F = forcing.G, forcing.F
    grid = G.grid
    wn = lambda f, order, nu, p=2: an.weighted_derivative_norm(f, order, nu, c, p)
    k0 = wn(G, 0, 1)
    k0 += sum(wn(F, v, v + 1) for v in range(4))
    k0 += sum(wn(G, v, v) for v in range(1, 5))
    stacked = np.sqrt(
        np.sum(F.real**2, axis=0) + G.real**2 + sp.derivative_magnitude_sq(F, 1) + sp.derivative_magnitude_sq(G, 1)
    )
    k = k0 + an.lp_norm(grid, an.weight(grid, c, 3) * stacked, np.inf)
    k += wn(G, 2, 3, np.inf)
    complete = forcing.F1 is not None and forcing.F2 is not None
    if forcing.F1 is not None:
        k += an.lp_norm(grid, an.weight(grid, c, 2) * forcing.F1.real, np.inf)
    if forcing.F2 is not None:
        k += an.lp_norm(grid, forcing.F2.real, 1)
    l1 = an.lp_norm(grid, an.weight(grid, c, -1) * G.real, 1)
    eps = k + l1
    return {
        "K0": float(k0),
        "K": float(k),
        "L1_weighted_G": float(l1),
        "epsilon_estimate": float(eps),
        "threshold": float(threshold),
        "smallness_flag": bool(eps <= threshold),
        "complete": bool(complete),
    }


def divergence_structure(sigma: SpectralField, u: SpectralField, forcing: Forcing, params: ModelParams, center=None) -> dict:
    """Diagnostics of div u = div V1 + V2 with V1 = -(u/rho) sigma, V2 = div(u/rho) sigma + G/rho."""
    grid = sigma.grid
    c = forcing.center if center is None else center
    rho = params.rho_bar + sigma.real
    b = u.real / rho
    v1 = -b * sigma.real
    b_hat = grid.to_hat(b, dealias=True)
    div_b = grid.to_real(sum(1j * kj * b_hat[j] for j, kj in enumerate(grid.k)))
    v2 = div_b * sigma.real + forcing.G.real / rho
    v1_hat = grid.to_hat(v1, dealias=True)
    lhs = sp.divergence(u).hat
    rhs = sum(1j * kj * v1_hat[j] for j, kj in enumerate(grid.k)) + grid.to_hat(v2, dealias=True)
    r1 = an.lp_norm(grid, an.weight(grid, c, 3) * v1, np.inf)
    r2 = an.lp_norm(grid, an.weight(grid, c, -1) * v2, 1)
    return {
        "V1_weighted_Linf": float(r1),
        "V2_weighted_L1": float(r2),
        "V_sum": float(r1 + r2),
        "identity_defect": sp.l2_norm(SpectralField(grid, lhs - rhs)),
    }


def norm_report(sigma: SpectralField, u: SpectralField, forcing: Forcing, params: ModelParams, center=None) -> dict:
    c = forcing.center if center is None else center
    out = {
        "sigma_H2": h2_norm(sigma),
        "u_H2": h2_norm(u),
        "sigma_Linf": float(np.max(np.abs(sigma.real))),
        "u_Linf": float(np.max(np.abs(u.real))),
        "I4": an.i_norm(sigma, 4, c),
        "J5": an.j_norm(u, 5, c),
    }
    out["F45"] = out["I4"] + out["J5"]
    hyp = hypothesis_report(forcing, c)
    out["K0"] = hyp["K0"]
    out["K"] = hyp["K"]
    out.update(divergence_structure(sigma, u, forcing, params, c))
    return out


@dataclass
class StationarySolution:
    sigma_star: SpectralField
    u_star: SpectralField
    iterations: int
    contraction_ratios: list[float]
    differences: list[float]
    residual_continuity: float
    residual_momentum: float
    norm_report: dict
    hypothesis: dict
    params: ModelParams
    history: list[dict] = field(default_factory=list)

    @property
    def grid(self):
        return self.sigma_star.grid

    def state(self) -> State:
        return stationary_fields(self.sigma_star, self.u_star, self.params)

    @property
    def residual(self) -> float:
        return self.residual_continuity + self.residual_momentum


def fixed_point(
    forcing: Forcing,
    params: ModelParams,
    outer_tol: float = 1e-10,
    max_outer: int = 60,
    inner_tol: float = INNER_TOL,
    initial: tuple[SpectralField, SpectralField] | None = None,
    threshold: float = 0.1,
    smallness: str = "warn",
    compat_bound: float = COMPAT_BOUND,
    with_norms: bool = True,
) -> StationarySolution:
    """Iterate (sigma, u) <- T(sigma, u) until the H2 step is below outer_tol relative to the iterate.

    ``smallness`` decides what happens when the forcing size exceeds
    ``threshold``: "raise", "warn" (default) or "ignore". The outcome is
    recorded in ``hypothesis`` either way.
    """
    grid = forcing.grid
    hyp = hypothesis_report(forcing, threshold=threshold)
    if smallness not in ("warn", "raise", "ignore"):
        raise DomainError(f"unknown smallness policy {smallness!r}")
    if not hyp["smallness_flag"]:
        msg = f"forcing size {hyp['epsilon_estimate']:.3e} exceeds the smallness threshold {threshold:g}"
        if smallness == "raise":
            raise DomainError(msg, **hyp)
        if smallness == "warn":
            warnings.warn(msg, HypothesisWarning, stacklevel=2)
    if initial is None:
        sigma, u = SpectralField.zeros(grid), SpectralField.zeros(grid, 1)
    else:
        sigma, u = initial[0].copy(), initial[1].copy()
    ratios: list[float] = []
    diffs: list[float] = []
    history: list[dict] = []
    above_one = 0
    converged = False
    for n in range(1, max_outer + 1):
        new_sigma, new_u, info = solve_linearized_info(
            sigma, u, forcing, params, inner_tol, sigma_guess=sigma, compat_bound=compat_bound
        )
        check_positivity(params.rho_bar + new_sigma.real, params)
        d = h2_norm(new_sigma - sigma) + h2_norm(new_u - u)
        scale = h2_norm(new_sigma) + h2_norm(new_u)
        ratio = d / diffs[-1] if diffs and diffs[-1] > 0 else None
        diffs.append(d)
        if ratio is not None:
            ratios.append(ratio)
            above_one = above_one + 1 if ratio > 1 else 0
        sigma, u = new_sigma, new_u
        res_c, res_m = stationary_residual_fields(sigma, u, forcing, params)
        history.append(
            {
                "iteration": n,
                "difference": d,
                "ratio": ratio,
                "inner_iterations": info.inner_iterations,
                "compatibility_defect": info.compatibility_defect,
                "residual_continuity": res_c,
                "residual_momentum": res_m,
                "sigma_H2": h2_norm(sigma),
                "u_H2": h2_norm(u),
            }
        )
        if above_one >= 3:
            raise ContractionError(f"outer iteration expanded three times in a row (ratio {ratio:.3g})", n, ratio)
        if d <= outer_tol * scale or d == 0.0:
            converged = True
            break
    if not converged:
        raise ConvergenceError(f"outer iteration did not reach {outer_tol:g} in {max_outer} steps", max_outer, ratios[-1] if ratios else None)
    report = norm_report(sigma, u, forcing, params) if with_norms else {}
    return StationarySolution(
        sigma_star=sigma,
        u_star=u,
        iterations=n,
        contraction_ratios=ratios,
        differences=diffs,
        residual_continuity=history[-1]["residual_continuity"],
        residual_momentum=history[-1]["residual_momentum"],
        norm_report=report,
        hypothesis=hyp,
        params=params,
        history=history,
    )
