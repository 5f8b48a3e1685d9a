"""Compressible quantum Navier-Stokes model on the periodic box.

    rho_t + div(m) = G
    m_t + div(m (x) m / rho) - mu lap(u) - (mu + lam) grad div(u)
        + grad P(rho) - (hbar^2 / 2) rho grad(lap(sqrt rho) / sqrt rho) = rho F

with u = m / rho and P(rho) = rho**gamma.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import spectral as sp
from .errors import DomainError, PositivityError, ShapeError
from .spectral import Grid, SpectralField

FORCING_KINDS = ("gaussian-bump", "dipole-divergence", "custom-table")


@dataclass(frozen=True)
class ModelParams:
    mu: float = 1.0
    lam: float = 0.0
    hbar: float = 1.0
    gamma: float = 1.0
    rho_bar: float = 1.0
    rho_floor: float | None = None

    def __post_init__(self):
        if not self.mu > 0:
            raise DomainError(f"mu must be positive, got {self.mu}")
        if 3 * self.lam + 2 * self.mu < 0:
            raise DomainError("viscosities violate 3*lambda + 2*mu >= 0")
        if not self.hbar > 0:
            raise DomainError(f"hbar must be positive, got {self.hbar}")
        if self.gamma < 1:
            raise DomainError(f"gamma must be >= 1, got {self.gamma}")
        if not self.rho_bar > 0:
            raise DomainError(f"rho_bar must be positive, got {self.rho_bar}")
        if self.rho_floor is None:
            object.__setattr__(self, "rho_floor", self.rho_bar / 4)

    @property
    def nu(self) -> float:
        """Longitudinal viscosity 2 mu + lambda."""
        return 2 * self.mu + self.lam

    def pressure(self, rho):
        return np.asarray(rho) ** self.gamma

    def dpressure(self, rho):
        return self.gamma * np.asarray(rho, dtype=float) ** (self.gamma - 1)

    @property
    def sound_speed_sq(self) -> float:
        return float(self.dpressure(self.rho_bar))


def _values(rho) -> np.ndarray:
    return rho.real if isinstance(rho, SpectralField) else np.asarray(rho, dtype=float)


def _check_window(rho: np.ndarray, params: ModelParams) -> None:
    lo, hi = params.rho_bar / 2, 3 * params.rho_bar / 2
    rmin, rmax = float(np.min(rho)), float(np.max(rho))
    if rmin < lo or rmax > hi:
        raise DomainError(
            f"density range [{rmin:.6g}, {rmax:.6g}] leaves the window [{lo:.6g}, {hi:.6g}]",
            rho_min=rmin,
            rho_max=rmax,
        )


def pressure_derivative(rho, params: ModelParams) -> np.ndarray:
    """P'(rho) at every node; rho must sit in [rho_bar/2, 3 rho_bar/2]."""
    r = _values(rho)
    _check_window(r, params)
    return params.dpressure(r)


def enthalpy_coefficients(rho, params: ModelParams) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (A, A_hat, A_tilde) = (P'/rho, rho/P', rho^2/P')."""
    r = _values(rho)
    dp = pressure_derivative(r, params)
    return dp / r, r / dp, r**2 / dp


def check_positivity(rho, params: ModelParams, time: float | None = None) -> float:
    rmin = float(np.min(_values(rho)))
    if not rmin >= params.rho_floor:
        where = "" if time is None else f" at t={time:.6g}"
        raise PositivityError(
            f"density minimum {rmin:.6g} below floor {params.rho_floor:.6g}{where}",
            rho_min=rmin,
            time=time,
        )
    return rmin


@dataclass(eq=False)
class Forcing:
    """Mass source G and body force F, optionally with F = div(F1) + F2."""

    G: SpectralField
    F: SpectralField
    F1: SpectralField | None = None
    F2: SpectralField | None = None
    center: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.G.rank != 0 or self.F.rank != 1:
            raise ShapeError("G must be scalar and F a vector field")
        if self.F1 is not None and self.F1.rank != 2:
            raise ShapeError("F1 must be matrix valued")
        if self.F2 is not None and self.F2.rank != 1:
            raise ShapeError("F2 must be a vector field")
        if self.center is None:
            self.center = self.G.grid.center

    @property
    def grid(self) -> Grid:
        return self.G.grid

    @classmethod
    def zero(cls, grid: Grid) -> "Forcing":
        return cls(SpectralField.zeros(grid), SpectralField.zeros(grid, 1))

    def decomposition_defect(self) -> float | None:
        """||F - div F1 - F2|| when both parts are present, else None."""
        if self.F1 is None or self.F2 is None:
            return None
        return sp.l2_norm(self.F - sp.divergence(self.F1) - self.F2)

    def scaled(self, factor: float) -> "Forcing":
        opt = lambda f: None if f is None else f * factor
        return Forcing(self.G * factor, self.F * factor, opt(self.F1), opt(self.F2), self.center)


def chord_displacements(grid: Grid, center: Sequence[float]) -> list[np.ndarray]:
    """Smooth periodic stand-in for x - c: (L / 2 pi) sin(2 pi (x - c) / L) per axis."""
    L = grid.box_length
    return [L / (2 * np.pi) * np.sin(2 * np.pi * (xj - cj) / L) + 0 * grid.k2 for xj, cj in zip(grid.x, center)]


def chord_distance(grid: Grid, center: Sequence[float]) -> np.ndarray:
    """Periodic distance with |grad r^2| = 2 |chord displacement|; equals |x - c| to O(|x - c|^3)."""
    L = grid.box_length
    r2 = sum((L / np.pi * np.sin(np.pi * (xj - cj) / L)) ** 2 for xj, cj in zip(grid.x, center))
    return np.sqrt(r2 + 0 * grid.k2)


def radial_profile(grid: Grid, width: float, center=None, profile: str = "gaussian", decay_exponent: float = 4.0):
    """Bump in the chordal distance, so the sampled profile is smooth and periodic."""
    r = chord_distance(grid, grid.center if center is None else center)
    if profile == "gaussian":
        return np.exp(-((r / width) ** 2))
    if profile == "algebraic":
        return (1 + (r / width) ** 2) ** (-decay_exponent / 2)
    raise DomainError(f"unknown profile {profile!r}")


def make_forcing(
    grid: Grid,
    kind: str = "gaussian-bump",
    amplitude: float = 1e-3,
    width: float = 2.0,
    center: Sequence[float] | None = None,
    profile: str = "gaussian",
    decay_exponent: float = 4.0,
    table: dict | None = None,
) -> Forcing:
    """Build localized forcing symmetric under x - c -> c - x.

    G is even and mean-zero, F is odd, so both mean-zero solvability
    conditions of the periodic stationary problem hold.

    gaussian-bump:      G = a (phi - <phi>), F1 = a w phi I, F2 = a phi R(x - c) / w
    dipole-divergence:  G = a w^2 lap(phi), F1 = a w phi (I + J), F2 = 0
    custom-table:       G and F taken from ``table`` (real-space arrays)

    R is a rotation generator (divergence free), J the antisymmetric matrix
    generating rotations in the first two axes. Profiles use the chordal
    distance, keeping every generated field smooth across the box edges.
    """
    c = grid.center if center is None else tuple(float(v) for v in center)
    d = grid.dim
    if kind == "custom-table":
        if table is None or "G" not in table or "F" not in table:
            raise DomainError("custom-table forcing needs a table with 'G' and 'F'")
        G = SpectralField.from_real(grid, table["G"])
        F = SpectralField.from_real(grid, table["F"])
        F1 = SpectralField.from_real(grid, table["F1"]) if "F1" in table else None
        F2 = SpectralField.from_real(grid, table["F2"]) if "F2" in table else None
        return Forcing(G, F, F1, F2, c)
    if kind not in FORCING_KINDS:
        raise DomainError(f"unknown forcing kind {kind!r}")
    phi = SpectralField.from_real(grid, radial_profile(grid, width, c, profile, decay_exponent))
    eye = np.eye(d)
    if kind == "gaussian-bump":
        G = SpectralField.from_real(grid, amplitude * (phi.real - phi.real.mean()))
        F1 = SpectralField(grid, amplitude * width * eye[(...,) + (None,) * d] * phi.hat)
        disp = chord_displacements(grid, c)
        rot = np.zeros((d,) + grid.shape)
        if d >= 2:
            rot[0] -= disp[1]
            rot[1] += disp[0]
        if d == 3:
            rot[1] -= 0.5 * disp[2]
            rot[2] += 0.5 * disp[1]
        F2 = SpectralField.from_real(grid, amplitude * phi.real * rot / width)
    else:
        G = sp.laplacian(phi) * (amplitude * width**2)
        J = np.zeros((d, d))
        if d >= 2:
            J[0, 1], J[1, 0] = -1.0, 1.0
        F1 = SpectralField(grid, amplitude * width * (eye + J)[(...,) + (None,) * d] * phi.hat)
        F2 = SpectralField.zeros(grid, 1)
    # band-limit to the dealiased range so forcing and solver products live on the same modes
    G, F1, F2 = sp.dealias(G), sp.dealias(F1), sp.dealias(F2)
    F = sp.divergence(F1) + F2
    return Forcing(G, F, F1, F2, c)


@dataclass(eq=False)
class State:
    rho: SpectralField
    m: SpectralField
    time: float = 0.0

    @property
    def grid(self) -> Grid:
        return self.rho.grid

    def velocity(self) -> SpectralField:
        g = self.grid
        return SpectralField(g, g.to_hat(self.m.real / self.rho.real, dealias=True))

    @classmethod
    def constant(cls, grid: Grid, params: ModelParams) -> "State":
        rho = SpectralField.zeros(grid)
        rho.hat[grid.zero_mode] = params.rho_bar * grid.npoints
        return cls(rho, SpectralField.zeros(grid, 1))

    @classmethod
    def from_primitive(cls, rho: SpectralField, u: SpectralField, time: float = 0.0) -> "State":
        g = rho.grid
        return cls(rho, SpectralField(g, g.to_hat(rho.real * u.real, dealias=True)), time)


def _real_grad(grid: Grid, hat: np.ndarray) -> np.ndarray:
    return np.stack([grid.to_real(1j * kj * hat) for kj in grid.k])


def _real_hessian(grid: Grid, hat: np.ndarray) -> np.ndarray:
    d = grid.dim
    out = np.empty((d, d) + grid.shape)
    for i in range(d):
        for j in range(i, d):
            out[i, j] = grid.to_real(-grid.k[i] * grid.k[j] * hat)
            out[j, i] = out[i, j]
    return out


def quantum_remainder(grid: Grid, rho_hat: np.ndarray, rho: np.ndarray | None = None) -> np.ndarray:
    """Real-space |grad r|^2 grad r / r^2 - grad r lap r / r - (grad r . hess r) / r."""
    r = grid.to_real(rho_hat) if rho is None else rho
    gr = _real_grad(grid, rho_hat)
    hess = _real_hessian(grid, rho_hat)
    lap = np.trace(hess)
    g2 = np.sum(gr**2, axis=0)
    g_dot_h = np.einsum("j...,ji...->i...", gr, hess)
    return g2 * gr / r**2 - gr * lap / r - g_dot_h / r


def bohm_force(rho: SpectralField, params: ModelParams, method: str = "expanded") -> SpectralField:
    """(hbar^2 / 2) rho grad(lap(sqrt rho) / sqrt rho).

    ``expanded`` evaluates (hbar^2/4)[grad lap rho + remainder]; ``sqrt``
    goes through sqrt(rho) directly and exists as an independent check.
    """
    g = rho.grid
    r = rho.real
    check_positivity(r, params)
    if method == "expanded":
        lin = np.stack([1j * kj * (-g.k2) * rho.hat for kj in g.k])
        nl = g.to_hat(quantum_remainder(g, rho.hat, r), dealias=True)
        return SpectralField(g, params.hbar**2 / 4 * (lin + nl))
    if method == "sqrt":
        s_hat = g.to_hat(np.sqrt(r), dealias=True)
        s = g.to_real(s_hat)
        q_hat = g.to_hat(g.to_real(-g.k2 * s_hat) / s, dealias=True)
        grad_q = _real_grad(g, q_hat)
        return SpectralField(g, params.hbar**2 / 2 * g.to_hat(r * grad_q, dealias=True))
    raise DomainError(f"unknown bohm method {method!r}")


def _pressure_hat(grid: Grid, rho: np.ndarray, rho_hat: np.ndarray, params: ModelParams) -> np.ndarray:
    if params.gamma == 1:
        return rho_hat
    return grid.to_hat(params.pressure(rho), dealias=True)


def momentum_rhs(rho: SpectralField, m: SpectralField, F: SpectralField, params: ModelParams) -> SpectralField:
    g = rho.grid
    r = rho.real
    check_positivity(r, params)
    mv = m.real
    u = mv / r
    u_hat = g.to_hat(u, dealias=True)
    flux = g.to_hat(mv[:, None] * u[None, :], dealias=True)
    conv = sp.divergence(SpectralField(g, flux)).hat
    div_u = sum(1j * kj * u_hat[j] for j, kj in enumerate(g.k))
    visc = -params.mu * g.k2 * u_hat + (params.mu + params.lam) * np.stack([1j * kj * div_u for kj in g.k])
    p_hat = _pressure_hat(g, r, rho.hat, params)
    grad_p = np.stack([1j * kj * p_hat for kj in g.k])
    body = g.to_hat(r * F.real, dealias=True)
    bohm = bohm_force(rho, params).hat
    return SpectralField(g, -conv + visc - grad_p + bohm + body)


def nonlinear_rhs(state: State, forcing: Forcing, params: ModelParams) -> tuple[SpectralField, SpectralField]:
    """Time derivatives (rho_t, m_t) of the full system."""
    drho = forcing.G - sp.divergence(state.m)
    dm = momentum_rhs(state.rho, state.m, forcing.F, params)
    return drho, dm


def linear_momentum_part(varrho: SpectralField, M: SpectralField, params: ModelParams) -> SpectralField:
    """Constant-coefficient momentum operator about (rho_bar, 0)."""
    g = varrho.grid
    div_m = sum(1j * kj * M.hat[j] for j, kj in enumerate(g.k))
    rb = params.rho_bar
    out = (
        -params.mu / rb * g.k2 * M.hat
        + np.stack([1j * kj * ((params.mu + params.lam) / rb * div_m) for kj in g.k])
        - params.sound_speed_sq * np.stack([1j * kj * varrho.hat for kj in g.k])
        + params.hbar**2 / 4 * np.stack([1j * kj * (-g.k2) * varrho.hat for kj in g.k])
    )
    return SpectralField(g, out)


def compute_Q(
    varrho: SpectralField,
    M: SpectralField,
    rho_star: SpectralField,
    m_star: SpectralField,
    forcing: Forcing,
    params: ModelParams,
) -> SpectralField:
    """Nonlinear remainder of the momentum equation in perturbation form.

    Written term by term from the perturbation of the full momentum equation
    about (rho*, m*), with every composite term dealiased.
    """
    g = varrho.grid
    rs = rho_star.real
    r = rs + varrho.real
    check_positivity(r, params)
    ms = m_star.real
    m = ms + M.real
    Mv = M.real
    deal = lambda vals: g.to_hat(vals, dealias=True)
    grad = lambda hat: np.stack([1j * kj * hat for kj in g.k])
    div = lambda hat: sum(1j * kj * hat[j] for j, kj in enumerate(g.k))
    rb = params.rho_bar

    out = deal(forcing.F.real * varrho.real)
    flux = deal(m[:, None] * m[None, :] / r - ms[:, None] * ms[None, :] / rs)
    out -= sp.divergence(SpectralField(g, flux)).hat

    w1 = deal(Mv / rb - Mv / r)
    w2 = deal(ms / rs - ms / r)
    out -= params.mu * (-g.k2) * (w1 + w2)
    out -= (params.mu + params.lam) * grad(div(w1 + w2))

    dp = params.dpressure(r)
    dp_star = params.dpressure(rs)
    grad_vr = _real_grad(g, varrho.hat)
    grad_rs = _real_grad(g, rho_star.hat)
    out -= deal((dp - params.sound_speed_sq) * grad_vr + (dp - dp_star) * grad_rs)

    grad_r = grad_rs + grad_vr
    hess_rs = _real_hessian(g, rho_star.hat)
    hess_vr = _real_hessian(g, varrho.hat)
    lap_rs, lap_vr = np.trace(hess_rs), np.trace(hess_vr)
    a = np.sum(grad_r**2, axis=0) / r**2
    a_star = np.sum(grad_rs**2, axis=0) / rs**2
    q = grad_r / r
    q_star = grad_rs / rs
    contract = lambda v, h: np.einsum("j...,ji...->i...", v, h)
    quantum = (
        (a - a_star) * grad_rs
        + a * grad_vr
        - (q - q_star) * lap_rs
        - q * lap_vr
        - contract(q - q_star, hess_rs)
        - contract(q, hess_vr)
    )
    out += params.hbar**2 / 4 * deal(quantum)
    return SpectralField(g, out)


def internal_energy_density(rho: np.ndarray, params: ModelParams) -> np.ndarray:
    rb, gm = params.rho_bar, params.gamma
    if gm == 1:
        return rho * np.log(rho / rb) - rho + rb
    return (rho**gm - rb**gm - gm * rb ** (gm - 1) * (rho - rb)) / (gm - 1)


def energy_budget(state: State, params: ModelParams) -> dict[str, float]:
    """Kinetic, internal (relative to rho_bar) and quantum energies."""
    g = state.grid
    r = state.rho.real
    mv = state.m.real
    gr = _real_grad(g, state.rho.hat)
    kinetic = 0.5 * np.sum(mv**2, axis=0) / r
    quantum = params.hbar**2 / 8 * np.sum(gr**2, axis=0) / r
    dv = g.cell_volume
    out = {
        "kinetic": float(np.sum(kinetic) * dv),
        "internal": float(np.sum(internal_energy_density(r, params)) * dv),
        "quantum": float(np.sum(quantum) * dv),
    }
    out["total"] = out["kinetic"] + out["internal"] + out["quantum"]
    return out
