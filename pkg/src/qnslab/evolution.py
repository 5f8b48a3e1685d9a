"""IMEX time integration of the full system about a reference state.

The state is split as (rho, m) = (rho_ref + varrho, m_ref + M). The
constant-coefficient part

    varrho_t = -div M
    M_t = (mu/rho_bar) lap M + ((mu+lam)/rho_bar) grad div M - c^2 grad varrho + (hbar^2/4) grad lap varrho

is solved implicitly per Fourier mode (a 2x2 block along xi and a scalar
rate across it); everything else is explicit. With a stationary reference
the explicit momentum term is the remainder Q plus the stationary residual.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import analysis as an
from . import spectral as sp
from .errors import CFLError, DomainError, QNSError
from .model import (
    Forcing,
    ModelParams,
    State,
    check_positivity,
    linear_momentum_part,
    momentum_rhs,
    radial_profile,
)
from .spectral import Grid, SpectralField

SCHEMES = ("imex-euler", "imex-rk2")
ARS_GAMMA = 1 - 1 / math.sqrt(2)
ARS_DELTA = 1 - 1 / (2 * ARS_GAMMA)

CSV_COLUMNS = (
    ["rho_H0", "rho_H1", "rho_H2", "rho_H3", "rho_H4"]
    + ["omega_H0", "omega_H1", "omega_H2", "omega_H3"]
    + ["N", "E", "rho_min", "dissipation"]
    + ["norm_43", "dissipation_32", "dissipation_0"]
)


@dataclass(frozen=True)
class TimeStepperConfig:
    dt: float = 0.1
    t_end: float = 50.0
    scheme: str = "imex-rk2"
    cfl_safety: float = 0.5
    output_stride: int = 5
    max_halvings: int = 8

    def __post_init__(self):
        if not self.dt > 0:
            raise DomainError("dt must be positive")
        if not 0 < self.cfl_safety <= 1:
            raise DomainError("cfl_safety must lie in (0, 1]")
        if self.scheme not in SCHEMES:
            raise DomainError(f"scheme must be one of {SCHEMES}")
        if self.output_stride < 1:
            raise DomainError("output_stride must be >= 1")
        if self.t_end < 0:
            raise DomainError("t_end must be nonnegative")


@dataclass
class TrajectoryRecord:
    times: list[float]
    norm_series: an.NormSeries
    positivity_min: list[float]
    energy_values: dict[str, list[float]]
    initial_norm: float
    steps: int = 0
    dt_used: float = 0.0
    aborted: dict | None = None

    @property
    def sup_ratio(self) -> float:
        """C_emp = sup_t ||(varrho, omega)(t)||_{4,3} / ||(varrho, omega)(0)||_{4,3}."""
        norms = self.norm_series.column("norm_43")
        return float(norms.max() / self.initial_norm) if self.initial_norm > 0 else 0.0

    def summary(self) -> dict:
        s = self.norm_series
        return {
            "t_final": self.times[-1] if self.times else 0.0,
            "snapshots": len(self.times),
            "steps": self.steps,
            "dt": self.dt_used,
            "initial_norm_43": self.initial_norm,
            "sup_norm_43": float(s.column("norm_43").max()) if len(s) else 0.0,
            "final_norm_43": float(s.column("norm_43")[-1]) if len(s) else 0.0,
            "C_emp": self.sup_ratio,
            "dissipation_integral": float(s.column("dissipation")[-1]) if len(s) else 0.0,
            "rho_min": float(min(self.positivity_min)) if self.positivity_min else float("nan"),
            "aborted": self.aborted,
        }


def velocity_perturbation(rho_hat: np.ndarray, m_hat: np.ndarray, ref: State) -> SpectralField:
    """omega = m / rho - m_ref / rho_ref, dealiased."""
    g = ref.grid
    rho = ref.rho.real + g.to_real(rho_hat)
    m = ref.m.real + g.to_real(m_hat)
    return SpectralField(g, g.to_hat(m / rho - ref.m.real / ref.rho.real, dealias=True))


def _grad_sobolev(f: SpectralField, k: int) -> float:
    return math.sqrt(an._spectral_sum(f, (1 + f.grid.k2) ** k * f.grid.k2))


class Stepper:
    """One-step map for the perturbation (varrho_hat, M_hat) about ``reference``."""

    def __init__(
        self,
        reference: State,
        forcing: Forcing,
        params: ModelParams,
        scheme: str = "imex-rk2",
        explicit: Callable | None = None,
    ):
        if scheme not in SCHEMES:
            raise DomainError(f"scheme must be one of {SCHEMES}")
        self.ref = reference
        self.grid: Grid = reference.grid
        self.forcing = forcing
        self.params = params
        self.scheme = scheme
        self._explicit = explicit
        g = self.grid
        self.kmag = g.kmag
        with np.errstate(invalid="ignore", divide="ignore"):
            self.unit = [np.where(g.kmag > 0, kj / np.where(g.kmag > 0, g.kmag, 1), 0.0) for kj in g.k]
        self.stiff = params.sound_speed_sq + params.hbar**2 * g.k2 / 4
        self.visc_par = params.nu / params.rho_bar * g.k2
        self.visc_perp = params.mu / params.rho_bar * g.k2
        self.ref_drho = (forcing.G - sp.divergence(reference.m)).hat
        self._ref_dm = None

    # linear part

    def apply_linear(self, rho_hat: np.ndarray, m_hat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        g = self.grid
        drho = -sum(1j * kj * m_hat[j] for j, kj in enumerate(g.k))
        dm = linear_momentum_part(SpectralField(g, rho_hat), SpectralField(g, m_hat), self.params).hat
        return drho, dm

    def implicit_solve(self, r_rho: np.ndarray, r_m: np.ndarray, theta: float) -> tuple[np.ndarray, np.ndarray]:
        """Solve (I - theta L) x = r mode by mode."""
        k = self.kmag
        par = sum(e * r_m[j] for j, e in enumerate(self.unit))
        perp = r_m - np.stack([e * par for e in self.unit])
        a22 = 1 + theta * self.visc_par
        det = a22 + theta**2 * k**2 * self.stiff
        x_rho = (a22 * r_rho - 1j * theta * k * par) / det
        x_par = (par - 1j * theta * k * self.stiff * r_rho) / det
        x_perp = perp / (1 + theta * self.visc_perp)
        x_m = x_perp + np.stack([e * x_par for e in self.unit])
        return x_rho, x_m

    # explicit part

    def full_state(self, rho_hat: np.ndarray, m_hat: np.ndarray) -> State:
        g = self.grid
        return State(SpectralField(g, self.ref.rho.hat + rho_hat), SpectralField(g, self.ref.m.hat + m_hat))

    def explicit(self, rho_hat: np.ndarray, m_hat: np.ndarray, t: float) -> tuple[np.ndarray, np.ndarray]:
        if self._explicit is not None:
            return self._explicit(rho_hat, m_hat, t)
        g = self.grid
        st = self.full_state(rho_hat, m_hat)
        dm = momentum_rhs(st.rho, st.m, self.forcing.F, self.params).hat
        lin = linear_momentum_part(SpectralField(g, rho_hat), SpectralField(g, m_hat), self.params).hat
        return self.ref_drho, (dm - lin) * g.dealias_mask

    # stepping

    def max_dt(self, rho_hat: np.ndarray, m_hat: np.ndarray, cfl_safety: float) -> float:
        st = self.full_state(rho_hat, m_hat)
        u = st.m.real / st.rho.real
        speed = float(np.max(np.sqrt(np.sum(u**2, axis=0)))) + math.sqrt(self.params.sound_speed_sq)
        return cfl_safety * self.grid.dx / speed

    def step(self, rho_hat: np.ndarray, m_hat: np.ndarray, t: float, dt: float) -> tuple[np.ndarray, np.ndarray]:
        mask = self.grid.dealias_mask
        if self.scheme == "imex-euler":
            n_rho, n_m = self.explicit(rho_hat, m_hat, t)
            r, m = self.implicit_solve(rho_hat + dt * n_rho, m_hat + dt * n_m, dt)
            return r * mask, m * mask
        gam, dlt = ARS_GAMMA, ARS_DELTA
        n1 = self.explicit(rho_hat, m_hat, t)
        y2 = self.implicit_solve(rho_hat + gam * dt * n1[0], m_hat + gam * dt * n1[1], gam * dt)
        n2 = self.explicit(y2[0], y2[1], t + gam * dt)
        l2 = self.apply_linear(*y2)
        r_rho = rho_hat + dt * (dlt * n1[0] + (1 - dlt) * n2[0]) + dt * (1 - gam) * l2[0]
        r_m = m_hat + dt * (dlt * n1[1] + (1 - dlt) * n2[1]) + dt * (1 - gam) * l2[1]
        r, m = self.implicit_solve(r_rho, r_m, gam * dt)
        return r * mask, m * mask


def step(
    state: State,
    reference: State,
    forcing: Forcing,
    params: ModelParams,
    dt: float,
    scheme: str = "imex-rk2",
    cfl_safety: float = 1.0,
) -> State:
    """Advance a full state by one step, treating it as a perturbation of ``reference``."""
    stepper = Stepper(reference, forcing, params, scheme)
    rho_hat = state.rho.hat - reference.rho.hat
    m_hat = state.m.hat - reference.m.hat
    check_positivity(state.rho.real, params, state.time)
    dt_max = stepper.max_dt(rho_hat, m_hat, cfl_safety)
    if dt > dt_max:
        raise CFLError(f"dt={dt:.4g} exceeds the CFL bound {dt_max:.4g}", dt, dt_max)
    r, m = stepper.step(rho_hat, m_hat, state.time, dt)
    out = stepper.full_state(r, m)
    out.time = state.time + dt
    check_positivity(out.rho.real, params, out.time)
    return out


def make_perturbation(
    reference: State,
    params: ModelParams,
    delta: float,
    seed: int = 0,
    width: float = 2.0,
    modes: int = 2,
) -> State:
    """Initial state whose (varrho, omega) has ||.||_{4,3} = delta.

    varrho is a mean-zero bump shifted off the box center; omega is a seeded
    random combination of the lowest Fourier modes.
    """
    g = reference.grid
    if delta == 0:
        return State(reference.rho.copy(), reference.m.copy())
    rng = np.random.default_rng(seed)
    shift = tuple(c + 0.1 * g.box_length for c in g.center)
    bump = radial_profile(g, width, shift)
    varrho = SpectralField.from_real(g, bump - bump.mean(), dealias=True)
    freq = np.abs(np.stack(np.meshgrid(*[g.integer_frequencies] * g.dim, indexing="ij")))
    low = np.all(freq <= modes, axis=0) & (np.max(freq, axis=0) > 0)
    coeff = rng.standard_normal((g.dim,) + g.shape) + 1j * rng.standard_normal((g.dim,) + g.shape)
    omega_vals = g.to_real(coeff * low)
    omega = SpectralField.from_real(g, omega_vals, dealias=True)
    omega = omega * (sp.l2_norm(varrho) / max(sp.l2_norm(omega), 1e-300))
    scale = delta / an.pair_norm(varrho, omega, 4, 3)
    varrho, omega = varrho * scale, omega * scale
    rho = reference.rho + varrho
    u = reference.velocity() + omega
    return State.from_primitive(rho, u)


def _snapshot(stepper: Stepper, rho_hat, m_hat, params, diss) -> dict:
    g = stepper.grid
    varrho = SpectralField(g, rho_hat)
    omega = velocity_perturbation(rho_hat, m_hat, stepper.ref)
    row = {f"rho_H{k}": an.sobolev_norm(varrho, k) for k in range(5)}
    row.update({f"omega_H{k}": an.sobolev_norm(omega, k) for k in range(4)})
    row["N"] = an.energy_N(varrho, omega, params, stepper.ref.rho)
    row["E"] = an.energy_E(varrho, omega, params, stepper.ref.rho)
    row["rho_min"] = float(np.min(stepper.ref.rho.real + g.to_real(rho_hat)))
    row["dissipation"] = diss[0]
    row["norm_43"] = row["rho_H4"] + row["omega_H3"]
    row["dissipation_32"] = diss[1]
    row["dissipation_0"] = diss[2]
    return row


def _rates(stepper: Stepper, rho_hat, m_hat) -> tuple[float, float, float]:
    varrho = SpectralField(stepper.grid, rho_hat)
    omega = velocity_perturbation(rho_hat, m_hat, stepper.ref)
    r43 = (_grad_sobolev(varrho, 4) + _grad_sobolev(omega, 3)) ** 2
    r32 = (_grad_sobolev(varrho, 3) + _grad_sobolev(omega, 2)) ** 2
    r0 = _grad_sobolev(varrho, 0) ** 2 + _grad_sobolev(omega, 0) ** 2
    return r43, r32, r0


def evolve(
    initial: State,
    reference: State,
    forcing: Forcing,
    params: ModelParams,
    config: TimeStepperConfig,
    explicit: Callable | None = None,
) -> TrajectoryRecord:
    """Integrate to ``config.t_end`` and record perturbation norms and energies.

    On an abort the exception carries the partial record as ``.record``.
    """
    stepper = Stepper(reference, forcing, params, config.scheme, explicit)
    g = initial.grid
    rho_hat = (initial.rho.hat - reference.rho.hat) * g.dealias_mask
    m_hat = (initial.m.hat - reference.m.hat) * g.dealias_mask
    series = an.NormSeries(CSV_COLUMNS)
    record = TrajectoryRecord([], series, [], {"N": [], "E": []}, 0.0)

    def snap(t, diss):
        row = _snapshot(stepper, rho_hat, m_hat, params, diss)
        series.append(t, **row)
        record.times.append(t)
        record.positivity_min.append(row["rho_min"])
        record.energy_values["N"].append(row["N"])
        record.energy_values["E"].append(row["E"])

    t = float(initial.time)
    dt = config.dt
    diss = [0.0, 0.0, 0.0]
    try:
        check_positivity(reference.rho.real + g.to_real(rho_hat), params, t)
        rates = _rates(stepper, rho_hat, m_hat)
        snap(t, diss)
        record.initial_norm = float(series.column("norm_43")[0])
        halvings = 0
        while True:
            dt_max = stepper.max_dt(rho_hat, m_hat, config.cfl_safety)
            if dt <= dt_max:
                break
            halvings += 1
            if halvings > config.max_halvings:
                raise CFLError(f"dt={dt:.4g} still above the CFL bound {dt_max:.4g}", dt, dt_max)
            dt /= 2
        t0 = t
        nsteps = int(math.ceil((config.t_end - t0) / dt - 1e-9))
        for n in range(1, nsteps + 1):
            t_next = min(t0 + n * dt, config.t_end)
            h = t_next - t
            if h <= 0:
                break
            dt_max = stepper.max_dt(rho_hat, m_hat, config.cfl_safety)
            if h > dt_max:
                raise CFLError(f"dt={h:.4g} exceeds the CFL bound {dt_max:.4g} at t={t:.4g}", h, dt_max)
            rho_hat, m_hat = stepper.step(rho_hat, m_hat, t, h)
            t = t_next
            check_positivity(reference.rho.real + g.to_real(rho_hat), params, t)
            new_rates = _rates(stepper, rho_hat, m_hat)
            diss = [d + h * (a + b) / 2 for d, a, b in zip(diss, rates, new_rates)]
            rates = new_rates
            record.steps = n
            if n % config.output_stride == 0 or n == nsteps:
                snap(t, diss)
        record.dt_used = dt
    except QNSError as err:
        record.aborted = {"error": type(err).__name__, "message": str(err), "time": t}
        err.record = record
        raise
    return record


def run_steps(
    initial: State,
    reference: State,
    forcing: Forcing,
    params: ModelParams,
    dt: float,
    nsteps: int,
    scheme: str = "imex-rk2",
    explicit: Callable | None = None,
) -> State:
    """Plain fixed-step integration without diagnostics or CFL control."""
    stepper = Stepper(reference, forcing, params, scheme, explicit)
    rho_hat = initial.rho.hat - reference.rho.hat
    m_hat = initial.m.hat - reference.m.hat
    t = initial.time
    for _ in range(nsteps):
        rho_hat, m_hat = stepper.step(rho_hat, m_hat, t, dt)
        t += dt
    out = stepper.full_state(rho_hat, m_hat)
    out.time = t
    return out
