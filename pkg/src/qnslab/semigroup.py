"""Whole-space linear theory about the constant state, one radial mode at a time.

For |xi| = k the linearized system splits into the parallel block acting on
(rho_hat, M_par) and a scalar heat rate on every perpendicular momentum
component:

    A = [[0, -i k], [-i k (c^2 + hbar^2 k^2 / 4), -(nu / rho_bar) k^2]],
    perpendicular rate -(mu / rho_bar) k^2,

with nu = 2 mu + lambda and c^2 = P'(rho_bar). Norms over R^3 come from a
log-uniform radial quadrature in k, so algebraic decay from the continuous
spectrum near k = 0 is represented faithfully.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, special

from .analysis import DecayFit, NormSeries, fit_decay
from .errors import DomainError, ResolutionError
from .model import ModelParams

SERIES_SWITCH = 1e-3
JORDAN_SWITCH = 1e-8
PLANCHEREL = 4 * math.pi / (2 * math.pi) ** 3


@dataclass
class ModeState:
    """Mode amplitudes; ``m_perp`` may carry a leading component axis."""

    rho: np.ndarray
    m_par: np.ndarray
    m_perp: np.ndarray

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=complex)
        self.m_par = np.asarray(self.m_par, dtype=complex)
        self.m_perp = np.asarray(self.m_perp, dtype=complex)

    def copy(self) -> "ModeState":
        return ModeState(self.rho.copy(), self.m_par.copy(), self.m_perp.copy())

    def as_vector(self) -> np.ndarray:
        return np.concatenate([np.ravel(self.rho), np.ravel(self.m_par), np.ravel(self.m_perp)])

    def energy_density(self, params: ModelParams, k) -> np.ndarray:
        """(c^2 + hbar^2 k^2 / 4)|rho|^2 + |M|^2; non-increasing in time mode by mode."""
        stiff = params.sound_speed_sq + params.hbar**2 * np.asarray(k) ** 2 / 4
        perp = np.abs(self.m_perp) ** 2
        if perp.ndim > np.ndim(self.rho):
            perp = perp.sum(axis=0)
        return stiff * np.abs(self.rho) ** 2 + np.abs(self.m_par) ** 2 + perp

    def plain_density(self) -> np.ndarray:
        perp = np.abs(self.m_perp) ** 2
        if perp.ndim > np.ndim(self.rho):
            perp = perp.sum(axis=0)
        return np.abs(self.rho) ** 2 + np.abs(self.m_par) ** 2 + perp


@dataclass(frozen=True)
class ModeSystem:
    """Linear operator at wavenumber(s) k = |xi| > 0.

    ``hook="heat"`` replaces every component with pure diffusion at rate
    (nu / rho_bar) k^2, which has closed-form decay and serves as a sanity check.
    """

    xi_norm: np.ndarray | float
    params: ModelParams
    hook: str | None = None

    def __post_init__(self):
        k = np.asarray(self.xi_norm, dtype=float)
        if np.any(k <= 0):
            raise DomainError("xi_norm must be positive")
        if self.hook not in (None, "heat"):
            raise DomainError(f"unknown hook {self.hook!r}")
        object.__setattr__(self, "xi_norm", k)

    @property
    def k(self) -> np.ndarray:
        return self.xi_norm

    @property
    def diffusivity(self) -> float:
        return self.params.nu / self.params.rho_bar

    @property
    def stiffness(self) -> np.ndarray:
        return self.params.sound_speed_sq + self.params.hbar**2 * self.k**2 / 4

    @property
    def perpendicular_rate(self) -> np.ndarray:
        if self.hook == "heat":
            return -self.diffusivity * self.k**2
        return -self.params.mu / self.params.rho_bar * self.k**2

    def parallel_block(self) -> np.ndarray:
        k = self.k
        out = np.zeros(k.shape + (2, 2), dtype=complex)
        if self.hook == "heat":
            out[..., 0, 0] = out[..., 1, 1] = -self.diffusivity * k**2
            return out
        out[..., 0, 1] = -1j * k
        out[..., 1, 0] = -1j * k * self.stiffness
        out[..., 1, 1] = -self.diffusivity * k**2
        return out

    def dispersion(self) -> tuple[np.ndarray, np.ndarray]:
        mid, d = self._mid_and_split()
        return mid + d, mid - d

    def _mid_and_split(self) -> tuple[np.ndarray, np.ndarray]:
        k = self.k
        mid = -self.diffusivity * k**2 / 2 + 0j
        if self.hook == "heat":
            return 2 * mid, np.zeros_like(mid)
        d = np.sqrt(mid**2 - k**2 * self.stiffness + 0j)
        return mid, d

    def propagator(self, t: float) -> np.ndarray:
        """exp(t A) for the parallel block as c0 I + c1 (A - mid I)."""
        if t < 0:
            raise DomainError("t must be nonnegative")
        mid, d = self._mid_and_split()
        lam_p, lam_m = mid + d, mid - d
        e_mid = np.exp(mid * t)
        z = d * t
        small = np.abs(z) < SERIES_SWITCH
        jordan = np.abs(lam_p - lam_m) < JORDAN_SWITCH * np.maximum(np.abs(lam_p), 1e-300)
        with np.errstate(all="ignore"):
            e_p, e_m = np.exp(lam_p * t), np.exp(lam_m * t)
            c0 = (e_p + e_m) / 2
            c1 = (e_p - e_m) / (2 * d)
        z2 = z * z
        c0_series = e_mid * (1 + z2 / 2 + z2 * z2 / 24 + z2**3 / 720)
        c1_series = e_mid * t * (1 + z2 / 6 + z2 * z2 / 120 + z2**3 / 5040)
        c0 = np.where(small, c0_series, c0)
        c1 = np.where(small, c1_series, c1)
        c0 = np.where(jordan, e_mid, c0)
        c1 = np.where(jordan, e_mid * t, c1)
        a = self.parallel_block()
        shifted = a - mid[..., None, None] * np.eye(2)
        return c0[..., None, None] * np.eye(2) + c1[..., None, None] * shifted

    def propagate(self, state: ModeState, t: float) -> ModeState:
        e = self.propagator(t)
        rho = e[..., 0, 0] * state.rho + e[..., 0, 1] * state.m_par
        m_par = e[..., 1, 0] * state.rho + e[..., 1, 1] * state.m_par
        return ModeState(rho, m_par, np.exp(self.perpendicular_rate * t) * state.m_perp)


def dispersion(xi_norm, params: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    """Roots of lambda^2 + (nu/rho_bar) k^2 lambda + k^2 (c^2 + hbar^2 k^2 / 4) = 0."""
    return ModeSystem(xi_norm, params).dispersion()


def mode_propagate(system: ModeSystem, state: ModeState, t: float) -> ModeState:
    return system.propagate(state, t)


def duhamel_step(
    system: ModeSystem,
    state: ModeState,
    forcing_times: Sequence[float],
    q_par: np.ndarray,
    q_perp: np.ndarray,
    t: float,
    rule: str = "trapezoid",
) -> ModeState:
    """E(t) U0 + int_0^t E(t - tau) (0, Q(tau)) dtau with a sampled momentum forcing.

    ``q_par`` and ``q_perp`` are indexed by sample first; the samples must
    cover [0, t].
    """
    tau = np.asarray(forcing_times, dtype=float)
    if tau[0] > 0 or tau[-1] < t - 1e-14 * max(1.0, t):
        raise DomainError("forcing history must cover [0, t]")
    sel = tau <= t + 1e-14 * max(1.0, t)
    tau = tau[sel]
    qp = np.asarray(q_par, dtype=complex)[sel]
    qq = np.asarray(q_perp, dtype=complex)[sel]
    out = system.propagate(state, t)
    if len(tau) < 2:
        return out
    rho_int = np.empty(qp.shape, dtype=complex)
    par_int = np.empty(qp.shape, dtype=complex)
    perp_int = np.empty(qq.shape, dtype=complex)
    for j, tj in enumerate(tau):
        e = system.propagator(max(t - tj, 0.0))
        rho_int[j] = e[..., 0, 1] * qp[j]
        par_int[j] = e[..., 1, 1] * qp[j]
        perp_int[j] = np.exp(system.perpendicular_rate * max(t - tj, 0.0)) * qq[j]
    if rule == "trapezoid":
        quad = lambda y: integrate.trapezoid(y, tau, axis=0)
    elif rule == "simpson":
        quad = lambda y: integrate.simpson(y, x=tau, axis=0)
    else:
        raise DomainError(f"unknown quadrature rule {rule!r}")
    return ModeState(out.rho + quad(rho_int), out.m_par + quad(par_int), out.m_perp + quad(perp_int))


# radial quadrature


@dataclass
class RadialProfile:
    """Samples of a radial function on log-uniform nodes with trapezoid weights in ln k.

    ``lowk`` optionally records a power law c k^beta valid below the first
    node, used to add the part of each integral on (0, k_min) analytically.
    """

    k: np.ndarray
    weights: np.ndarray
    values: np.ndarray
    lowk: tuple[float, float] | None = None

    def __post_init__(self):
        if self.k[0] <= 0:
            raise DomainError("radial nodes must be positive")
        if np.any(self.weights <= 0):
            raise DomainError("quadrature weights must be positive")

    @staticmethod
    def nodes(k_min: float = 1e-6, k_max: float = 1e3, n: int = 4096) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = math.log10(k_min), math.log10(k_max)
        expo = lo + (hi - lo) * np.arange(n) / (n - 1)
        expo[np.abs(expo) < 1e-9] = 0.0
        k = 10.0**expo
        h = (hi - lo) / (n - 1) * math.log(10)
        w = h * k
        w[0] *= 0.5
        w[-1] *= 0.5
        return k, w

    @classmethod
    def from_function(
        cls,
        fn: Callable[[np.ndarray], np.ndarray],
        k_min: float = 1e-6,
        k_max: float = 1e3,
        n: int = 4096,
        lowk: tuple[float, float] | None = None,
    ) -> "RadialProfile":
        k, w = cls.nodes(k_min, k_max, n)
        return cls(k, w, np.asarray(fn(k), dtype=float), lowk)

    def coarsened(self) -> "RadialProfile":
        """Every other node with doubled spacing (requires odd-compatible layout)."""
        k = self.k[::2]
        h = math.log(k[1] / k[0])
        w = h * k
        w[0] *= 0.5
        w[-1] *= 0.5
        return RadialProfile(k, w, self.values[::2], self.lowk)

    def integrate(self, density: np.ndarray, power: float = 0.0, tail_rate: float | None = None) -> float:
        """int_0^inf density(k) k^power 4 pi k^2 dk / (2 pi)^3.

        With ``tail_rate`` set and a low-k power law known, the contribution of
        (0, k_min) is added as c^2 int k^(2 beta + power + 2) exp(-tail_rate k^2) dk.
        """
        k = self.k
        pw = power + 2.0
        main = float(np.sum(self.weights * density * k**pw))
        if tail_rate is not None and self.lowk is not None:
            c, beta = self.lowk
            main += c * c * _lowk_tail(2 * beta + pw, tail_rate, float(k[0]))
        return PLANCHEREL * main


def _lowk_tail(a: float, rate: float, k_min: float) -> float:
    """int_0^k_min k^a exp(-rate k^2) dk for a > -1."""
    if a <= -1:
        raise DomainError("low-k tail diverges")
    x = rate * k_min**2
    if x < 1e-6:
        return k_min ** (a + 1) / (a + 1) - rate * k_min ** (a + 3) / (a + 3)
    b = (a + 1) / 2
    return float(special.gammainc(b, x) * special.gamma(b) / (2 * rate**b))


def borderline_profile(s: float, eta: float = 0.01, **nodes) -> RadialProfile:
    """k^(s - 3/2 + eta) on k <= 1: in H^-s but not in H^(-s - 2 eta)."""
    beta = s - 1.5 + eta

    def fn(k):
        out = np.where(k < 1, k**beta, 0.0)
        # half the squared amplitude at the jump node keeps the trapezoid rule second order
        return np.where(k == 1, math.sqrt(0.5), out)

    return RadialProfile.from_function(fn, lowk=(1.0, beta), **nodes)


def p1_proxy_profile(**nodes) -> RadialProfile:
    """cos^2(pi k / 2) on k <= 1: flat at k = 0 like the transform of an L^1 function."""
    return RadialProfile.from_function(lambda k: np.where(k <= 1, np.cos(np.pi * k / 2) ** 2, 0.0), lowk=(1.0, 0.0), **nodes)


def gaussian_profile(scale: float = 1.0, **nodes) -> RadialProfile:
    return RadialProfile.from_function(lambda k: np.exp(-scale * k**2), lowk=(1.0, 0.0), **nodes)


def initial_modes(profile: RadialProfile) -> ModeState:
    """Equal amplitudes in density, parallel and one perpendicular momentum component."""
    v = profile.values.astype(complex)
    return ModeState(v.copy(), v.copy(), v.copy())


def _tail_rates(params: ModelParams, hook: str | None) -> tuple[float, float]:
    """Low-k energy damping rates of the parallel pair and the perpendicular part."""
    nu = params.nu / params.rho_bar
    if hook == "heat":
        return 2 * nu, 2 * nu
    return nu, 2 * params.mu / params.rho_bar


def _channel(profile, state: ModeState, density: np.ndarray, power: float, t: float, params, hook, tail: bool) -> float:
    if not tail or profile.lowk is None:
        return profile.integrate(density, power)
    r_par, r_perp = _tail_rates(params, hook)
    # two parallel components and one perpendicular component share the low-k law
    main = profile.integrate(density, power)
    c, beta = profile.lowk
    k0 = float(profile.k[0])
    a = 2 * beta + power + 2
    extra = c * c * (2 * _lowk_tail(a, r_par * t, k0) + _lowk_tail(a, r_perp * t, k0))
    return main + PLANCHEREL * extra


@dataclass
class LinearRun:
    """Propagated radial data sampled on a time grid."""

    times: np.ndarray
    series: NormSeries
    states: list[ModeState] = field(repr=False, default_factory=list)


def propagate_profile(
    profile: RadialProfile,
    params: ModelParams,
    t_grid: Sequence[float],
    s: float | None = None,
    hook: str | None = None,
    tail: bool = True,
    keep_states: bool = False,
    max_order: int = 1,
) -> LinearRun:
    """Norm channels of the linear solution from ``initial_modes(profile)``."""
    system = ModeSystem(profile.k, params, hook)
    u0 = initial_modes(profile)
    names = [f"grad{j}" for j in range(max_order + 1)]
    if s is not None:
        names += ["Hs_energy", "Hs_plain"]
    series = NormSeries(names)
    states = []
    k = profile.k
    for t in t_grid:
        u = system.propagate(u0, float(t))
        plain = u.plain_density()
        row = {f"grad{j}": math.sqrt(_channel(profile, u, plain, 2 * j, t, params, hook, tail)) for j in range(max_order + 1)}
        if s is not None:
            energy = u.energy_density(params, k)
            with_grad = plain + k**2 * np.abs(u.rho) ** 2
            row["Hs_energy"] = math.sqrt(_channel(profile, u, energy, -2 * s, t, params, hook, tail))
            row["Hs_plain"] = math.sqrt(_channel(profile, u, with_grad, -2 * s, t, params, hook, tail))
        series.append(float(t), **row)
        if keep_states:
            states.append(u)
    return LinearRun(np.asarray(t_grid, dtype=float), series, states)


def default_times(t_max: float = 1000.0, per_decade: int = 20) -> np.ndarray:
    decades = math.log10(t_max) + 2
    return np.concatenate([[0.0], np.geomspace(1e-2, t_max, int(round(decades * per_decade)) + 1)])


def _check_refinement(profile, params, times, s, hook, tol: float) -> float:
    fine = propagate_profile(profile, params, times, s, hook)
    coarse = propagate_profile(profile.coarsened(), params, times, s, hook)
    worst = 0.0
    for name in fine.series.columns:
        a, b = fine.series.column(name), coarse.series.column(name)
        worst = max(worst, float(np.max(np.abs(a - b) / np.maximum(np.abs(a), 1e-300))))
    if worst > tol:
        raise ResolutionError(f"quadrature refinement changed a norm by {worst:.3e} (> {tol:g})")
    return worst


def lp_lq_decay_check(
    profile: RadialProfile,
    p: float,
    q: float,
    k: int,
    params: ModelParams,
    t_grid: Sequence[float] | None = None,
    tol: float = 0.05,
    hook: str | None = None,
    refinement_tol: float = 1e-4,
) -> DecayFit:
    """Fitted decay exponent of ||grad^k U(t)||_{L^2} over the last decade of ``t_grid``."""
    if q != 2:
        raise DomainError("only q = 2 targets are supported")
    if not 1 <= p <= 2:
        raise DomainError("p must lie in [1, 2]")
    times = default_times() if t_grid is None else np.asarray(t_grid, dtype=float)
    run = propagate_profile(profile, params, times, hook=hook, max_order=k)
    _check_refinement(profile, params, times[-5:], None, hook, refinement_tol)
    t_hi = float(times[-1])
    theory = -1.5 * (1 / p - 0.5) - k / 2
    return fit_decay(run.series, f"grad{k}", (t_hi / 10, t_hi), theory, tol)


@dataclass
class HsDecayResult:
    s: float
    eta: float
    slope_grad: float
    slope_L2: float
    fit_grad: DecayFit
    fit_L2: DecayFit
    series: NormSeries
    monotone_defect: float
    plain_monotone_defect: float
    refinement_change: float

    def summary(self) -> dict:
        return {
            "s": self.s,
            "eta": self.eta,
            "slope_grad": self.slope_grad,
            "slope_L2": self.slope_L2,
            "theory_grad": -(1 + self.s) / 2,
            "theory_L2": -self.s / 2,
            "fit_grad": self.fit_grad.as_dict(),
            "fit_L2": self.fit_L2.as_dict(),
            "Hs_monotone_defect": self.monotone_defect,
            "Hs_plain_monotone_defect": self.plain_monotone_defect,
            "refinement_change": self.refinement_change,
        }


def monotone_defect(values: np.ndarray) -> float:
    """Largest increase between consecutive samples relative to the first value."""
    v = np.asarray(values, dtype=float)
    if len(v) < 2 or v[0] == 0:
        return 0.0
    return float(max(np.max(np.diff(v)), 0.0) / v[0])


def hs_negative_decay_run(
    s: float,
    params: ModelParams,
    t_grid: Sequence[float] | None = None,
    eta: float = 0.01,
    window: tuple[float, float] = (10.0, 1000.0),
    tol: float = 0.07,
    refinement_tol: float = 1e-4,
    **nodes,
) -> HsDecayResult:
    """Linear decay of borderline H^-s data, with fits against -(1+s)/2 and -s/2."""
    if not 0 <= s < 1.5:
        raise DomainError(f"s must lie in [0, 3/2), got {s}", s=s)
    times = default_times(window[1]) if t_grid is None else np.asarray(t_grid, dtype=float)
    profile = borderline_profile(s, eta, **nodes)
    run = propagate_profile(profile, params, times, s=s)
    change = _check_refinement(profile, params, times[:: max(1, len(times) // 8)], s, None, refinement_tol)
    fit_g = fit_decay(run.series, "grad1", window, -(1 + s) / 2, tol)
    fit_0 = fit_decay(run.series, "grad0", window, -s / 2, tol)
    return HsDecayResult(
        s=float(s),
        eta=float(eta),
        slope_grad=fit_g.slope,
        slope_L2=fit_0.slope,
        fit_grad=fit_g,
        fit_L2=fit_0,
        series=run.series,
        monotone_defect=monotone_defect(run.series.column("Hs_energy")),
        plain_monotone_defect=monotone_defect(run.series.column("Hs_plain")),
        refinement_change=change,
    )


def interpolation_check(profile: RadialProfile, state: ModeState, l: int, s: float, slack: float = 1e-6) -> dict:
    """||grad^l g|| <= ||grad^(l+1) g||^(1-theta) ||g||_{H^-s}^theta with theta = 1/(l+s+1).

    Evaluated with the discrete quadrature measure only, on which Holder's
    inequality holds exactly.
    """
    dens = state.plain_density()
    theta = 1.0 / (l + s + 1)
    lhs = math.sqrt(profile.integrate(dens, 2 * l))
    hi = math.sqrt(profile.integrate(dens, 2 * (l + 1)))
    neg = math.sqrt(profile.integrate(dens, -2 * s))
    rhs = hi ** (1 - theta) * neg**theta
    return {"lhs": lhs, "rhs": rhs, "theta": theta, "holds": bool(lhs <= rhs * (1 + slack))}
