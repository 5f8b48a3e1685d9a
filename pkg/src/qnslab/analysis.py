"""Norms, energy functionals, inequality probes and decay fits."""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import integrate, optimize

from . import spectral as sp
from .errors import DomainError, FitError, ResolutionWarning
from .model import ModelParams, enthalpy_coefficients
from .spectral import Grid, SpectralField

S_MAX = 1.5


def _spectral_sum(f: SpectralField, weight: np.ndarray) -> float:
    g = f.grid
    return g.cell_volume / g.npoints * float(np.sum(weight * np.abs(f.hat) ** 2))


def sobolev_norm(f: SpectralField, k: float) -> float:
    """Inhomogeneous H^k norm with multiplier (1 + |xi|^2)^k."""
    if k < 0:
        raise DomainError("use neg_sobolev_norm for negative orders")
    return math.sqrt(_spectral_sum(f, (1 + f.grid.k2) ** k))


def homogeneous_norm(f: SpectralField, k: float) -> float:
    """||grad^k f|| = || |xi|^k f_hat || (k >= 0)."""
    if k < 0:
        raise DomainError("use neg_sobolev_norm for negative orders")
    if k == 0:
        return sp.l2_norm(f)
    return math.sqrt(_spectral_sum(f, f.grid.k2**k))


def neg_sobolev_norm(f: SpectralField, s: float) -> float:
    """Torus H^{-s} norm over the nonzero modes; f must have zero mean."""
    if not 0 <= s < S_MAX:
        raise DomainError(f"s must lie in [0, {S_MAX}), got {s}")
    scale = np.max(np.abs(f.hat)) if f.hat.size else 0.0
    zero = f.hat[(...,) + f.grid.zero_mode]
    if np.any(np.abs(zero) > 1e-12 * max(scale, 1e-300)):
        raise DomainError("negative Sobolev norm needs a mean-zero field", mean=f.mean().tolist())
    w = np.zeros(f.grid.shape)
    nz = f.grid.k2 > 0
    w[nz] = f.grid.k2[nz] ** (-s)
    return math.sqrt(_spectral_sum(f, w))


def pair_norm(a: SpectralField, b: SpectralField, k: float, l: float) -> float:
    """||(a, b)||_{k,l} = ||a||_k + ||b||_l."""
    return sobolev_norm(a, k) + sobolev_norm(b, l)


def lp_norm(grid: Grid, values: np.ndarray, p: float) -> float:
    """L^p norm of the pointwise magnitude (tensor axes summed in quadrature)."""
    v = np.asarray(values, dtype=float)
    if v.ndim > grid.dim:
        v = np.sqrt(np.sum(v**2, axis=tuple(range(v.ndim - grid.dim))))
    v = np.abs(v)
    if np.isinf(p):
        return float(np.max(v))
    return float((grid.cell_volume * np.sum(v**p)) ** (1.0 / p))


def weight(grid: Grid, center=None, nu: float = 1.0) -> np.ndarray:
    return (1.0 + grid.distance(center)) ** nu


def resolution_check(f: SpectralField, order: int, tol: float = 1e-6) -> bool:
    """True when the |xi|^order-weighted energy outside the dealiased band is below tol."""
    g = f.grid
    w = g.k2**order
    total = _spectral_sum(f, w)
    if total == 0:
        return True
    outside = _spectral_sum(f, w * ~g.dealias_mask)
    ok = outside <= tol * total
    if not ok:
        warnings.warn(
            f"derivative order {order} carries {outside / total:.2e} of its energy outside the dealiased band",
            ResolutionWarning,
            stacklevel=3,
        )
    return ok


def _magnitude(f: SpectralField, order: int) -> np.ndarray:
    if order == 0:
        vals = f.real
        return np.sqrt(np.sum(vals**2, axis=tuple(range(f.rank)))) if f.rank else np.abs(vals)
    return np.sqrt(sp.derivative_magnitude_sq(f, order))


def weighted_derivative_norm(f: SpectralField, order: int, nu: float, center=None, p: float = 2) -> float:
    """||(1 + |x - c|)^nu grad^order f||_{L^p}."""
    resolution_check(f, order)
    return lp_norm(f.grid, weight(f.grid, center, nu) * _magnitude(f, order), p)


def weighted_norms(f: SpectralField, center=None, nu: float = 0.0) -> dict[str, float]:
    w = weight(f.grid, center, nu)
    mag = _magnitude(f, 0)
    return {
        "L2_weighted": lp_norm(f.grid, w * mag, 2),
        "Linf_weighted": lp_norm(f.grid, w * mag, np.inf),
    }


def _stacked_weighted(f: SpectralField, orders: Sequence[int], nu: float, center) -> float:
    w2 = weight(f.grid, center, 2 * nu)
    total = 0.0
    for o in orders:
        resolution_check(f, o)
        total += float(np.sum(w2 * _magnitude(f, o) ** 2))
    return math.sqrt(f.grid.cell_volume * total)


def i_norm(sigma: SpectralField, k: int = 4, center=None) -> float:
    """Weighted density functional I^k."""
    g = sigma.grid
    out = lp_norm(g, sigma.real, 6)
    for v in range(1, k + 1):
        out += _stacked_weighted(sigma, (v, v + 1, v + 2), v, center)
    out += weighted_derivative_norm(sigma, 0, 2, center, np.inf)
    out += weighted_derivative_norm(sigma, 1, 2, center, np.inf)
    return out


def j_norm(u: SpectralField, k: int = 5, center=None) -> float:
    """Weighted velocity functional J^k."""
    g = u.grid
    out = lp_norm(g, u.real, 6)
    for v in range(1, k + 1):
        out += weighted_derivative_norm(u, v, v - 1, center)
    for v in range(2):
        out += weighted_derivative_norm(u, v, v + 1, center, np.inf)
    out += weighted_derivative_norm(u, 2, 2, center, np.inf)
    return out


# energy functionals


@dataclass(frozen=True)
class WindowConstants:
    B0: float
    B1: float
    d1: float
    d2: float


def window_constants(params: ModelParams, samples: int = 20001) -> WindowConstants:
    """Extremes of the coefficient functions over [rho_bar/2, 3 rho_bar/2]."""
    s = np.linspace(params.rho_bar / 2, 1.5 * params.rho_bar, samples)
    dp = params.dpressure(s)
    a_tilde = s**2 / dp
    return WindowConstants(
        B0=float(min(a_tilde.min(), 1.0)),
        B1=float(max(a_tilde.max(), 1.0)),
        d1=float(np.min(4 * params.mu * s**2 / (5 * params.rho_bar * dp))),
        d2=float(np.min(dp / s)),
    )


@dataclass(frozen=True)
class EnergyWeights:
    a: tuple[float, ...]
    b: tuple[float, ...]
    alpha: tuple[float, ...]
    beta: tuple[float, ...]


def energy_weights(params: ModelParams) -> EnergyWeights:
    """a_v = 2^-v, b_v = a_v min(B0, 1) / 8; alpha, beta follow the same rule for v = 1..3."""
    b0 = min(window_constants(params).B0, 1.0)
    a = tuple(2.0**-v for v in range(4))
    b = tuple(x * b0 / 8 for x in a)
    return EnergyWeights(a, b, a[1:], b[1:])


def _coefficients(varrho: SpectralField, params: ModelParams, rho_star: SpectralField | None):
    rho = varrho.real + (params.rho_bar if rho_star is None else rho_star.real)
    _, a_hat, a_tilde = enthalpy_coefficients(rho, params)
    return a_hat, a_tilde


def _bracket_terms(varrho, omega, order: int, a_hat, a_tilde) -> float:
    g = varrho.grid
    dv = g.cell_volume
    rr = float(np.sum(sp.derivative_magnitude_sq(varrho, order)) * dv) if order else sp.l2_norm(varrho) ** 2
    grad_r = float(np.sum(a_hat * sp.derivative_magnitude_sq(varrho, order + 1)) * dv)
    om = sp.derivative_magnitude_sq(omega, order) if order else np.sum(omega.real**2, axis=0)
    return rr + grad_r + float(np.sum(a_tilde * om) * dv)


def _cross_term(varrho: SpectralField, omega: SpectralField, order: int) -> float:
    """<grad^v omega, grad^{v+1} varrho> with the extra derivative contracted against omega."""
    g = varrho.grid
    grad_hat = np.stack([1j * kj * varrho.hat for kj in g.k])
    prod = np.sum(omega.hat * np.conj(grad_hat), axis=0).real
    return g.cell_volume / g.npoints * float(np.sum(g.k2**order * prod))


def energy_bracket(
    varrho: SpectralField, omega: SpectralField, params: ModelParams, rho_star: SpectralField | None = None, order: int = 0
) -> float:
    """[grad^v varrho, grad^v omega] with the coefficient fields taken at varrho + rho*."""
    a_hat, a_tilde = _coefficients(varrho, params, rho_star)
    return _bracket_terms(varrho, omega, order, a_hat, a_tilde)


def _weighted_energy(varrho, omega, params, rho_star, orders, a, b) -> float:
    a_hat, a_tilde = _coefficients(varrho, params, rho_star)
    out = 0.0
    for v, av, bv in zip(orders, a, b):
        out += av * _bracket_terms(varrho, omega, v, a_hat, a_tilde) + bv * _cross_term(varrho, omega, v)
    return out


def energy_N(varrho, omega, params: ModelParams, rho_star=None, weights: EnergyWeights | None = None) -> float:
    w = weights or energy_weights(params)
    return _weighted_energy(varrho, omega, params, rho_star, range(4), w.a, w.b)


def energy_E(varrho, omega, params: ModelParams, rho_star=None, weights: EnergyWeights | None = None) -> float:
    w = weights or energy_weights(params)
    return _weighted_energy(varrho, omega, params, rho_star, range(1, 4), w.alpha, w.beta)


def equivalence_bounds(varrho, omega, params: ModelParams, rho_star=None) -> tuple[float, float, float]:
    """(lower, N, upper) with lower = (a_3/4) B0 ||.||^2_{4,3} and upper = 2 a_0 B1 ||.||^2_{4,3}."""
    wc = window_constants(params)
    w = energy_weights(params)
    n2 = pair_norm(varrho, omega, 4, 3) ** 2
    return w.a[3] / 4 * wc.B0 * n2, energy_N(varrho, omega, params, rho_star, w), 2 * w.a[0] * wc.B1 * n2


# inequality probes


def gn_theta(alpha: float, m: float, l: float, p: float, dim: int = 3) -> float:
    """Interpolation exponent from 1/p - alpha/d = (1/2 - m/d)(1 - theta) + (1/2 - l/d) theta."""
    if m == l:
        raise DomainError("m and l must differ")
    if not (0 <= m <= l and 0 <= alpha <= l) and not (0 <= l <= m and 0 <= alpha <= m):
        raise DomainError("orders must satisfy 0 <= m, alpha <= l")
    theta = (1 / p - alpha / dim - 0.5 + m / dim) / ((m - l) / dim)
    if not -1e-12 <= theta <= 1 + 1e-12:
        raise DomainError(f"exponent relation gives theta={theta:.6g} outside [0, 1]")
    return float(min(max(theta, 0.0), 1.0))


def gn_probe(f: SpectralField, alpha: int, m: int, l: int, p: float) -> dict[str, float]:
    """Both sides of ||grad^alpha f||_p <= ||grad^m f||^(1-theta) ||grad^l f||^theta."""
    theta = gn_theta(alpha, m, l, p, f.grid.dim)
    lhs = lp_norm(f.grid, _magnitude(f, alpha), p)
    rhs = homogeneous_norm(f, m) ** (1 - theta) * homogeneous_norm(f, l) ** theta
    return {"theta": theta, "lhs": lhs, "rhs_product": rhs, "ratio": lhs / rhs if rhs > 0 else 0.0}


def conv_constant(r1: float, r2: float) -> float:
    return 2.0 ** (r2 + 1) / (r1 - 1)


def conv_ineq_probe(r1: float, r2: float, t: float) -> dict[str, float]:
    """int_0^t (1 + t - tau)^-r1 (1 + tau)^-r2 dtau against C1 (1 + t)^-r2."""
    if not r1 > 1:
        raise DomainError(f"r1 must exceed 1, got {r1}")
    if not 0 <= r2 <= r1:
        raise DomainError(f"r2 must lie in [0, r1], got {r2}")
    if t < 0:
        raise DomainError("t must be nonnegative")
    fn = lambda tau: (1 + t - tau) ** (-r1) * (1 + tau) ** (-r2)
    val, err = integrate.quad(fn, 0.0, t, points=[t / 2] if t > 0 else None, limit=200, epsabs=1e-13, epsrel=1e-12)
    c1 = conv_constant(r1, r2)
    bound = c1 * (1 + t) ** (-r2)
    return {"integral": val, "error": err, "C1": c1, "bound": bound, "holds": bool(val <= bound)}


def _gaussian_hat(xi: np.ndarray, width: float) -> np.ndarray:
    # g(x) = exp(-|x|^2 / w^2) in 3D with the exp(-2 pi i x . xi) transform
    return (math.pi * width**2) ** 1.5 * np.exp(-((math.pi * width * xi) ** 2))


def riesz_probe(s: float, p: float, width: float = 1.0, n_r: int = 400) -> dict[str, float]:
    """||Lambda^-s g||_q / ||g||_p for a 3D gaussian, 1/q + s/3 = 1/p.

    Lambda^-s g is reconstructed radially with an oscillatory quadrature; the
    r^(s-3) far tail is added analytically.
    """
    if not 0 < s < 2:
        raise DomainError("s must lie in (0, 2)")
    inv_q = 1 / p - s / 3
    if not (1 < p and 0 < inv_q < 1 / p):
        raise DomainError("need 1 < p < q < infinity with 1/q + s/3 = 1/p")
    q = 1 / inv_q

    def potential(r: float) -> float:
        def fn(xi):
            # xi^(1-s) sin(2 pi r xi) vanishes at the origin for s < 2
            return xi ** (1 - s) * _gaussian_hat(np.asarray(xi), width) if xi > 0 else 0.0

        cut = 8.0 / (math.pi * width)
        val, _ = integrate.quad(fn, 0.0, cut, weight="sin", wvar=2 * math.pi * r, limit=400)
        return 2.0 / r * val

    r = np.geomspace(1e-3 * width, 60 * width, n_r)
    vals = np.array([potential(ri) for ri in r])
    lq = integrate.trapezoid(4 * math.pi * r**2 * np.abs(vals) ** q, r)
    amp = abs(vals[-1]) * r[-1] ** (3 - s)
    expo = q * (s - 3) + 2
    lq += 4 * math.pi * amp**q * r[-1] ** (expo + 1) / -(expo + 1)
    lq = lq ** (1 / q)
    gp = (4 * math.pi * integrate.quad(lambda x: x**2 * math.exp(-p * x**2 / width**2), 0, np.inf)[0]) ** (1 / p)
    return {"q": q, "riesz_Lq": lq, "Lp": gp, "ratio": lq / gp}


# series and fits


class NormSeries:
    """Time series of named nonnegative channels."""

    def __init__(self, columns: Sequence[str] = ()):
        if len(set(columns)) != len(columns):
            raise DomainError("column names must be unique")
        self.times: list[float] = []
        self.columns: dict[str, list[float]] = {c: [] for c in columns}

    def __len__(self):
        return len(self.times)

    def append(self, t: float, **values: float) -> None:
        if self.times and not t > self.times[-1]:
            raise DomainError(f"times must increase strictly ({t} after {self.times[-1]})")
        if not self.columns:
            self.columns = {c: [] for c in values}
        if set(values) != set(self.columns):
            raise DomainError(f"expected channels {sorted(self.columns)}, got {sorted(values)}")
        for name, v in values.items():
            if not (math.isfinite(v) and v >= 0):
                raise DomainError(f"channel {name} got inadmissible value {v}")
        self.times.append(float(t))
        for name in self.columns:
            self.columns[name].append(float(values[name]))

    def column(self, name: str) -> np.ndarray:
        return np.asarray(self.columns[name])

    @property
    def t(self) -> np.ndarray:
        return np.asarray(self.times)

    def to_csv(self, path, header: Sequence[str] = ()) -> None:
        with open(path, "w", newline="") as fh:
            for line in header:
                fh.write(f"# {line}\n")
            w = csv.writer(fh, lineterminator="\n")
            names = list(self.columns)
            w.writerow(["t"] + names)
            for i, t in enumerate(self.times):
                w.writerow([repr(t)] + [repr(self.columns[c][i]) for c in names])

    @classmethod
    def from_arrays(cls, times, **columns) -> "NormSeries":
        out = cls(list(columns))
        for i, t in enumerate(times):
            out.append(float(t), **{k: float(v[i]) for k, v in columns.items()})
        return out


@dataclass
class DecayFit:
    channel: str
    window: tuple[float, float]
    slope: float
    intercept: float
    rms_residual: float
    theory_slope: float
    tolerance: float
    verdict: bool
    samples: int
    bootstrap_max: float = 0.0
    bootstrap_nondecreasing: bool = True

    def as_dict(self) -> dict:
        return {
            "channel": self.channel,
            "window": list(self.window),
            "slope": self.slope,
            "intercept": self.intercept,
            "rms_residual": self.rms_residual,
            "theory_slope": self.theory_slope,
            "tolerance": self.tolerance,
            "verdict": self.verdict,
            "samples": self.samples,
            "bootstrap_max": self.bootstrap_max,
            "bootstrap_nondecreasing": self.bootstrap_nondecreasing,
        }


def fit_decay(
    series: NormSeries,
    channel: str,
    window: tuple[float, float],
    theory_slope: float,
    tol: float = 0.07,
    min_samples: int = 20,
) -> DecayFit:
    """Least-squares slope of log(value) against log(1 + t) inside the window."""
    lo, hi = window
    if not (lo > 0 and hi / lo >= 10 - 1e-12):
        raise FitError(f"window {window} spans less than a decade")
    t = series.t
    v = series.column(channel)
    sel = (t >= lo * (1 - 1e-12)) & (t <= hi * (1 + 1e-12))
    if sel.sum() < min_samples:
        raise FitError(f"window holds {int(sel.sum())} samples, need {min_samples}")
    if np.any(v[sel] <= 0):
        raise FitError(f"channel {channel} has nonpositive values in the window")
    x = np.log1p(t[sel])
    y = np.log(v[sel])
    slope, intercept = np.polyfit(x, y, 1)
    rms = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    boot = np.maximum.accumulate((1 + t[sel]) ** (-2 * theory_slope) * v[sel] ** 2)
    return DecayFit(
        channel=channel,
        window=(float(lo), float(hi)),
        slope=float(slope),
        intercept=float(intercept),
        rms_residual=rms,
        theory_slope=float(theory_slope),
        tolerance=float(tol),
        verdict=bool(abs(slope - theory_slope) <= tol),
        samples=int(sel.sum()),
        bootstrap_max=float(boot[-1]),
        bootstrap_nondecreasing=bool(np.all(np.diff(boot) >= 0)),
    )


def lyapunov_constants(
    energy: Sequence[float],
    dissipation_high: Sequence[float],
    dissipation_low: Sequence[float],
    c_max: float = 1e6,
) -> dict[str, float]:
    """Largest C1 (and a C <= c_max) keeping E + C1 D_high - C D_low non-increasing.

    D_high and D_low are the running time integrals of the two dissipation
    rates. Solved as a linear program over consecutive snapshots.
    """
    e = np.diff(np.asarray(energy, dtype=float))
    dh = np.diff(np.asarray(dissipation_high, dtype=float))
    dl = np.diff(np.asarray(dissipation_low, dtype=float))
    a_ub = np.column_stack([dh, -dl])
    res = optimize.linprog(
        c=[-1.0, 1e-9],
        A_ub=a_ub,
        b_ub=-e,
        bounds=[(0, 1e3), (0, c_max)],
        method="highs",
    )
    if res.status != 0:
        return {"feasible": False, "C1": 0.0, "C": float("nan")}
    c1, c = res.x
    return {"feasible": bool(c1 > 0), "C1": float(c1), "C": float(c)}
