"""Brute-force references for the spectral solvers.

Everything here is assembled from periodic second-order finite differences
and dense linear algebra, sharing no operator code with the spectral path.
Intended for 1D/2D grids small enough to factor densely.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ConditioningError, DomainError
from .model import ModelParams

MAX_UNKNOWNS = 4096
COND_LIMIT = 1e12


@dataclass
class DenseSystem:
    matrix: np.ndarray
    rhs: np.ndarray
    n: int
    dim: int

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]


def _d1(n: int, h: float) -> np.ndarray:
    d = np.zeros((n, n))
    i = np.arange(n)
    d[i, (i + 1) % n] = 1 / (2 * h)
    d[i, (i - 1) % n] = -1 / (2 * h)
    return d


def _d2(n: int, h: float) -> np.ndarray:
    d = -2 * np.eye(n) / h**2
    i = np.arange(n)
    d[i, (i + 1) % n] += 1 / h**2
    d[i, (i - 1) % n] += 1 / h**2
    return d


def fd_operators(n: int, box_length: float, dim: int) -> tuple[list[np.ndarray], list[list[np.ndarray]]]:
    """Dense first and second derivative matrices on the flattened periodic grid."""
    h = box_length / n
    eye = np.eye(n)
    d1, d2 = _d1(n, h), _d2(n, h)

    def along(op, axis):
        mats = [op if a == axis else eye for a in range(dim)]
        out = mats[0]
        for m in mats[1:]:
            out = np.kron(out, m)
        return out

    first = [along(d1, a) for a in range(dim)]
    second = [[along(d2, a) if a == b else first[a] @ first[b] for b in range(dim)] for a in range(dim)]
    return first, second


def _checkerboards(n: int, dim: int) -> list[np.ndarray]:
    """Constant and sign-alternating grid modes, all in the kernel of the centered gradient."""
    alt = (-1.0) ** np.arange(n)
    modes = []
    for bits in range(2 ** dim):
        axes = [alt if bits >> a & 1 else np.ones(n) for a in range(dim)]
        v = axes[0]
        for w in axes[1:]:
            v = np.kron(v, w)
        if n % 2 == 0 or bits == 0:
            modes.append(v)
    return modes


def _frozen_rhs(sigma_t, u_t, G, F, params: ModelParams, first, second):
    """Frozen-coefficient data (g, b, f) evaluated with finite differences."""
    dim = len(first)
    s = sigma_t.ravel()
    u = [u_t[i].ravel() for i in range(dim)]
    rho = params.rho_bar + s
    grad_s = np.array([D @ s for D in first])
    hess_s = np.array([[second[a][b] @ s for b in range(dim)] for a in range(dim)])
    lap_s = np.trace(hess_s)
    conv = np.array([sum(u[j] * (first[j] @ u[i]) for j in range(dim)) for i in range(dim)])
    gsq = np.sum(grad_s**2, axis=0)
    hess_grad = np.einsum("j...,ji...->i...", grad_s, hess_s)
    quantum = gsq * grad_s / rho**2 - grad_s * lap_s / rho - hess_grad / rho
    dp = params.gamma * rho ** (params.gamma - 1)
    Gv = G.ravel()
    Fv = np.array([F[i].ravel() for i in range(dim)])
    f = -rho * conv + rho * Fv - np.array(u) * Gv - (dp - params.sound_speed_sq) * grad_s + params.hbar**2 / 4 * quantum
    return Gv / rho, np.array(u) / rho, f


def assemble_stationary(sigma_tilde, u_tilde, G, F, params: ModelParams, box_length: float) -> DenseSystem:
    """Bordered dense system for the linearized stationary equations.

    Unknowns are (sigma, u_1..u_d) on the grid plus multipliers that pin the
    block means to zero and absorb the means of their equations. The centered
    gradient also annihilates the grid checkerboards, so sigma carries extra
    multipliers for those modes.
    """
    G = np.asarray(G, dtype=float)
    dim, n = G.ndim, G.shape[0]
    if dim not in (1, 2):
        raise DomainError("dense oracle supports 1D and 2D grids only")
    npts = n**dim
    null = _checkerboards(n, dim)
    extra = dim + len(null)
    size = (dim + 1) * npts + extra
    if (dim + 1) * npts > MAX_UNKNOWNS:
        raise DomainError(f"{(dim + 1) * npts} unknowns exceed the dense limit {MAX_UNKNOWNS}")
    sigma_tilde = np.zeros_like(G) if sigma_tilde is None else np.asarray(sigma_tilde, dtype=float)
    u_tilde = np.zeros((dim,) + G.shape) if u_tilde is None else np.asarray(u_tilde, dtype=float)
    if np.max(np.abs(sigma_tilde)) >= params.rho_bar / 2:
        raise DomainError("frozen density perturbation must stay below rho_bar/2")
    first, second = fd_operators(n, box_length, dim)
    g, b, f = _frozen_rhs(sigma_tilde, u_tilde, G, np.asarray(F, dtype=float), params, first, second)
    lap = sum(second[a][a] for a in range(dim))
    mu, lam = params.mu, params.lam
    c2, q = params.sound_speed_sq, params.hbar**2 / 4

    A = np.zeros((size, size))
    rhs = np.zeros(size)
    blk = lambda i: slice(i * npts, (i + 1) * npts)
    # continuity: div u + b . grad sigma = g
    A[blk(0), blk(0)] = sum(b[j][:, None] * first[j] for j in range(dim))
    for j in range(dim):
        A[blk(0), blk(j + 1)] = first[j]
    rhs[blk(0)] = g
    # momentum: -mu lap u - (mu+lam) grad div u + c^2 grad sigma - q grad lap sigma = f
    for i in range(dim):
        A[blk(i + 1), blk(0)] = c2 * first[i] - q * first[i] @ lap
        for j in range(dim):
            block = -(mu + lam) * second[i][j]
            if i == j:
                block = block - mu * lap
            A[blk(i + 1), blk(j + 1)] = block
        rhs[blk(i + 1)] = f[i]
    borders = [(0, v) for v in null] + [(i + 1, np.ones(npts)) for i in range(dim)]
    for c, (i, v) in enumerate(borders):
        col = (dim + 1) * npts + c
        A[blk(i), col] = v
        A[col, blk(i)] = v
    return DenseSystem(A, rhs, n, dim)


def dense_stationary_solve(
    forcing_G,
    forcing_F,
    params: ModelParams,
    box_length: float,
    sigma_tilde=None,
    u_tilde=None,
) -> tuple[np.ndarray, np.ndarray]:
    """Direct solve of the frozen-coefficient stationary system; returns nodal (sigma, u)."""
    G = np.asarray(forcing_G, dtype=float)
    system = assemble_stationary(sigma_tilde, u_tilde, G, forcing_F, params, box_length)
    cond = np.linalg.cond(system.matrix)
    if not cond <= COND_LIMIT:
        raise ConditioningError(f"dense system condition number {cond:.3e} exceeds {COND_LIMIT:g}")
    x = scipy.linalg.solve(system.matrix, system.rhs)
    res = np.linalg.norm(system.matrix @ x - system.rhs)
    if res > 1e-10 * max(np.linalg.norm(system.rhs), 1e-300):
        raise ConditioningError(f"dense solve residual {res:.3e} too large")
    npts = G.size
    sigma = x[:npts].reshape(G.shape)
    u = np.stack([x[(i + 1) * npts : (i + 2) * npts].reshape(G.shape) for i in range(G.ndim)])
    return sigma, u


def expm_2x2(block, t: float) -> np.ndarray:
    """exp(t A) for a 2x2 matrix via its eigen-decomposition, Jordan form when defective."""
    if t < 0:
        raise DomainError("t must be nonnegative")
    A = np.asarray(block, dtype=complex)
    if t == 0:
        return np.eye(2, dtype=complex)
    tr = A[0, 0] + A[1, 1]
    det = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
    disc = np.sqrt(tr**2 / 4 - det)
    scale = max(abs(tr), np.max(np.abs(A)), 1e-300)
    if abs(disc) <= 1e-7 * scale:
        lam = tr / 2
        return np.exp(lam * t) * (np.eye(2) + t * (A - lam * np.eye(2)))
    w, v = np.linalg.eig(A)
    return v @ np.diag(np.exp(w * t)) @ np.linalg.inv(v)
