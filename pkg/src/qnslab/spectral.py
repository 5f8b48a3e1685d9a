"""Periodic-grid spectral machinery.

Fourier convention: the forward transform is unnormalized and the inverse
carries ``1/n**dim`` (``scipy.fft`` defaults). L2 norms use the quadrature
measure ``(L/n)**dim`` in real space, so by Parseval

    ||f||^2 = (L/n)**dim / n**dim * sum |f_hat|^2 .

Fields are stored as Fourier coefficients with leading tensor axes, e.g. a
vector field on a 3D grid has ``hat.shape == (3, n, n, n)`` and a scalar
field has ``hat.shape == (n, n, n)``.
"""
from __future__ import annotations

import contextlib
import itertools
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Iterator, Sequence

import numpy as np
import scipy.fft as sfft

from .errors import MultiplierPolicyError, ShapeError

_FFT_WORKERS = 1


def set_fft_workers(workers: int) -> None:
    """Number of threads handed to scipy.fft (1 keeps results bitwise stable)."""
    global _FFT_WORKERS
    _FFT_WORKERS = max(1, int(workers))


@contextlib.contextmanager
def fft_workers(workers: int):
    previous = _FFT_WORKERS
    set_fft_workers(workers)
    try:
        yield
    finally:
        set_fft_workers(previous)


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on ``[0, box_length)**dim``."""

    dim: int
    n: int
    box_length: float = 2 * np.pi

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ShapeError(f"dim must be 1, 2 or 3, got {self.dim}")
        if self.n < 8 or self.n & (self.n - 1):
            raise ShapeError(f"n must be a power of two >= 8, got {self.n}")
        if not self.box_length > 0:
            raise ShapeError(f"box_length must be positive, got {self.box_length}")
        object.__setattr__(self, "box_length", float(self.box_length))

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def axes(self) -> tuple[int, ...]:
        return tuple(range(-self.dim, 0))

    @property
    def dx(self) -> float:
        return self.box_length / self.n

    @property
    def cell_volume(self) -> float:
        return self.dx**self.dim

    @property
    def volume(self) -> float:
        return self.box_length**self.dim

    @property
    def npoints(self) -> int:
        return self.n**self.dim

    @property
    def zero_mode(self) -> tuple[int, ...]:
        return (0,) * self.dim

    def _axis_view(self, values: np.ndarray, axis: int) -> np.ndarray:
        shape = [1] * self.dim
        shape[axis] = self.n
        return values.reshape(shape)

    @cached_property
    def integer_frequencies(self) -> np.ndarray:
        return np.fft.fftfreq(self.n, d=1.0 / self.n)

    @cached_property
    def k(self) -> tuple[np.ndarray, ...]:
        """Wavevector components, each broadcastable to ``shape``."""
        base = 2 * np.pi / self.box_length * self.integer_frequencies
        return tuple(self._axis_view(base, j) for j in range(self.dim))

    @cached_property
    def k2(self) -> np.ndarray:
        out = np.zeros(self.shape)
        for kj in self.k:
            out = out + kj**2
        return out

    @cached_property
    def kmag(self) -> np.ndarray:
        return np.sqrt(self.k2)

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        keep = np.abs(self.integer_frequencies) < self.n / 3.0
        mask = np.ones(self.shape, dtype=bool)
        for j in range(self.dim):
            mask = mask & self._axis_view(keep, j)
        return mask

    @cached_property
    def x(self) -> tuple[np.ndarray, ...]:
        """Node coordinates, each broadcastable to ``shape``."""
        base = np.arange(self.n) * self.dx
        return tuple(self._axis_view(base, j) for j in range(self.dim))

    @property
    def center(self) -> tuple[float, ...]:
        return (self.box_length / 2,) * self.dim

    def distance(self, center: Sequence[float] | None = None) -> np.ndarray:
        """Minimum-image distance ``|x - center|`` at every node."""
        c = self.center if center is None else tuple(center)
        if len(c) != self.dim:
            raise ShapeError(f"center has {len(c)} coordinates, grid has dim {self.dim}")
        half = self.box_length / 2
        r2 = np.zeros(self.shape)
        for xj, cj in zip(self.x, c):
            d = np.mod(xj - cj + half, self.box_length) - half
            r2 = r2 + d**2
        return np.sqrt(r2)

    def fft(self, values: np.ndarray) -> np.ndarray:
        return sfft.fftn(values, axes=self.axes, workers=_FFT_WORKERS)

    def ifft(self, hat: np.ndarray) -> np.ndarray:
        return sfft.ifftn(hat, axes=self.axes, workers=_FFT_WORKERS)

    def to_real(self, hat: np.ndarray) -> np.ndarray:
        return self.ifft(hat).real

    def to_hat(self, values: np.ndarray, dealias: bool = False) -> np.ndarray:
        hat = self.fft(values)
        if dealias:
            hat = hat * self.dealias_mask
        return hat


@dataclass(eq=False)
class SpectralField:
    """Tensor field of rank 0/1/2 held by its Fourier coefficients."""

    grid: Grid
    hat: np.ndarray

    def __post_init__(self):
        self.hat = np.asarray(self.hat, dtype=complex)
        g = self.grid
        if self.hat.ndim < g.dim or self.hat.shape[self.hat.ndim - g.dim:] != g.shape:
            raise ShapeError(f"coefficient shape {self.hat.shape} does not end with grid shape {g.shape}")
        lead = self.hat.shape[: self.hat.ndim - g.dim]
        if any(s != g.dim for s in lead):
            raise ShapeError(f"tensor axes {lead} must all have length dim={g.dim}")

    @classmethod
    def from_real(cls, grid: Grid, values, dealias: bool = False) -> "SpectralField":
        return cls(grid, grid.to_hat(np.asarray(values, dtype=float), dealias=dealias))

    @classmethod
    def zeros(cls, grid: Grid, rank: int = 0) -> "SpectralField":
        return cls(grid, np.zeros((grid.dim,) * rank + grid.shape, dtype=complex))

    @property
    def rank(self) -> int:
        return self.hat.ndim - self.grid.dim

    @property
    def components(self) -> int:
        return self.grid.dim**self.rank

    @property
    def real(self) -> np.ndarray:
        return self.grid.to_real(self.hat)

    def copy(self) -> "SpectralField":
        return SpectralField(self.grid, self.hat.copy())

    def __getitem__(self, index) -> "SpectralField":
        if self.rank == 0:
            raise ShapeError("cannot index a scalar field")
        return SpectralField(self.grid, self.hat[index])

    def _check_same(self, other: "SpectralField") -> None:
        if other.grid != self.grid or other.hat.shape != self.hat.shape:
            raise ShapeError("fields live on different grids or have different ranks")

    def __add__(self, other):
        self._check_same(other)
        return SpectralField(self.grid, self.hat + other.hat)

    def __sub__(self, other):
        self._check_same(other)
        return SpectralField(self.grid, self.hat - other.hat)

    def __neg__(self):
        return SpectralField(self.grid, -self.hat)

    def __mul__(self, scalar):
        if isinstance(scalar, SpectralField):
            raise TypeError("use multiply() for pseudo-spectral products")
        return SpectralField(self.grid, self.hat * scalar)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return SpectralField(self.grid, self.hat / scalar)

    def mean(self) -> np.ndarray:
        return (self.hat[(...,) + self.grid.zero_mode] / self.grid.npoints).real

    def conjugate_symmetry_defect(self) -> float:
        """max |f(-xi) - conj f(xi)| relative to max |f|; zero for real data."""
        flipped = self.hat
        for ax in self.grid.axes:
            flipped = np.roll(np.flip(flipped, axis=ax), 1, axis=ax)
        scale = np.max(np.abs(self.hat))
        if scale == 0:
            return 0.0
        return float(np.max(np.abs(flipped - np.conj(self.hat))) / scale)

    def l2_norm(self) -> float:
        return l2_norm(self)


def stack(fields: Sequence[SpectralField]) -> SpectralField:
    """Combine ``dim`` fields of equal rank into a field of rank + 1."""
    grid = fields[0].grid
    if len(fields) != grid.dim:
        raise ShapeError(f"need {grid.dim} components, got {len(fields)}")
    return SpectralField(grid, np.stack([f.hat for f in fields]))


def l2_norm(f: SpectralField) -> float:
    g = f.grid
    return math.sqrt(g.cell_volume / g.npoints * float(np.sum(np.abs(f.hat) ** 2)))


def real_l2_norm(grid: Grid, values: np.ndarray) -> float:
    return math.sqrt(grid.cell_volume * float(np.sum(np.asarray(values) ** 2)))


def dealias(f: SpectralField) -> SpectralField:
    return SpectralField(f.grid, f.hat * f.grid.dealias_mask)


def gradient(f: SpectralField) -> SpectralField:
    """Gradient; the derivative index becomes the last tensor axis."""
    g = f.grid
    if f.rank > 1:
        raise ShapeError("gradient is defined for scalar and vector fields")
    parts = [1j * kj * f.hat for kj in g.k]
    return SpectralField(g, np.stack(parts, axis=f.rank))


def divergence(v: SpectralField) -> SpectralField:
    """Contract the last tensor axis with the derivative."""
    g = v.grid
    if v.rank < 1:
        raise ShapeError("divergence needs a vector or matrix field")
    out = sum(1j * kj * v.hat[(Ellipsis, j) + (slice(None),) * g.dim] for j, kj in enumerate(g.k))
    return SpectralField(g, out)


def laplacian(f: SpectralField) -> SpectralField:
    return SpectralField(f.grid, -f.grid.k2 * f.hat)


def curl(v: SpectralField) -> SpectralField:
    """Scalar curl in 2D, vector curl in 3D."""
    g = v.grid
    if v.rank != 1 or g.dim == 1:
        raise ShapeError("curl needs a vector field in 2D or 3D")
    d = lambda comp, axis: 1j * g.k[axis] * v.hat[comp]
    if g.dim == 2:
        return SpectralField(g, d(1, 0) - d(0, 1))
    return SpectralField(g, np.stack([d(2, 1) - d(1, 2), d(0, 2) - d(2, 0), d(1, 0) - d(0, 1)]))


def _safe_inverse_k2(grid: Grid) -> np.ndarray:
    inv = np.zeros(grid.shape)
    nz = grid.k2 > 0
    inv[nz] = 1.0 / grid.k2[nz]
    return inv


def leray_decompose(v: SpectralField) -> tuple[SpectralField, SpectralField]:
    """Split ``v`` into (solenoidal, gradient) parts mode by mode.

    The potential part is ``xi xi^T / |xi|^2 v_hat``; the zero mode goes
    entirely to the solenoidal part.
    """
    g = v.grid
    if v.rank != 1:
        raise ShapeError("leray_decompose needs a vector field")
    k_dot_v = sum(kj * v.hat[j] for j, kj in enumerate(g.k))
    scaled = k_dot_v * _safe_inverse_k2(g)
    potential = np.stack([kj * scaled for kj in g.k])
    return SpectralField(g, v.hat - potential), SpectralField(g, potential)


def apply_multiplier(
    f: SpectralField,
    m: Callable[..., np.ndarray] | np.ndarray | float,
    zero_mode: str | float | None = None,
) -> SpectralField:
    """Multiply every coefficient by ``m(xi)``.

    ``m`` is either an array on the mode grid or a callable receiving the
    wavevector components. ``zero_mode`` is ``None`` (use m(0) as is, which
    must then be finite), ``"annihilate"`` or a number used at xi = 0.
    """
    g = f.grid
    with np.errstate(all="ignore"):
        values = m(*g.k) if callable(m) else m
        values = np.array(np.broadcast_to(values, g.shape), dtype=complex)
    z = g.zero_mode
    off_zero = np.ones(g.shape, dtype=bool)
    off_zero[z] = False
    if not np.all(np.isfinite(values[off_zero])):
        raise MultiplierPolicyError("multiplier is not finite away from the zero mode")
    if zero_mode is None:
        if not np.isfinite(values[z]):
            raise MultiplierPolicyError("multiplier is singular at xi = 0; pass zero_mode")
    elif zero_mode == "annihilate":
        values[z] = 0.0
    elif isinstance(zero_mode, str):
        raise MultiplierPolicyError(f"unknown zero-mode policy {zero_mode!r}")
    else:
        values[z] = zero_mode
    return SpectralField(g, values * f.hat)


def inverse_laplacian(f: SpectralField) -> SpectralField:
    """Mean-zero solution p of ``laplacian(p) = f``."""
    return SpectralField(f.grid, -f.hat * _safe_inverse_k2(f.grid))


def multiply(a: SpectralField, b: SpectralField) -> SpectralField:
    """Pseudo-spectral product of a scalar with any field, dealiased."""
    if a.rank != 0:
        a, b = b, a
    if a.rank != 0:
        raise ShapeError("one factor must be scalar")
    g = a.grid
    return SpectralField(g, g.to_hat(a.real * b.real, dealias=True))


def multinomial(counts: Sequence[int]) -> int:
    out = math.factorial(sum(counts))
    for c in counts:
        out //= math.factorial(c)
    return out


def derivative_terms(f: SpectralField, order: int) -> Iterator[tuple[int, np.ndarray]]:
    """Yield ``(multiplicity, real values of d^I f)`` over sorted multi-indices I.

    Summing ``multiplicity * value**2`` over the output reproduces the full
    ordered-index contraction ``|grad^order f|^2``.
    """
    g = f.grid
    for combo in itertools.combinations_with_replacement(range(g.dim), order):
        counts = [combo.count(j) for j in range(g.dim)]
        factor = np.ones(g.shape, dtype=complex)
        for j in combo:
            factor = factor * (1j * g.k[j])
        yield multinomial(counts), g.to_real(factor * f.hat)


def derivative_magnitude_sq(f: SpectralField, order: int) -> np.ndarray:
    """Pointwise ``sum_I |d^I f|^2`` summed over tensor components."""
    g = f.grid
    out = np.zeros(g.shape)
    lead = tuple(range(f.rank))
    for mult, vals in derivative_terms(f, order):
        out += mult * (np.sum(vals**2, axis=lead) if lead else vals**2)
    return out
