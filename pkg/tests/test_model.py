import math

import numpy as np
import pytest

from qnslab import spectral as sp
from qnslab.errors import DomainError, PositivityError, ShapeError
from qnslab.model import (
    Forcing,
    ModelParams,
    State,
    bohm_force,
    check_positivity,
    compute_Q,
    energy_budget,
    enthalpy_coefficients,
    linear_momentum_part,
    make_forcing,
    momentum_rhs,
    nonlinear_rhs,
    pressure_derivative,
)
from qnslab.spectral import Grid, SpectralField

from conftest import sine, smooth_field


def test_params_validation():
    with pytest.raises(DomainError):
        ModelParams(mu=0)
    with pytest.raises(DomainError):
        ModelParams(mu=1, lam=-1)
    with pytest.raises(DomainError):
        ModelParams(hbar=0)
    with pytest.raises(DomainError):
        ModelParams(gamma=0.5)
    assert ModelParams().rho_floor == 0.25
    assert ModelParams(mu=1, lam=0.5).nu == 2.5


def test_enthalpy_coefficients_normalized():
    A, Ah, At = enthalpy_coefficients(np.ones(4), ModelParams())
    assert np.allclose([A, Ah, At], 1.0)


def test_enthalpy_tilde_at_upper_window():
    _, _, At = enthalpy_coefficients(np.full(3, 1.5), ModelParams())
    assert np.allclose(At, 9 / 4)


def test_enthalpy_gamma_two():
    p = ModelParams(gamma=2.0)
    assert np.allclose(pressure_derivative(np.ones(2), p), 2.0)
    A, Ah, At = enthalpy_coefficients(np.ones(2), p)
    assert np.allclose(A, 2.0) and np.allclose(Ah, 0.5) and np.allclose(At, 0.5)


def test_window_violation_carries_range():
    with pytest.raises(DomainError) as info:
        pressure_derivative(np.array([0.4, 1.0, 1.2]), ModelParams())
    assert info.value.info["rho_min"] == pytest.approx(0.4)
    assert info.value.info["rho_max"] == pytest.approx(1.2)


def test_positivity_floor():
    p = ModelParams()
    assert check_positivity(np.array([0.5, 1.0]), p) == 0.5
    with pytest.raises(PositivityError) as info:
        check_positivity(np.array([0.2, 1.0]), p, time=3.0)
    assert info.value.info["time"] == 3.0


def test_bohm_constant_density_vanishes():
    g = Grid(2, 16)
    rho = SpectralField.from_real(g, np.full(g.shape, 1.3))
    assert np.max(np.abs(bohm_force(rho, ModelParams()).real)) < 1e-13


def test_bohm_two_paths_agree():
    g = Grid(1, 64, 2 * math.pi)
    rho = SpectralField.from_real(g, 2 + sine(g))
    p = ModelParams(rho_bar=2.0)
    a = bohm_force(rho, p, "expanded")
    b = bohm_force(rho, p, "sqrt")
    assert sp.l2_norm(a - b) <= 1e-8 * sp.l2_norm(a)


def test_bohm_linearization():
    g = Grid(2, 32, 2 * math.pi)
    p = ModelParams(hbar=1.3)
    sigma = SpectralField.from_real(g, sine(g, 0) * np.cos(np.broadcast_arrays(*g.x)[1]))
    eps = 1e-6
    rho = SpectralField.from_real(g, 1 + eps * sigma.real)
    lin = sp.gradient(sp.laplacian(sigma)) * (p.hbar**2 / 4 * eps)
    err = sp.l2_norm(bohm_force(rho, p) - lin)
    assert err <= 10 * eps**2 * sp.l2_norm(lin) / eps


def test_bohm_positivity_error():
    g = Grid(1, 16)
    rho = SpectralField.from_real(g, np.full(g.shape, 0.1))
    with pytest.raises(PositivityError):
        bohm_force(rho, ModelParams())


def test_rhs_vanishes_at_equilibrium():
    g = Grid(3, 16)
    p = ModelParams()
    drho, dm = nonlinear_rhs(State.constant(g, p), Forcing.zero(g), p)
    assert np.max(np.abs(drho.hat)) < 1e-12 and np.max(np.abs(dm.hat)) < 1e-12


def test_rhs_manufactured_forcing(rng):
    g = Grid(2, 32, 2 * math.pi)
    p = ModelParams(lam=0.3)
    rho = SpectralField.from_real(g, 1 + smooth_field(g, rng, scale=0.1).real, dealias=True)
    u = smooth_field(g, rng, 1, scale=0.05)
    state = State.from_primitive(rho, u)
    G = sp.divergence(state.m)
    zero = momentum_rhs(state.rho, state.m, SpectralField.zeros(g, 1), p)
    # F cancelling the momentum right-hand side; the rho F product is dealiased, so pick F with rho F band-limited
    F = SpectralField.from_real(g, -zero.real / rho.real)
    drho, dm = nonlinear_rhs(state, Forcing(G, F), p)
    assert sp.l2_norm(drho) < 1e-14
    assert sp.l2_norm(dm) < 1e-3 * sp.l2_norm(zero)


def test_rhs_positivity_propagates():
    g = Grid(1, 16)
    p = ModelParams()
    rho = SpectralField.from_real(g, np.full(g.shape, 0.1))
    with pytest.raises(PositivityError):
        nonlinear_rhs(State(rho, SpectralField.zeros(g, 1)), Forcing.zero(g), p)


def test_Q_vanishes_for_trivial_data():
    g = Grid(2, 16)
    p = ModelParams()
    ref = State.constant(g, p)
    Q = compute_Q(SpectralField.zeros(g), SpectralField.zeros(g, 1), ref.rho, ref.m, Forcing.zero(g), p)
    assert np.max(np.abs(Q.hat)) < 1e-12


def test_Q_identity_random_state(rng):
    g = Grid(3, 16, 2 * math.pi)
    p = ModelParams(lam=0.2, hbar=0.8)
    rho_s = SpectralField.from_real(g, 1 + smooth_field(g, rng, scale=0.05).real, dealias=True)
    m_s = smooth_field(g, rng, 1, scale=0.05)
    vr, M = smooth_field(g, rng, scale=0.01), smooth_field(g, rng, 1, scale=0.01)
    forcing = Forcing(smooth_field(g, rng, scale=1e-3), smooth_field(g, rng, 1, scale=1e-3))
    Q = compute_Q(vr, M, rho_s, m_s, forcing, p)
    full = momentum_rhs(rho_s + vr, m_s + M, forcing.F, p)
    star = momentum_rhs(rho_s, m_s, forcing.F, p)
    lin = linear_momentum_part(vr, M, p)
    assert sp.l2_norm(full - star - lin - Q) <= 1e-10 * sp.l2_norm(full - star)


def test_Q_scaling_about_constant_state(rng):
    """About (rho_bar, 0) with zero forcing, Q is purely quadratic in the perturbation."""
    g = Grid(2, 32, 2 * math.pi)
    p = ModelParams()
    ref = State.constant(g, p)
    vr0, M0 = smooth_field(g, rng), smooth_field(g, rng, 1)
    norms = []
    for eps in (1e-2, 1e-3, 1e-4):
        Q = compute_Q(vr0 * eps, M0 * eps, ref.rho, ref.m, Forcing.zero(g), p)
        norms.append(sp.l2_norm(Q))
    ratios = np.array(norms[:-1]) / np.array(norms[1:])
    assert np.allclose(ratios, 100, rtol=0.05)


def test_forcing_generators_have_zero_mean():
    g = Grid(3, 16, 20.0)
    for kind in ("gaussian-bump", "dipole-divergence"):
        f = make_forcing(g, kind, amplitude=1e-3, width=3.0)
        assert abs(f.G.mean()) < 1e-18
        assert np.max(np.abs(f.F.mean())) < 1e-18
        assert f.decomposition_defect() < 1e-14


def test_forcing_is_linear_in_amplitude():
    g = Grid(2, 32, 20.0)
    a = make_forcing(g, amplitude=1e-3)
    b = make_forcing(g, amplitude=2e-3)
    assert np.allclose(b.G.hat, 2 * a.G.hat) and np.allclose(b.F.hat, 2 * a.F.hat)


def test_forcing_errors():
    g = Grid(2, 16)
    with pytest.raises(DomainError):
        make_forcing(g, "bogus")
    with pytest.raises(DomainError):
        make_forcing(g, "custom-table", table={"G": np.zeros(g.shape)})
    with pytest.raises(ShapeError):
        Forcing(SpectralField.zeros(g, 1), SpectralField.zeros(g, 1))


def test_custom_table_forcing():
    g = Grid(2, 16)
    G = np.cos(np.broadcast_arrays(*g.x)[0])
    F = np.zeros((2,) + g.shape)
    f = make_forcing(g, "custom-table", table={"G": G, "F": F})
    assert np.allclose(f.G.real, G)


def test_energy_budget_constant_state():
    g = Grid(2, 16)
    p = ModelParams()
    e = energy_budget(State.constant(g, p), p)
    assert e["total"] == pytest.approx(0.0, abs=1e-12)
