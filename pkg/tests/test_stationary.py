import math

import numpy as np
import pytest
from numpy.polynomial import hermite_e

from qnslab import spectral as sp
from qnslab import stationary as st
from qnslab.errors import CompatibilityError, ContractionError, ConvergenceError, DomainError, HypothesisWarning
from qnslab.model import Forcing, ModelParams, State, make_forcing
from qnslab.spectral import Grid, SpectralField

from conftest import smooth_field, zero_mean


def _rel_h2(a, b, ref_s, ref_u):
    return (st.h2_norm(a[0] - ref_s) + st.h2_norm(a[1] - ref_u)) / (st.h2_norm(ref_s) + st.h2_norm(ref_u))


def _pair(g, rng, seed_scale=1.0):
    sigma = zero_mean(smooth_field(g, rng, scale=0.02 * seed_scale))
    u = zero_mean(smooth_field(g, rng, 1, scale=0.01 * seed_scale))
    return sigma, u


def test_zero_data_gives_zero_solution():
    g = Grid(2, 16)
    p = ModelParams()
    s, u = st.solve_linearized(SpectralField.zeros(g), SpectralField.zeros(g, 1), Forcing.zero(g), p)
    assert np.max(np.abs(s.hat)) == 0 and np.max(np.abs(u.hat)) == 0


@pytest.mark.parametrize("dim,n", [(1, 64), (2, 32), (3, 16)])
def test_manufactured_fixed_point(rng, dim, n):
    g = Grid(dim, n, 2 * math.pi)
    p = ModelParams(lam=0.5, hbar=0.7)
    sigma, u = _pair(g, rng)
    forcing = st.manufactured_forcing(sigma, u, p)
    out = st.solve_linearized(sigma, u, forcing, p)
    assert _rel_h2(out, None, sigma, u) <= 1e-8


def test_manufactured_with_distinct_frozen_fields(rng):
    g = Grid(2, 32, 2 * math.pi)
    p = ModelParams()
    sigma, u = _pair(g, rng)
    st_, ut = _pair(g, rng, 3.0)
    forcing = st.manufactured_forcing(sigma, u, p, st_, ut)
    out = st.solve_linearized(st_, ut, forcing, p)
    assert _rel_h2(out, None, sigma, u) <= 1e-8
    cont, mom = st.linearized_defect(out[0], out[1], st_, ut, forcing, p)
    assert cont < 1e-12 and mom < 1e-12


def test_small_hbar_limit(rng):
    g = Grid(2, 32, 2 * math.pi)
    p = ModelParams(hbar=1e-8)
    forcing = Forcing(zero_mean(smooth_field(g, rng, scale=1e-3)), zero_mean(smooth_field(g, rng, 1, scale=1e-3)))
    s, _ = st.solve_linearized(SpectralField.zeros(g), SpectralField.zeros(g, 1), forcing, p)
    # frozen state at rest: R = g, Psi = -i xi . f / |xi|^2, and sigma -> Psi + nu R
    f_hat = sp.dealias(forcing.F * p.rho_bar).hat
    psi = -1j * sum(kj * f_hat[j] for j, kj in enumerate(g.k)) * sp._safe_inverse_k2(g)
    expect = psi + p.nu * sp.dealias(forcing.G).hat
    expect[g.zero_mode] = 0
    assert np.max(np.abs(s.hat - expect)) <= 1e-12 * np.max(np.abs(expect))


def test_inner_loop_non_convergence(rng):
    g = Grid(2, 32, 2 * math.pi)
    p = ModelParams()
    sigma, u = _pair(g, rng, 5.0)
    forcing = st.manufactured_forcing(sigma, u, p)
    with pytest.raises(ConvergenceError) as info:
        st.solve_linearized(sigma, u, forcing, p, max_inner=2, sigma_guess=SpectralField.zeros(g))
    assert info.value.iterations == 2


def test_compatibility_error():
    g = Grid(2, 16, 2 * math.pi)
    p = ModelParams()
    G = SpectralField.from_real(g, np.full(g.shape, 1e-3))
    with pytest.raises(CompatibilityError) as info:
        st.solve_linearized(SpectralField.zeros(g), SpectralField.zeros(g, 1), Forcing(G, SpectralField.zeros(g, 1)), p)
    assert info.value.defect == pytest.approx(1e-3)


def test_frozen_density_window(rng):
    g = Grid(1, 16)
    big = SpectralField.from_real(g, np.full(g.shape, 0.6))
    with pytest.raises(DomainError):
        st.solve_linearized(big, SpectralField.zeros(g, 1), Forcing.zero(g), ModelParams())


def test_fixed_point_zero_forcing():
    g = Grid(2, 16)
    sol = st.fixed_point(Forcing.zero(g), ModelParams())
    assert sol.iterations == 1
    assert np.max(np.abs(sol.sigma_star.hat)) == 0 and np.max(np.abs(sol.u_star.hat)) == 0
    assert sol.residual == 0


@pytest.fixture(scope="module")
def bump_runs():
    g = Grid(2, 64, 20.0)
    p = ModelParams()
    out = {}
    for a in (1e-3, 1e-4):
        f = make_forcing(g, "gaussian-bump", amplitude=a, width=2.0)
        out[a] = (f, st.fixed_point(f, p, smallness="ignore"))
    return p, out


def test_bump_contracts_and_solves(bump_runs):
    p, runs = bump_runs
    for a, (f, sol) in runs.items():
        assert all(r < 1 for r in sol.contraction_ratios)
        assert sol.residual_continuity + sol.residual_momentum <= 1e-7 * a
        res = st.stationary_residual(sol, f, p)
        assert res == (sol.residual_continuity, sol.residual_momentum)


def test_bump_solution_scales_linearly(bump_runs):
    _, runs = bump_runs
    big, small = runs[1e-3][1], runs[1e-4][1]
    ratio = (st.h2_norm(big.sigma_star) + st.h2_norm(big.u_star)) / (st.h2_norm(small.sigma_star) + st.h2_norm(small.u_star))
    assert ratio == pytest.approx(10.0, rel=0.1)


def test_bump_history_records(bump_runs):
    _, runs = bump_runs
    sol = runs[1e-3][1]
    assert len(sol.history) == sol.iterations
    assert sol.history[0]["ratio"] is None
    assert set(sol.norm_report) >= {"sigma_H2", "u_H2", "I4", "J5"}


def test_residual_of_constant_state():
    g = Grid(2, 16)
    p = ModelParams()
    res = st.stationary_residual_fields(SpectralField.zeros(g), SpectralField.zeros(g, 1), Forcing.zero(g), p)
    assert res == (0.0, 0.0)


def test_residual_of_manufactured_stationary_pair(rng):
    g = Grid(2, 32, 2 * math.pi)
    p = ModelParams()
    sigma, u = _pair(g, rng, 0.1)
    forcing = st.manufactured_forcing(sigma, u, p)
    sol = st.fixed_point(forcing, p, initial=(sigma, u), smallness="ignore", with_norms=False)
    assert sol.residual <= 1e-10


def test_smallness_policy():
    g = Grid(2, 32, 20.0)
    f = make_forcing(g, amplitude=1e-3)
    with pytest.raises(DomainError):
        st.fixed_point(f, ModelParams(), smallness="raise")
    with pytest.warns(HypothesisWarning):
        st.fixed_point(f, ModelParams(), with_norms=False)
    with pytest.raises(DomainError):
        st.fixed_point(f, ModelParams(), smallness="maybe")


def test_contraction_failure_detected(monkeypatch):
    g = Grid(2, 16)
    calls = {"n": 0}

    def expanding(sigma, u, *args, **kwargs):
        calls["n"] += 1
        scale = 1e-6 * 2.0 ** calls["n"]
        s = SpectralField.from_real(g, scale * np.cos(np.broadcast_arrays(*g.x)[0]))
        info = st.LinearSolveInfo(1, 0.0, 0.0, 0.0)
        return s, SpectralField.zeros(g, 1), info

    monkeypatch.setattr(st, "solve_linearized_info", expanding)
    with pytest.raises(ContractionError):
        st.fixed_point(Forcing.zero(g), ModelParams(), with_norms=False)


def test_hypothesis_report_zero_forcing():
    rep = st.hypothesis_report(Forcing.zero(Grid(2, 16)))
    assert rep["K0"] == 0 and rep["K"] == 0 and rep["smallness_flag"]
    assert not rep["complete"]


def test_hypothesis_report_linear_in_amplitude():
    g = Grid(2, 32, 20.0)
    a = st.hypothesis_report(make_forcing(g, amplitude=1e-3))
    b = st.hypothesis_report(make_forcing(g, amplitude=3e-3))
    for key in ("K0", "K", "L1_weighted_G", "epsilon_estimate"):
        assert b[key] == pytest.approx(3 * a[key], rel=1e-12)
    assert a["complete"]


def test_K0_against_hermite_quadrature():
    """Unit gaussian G on a box of side 32: analytic derivatives summed directly."""
    g = Grid(2, 128, 32.0)
    c = g.center
    x, y = (np.broadcast_arrays(*g.x)[j] - c[j] for j in range(2))
    gauss = np.exp(-(x**2 + y**2) / 2)
    forcing = Forcing(SpectralField.from_real(g, gauss), SpectralField.zeros(g, 1))
    got = st.hypothesis_report(forcing)["K0"]

    def herm(n, z):
        return hermite_e.hermeval(z, [0] * n + [1])

    w = 1 + np.sqrt(x**2 + y**2)
    expect = math.sqrt(np.sum((w * gauss) ** 2) * g.cell_volume)
    for v in range(1, 5):
        mag2 = sum(math.comb(v, a) * (herm(a, x) * herm(v - a, y) * gauss) ** 2 for a in range(v + 1))
        expect += math.sqrt(np.sum(w ** (2 * v) * mag2) * g.cell_volume)
    assert got == pytest.approx(expect, rel=1e-10)


def test_stationary_fields_roundtrip(rng):
    g = Grid(2, 16, 2 * math.pi)
    p = ModelParams()
    sigma, u = _pair(g, rng)
    state = st.stationary_fields(sigma, u, p)
    assert isinstance(state, State)
    assert np.allclose(state.rho.real, 1 + sigma.real)
