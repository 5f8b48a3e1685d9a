import math

import numpy as np
import pytest

from qnslab import analysis as an
from qnslab import evolution as ev
from qnslab import semigroup as sg
from qnslab import spectral as sp
from qnslab import stationary as st
from qnslab.checks import duhamel_order_study, linear_order_study
from qnslab.errors import CFLError, DomainError, PositivityError
from qnslab.model import Forcing, ModelParams, State, energy_budget, make_forcing
from qnslab.spectral import Grid, SpectralField

from conftest import smooth_field, zero_mean


def test_config_validation():
    with pytest.raises(DomainError):
        ev.TimeStepperConfig(dt=0)
    with pytest.raises(DomainError):
        ev.TimeStepperConfig(cfl_safety=1.5)
    with pytest.raises(DomainError):
        ev.TimeStepperConfig(scheme="rk4")
    with pytest.raises(DomainError):
        ev.TimeStepperConfig(output_stride=0)


@pytest.fixture(scope="module")
def manufactured():
    """An exactly stationary state on a small 2D box with its own forcing."""
    rng = np.random.default_rng(5)
    g = Grid(2, 32, 2 * math.pi)
    p = ModelParams()
    sigma = zero_mean(smooth_field(g, rng, scale=2e-3))
    u = zero_mean(smooth_field(g, rng, 1, scale=1e-3))
    forcing = st.manufactured_forcing(sigma, u, p)
    sol = st.fixed_point(forcing, p, initial=(sigma, u), smallness="ignore", with_norms=False)
    return g, p, forcing, sol.state(), sol.residual


def test_zero_perturbation_stays_at_residual_level(manufactured):
    g, p, forcing, ref, residual = manufactured
    cfg = ev.TimeStepperConfig(dt=0.05, t_end=50.0, output_stride=100)
    rec = ev.evolve(State(ref.rho.copy(), ref.m.copy()), ref, forcing, p, cfg)
    assert rec.steps == 1000
    norms = rec.norm_series.column("norm_43")
    assert norms[0] == 0.0
    assert np.all(np.isfinite(norms))
    assert norms.max() <= 100 * max(residual, 1e-14) * 50.0


def test_linear_part_orders():
    euler = linear_order_study("imex-euler")
    rk2 = linear_order_study("imex-rk2")
    assert min(euler) >= 0.8
    assert min(rk2) >= 1.8


def test_single_step_local_error_orders():
    p = ModelParams()
    g = Grid(1, 16, 2 * math.pi)
    ref = State.constant(g, p)
    x = g.x[0]
    init = State(ref.rho + SpectralField.from_real(g, 1e-3 * np.cos(x)), SpectralField.zeros(g, 1))
    zero = lambda r, m, t: (np.zeros_like(r), np.zeros_like(m))
    system = sg.ModeSystem(1.0, p)

    def error(dt, scheme):
        out = ev.run_steps(init, ref, Forcing.zero(g), p, dt, 1, scheme, explicit=zero)
        exact = system.propagator(dt) @ np.array([init.rho.hat[1] - ref.rho.hat[1], 0.0])
        # mode k = +1: M_par = M (unit vector +1)
        return abs((out.rho - ref.rho).hat[1] - exact[0]) + abs(out.m.hat[0, 1] - exact[1])

    for scheme, order in (("imex-euler", 2), ("imex-rk2", 3)):
        e1, e2 = error(0.04, scheme), error(0.02, scheme)
        assert math.log2(e1 / e2) >= order - 0.2


def test_stepper_matches_duhamel_oracle():
    """Linear dynamics plus a known momentum forcing on one torus mode."""
    assert min(duhamel_order_study("imex-euler")) >= 0.8
    assert min(duhamel_order_study("imex-rk2")) >= 1.8


def test_mass_conservation_per_step(rng):
    g = Grid(2, 32, 2 * math.pi)
    p = ModelParams()
    ref = State.constant(g, p)
    v = sp.leray_decompose(smooth_field(g, rng, 1, scale=0.01))[0]
    state = State.from_primitive(ref.rho + smooth_field(g, rng, scale=0.01), v)
    forcing = Forcing(SpectralField.zeros(g), smooth_field(g, rng, 1, scale=1e-3))
    mass = state.rho.mean()
    for _ in range(10):
        state = ev.step(state, ref, forcing, p, 0.05)
        assert abs(state.rho.mean() - mass) <= 1e-12 * mass


def test_energy_budget_without_forcing(rng):
    g = Grid(2, 32, 2 * math.pi)
    p = ModelParams()
    ref = State.constant(g, p)
    u0 = sp.leray_decompose(smooth_field(g, rng, 1, scale=0.01))[0]
    state = State.from_primitive(ref.rho.copy(), u0)
    e0 = energy_budget(state, p)
    totals = [e0["total"]]
    for _ in range(40):
        state = ev.step(state, ref, Forcing.zero(g), p, 0.05)
        e = energy_budget(state, p)
        assert e["kinetic"] <= e0["total"] * (1 + 1e-9)
        totals.append(e["total"])
    assert np.all(np.diff(totals) <= 1e-6 * e0["total"])
    assert totals[-1] < totals[0]


def test_step_rejects_cfl_violation(rng):
    g = Grid(2, 32, 2 * math.pi)
    p = ModelParams()
    ref = State.constant(g, p)
    with pytest.raises(CFLError) as info:
        ev.step(State(ref.rho.copy(), ref.m.copy()), ref, Forcing.zero(g), p, dt=1.0, cfl_safety=0.5)
    assert info.value.dt == 1.0 and info.value.dt_max < 1.0


def test_evolve_halves_dt():
    g = Grid(2, 16, 2 * math.pi)
    p = ModelParams()
    ref = State.constant(g, p)
    rec = ev.evolve(State(ref.rho.copy(), ref.m.copy()), ref, Forcing.zero(g), p, ev.TimeStepperConfig(dt=1.0, t_end=1.0))
    assert rec.dt_used == 0.125
    assert rec.times[-1] == pytest.approx(1.0)


def test_positivity_abort_keeps_partial_record():
    g = Grid(1, 16, 2 * math.pi)
    p = ModelParams()
    ref = State.constant(g, p)

    def drain(r, m, t):
        # uniform mass sink of unit rate: the density reaches the floor near t = 0.75
        out = np.zeros_like(r)
        out[g.zero_mode] = -g.npoints
        return out, np.zeros_like(m)

    start = State(ref.rho.copy(), ref.m.copy())
    cfg = ev.TimeStepperConfig(dt=0.05, t_end=5.0, output_stride=100)
    with pytest.raises(PositivityError) as info:
        ev.evolve(start, ref, Forcing.zero(g), p, cfg, explicit=drain)
    record = info.value.record
    assert record.aborted["error"] == "PositivityError"
    assert record.aborted["time"] == pytest.approx(0.75, abs=0.051)
    assert record.times == [0.0]

    # with frequent snapshots the energy window [rho_bar/2, 3 rho_bar/2] is left first
    cfg = ev.TimeStepperConfig(dt=0.05, t_end=5.0, output_stride=1)
    with pytest.raises(DomainError) as info:
        ev.evolve(start, ref, Forcing.zero(g), p, cfg, explicit=drain)
    record = info.value.record
    assert record.aborted["error"] == "DomainError"
    assert len(record.times) == 11
    assert min(record.positivity_min) >= 0.5


@pytest.fixture(scope="module")
def bump_reference():
    g = Grid(2, 32, 20.0)
    p = ModelParams()
    f = make_forcing(g, "gaussian-bump", amplitude=1e-3, width=2.0)
    sol = st.fixed_point(f, p, smallness="ignore", with_norms=False)
    return g, p, f, sol.state()


def test_perturbation_has_requested_size(bump_reference):
    g, p, f, ref = bump_reference
    x0 = ev.make_perturbation(ref, p, 1e-3, seed=3)
    vr = x0.rho - ref.rho
    om = ev.velocity_perturbation(x0.rho.hat - ref.rho.hat, x0.m.hat - ref.m.hat, ref)
    assert an.pair_norm(vr, om, 4, 3) == pytest.approx(1e-3, rel=1e-3)
    assert abs(vr.mean()) < 1e-18


def test_stability_and_linear_response(bump_reference):
    g, p, f, ref = bump_reference
    cfg = ev.TimeStepperConfig(dt=0.1, t_end=10.0, output_stride=5)
    sups = []
    for delta in (1e-3, 5e-4):
        rec = ev.evolve(ev.make_perturbation(ref, p, delta, seed=1), ref, f, p, cfg)
        assert rec.sup_ratio <= 5
        sups.append(rec.norm_series.column("norm_43").max())
        norms = rec.norm_series.column("norm_43")
        assert norms[-1] < norms[0]
    assert sups[0] / sups[1] == pytest.approx(2.0, rel=0.2)


def test_energy_equivalence_and_lyapunov_on_trajectory(bump_reference):
    g, p, f, ref = bump_reference
    cfg = ev.TimeStepperConfig(dt=0.1, t_end=10.0, output_stride=2)
    rec = ev.evolve(ev.make_perturbation(ref, p, 1e-3, seed=2), ref, f, p, cfg)
    s = rec.norm_series
    wc, w = an.window_constants(p), an.energy_weights(p)
    for i in range(len(s)):
        n2 = (s.column("rho_H4")[i] + s.column("omega_H3")[i]) ** 2
        N = s.column("N")[i]
        assert w.a[3] / 4 * wc.B0 * n2 <= N <= 2 * w.a[0] * wc.B1 * n2
    lyap = an.lyapunov_constants(s.column("E"), s.column("dissipation_32"), s.column("dissipation_0"))
    assert lyap["feasible"] and lyap["C1"] > 0


def test_raw_form_agrees_with_perturbation_form(bump_reference):
    g, p, f, ref = bump_reference
    x0 = ev.make_perturbation(ref, p, 1e-3, seed=4)
    a = ev.run_steps(x0, ref, f, p, 0.05, 40)
    b = ev.run_steps(x0, State.constant(g, p), f, p, 0.05, 40)
    scale = sp.l2_norm(x0.rho - ref.rho)
    assert sp.l2_norm(a.rho - b.rho) <= 1e-2 * scale
    assert sp.l2_norm(a.m - b.m) <= 1e-2 * scale


def test_record_summary_and_csv(tmp_path, bump_reference):
    g, p, f, ref = bump_reference
    rec = ev.evolve(ev.make_perturbation(ref, p, 1e-4), ref, f, p, ev.TimeStepperConfig(dt=0.1, t_end=1.0))
    summary = rec.summary()
    assert summary["steps"] == 10 and summary["aborted"] is None
    path = tmp_path / "traj.csv"
    rec.norm_series.to_csv(path)
    header = path.read_text().splitlines()[0].split(",")
    assert header == ["t", *ev.CSV_COLUMNS]
