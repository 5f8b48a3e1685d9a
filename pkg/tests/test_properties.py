"""Randomized invariants driven by hypothesis."""
import math

import numpy as np
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as hs

from qnslab import analysis as an
from qnslab import artifacts as art
from qnslab import oracle
from qnslab import semigroup as sg
from qnslab import spectral as sp
from qnslab.errors import DomainError
from qnslab.model import ModelParams

from conftest import smooth_field

GRID = sp.Grid(2, 16, 2 * math.pi)
seeds = hs.integers(0, 2**32 - 1)


@hs.composite
def model_params(draw):
    mu = draw(hs.floats(0.05, 5.0))
    return ModelParams(
        mu=mu,
        lam=draw(hs.floats(-2 * mu / 3 + 1e-9, 3.0)),
        hbar=draw(hs.floats(0.05, 3.0)),
        gamma=draw(hs.floats(1.0, 3.0)),
        rho_bar=draw(hs.floats(0.2, 5.0)),
    )


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_leray_parts_sum_and_separate(seed):
    v = smooth_field(GRID, np.random.default_rng(seed), 1, modes=5)
    sol, grad = sp.leray_decompose(v)
    assert np.allclose((sol + grad).hat, v.hat, atol=1e-12)
    assert sp.l2_norm(sp.divergence(sol)) <= 1e-12 * max(sp.l2_norm(v), 1.0)
    assert abs(float(np.sum(sol.hat * np.conj(grad.hat)).real)) <= 1e-9 * float(np.sum(np.abs(v.hat) ** 2))


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_parseval(seed):
    f = smooth_field(GRID, np.random.default_rng(seed), modes=6)
    assert math.isclose(sp.l2_norm(f), sp.real_l2_norm(GRID, f.real), rel_tol=1e-12)


@settings(max_examples=60, deadline=None)
@given(model_params(), hs.floats(1e-4, 50.0))
def test_dispersion_never_grows(params, k):
    lp, lm = sg.dispersion(k, params)
    assert lp.real <= 1e-14 and lm.real <= 1e-14


@settings(max_examples=60, deadline=None)
@given(model_params(), hs.floats(1e-4, 20.0), hs.floats(0.0, 10.0))
def test_propagator_agrees_with_expm(params, k, t):
    sys = sg.ModeSystem(k, params)
    ref = scipy.linalg.expm(t * sys.parallel_block())
    assert np.allclose(sys.propagator(t), ref, rtol=1e-8, atol=1e-10)
    assert np.allclose(oracle.expm_2x2(sys.parallel_block(), t), ref, rtol=1e-7, atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(hs.floats(1.05, 6.0), hs.floats(0.0, 1.0), hs.floats(0.0, 500.0))
def test_convolution_bound(r1, frac, t):
    res = an.conv_ineq_probe(r1, frac * r1, t)
    assert res["holds"]


@settings(max_examples=60, deadline=None)
@given(hs.integers(0, 3), hs.integers(0, 3), hs.integers(1, 4), hs.sampled_from([2.0, 3.0, 4.0, 6.0]))
def test_gn_theta_in_unit_interval(alpha, m, extra, p):
    l = m + extra
    if alpha > l:
        return
    try:
        theta = an.gn_theta(alpha, m, l, p)
    except DomainError:
        return
    assert 0.0 <= theta <= 1.0
    lhs = 1 / p - alpha / 3
    rhs = (0.5 - m / 3) * (1 - theta) + (0.5 - l / 3) * theta
    assert math.isclose(lhs, rhs, abs_tol=1e-9)


@settings(max_examples=30, deadline=None)
@given(hs.dictionaries(hs.text(min_size=1, max_size=5), hs.floats(allow_nan=False, allow_infinity=False), max_size=6))
def test_config_hash_ignores_key_order(d):
    flipped = dict(reversed(list(d.items())))
    assert art.config_hash({"s": d}) == art.config_hash({"s": flipped})


@settings(max_examples=30, deadline=None)
@given(seeds, hs.floats(1e-3, 0.2), hs.floats(1e-3, 0.2))
def test_energy_equivalence(seed, a, b):
    rng = np.random.default_rng(seed)
    vr = smooth_field(GRID, rng, scale=a)
    om = smooth_field(GRID, rng, 1, scale=b)
    lo, N, hi = an.equivalence_bounds(vr, om, ModelParams())
    assert lo <= N <= hi
