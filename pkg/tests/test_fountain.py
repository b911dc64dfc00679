import math

import numpy as np
import pytest
from scipy.optimize import minimize_scalar
from hypothesis import given, settings
from hypothesis import strategies as st

from homoclinic import functional as fn
from homoclinic.fountain import (
    d_lower_bound,
    estimate_eta,
    estimate_measure_eps,
    lower_profile,
    measure_eps_of,
    r_k,
    rho_k,
    sphere_max,
    verify_f3,
)
from homoclinic.operator import e_norm
from homoclinic.problem import builtin_problem

from conftest import make_setup


def test_rho_closed_form():
    # (8 * 0.5^1.25 * 1)^(1 / 0.75)
    assert rho_k(0.5, 1.0, 1.25) == pytest.approx(5.039684199579493, rel=1e-12)
    with pytest.raises(ValueError):
        rho_k(0.5, 1.0, 2.0)


def test_r_closed_form():
    # 0.9 * min(5.04, 0.3^(8/3))
    assert r_k(5.04, 0.3, 1.25) == pytest.approx(0.9 * 0.3 ** (8 / 3), rel=1e-12)
    assert r_k(5.04, 0.3, 1.25) == pytest.approx(0.0362994, rel=1e-6)
    assert r_k(0.01, 0.9, 1.25) == pytest.approx(0.009)
    with pytest.raises(ValueError):
        r_k(0.0, 0.3, 1.25)


# nu <= 1.95 keeps rho^2 inside the double range for these eta and ||a||
@settings(max_examples=50)
@given(st.floats(0.01, 3.0), st.floats(0.01, 5.0), st.floats(1.01, 1.95))
def test_a_lower_identity(eta, a_norm, nu):
    rho = rho_k(eta, a_norm, nu)
    assert lower_profile(rho, eta, a_norm, nu) == pytest.approx(rho ** 2 / 4, rel=1e-12)


@settings(max_examples=50)
@given(st.floats(0.01, 3.0), st.floats(0.01, 5.0), st.floats(1.01, 1.95))
def test_d_lower_is_minimum_of_profile(eta, a_norm, nu):
    rho = rho_k(eta, a_norm, nu)
    # search in log s: the minimizer can sit many decades below rho
    res = minimize_scalar(lambda x: lower_profile(math.exp(x), eta, a_norm, nu),
                          bounds=(math.log(rho) - 200.0, math.log(rho)), method="bounded",
                          options={"xatol": 1e-10})
    d = d_lower_bound(eta, a_norm, nu, rho)
    assert d <= res.fun + 1e-12 * (1 + abs(res.fun))
    assert d >= res.fun - 1e-9 * (1 + abs(res.fun))


def test_d_lower_without_nonlinearity():
    assert d_lower_bound(0.5, 0.0, 1.25, 1.0) == 0.0


def brute_measure_eps(values, weights):
    best = 0.0
    for e in np.unique(np.concatenate([values, np.cumsum(np.sort(weights))])):
        if e > 0 and weights[values >= e].sum() >= e * (1 - 1e-14):
            best = max(best, e)
    return best


@settings(max_examples=60)
@given(st.lists(st.floats(0.0, 2.0), min_size=1, max_size=30), st.floats(0.01, 0.5))
def test_measure_eps_scan_matches_brute_force(vals, h):
    v = np.array(vals)
    w = np.full(v.size, h)
    assert measure_eps_of(v, w) == pytest.approx(brute_measure_eps(v, w), abs=1e-12)


def test_measure_eps_requirements(small_model, small_linear):
    s = small_model
    with pytest.raises(ValueError):
        estimate_measure_eps(3, s.sd, s.grid, s.spec, dir_samples=50)
    with pytest.raises(ValueError):
        estimate_measure_eps(3, small_linear.sd, small_linear.grid, small_linear.spec)


def test_measure_eps_bounds_sampled_fields(small_model):
    s = small_model
    k = 6
    eps = estimate_measure_eps(k, s.sd, s.grid, s.spec, 200, seed=1)
    assert eps > 0
    B = fn._isometric_block(s.sd, 1, k)
    rng = np.random.default_rng(0)
    for _ in range(20):
        y = rng.standard_normal(k)
        u = B @ (y / np.linalg.norm(y))
        dens = s.P.a * np.abs(u) ** s.spec.nu
        assert s.grid.weights[dens >= eps].sum() >= eps


def test_eta_decays_for_harmonic_model():
    s = make_setup(builtin_problem("harmonic"), 10.0, 600)
    etas = [estimate_eta(k, s.sd, s.grid, s.spec, 4).value for k in (5, 20, 50)]
    assert etas[0] > etas[1] > etas[2] > 0


def test_eta_requires_tail(small_model):
    s = small_model
    with pytest.raises(ValueError):
        estimate_eta(2, s.sd, s.grid, s.spec)
    with pytest.raises(ValueError):
        verify_f3([2, 5], s.sd, s.grid, s.spec)


def test_sphere_max_points_lie_on_sphere(small_model):
    s = small_model
    val, u = sphere_max(5, 0.01, s.P, 1.0, 100, seed=0)
    assert e_norm(u, s.sd) == pytest.approx(0.01, rel=1e-10)
    assert val == pytest.approx(fn.phi_lambda(u, 1.0, s.P), rel=1e-12)


@pytest.fixture(scope="module")
def report(small_model):
    s = small_model
    return verify_f3([3, 7, 12], s.sd, s.grid, s.spec, trials=4, dir_samples=200)


def test_f3_on_small_model(report):
    assert report.f3_pass.all()
    assert np.all(np.diff(report.eta) < 0)
    np.testing.assert_allclose(report.a_lower, report.rho ** 2 / 4, rtol=1e-12)
    assert np.all(report.b_upper < 0)
    assert np.all(report.rho > report.r) and np.all(report.r > 0)
    assert np.all(np.diff(report.d_lower) > 0) and np.all(report.d_lower < 0)
    assert report.b_consistent.all()


def test_report_rows_and_bracket(report):
    rows = list(report.rows())
    assert [r["k"] for r in rows] == [3, 7, 12]
    assert set(rows[0]) == {"k", "eta", "rho", "r", "a_lower", "b_upper", "d_lower", "f3_pass"}
    assert report.bracket(0.5) == []
    phi = float(report.d_lower[0]) / 2
    assert report.bracket(phi) == [k for k, lo, hi in zip(report.k_range, report.d_lower, report.b_upper)
                                   if lo <= phi <= hi]
    assert 3 in report.bracket(phi)
    assert report.radius(7) == report.r[1]


def test_f3_fails_without_nonlinearity(small_linear):
    s = small_linear
    fr = verify_f3([3, 7], s.sd, s.grid, s.spec, trials=2, dir_samples=100)
    assert not fr.f3_pass.any()
    assert np.all(fr.b_upper > 0)


def test_f3_bounded_weight_branch():
    s = make_setup(builtin_problem(nu=1.6, mu=math.inf), 6.0, 300)
    fr = verify_f3([3, 7, 12], s.sd, s.grid, s.spec, trials=4, dir_samples=200)
    assert fr.f3_pass.all()
    assert np.all(np.diff(fr.eta) < 0)


def test_f3_is_deterministic(small_model, report):
    s = small_model
    again = verify_f3([3, 7, 12], s.sd, s.grid, s.spec, trials=4, dir_samples=200, jobs=3)
    np.testing.assert_array_equal(again.eta, report.eta)
    np.testing.assert_array_equal(again.b_upper, report.b_upper)
