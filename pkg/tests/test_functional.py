import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from homoclinic import functional as fn
from homoclinic.grid import lp_norm, make_grid
from homoclinic.operator import e_inner, e_norm
from homoclinic.problem import ProblemSpec, builtin_problem, weight_norm

from conftest import make_setup, positive_field, random_field


def unit_weight_problem():
    spec = ProblemSpec(dim=1, L=lambda t: t * t, a=lambda t: np.ones_like(np.asarray(t, dtype=float)),
                       nu=1.25, mu=2.0)
    return make_setup(spec, 1.0, 3)


def test_psi_of_zero_for_every_eps(small_model):
    u = np.zeros(small_model.sd.size)
    for eps in (0.0, 1e-6, 0.3):
        assert fn.psi(u, small_model.P, fn.Regularization(eps)) == 0.0


def test_psi_constant_integrand():
    s = unit_weight_problem()
    assert fn.psi(np.ones(3), s.P) == pytest.approx(1.5)


def test_grad_psi_density():
    s = unit_weight_problem()
    np.testing.assert_allclose(fn.grad_psi(np.ones(3), s.P), 1.25)
    np.testing.assert_array_equal(fn.grad_psi(np.zeros(3), s.P, fn.Regularization(1e-3)), 0.0)
    np.testing.assert_array_equal(fn.grad_psi(np.zeros(3), s.P), 0.0)


def test_regularization_rejects_negative_eps():
    with pytest.raises(ValueError):
        fn.Regularization(-1.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_psi_holder_bound(small_model, seed):
    s = small_model
    u = np.random.default_rng(seed).standard_normal(s.sd.size)
    q = s.spec.nu_mu_star
    bound = weight_norm(s.spec, s.grid) * lp_norm(u, q, s.grid) ** s.spec.nu
    assert fn.psi(u, s.P) <= bound + 1e-9


def test_psi_holder_bound_bounded_weight():
    s = make_setup(builtin_problem(nu=1.6, mu=math.inf), 6.0, 300)
    rng = np.random.default_rng(2)
    for _ in range(20):
        u = rng.standard_normal(s.sd.size)
        bound = weight_norm(s.spec, s.grid) * lp_norm(u, s.spec.nu, s.grid) ** s.spec.nu
        assert fn.psi(u, s.P) <= bound + 1e-9


def test_grad_psi_matches_central_differences(small_model):
    s = small_model
    rng = np.random.default_rng(11)
    reg = fn.Regularization(1e-6)
    w = s.grid.weights
    for _ in range(5):
        u, v = random_field(s.sd, rng), random_field(s.sd, rng)
        v /= e_norm(v, s.sd)
        exact = float(np.sum(w * fn.grad_psi(u, s.P, reg) * v))
        errs = []
        for d in (1e-3, 1e-4):
            fd = (fn.psi(u + d * v, s.P, reg) - fn.psi(u - d * v, s.P, reg)) / (2 * d)
            errs.append(abs(fd - exact))
            assert abs(fd - exact) <= 10 * d * d
        # second order: the error drops by about 100 per decade of delta
        assert errs[1] <= 0.05 * errs[0] or errs[1] < 1e-11


def test_energy_of_zero(small_model):
    e = fn.energy(np.zeros(small_model.sd.size), 1.3, small_model.P)
    assert (e.plus_part, e.minus_part, e.kernel_part, e.psi, e.phi, e.phi_lambda) == (0, 0, 0, 0, 0, 0)


def test_energy_of_modes_without_nonlinearity(small_linear):
    sd, P = small_linear.sd, small_linear.P
    k = 6
    e = fn.energy(sd.mode(k), 1.0, P)
    assert e.phi == pytest.approx(sd.eigenvalues[k - 1] / 2, rel=1e-10)
    e1 = fn.energy(sd.mode(1), 1.0, P)
    assert e1.phi == pytest.approx(-1.0, abs=5e-3)
    assert e1.minus_part == pytest.approx(-sd.eigenvalues[0] / 2, rel=1e-10)


def test_energy_invariants(small_model):
    rng = np.random.default_rng(5)
    for lam in (1.0, 1.37, 2.0):
        u = random_field(small_model.sd, rng)
        e = fn.energy(u, lam, small_model.P)
        assert e.phi == pytest.approx(e.plus_part + e.kernel_part - e.minus_part - e.psi, rel=1e-12)
        assert e.phi_lambda == pytest.approx(e.plus_part + e.kernel_part - lam * (e.minus_part + e.psi),
                                             rel=1e-12)
        assert e.B >= 0


def test_energy_matches_integral_form(small_model):
    # Phi_1(u) = 1/2 (A u, u)_2 - Psi(u): kernel part included
    s = small_model
    u = random_field(s.sd, np.random.default_rng(9))
    quad = 0.5 * float(np.sum(s.grid.weights * s.A.matvec(u) * u))
    assert fn.phi_lambda(u, 1.0, s.P) == pytest.approx(quad - fn.psi(u, s.P), rel=1e-10)


def test_lambda_out_of_range(small_model):
    with pytest.raises(ValueError):
        fn.energy(np.zeros(small_model.sd.size), 0.9, small_model.P)
    with pytest.raises(ValueError):
        fn.energy(np.zeros(small_model.sd.size), 2.1, small_model.P)


def test_evenness_exact(small_model):
    rng = np.random.default_rng(4)
    for _ in range(50):
        u = rng.standard_normal(small_model.sd.size)
        for lam in (1.0, 1.5):
            assert fn.phi_lambda(-u, lam, small_model.P) == fn.phi_lambda(u, lam, small_model.P)


def test_gradient_without_nonlinearity(small_linear):
    # a = 0: grad Phi_lambda = u^+ - lambda u^- + (lambda_n c_n on the kernel)
    sd, P = small_linear.sd, small_linear.P
    u = random_field(sd, np.random.default_rng(1))
    c = sd.coefficients(u)
    g = fn.gradient_coefficients(c, u, 1.5, P)
    np.testing.assert_allclose(g[:1], -1.5 * c[:1], rtol=1e-10)
    np.testing.assert_allclose(g[1:2], sd.eigenvalues[1] * c[1:2], rtol=1e-10)
    np.testing.assert_allclose(g[2:], c[2:], rtol=1e-10, atol=1e-14)


@pytest.mark.parametrize("lam", [1.0, 1.5, 2.0])
def test_gradient_is_riesz_representative(small_model, lam):
    s = small_model
    rng = np.random.default_rng(int(lam * 10))
    reg = fn.Regularization(1e-6)
    for _ in range(5):
        u, v = positive_field(s.sd, s.grid, rng), random_field(s.sd, rng)
        v /= e_norm(v, s.sd)
        d = 1e-3
        fd = (fn.phi_lambda(u + d * v, lam, s.P, reg) - fn.phi_lambda(u - d * v, lam, s.P, reg)) / (2 * d)
        assert abs(fd - e_inner(fn.grad_phi_lambda(u, lam, s.P, reg), v, s.sd)) <= 10 * d * d


def test_gradient_across_sign_changes_converges(small_model):
    # near a zero of u the FD error is not O(delta^2) but must still vanish with delta
    s = small_model
    rng = np.random.default_rng(11)
    reg = fn.Regularization(1e-6)
    for lam in (1.0, 2.0):
        for _ in range(5):
            u, v = random_field(s.sd, rng), random_field(s.sd, rng, 40)
            v /= e_norm(v, s.sd)
            g = e_inner(fn.grad_phi_lambda(u, lam, s.P, reg), v, s.sd)
            errs = [abs((fn.phi_lambda(u + d * v, lam, s.P, reg) - fn.phi_lambda(u - d * v, lam, s.P, reg))
                        / (2 * d) - g) for d in (1e-3, 1e-5)]
            assert errs[1] <= 1e-2 * errs[0] + 1e-8


def test_grad_norm_is_e_norm_of_gradient(small_model):
    u = random_field(small_model.sd, np.random.default_rng(8))
    g = fn.grad_phi_lambda(u, 1.2, small_model.P)
    assert fn.grad_norm(u, 1.2, small_model.P) == pytest.approx(e_norm(g, small_model.sd), rel=1e-10)


def test_beta_2_is_exact(small_model):
    sd = small_model.sd
    est = fn.embedding_ascent(2.0, sd, 4)
    assert est.value == pytest.approx(1.0 / np.sqrt(sd.omega.min()), rel=1e-9)


def test_beta_inf_dominates_random_ratios(small_model):
    sd = small_model.sd
    est = fn.embedding_ascent(math.inf, sd, 1)
    assert np.abs(est.witness).max() / e_norm(est.witness, sd) == pytest.approx(est.value, rel=1e-9)
    rng = np.random.default_rng(0)
    for _ in range(50):
        u = rng.standard_normal(sd.size)
        assert np.abs(u).max() / e_norm(u, sd) <= est.value * (1 + 1e-12)


def test_embedding_ascent_history_and_witness(small_model):
    sd, g = small_model.sd, small_model.grid
    est = fn.embedding_ascent(2.5, sd, 6, seed=3)
    assert list(est.history) == sorted(est.history) and len(est.history) == 6
    assert lp_norm(est.witness, 2.5, g) / e_norm(est.witness, sd) == pytest.approx(est.value, rel=1e-9)
    rng = np.random.default_rng(1)
    for _ in range(30):
        u = random_field(sd, rng, 40)
        assert lp_norm(u, 2.5, g) / e_norm(u, sd) <= est.value * (1 + 1e-9)


def test_embedding_constant_inadmissible_exponent(small_model):
    with pytest.raises(ValueError):
        fn.embedding_constant(0.9, small_model.sd, small_model.grid, spec=builtin_problem(alpha=0.5))
    with pytest.raises(ValueError):
        fn.embedding_ascent(0.5, small_model.sd)
    with pytest.raises(ValueError):
        fn.embedding_ascent(2.0, small_model.sd, 0)


def test_tail_constants_decrease(small_model):
    vals = [fn.embedding_ascent(2.5, small_model.sd, 4, start=k).value for k in (3, 10, 30)]
    assert vals[0] > vals[1] > vals[2]


def test_vector_field_functional():
    s = make_setup(builtin_problem("shifted", dim=2), 5.0, 120)
    rng = np.random.default_rng(0)
    u, v = random_field(s.sd, rng), random_field(s.sd, rng)
    v /= e_norm(v, s.sd)
    reg = fn.Regularization(1e-6)
    d = 1e-3
    fd = (fn.phi_lambda(u + d * v, 1.0, s.P, reg) - fn.phi_lambda(u - d * v, 1.0, s.P, reg)) / (2 * d)
    assert abs(fd - e_inner(fn.grad_phi_lambda(u, 1.0, s.P, reg), v, s.sd)) <= 10 * d * d
    # |u| is the Euclidean norm at each node
    U = u.reshape(-1, 2)
    ref = np.sum(s.grid.weights * s.P.a * np.linalg.norm(U, axis=1) ** 1.25)
    assert fn.psi(u, s.P) == pytest.approx(ref, rel=1e-12)
