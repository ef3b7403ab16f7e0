from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from crt_records.analytics import (
    F_expansion_check,
    F_function,
    F_lambda_derivatives,
    F_prime,
    G_function,
    H_bound,
    H_function,
    H_gaps,
    LaplaceParams,
    conditional_moment,
    conditional_moment_from_distances,
    grafted_mass_mean,
    h0_moment,
    h0_moment_asymptotic,
    int_Ff_residual,
    lap_rayleigh_identity,
    laplace_sigma_theta,
    theta_moment_exact,
)
from crt_records.crt_sampler import Params, sample_spanned_tree
from crt_records.errors import DomainError, InvalidParameterError, SingularInputError
from crt_records.randkit import derive, rayleigh_mgf, standard_error
from crt_records.tree_core import WeightedTree

P = Params(0.5, 1.0)


def test_theta_moment_exact():
    assert theta_moment_exact(P, 1) == pytest.approx(0.5 * math.sqrt(2 * math.pi))
    assert theta_moment_exact(P, 1) == pytest.approx(1.2533, abs=1e-4)
    assert theta_moment_exact(P, 2) == 2.0
    assert theta_moment_exact(Params(0.5, 4.0), 1) == pytest.approx(2 * theta_moment_exact(P, 1))
    with pytest.raises(InvalidParameterError):
        theta_moment_exact(P, 3)


def test_conditional_moment_single_leaf():
    d = 1.7
    t = WeightedTree({(): d})
    p = Params(0.8, 3.0)
    assert conditional_moment(t, [()], p, 1) == pytest.approx(p.r / (2 * p.alpha * d))
    # theta ~ Exp(2 alpha d) has second moment 2/(2 alpha d)^2
    assert conditional_moment(t, [()], p, 2) == pytest.approx(p.r**2 * 2 / (2 * p.alpha * d) ** 2)
    with pytest.raises(SingularInputError):
        conditional_moment(WeightedTree({(): 0.0}), [()], p, 1)
    with pytest.raises(InvalidParameterError):
        conditional_moment(t, [()], p, 3)
    with pytest.raises(InvalidParameterError):
        conditional_moment(t, [], p, 1)


@pytest.mark.parametrize("a,b,c", [(1.0, 1.0, 1.0), (0.3, 2.0, 0.7)])
def test_conditional_moment_cherry_second_order(a, b, c):
    p = Params(0.5, 1.0)
    beta = 2 * p.alpha
    tree = WeightedTree({(): a, (1,): b, (2,): c})
    # theta_1 = min(A, B), theta_2 = min(A, C) with independent exponentials on the three edges;
    # E[theta_1 theta_2] = int int P(theta_1 > s, theta_2 > t) ds dt, split along s = t
    def triangle(x, y):
        return (1 / (beta * (a + x)) - 1 / (beta * (a + b + c))) / (beta * y)

    cross = triangle(b, c) + triangle(c, b)
    surv = lambda t, s: math.exp(-beta * a * max(s, t) - beta * b * s - beta * c * t)
    assert integrate.dblquad(surv, 0, np.inf, 0, np.inf)[0] == pytest.approx(cross, rel=1e-6)
    m1 = 2 / (beta * (a + b)) ** 2
    m2 = 2 / (beta * (a + c)) ** 2
    oracle = (p.r / 2) ** 2 * (m1 + m2 + 2 * cross)
    assert conditional_moment(tree, [(1,), (2,)], p, 2) == pytest.approx(oracle, rel=1e-8)


def test_conditional_moment_from_distances_shapes():
    d = np.array([1.0, 2.0])
    lca = np.array([[1.0, 0.5], [0.5, 2.0]])
    assert conditional_moment_from_distances(d, lca, P, 1) == pytest.approx(0.5 * 1.5)
    with pytest.raises(SingularInputError):
        conditional_moment_from_distances([0.0, 1.0], lca, P, 1)


def test_conditional_moment_fubini():
    vals = []
    for i in range(1000):
        s = sample_spanned_tree(P, 512, derive(50, i))
        vals.append(conditional_moment(s.tree, s.tree.leaves, P, 1))
    vals = np.array(vals)
    assert abs(vals.mean() - theta_moment_exact(P, 1)) < 3 * standard_error(vals)


def test_G_and_F_basics():
    lp = LaplaceParams(1.0, 1.0, 0.5)
    assert G_function(lp.x0, lp) == 0.0
    assert F_function(0.0, lp) == lp.x0
    with pytest.raises(DomainError):
        G_function(lp.x0 - 1e-3, lp)
    with pytest.raises(DomainError):
        F_function(-1.0, lp)
    with pytest.raises(InvalidParameterError):
        LaplaceParams(0.0, 1.0, 1.0)
    with pytest.raises(InvalidParameterError):
        LaplaceParams(1.0, -1.0, 1.0)


@given(st.floats(0.0, 50.0), st.floats(0.05, 5.0), st.floats(0.0, 5.0), st.floats(0.1, 3.0))
def test_F_inverts_G(q, lam, mu, alpha):
    lp = LaplaceParams(lam, mu, alpha)
    x = F_function(q, lp)
    assert abs(G_function(x, lp) - q) <= 1e-12 * (1 + q) * 10
    # the ODE 2 alpha F' (F + q) = lam; F' blows up at q = 0 when mu = 0
    if x + q > 0:
        assert 2 * alpha * F_prime(q, lp) * (x + q) == pytest.approx(lam, rel=1e-12)


@given(st.floats(0.0, 5.0), st.floats(0.1, 3.0), st.floats(0.0, 3.0))
def test_int_Ff_residual_small(q, lam, mu):
    assert abs(int_Ff_residual(q, LaplaceParams(lam, mu, 0.7))) < 1e-8


def test_F_expansion():
    rep = F_expansion_check(1.0, 1.0, 0.5)
    assert rep.first_error < 1e-6
    assert rep.second_error < 1e-4
    z = math.sqrt(0.5)
    assert rep.first_exact == pytest.approx(math.log(1 + z))
    f1, f2 = F_lambda_derivatives(1e-8, 1.0, 0.5)
    assert abs(f1) < 1e-7 and abs(f2) < 1e-7
    with pytest.raises(InvalidParameterError):
        F_expansion_check(0.0, 1.0, 0.5)


def test_laplace_sigma_theta():
    num, closed = laplace_sigma_theta(LaplaceParams(1.0, 1.0, 1.0))
    assert closed == pytest.approx(1 / 3)
    assert abs(num - closed) / closed < 1e-6
    num0, closed0 = laplace_sigma_theta(LaplaceParams(1e-12, 1.0, 1.0))
    assert num0 == pytest.approx(0.5, rel=1e-9) and closed0 == pytest.approx(0.5, rel=1e-9)
    with pytest.raises(InvalidParameterError):
        laplace_sigma_theta(LaplaceParams(1.0, 0.0, 1.0))


def test_lap_rayleigh_identity():
    lhs, rhs = lap_rayleigh_identity(1.0, 1.0)
    assert rhs == 0.5
    assert abs(lhs - rhs) / rhs < 1e-8
    lhs, rhs = lap_rayleigh_identity(4.0, 0.0)
    assert lhs == pytest.approx(0.5, rel=1e-10)
    with pytest.raises(InvalidParameterError):
        lap_rayleigh_identity(0.0, 1.0)


def test_H_function():
    assert H_function(0.0, P) == 0.0
    assert H_function(1e6, P) == pytest.approx(theta_moment_exact(P, 1), rel=1e-6)
    with pytest.raises(DomainError):
        H_function(-1.0, P)
    with pytest.raises(DomainError):
        H_gaps(-1.0, P)


@given(st.floats(0.01, 5.0), st.floats(0.1, 5.0), st.floats(0.2, 3.0))
def test_H_against_direct_quadrature(q, r, alpha):
    p = Params(alpha, r)
    upper = q * math.sqrt(2 * alpha * r)
    ref = math.sqrt(r / (2 * alpha)) * integrate.quad(rayleigh_mgf, 0, upper, epsabs=0, epsrel=1e-12)[0]
    assert H_function(q, p) == pytest.approx(ref, rel=1e-8)
    lower, upper_gap = H_gaps(q, p)
    assert lower == pytest.approx(q * r - ref, rel=1e-6, abs=1e-12)
    assert upper_gap == pytest.approx(H_bound(q, p) - (q * r - ref), rel=1e-6, abs=1e-12)


def test_H_bounds_grid():
    for q in np.linspace(0.0, 3.0, 20):
        for r in np.logspace(-2, 1.5, 20):
            lower, upper = H_gaps(float(q), Params(0.5, float(r)))
            if q == 0:
                assert lower == upper == 0.0
            else:
                assert lower > 0 and upper > 0


def test_h0_moment():
    assert h0_moment(1, 0, P) == pytest.approx(1.0)
    assert h0_moment(37, 0, P) == pytest.approx(1.0)
    p = Params(0.7, 2.0)
    # E[L_1] with L_1 = sqrt(r E / alpha), E ~ Exp(1)
    mean_L1 = integrate.quad(lambda x: math.sqrt(p.r * x / p.alpha) * math.exp(-x), 0, np.inf)[0]
    assert h0_moment(1, 1, p) == pytest.approx(mean_L1, rel=1e-10)
    assert h0_moment(1, 1, p) == pytest.approx(0.5 * math.sqrt(math.pi * p.r / p.alpha))
    ratio = h0_moment(10_000, 2, P) / h0_moment_asymptotic(10_000, 2, P)
    assert abs(ratio - 1) < 0.01
    with pytest.raises(DomainError):
        h0_moment(5, -1, P)
    with pytest.raises(InvalidParameterError):
        h0_moment(0, 1, P)


def test_h0_moment_matches_samples():
    n = 20
    h = np.array([sample_spanned_tree(P, n, derive(51, i)).h_root for i in range(20_000)])
    for k in (1, 2):
        x = h**k
        assert abs(x.mean() - h0_moment(n, k, P)) < 3 * standard_error(x)


def test_grafted_mass_mean():
    assert grafted_mass_mean(1.0, 1.0, P) == 1.0
    for L in (0.3, 2.0, 17.0):
        assert 2 * 0.7 * L * grafted_mass_mean(2.5, L, Params(0.7)) == pytest.approx(2.5)
    with pytest.raises(DomainError):
        grafted_mass_mean(1.0, 0.0, P)
