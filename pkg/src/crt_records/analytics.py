"""Closed forms and quadrature checks for Theta, the Laplace exponent F and edge-length laws."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .crt_sampler import Params
from .errors import DomainError, InvalidParameterError, SingularInputError
from .randkit import SQRT_HALF_PI, quad, rayleigh_mgf, rayleigh_mgf_complement
from .tree_core import WeightedTree


def theta_moment_exact(params: Params, order: int) -> float:
    """First two moments of Theta given the total mass: ``sqrt(pi r/alpha)/2`` and ``r/alpha``."""
    if order == 1:
        return 0.5 * math.sqrt(math.pi * params.r / params.alpha)
    if order == 2:
        return params.r / params.alpha
    raise InvalidParameterError(f"order must be 1 or 2, got {order!r}")


def conditional_moment_from_distances(dist, lca_depth, params: Params, order: int) -> float:
    """Moments of ``Theta_hat = (r/n) sum_k theta(U_k)`` given the tree.

    Parameters
    ----------
    dist : array of shape (n,)
        Distance of every leaf to the root.
    lca_depth : array of shape (n, n)
        Height of the most recent common ancestor of each pair (``dist`` on the diagonal).
    """
    d = np.asarray(dist, dtype=float)
    if np.any(d <= 0):
        raise SingularInputError("a leaf at distance 0 from the root has theta = inf")
    n = d.size
    beta = 2.0 * params.alpha
    w = params.r / n
    if order == 1:
        return float(w * np.sum(1.0 / d) / beta)
    if order == 2:
        span = d[:, None] + d[None, :] - np.asarray(lca_depth, dtype=float)
        sym = 0.5 * (1.0 / d[:, None] + 1.0 / d[None, :]) / span
        return float(2.0 / beta**2 * w * w * sym.sum())
    raise InvalidParameterError(f"order must be 1 or 2, got {order!r}")


def conditional_moment(tree: WeightedTree, leaves, params: Params, order: int) -> float:
    """``E[Theta_hat^order | tree]`` with mass ``r/n`` on each of ``leaves`` (Neveu words)."""
    leaves = [tuple(w) for w in leaves]
    if not leaves:
        raise InvalidParameterError("need at least one leaf")
    ends = tree.depth_of_ends()
    idx = [tree._idx(w) for w in leaves]
    d = ends[idx]
    if order == 1:
        return conditional_moment_from_distances(d, None, params, 1)
    n = len(leaves)
    lca = np.empty((n, n))
    for i, u in enumerate(leaves):
        for j in range(i, n):
            v = leaves[j]
            k = 0
            while k < min(len(u), len(v)) and u[k] == v[k]:
                k += 1
            lca[i, j] = lca[j, i] = ends[tree.index[u[:k]]] if i != j else d[i]
    return conditional_moment_from_distances(d, lca, params, order)


# --- Laplace exponent F and its inverse G -----------------------------------------


@dataclass(frozen=True)
class LaplaceParams:
    """``lam`` is conjugate to Theta and ``mu`` to the total mass."""

    lam: float
    mu: float
    alpha: float

    def __post_init__(self):
        if not (self.lam > 0 and self.mu >= 0 and self.alpha > 0):
            raise InvalidParameterError("need lam > 0, mu >= 0, alpha > 0")
        if not all(math.isfinite(v) for v in (self.lam, self.mu, self.alpha)):
            raise InvalidParameterError("parameters must be finite")

    @property
    def x0(self) -> float:
        return math.sqrt(self.mu / self.alpha)


def G_function(x: float, lp: LaplaceParams) -> float:
    """``(sqrt(mu/alpha) + lam/2alpha) exp(2alpha/lam (x - sqrt(mu/alpha))) - x - lam/2alpha``."""
    x0 = lp.x0
    if x < x0:
        raise DomainError(f"G is defined for x >= sqrt(mu/alpha) = {x0}, got {x}")
    c = x0 + lp.lam / (2.0 * lp.alpha)
    s = 2.0 * lp.alpha / lp.lam * (x - x0)
    return c * math.expm1(s) + x0 - x


def _G_prime(x: float, lp: LaplaceParams) -> float:
    return 2.0 * lp.alpha / lp.lam * (G_function(x, lp) + x)


def F_function(q: float, lp: LaplaceParams) -> float:
    """Inverse of G: bracketed bisection followed by safeguarded Newton steps."""
    if not (q >= 0 and math.isfinite(q)):
        raise DomainError(f"F needs finite q >= 0, got {q}")
    lo = lp.x0
    if q == 0:
        return lo
    step = lp.lam / (2.0 * lp.alpha)
    hi = lo + step
    while G_function(hi, lp) < q:
        lo, hi = hi, hi + 2.0 * (hi - lp.x0)
    # a few bisections to get into Newton's basin, then Newton with the bracket as a guard
    for _ in range(20):
        mid = 0.5 * (lo + hi)
        if G_function(mid, lp) < q:
            lo = mid
        else:
            hi = mid
    x = 0.5 * (lo + hi)
    tol = 1e-12 * (1.0 + q)
    for _ in range(100):
        g = G_function(x, lp) - q
        if abs(g) <= tol:
            return x
        if g < 0:
            lo = x
        else:
            hi = x
        nx = x - g / _G_prime(x, lp)
        if not lo <= nx <= hi:
            nx = 0.5 * (lo + hi)
        if nx == x:
            return x
        x = nx
    return x


def F_prime(q: float, lp: LaplaceParams) -> float:
    """``F'(q) = lam / (2 alpha (F(q) + q))``."""
    return lp.lam / (2.0 * lp.alpha * (F_function(q, lp) + q))


def int_Ff_residual(q: float, lp: LaplaceParams) -> float:
    """``alpha F(q)^2 + 2 alpha int_0^q x F'(x) dx - lam q - mu`` with the integral by quadrature."""
    integral = quad(lambda x: x * F_prime(x, lp), 0.0, q, epsabs=1e-13, epsrel=1e-12) if q > 0 else 0.0
    f = F_function(q, lp)
    return lp.alpha * f * f + 2.0 * lp.alpha * integral - lp.lam * q - lp.mu


@dataclass
class ExpansionReport:
    first_fd: float
    first_exact: float
    second_fd: float
    second_exact: float

    @property
    def first_error(self) -> float:
        return abs(self.first_fd - self.first_exact)

    @property
    def second_error(self) -> float:
        return abs(self.second_fd - self.second_exact)


def F_lambda_derivatives(q: float, mu: float, alpha: float) -> tuple[float, float]:
    """Closed-form first and second lam-derivatives of F at lam = 0."""
    z = q * math.sqrt(alpha / mu)
    first = math.log1p(z) / (2.0 * alpha)
    second = -(z - math.log1p(z)) / (1.0 + z) / (2.0 * alpha**1.5 * math.sqrt(mu))
    return first, second


def F_expansion_check(q: float, mu: float, alpha: float, step: float = 1e-4) -> ExpansionReport:
    """Finite differences of ``lam -> F(q)`` at ``lam = 0`` against the closed forms.

    F is only defined for ``lam > 0``, so the differences are one-sided from the
    limit ``F|_{lam=0} = sqrt(mu/alpha)`` and sharpened by one Richardson step.
    """
    if not (q > 0 and mu > 0 and alpha > 0):
        raise InvalidParameterError("need q > 0, mu > 0, alpha > 0")
    f0 = math.sqrt(mu / alpha)

    def f(lam):
        return F_function(q, LaplaceParams(lam, mu, alpha))

    def d1(h):
        return (f(h) - f0) / h

    def d2(h):
        return (f(2 * h) - 2 * f(h) + f0) / (h * h)

    first = 2.0 * d1(step / 2) - d1(step)
    # d2 has error h F''' + O(h^2); combining h and h/2 cancels the linear term
    second = 2.0 * d2(step / 2) - d2(step)
    e1, e2 = F_lambda_derivatives(q, mu, alpha)
    return ExpansionReport(first, e1, second, e2)


# --- Laplace transforms in (sigma, Theta) -----------------------------------------


def laplace_sigma_theta(lp: LaplaceParams) -> tuple[float, float]:
    """``N[sigma exp(-mu sigma - lam Theta)]`` by quadrature and in closed form ``1/(2 sqrt(alpha mu) + lam)``.

    The quadrature integrates over the total mass ``r = t^2`` against
    ``dr / (2 sqrt(alpha pi) sqrt(r))`` the Rayleigh transform of
    ``Theta = sqrt(r / 2 alpha) Z``.
    """
    if not lp.mu > 0:
        raise InvalidParameterError("laplace_sigma_theta needs mu > 0")
    a = lp.alpha
    c = lp.lam / math.sqrt(2.0 * a)

    def integrand(t):
        return math.exp(-lp.mu * t * t) * rayleigh_mgf(c * t) / math.sqrt(a * math.pi)

    numeric = quad(integrand, 0.0, np.inf, epsabs=1e-14, epsrel=1e-11)
    return numeric, 1.0 / (2.0 * math.sqrt(a * lp.mu) + lp.lam)


def lap_rayleigh_identity(mu: float, c: float) -> tuple[float, float]:
    """``pi^{-1/2} int_0^inf r^{-1/2} e^{-mu r} E[exp(-sqrt(2r) c Z)] dr`` and ``1/(c + sqrt(mu))``."""
    if not (mu > 0 and c >= 0):
        raise InvalidParameterError("need mu > 0 and c >= 0")
    s2 = math.sqrt(2.0)

    def integrand(t):
        return 2.0 / math.sqrt(math.pi) * math.exp(-mu * t * t) * rayleigh_mgf(s2 * c * t)

    return quad(integrand, 0.0, np.inf, epsabs=1e-15, epsrel=1e-12), 1.0 / (c + math.sqrt(mu))


# --- first moment of Theta on the pruned tree -------------------------------------


def _integrate_split(func, upper: float, **kw) -> float:
    """Integral over ``[0, upper]`` cut at 1, 10, 100, ... so each piece is well scaled."""
    if math.isinf(upper):
        return quad(func, 0.0, np.inf, **kw)
    cuts = [0.0]
    edge = 1.0
    while edge < upper:
        cuts.append(edge)
        edge *= 10.0
    cuts.append(upper)
    return float(sum(quad(func, a, b, **kw) for a, b in zip(cuts[:-1], cuts[1:])))


def H_function(q: float, params: Params) -> float:
    """``N^(r)_q[Theta] = sqrt(r/2alpha) int_0^{q sqrt(2 alpha r)} E[exp(-yZ)] dy``."""
    if q < 0:
        raise DomainError("q must be nonnegative")
    a, r = params.alpha, params.r
    if q == 0:
        return 0.0
    upper = q * math.sqrt(2.0 * a * r)
    return math.sqrt(r / (2.0 * a)) * _integrate_split(rayleigh_mgf, upper, epsabs=1e-14, epsrel=1e-11)


def H_gaps(q: float, params: Params) -> tuple[float, float]:
    """``qr - H_q(r)`` and ``sqrt(pi alpha)/2 q^2 r^{3/2} - (qr - H_q(r))``, each without cancellation.

    Both gaps are integrals of positive functions: ``1 - E[e^{-yZ}]`` and
    ``y sqrt(pi/2) (1 - erfcx(y/sqrt 2))``.
    """
    if q < 0:
        raise DomainError("q must be nonnegative")
    a, r = params.alpha, params.r
    if q == 0:
        return 0.0, 0.0
    upper = q * math.sqrt(2.0 * a * r)
    scale = math.sqrt(r / (2.0 * a))
    s2 = math.sqrt(2.0)
    lower_gap = scale * _integrate_split(rayleigh_mgf_complement, upper, epsabs=0.0, epsrel=1e-11)
    upper_gap = scale * _integrate_split(lambda y: y * SQRT_HALF_PI * (1.0 - special.erfcx(y / s2)),
                                         upper, epsabs=0.0, epsrel=1e-11)
    return lower_gap, upper_gap


def H_bound(q: float, params: Params) -> float:
    return 0.5 * math.sqrt(math.pi * params.alpha) * q * q * params.r**1.5


# --- edge-length laws ----------------------------------------------------------------


def h0_moment(n: int, k: float, params: Params) -> float:
    """``E[h_root^k]`` for ``T_n``: ``(r/alpha)^{k/2} Gamma(k+1)/2^k Gamma(n-1/2)/Gamma(n+k/2-1/2)``."""
    if k <= -1:
        raise DomainError(f"k must exceed -1, got {k}")
    if int(n) != n or n < 1:
        raise InvalidParameterError("n must be a positive integer")
    log = (0.5 * k * math.log(params.r / params.alpha) + special.gammaln(k + 1.0) - k * math.log(2.0)
           + special.gammaln(n - 0.5) - special.gammaln(n + 0.5 * k - 0.5))
    return math.exp(log)


def h0_moment_asymptotic(n: int, k: float, params: Params) -> float:
    return (params.r / params.alpha) ** (0.5 * k) * n ** (-0.5 * k) * 2.0 ** (-k) * math.gamma(k + 1.0)


def grafted_mass_mean(r: float, L: float, params: Params) -> float:
    """Intensity of grafted mass per unit ``2 alpha`` length on ``T_n``: ``r / (2 alpha L)``."""
    if not L > 0:
        raise DomainError("L must be positive")
    return r / (2.0 * params.alpha * L)
