"""Subtrees cut away by the mark process on grid trees and the remaining mass ``sigma_q``.

On an :class:`~crt_records.tree_core.ExcursionTree` every vertex ``v`` with mass is
separated from the root at ``theta(v)``, the first mark time on its root path. All
vertices sharing a value of theta leave together, so the removal events
``(theta_i, sigma^i)`` are the distinct values of theta with the mass carrying them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .crt_sampler import Params, sample_excursion_tree, sample_mass_points
from .errors import DegenerateInputError, IncompleteEventsError, InvalidParameterError
from .randkit import SeedLike, SeedSpec, as_generator, standard_error
from .record_process import MarkRealization, path_min
from .tree_core import ExcursionTree


@dataclass
class RemovalEvents:
    """Removal times ``theta`` (increasing) with removed masses ``sigma``.

    ``theta_by_mass`` is ``sum_v theta(v) mass(v)`` computed vertex by vertex,
    before grouping.
    """

    theta: np.ndarray
    sigma: np.ndarray
    total_mass: float
    theta_by_mass: float
    vertex_theta: np.ndarray | None = None

    def sigma_q(self, q):
        """Mass still attached to the root at time ``q``; right-continuous, ``sum_{theta_i > q} sigma^i``."""
        tail = np.concatenate([np.cumsum(self.sigma[::-1])[::-1], [0.0]])
        return tail[np.searchsorted(self.theta, q, side="right")]

    def sigma_q_left(self, q):
        """Left limit ``sigma_{q-} = sum_{theta_i >= q} sigma^i``."""
        tail = np.concatenate([np.cumsum(self.sigma[::-1])[::-1], [0.0]])
        return tail[np.searchsorted(self.theta, q, side="left")]

    def integral_sigma(self) -> float:
        """``int_0^inf sigma_q dq`` summed over the steps of ``sigma_q``."""
        tail = np.cumsum(self.sigma[::-1])[::-1]
        widths = np.diff(np.concatenate([[0.0], self.theta]))
        return float(np.sum(widths * tail))

    def sum_theta_sigma(self) -> float:
        return float(np.sum(self.theta * self.sigma))


def removal_events(tree: ExcursionTree, params: Params, seed: SeedLike | None = None,
                   marks: MarkRealization | None = None, cap: float = np.inf) -> RemovalEvents:
    """Group the mass of ``tree`` by the time it is cut from the root.

    Marks are materialized up to the first arrival on every vertex edge (or ``cap``).
    Raises :class:`IncompleteEventsError` when some mass is still attached at
    ``cap``; grow the cap and call again on the same ``marks``.
    """
    if marks is None:
        marks = MarkRealization(tree.skeleton(), params.alpha, seed)
    if tree.mass[0] > 0:
        raise DegenerateInputError("grid mass sits on the root; the grid excursion touches zero inside")
    marks.extend_first(np.arange(tree.n_vertices), cap)
    theta_v = path_min(marks.skeleton.host, marks.segment_min())
    heavy = tree.mass > 0
    if not np.all(np.isfinite(theta_v[heavy])):
        raise IncompleteEventsError(f"mass still attached to the root at horizon {cap}")
    theta, inv = np.unique(theta_v[heavy], return_inverse=True)
    sigma = np.bincount(inv, weights=tree.mass[heavy])
    by_mass = float(np.sum(theta_v[heavy] * tree.mass[heavy]))
    return RemovalEvents(theta, sigma, tree.total_mass, by_mass, theta_v)


@dataclass
class IdentityReport:
    sum_theta_sigma: float
    integral_sigma: float
    theta_by_mass: float
    sum_sigma: float
    total_mass: float
    tolerance: float

    @property
    def max_gap(self) -> float:
        vals = (self.sum_theta_sigma, self.integral_sigma, self.theta_by_mass)
        return max(vals) - min(vals)

    @property
    def passed(self) -> bool:
        scale = self.total_mass
        return (self.max_gap <= self.tolerance * max(self.sum_theta_sigma, scale)
                and abs(self.sum_sigma - self.total_mass) <= self.tolerance * scale)


def theta_identities(events: RemovalEvents, tolerance: float = 1e-9) -> IdentityReport:
    """Three evaluations of Theta on one realization and the conservation of mass."""
    if events.theta.size == 0 or not np.all(np.isfinite(events.theta)):
        raise IncompleteEventsError("events are incomplete")
    return IdentityReport(events.sum_theta_sigma(), events.integral_sigma(), events.theta_by_mass,
                          float(events.sigma.sum()), events.total_mass, tolerance)


@dataclass
class SmallMassReport:
    n: np.ndarray
    A: np.ndarray
    B: np.ndarray
    theta: float
    target: float
    out_of_resolution: np.ndarray

    @property
    def ratio_A(self) -> np.ndarray:
        return self.A / self.target

    @property
    def ratio_B(self) -> np.ndarray:
        return self.B / self.target


def small_mass_asymptotics(events: RemovalEvents, n_grid, params: Params) -> SmallMassReport:
    """``A_n = n^{-1/2} #{sigma^i >= 1/n}`` and ``B_n = n^{1/2} sum sigma^i 1{sigma^i <= 1/n}``.

    Both are compared with ``2 sqrt(alpha/pi) Theta``. ``B_n`` is flagged when ``1/n``
    is below the smallest event mass (the grid cannot resolve it).
    """
    n = np.asarray(n_grid, dtype=float)
    if np.any(n <= 0):
        raise InvalidParameterError("n must be positive")
    s = np.sort(events.sigma)
    csum = np.concatenate([[0.0], np.cumsum(s)])
    thr = 1.0 / n
    n_big = s.size - np.searchsorted(s, thr, side="left")
    small = csum[np.searchsorted(s, thr, side="right")]
    theta = events.sum_theta_sigma()
    return SmallMassReport(
        n=n,
        A=n_big / np.sqrt(n),
        B=np.sqrt(n) * small,
        theta=theta,
        target=2.0 * math.sqrt(params.alpha / math.pi) * theta,
        out_of_resolution=thr < s[0],
    )


def sigma_at(tree: ExcursionTree, params: Params, q: float, stream) -> float:
    """Mass still attached to the root at time ``q`` for one mark realization."""
    marks = MarkRealization(tree.skeleton(), params.alpha, stream)
    marks.extend_first(np.arange(tree.n_vertices), cap=q)
    theta_v = path_min(marks.skeleton.host, marks.segment_min())
    return float(tree.mass[theta_v > q].sum())


def girsanov_target(params: Params, mu: float, q: float) -> float:
    """``N[1 - exp(-mu sigma_q)] = sqrt(mu/alpha + q^2) - q``."""
    if not mu > 0 or q < 0:
        raise InvalidParameterError("need mu > 0 and q >= 0")
    return math.sqrt(mu / params.alpha + q * q) - q


@dataclass
class GirsanovReport:
    estimate: float
    se: float
    target: float
    allowance: float

    @property
    def passed(self) -> bool:
        return abs(self.estimate - self.target) <= 3.0 * self.se + self.allowance * self.target


def girsanov_mass_check(params: Params, mu: float, q: float, replicates: int, seed: int,
                        grid: int = 2000, allowance: float = 0.02) -> GirsanovReport:
    """Importance-sampled ``N[1 - exp(-mu sigma_q)]`` over the total mass.

    The mass ``r`` is drawn from ``g(r) = sqrt(mu)/pi r^{-1/2} / (1 + mu r)``
    (``r = tan(pi V/2)^2 / mu``) and reweighted to the excursion-measure density
    ``r^{-3/2} / (2 sqrt(alpha pi))``. Given ``r``, ``sigma_q`` comes from a grid tree
    of mass ``r`` with its own marks. The weight times ``1 - exp(-mu sigma_q)`` stays
    bounded, so the estimator has finite variance.
    """
    target = girsanov_target(params, mu, q)
    vals = np.empty(replicates)
    for i in range(replicates):
        s_r, s_tree, s_marks = SeedSpec(seed, i).generator().spawn(3)
        t = math.tan(0.5 * math.pi * s_r.random())
        r = t * t / mu
        if r <= 0.0:
            vals[i] = 0.0
            continue
        weight = math.sqrt(math.pi) * (1.0 + mu * r) / (2.0 * math.sqrt(params.alpha * mu) * r)
        tree = sample_excursion_tree(Params(params.alpha, r), grid, s_tree)
        sig = sigma_at(tree, params, q, s_marks)
        vals[i] = weight * -math.expm1(-mu * sig)
    return GirsanovReport(float(vals.mean()), standard_error(vals), target, allowance)


@dataclass
class GraftedMassReport:
    ratios: np.ndarray
    mean: float
    se: float
    allowance: float

    @property
    def passed(self) -> bool:
        return abs(self.mean - 1.0) <= 3.0 * self.se + self.allowance


def grafted_mass_ratio(tree: ExcursionTree, leaves) -> float:
    """Mass grafted on ``T_n*`` over its expected value ``r (L_n - h_root) / L_n``.

    ``T_n`` is spanned by the root and the vertices ``leaves``; the subtrees hanging
    off ``T_n*`` hold exactly the mass of the subtree above the first branch point.
    """
    L = tree.spanned_length(leaves)
    m = tree.lowest_common_ancestor(leaves)
    h_root = float(tree.vertex_height[m])
    mass_star = float(tree.subtree_mass(m))
    return mass_star * L / (tree.total_mass * (L - h_root))


def grafted_mass_check(params: Params, n: int, grid: int, replicates: int, seed: int,
                       allowance: float = 0.02) -> GraftedMassReport:
    ratios = np.empty(replicates)
    for i in range(replicates):
        s_tree, s_leaves = SeedSpec(seed, i).generator().spawn(2)
        tree = sample_excursion_tree(params, grid, s_tree)
        leaves = sample_mass_points(tree, n, s_leaves)
        if np.unique(leaves).size < 2:
            raise DegenerateInputError("sampled leaves do not span a branch point")
        ratios[i] = grafted_mass_ratio(tree, leaves)
    return GraftedMassReport(ratios, float(ratios.mean()), standard_error(ratios), allowance)


def grid_events(params: Params, grid: int, seed: int, replicate: int) -> tuple[ExcursionTree, RemovalEvents]:
    """Grid tree and its removal events for replicate ``replicate``."""
    s_tree, s_marks = SeedSpec(seed, replicate).generator().spawn(2)
    tree = sample_excursion_tree(params, grid, s_tree)
    return tree, removal_events(tree, params, marks=MarkRealization(tree.skeleton(), params.alpha, s_marks))
