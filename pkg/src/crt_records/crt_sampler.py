"""Samplers for spanned subtrees (line-breaking) and grid-discretized full trees.

Line-breaking is stored as a list of *sticks*. Stick ``k`` is the segment added at
step ``k``: it has length ``eta_k - eta_{k-1}``, it is attached at offset
``offset[k]`` of stick ``host[k]`` and its far end is leaf ``k``. Laying the sticks
end to end gives the global coordinate ``[0, eta_{k-1}]`` in which the uniform
attachment point of step ``k`` is drawn. Sticks are never cut by later grafts, so
the first ``k`` sticks of a sample *are* the step-``k`` tree; the binary
:class:`WeightedTree` view (edges cut at every attachment) is built on demand.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import DegenerateInputError, InvalidParameterError
from .randkit import SeedLike, as_generator
from .tree_core import ExcursionTree, Skeleton, WeightedTree, excursion_to_tree


@dataclass(frozen=True)
class Params:
    """Branching parameter ``alpha`` and total mass ``r``."""

    alpha: float
    r: float = 1.0

    def __post_init__(self):
        for name in ("alpha", "r"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float, np.floating)) and math.isfinite(v) and v > 0):
                raise InvalidParameterError(f"{name} must be positive and finite, got {v!r}")


@dataclass
class NestedSample:
    """Nested spanned trees ``T_1 ⊂ T_2 ⊂ ... ⊂ T_n`` on one realization.

    Attributes
    ----------
    eta : ndarray
        Cumulative lengths, ``eta[k-1] = L_k``.
    host, offset : ndarray
        Stick ``k >= 1`` starts at ``offset[k]`` along stick ``host[k]``; ``host[0] = -1``.
    coins : ndarray of bool
        ``coins[k]`` is true when stick ``k`` becomes child 1 at its graft point.
    """

    params: Params
    eta: np.ndarray
    host: np.ndarray
    offset: np.ndarray
    coins: np.ndarray
    _tree: tuple | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return int(self.eta.size)

    @property
    def total_length(self) -> float:
        return float(self.eta[-1])

    @property
    def stick_length(self) -> np.ndarray:
        return np.diff(self.eta, prepend=0.0)

    @property
    def h_root(self) -> float:
        """Distance from the root to the first branch point ``m_n``."""
        if self.n < 2:
            raise DegenerateInputError("a single-leaf tree has no branch point")
        return float(self.offset[1:][self.host[1:] == 0].min())

    def h_root_prefix(self) -> np.ndarray:
        """``h_root`` of every prefix ``T_k``; entry ``k-1`` is for ``k`` leaves (``inf`` at k=1)."""
        on_root = np.where(self.host == 0, self.offset, np.inf)
        on_root[0] = np.inf
        return np.minimum.accumulate(on_root)

    def restrict(self, k: int) -> "NestedSample":
        if not 1 <= k <= self.n:
            raise InvalidParameterError(f"cannot restrict {self.n} leaves to {k}")
        return NestedSample(self.params, self.eta[:k].copy(), self.host[:k].copy(),
                            self.offset[:k].copy(), self.coins[:k].copy())

    def skeleton(self) -> Skeleton:
        """Stick forest; leaf ``k`` is the tip of stick ``k``."""
        root_cut = (0, self.h_root) if self.n >= 2 else None
        return Skeleton(host=self.host.copy(), attach=np.where(self.host >= 0, self.offset, 0.0),
                        length=self.stick_length, leaves=np.arange(self.n), root_cut=root_cut)

    def edge_skeleton(self) -> Skeleton:
        """Binary edge forest (sticks cut at attachment points), leaves in arrival order.

        Edges are numbered stick by stick, root side first, so edge ``piece_start[s]``
        is the lowest piece of stick ``s``.
        """
        n = self.n
        length = self.stick_length
        cnt = np.bincount(self.host[1:], minlength=n) if n > 1 else np.zeros(1, dtype=np.int64)
        pieces = cnt + 1
        start = np.concatenate([[0], np.cumsum(pieces)[:-1]])
        n_edges = int(pieces.sum())
        kids = np.arange(1, n)
        order = kids[np.lexsort((kids, self.offset[1:], self.host[1:]))]
        h_sorted = self.host[order]
        # rank of each child among the attachments on its host
        first = np.searchsorted(h_sorted, h_sorted, side="left")
        rank = np.arange(order.size) - first
        # breakpoints of every stick: 0, attachment offsets, stick length
        ends = np.empty(n_edges)
        ends[start + cnt] = length
        ends[start[h_sorted] + rank] = self.offset[order]
        begins = np.empty(n_edges)
        begins[start] = 0.0
        begins[start[h_sorted] + rank + 1] = self.offset[order]
        parent = np.full(n_edges, -1, dtype=np.int64)
        parent[start[h_sorted] + rank + 1] = start[h_sorted] + rank
        parent[start[order]] = start[h_sorted] + rank
        edge_len = ends - begins
        attach = np.where(parent >= 0, edge_len[np.maximum(parent, 0)], 0.0)
        leaves = start + cnt
        root_cut = (0, float(edge_len[0])) if n >= 2 else None
        return Skeleton(host=parent, attach=attach, length=edge_len, leaves=leaves, root_cut=root_cut)

    def _build_tree(self):
        n = self.n
        length = self.stick_length
        on_stick: list[list[tuple[float, int]]] = [[] for _ in range(n)]
        for k in range(1, n):
            on_stick[self.host[k]].append((float(self.offset[k]), k))
        lengths = {}
        edge_map = {}
        leaf_words = [None] * n
        stack = [((), 0)]
        while stack:
            word, s = stack.pop()
            pos = 0.0
            for off, c in sorted(on_stick[s]):
                lengths[word] = off - pos
                edge_map[word] = (s, pos)
                new_side, old_side = (1, 2) if self.coins[c] else (2, 1)
                stack.append((word + (new_side,), c))
                word = word + (old_side,)
                pos = off
            lengths[word] = float(length[s]) - pos
            edge_map[word] = (s, pos)
            leaf_words[s] = word
        return WeightedTree(lengths), leaf_words, edge_map

    def _cached(self):
        if self._tree is None:
            self._tree = self._build_tree()
        return self._tree

    @property
    def tree(self) -> WeightedTree:
        return self._cached()[0]

    @property
    def leaf_order(self) -> list:
        """Neveu word of leaf ``k`` (the tip of stick ``k``) in arrival order."""
        return self._cached()[1]

    @property
    def edge_map(self) -> dict:
        """Neveu word -> (stick, offset on that stick where the edge starts)."""
        return self._cached()[2]


def sample_spanned_tree(params: Params, n: int, seed: SeedLike) -> NestedSample:
    """Sequential line-breaking with ``eta_k = sqrt(r Gamma_k / alpha)``.

    Each quantity (gamma increments, attachment uniforms, side coins) comes from its
    own substream, so ``sample_spanned_tree(p, n, s).restrict(k)`` equals
    ``sample_spanned_tree(p, k, s)`` exactly.
    """
    if int(n) != n or n < 1:
        raise InvalidParameterError(f"n must be a positive integer, got {n!r}")
    n = int(n)
    rng = as_generator(seed)
    s_gamma, s_attach, s_coin = rng.spawn(3)
    gamma = np.cumsum(s_gamma.standard_exponential(n))
    eta = np.sqrt(params.r * gamma / params.alpha)
    prev = np.concatenate([[0.0], eta[:-1]])
    u = s_attach.random(n) * prev
    # side="left" sends a point on a stick boundary to the root-side (earlier) stick
    host = np.searchsorted(eta, u, side="left").astype(np.int64)
    host[0] = -1
    offset = u - np.where(host > 0, eta[np.maximum(host - 1, 0)], 0.0)
    offset[0] = 0.0
    coins = s_coin.random(n) < 0.5
    return NestedSample(params, eta, host, offset, coins)


def log_joint_density(params: Params, n: int, h) -> float:
    h = np.asarray(h, dtype=float)
    if h.shape != (2 * n - 1,):
        raise InvalidParameterError(f"need {2 * n - 1} edge lengths, got shape {h.shape}")
    if np.any(~np.isfinite(h)) or np.any(h <= 0):
        raise InvalidParameterError("edge lengths must be positive")
    a, r = params.alpha, params.r
    L = float(h.sum())
    return (math.log(2.0) + special.gammaln(2 * n - 1) - special.gammaln(n)
            + n * math.log(a / r) + math.log(L) - a * L * L / r)


def joint_density(params: Params, n: int, h) -> float:
    """Density of the ``2n-1`` edge lengths of the spanned tree with ``n`` leaves.

    ``2 (2n-2)!/(n-1)! (alpha/r)^n L exp(-alpha L^2 / r)``, a function of ``L = sum h``.
    """
    return math.exp(log_joint_density(params, n, h))


def sample_excursion(N: int, stream) -> np.ndarray:
    """Normalized excursion on the grid ``i/N``: bridge of a Gaussian walk, cyclically shifted at its minimum."""
    steps = stream.standard_normal(N) / math.sqrt(N)
    walk = np.concatenate([[0.0], np.cumsum(steps)])
    bridge = walk - np.arange(N + 1) / N * walk[-1]
    m = int(np.argmin(bridge[:N]))
    e = np.concatenate([bridge[m:N], bridge[:m], [bridge[m]]]) - bridge[m]
    e[0] = e[-1] = 0.0
    return np.maximum(e, 0.0)


def sample_excursion_tree(params: Params, N: int, seed: SeedLike) -> ExcursionTree:
    """Grid tree with heights ``sqrt(2r/alpha) e(i/N)`` and step mass ``r/N``."""
    if int(N) != N or N < 2:
        raise InvalidParameterError(f"grid size N must be an integer >= 2, got {N!r}")
    N = int(N)
    rng = as_generator(seed)
    e = sample_excursion(N, rng)
    heights = math.sqrt(2.0 * params.r / params.alpha) * e
    return excursion_to_tree(heights, params.r / N, total_mass=params.r)


def sample_mass_points(tree: ExcursionTree, n: int, stream) -> np.ndarray:
    """Vertices carrying ``n`` iid points of the normalized mass measure."""
    steps = stream.integers(0, tree.n_steps, size=n)
    z = tree.heights
    hi = np.where(z[steps + 1] >= z[steps], steps + 1, steps)
    return tree.vertex_of_time[hi]
