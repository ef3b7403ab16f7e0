"""Rooted weighted binary trees and trees coded by a discretized height function.

Two representations live here.

* :class:`WeightedTree` -- an ordered binary tree in Neveu's formalism: vertices are
  words over the positive integers, the empty word ``()`` is the root and every
  vertex ``u`` carries the length ``h_u`` of the edge that ends at ``u``.
* :class:`ExcursionTree` -- the tree coded by a nonnegative grid path
  ``zeta_0, ..., zeta_N`` with ``zeta_0 = zeta_N = 0``, with the mass
  ``step_mass`` of each grid step attached to a tree vertex.

Both can be flattened into a :class:`Skeleton`, a forest of segments each of which
starts at an offset on a host segment. Marks and records are computed on skeletons.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DegenerateInputError, InvalidParameterError, StructuralError

Word = tuple

ROOT: Word = ()


def format_word(word: Word) -> str:
    return "-" if len(word) == 0 else ".".join(str(i) for i in word)


def parse_word(text: str) -> Word:
    text = text.strip()
    if text == "-":
        return ()
    try:
        word = tuple(int(p) for p in text.split("."))
    except ValueError as exc:
        raise StructuralError(f"bad Neveu word {text!r}") from exc
    if any(i < 1 for i in word):
        raise StructuralError(f"bad Neveu word {text!r}")
    return word


@dataclass(frozen=True)
class TreePoint:
    """A point of the tree given as an offset along an edge, measured from its root-side end."""

    edge: Word
    offset: float


@dataclass
class Skeleton:
    """Forest of segments; segment ``s`` starts at offset ``attach[s]`` of segment ``host[s]``.

    ``host[s] == -1`` means ``s`` starts at a root. ``leaves`` lists the segments whose
    tips are leaves, in leaf order, and ``root_cut`` locates the first branch point
    as ``(segment, offset)`` when the tree has at least two leaves.
    """

    host: np.ndarray
    attach: np.ndarray
    length: np.ndarray
    leaves: np.ndarray
    root_cut: tuple | None = None
    _depth: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_segments(self) -> int:
        return int(self.length.size)

    @property
    def tip_attached(self) -> bool:
        """True when every segment hangs from the tip of its host (edge forests)."""
        inner = self.host >= 0
        return bool(np.all(self.attach[inner] == self.length[self.host[inner]]))

    def depth(self) -> np.ndarray:
        """Number of hosts above each segment (0 for segments starting at a root)."""
        if self._depth is None:
            self._depth = _depth_by_levels(self.host)
        return self._depth

    def tile(self, copies: int) -> "Skeleton":
        """``copies`` disjoint copies of this forest, segment ids shifted by ``n_segments``."""
        n = self.n_segments
        shift = (np.arange(copies) * n)[:, None]
        host = np.where(self.host[None, :] >= 0, self.host[None, :] + shift, -1).ravel()
        return Skeleton(
            host=host,
            attach=np.tile(self.attach, copies),
            length=np.tile(self.length, copies),
            leaves=(self.leaves[None, :] + shift).ravel(),
            root_cut=None,
        )


def _depth_by_levels(host: np.ndarray) -> np.ndarray:
    depth = np.zeros(host.size, dtype=np.int64)
    current = np.flatnonzero(host < 0)
    seen = current.size
    order = np.argsort(host, kind="stable")
    sorted_host = host[order]
    d = 0
    while current.size:
        lo = np.searchsorted(sorted_host, current, side="left")
        hi = np.searchsorted(sorted_host, current, side="right")
        counts = hi - lo
        if counts.sum() == 0:
            break
        starts = np.repeat(lo, counts)
        within = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
        children = order[starts + within]
        d += 1
        depth[children] = d
        seen += children.size
        current = children
    if seen != host.size:
        raise StructuralError("segment forest contains a cycle")
    return depth


class WeightedTree:
    """Ordered rooted binary tree with an edge length for every vertex.

    Parameters
    ----------
    lengths : mapping
        Neveu word -> length ``h_u`` of the edge ending at ``u``. The word set must be
        prefix closed, contain the root ``()``, and every vertex must have 0 or 2
        children labelled ``u+(1,)`` and ``u+(2,)``.
    """

    def __init__(self, lengths: Mapping[Word, float]):
        words = sorted(tuple(w) for w in lengths)
        if not words or words[0] != ROOT:
            raise StructuralError("a weighted tree needs the root word ()")
        index = {w: i for i, w in enumerate(words)}
        nchild = [0] * len(words)
        parent = np.full(len(words), -1, dtype=np.int64)
        for i, w in enumerate(words[1:], start=1):
            p = index.get(w[:-1])
            if p is None:
                raise StructuralError(f"word {w} present without its parent {w[:-1]}")
            parent[i] = p
            nchild[p] += 1
        for i, w in enumerate(words):
            k = nchild[i]
            if k not in (0, 2):
                raise StructuralError(f"vertex {w} has {k} children; trees must be binary")
            if k == 2 and (w + (1,) not in index or w + (2,) not in index):
                raise StructuralError(f"children of {w} must be labelled 1 and 2")
        vals = np.array([float(lengths[w]) for w in words])
        if np.any(~np.isfinite(vals)) or np.any(vals < 0):
            raise StructuralError("edge lengths must be finite and nonnegative")
        self.words: list[Word] = words
        self.index: dict[Word, int] = index
        self.lengths: np.ndarray = vals
        self.parent: np.ndarray = parent
        self._nchild = np.array(nchild)
        self.total_length: float = float(vals.sum())

    def __eq__(self, other):
        if not isinstance(other, WeightedTree):
            return NotImplemented
        return self.words == other.words and np.array_equal(self.lengths, other.lengths)

    def __repr__(self):
        return f"WeightedTree(leaves={self.n_leaves}, L={self.total_length:.6g})"

    def __len__(self):
        return len(self.words)

    def length(self, word: Word) -> float:
        return float(self.lengths[self._idx(word)])

    def _idx(self, word: Word) -> int:
        try:
            return self.index[tuple(word)]
        except KeyError:
            raise StructuralError(f"no vertex {word!r} in tree") from None

    def is_leaf(self, word: Word) -> bool:
        return self._nchild[self._idx(word)] == 0

    @property
    def leaves(self) -> list[Word]:
        return [w for w, k in zip(self.words, self._nchild) if k == 0]

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self._nchild == 0))

    @property
    def edge_count(self) -> int:
        return len(self.words)

    def as_dict(self) -> dict[Word, float]:
        return {w: float(h) for w, h in zip(self.words, self.lengths)}

    def shape(self) -> tuple:
        """Topology only, as the sorted tuple of Neveu words."""
        return tuple(self.words)

    def depth_of_ends(self) -> np.ndarray:
        """Distance from the root to the far end of every edge, in word order."""
        out = np.empty(len(self.words))
        for i, p in enumerate(self.parent):
            out[i] = self.lengths[i] + (out[p] if p >= 0 else 0.0)
        return out

    def skeleton(self) -> Skeleton:
        host = self.parent.copy()
        attach = np.where(host >= 0, self.lengths[np.maximum(host, 0)], 0.0)
        leaves = np.flatnonzero(self._nchild == 0)
        root_cut = (0, float(self.lengths[0])) if leaves.size >= 2 else None
        return Skeleton(host=host, attach=attach, length=self.lengths.copy(), leaves=leaves, root_cut=root_cut)


def _check_point(tree: WeightedTree, p: TreePoint) -> int:
    i = tree._idx(p.edge)
    if not (0.0 <= p.offset <= tree.lengths[i]):
        raise StructuralError(f"offset {p.offset} outside edge {p.edge} of length {tree.lengths[i]}")
    return i


def dist_to_root(tree: WeightedTree, p: TreePoint) -> float:
    """Length of the path from the root to ``p``."""
    _check_point(tree, p)
    above = sum(tree.lengths[tree.index[p.edge[:k]]] for k in range(len(p.edge)))
    return float(above + p.offset)


def spanned_length(tree: WeightedTree, leaves: Iterable[Word]) -> float:
    """Total length of the union of the root-to-leaf paths of ``leaves``."""
    covered: set[Word] = set()
    leaves = list(leaves)
    if not leaves:
        raise StructuralError("spanned_length needs at least one leaf")
    for leaf in leaves:
        leaf = tuple(leaf)
        if not tree.is_leaf(leaf):
            raise StructuralError(f"{leaf} is not a leaf")
        covered.update(leaf[:k] for k in range(len(leaf) + 1))
    return float(sum(tree.lengths[tree.index[w]] for w in covered))


def graft(tree: WeightedTree, at: TreePoint, branch_length: float, stream=None, left: bool | None = None):
    """Attach a new leaf edge of length ``branch_length`` at ``at``.

    The hosting edge ``u`` is cut in two: ``u`` keeps the root-side piece and the
    remainder becomes one child of ``u`` carrying the old subtree, the new leaf edge
    the other. The new leaf is child 1 when ``left`` is true; if ``left`` is None a
    fair coin is drawn from ``stream``.

    Returns
    -------
    new_tree : WeightedTree
    relabel : dict
        Old word -> new word for every vertex of ``tree``.
    new_leaf : tuple
        Word of the grafted leaf.
    """
    u = tuple(at.edge)
    i = tree._idx(u)
    h = float(tree.lengths[i])
    if not (branch_length > 0 and np.isfinite(branch_length)):
        raise InvalidParameterError(f"branch_length must be positive, got {branch_length}")
    at_tip = at.offset == h and tree.is_leaf(u)
    if not at_tip and not (0.0 < at.offset < h):
        raise StructuralError(f"graft point must be strictly inside edge {u} (0 < {at.offset} < {h})")
    if left is None:
        if stream is None:
            raise InvalidParameterError("graft needs a stream or an explicit side")
        left = bool(stream.random() < 0.5)
    new_side, old_side = (1, 2) if left else (2, 1)
    relabel = {}
    new_lengths = {}
    k = len(u)
    for w, hw in zip(tree.words, tree.lengths):
        if w[:k] == u:
            nw = u + (old_side,) + w[k:]
            if w == u:
                new_lengths[u] = float(at.offset)
                hw = h - at.offset
        else:
            nw = w
        relabel[w] = nw
        new_lengths[nw] = float(hw)
    new_leaf = u + (new_side,)
    new_lengths[new_leaf] = float(branch_length)
    return WeightedTree(new_lengths), relabel, new_leaf


def first_branch_point(tree: WeightedTree):
    """The first branch point ``m_n`` (far end of the root edge) and its height."""
    if tree.n_leaves < 2:
        raise DegenerateInputError("a single-leaf tree has no branch point")
    return ROOT, float(tree.lengths[0])


# --- excursion-coded trees -------------------------------------------------


def _sparse_min_table(z: np.ndarray) -> list[np.ndarray]:
    table = [z]
    k = 1
    while (1 << k) <= z.size:
        prev = table[-1]
        half = 1 << (k - 1)
        table.append(np.minimum(prev[:-half], prev[half:]))
        k += 1
    return table


def _nearest_lower_or_equal(z: np.ndarray):
    """For every i, the closest j < i and k > i with ``z[j] <= z[i]`` and ``z[k] <= z[i]``.

    Missing neighbours are reported as -1 and ``len(z)``.
    """
    m = z.size
    table = _sparse_min_table(z)
    idx = np.arange(m)
    left = idx.copy()
    right = idx + 1
    for k in reversed(range(len(table))):
        step = 1 << k
        row = table[k]
        # left: skip block z[left-step : left] if all of it is above z
        cand = left - step
        ok = cand >= 0
        blk = np.full(m, -np.inf)
        blk[ok] = row[cand[ok]]
        left = np.where(ok & (blk > z), cand, left)
        # right: skip block z[right : right+step]
        ok = right + step <= m
        blk = np.full(m, -np.inf)
        blk[ok] = row[right[ok]]
        right = np.where(ok & (blk > z), right + step, right)
    return left - 1, right


@dataclass
class ExcursionTree:
    """Tree coded by a grid height function, with per-vertex mass.

    Vertices are the distinct tree points hit by grid times, numbered in order of
    first visit (vertex 0 is the root). ``parent[v]`` is the closest grid vertex
    below ``v``; the segment from ``parent[v]`` to ``v`` has length
    ``vertex_height[v] - vertex_height[parent[v]]``. The mass of grid step
    ``[i, i+1]`` sits at the higher of its two endpoints. The subtree above ``v`` is
    coded by the grid times strictly between ``span_lo[v]`` and ``span_hi[v]``.
    """

    heights: np.ndarray
    step_mass: float
    total_mass: float
    vertex_of_time: np.ndarray
    parent: np.ndarray
    vertex_height: np.ndarray
    mass: np.ndarray
    first_time: np.ndarray
    last_time: np.ndarray
    span_lo: np.ndarray
    span_hi: np.ndarray

    @property
    def n_steps(self) -> int:
        return self.heights.size - 1

    @property
    def n_vertices(self) -> int:
        return self.parent.size

    @property
    def edge_length(self) -> np.ndarray:
        out = self.vertex_height - self.vertex_height[np.maximum(self.parent, 0)]
        out[0] = 0.0
        return out

    @property
    def total_length(self) -> float:
        return float(self.edge_length.sum())

    def distance(self, s: int, t: int) -> float:
        """Coding pseudo-distance ``zeta_s + zeta_t - 2 min zeta[s..t]``."""
        lo, hi = min(s, t), max(s, t)
        z = self.heights
        return float(z[s] + z[t] - 2.0 * z[lo:hi + 1].min())

    def subtree_mass(self, v) -> np.ndarray:
        """Mass of the subtree above ``v``: grid steps inside the time window where ``zeta >= zeta_v``."""
        v = np.asarray(v)
        steps = self.span_hi[v] - self.span_lo[v]
        return np.where(v == 0, self.total_mass, steps * self.step_mass)

    def spanned_length(self, vertices) -> float:
        """Length of the subtree spanned by the root and ``vertices``."""
        t = np.sort(self.first_time[np.unique(vertices)])
        z = self.heights
        gaps = [z[a:b + 1].min() for a, b in zip(t[:-1], t[1:])]
        return float(z[t].sum() - np.sum(gaps))

    def lowest_common_ancestor(self, vertices) -> int:
        t = self.first_time[np.asarray(vertices)]
        lo, hi = int(t.min()), int(t.max())
        return int(self.vertex_of_time[lo + int(np.argmin(self.heights[lo:hi + 1]))])

    def children(self) -> list[list[int]]:
        kids: list[list[int]] = [[] for _ in range(self.n_vertices)]
        for v in range(1, self.n_vertices):
            kids[self.parent[v]].append(v)
        return kids

    def skeleton(self) -> Skeleton:
        """Segment forest with one segment per vertex; the root is a zero-length segment."""
        host = self.parent.copy()
        length = self.edge_length
        attach = np.where(host >= 0, length[np.maximum(host, 0)], 0.0)
        kids = np.bincount(self.parent[1:], minlength=self.n_vertices)
        return Skeleton(host=host, attach=attach, length=length, leaves=np.flatnonzero(kids == 0))

    def to_weighted_tree(self):
        """Merge chains of one-child vertices into edges.

        Returns the binary :class:`WeightedTree` together with the mass atoms of each
        edge as a dict ``word -> [(offset, mass), ...]``.
        """
        kids = self.children()
        if len(kids[0]) != 1:
            raise StructuralError("root must have exactly one child to form a root edge")
        lengths: dict[Word, float] = {}
        atoms: dict[Word, list] = {}
        h = self.vertex_height
        stack = [(ROOT, kids[0][0], 0)]
        while stack:
            word, v, start = stack.pop()
            base = h[start]
            pieces = []
            while True:
                if self.mass[v] > 0:
                    pieces.append((float(h[v] - base), float(self.mass[v])))
                if len(kids[v]) == 1:
                    v = kids[v][0]
                    continue
                break
            if len(kids[v]) > 2:
                raise StructuralError(f"vertex {v} has {len(kids[v])} children")
            lengths[word] = float(h[v] - base)
            atoms[word] = pieces
            for j, c in enumerate(kids[v], start=1):
                stack.append((word + (j,), c, v))
        return WeightedTree(lengths), atoms


def excursion_to_tree(heights, step_mass: float, total_mass: float | None = None) -> ExcursionTree:
    """Build the tree coded by ``heights`` (``zeta_0 = zeta_N = 0``, all ``>= 0``).

    Grid times ``s ~ t`` are identified when ``d(s, t) = 0``. The construction is the
    vectorized form of the usual stack walk: the parent of a vertex is the higher of
    the previous strictly lower value before its first visit and the next strictly
    lower value after its last visit.
    """
    z = np.asarray(heights, dtype=float).copy()
    if z.ndim != 1 or z.size < 2:
        raise InvalidParameterError("need at least two heights")
    if np.any(~np.isfinite(z)) or np.any(z < 0):
        raise InvalidParameterError("heights must be finite and nonnegative")
    if z[0] != 0 or z[-1] != 0:
        raise InvalidParameterError("heights must start and end at 0")
    if not step_mass > 0:
        raise InvalidParameterError("step_mass must be positive")
    m = z.size
    idx = np.arange(m)
    left, right = _nearest_lower_or_equal(z)
    first = (left < 0) | (z[np.maximum(left, 0)] < z)
    rep = np.where(first, idx, left)
    while True:
        nxt = rep[rep]
        if np.array_equal(nxt, rep):
            break
        rep = nxt
    vid_of_first = np.cumsum(first) - 1
    vertex_of_time = vid_of_first[rep]
    first_time = idx[first]
    nv = first_time.size
    last_time = np.zeros(nv, dtype=np.int64)
    np.maximum.at(last_time, vertex_of_time, idx)

    parent = np.full(nv, -1, dtype=np.int64)
    if nv > 1:
        f = first_time[1:]
        a = left[f]
        b = right[last_time[1:]]
        ptime = np.where(z[a] >= z[b], a, b)
        parent[1:] = vertex_of_time[ptime]

    hi = np.where(z[1:] >= z[:-1], idx[1:], idx[:-1])
    counts = np.bincount(vertex_of_time[hi], minlength=nv)
    n = m - 1
    return ExcursionTree(
        heights=z,
        step_mass=float(step_mass),
        total_mass=float(n * step_mass if total_mass is None else total_mass),
        vertex_of_time=vertex_of_time,
        parent=parent,
        vertex_height=z[first_time],
        mass=counts * float(step_mass),
        first_time=first_time,
        last_time=last_time,
        span_lo=left[first_time],
        span_hi=right[last_time],
    )


# --- text serialization ------------------------------------------------------


def dumps_weighted_tree(tree: WeightedTree) -> str:
    """One line per vertex, ``<word> <length>``; the root word is written ``-``."""
    return "".join(f"{format_word(w)} {float(h)!r}\n" for w, h in zip(tree.words, tree.lengths))


def loads_weighted_tree(text: str) -> WeightedTree:
    lengths = {}
    for lineno, line in enumerate(io.StringIO(text), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise StructuralError(f"line {lineno}: expected '<word> <length>'")
        lengths[parse_word(parts[0])] = float(parts[1])
    return WeightedTree(lengths)


def dumps_heights(tree: ExcursionTree) -> str:
    head = f"# step_mass {tree.step_mass!r}\n"
    return head + "".join(f"{float(h)!r}\n" for h in tree.heights)


def loads_heights(text: str) -> ExcursionTree:
    step_mass = None
    vals = []
    for line in io.StringIO(text):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            if len(parts) == 2 and parts[0] == "step_mass":
                step_mass = float(parts[1])
            continue
        vals.append(float(line))
    heights = np.array(vals)
    if step_mass is None:
        step_mass = 1.0 / max(heights.size - 1, 1)
    return excursion_to_tree(heights, step_mass)


def leaf_words_of(tree: WeightedTree, segments: Sequence[int]) -> list[Word]:
    return [tree.words[int(s)] for s in segments]
