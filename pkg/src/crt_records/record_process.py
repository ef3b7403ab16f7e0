"""Poisson marks on a tree, the record function theta, records and the half-line chain.

Marks form a Poisson point process on (tree x time) with intensity ``2 alpha`` per
unit length per unit time. They are sampled lazily per segment of a
:class:`~crt_records.tree_core.Skeleton` up to a per-segment horizon that only ever
grows, so every query made on one :class:`MarkRealization` refers to the same
underlying realization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .crt_sampler import NestedSample, Params, sample_spanned_tree
from .errors import DegenerateInputError, DomainError, InvalidParameterError, StructuralError
from .randkit import RayleighLaw, SeedLike, SeedSpec, as_generator, ks_statistic
from .tree_core import Skeleton, WeightedTree


def replicate_streams(seed: int, replicate: int, k: int = 2) -> list[np.random.Generator]:
    """Independent substreams for replicate ``replicate`` of a sweep seeded with ``seed``."""
    return SeedSpec(seed, replicate).generator().spawn(k)


class MarkRealization:
    """Lazily materialized Poisson marks on the segments of a skeleton.

    Parameters
    ----------
    skeleton : Skeleton
    alpha : float
        Marks arrive at rate ``2 alpha`` per unit length and unit time.
    seed : int, SeedSpec or Generator
    """

    def __init__(self, skeleton: Skeleton, alpha: float, seed: SeedLike):
        if not alpha > 0:
            raise InvalidParameterError("alpha must be positive")
        self.skeleton = skeleton
        self.alpha = float(alpha)
        self.rng = as_generator(seed)
        self.horizon = np.zeros(skeleton.n_segments)
        self.count = np.zeros(skeleton.n_segments, dtype=np.int64)
        self._chunks: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = []
        self._flat = None

    @property
    def length(self) -> np.ndarray:
        return self.skeleton.length

    def grow(self, skeleton: Skeleton) -> None:
        """Switch to a larger skeleton whose first segments are the current ones."""
        s = self.skeleton.n_segments
        if skeleton.n_segments < s or not (
            np.array_equal(skeleton.host[:s], self.skeleton.host)
            and np.array_equal(skeleton.attach[:s], self.skeleton.attach)
            and np.array_equal(skeleton.length[:s], self.skeleton.length)
        ):
            raise StructuralError("new skeleton must extend the current one")
        extra = skeleton.n_segments - s
        self.skeleton = skeleton
        self.horizon = np.concatenate([self.horizon, np.zeros(extra)])
        self.count = np.concatenate([self.count, np.zeros(extra, dtype=np.int64)])

    def _add(self, seg, off, time):
        if seg.size:
            self._chunks.append((seg, off, time))
            np.add.at(self.count, seg, 1)
            self._flat = None

    def extend_to(self, segs, H) -> None:
        """Materialize every mark with time <= ``H`` on ``segs`` (``H`` finite, scalar or per segment)."""
        segs = np.asarray(segs, dtype=np.int64)
        H = np.broadcast_to(np.asarray(H, dtype=float), segs.shape)
        if np.any(~np.isfinite(H)):
            raise InvalidParameterError("extend_to needs a finite horizon")
        need = H > self.horizon[segs]
        s, Hs = segs[need], H[need]
        if s.size == 0:
            return
        h0 = self.horizon[s]
        dh = Hs - h0
        k = self.rng.poisson(2.0 * self.alpha * self.length[s] * dh)
        total = int(k.sum())
        seg = np.repeat(s, k)
        off = self.rng.random(total) * self.length[seg]
        time = np.repeat(h0, k) + self.rng.random(total) * np.repeat(dh, k)
        self._add(seg, off, time)
        self.horizon[s] = Hs

    def extend_first(self, segs, cap: float = np.inf) -> None:
        """Make sure each of ``segs`` carries a mark, or has horizon ``cap`` if none arrives before it."""
        segs = np.asarray(segs, dtype=np.int64)
        s = segs[(self.count[segs] == 0) & (self.horizon[segs] < cap)]
        if s.size == 0:
            return
        rate = 2.0 * self.alpha * self.length[s]
        e = self.rng.standard_exponential(s.size)
        with np.errstate(divide="ignore"):
            t = self.horizon[s] + e / rate
        hit = t <= cap
        seg = s[hit]
        self._add(seg, self.rng.random(seg.size) * self.length[seg], t[hit])
        self.horizon[s] = np.where(hit, t, cap)

    def marks(self):
        """All materialized marks as ``(segment, offset, time)`` sorted by segment then offset."""
        if self._flat is None:
            if self._chunks:
                seg = np.concatenate([c[0] for c in self._chunks])
                off = np.concatenate([c[1] for c in self._chunks])
                time = np.concatenate([c[2] for c in self._chunks])
                o = np.lexsort((off, seg))
                self._flat = (seg[o], off[o], time[o])
                self._chunks = [self._flat]
            else:
                empty = np.empty(0)
                self._flat = (np.empty(0, dtype=np.int64), empty, empty)
        return self._flat

    def marks_on(self, segs):
        seg, off, time = self.marks()
        keep = np.isin(seg, segs)
        return seg[keep], off[keep], time[keep]

    def segment_min(self) -> np.ndarray:
        """Smallest materialized mark time per segment (inf when none)."""
        seg, _, time = self.marks()
        out = np.full(self.skeleton.n_segments, np.inf)
        np.minimum.at(out, seg, time)
        return out

    def lowest_offset(self, segs) -> np.ndarray:
        """Offset of the lowest materialized mark on each of ``segs`` (inf when none)."""
        seg, off, _ = self.marks()
        segs = np.asarray(segs, dtype=np.int64)
        out = np.full(segs.size, np.inf)
        if seg.size:
            i = np.minimum(np.searchsorted(seg, segs, side="left"), seg.size - 1)
            ok = seg[i] == segs
            out[ok] = off[i[ok]]
        return out

    def resolve_unbounded(self, segs, lowest) -> None:
        """Grow horizons (doubling) until each segment has a mark at offset <= ``lowest``.

        Afterwards the minimum mark time over ``[0, o]`` is exact for every ``o >= lowest``.
        """
        segs = np.asarray(segs, dtype=np.int64)
        lowest = np.asarray(lowest, dtype=float)
        self.extend_first(segs)
        while True:
            need = self.lowest_offset(segs) > lowest
            if not np.any(need):
                return
            s = segs[need]
            self.extend_to(s, 2.0 * self.horizon[s])


def path_min(host: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Minimum of ``values`` over each segment and all its ancestors (pointer jumping)."""
    m = np.asarray(values, dtype=float).copy()
    anc = np.asarray(host, dtype=np.int64).copy()
    live = np.flatnonzero(anc >= 0)
    while live.size:
        a = anc[live]
        m_new = np.minimum(m[live], m[a])
        anc_new = anc[a]
        m[live] = m_new
        anc[live] = anc_new
        live = live[anc_new >= 0]
    return m


def theta_at_tips(marks: MarkRealization, cap: float = np.inf) -> np.ndarray:
    """theta at the tip of every segment of an edge forest (children hang from tips).

    Only the first mark of each segment matters there, so one arrival per segment
    and a path minimum suffice.
    """
    skel = marks.skeleton
    if not skel.tip_attached:
        raise StructuralError("theta_at_tips needs segments attached at the tips of their hosts")
    marks.extend_first(np.arange(skel.n_segments), cap)
    return path_min(skel.host, marks.segment_min())


@dataclass
class SweepResult:
    start_theta: np.ndarray
    tip_theta: np.ndarray
    extra_theta: np.ndarray
    rec_seg: np.ndarray
    rec_off: np.ndarray
    rec_time: np.ndarray
    resolved_from: np.ndarray


def _level_slices(level: np.ndarray, n_levels: int):
    order = np.argsort(level, kind="stable")
    bounds = np.searchsorted(level[order], np.arange(n_levels + 1))
    return order, bounds


def sweep(marks: MarkRealization, extra_seg=None, extra_off=None) -> SweepResult:
    """Running-minimum sweep from the root outwards, one depth level at a time.

    For every segment the marks with time below theta at its start are sampled,
    merged with the query points (child attachments, tip, ``extra`` points) in
    offset order, and a segmented cumulative minimum gives theta along the segment.
    A mark is a record when it equals the running minimum at its own offset.
    Segments with theta = inf at their start (the root) are resolved by doubling
    the horizon until a mark lies below the lowest query offset; records under that
    offset are not reported (``resolved_from``).
    """
    skel = marks.skeleton
    S = skel.n_segments
    host, attach, length = skel.host, skel.attach, skel.length
    depth = skel.depth()
    n_levels = int(depth.max()) + 1 if S else 0
    seg_order, seg_bounds = _level_slices(depth, n_levels)
    kids = np.flatnonzero(host >= 0)
    kid_order, kid_bounds = _level_slices(depth[host[kids]], n_levels)
    kids = kids[kid_order]
    extra_seg = np.asarray([] if extra_seg is None else extra_seg, dtype=np.int64)
    extra_off = np.asarray([] if extra_off is None else extra_off, dtype=float)
    ex_order, ex_bounds = _level_slices(depth[extra_seg], n_levels)

    A = np.full(S, np.inf)
    tip = np.full(S, np.nan)
    ex_val = np.full(extra_seg.size, np.nan)
    resolved = np.zeros(S)
    recs = []
    for d in range(n_levels):
        segs = seg_order[seg_bounds[d]:seg_bounds[d + 1]]
        qk = kids[kid_bounds[d]:kid_bounds[d + 1]]
        qx = ex_order[ex_bounds[d]:ex_bounds[d + 1]]
        q_seg = np.concatenate([host[qk], segs, extra_seg[qx]])
        q_off = np.concatenate([attach[qk], length[segs], extra_off[qx]])

        a = A[segs]
        fin = np.isfinite(a)
        marks.extend_to(segs[fin], a[fin])
        unb = np.sort(segs[~fin])
        if unb.size:
            lowest = np.full(unb.size, np.inf)
            pos = q_off > 0
            idx = np.searchsorted(unb, q_seg[pos])
            hit = (idx < unb.size) & (unb[np.minimum(idx, unb.size - 1)] == q_seg[pos])
            np.minimum.at(lowest, idx[hit], q_off[pos][hit])
            todo = np.isfinite(lowest) & (length[unb] > 0)
            marks.resolve_unbounded(unb[todo], lowest[todo])
            resolved[unb] = np.where(todo, lowest, length[unb])

        ms, mo, mt = marks.marks_on(segs)
        keep = mt < A[ms]
        ms, mo, mt = ms[keep], mo[keep], mt[keep]

        e_seg = np.concatenate([segs, ms, q_seg])
        e_off = np.concatenate([np.full(segs.size, -1.0), mo, q_off])
        e_kind = np.concatenate([np.zeros(segs.size, np.int8), np.ones(ms.size, np.int8),
                                 np.full(q_seg.size, 2, np.int8)])
        e_val = np.concatenate([a, mt, np.full(q_seg.size, np.inf)])
        o = np.lexsort((e_kind, e_off, e_seg))
        vals = e_val[o]
        group = np.cumsum(np.r_[True, e_seg[o][1:] != e_seg[o][:-1]]) - 1
        M = vals.size
        rank_order = np.argsort(vals, kind="stable")
        rank = np.empty(M, dtype=np.int64)
        rank[rank_order] = np.arange(M)
        key = rank - M * group
        run = np.minimum.accumulate(key) + M * group
        run_val = vals[rank_order][run]
        out = np.empty(M)
        out[o] = run_val

        nm = ms.size
        is_rec = out[segs.size:segs.size + nm] == mt
        is_rec &= mo >= resolved[ms]
        recs.append((ms[is_rec], mo[is_rec], mt[is_rec]))
        qv = out[segs.size + nm:]
        A[qk] = qv[:qk.size]
        tip[segs] = qv[qk.size:qk.size + segs.size]
        ex_val[qx] = qv[qk.size + segs.size:]

    if recs:
        rs, ro, rt = (np.concatenate(x) for x in zip(*recs))
    else:
        rs, ro, rt = np.empty(0, np.int64), np.empty(0), np.empty(0)
    return SweepResult(A, tip, ex_val, rs, ro, rt, resolved)


@dataclass
class RecordOutcome:
    """Records on ``T_n*`` and the record function at the leaves of ``T_n``."""

    n: int
    theta_at_leaf: np.ndarray
    theta_m: float
    x_star: int
    rec_seg: np.ndarray
    rec_off: np.ndarray
    rec_time: np.ndarray
    total_length: float
    h_root: float

    @property
    def records(self) -> list[tuple[int, float, float]]:
        return list(zip(self.rec_seg.tolist(), self.rec_off.tolist(), self.rec_time.tolist()))


def _as_skeleton(tree):
    if isinstance(tree, (NestedSample, WeightedTree)):
        return tree.skeleton()
    if isinstance(tree, Skeleton):
        return tree
    raise InvalidParameterError(f"cannot take a skeleton of {type(tree).__name__}")


def simulate_records(tree, params: Params, seed: SeedLike | None = None,
                     marks: MarkRealization | None = None) -> RecordOutcome:
    """Records of the mark process on ``T_n*`` (the tree minus its root edge ``[root, m_n)``).

    ``tree`` is a :class:`NestedSample` (leaves in arrival order) or a
    :class:`WeightedTree` (leaves in word order). Records are counted strictly
    inside edges; a record exactly at ``m_n`` has probability zero.
    """
    skel = marks.skeleton if marks is not None else _as_skeleton(tree)
    if skel.root_cut is None:
        raise DegenerateInputError("T_n* is empty for a single-leaf tree")
    cut_seg, cut_off = skel.root_cut
    if skel.host[cut_seg] != -1:
        raise StructuralError("the first branch point must lie on a root segment")
    if marks is None:
        if seed is None:
            raise InvalidParameterError("simulate_records needs a seed or a mark realization")
        marks = MarkRealization(skel, params.alpha, seed)
    res = sweep(marks, [cut_seg], [cut_off])
    below = (res.rec_seg == cut_seg) & (res.rec_off < cut_off)
    keep = ~below
    return RecordOutcome(
        n=int(skel.leaves.size),
        theta_at_leaf=res.tip_theta[skel.leaves],
        theta_m=float(res.extra_theta[0]),
        x_star=int(keep.sum()),
        rec_seg=res.rec_seg[keep],
        rec_off=res.rec_off[keep],
        rec_time=res.rec_time[keep],
        total_length=float(skel.length.sum()),
        h_root=float(cut_off),
    )


@dataclass
class CoupledRecords:
    """Record counts and Theta estimates of ``T_n`` for several ``n`` on one realization."""

    n: np.ndarray
    x_star: np.ndarray
    theta_hat: np.ndarray
    theta_m: np.ndarray
    h_root: np.ndarray
    total_length: np.ndarray


def coupled_records(sample: NestedSample, params: Params, n_values, seed: SeedLike | None = None,
                    marks: MarkRealization | None = None) -> CoupledRecords:
    """One sweep over ``T_{n_max}`` read off for every ``n`` in ``n_values``.

    Sticks ``0..n-1`` are exactly ``T_n`` and the path to any point only uses sticks
    with smaller index, so records and leaf values of ``T_n`` are those of the big
    tree restricted to its first ``n`` sticks.
    """
    n_values = np.asarray(sorted(set(int(v) for v in n_values)))
    if n_values[0] < 2 or n_values[-1] > sample.n:
        raise InvalidParameterError("each n must lie in [2, sample.n]")
    skel = sample.skeleton()
    if marks is None:
        marks = MarkRealization(skel, params.alpha, seed)
    h_pref = sample.h_root_prefix()[n_values - 1]
    res = sweep(marks, np.zeros(n_values.size, dtype=np.int64), h_pref)
    xs, th = [], []
    for n, h in zip(n_values, h_pref):
        inside = (res.rec_seg < n) & ~((res.rec_seg == 0) & (res.rec_off < h))
        xs.append(int(inside.sum()))
        th.append(params.r / n * float(res.tip_theta[:n].sum()))
    return CoupledRecords(n_values, np.array(xs), np.array(th), res.extra_theta.copy(),
                          h_pref, sample.eta[n_values - 1].copy())


def theta_on_path(marks: MarkRealization, seg: int, offset: float, cap: float = np.inf) -> float:
    """theta at the point ``offset`` of segment ``seg``: first mark time on its root path.

    Horizons on the path are doubled until a mark below the common horizon lies on
    the path, or ``cap`` is reached (then ``cap`` is returned if nothing was found).
    Returns ``inf`` at a root.
    """
    skel = marks.skeleton
    if not 0 <= seg < skel.n_segments or not 0.0 <= offset <= skel.length[seg]:
        raise StructuralError(f"no point at offset {offset} of segment {seg}")
    path, upto = [int(seg)], [float(offset)]
    while skel.host[path[-1]] >= 0:
        upto.append(float(skel.attach[path[-1]]))
        path.append(int(skel.host[path[-1]]))
    path_arr, upto_arr = np.array(path), np.array(upto)
    total = float(np.sum(upto_arr))
    if total == 0.0:
        return np.inf if math.isinf(cap) else float(cap)
    H = max(float(marks.horizon[path_arr].min()), 1.0 / (2.0 * marks.alpha * total))
    while True:
        H = min(H, cap)
        marks.extend_to(path_arr, H)
        s, o, t = marks.marks_on(path_arr)
        best = np.inf
        for p, u in zip(path, upto):
            sel = (s == p) & (o <= u) & (t <= H)
            if np.any(sel):
                best = min(best, float(t[sel].min()))
        if best < np.inf:
            return best
        if H >= cap:
            return float(cap)
        H *= 2.0


def theta_hat(theta_at_leaf, params: Params, n: int | None = None) -> float:
    """Mass-measure estimate ``(r/n) sum_k theta(U_k)`` of ``Theta``."""
    th = np.asarray(theta_at_leaf, dtype=float)
    n = th.size if n is None else n
    if th.size != n:
        raise InvalidParameterError(f"expected {n} leaf values, got {th.size}")
    return params.r / n * float(th.sum())


def theta_hat_replicate(params: Params, n: int, seed: int, replicate: int) -> tuple[float, float, float]:
    """Theta-hat for one sampled ``T_n``; returns ``(theta_hat, L_n, h_root)``."""
    tree_stream, mark_stream = replicate_streams(seed, replicate)
    sample = sample_spanned_tree(params, n, tree_stream)
    marks = MarkRealization(sample.edge_skeleton(), params.alpha, mark_stream)
    th = theta_at_tips(marks)[marks.skeleton.leaves]
    h = sample.h_root if n >= 2 else float("nan")
    return theta_hat(th, params), sample.total_length, h


RECORD_COLUMNS = ("replicate", "n", "L_n", "h_root", "theta_m", "x_star", "theta_hat", "z")


def record_replicate(params: Params, n: int, seed: int, replicate: int) -> dict:
    """One row of the records table: sample ``T_n``, sweep its marks, summarize."""
    tree_stream, mark_stream = replicate_streams(seed, replicate)
    sample = sample_spanned_tree(params, n, tree_stream)
    marks = MarkRealization(sample.skeleton(), params.alpha, mark_stream)
    out = simulate_records(sample, params, marks=marks)
    th = theta_hat(out.theta_at_leaf, params)
    return {
        "replicate": replicate,
        "n": n,
        "L_n": out.total_length,
        "h_root": out.h_root,
        "theta_m": out.theta_m,
        "x_star": out.x_star,
        "theta_hat": th,
        "z": math.sqrt(2.0 * params.alpha / params.r) * th,
    }


@dataclass
class RayleighReport:
    z: np.ndarray
    ks: float
    threshold: float
    passed: bool


def rayleigh_check(params: Params, n: int, replicates: int, seed: int, threshold: float = 0.05) -> RayleighReport:
    """KS distance of ``Z = sqrt(2 alpha / r) Theta_hat`` to the Rayleigh law."""
    z = np.array([record_replicate(params, n, seed, i)["z"] for i in range(replicates)])
    d = ks_statistic(z, RayleighLaw.cdf)
    return RayleighReport(z, d, threshold, d < threshold)


# --- half-line record process ---------------------------------------------------


@dataclass
class HalfLinePath:
    """Piecewise constant record function on ``[0, x_max]``.

    ``jumps`` are sorted increasingly and ``values[j]`` is theta right after
    ``jumps[j]``. For a finite start ``(q0, k0)`` theta equals ``q0`` before the first
    jump and ``X(x) = k0 + #{jumps <= x}``. For an infinite start the jumps
    accumulate at 0 and are only materialized above ``resolution``.
    """

    x_max: float
    q0: float
    k0: int
    jumps: np.ndarray
    values: np.ndarray
    resolution: float = 0.0

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x < self.resolution) or np.any(x > self.x_max):
            raise DomainError(f"x must lie in [{self.resolution}, {self.x_max}]")
        return x

    def theta(self, x):
        x = self._check(x)
        i = np.searchsorted(self.jumps, x, side="right")
        return np.where(i == 0, self.q0, self.values[np.maximum(i - 1, 0)]) if self.values.size else np.full(x.shape, self.q0)

    def count(self, x):
        if math.isinf(self.q0):
            raise DomainError("X(x) is infinite for a path started at theta = inf")
        x = self._check(x)
        return self.k0 + np.searchsorted(self.jumps, x, side="right")

    def integral(self, x) -> float:
        """``int_0^x theta(u) du``."""
        if math.isinf(self.q0):
            raise DomainError("the integral diverges for a path started at theta = inf")
        x = float(self._check(x))
        knots = np.concatenate([[0.0], self.jumps[self.jumps < x], [x]])
        vals = np.concatenate([[self.q0], self.values[: knots.size - 2]])
        return float(np.sum(vals * np.diff(knots)))


def simulate_halfline(params: Params, x_max: float, q0: float, k0: int = 0, seed: SeedLike = 0,
                      resolution: float = 1e-12) -> HalfLinePath:
    """Jump chain of theta along ``[0, x_max]``.

    From value ``q`` at ``y`` the next jump is at ``y + Exp(2 alpha q)`` and the value
    becomes ``q U``. From ``q0 = inf`` the largest jump ``x_1`` and the value there are
    taken from a mark realization on the whole segment; going towards 0 the next
    record is uniform on ``[0, x_j]`` with value ``q_j + Exp(2 alpha x_j)``.
    """
    if not x_max > 0:
        raise InvalidParameterError("x_max must be positive")
    if not q0 > 0:
        raise InvalidParameterError("q0 must be positive")
    rng = as_generator(seed)
    two_a = 2.0 * params.alpha
    if math.isinf(q0):
        seg = Skeleton(np.array([-1]), np.array([0.0]), np.array([float(x_max)]), np.array([0]))
        marks = MarkRealization(seg, params.alpha, rng)
        marks.extend_first([0])
        _, off, time = marks.marks()
        x, q = float(off[0]), float(time[0])
        xs, qs = [x], [q]
        floor = resolution * x_max
        while x > floor:
            q = q + rng.standard_exponential() / (two_a * x)
            x = x * rng.random()
            xs.append(x)
            qs.append(q)
        xs.pop()
        qs.pop()
        return HalfLinePath(float(x_max), np.inf, 0, np.array(xs[::-1]), np.array(qs[::-1]), floor)
    y, q = 0.0, float(q0)
    xs, qs = [], []
    while True:
        y += rng.standard_exponential() / (two_a * q)
        if y > x_max:
            break
        q *= rng.random()
        xs.append(y)
        qs.append(q)
    return HalfLinePath(float(x_max), float(q0), int(k0), np.array(xs), np.array(qs))


def halfline_batch(params: Params, x_grid, q0: float, replicates: int, stream) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized jump chains from ``(q0, 0)``.

    Returns ``(X, I)`` of shape ``(replicates, len(x_grid))``: jump counts up to each
    grid point and ``int_0^x theta``.
    """
    xg = np.asarray(x_grid, dtype=float)
    if not (q0 > 0 and math.isfinite(q0)):
        raise InvalidParameterError("halfline_batch needs a finite positive start")
    x_max = float(xg.max())
    two_a = 2.0 * params.alpha
    y = np.zeros(replicates)
    q = np.full(replicates, float(q0))
    X = np.zeros((replicates, xg.size))
    I = np.zeros((replicates, xg.size))
    live = np.arange(replicates)
    while live.size:
        yl, ql = y[live], q[live]
        y_next = yl + stream.standard_exponential(live.size) / (two_a * ql)
        I[live] += ql[:, None] * np.clip(np.minimum(y_next[:, None], xg) - yl[:, None], 0.0, None)
        X[live] += y_next[:, None] <= xg
        y[live] = y_next
        q[live] = ql * stream.random(live.size)
        live = live[y_next <= x_max]
    return X, I


@dataclass
class MartingaleReport:
    x: np.ndarray
    q0: float
    mean_N: np.ndarray
    se_N: np.ndarray
    mean_M: np.ndarray
    se_M: np.ndarray

    @property
    def z_N(self) -> np.ndarray:
        return np.abs(self.mean_N) / self.se_N

    @property
    def z_M(self) -> np.ndarray:
        return np.abs(self.mean_M) / self.se_M

    def passed(self, k: float = 3.0) -> bool:
        return bool(np.all(self.z_N < k) and np.all(self.z_M < k))


def martingale_checks(params: Params, x_grid, q0: float, replicates: int, seed: SeedLike) -> MartingaleReport:
    """Means of ``N_x = X(x) - k0 - 2 alpha int_0^x theta`` and ``M_x = N_x^2 - 2 alpha int_0^x theta``."""
    X, I = halfline_batch(params, x_grid, q0, replicates, as_generator(seed))
    comp = 2.0 * params.alpha * I
    N = X - comp
    M = N * N - comp
    sq = math.sqrt(replicates)
    return MartingaleReport(np.asarray(x_grid, float), float(q0), N.mean(0), N.std(0, ddof=1) / sq,
                            M.mean(0), M.std(0, ddof=1) / sq)
