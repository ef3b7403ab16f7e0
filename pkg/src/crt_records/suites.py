"""Verification suites: seeded Monte Carlo sweeps and analytic identities with pass/fail checks.

Every random quantity of replicate ``i`` of task ``t`` comes from stream
``(seed, t * 2**40 + i)``, so results do not depend on how replicates are spread
over worker processes.
"""

from __future__ import annotations

import itertools
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import partial

import numpy as np
from scipy import stats

from . import analytics as an
from .crt_sampler import Params, sample_spanned_tree
from .errors import InvalidParameterError
from .randkit import RayleighLaw, SeedSpec, ks_critical, ks_statistic, standard_error
from .record_process import (
    RECORD_COLUMNS,
    MarkRealization,
    coupled_records,
    halfline_batch,
    martingale_checks,
    record_replicate,
    replicate_streams,
    theta_at_tips,
)
from .removed_mass import (
    girsanov_mass_check,
    grafted_mass_check,
    grid_events,
    small_mass_asymptotics,
    theta_identities,
)

SUITES = ("rayleigh", "moments", "convergence", "stickbreak", "masses", "analytics")

DEFAULT_SEED = 20261016

SUITE_DEFAULTS = {
    "rayleigh": {"n": 2048, "replicates": 2000},
    "convergence": {"n": 4096, "replicates": 200},
    "moments": {"n": 50, "replicates": 100_000},
    "stickbreak": {"n": 32, "replicates": 10_000},
    "masses": {"grid": 100_000, "replicates": 200},
    "analytics": {},
}

# sizes of the secondary sweeps inside the stick-breaking and mass suites
H_ROOT_N = 10_000
H_ROOT_REPLICATES = 1000
HALFLINE_REPLICATES = 100_000
HALFLINE_GRID = (0.5, 1.0, 2.0)
HALFLINE_STARTS = (0.5, 1.0, 4.0)
GIRSANOV_POINTS = ((0.5, 1.0, 1.0), (1.0, 1.0, 2.0))
GIRSANOV_REPLICATES = 4000
GIRSANOV_GRID = 1000
GRAFT_LEAVES = 32
GRAFT_GRID = 20_000
GRAFT_REPLICATES = 500
MOMENT_CHUNK = 5000

MIN_RAYLEIGH_REPLICATES = 1000
MIN_RAYLEIGH_N = 256


class UnderpoweredError(InvalidParameterError):
    """The requested sample is too small for the statistical test to mean anything."""


@dataclass
class RunConfig:
    suite: str
    alpha: float = 0.5
    r: float = 1.0
    n: int | None = None
    grid: int | None = None
    replicates: int | None = None
    seed: int = DEFAULT_SEED
    out: str | None = None
    format: str = "json"
    threshold_scale: float = 1.0

    def __post_init__(self):
        if self.suite not in SUITES:
            raise InvalidParameterError(f"unknown suite {self.suite!r}")
        if self.format not in ("csv", "json"):
            raise InvalidParameterError(f"format must be csv or json, got {self.format!r}")
        for key, val in SUITE_DEFAULTS[self.suite].items():
            if getattr(self, key) is None:
                setattr(self, key, val)
        Params(self.alpha, self.r)
        for key in ("n", "grid", "replicates"):
            v = getattr(self, key)
            if v is not None and (int(v) != v or v < 1):
                raise InvalidParameterError(f"{key} must be a positive integer")
        if not self.threshold_scale > 0:
            raise InvalidParameterError("threshold_scale must be positive")

    @property
    def params(self) -> Params:
        return Params(self.alpha, self.r)

    def as_dict(self) -> dict:
        """Settings that determine the results (the output path does not)."""
        d = asdict(self)
        d.pop("out")
        return d


@dataclass
class Check:
    name: str
    value: float
    target: float
    tolerance: float
    passed: bool
    detail: str = ""


@dataclass
class SuiteResult:
    suite: str
    checks: list[Check]
    columns: tuple[str, ...]
    rows: list[dict]
    tables: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def stream(seed: int, task: int, i: int) -> np.random.Generator:
    return SeedSpec(seed, (task << 40) + i).generator()


def task_seed(seed: int, task: int) -> int:
    """Master seed for a helper sweep that indexes its own replicates from zero."""
    return int(np.random.SeedSequence([seed, task]).generate_state(1, np.uint64)[0])


def worker_count() -> int:
    env = os.environ.get("CRT_RECORDS_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise InvalidParameterError(f"CRT_RECORDS_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def pmap(func, items, workers: int | None = None) -> list:
    """Ordered map over a process pool (or inline for one worker)."""
    items = list(items)
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(items) <= 1:
        return [func(x) for x in items]
    chunk = max(1, len(items) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items, chunksize=chunk))


def _within_se(name, values, target, k, detail=""):
    values = np.asarray(values, dtype=float)
    m, se = float(values.mean()), standard_error(values)
    return Check(name, m, target, k * se, abs(m - target) <= k * se, detail or f"mean {m:.6g} +- {se:.3g}")


# --- rayleigh ----------------------------------------------------------------


def run_rayleigh(cfg: RunConfig, workers: int | None = None) -> SuiteResult:
    if cfg.replicates < MIN_RAYLEIGH_REPLICATES or cfg.n < MIN_RAYLEIGH_N:
        raise UnderpoweredError(
            f"underpowered: the rayleigh suite needs >= {MIN_RAYLEIGH_REPLICATES} replicates and n >= {MIN_RAYLEIGH_N} "
            f"(got {cfg.replicates} replicates, n={cfg.n})")
    p = cfg.params
    rows = pmap(partial(record_replicate, p, cfg.n, cfg.seed), range(cfg.replicates), workers)
    th = np.array([row["theta_hat"] for row in rows])
    z = np.array([row["z"] for row in rows])
    d = ks_statistic(z, RayleighLaw.cdf)
    k = 3.0 * cfg.threshold_scale
    ks_tol = 0.05 * cfg.threshold_scale
    checks = [
        Check("ks_rayleigh", d, 0.0, ks_tol, d < ks_tol, f"KS of Z over {z.size} replicates"),
        _within_se("mean_theta_hat", th, an.theta_moment_exact(p, 1), k),
        _within_se("mean_theta_hat_sq", th**2, an.theta_moment_exact(p, 2), k),
    ]
    return SuiteResult("rayleigh", checks, RECORD_COLUMNS, rows)


# --- convergence -------------------------------------------------------------


def _convergence_n(n_max: int) -> list[int]:
    return sorted({max(2, n_max // 16), max(2, n_max // 4), n_max})


def convergence_replicate(params: Params, n_values, seed: int, replicate: int) -> list[dict]:
    tree_stream, mark_stream = replicate_streams(seed, replicate)
    sample = sample_spanned_tree(params, max(n_values), tree_stream)
    c = coupled_records(sample, params, n_values, marks=MarkRealization(sample.skeleton(), params.alpha, mark_stream))
    scale = math.sqrt(2.0 * params.alpha / params.r)
    return [
        {"replicate": replicate, "n": int(n), "L_n": float(L), "h_root": float(h), "theta_m": float(tm),
         "x_star": int(x), "theta_hat": float(t), "z": scale * float(t)}
        for n, L, h, tm, x, t in zip(c.n, c.total_length, c.h_root, c.theta_m, c.x_star, c.theta_hat)
    ]


def convergence_errors(rows: list[dict], params: Params, constant: float | None = None):
    """``|X_n*/sqrt(2n) - c Theta_hat_{n_max}|`` per replicate and ``n`` (``c = sqrt(2 alpha/r)`` by default)."""
    c = math.sqrt(2.0 * params.alpha / params.r) if constant is None else constant
    by_rep: dict[int, list[dict]] = {}
    for row in rows:
        by_rep.setdefault(row["replicate"], []).append(row)
    ns = sorted({row["n"] for row in rows})
    err = np.empty((len(by_rep), len(ns)))
    for i, rep in enumerate(sorted(by_rep)):
        rr = sorted(by_rep[rep], key=lambda row: row["n"])
        limit = c * rr[-1]["theta_hat"]
        err[i] = [abs(row["x_star"] / math.sqrt(2.0 * row["n"]) - limit) for row in rr]
    return ns, err


def run_convergence(cfg: RunConfig, workers: int | None = None) -> SuiteResult:
    p = cfg.params
    n_values = _convergence_n(cfg.n)
    per = pmap(partial(convergence_replicate, p, n_values, cfg.seed), range(cfg.replicates), workers)
    rows = list(itertools.chain.from_iterable(per))
    ns, err = convergence_errors(rows, p)
    med = np.median(err, axis=0)
    _, err_lit = convergence_errors(rows, p, math.sqrt(p.alpha / (2.0 * p.r)))
    med_lit = np.median(err_lit, axis=0)
    tol = 0.10 * cfg.threshold_scale
    checks = [
        Check("median_error_decreasing", float(med[-1] - med[0]), 0.0, 0.0, bool(np.all(np.diff(med) < 0)),
              "medians " + ", ".join(f"n={n}: {m:.4f}" for n, m in zip(ns, med))),
        Check(f"median_error_at_{ns[-1]}", float(med[-1]), 0.0, tol, bool(med[-1] < tol)),
    ]
    tables = {
        "n": ns,
        "median_error": med.tolist(),
        "median_error_constant_sqrt_alpha_over_2r": med_lit.tolist(),
    }
    return SuiteResult("convergence", checks, RECORD_COLUMNS, rows, tables)


# --- conditional moments -------------------------------------------------------


def moment_chunk(skeleton, leaves, params: Params, seed: int, size_and_index) -> np.ndarray:
    size, j = size_and_index
    tiled = skeleton.tile(size)
    marks = MarkRealization(tiled, params.alpha, stream(seed, 1, j))
    th = theta_at_tips(marks)[tiled.leaves].reshape(size, leaves)
    return params.r / leaves * th.sum(axis=1)


def run_moments(cfg: RunConfig, workers: int | None = None) -> SuiteResult:
    p = cfg.params
    fixture = sample_spanned_tree(p, cfg.n, stream(cfg.seed, 0, 0))
    tree, words = fixture.tree, fixture.leaf_order
    skel = tree.skeleton()
    chunks = [(min(MOMENT_CHUNK, cfg.replicates - s), j)
              for j, s in enumerate(range(0, cfg.replicates, MOMENT_CHUNK))]
    th = np.concatenate(pmap(partial(moment_chunk, skel, cfg.n, p, cfg.seed), chunks, workers))
    m1 = an.conditional_moment(tree, words, p, 1)
    m2 = an.conditional_moment(tree, words, p, 2)
    k = 3.0 * cfg.threshold_scale
    checks = [_within_se("conditional_first_moment", th, m1, k),
              _within_se("conditional_second_moment", th**2, m2, k)]
    rows = [{"replicate": i, "theta_hat": float(v)} for i, v in enumerate(th)]
    return SuiteResult("moments", checks, ("replicate", "theta_hat"), rows,
                       {"fixture_total_length": fixture.total_length, "order1": m1, "order2": m2})


# --- line-breaking and stick-breaking laws ---------------------------------------------


def _length_row(params: Params, n: int, seed: int, i: int) -> dict:
    s = sample_spanned_tree(params, n, stream(seed, 0, i))
    return {"replicate": i, "n": n, "L_n": s.total_length, "h_root": s.h_root if n >= 2 else float("nan")}


def _h_root(params: Params, n: int, seed: int, i: int) -> float:
    return sample_spanned_tree(params, n, stream(seed, 2, i)).h_root


def run_stickbreak(cfg: RunConfig, workers: int | None = None) -> SuiteResult:
    p = cfg.params
    a, r = p.alpha, p.r
    s = cfg.threshold_scale
    rows = pmap(partial(_length_row, p, cfg.n, cfg.seed), range(cfg.replicates), workers)
    L2 = np.array([row["L_n"] for row in rows]) ** 2
    d_len = ks_statistic(L2, lambda x: stats.gamma.cdf(x, cfg.n, scale=r / a))
    h = np.array(pmap(partial(_h_root, p, H_ROOT_N, cfg.seed), range(H_ROOT_REPLICATES), workers))
    scaled = math.sqrt(H_ROOT_N) * h
    d_h = ks_statistic(scaled, lambda x: -np.expm1(-2.0 * x / math.sqrt(r / a)))
    h2 = an.h0_moment(H_ROOT_N, 2, p)
    h2_asym = an.h0_moment_asymptotic(H_ROOT_N, 2, p)
    checks = [
        Check("ks_length_squared_gamma", d_len, 0.0, ks_critical(L2.size) * s, d_len < ks_critical(L2.size) * s,
              f"n={cfg.n}, {L2.size} replicates"),
        Check("ks_scaled_h_root_exponential", d_h, 0.0, 0.052 * s, d_h < 0.052 * s,
              f"n={H_ROOT_N}, {H_ROOT_REPLICATES} replicates"),
        Check("h0_moment_asymptotic", h2 / h2_asym - 1.0, 0.0, 0.01, abs(h2 / h2_asym - 1.0) < 0.01),
    ]
    tables = {"martingales": []}
    k = 3.0 * s
    for j, q0 in enumerate(HALFLINE_STARTS):
        rep = martingale_checks(p, HALFLINE_GRID, q0, HALFLINE_REPLICATES, stream(cfg.seed, 3, j))
        for x, mn, sn, mm, sm in zip(rep.x, rep.mean_N, rep.se_N, rep.mean_M, rep.se_M):
            checks.append(Check(f"martingale_N_q{q0}_x{x}", float(mn), 0.0, k * sn, abs(mn) <= k * sn))
            checks.append(Check(f"martingale_M_q{q0}_x{x}", float(mm), 0.0, k * sm, abs(mm) <= k * sm))
            tables["martingales"].append({"q0": q0, "x": float(x), "mean_N": float(mn), "se_N": float(sn),
                                          "mean_M": float(mm), "se_M": float(sm)})
    x1 = first_jump_locations(p, HALFLINE_REPLICATES, stream(cfg.seed, 4, 0))
    d_x1 = ks_statistic(x1, lambda x: np.clip(x, 0.0, 1.0))
    crit = ks_critical(x1.size) * s
    checks.append(Check("ks_first_jump_uniform", d_x1, 0.0, crit, d_x1 < crit))
    return SuiteResult("stickbreak", checks, ("replicate", "n", "L_n", "h_root"), rows, tables)


def first_jump_locations(params: Params, replicates: int, gen) -> np.ndarray:
    """Location of the largest record on ``[0, 1]`` started from theta = inf, one per replicate.

    Each replicate is one unit segment of a mark realization; the largest record is
    the first mark to arrive on the segment.
    """
    from .tree_core import Skeleton

    seg = Skeleton(np.full(replicates, -1), np.zeros(replicates), np.ones(replicates), np.arange(replicates))
    marks = MarkRealization(seg, params.alpha, gen)
    marks.extend_first(np.arange(replicates))
    s, off, _ = marks.marks()
    out = np.empty(replicates)
    out[s] = off
    return out


# --- removed masses ------------------------------------------------------------------


def masses_replicate(params: Params, grid: int, seed: int, n_grid, replicate: int) -> dict:
    _, ev = grid_events(params, grid, seed, replicate)
    ident = theta_identities(ev)
    sm = small_mass_asymptotics(ev, n_grid, params)
    return {"replicate": replicate, "theta": ev.theta, "sigma": ev.sigma, "identities_ok": ident.passed,
            "identity_gap": ident.max_gap, "mass_gap": abs(ident.sum_sigma - ident.total_mass),
            "Theta": sm.theta, "ratio_A": sm.ratio_A, "ratio_B": sm.ratio_B}


def run_masses(cfg: RunConfig, workers: int | None = None) -> SuiteResult:
    p = cfg.params
    s = cfg.threshold_scale
    n_grid = (16, 256)
    reps = pmap(partial(masses_replicate, p, cfg.grid, cfg.seed, n_grid), range(cfg.replicates), workers)
    rows = [{"replicate": rep["replicate"], "theta_i": float(t), "sigma_i": float(sg)}
            for rep in reps for t, sg in zip(rep["theta"], rep["sigma"])]
    ok = [rep["identities_ok"] for rep in reps]
    A = np.array([rep["ratio_A"] for rep in reps])
    B = np.array([rep["ratio_B"] for rep in reps])
    medA, medB = np.median(A, axis=0), np.median(B, axis=0)
    lo, hi = 1.0 - 0.2 * s, 1.0 + 0.2 * s
    theta = np.array([rep["Theta"] for rep in reps])
    exact = an.theta_moment_exact(p, 1)
    m, se = float(theta.mean()), standard_error(theta)
    checks = [
        Check("exact_identities_all_replicates", float(max(rep["identity_gap"] for rep in reps)), 0.0, 1e-9,
              all(ok), f"{sum(ok)}/{len(ok)} replicates"),
        Check("median_ratio_A_256", float(medA[1]), 1.0, 0.2 * s, bool(lo <= medA[1] <= hi)),
        Check("median_ratio_B_256", float(medB[1]), 1.0, 0.2 * s, bool(lo <= medB[1] <= hi)),
        Check("ratio_A_improves", float(abs(medA[1] - 1)), float(abs(medA[0] - 1)), 0.0,
              bool(abs(medA[1] - 1) < abs(medA[0] - 1))),
        Check("ratio_B_improves", float(abs(medB[1] - 1)), float(abs(medB[0] - 1)), 0.0,
              bool(abs(medB[1] - 1) < abs(medB[0] - 1))),
        Check("mean_Theta_grid", m, exact, 3 * s * se + 0.02 * exact, abs(m - exact) <= 3 * s * se + 0.02 * exact),
    ]
    # same statistics on grid 2N, independent trees, to expose discretization bias
    fine = pmap(partial(masses_replicate, p, 2 * cfg.grid, task_seed(cfg.seed, 9), n_grid),
                range(cfg.replicates), workers)
    fineA = np.median([rep["ratio_A"] for rep in fine], axis=0)
    fineB = np.median([rep["ratio_B"] for rep in fine], axis=0)
    checks += [
        Check("median_ratio_A_256_grid_2N", float(fineA[1]), 1.0, 0.2 * s, bool(lo <= fineA[1] <= hi)),
        Check("median_ratio_B_256_grid_2N", float(fineB[1]), 1.0, 0.2 * s, bool(lo <= fineB[1] <= hi)),
    ]
    tables = {"n": list(n_grid), "grid": [cfg.grid, 2 * cfg.grid],
              "median_ratio_A": medA.tolist(), "median_ratio_B": medB.tolist(),
              "median_ratio_A_grid_2N": fineA.tolist(), "median_ratio_B_grid_2N": fineB.tolist(),
              "girsanov": [], "grafted_mass": {}}
    for j, (a, mu, q) in enumerate(GIRSANOV_POINTS):
        g = girsanov_mass_check(Params(a, p.r), mu, q, GIRSANOV_REPLICATES, task_seed(cfg.seed, 5 + j),
                                grid=GIRSANOV_GRID)
        tol = 3 * s * g.se + g.allowance * g.target
        checks.append(Check(f"girsanov_a{a}_mu{mu}_q{q}", g.estimate, g.target, tol, abs(g.estimate - g.target) <= tol))
        tables["girsanov"].append({"alpha": a, "mu": mu, "q": q, "estimate": g.estimate, "se": g.se,
                                   "target": g.target})
    gm = grafted_mass_check(p, GRAFT_LEAVES, GRAFT_GRID, GRAFT_REPLICATES, task_seed(cfg.seed, 8))
    tol = 3 * s * gm.se + gm.allowance
    checks.append(Check("grafted_mass_ratio", gm.mean, 1.0, tol, abs(gm.mean - 1.0) <= tol))
    tables["grafted_mass"] = {"mean_ratio": gm.mean, "se": gm.se}
    return SuiteResult("masses", checks, ("replicate", "theta_i", "sigma_i"), rows, tables)


# --- analytics -----------------------------------------------------------------------


def run_analytics(cfg: RunConfig, workers: int | None = None) -> SuiteResult:
    p = cfg.params
    a = p.alpha
    checks: list[Check] = []

    def add(name, value, target, tol, rel=False):
        err = abs(value - target) / (abs(target) if rel else 1.0)
        checks.append(Check(name, float(value), float(target), tol, bool(err < tol)))

    for mu, lam in itertools.product((0.25, 1.0, 4.0), (0.5, 1.0, 3.0)):
        num, closed = an.laplace_sigma_theta(an.LaplaceParams(lam, mu, a))
        add(f"laplace_sigma_theta_mu{mu}_lam{lam}", num, closed, 1e-6, rel=True)
    lhs, rhs = an.lap_rayleigh_identity(1.0, 1.0)
    add("lap_rayleigh_mu1_c1", lhs, rhs, 1e-8, rel=True)
    for q, lam, mu in itertools.product((0.3, 1.0, 4.0), (0.5, 1.0, 2.0), (0.0, 0.5, 2.0)):
        add(f"int_Ff_residual_q{q}_lam{lam}_mu{mu}", an.int_Ff_residual(q, an.LaplaceParams(lam, mu, a)), 0.0, 1e-8)
    rep = an.F_expansion_check(1.0, 1.0, a)
    add("F_first_lambda_derivative", rep.first_fd, rep.first_exact, 1e-6)
    add("F_second_lambda_derivative", rep.second_fd, rep.second_exact, 1e-4)
    worst, bad = 0.0, 0
    for q in np.linspace(0.0, 3.0, 20):
        for r in np.logspace(-2, 1.5, 20):
            lower, upper = an.H_gaps(float(q), Params(a, float(r)))
            worst = min(worst, lower, upper)
            strict = lower > 0 and upper > 0
            if (q > 0 and not strict) or (q == 0 and (lower != 0 or upper != 0)):
                bad += 1
    checks.append(Check("H_bounds_20x20", float(worst), 0.0, 0.0, bad == 0, f"{bad} grid points violate"))
    lp = an.LaplaceParams(1.0, 1.0, a)
    add("G_at_sqrt_mu_over_alpha", an.G_function(lp.x0, lp), 0.0, 1e-15)
    add("F_at_zero", an.F_function(0.0, lp), lp.x0, 1e-15)
    add("H_large_q_limit", an.H_function(1e9, p), an.theta_moment_exact(p, 1), 1e-6, rel=True)
    add("h0_moment_k0", an.h0_moment(17, 0, p), 1.0, 1e-12)
    add("h0_moment_n1_k1", an.h0_moment(1, 1, p), 0.5 * math.sqrt(math.pi * p.r / p.alpha), 1e-12, rel=True)
    add("grafted_mass_identity", 2 * a * 1.7 * an.grafted_mass_mean(p.r, 1.7, p), p.r, 1e-12, rel=True)
    rows = [asdict(c) for c in checks]
    return SuiteResult("analytics", checks, ("name", "value", "target", "tolerance", "passed", "detail"), rows)


RUNNERS = {
    "rayleigh": run_rayleigh,
    "moments": run_moments,
    "convergence": run_convergence,
    "stickbreak": run_stickbreak,
    "masses": run_masses,
    "analytics": run_analytics,
}


def run_suite(cfg: RunConfig, workers: int | None = None) -> SuiteResult:
    return RUNNERS[cfg.suite](cfg, workers)
