"""Random streams, elementary samplers, the Rayleigh law and goodness-of-fit helpers."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
from scipy import integrate, special, stats

from .errors import InvalidParameterError

_MASK64 = (1 << 64) - 1

SQRT_HALF_PI = math.sqrt(math.pi / 2.0)


@dataclass(frozen=True)
class SeedSpec:
    """A (master seed, stream index) pair naming one reproducible random stream.

    Streams are produced by hashing both integers through ``numpy.random.SeedSequence``
    into the key of a counter-based Philox generator, so replicate ``i`` of a sweep
    always sees the same numbers whatever the number of workers.
    """

    master_seed: int
    stream_index: int = 0

    def __post_init__(self):
        for name in ("master_seed", "stream_index"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 0 or v > _MASK64:
                raise InvalidParameterError(f"{name} must be a 64-bit unsigned integer, got {v!r}")

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence([int(self.master_seed), int(self.stream_index)])
        return np.random.Generator(np.random.Philox(seq))


def derive(master_seed: int, stream_index: int) -> np.random.Generator:
    """Pure function of its arguments: equal inputs give identical streams."""
    return SeedSpec(master_seed, stream_index).generator()


SeedLike = Union[int, SeedSpec, np.random.Generator]


def as_generator(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, SeedSpec):
        return seed.generator()
    if isinstance(seed, (int, np.integer)):
        return SeedSpec(int(seed), 0).generator()
    raise InvalidParameterError(f"cannot build a random stream from {seed!r}")


def _check_rate(rate):
    rate = np.asarray(rate, dtype=float)
    if not np.all(np.isfinite(rate)) or np.any(rate <= 0):
        raise InvalidParameterError(f"rate must be positive and finite, got {rate!r}")
    return rate


def sample_exponential(rate, stream: np.random.Generator, size=None):
    """Draw Exp(rate) variates (mean ``1/rate``)."""
    rate = _check_rate(rate)
    return stream.standard_exponential(size) / rate


def sample_gamma_integer(n: int, stream: np.random.Generator, size=None):
    """Sum of ``n`` independent Exp(1) draws, i.e. a gamma(n, 1) variate."""
    if int(n) != n or n < 1:
        raise InvalidParameterError(f"n must be a positive integer, got {n!r}")
    n = int(n)
    if size is None:
        return float(stream.standard_exponential(n).sum())
    shape = (size,) if np.isscalar(size) else tuple(size)
    return stream.standard_exponential(shape + (n,)).sum(axis=-1)


def sample_rayleigh(stream: np.random.Generator, size=None):
    """Inverse-CDF Rayleigh sampler, ``sqrt(-2 log U)``."""
    u = stream.random(size)
    # 1 - U lies in (0, 1], so the log never sees zero
    return np.sqrt(-2.0 * np.log1p(-u))


class RayleighLaw:
    """Standard Rayleigh law with density ``x exp(-x^2/2)`` on ``x > 0``."""

    mean = SQRT_HALF_PI
    second_moment = 2.0

    @staticmethod
    def pdf(x):
        x = np.asarray(x, dtype=float)
        return np.where(x > 0, x * np.exp(-0.5 * x * x), 0.0)

    @staticmethod
    def cdf(x):
        x = np.asarray(x, dtype=float)
        return np.where(x > 0, -np.expm1(-0.5 * x * x), 0.0)

    @staticmethod
    def sample(stream, size=None):
        return sample_rayleigh(stream, size)


_MGF_SWITCH = 20.0
# (2k+1)!! for k = 0..11
_ASYMPTOTIC_COEFFS = np.array([math.prod(range(1, 2 * k + 2, 2)) for k in range(12)], dtype=float)


def rayleigh_mgf(y):
    """E[exp(-y Z)] for a standard Rayleigh variable Z, ``y >= 0``.

    Uses ``1 - y sqrt(pi/2) erfcx(y/sqrt 2)`` up to ``y = 20`` (erfcx carries the
    ``exp(y^2/2)`` factor without overflow) and the asymptotic series
    ``sum_k (-1)^k (2k+1)!! / y^(2k+2)`` beyond.
    """
    y_arr = np.asarray(y, dtype=float)
    if np.any(~np.isfinite(y_arr)) or np.any(y_arr < 0):
        raise InvalidParameterError(f"rayleigh_mgf needs finite y >= 0, got {y!r}")
    out = 1.0 - rayleigh_mgf_complement(y_arr)
    big = y_arr > _MGF_SWITCH
    if np.any(big):
        yb = y_arr[big] if out.ndim else y_arr
        inv2 = 1.0 / (yb * yb)
        powers = inv2[..., None] ** np.arange(1, len(_ASYMPTOTIC_COEFFS) + 1)
        signs = (-1.0) ** np.arange(len(_ASYMPTOTIC_COEFFS))
        series = (powers * signs * _ASYMPTOTIC_COEFFS).sum(axis=-1)
        if out.ndim:
            out[big] = series
        else:
            out = series
    return float(out) if np.ndim(y) == 0 else out


def rayleigh_mgf_complement(y):
    """``1 - E[exp(-y Z)]`` without cancellation for small ``y``."""
    y_arr = np.asarray(y, dtype=float)
    return y_arr * SQRT_HALF_PI * special.erfcx(y_arr / math.sqrt(2.0))


def ks_statistic(samples, cdf: Callable) -> float:
    """Kolmogorov-Smirnov sup distance between the empirical CDF of ``samples`` and ``cdf``."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    n = x.size
    if n == 0:
        raise InvalidParameterError("ks_statistic needs at least one sample")
    f = np.asarray(cdf(x), dtype=float)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - f), np.max(f - (i - 1) / n)))


def ks_two_sample(a, b) -> float:
    if len(a) == 0 or len(b) == 0:
        raise InvalidParameterError("ks_two_sample needs two nonempty samples")
    return float(stats.ks_2samp(a, b).statistic)


def ks_critical(n: int, scale: float = 1.63) -> float:
    """Asymptotic 99% critical value ``1.63/sqrt(n)`` of the one-sample KS statistic."""
    return scale / math.sqrt(n)


def ks_critical_two_sample(n: int, m: int, scale: float = 1.63) -> float:
    return scale * math.sqrt((n + m) / (n * m))


def chi_square_pvalue(samples, cdf: Callable, bins) -> float:
    """Pearson chi-square goodness-of-fit p-value of ``samples`` against ``cdf`` on fixed bin edges.

    The outermost bins are widened to cover the whole real line.
    """
    edges = np.asarray(bins, dtype=float)
    counts, _ = np.histogram(np.clip(samples, edges[0], edges[-1]), bins=edges)
    probs = np.diff(np.asarray(cdf(edges), dtype=float))
    probs[0] += float(cdf(edges[0]))
    probs[-1] += 1.0 - float(cdf(edges[-1]))
    expected = probs / probs.sum() * counts.sum()
    return float(stats.chisquare(counts, expected).pvalue)


def standard_error(x) -> float:
    x = np.asarray(x, dtype=float)
    return float(x.std(ddof=1) / math.sqrt(x.size))


def quad(func, a, b, *, epsabs=1e-13, epsrel=1e-11, limit=200, **kw) -> float:
    """``scipy.integrate.quad`` with explicit targets that raises instead of warning.

    The error estimate has to meet the requested tolerance; otherwise a
    :class:`QuadratureError` carrying the diagnostics is raised.
    """
    from .errors import QuadratureError

    with np.errstate(all="ignore"):
        val, err, info = integrate.quad(func, a, b, epsabs=epsabs, epsrel=epsrel, limit=limit,
                                        full_output=True, **kw)[:3]
    if not np.isfinite(val) or err > max(epsabs, epsrel * abs(val)) * 10:
        raise QuadratureError(
            f"quadrature on [{a}, {b}] did not converge",
            {"value": val, "abserr": err, "neval": info.get("neval"), "last": info.get("last")},
        )
    return float(val)
