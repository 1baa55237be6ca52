"""Gaussian and binomial tail probabilities, plus the classical bounds on them.

The exact quantities (``gaussian_tail``, ``binom_cdf``) drive parameter
tuning.  The closed-form bounds (Mills-ratio sandwich, Chernoff) are kept
separate; tests use them as oracles against the exact values.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import erfc, gammaln, xlog1py, xlogy

__all__ = [
    "gaussian_tail",
    "lemma1_bounds",
    "gaussian_tail_lower_t_ge_1",
    "max_gaussians_bound",
    "binom_cdf",
    "binom_sf",
    "chernoff_bounds",
]

_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)


def gaussian_tail(t):
    """Q(t) = Pr[Z > t] for standard normal Z; accepts scalars or arrays."""
    q = 0.5 * erfc(np.asarray(t, dtype=float) / _SQRT2)
    return float(q) if np.ndim(q) == 0 else q


def lemma1_bounds(t: float) -> tuple[float, float]:
    """Mills-ratio sandwich for Q(t), t > 0.

    Returns ``(t / (sqrt(2 pi) (t^2 + 1)) e^{-t^2/2}, 1 / (sqrt(2 pi) t) e^{-t^2/2})``.
    """
    if t <= 0:
        raise ValueError(f"the Gaussian tail sandwich needs t > 0, got {t}")
    density = math.exp(-t * t / 2)
    return t / (_SQRT2PI * (t * t + 1)) * density, density / (_SQRT2PI * t)


def gaussian_tail_lower_t_ge_1(t: float) -> float:
    """Cruder lower bound 1 / (2 sqrt(2 pi) t) e^{-t^2/2}, valid for t >= 1."""
    if t < 1:
        raise ValueError(f"this lower bound needs t >= 1, got {t}")
    return math.exp(-t * t / 2) / (2 * _SQRT2PI * t)


def max_gaussians_bound(n: int) -> float:
    """Upper bound 1 - 1/e on Pr[max of n-1 standard normals > sqrt(2 ln n)], n >= 2."""
    if n < 2:
        raise ValueError("need n >= 2")
    return 1 - math.exp(-1)


def _log_pmf(i, n, p):
    return (gammaln(n + 1) - gammaln(i + 1) - gammaln(n - i + 1)
            + xlogy(i, p) + xlog1py(n - i, -p))


def binom_cdf(k, n, p):
    """Pr[Bin(n, p) <= k] by direct summation of the pmf in log space.

    ``k`` and ``p`` broadcast against each other; ``n`` is a scalar.  The
    cost is O(min(max k, n)) vector operations, so this is meant for the
    small-``k`` lower tails that show up in vote counting.
    """
    k = np.floor(np.asarray(k, dtype=float))
    p = np.asarray(p, dtype=float)
    if n < 0 or np.any((p < 0) | (p > 1)):
        raise ValueError("need n >= 0 and 0 <= p <= 1")
    k, p = np.broadcast_arrays(k, p)
    top = int(min(max(k.max(initial=-1), -1), n))
    acc = np.full(k.shape, -np.inf)
    for i in range(top + 1):
        term = _log_pmf(i, n, p)
        acc = np.where(i <= k, np.logaddexp(acc, term), acc)
    out = np.where(k >= n, 1.0, np.minimum(np.exp(acc), 1.0))
    out = np.where(k < 0, 0.0, out)
    return float(out) if out.ndim == 0 else out


def binom_sf(k, n, p):
    """Pr[Bin(n, p) >= k], summed directly from the upper end."""
    k = np.ceil(np.asarray(k, dtype=float))
    p = np.asarray(p, dtype=float)
    # Pr[Bin(n,p) >= k] = Pr[Bin(n,1-p) <= n-k]
    return binom_cdf(n - k, n, 1 - p)


def chernoff_bounds(n: int, p: float, delta: float, direction: str = "upper") -> float:
    """Multiplicative Chernoff bounds for a sum X of n i.i.d. Bernoulli(p).

    ``"upper"`` bounds Pr[X >= (1+delta) np] by exp(-delta^2 np / (2+delta))
    for delta >= 0; ``"lower"`` bounds Pr[X <= (1-delta) np] by
    exp(-delta^2 np / 2) for 0 <= delta <= 1.
    """
    if not 0 <= p <= 1:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    mean = n * p
    if direction == "upper":
        if delta < 0:
            raise ValueError("upper-tail Chernoff bound needs delta >= 0")
        return math.exp(-delta * delta * mean / (2 + delta))
    if direction == "lower":
        if not 0 <= delta <= 1:
            raise ValueError("lower-tail Chernoff bound needs 0 <= delta <= 1")
        return math.exp(-delta * delta * mean / 2)
    raise ValueError(f"direction must be 'upper' or 'lower', got {direction!r}")
