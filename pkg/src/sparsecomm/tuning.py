"""Simulation-grade parameter tuning for Top-L and the two thresholding variants.

The closed-form rules in :mod:`sparsecomm.bounds` carry loose constants.
The rules here instead work with the exact vote-count distributions:
a support index collects ``Y_s ~ Bin(m, p_s)`` votes and a noise index
``Y_n ~ Bin(m, p_n)``.  With ``f = ln(d-K) / ln ln(d-K)``:

* Top-L contacts ``max(ceil(f / p_s), 1)`` machines so that a support index
  expects ``f`` votes.
* Thresholding looks for the threshold at which
  ``Pr[Y_s < f * E[Y_n]] < 1/d``.  The integer comparison is evaluated as
  ``Pr[Y_s <= ceil(f * E[Y_n]) - 1]``.

The threshold predicate is not monotone in ``t``, hence the grid scan
followed by a local bisection.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from .bounds import (
    Algorithm,
    RegimeLines,
    TunedParams,
    m0,
    m_eff_large,
    m_kl,
    necessary_snr,
    p_send_support_topl,
    threshold_mid_r_bound,
    vote_factor,
)
from .codec import quantize_threshold, threshold_precision
from .model import mu_min
from .tails import binom_cdf, gaussian_tail

__all__ = [
    "GRID_STEP",
    "emp_th_probability",
    "emp_th_holds",
    "tune_topl",
    "tune_threshold_a",
    "tune_threshold_b",
    "threshold_r_min",
    "sufficient_snr",
    "regime_lines",
]

GRID_STEP = 1e-3
REFINE_TOL = 1e-6
SNR_TOL = 1e-4


def emp_th_probability(d: int, K: int, r: float, m: int, t, encoding: str = "paper"):
    """Pr[Y_s < f E[Y_n]] at threshold ``t`` with ``m`` contacted machines.

    ``Y_s`` uses the unquantised ``t`` (a conservative lower bound on the
    support send probability); ``Y_n`` uses the value machines compare
    against after the threshold has been encoded.
    """
    t = np.asarray(t, dtype=float)
    p_s = gaussian_tail(t - mu_min(d, K, r))
    p_n = gaussian_tail(quantize_threshold(t, d, encoding))
    cutoff = np.ceil(m * p_n * vote_factor(d, K)) - 1
    return binom_cdf(cutoff, m, p_s)


def emp_th_holds(d: int, K: int, r: float, m: int, t, encoding: str = "paper"):
    out = np.asarray(emp_th_probability(d, K, r, m, t, encoding)) < 1 / d
    return bool(out) if out.ndim == 0 else out


def tune_topl(d: int, K: int, L: int, r: float, M: int | None = None) -> TunedParams:
    p_s = p_send_support_topl(d, K, L, r)
    if p_s <= 0:
        return TunedParams(Algorithm.TOPL, max(M or 1, 1), L=L, feasible=False,
                           reason="support send probability underflows to 0")
    need = max(math.ceil(vote_factor(d, K) / p_s), 1)
    if M is not None and need > M:
        return TunedParams(Algorithm.TOPL, M, L=L, feasible=False, m_required=need,
                           reason=f"needs {need} machines but only M={M} available")
    return TunedParams(Algorithm.TOPL, need, L=L, m_required=need)


def _largest_threshold(d: int, K: int, r: float, m: int, encoding: str) -> float | None:
    """Largest t satisfying the vote predicate, or None if there is none."""
    top = mu_min(d, K, r) + math.sqrt(2 * math.log(d - K))
    grid = np.arange(0.0, top + GRID_STEP / 2, GRID_STEP)
    ok = emp_th_holds(d, K, r, m, grid, encoding)
    hits = np.flatnonzero(ok)
    if hits.size == 0:
        return None
    lo = float(grid[hits[-1]])
    if hits[-1] == grid.size - 1:
        return lo
    hi = lo + GRID_STEP
    while hi - lo > REFINE_TOL:
        mid = 0.5 * (lo + hi)
        if emp_th_holds(d, K, r, m, mid, encoding):
            lo = mid
        else:
            hi = mid
    return lo


@lru_cache(maxsize=256)
def threshold_r_min(d: int, K: int, M: int, encoding: str = "paper") -> tuple[float, float]:
    """``(r_min, t_min)``: smallest r at which some threshold meets the predicate with M machines.

    Returns ``(nan, nan)`` if even r close to 1 does not work.
    """
    hi = 1.0
    t_hi = _largest_threshold(d, K, hi, M, encoding)
    if t_hi is None:
        return math.nan, math.nan
    lo = 0.0
    while hi - lo > SNR_TOL:
        mid = 0.5 * (lo + hi)
        t_mid = _largest_threshold(d, K, mid, M, encoding)
        if t_mid is None:
            lo = mid
        else:
            hi, t_hi = mid, t_mid
    return hi, t_hi


def _threshold_params(algorithm: Algorithm, d: int, tau: float, m: int, encoding: str,
                      feasible: bool = True, reason: str = "", m_required=None) -> TunedParams:
    return TunedParams(algorithm, m, threshold=tau, encoding=threshold_precision(tau, d, encoding),
                       feasible=feasible, reason=reason, m_required=m_required)


def tune_threshold_a(d: int, K: int, r: float, M: int, encoding: str = "paper") -> TunedParams:
    """Contact all M machines; use the largest threshold meeting the predicate.

    Below the smallest workable SNR the threshold found at that SNR is used
    and the result is flagged infeasible.
    """
    if M < 1:
        raise ValueError("M must be at least 1")
    tau = _largest_threshold(d, K, r, M, encoding)
    if tau is not None:
        return _threshold_params(Algorithm.THRESHOLD_A, d, tau, M, encoding)
    r_lo, t_lo = threshold_r_min(d, K, M, encoding)
    if math.isnan(t_lo):
        t_lo = mu_min(d, K, r)
        why = "no threshold meets the vote predicate for any r < 1; using mu_min"
    else:
        why = f"r below r_min={r_lo:.4f}; falling back to t_min={t_lo:.4f}"
    return _threshold_params(Algorithm.THRESHOLD_A, d, t_lo, M, encoding,
                             feasible=False, reason=why)


def tune_threshold_b(d: int, K: int, r: float, M: int, encoding: str = "paper") -> TunedParams:
    """Like variant A, but once the threshold reaches sqrt(2 ln((d-K)/K)) pin it
    there and contact as few machines as the predicate allows."""
    a = tune_threshold_a(d, K, r, M, encoding)
    cap = math.sqrt(2 * math.log((d - K) / K))
    same_as_a = TunedParams(Algorithm.THRESHOLD_B, a.m_eff, threshold=a.threshold,
                            encoding=a.encoding, feasible=a.feasible, reason=a.reason,
                            m_required=a.m_required)
    if not a.feasible or a.threshold < cap:
        return same_as_a
    ms = np.arange(1, M + 1)
    # exhaustive over m: exact minimum even where the predicate is not upward closed
    holds = [emp_th_holds(d, K, r, int(m), cap, encoding) for m in ms]
    hits = np.flatnonzero(holds)
    if hits.size == 0:
        return same_as_a
    return _threshold_params(Algorithm.THRESHOLD_B, d, cap, int(ms[hits[0]]), encoding)


def _first_true(pred, lo: float = 0.0, hi: float = 1.0, points: int = 200) -> float:
    """Smallest r in (lo, hi) with pred(r) true: coarse scan, then bisection to SNR_TOL."""
    grid = np.linspace(lo, hi, points + 1)[1:-1]
    prev = lo
    for r in grid:
        if pred(float(r)):
            a, b = prev, float(r)
            while b - a > SNR_TOL:
                mid = 0.5 * (a + b)
                if pred(mid):
                    b = mid
                else:
                    a = mid
            return b
        prev = float(r)
    return math.nan


def sufficient_snr(algorithm: str, d: int, K: int, L: int | None, M: int,
                   encoding: str = "paper") -> float:
    """SNR above which ``algorithm`` is expected to recover the support.

    ``algorithm`` takes the harness names: ``topk``, ``topl``,
    ``threshold-a``, ``threshold-b``, ``thm1``, ``thm2``, ``thm3a``,
    ``thm3b``, ``thm3c``.  NaN means no r < 1 qualifies.
    """
    alg = algorithm.lower()
    if alg in ("topk", "topl"):
        L_used = K if alg == "topk" else L

        def expected_support_votes(r):
            p_s = p_send_support_topl(d, K, L_used, r)
            if p_s <= 0:
                return 0.0
            return min(max(math.ceil(vote_factor(d, K) / p_s), 1), M) * p_s

        return _first_true(lambda r: expected_support_votes(r) >= 2)
    if alg in ("threshold-a", "threshold-b"):
        return threshold_r_min(d, K, M, encoding)[0]
    if alg == "thm1":
        return _first_true(lambda r: m0(d, r) <= min(M, d))
    if alg == "thm2":
        return _first_true(lambda r: m_kl(d, r, K, L) <= min(M, (d - K) / L))
    if alg == "thm3a":
        if M < 16 * math.log(d) or d < 16:
            return math.nan
        return math.log(5) / math.log(d - K)
    if alg == "thm3b":
        lower_M = 32 * math.sqrt(math.e * math.pi) * math.log(d) ** 1.5
        if not (d >= 15 and lower_M <= M <= d):
            return math.nan
        bound = threshold_mid_r_bound(d, K, M)
        return bound if bound < 1 else math.nan
    if alg == "thm3c":
        return _first_true(lambda r: m_eff_large(d, K, r, M).feasible)
    raise ValueError(f"unknown algorithm {algorithm!r}")


def regime_lines(d: int, K: int, L: int, M: int, algorithms, encoding: str = "paper"):
    return RegimeLines(
        r_necessary=necessary_snr(d, M),
        r_sufficient={a: sufficient_snr(a, d, K, L, M, encoding) for a in algorithms},
    )
