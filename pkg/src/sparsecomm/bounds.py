"""Closed-form machine counts, thresholds, risk bounds and send probabilities.

Logarithms are natural throughout; base 2 only appears in bit counts.
Each ceiling is applied once, outermost, exactly as in the displayed
formulas.  Functions that return :class:`TunedParams` never raise on a
violated validity condition; they set ``feasible=False`` and say why.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .codec import threshold_precision
from .model import mu_min
from .tails import binom_cdf, gaussian_tail

__all__ = [
    "Algorithm",
    "TunedParams",
    "RegimeLines",
    "SingleMachineRegime",
    "m0",
    "a_quantity",
    "b_quantity",
    "m_kl",
    "topl_m0_params",
    "topl_m_kl_params",
    "threshold_small",
    "threshold_mid",
    "threshold_mid_r_bound",
    "m_eff_large",
    "oracle_risk",
    "pi_risk_bound",
    "p_send_support_topl",
    "p_send_nonsupport_topl",
    "p_send_support_th",
    "p_send_nonsupport_th",
    "necessary_snr",
    "vote_factor",
    "TAU_C_FACTOR",
]

_SQRT2PI = math.sqrt(2 * math.pi)

# vote threshold used by the guarantees: tau_c = 4 ln d
TAU_C_FACTOR = 4.0


class SingleMachineRegime(ValueError):
    """Raised where a formula degenerates because r >= 1.

    At that SNR one machine already finds the support on its own, and the
    machine-count formulas divide by (1 - sqrt r).
    """


class Algorithm(str, enum.Enum):
    TOPL = "TopL"
    THRESHOLD_A = "ThresholdA"
    THRESHOLD_B = "ThresholdB"
    THRESHOLD_SMALL = "ThresholdSmall"
    THRESHOLD_MID = "ThresholdMid"
    THRESHOLD_LARGE = "ThresholdLarge"

    @property
    def is_threshold(self) -> bool:
        return self is not Algorithm.TOPL

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class TunedParams:
    """Configuration handed to a support-recovery run.

    ``m_eff`` is the number of machines actually contacted.  When a rule asks
    for more machines than exist, ``m_required`` keeps the raw value and
    ``m_eff`` is capped at the available ``M``.
    """

    algorithm: Algorithm
    m_eff: int
    threshold: float | None = None
    L: int | None = None
    encoding: tuple[int, int] | None = None
    feasible: bool = True
    reason: str = ""
    m_required: int | None = None

    def __post_init__(self):
        if self.m_eff < 1:
            raise ValueError("m_eff must be at least 1")
        if self.algorithm.is_threshold != (self.threshold is not None):
            raise ValueError("threshold is required exactly for thresholding variants")
        if (self.algorithm is Algorithm.TOPL) != (self.L is not None):
            raise ValueError("L is required exactly for Top-L")

    def as_dict(self) -> dict:
        out = {
            "algorithm": str(self.algorithm),
            "m_eff": self.m_eff,
            "threshold": self.threshold,
            "L": self.L,
            "U": self.encoding[0] if self.encoding else None,
            "P": self.encoding[1] if self.encoding else None,
            "feasible": self.feasible,
            "m_required": self.m_required,
            "reason": self.reason,
        }
        return out


@dataclass(frozen=True)
class RegimeLines:
    r_necessary: float
    r_sufficient: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.r_necessary > 1:
            raise ValueError("the necessary SNR never exceeds 1")


def _reasons(*pairs) -> str:
    return "; ".join(msg for bad, msg in pairs if bad)


def _cap(m_required: int, M: int | None) -> tuple[int, str]:
    if M is not None and m_required > M:
        return max(M, 1), f"needs {m_required} machines but only M={M} available"
    return m_required, ""


def vote_factor(d: int, K: int) -> float:
    """ln(d-K) / ln ln(d-K), the slack between support and non-support votes."""
    n = d - K
    if n < 16:
        raise ValueError("ln ln(d-K) must exceed 1; need d - K >= 16")
    return math.log(n) / math.log(math.log(n))


def m0(d: int, r: float) -> int:
    """Machines contacted by Top-1 for a 1-sparse mean."""
    if d < 2:
        raise ValueError("need d >= 2")
    if r < 0:
        raise ValueError("r must be nonnegative")
    if r >= 1:
        raise SingleMachineRegime(f"r={r} >= 1: one machine recovers the support alone")
    ln_d = math.log(d)
    gap = 1 - math.sqrt(r)
    core = (_SQRT2PI * math.e * (2 * gap**2 * ln_d + 1)
            / (gap * math.sqrt(2 * ln_d)) * d ** (gap**2))
    return math.ceil(max(1.0, core) * 8 * ln_d)


def _check_topl_range(d: int, K: int, L: int) -> None:
    if not (1 <= K <= L and L < (d - K) / 2):
        raise ValueError(f"need K <= L < (d-K)/2, got d={d}, K={K}, L={L}")


def a_quantity(K: int, L: int, d: int) -> float:
    _check_topl_range(d, K, L)
    return math.sqrt(2 * math.log((d - K) / (L - K + 1)))


def b_quantity(K: int, L: int, d: int, r: float) -> float:
    if r < 0:
        raise ValueError("r must be nonnegative")
    return a_quantity(K, L, d) - mu_min(d, K, r)


def m_kl(d: int, r: float, K: int, L: int) -> int:
    """Machines contacted by Top-L for a K-sparse mean.

    When ``b <= 0`` the support coordinate beats the level ``a`` with
    probability at least 1/2, the second term of the max is no longer
    meaningful, and the floor value ``8 * 8 ln d`` is returned.
    """
    _check_topl_range(d, K, L)
    if r < 0:
        raise ValueError("r must be nonnegative")
    if r >= 1:
        raise SingleMachineRegime(f"r={r} >= 1: one machine recovers the support alone")
    ln_d = math.log(d)
    b = b_quantity(K, L, d, r)
    if b <= 0:
        return math.ceil(8 * 8 * ln_d)
    exponent = (math.sqrt(1 - math.log(L - K + 1) / math.log(d - K)) - math.sqrt(r)) ** 2
    core = 4 * _SQRT2PI * (b * b + 1) / b * (d - K) ** exponent
    return math.ceil(max(8.0, core) * 8 * ln_d)


def topl_m0_params(d: int, r: float, M: int | None = None) -> TunedParams:
    """Top-1 with the number of machines set by :func:`m0`."""
    try:
        need = m0(d, r)
    except SingleMachineRegime as exc:
        return TunedParams(Algorithm.TOPL, 1, L=1, feasible=False, reason=str(exc), m_required=1)
    m, cap = _cap(need, M)
    reason = _reasons((need > d, f"m0={need} exceeds d={d}"), (bool(cap), cap))
    return TunedParams(Algorithm.TOPL, m, L=1, feasible=not reason, reason=reason,
                       m_required=need)


def topl_m_kl_params(d: int, K: int, L: int, r: float, M: int | None = None) -> TunedParams:
    """Top-L with the number of machines set by :func:`m_kl`."""
    try:
        need = m_kl(d, r, K, L)
    except SingleMachineRegime as exc:
        return TunedParams(Algorithm.TOPL, 1, L=L, feasible=False, reason=str(exc), m_required=1)
    m, cap = _cap(need, M)
    reason = _reasons((need > (d - K) / L, f"M_KL={need} exceeds (d-K)/L"), (bool(cap), cap))
    return TunedParams(Algorithm.TOPL, m, L=L, feasible=not reason, reason=reason,
                       m_required=need)


def threshold_small(d: int, K: int, r: float, M: int | None = None,
                    encoding: str = "paper") -> TunedParams:
    """Threshold at mu_min and contact ceil(16 ln d) machines."""
    tau = mu_min(d, K, r)
    floor_r = math.log(5) / math.log(d - K)
    need = math.ceil(16 * math.log(d))
    m, cap = _cap(need, M)
    reason = _reasons(
        (d < 16, "needs d >= 16"),
        (not r > floor_r, f"needs r > ln5/ln(d-K) = {floor_r:.6g}"),
        (r >= 1, "needs r < 1"),
        (bool(cap), cap),
    )
    return TunedParams(Algorithm.THRESHOLD_SMALL, m, threshold=tau,
                       encoding=threshold_precision(tau, d, encoding),
                       feasible=not reason, reason=reason, m_required=need)


def _mid_scale(d: int, M: int) -> float:
    # M / (32 sqrt(pi) ln^1.5 d)
    return M / (32 * math.sqrt(math.pi) * math.log(d) ** 1.5)


def threshold_mid_r_bound(d: int, K: int, M: int) -> float:
    """Smallest r (exclusive) for which the intermediate-M threshold rule applies."""
    ln_d = math.log(d)
    first = math.sqrt(2 * math.log(5 * M / (_SQRT2PI * 4 * ln_d)))
    second = math.sqrt(2 * math.log(_mid_scale(d, M)))
    return (first - second + 1 / d) ** 2 / (2 * math.log(d - K))


def threshold_mid(d: int, K: int, r: float, M: int, encoding: str = "paper") -> TunedParams:
    """Threshold raised with the number of machines; contacts all M.

    The threshold is NaN when ``M < 32 sqrt(pi) ln^1.5 d`` (its logarithm
    turns negative); such configurations are flagged infeasible anyway.
    """
    ln_d = math.log(d)
    scale = _mid_scale(d, M)
    lower_M = 32 * math.sqrt(math.e * math.pi) * ln_d**1.5
    in_range = d >= 15 and lower_M <= M <= d
    tau = mu_min(d, K, r) + math.sqrt(2 * math.log(scale)) if scale >= 1 else math.nan
    r_bound = threshold_mid_r_bound(d, K, M) if in_range else math.nan
    reason = _reasons(
        (d < 15, "needs d >= 15"),
        (not lower_M <= M, f"needs M >= 32 sqrt(e pi) ln^1.5 d = {lower_M:.6g}"),
        (M > d, "needs M <= d"),
        (r >= 1, "needs r < 1"),
        (in_range and not r > r_bound, f"needs r > {r_bound:.6g}"),
    )
    encoding_bits = threshold_precision(tau, d, encoding) if math.isfinite(tau) else None
    return TunedParams(Algorithm.THRESHOLD_MID, max(M, 1), threshold=tau, encoding=encoding_bits,
                       feasible=not reason, reason=reason, m_required=M)


def m_eff_large(d: int, K: int, r: float, M: int | None = None,
                encoding: str = "paper") -> TunedParams:
    """Threshold at sqrt(2 ln(d-K)) with a machine count that shrinks as r grows."""
    n = d - K
    tau = math.sqrt(2 * math.log(n))
    lower_r = (math.log(10) / (2 * math.log(n))) ** 2
    reason = _reasons(
        (n < 20, "needs d - K >= 20"),
        (not r > lower_r, f"needs r > (ln10 / (2 ln(d-K)))^2 = {lower_r:.6g}"),
        (r >= 1, "needs r < 1"),
    )
    if r >= 1:
        return TunedParams(Algorithm.THRESHOLD_LARGE, 1, threshold=tau,
                           encoding=threshold_precision(tau, d, encoding),
                           feasible=False, reason=reason, m_required=1)
    gap = 1 - math.sqrt(r)
    ln_n = math.log(n)
    need = math.ceil(8 * _SQRT2PI * (gap**2 * 2 * ln_n + 1) / (gap * math.sqrt(2 * ln_n))
                     * n ** (gap**2) * math.log(d))
    m, cap = _cap(need, M)
    reason = _reasons((bool(reason), reason), (bool(cap), cap))
    return TunedParams(Algorithm.THRESHOLD_LARGE, m, threshold=tau,
                       encoding=threshold_precision(tau, d, encoding),
                       feasible=not reason, reason=reason, m_required=need)


def oracle_risk(mu, M: int, sigma2: float = 1.0) -> float:
    """Risk of the ideal diagonal projection estimator: sum_j min(sigma^2/M, mu_j^2)."""
    if M < 1:
        raise ValueError("M must be at least 1")
    mu = np.asarray(mu, dtype=float)
    return float(np.minimum(sigma2 / M, mu**2).sum())


def pi_risk_bound(d: int, K: int, M: int, r: float) -> float:
    """Upper bound on the squared error of the second-round mean estimate."""
    if d < 5:
        raise ValueError("the risk bound needs d >= 5")
    return K / M * (1 + 1 / d + 1 / d**2) + 2 * K * mu_min(d, K, r) ** 2 / d


def p_send_support_topl(d: int, K: int, L: int, r: float) -> float:
    """Lower bound on the chance that a machine's top-L list holds a given support index.

    Product of Q(b) and the exact binomial probability that at most L-K
    noise coordinates exceed the level ``a``.
    """
    a = a_quantity(K, L, d)
    b = a - mu_min(d, K, r)
    return gaussian_tail(b) * binom_cdf(L - K, d - K, gaussian_tail(a))


def p_send_nonsupport_topl(d: int, K: int, L: int, p_s: float) -> float:
    return (L - K * p_s) / (d - K)


def p_send_support_th(tau: float, mu_k: float) -> float:
    return gaussian_tail(tau - mu_k)


def p_send_nonsupport_th(tau_hat: float) -> float:
    return gaussian_tail(tau_hat)


def necessary_snr(d: int, M: int) -> float:
    """max(1/M, ln^-3 d): below this no scheme recovers the support with o(d) bits."""
    return max(1 / M, math.log(d) ** -3)
