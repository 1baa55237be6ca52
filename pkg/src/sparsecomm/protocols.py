"""Center/machine message exchanges with exact bit accounting.

A trial is simulated sequentially: the center sends a setup message to each
of the first ``m_eff`` machines (ids ``1..m_eff``), every contacted machine
replies with a list of coordinate indices, and the center votes.  The
optional second round (:func:`run_pi`) asks all ``M`` machines for
quantised values on the estimated support and averages them.

Indices are 0-based and cost ``ceil(log2 d)`` bits each.  Messages carry no
framing overhead, so an empty reply costs nothing.  Ties, both between
coordinate values and between vote counts, go to the lower index.
"""

from __future__ import annotations

import math
import time
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence, TextIO

import numpy as np

from .bounds import TAU_C_FACTOR, Algorithm, TunedParams
from .codec import BitString, approx, index_bits, threshold_precision, trunc
from .model import Sample, SeedSpec, SparseProblem, sample_machine

__all__ = [
    "SUPPORT_ROUND",
    "PI_ROUND",
    "UplinkMessage",
    "VoteTally",
    "BitLedger",
    "TraceRecord",
    "TrialOutcome",
    "PiOutcome",
    "topl_reply",
    "threshold_reply",
    "tally",
    "select_top_k",
    "select_by_vote_threshold",
    "topl_setup_bits",
    "pi_precision",
    "run_topl",
    "run_threshold",
    "run_support_round",
    "run_pi",
    "write_trace",
    "read_trace",
]

SUPPORT_ROUND = "support_round"
PI_ROUND = "pi_round"
DOWN = "down"
UP = "up"


@dataclass(frozen=True, eq=False)
class UplinkMessage:
    """Reply of one machine.

    Support-round replies list indices.  Second-round replies carry one
    encoded value per index of the broadcast support, in that order, and no
    indices of their own (the center already knows which value is which).
    """

    machine_id: int
    indices: tuple[int, ...]
    bit_length: int
    payloads: tuple[BitString, ...] | None = None

    @classmethod
    def build(cls, machine_id: int, indices: Iterable[int], d: int,
              payloads: Sequence[BitString] | None = None) -> "UplinkMessage":
        indices = tuple(int(j) for j in indices)
        if len(set(indices)) != len(indices):
            raise ValueError("message indices must be distinct")
        bits = len(indices) * index_bits(d)
        if payloads is not None:
            payloads = tuple(payloads)
            bits += sum(len(p) for p in payloads)
        return cls(machine_id, indices, bits, payloads)


@dataclass(frozen=True, eq=False)
class VoteTally:
    votes: np.ndarray

    @property
    def d(self) -> int:
        return len(self.votes)


@dataclass(frozen=True)
class TraceRecord:
    phase: str
    direction: str
    machine_id: int
    n_indices: int
    bits: int

    def to_line(self) -> str:
        return f"{self.phase}\t{self.direction}\t{self.machine_id}\t{self.n_indices}\t{self.bits}"


class BitLedger:
    """Running bit counts split by phase and direction.

    With ``keep_trace=True`` every message is also kept as a
    :class:`TraceRecord`, so totals can be recomputed from the trace.
    """

    def __init__(self, keep_trace: bool = False):
        self._bits: Counter = Counter()
        self.trace: list[TraceRecord] | None = [] if keep_trace else None

    def record(self, phase: str, direction: str, machine_id: int, n_indices: int, bits: int) -> None:
        if bits < 0:
            raise ValueError("message length must be nonnegative")
        if direction not in (DOWN, UP):
            raise ValueError(f"direction must be {DOWN!r} or {UP!r}")
        self._bits[phase, direction] += bits
        if self.trace is not None:
            self.trace.append(TraceRecord(phase, direction, machine_id, n_indices, bits))

    def bits(self, phase: str | None = None, direction: str | None = None) -> int:
        return sum(v for (p, dr), v in self._bits.items()
                   if (phase is None or p == phase) and (direction is None or dr == direction))

    @property
    def downlink_bits(self) -> int:
        return self.bits(direction=DOWN)

    @property
    def uplink_bits(self) -> int:
        return self.bits(direction=UP)

    @property
    def total_bits(self) -> int:
        return self.bits()

    def merge(self, other: "BitLedger") -> "BitLedger":
        out = BitLedger(keep_trace=self.trace is not None and other.trace is not None)
        out._bits = self._bits + other._bits
        if out.trace is not None:
            out.trace = self.trace + other.trace
        return out

    def __repr__(self) -> str:
        return f"BitLedger(downlink={self.downlink_bits}, uplink={self.uplink_bits})"


@dataclass
class TrialOutcome:
    estimated_support: tuple[int, ...]
    exact_recovery: bool
    ledger: BitLedger
    timings: dict[str, float] = field(default_factory=dict)


@dataclass
class PiOutcome:
    mu_hat: np.ndarray
    squared_error: float
    ledger: BitLedger
    U: int
    P: int


def topl_reply(sample: Sample, L: int) -> UplinkMessage:
    x = sample.values
    d = len(x)
    if not 1 <= L <= d:
        raise ValueError(f"need 1 <= L <= d, got L={L}")
    kth = np.partition(x, d - L)[d - L]
    above = x > kth
    tied = np.flatnonzero(x == kth)[: L - int(above.sum())]
    indices = np.union1d(np.flatnonzero(above), tied)
    return UplinkMessage.build(sample.machine_id, indices, d)


def threshold_reply(sample: Sample, tau_hat: float) -> UplinkMessage:
    if not math.isfinite(tau_hat):
        raise ValueError("the threshold must be finite")
    return UplinkMessage.build(sample.machine_id, np.flatnonzero(sample.values > tau_hat),
                               len(sample.values))


def tally(messages: Iterable[UplinkMessage], d: int) -> VoteTally:
    votes = np.zeros(d, dtype=np.int64)
    for msg in messages:
        if msg.indices:
            idx = np.asarray(msg.indices)
            if idx.min() < 0 or idx.max() >= d:
                raise ValueError(f"machine {msg.machine_id} sent an index outside [0, {d})")
            votes[idx] += 1
    return VoteTally(votes)


def select_top_k(votes: VoteTally, K: int) -> tuple[int, ...]:
    if not 1 <= K <= votes.d:
        raise ValueError(f"need 1 <= K <= d, got K={K}")
    # stable sort keeps the lower index first among equal vote counts
    order = np.argsort(-votes.votes, kind="stable")
    return tuple(sorted(int(j) for j in order[:K]))


def select_by_vote_threshold(votes: VoteTally, tau_c: float | None = None) -> tuple[int, ...]:
    """Indices with strictly more than ``tau_c`` votes (default ``4 ln d``)."""
    if tau_c is None:
        tau_c = TAU_C_FACTOR * math.log(votes.d)
    if tau_c <= 0:
        raise ValueError("the vote threshold must be positive")
    return tuple(int(j) for j in np.flatnonzero(votes.votes > tau_c))


def topl_setup_bits(L: int) -> int:
    """Bits to ship the parameter L: ceil(log2(L + 1))."""
    return max(1, L.bit_length())


def _select(votes: VoteTally, K: int, selection: str, tau_c: float | None):
    if selection == "top_k":
        return select_top_k(votes, K)
    if selection == "vote_threshold":
        return select_by_vote_threshold(votes, tau_c)
    raise ValueError(f"selection must be 'top_k' or 'vote_threshold', got {selection!r}")


def _support_round(problem, m_eff, setup_bits, reply, master_seed, trial_index,
                   M, noise, selection, tau_c, trace, K_select):
    if M is not None and m_eff > M:
        raise ValueError(f"m_eff={m_eff} exceeds the {M} available machines")
    ledger = BitLedger(keep_trace=trace)
    seed = SeedSpec(master_seed, trial_index)
    started = time.perf_counter()
    messages = []
    for m in range(1, m_eff + 1):
        ledger.record(SUPPORT_ROUND, DOWN, m, 0, setup_bits)
        msg = reply(sample_machine(problem, seed.for_machine(m), noise))
        if msg.bit_length:
            ledger.record(SUPPORT_ROUND, UP, m, len(msg.indices), msg.bit_length)
        messages.append(msg)
    machines_done = time.perf_counter()
    estimate = _select(tally(messages, problem.d), K_select, selection, tau_c)
    done = time.perf_counter()
    return TrialOutcome(
        estimated_support=estimate,
        exact_recovery=set(estimate) == set(problem.support),
        ledger=ledger,
        timings={"machines": machines_done - started, "center": done - machines_done},
    )


def run_topl(problem: SparseProblem, params: TunedParams, master_seed: int, trial_index: int,
             M: int | None = None, noise: float = 1.0, selection: str = "top_k",
             tau_c: float | None = None, trace: bool = False,
             K_select: int | None = None) -> TrialOutcome:
    """One Top-L trial.

    ``selection="vote_threshold"`` is the variant for an unknown sparsity
    level: keep every index with more than ``tau_c`` votes.  ``K_select``
    overrides the number of indices kept by top-K selection.
    """
    if params.algorithm is not Algorithm.TOPL:
        raise ValueError(f"run_topl needs Top-L parameters, got {params.algorithm}")
    L = params.L
    return _support_round(problem, params.m_eff, topl_setup_bits(L), lambda s: topl_reply(s, L),
                          master_seed, trial_index, M, noise, selection, tau_c, trace,
                          K_select or problem.K)


def run_threshold(problem: SparseProblem, params: TunedParams, master_seed: int, trial_index: int,
                  M: int | None = None, noise: float = 1.0, selection: str = "top_k",
                  tau_c: float | None = None, trace: bool = False,
                  K_select: int | None = None) -> TrialOutcome:
    """One thresholding trial; the threshold travels as ``trunc(tau, U, P)``."""
    if not params.algorithm.is_threshold:
        raise ValueError(f"run_threshold needs thresholding parameters, got {params.algorithm}")
    tau = params.threshold
    U, P = params.encoding or threshold_precision(tau, problem.d)
    setup = trunc(tau, U, P)
    tau_hat = approx(setup, U, P)
    if tau_hat <= 0:
        raise ValueError(f"threshold {tau} encodes to {tau_hat} <= 0 with U={U}, P={P}")
    return _support_round(problem, params.m_eff, len(setup), lambda s: threshold_reply(s, tau_hat),
                          master_seed, trial_index, M, noise, selection, tau_c, trace,
                          K_select or problem.K)


def run_support_round(problem: SparseProblem, params: TunedParams, master_seed: int,
                      trial_index: int, **kwargs) -> TrialOutcome:
    runner = run_topl if params.algorithm is Algorithm.TOPL else run_threshold
    return runner(problem, params, master_seed, trial_index, **kwargs)


def pi_precision(problem: SparseProblem, gamma: float | None = None) -> tuple[int, int, float]:
    """Default ``(U, P, gamma)`` for the second round.

    ``gamma`` is the smallest of 0.5, 1, 2 with ``mu_max < d**gamma`` unless
    given; ``U = floor(log2(d**gamma + sqrt(4 (gamma+1) ln d)))`` and
    ``P = ceil(log2 d)``.
    """
    d = problem.d
    if gamma is None:
        gamma = next((g for g in (0.5, 1.0, 2.0) if problem.mu_max < d**g), None)
        if gamma is None:
            raise ValueError(f"mu_max={problem.mu_max} is not below d**2; pass gamma explicitly")
    U = math.floor(math.log2(d**gamma + math.sqrt(4 * (gamma + 1) * math.log(d))))
    return U, index_bits(d), gamma


def run_pi(problem: SparseProblem, estimated_support: Iterable[int], M: int, master_seed: int,
           trial_index: int, U: int | None = None, P: int | None = None,
           gamma: float | None = None, noise: float = 1.0, trace: bool = False) -> PiOutcome:
    """Second round: every machine reports its encoded values on the estimated support."""
    support = tuple(sorted(int(j) for j in estimated_support))
    d = problem.d
    if any(j < 0 or j >= d for j in support):
        raise ValueError(f"estimated support must lie in [0, {d})")
    if U is None or P is None:
        U0, P0, _ = pi_precision(problem, gamma)
        U = U0 if U is None else U
        P = P0 if P is None else P
    ledger = BitLedger(keep_trace=trace)
    mu_hat = np.zeros(d)
    if support:
        seed = SeedSpec(master_seed, trial_index)
        idx = list(support)
        sums = np.zeros(len(support))
        down_bits = len(support) * index_bits(d)
        for m in range(1, M + 1):
            ledger.record(PI_ROUND, DOWN, m, len(support), down_bits)
            x = sample_machine(problem, seed.for_machine(m), noise).values
            msg = UplinkMessage.build(m, (), d, [trunc(float(v), U, P) for v in x[idx]])
            ledger.record(PI_ROUND, UP, m, 0, msg.bit_length)
            sums += [approx(w, U, P) for w in msg.payloads]
        mu_hat[idx] = sums / M
    err = float(np.sum((problem.mu - mu_hat) ** 2))
    return PiOutcome(mu_hat=mu_hat, squared_error=err, ledger=ledger, U=U, P=P)


def write_trace(records: Iterable[TraceRecord], fh: TextIO, header: str | None = None) -> None:
    """Tab-separated message trace; ``header`` goes out as a ``#`` comment line."""
    if header:
        fh.write(f"# {header}\n")
    for rec in records:
        fh.write(rec.to_line() + "\n")


def read_trace(lines: Iterable[str]) -> list[TraceRecord]:
    out = []
    for line in lines:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        phase, direction, machine, n_idx, bits = line.split("\t")
        out.append(TraceRecord(phase, direction, int(machine), int(n_idx), int(bits)))
    return out
