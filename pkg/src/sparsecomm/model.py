"""Problem instances and per-machine observations.

Every machine holds a single effective sample ``x_i = mu + eps_i`` with
``eps_i ~ N(0, I_d)``; the n-samples-per-machine layer collapses to this by
sufficiency of the local mean, so it is not modelled.

Randomness is organised around :class:`SeedSpec`.  A sample is a pure
function of ``(master_seed, trial_index, machine_id)``: the Philox key is
``(master_seed, trial_index)`` and the machine id occupies the high words of
the 256-bit counter, so streams of different machines never overlap and can
be drawn in any order.  Machine ids start at 1; id 0 is reserved for the
fusion center (support placement).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "CENTER_ID",
    "SparseProblem",
    "Sample",
    "SeedSpec",
    "mu_min",
    "make_problem",
    "sample_machine",
    "sample_machines",
    "stream",
]

_MASK64 = (1 << 64) - 1

CENTER_ID = 0


def mu_min(d: int, K: int, r: float) -> float:
    """Smallest nonzero mean entry at SNR parameter ``r``: sqrt(2 r ln(d-K))."""
    if K < 0 or d - K < 1:
        raise ValueError(f"mu_min needs d - K >= 1, got d={d}, K={K}")
    if r < 0:
        raise ValueError(f"r must be nonnegative, got {r}")
    return math.sqrt(2.0 * r * math.log(d - K))


@dataclass(frozen=True)
class SeedSpec:
    master_seed: int
    trial_index: int = 0
    machine_id: int = CENTER_ID

    def __post_init__(self):
        if self.trial_index < 0 or self.machine_id < 0:
            raise ValueError("trial_index and machine_id must be nonnegative")

    def for_machine(self, machine_id: int) -> "SeedSpec":
        return SeedSpec(self.master_seed, self.trial_index, machine_id)


def stream(seed: SeedSpec) -> np.random.Generator:
    """Independent generator for one (master_seed, trial, machine) triple."""
    key = np.array([seed.master_seed & _MASK64, seed.trial_index & _MASK64],
                   dtype=np.uint64)
    counter = np.array([0, 0, seed.machine_id & _MASK64, seed.machine_id >> 64],
                       dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


@dataclass(frozen=True, eq=False)
class SparseProblem:
    """Ground truth for one instance.

    ``support`` holds 0-based indices in increasing order.  ``K = 0`` is
    accepted so that pure-noise fixtures can be built directly, but
    :func:`make_problem` never produces one.
    """

    d: int
    K: int
    r: float
    support: tuple[int, ...]
    mu: np.ndarray = field(repr=False)

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        if mu.shape != (self.d,):
            raise ValueError(f"mu must have length d={self.d}, got {mu.shape}")
        if len(self.support) != self.K or len(set(self.support)) != self.K:
            raise ValueError("support must hold exactly K distinct indices")
        if np.any(mu < 0):
            raise ValueError("mean entries must be nonnegative")
        nonzero = tuple(int(j) for j in np.flatnonzero(mu))
        if nonzero != tuple(sorted(self.support)):
            raise ValueError("nonzero entries of mu must sit exactly on the support")
        if self.K:
            floor = mu_min(self.d, self.K, self.r)
            if mu[list(self.support)].min() < floor * (1 - 1e-12):
                raise ValueError("support entries must be at least mu_min")
        mu.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "support", tuple(sorted(int(j) for j in self.support)))

    @property
    def mu_min(self) -> float:
        return mu_min(self.d, self.K, self.r) if self.K else 0.0

    @property
    def mu_max(self) -> float:
        return float(self.mu.max()) if self.K else 0.0


@dataclass(frozen=True, eq=False)
class Sample:
    machine_id: int
    values: np.ndarray = field(repr=False)


def _parse_profile(mu_profile: str) -> tuple[str, float | None]:
    profile = mu_profile.strip().lower()
    if profile == "minimal":
        return "minimal", None
    if profile.startswith("uniform(") and profile.endswith(")"):
        inner = profile[len("uniform("):-1]
        if inner.startswith("hi="):
            inner = inner[3:]
        return "uniform", float(inner)
    raise ValueError(f"unknown mu_profile {mu_profile!r}; use 'minimal' or 'uniform(hi)'")


def make_problem(d: int, K: int, r: float, mu_profile: str = "minimal",
                 support: Sequence[int] | None = None,
                 seed: SeedSpec | int | None = None) -> SparseProblem:
    """Build a K-sparse instance.

    Parameters
    ----------
    d, K, r : int, int, float
        Dimension, sparsity and SNR parameter; requires ``d > 2K`` and ``r > 0``.
    mu_profile : str
        ``"minimal"`` puts every support entry at ``mu_min`` (the worst case
        the guarantees are stated for); ``"uniform(hi)"`` draws entries
        uniformly in ``[mu_min, hi]``.
    support : sequence of int, optional
        Fixed 0-based support.  When omitted a uniformly random K-subset is
        drawn from ``seed``.
    seed : SeedSpec or int, optional
        Randomness for support placement and the uniform profile.  An int is
        read as a master seed with trial 0.
    """
    if K < 1 or d <= 2 * K:
        raise ValueError(f"need 1 <= K and d > 2K, got d={d}, K={K}")
    if r <= 0:
        raise ValueError(f"r must be positive, got {r}")
    kind, hi = _parse_profile(mu_profile)
    floor = mu_min(d, K, r)
    if kind == "uniform" and hi < floor:
        raise ValueError(f"uniform profile upper end {hi} is below mu_min={floor:.6g}")

    if isinstance(seed, int):
        seed = SeedSpec(seed)
    rng = stream(seed) if seed is not None else None
    if support is None:
        if rng is None:
            raise ValueError("either a fixed support or a seed is required")
        support = rng.choice(d, size=K, replace=False)
    support = [int(j) for j in support]
    if len(set(support)) != len(support):
        raise ValueError(f"support has duplicate indices: {support}")
    if len(support) != K or any(j < 0 or j >= d for j in support):
        raise ValueError(f"support must hold K={K} indices in [0, {d})")

    mu = np.zeros(d)
    if kind == "minimal" or hi == floor:
        mu[support] = floor
    else:
        if rng is None:
            raise ValueError("the uniform profile needs a seed")
        mu[support] = rng.uniform(floor, hi, size=K)
    return SparseProblem(d=d, K=K, r=r, support=tuple(support), mu=mu)


def sample_machine(problem: SparseProblem, seed: SeedSpec, noise: float = 1.0) -> Sample:
    """Observation of machine ``seed.machine_id``; ``noise=0`` gives ``x = mu``."""
    values = problem.mu.copy()
    if noise:
        values += noise * stream(seed).standard_normal(problem.d)
    return Sample(seed.machine_id, values)


def sample_machines(problem: SparseProblem, seed: SeedSpec, machine_ids: Sequence[int],
                    noise: float = 1.0) -> np.ndarray:
    """Stack the observations of several machines row by row.

    Row ``i`` equals ``sample_machine(problem, seed.for_machine(machine_ids[i])).values``.
    """
    out = np.empty((len(machine_ids), problem.d))
    for row, m in enumerate(machine_ids):
        out[row] = sample_machine(problem, seed.for_machine(m), noise).values
    return out
