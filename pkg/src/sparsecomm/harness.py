"""Parameter sweeps: tune, run Monte Carlo trials, aggregate, write CSV and a plot script.

Every trial derives its randomness from ``(master_seed, trial_index)``
alone, so the same trial index sees the same support and the same noise at
every grid point and for every algorithm.  Trials are farmed out to a
thread pool and merged back in submission order, which makes the output
independent of the worker count.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import isotonic_regression

from .bounds import (
    TunedParams,
    m_eff_large,
    necessary_snr,
    threshold_mid,
    threshold_small,
    topl_m0_params,
    topl_m_kl_params,
)
from .codec import ENCODINGS
from .model import SeedSpec, make_problem
from .protocols import run_support_round, write_trace
from .tuning import sufficient_snr, tune_threshold_a, tune_threshold_b, tune_topl

__all__ = [
    "ALGORITHMS",
    "ConfigError",
    "SweepConfig",
    "ResultsRow",
    "tune",
    "run_point",
    "run_sweep",
    "parse_config",
    "load_config",
    "emit_csv",
    "rows_to_csv",
    "read_csv",
    "emit_plot_script",
    "isotonic_residual",
    "write_traces",
]

ALGORITHMS = ("topk", "topl", "threshold-a", "threshold-b", "thm1", "thm2", "thm3a", "thm3b", "thm3c")
DEFAULT_R_GRID = tuple(k / 40 for k in range(1, 41))


class ConfigError(ValueError):
    """Invalid sweep configuration."""


def _check_algorithm(name: str) -> str:
    alg = name.strip().lower()
    if alg not in ALGORITHMS:
        raise ConfigError(f"unknown algorithm {name!r}; choose from {', '.join(ALGORITHMS)}")
    return alg


@dataclass(frozen=True)
class SweepConfig:
    algorithms: tuple[str, ...]
    d: int
    M: int
    K: int
    L: int
    r_grid: tuple[float, ...] = DEFAULT_R_GRID
    trials: int = 100
    master_seed: int = 0
    mu_profile: str = "minimal"
    encoding: str = "paper"
    noise: float = 1.0
    threads: int = 1
    csv_path: str | None = None
    plot_path: str | None = None
    trace_path: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "algorithms", tuple(_check_algorithm(a) for a in self.algorithms))
        object.__setattr__(self, "r_grid", tuple(float(r) for r in self.r_grid))
        if not self.algorithms:
            raise ConfigError("at least one algorithm is required")
        if not self.r_grid or any(not 0 < r <= 1 for r in self.r_grid):
            raise ConfigError("r_grid values must lie in (0, 1]")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")
        if self.K < 1 or self.d <= 2 * self.K:
            raise ConfigError(f"need 1 <= K < d/2, got d={self.d}, K={self.K}")
        if self.d - self.K < 16:
            raise ConfigError("need d - K >= 16")
        if not self.K <= self.L <= self.d - self.K:
            raise ConfigError(f"need K <= L <= d - K, got L={self.L}")
        if self.M < 1:
            raise ConfigError("M must be at least 1")
        if not 0 <= self.master_seed < 2**64:
            raise ConfigError("master_seed must be a 64-bit unsigned integer")
        if self.encoding not in ENCODINGS:
            raise ConfigError(f"encoding must be one of {ENCODINGS}")
        if self.noise < 0:
            raise ConfigError("noise must be nonnegative")


@dataclass(frozen=True)
class ResultsRow:
    """One grid point.  ``None`` fields are written as empty CSV cells."""

    algorithm: str
    d: int
    M: int
    K: int
    L: int
    r: float
    m_eff: int
    tau: float | None
    trials: int
    success_rate: float | None
    mean_total_bits: float | None
    std_total_bits: float | None
    r_necessary: float
    r_sufficient: float | None
    feasible: bool


FIELDS = tuple(f.name for f in dataclasses.fields(ResultsRow))
_TYPES = {f.name: f.type for f in dataclasses.fields(ResultsRow)}


def tune(algorithm: str, d: int, K: int, L: int, r: float, M: int,
         encoding: str = "paper") -> TunedParams:
    """Support-round parameters for one harness algorithm name."""
    alg = _check_algorithm(algorithm)
    if alg == "topk":
        return tune_topl(d, K, K, r, M)
    if alg == "topl":
        return tune_topl(d, K, L, r, M)
    if alg == "threshold-a":
        return tune_threshold_a(d, K, r, M, encoding)
    if alg == "threshold-b":
        return tune_threshold_b(d, K, r, M, encoding)
    if alg == "thm1":
        return topl_m0_params(d, r, M)
    if alg == "thm2":
        return topl_m_kl_params(d, K, L, r, M)
    if alg == "thm3a":
        return threshold_small(d, K, r, M, encoding)
    if alg == "thm3b":
        return threshold_mid(d, K, r, M, encoding)
    return m_eff_large(d, K, r, M, encoding)


def _runnable(params: TunedParams) -> bool:
    return not params.algorithm.is_threshold or (
        math.isfinite(params.threshold) and params.encoding is not None)


def _trial(problem_args, params, master_seed, trial_index, noise, trace):
    d, K, r, mu_profile = problem_args
    problem = make_problem(d, K, r, mu_profile, seed=SeedSpec(master_seed, trial_index, 0))
    out = run_support_round(problem, params, master_seed, trial_index, noise=noise, trace=trace)
    return out.exact_recovery, out.ledger.total_bits, out.ledger.trace


def run_point(cfg: SweepConfig, algorithm: str, r: float, pool: ThreadPoolExecutor | None = None,
              traces: list | None = None, sufficient: dict | None = None) -> ResultsRow:
    """Tune and simulate one (algorithm, r) grid point."""
    alg = _check_algorithm(algorithm)
    params = tune(alg, cfg.d, cfg.K, cfg.L, r, cfg.M, cfg.encoding)
    if sufficient is None or alg not in sufficient:
        r_suff = sufficient_snr(alg, cfg.d, cfg.K, cfg.L, cfg.M, cfg.encoding)
        if sufficient is not None:
            sufficient[alg] = r_suff
    else:
        r_suff = sufficient[alg]
    success = mean_bits = std_bits = None
    if _runnable(params):
        args = ((cfg.d, cfg.K, r, cfg.mu_profile), params, cfg.master_seed)
        keep = traces is not None
        jobs = [(*args, t, cfg.noise, keep) for t in range(cfg.trials)]
        if pool is None:
            results = [_trial(*job) for job in jobs]
        else:
            results = list(pool.map(lambda job: _trial(*job), jobs))
        wins = sum(ok for ok, _, _ in results)
        bits = np.array([b for _, b, _ in results], dtype=float)
        success = wins / cfg.trials
        mean_bits = float(bits.mean())
        std_bits = float(bits.std(ddof=1)) if cfg.trials > 1 else 0.0
        if keep:
            for t, (_, _, records) in enumerate(results):
                traces.append((f"algorithm={alg} r={r!r} trial={t}", records))
    tau = params.threshold if params.algorithm.is_threshold and _runnable(params) else None
    return ResultsRow(
        algorithm=alg, d=cfg.d, M=cfg.M, K=cfg.K, L=cfg.L if alg != "topk" else cfg.K, r=r,
        m_eff=params.m_eff, tau=tau,
        trials=cfg.trials, success_rate=success, mean_total_bits=mean_bits,
        std_total_bits=std_bits, r_necessary=necessary_snr(cfg.d, cfg.M),
        r_sufficient=None if math.isnan(r_suff) else r_suff, feasible=params.feasible,
    )


def run_sweep(cfg: SweepConfig, traces: list | None = None) -> list[ResultsRow]:
    """All (algorithm, r) grid points in config order.

    Pass a list as ``traces`` to collect ``(header, records)`` per trial.
    """
    sufficient: dict = {}
    pool = ThreadPoolExecutor(cfg.threads) if cfg.threads > 1 else None
    try:
        return [run_point(cfg, alg, r, pool, traces, sufficient)
                for alg in cfg.algorithms for r in cfg.r_grid]
    finally:
        if pool is not None:
            pool.shutdown()


def _parse_int(value: str) -> int:
    value = value.strip()
    if "^" in value:
        base, exp = value.split("^", 1)
        return int(base) ** int(exp)
    return int(value)


def _parse_grid(value: str) -> tuple[float, ...]:
    value = value.strip()
    if value.startswith("linspace(") and value.endswith(")"):
        lo, hi, n = (v.strip() for v in value[len("linspace("):-1].split(","))
        return tuple(round(float(x), 12) for x in np.linspace(float(lo), float(hi), int(n)))
    return tuple(float(v) for v in value.split(",") if v.strip())


_CONFIG_KEYS = {
    "algorithms": lambda v: tuple(a for a in (s.strip() for s in v.split(",")) if a),
    "d": _parse_int, "M": _parse_int, "K": _parse_int, "L": _parse_int,
    "r_grid": _parse_grid,
    "trials": _parse_int, "master_seed": _parse_int, "threads": _parse_int,
    "mu_profile": str.strip, "encoding": str.strip, "noise": float,
    "csv_path": str.strip, "plot_path": str.strip, "trace_path": str.strip,
}
_ALIASES = {"seed": "master_seed", "out": "csv_path", "plot": "plot_path", "trace": "trace_path"}


def parse_config(text: str, **overrides) -> SweepConfig:
    """Flat ``key = value`` lines; ``#`` starts a comment.

    Integers accept ``2^15``.  ``r_grid`` is a comma list or
    ``linspace(lo, hi, n)``.  Keyword overrides win over file values.
    """
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = _ALIASES.get(key, key)
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            values[key] = _CONFIG_KEYS[key](value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
    values.update({k: v for k, v in overrides.items() if v is not None})
    missing = [k for k in ("algorithms", "d", "M", "K") if k not in values]
    if missing:
        raise ConfigError(f"missing required keys: {', '.join(missing)}")
    values.setdefault("L", values["K"])
    try:
        return SweepConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: str | os.PathLike, **overrides) -> SweepConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, **overrides)


def _format(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def rows_to_csv(rows: Iterable[ResultsRow], header: bool = True) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if header:
        writer.writerow(FIELDS)
    for row in rows:
        writer.writerow([_format(getattr(row, f)) for f in FIELDS])
    return buf.getvalue()


def emit_csv(rows: Sequence[ResultsRow], path: str | os.PathLike) -> None:
    if not rows:
        raise ValueError("no rows to write")
    Path(path).write_text(rows_to_csv(rows), encoding="utf-8")


def _parse_cell(name: str, cell: str):
    if cell == "":
        return None
    kind = _TYPES[name]
    if kind == "bool":
        return cell == "true"
    if kind == "int":
        return int(cell)
    if kind == "str":
        return cell
    return float(cell)


def read_csv(path_or_text: str | os.PathLike) -> list[ResultsRow]:
    """Parse a results CSV (a path, or the CSV text itself if it contains a newline)."""
    text = str(path_or_text)
    if "\n" not in text:
        text = Path(text).read_text(encoding="utf-8")
    reader = csv.reader(io.StringIO(text))
    header = tuple(next(reader))
    if header != FIELDS:
        raise ValueError(f"unexpected CSV header {header}")
    return [ResultsRow(**{k: _parse_cell(k, c) for k, c in zip(FIELDS, cells)}) for cells in reader]


_PLOT_TEMPLATE = '''\
"""Success rate and communication cost against SNR, read from {csv_name}."""
import csv
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

HERE = Path(__file__).resolve().parent
CSV = HERE / {csv_name!r}
COLORS = {{"topk": "tab:blue", "topl": "tab:red", "threshold-a": "tab:orange",
          "threshold-b": "tab:purple"}}
LABELS = {{"topk": "Top-K", "topl": "Top-L", "threshold-a": "Thresholding A",
          "threshold-b": "Thresholding B"}}


def num(cell):
    return float(cell) if cell else math.nan


with open(CSV, newline="") as fh:
    rows = list(csv.DictReader(fh))

curves = {{}}
for row in rows:
    curves.setdefault(row["algorithm"], []).append(row)

fig, (ax_s, ax_b) = plt.subplots(1, 2, figsize=(11, 4))
for alg, pts in curves.items():
    pts.sort(key=lambda p: num(p["r"]))
    r = [num(p["r"]) for p in pts]
    color = COLORS.get(alg)
    label = LABELS.get(alg, alg)
    ax_s.plot(r, [num(p["success_rate"]) for p in pts], "o-", color=color, label=label)
    ax_b.plot(r, [num(p["mean_total_bits"]) for p in pts], "o-", color=color, label=label)
    suff = num(pts[0]["r_sufficient"])
    if not math.isnan(suff):
        for ax in (ax_s, ax_b):
            ax.axvline(suff, color=color, linestyle="--", linewidth=1)

r_nec = num(rows[0]["r_necessary"])
for ax in (ax_s, ax_b):
    ax.axvline(r_nec, color="black", linestyle="--", linewidth=1)
    ax.set_xlabel("r")
ax_s.set_ylabel("success rate")
ax_b.set_ylabel("total bits")
ax_b.set_yscale("log")
ax_s.legend(loc="lower right")
d = int(rows[0]["d"])
ax_b.axhline(d, color="gray", linestyle=":", linewidth=1)
fig.suptitle("d={{}}, M={{}}, K={{}}, L={{}}".format(rows[0]["d"], rows[0]["M"], rows[0]["K"],
             max(int(p["L"]) for p in rows)))
fig.tight_layout()
fig.savefig(HERE / {png_name!r}, dpi=150)
'''


def emit_plot_script(rows: Sequence[ResultsRow], path: str | os.PathLike,
                     csv_name: str | None = None) -> None:
    """Write a matplotlib script that renders the two panels from the CSV.

    The script looks for the CSV next to itself; ``csv_name`` defaults to the
    script name with a ``.csv`` suffix.
    """
    if not rows:
        raise ValueError("no rows to plot")
    path = Path(path)
    csv_name = csv_name or path.with_suffix(".csv").name
    path.write_text(_PLOT_TEMPLATE.format(csv_name=csv_name, png_name=path.with_suffix(".png").name),
                    encoding="utf-8")


def isotonic_residual(values: Sequence[float]) -> float:
    """Largest absolute gap between ``values`` and their best nondecreasing fit."""
    y = np.asarray(values, dtype=float)
    if y.size == 0:
        return 0.0
    return float(np.max(np.abs(y - isotonic_regression(y).x)))


def write_traces(traces, fh) -> None:
    for header, records in traces:
        write_trace(records, fh, header)
