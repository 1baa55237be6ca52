"""Command line front end: ``sparsecomm {bounds,tune,run,sweep,regimes}``."""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import bounds as B
from .codec import ENCODINGS, index_bits
from .harness import (
    ALGORITHMS,
    ConfigError,
    SweepConfig,
    emit_csv,
    emit_plot_script,
    load_config,
    rows_to_csv,
    run_sweep,
    tune,
    write_traces,
)
from .model import make_problem, mu_min
from .tuning import sufficient_snr

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3


def _need(args, *names):
    missing = [n for n in names if getattr(args, n) is None]
    if missing:
        what = getattr(args, "quantity", None) or args.command
        raise ConfigError(f"{what} needs --{' --'.join(missing)}")
    return [getattr(args, n) for n in names]


def _params_lines(params: B.TunedParams) -> list[str]:
    return [f"{k}={'' if v is None else v}" for k, v in params.as_dict().items()]


# each entry: (required args, function returning a value or a list of key=value lines)
QUANTITIES = {
    "m0": (("d", "r"), lambda a: B.m0(a.d, a.r)),
    "m_kl": (("d", "r", "K", "L"), lambda a: B.m_kl(a.d, a.r, a.K, a.L)),
    "a": (("d", "K", "L"), lambda a: B.a_quantity(a.K, a.L, a.d)),
    "b": (("d", "K", "L", "r"), lambda a: B.b_quantity(a.K, a.L, a.d, a.r)),
    "mu_min": (("d", "K", "r"), lambda a: mu_min(a.d, a.K, a.r)),
    "index_bits": (("d",), lambda a: index_bits(a.d)),
    "vote_factor": (("d", "K"), lambda a: B.vote_factor(a.d, a.K)),
    "necessary_snr": (("d", "M"), lambda a: B.necessary_snr(a.d, a.M)),
    "oracle_risk": (("d", "K", "r", "M"),
                    lambda a: B.oracle_risk(make_problem(a.d, a.K, a.r, support=range(a.K)).mu, a.M)),
    "pi_risk_bound": (("d", "K", "M", "r"), lambda a: B.pi_risk_bound(a.d, a.K, a.M, a.r)),
    "p_send_support_topl": (("d", "K", "L", "r"),
                            lambda a: B.p_send_support_topl(a.d, a.K, a.L, a.r)),
    "threshold_small": (("d", "K", "r"),
                        lambda a: _params_lines(B.threshold_small(a.d, a.K, a.r, a.M, a.encoding))),
    "threshold_mid": (("d", "K", "r", "M"),
                      lambda a: _params_lines(B.threshold_mid(a.d, a.K, a.r, a.M, a.encoding))),
    "threshold_mid_r_bound": (("d", "K", "M"), lambda a: B.threshold_mid_r_bound(a.d, a.K, a.M)),
    "m_eff_large": (("d", "K", "r"),
                    lambda a: _params_lines(B.m_eff_large(a.d, a.K, a.r, a.M, a.encoding))),
    "sufficient_snr": (("alg", "d", "K", "M"),
                       lambda a: sufficient_snr(a.alg, a.d, a.K, a.L or a.K, a.M, a.encoding)),
}


def _cmd_bounds(args) -> int:
    required, fn = QUANTITIES[args.quantity]
    _need(args, *required)
    try:
        value = fn(args)
    except B.SingleMachineRegime as exc:
        print(f"{args.quantity}=")
        print(f"single_machine_regime={exc}")
        return EXIT_OK
    lines = value if isinstance(value, list) else [f"{args.quantity}={value}"]
    print("\n".join(lines))
    return EXIT_OK


def _cmd_tune(args) -> int:
    _need(args, "d", "K", "r", "M")
    params = tune(args.alg, args.d, args.K, args.L or args.K, args.r, args.M, args.encoding)
    print("\n".join(_params_lines(params)))
    return EXIT_OK


def _finish(rows, cfg: SweepConfig, traces) -> int:
    if cfg.csv_path:
        emit_csv(rows, cfg.csv_path)
    else:
        sys.stdout.write(rows_to_csv(rows))
    if cfg.plot_path:
        emit_plot_script(rows, cfg.plot_path,
                         csv_name=Path(cfg.csv_path).name if cfg.csv_path else None)
    if cfg.trace_path:
        with open(cfg.trace_path, "w", encoding="utf-8") as fh:
            write_traces(traces, fh)
    return EXIT_INFEASIBLE if not any(row.feasible for row in rows) else EXIT_OK


def _cmd_run(args) -> int:
    _need(args, "d", "K", "r", "M")
    cfg = SweepConfig(
        algorithms=(args.alg,), d=args.d, M=args.M, K=args.K, L=args.L or args.K,
        r_grid=(args.r,), trials=100 if args.trials is None else args.trials,
        master_seed=0 if args.seed is None else args.seed,
        mu_profile=args.mu_profile, encoding=args.encoding or "paper", noise=args.noise,
        threads=1 if args.threads is None else args.threads,
        csv_path=args.out, plot_path=args.plot, trace_path=args.trace,
    )
    traces = [] if cfg.trace_path else None
    return _finish(run_sweep(cfg, traces), cfg, traces)


def _cmd_sweep(args) -> int:
    cfg = load_config(args.config, trials=args.trials, master_seed=args.seed,
                      threads=args.threads, csv_path=args.out, plot_path=args.plot,
                      trace_path=args.trace, encoding=args.encoding)
    traces = [] if cfg.trace_path else None
    return _finish(run_sweep(cfg, traces), cfg, traces)


def _cmd_regimes(args) -> int:
    """Regime boundaries over a grid of machine counts, as CSV."""
    d = args.d
    Ms = [int(m) for m in np.unique(np.round(np.logspace(0, math.log10(args.max_M), args.points)))]
    lines = ["M,r_information,r_log_line,r_necessary,r_sublinear"]
    for M in Ms:
        # smallest r with m0(d, r) <= M: m0 is decreasing in r on (0, 1)
        lo, hi = 0.0, 1.0 - 1e-12
        if B.m0(d, hi) > M:
            sub = ""
        else:
            while hi - lo > 1e-6:
                mid = 0.5 * (lo + hi)
                if B.m0(d, mid) <= M:
                    hi = mid
                else:
                    lo = mid
            sub = repr(hi)
        lines.append(f"{M},{1 / M!r},{math.log(d) ** -3!r},{B.necessary_snr(d, M)!r},{sub}")
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _int(text: str) -> int:
    if "^" in text:
        base, exp = text.split("^", 1)
        return int(base) ** int(exp)
    return int(text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sparsecomm", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def problem_args(p, alg_required=False):
        p.add_argument("--d", type=_int)
        p.add_argument("--K", type=_int)
        p.add_argument("--L", type=_int)
        p.add_argument("--M", type=_int)
        p.add_argument("--r", type=float)
        p.add_argument("--encoding", choices=ENCODINGS, default=None)
        if alg_required:
            p.add_argument("--alg", required=True, choices=ALGORITHMS)

    def run_args(p):
        p.add_argument("--seed", type=_int)
        p.add_argument("--trials", type=_int)
        p.add_argument("--threads", type=_int)
        p.add_argument("--out")
        p.add_argument("--plot", help="also write a plot script here")
        p.add_argument("--trace", help="write the per-message trace here")

    p = sub.add_parser("bounds", help="print a closed-form quantity")
    p.add_argument("quantity", choices=sorted(QUANTITIES))
    problem_args(p)
    p.add_argument("--alg", choices=ALGORITHMS)
    p.set_defaults(func=_cmd_bounds)

    p = sub.add_parser("tune", help="print tuned parameters")
    problem_args(p, alg_required=True)
    p.set_defaults(func=_cmd_tune)

    p = sub.add_parser("run", help="simulate one configuration and print one CSV row")
    problem_args(p, alg_required=True)
    run_args(p)
    p.add_argument("--mu-profile", default="minimal")
    p.add_argument("--noise", type=float, default=1.0)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("sweep", help="run a grid from a key=value config file")
    p.add_argument("--config", required=True)
    p.add_argument("--encoding", choices=ENCODINGS, default=None)
    run_args(p)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("regimes", help="regime boundaries against the number of machines")
    p.add_argument("--d", type=_int, required=True)
    p.add_argument("--max-M", type=_int, default=2**20)
    p.add_argument("--points", type=int, default=41)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_regimes)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    if getattr(args, "encoding", "x") is None and args.command in ("bounds", "tune"):
        args.encoding = "paper"
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"sparsecomm: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"sparsecomm: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
