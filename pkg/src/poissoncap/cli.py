"""Command-line harness: solve, sweep, quantizer-search, kkt, baseline.

Exit codes: 0 success, 2 configuration error, 3 degenerate solve,
4 partial sweep failure.
"""

from __future__ import annotations

import argparse
import math
import sys

from .bench import (
    read_report,
    run_sweep,
    sweep_rows_to_csv,
    sweep_rows_to_json,
    uniform_pam_baseline,
    write_report,
)
from .channel import ChannelSpec, Quantizer, count_ceiling
from .exceptions import DegenerateDistributionError, PoissonCapError
from .solver import SolverConfig, kkt_certify, solve
from .thresholds import search_1bit, search_multibit

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DEGENERATE = 3
EXIT_PARTIAL = 4


def _parse_grid(text: str) -> list[float]:
    """Grid syntax: comma list '0,5,10' or inclusive range 'start:stop:step'."""
    if ":" in text:
        parts = [float(p) for p in text.split(":")]
        if len(parts) == 2:
            start, stop, step = parts[0], parts[1], 1.0
        elif len(parts) == 3:
            start, stop, step = parts
        else:
            raise ValueError(f"bad range {text!r}; expected start:stop[:step]")
        if step <= 0:
            raise ValueError("range step must be positive")
        grid = []
        v = start
        while v <= stop + 1e-12:
            grid.append(round(v, 12))
            v += step
        return grid
    return [float(p) for p in text.split(",") if p.strip()]


def _parse_thresholds(text: str) -> tuple[int, ...]:
    return tuple(int(p) for p in text.replace(",", " ").split())


def _add_channel_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lambda", dest="dark_current", type=float, default=0.0,
                   help="dark current (mean dark counts per use)")
    p.add_argument("--alpha", type=float, default=1.0,
                   help="peak-to-average power ratio A/eps")


def _add_solver_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--points", type=int, default=None,
                   help="initial mass points (default: bins + 1)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--restarts", type=int, default=None)
    p.add_argument("--tol", type=float, default=None,
                   help="mean-power convergence tolerance")


def _add_quantizer_args(p: argparse.ArgumentParser) -> None:
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--bits", type=int, help="ADC precision; thresholds are searched")
    group.add_argument("--thresholds", type=_parse_thresholds,
                       help="explicit thresholds, e.g. '1,4,9'")


def _solver_config(args) -> SolverConfig:
    kwargs = {"rng_seed": args.seed}
    if getattr(args, "points", None) is not None:
        kwargs["n_initial_points"] = args.points
    if getattr(args, "restarts", None) is not None:
        kwargs["restarts"] = args.restarts
    if getattr(args, "tol", None) is not None:
        kwargs["tol_delta"] = args.tol
    return SolverConfig(**kwargs)


def _pick_quantizer(spec: ChannelSpec, args, config: SolverConfig) -> Quantizer:
    if args.thresholds is not None:
        return Quantizer(args.thresholds)
    if args.bits < 1:
        raise ValueError("--bits must be >= 1")
    bound = min(
        int(math.ceil(spec.peak_power + spec.dark_current)) + 2,
        count_ceiling(spec.peak_power + spec.dark_current),
    )
    if args.bits == 1:
        return search_1bit(spec, range(bound), config).best_quantizer
    return search_multibit(spec, 2**args.bits, bound, config).best_quantizer


def _print_report(spec, quantizer, report) -> None:
    print(f"capacity: {report.capacity_nats:.9f} nats = {report.capacity_bits:.9f} bits")
    print(f"thresholds: {list(quantizer.thresholds)} ({quantizer.n_bins} bins)")
    print(f"eta: {report.eta:.9g}   mean power: {report.distribution.mean_power:.6f}"
          f" (eps = {spec.avg_power:.6f})")
    print(f"iterations: {report.iterations}   converged: {report.converged}")
    print("support:")
    for x, p in zip(report.distribution.amplitudes, report.distribution.probs):
        print(f"  x = {x:12.6f}   p = {p:.9f}")
    cert = report.kkt
    print(f"kkt: passed={cert.passed} mu={cert.mu:.6g} "
          f"max_violation={cert.max_violation:.3e} "
          f"support_residual={cert.support_residual:.3e}")


def _cmd_solve(args) -> int:
    spec = ChannelSpec.from_snr_db(args.snr_db, args.dark_current, args.alpha)
    config = _solver_config(args)
    quantizer = _pick_quantizer(spec, args, config)
    report = solve(spec, quantizer, config)
    _print_report(spec, quantizer, report)
    if args.out:
        write_report(args.out, spec, quantizer, config, report)
        print(f"report written to {args.out}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    config = _solver_config(args)
    kwargs = dict(
        bits=args.bits,
        thresholds=args.thresholds,
        config=config,
        workers=args.workers,
    )
    if args.alpha_grid is not None:
        rows = run_sweep(args.dark_current, alpha_grid=_parse_grid(args.alpha_grid),
                         snr_db=args.snr_db_fixed, **kwargs)
    else:
        rows = run_sweep(args.dark_current, snr_db_grid=_parse_grid(args.snr_db),
                         alpha=args.alpha, **kwargs)
    if args.out:
        if args.format == "csv":
            sweep_rows_to_csv(rows, args.out)
        else:
            sweep_rows_to_json(rows, args.out)
        print(f"{len(rows)} rows written to {args.out}")
    for row in rows:
        status = row.error if row.error else f"C = {row.capacity_nats:.6f} nats"
        print(f"snr={row.snr_db:g} dB  K={row.K}  q={list(row.thresholds)}  {status}")
    if any(row.error for row in rows):
        return EXIT_PARTIAL
    return EXIT_OK


def _cmd_quantizer_search(args) -> int:
    spec = ChannelSpec.from_snr_db(args.snr_db, args.dark_current, args.alpha)
    config = _solver_config(args)
    bound = args.q_bound
    if bound is None:
        bound = min(
            int(math.ceil(spec.peak_power + spec.dark_current)) + 2,
            count_ceiling(spec.peak_power + spec.dark_current),
        )
    K = 2**args.bits
    if K == 2:
        result = search_1bit(spec, range(bound), config)
    else:
        result = search_multibit(spec, K, bound, config, budget=args.budget)
    print("thresholds -> capacity (nats)")
    for qs, cap in result.profile:
        print(f"  {list(qs)} -> {cap:.9f}")
    print(f"best: {list(result.best_quantizer.thresholds)} "
          f"with {result.best_capacity:.9f} nats")
    return EXIT_OK


def _cmd_kkt(args) -> int:
    spec, quantizer, config, report = read_report(args.report)
    cert = kkt_certify(report.distribution, report.eta, spec, quantizer, config,
                       grid_size=args.grid_size)
    print(f"capacity: {cert.capacity:.9f} nats   mu: {cert.mu:.6g}")
    print(f"max_violation: {cert.max_violation:.6e}")
    print(f"support_residual: {cert.support_residual:.6e}")
    print(f"passed: {cert.passed} (tol {config.kkt_tol:g}, grid {cert.grid_size})")
    return EXIT_OK


def _cmd_baseline(args) -> int:
    spec = ChannelSpec.from_snr_db(args.snr_db, args.dark_current, args.alpha)
    config = _solver_config(args)
    quantizer = _pick_quantizer(spec, args, config)
    levels = args.pam_points if args.pam_points is not None else quantizer.n_bins + 1
    nats = uniform_pam_baseline(spec, quantizer, levels)
    print(f"uniform {levels}-ary PAM on thresholds {list(quantizer.thresholds)}: "
          f"{nats:.9f} nats = {nats / math.log(2.0):.9f} bits")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="poissoncap",
        description="Capacity of the dark-current Poisson channel behind a threshold ADC",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="one solve at one operating point")
    _add_channel_args(p)
    p.add_argument("--snr-db", type=float, required=True)
    _add_quantizer_args(p)
    _add_solver_args(p)
    p.add_argument("--out", help="write the full report (JSON)")
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("sweep", help="grid of operating points with references")
    _add_channel_args(p)
    p.add_argument("--snr-db", help="SNR grid: '0,5,10' or '0:15:5'")
    p.add_argument("--alpha-grid", help="alpha grid (needs --snr-db-fixed)")
    p.add_argument("--snr-db-fixed", type=float, help="fixed SNR for an alpha sweep")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--bits", type=int)
    group.add_argument("--thresholds", type=_parse_thresholds)
    _add_solver_args(p)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="output path")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("quantizer-search", help="threshold scan at one point")
    _add_channel_args(p)
    p.add_argument("--snr-db", type=float, required=True)
    p.add_argument("--bits", type=int, required=True)
    p.add_argument("--q-bound", type=int, default=None)
    p.add_argument("--budget", type=int, default=512)
    _add_solver_args(p)
    p.set_defaults(func=_cmd_quantizer_search)

    p = sub.add_parser("kkt", help="re-certify a saved report")
    p.add_argument("report", help="path to a report JSON")
    p.add_argument("--grid-size", type=int, default=1001)
    p.set_defaults(func=_cmd_kkt)

    p = sub.add_parser("baseline", help="uniform PAM benchmark")
    _add_channel_args(p)
    p.add_argument("--snr-db", type=float, required=True)
    _add_quantizer_args(p)
    _add_solver_args(p)
    p.add_argument("--pam-points", type=int, default=None)
    p.set_defaults(func=_cmd_baseline)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DegenerateDistributionError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (ValueError, OSError, KeyError, PoissonCapError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
