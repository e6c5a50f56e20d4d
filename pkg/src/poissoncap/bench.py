"""Experiment harness: operating-point sweeps, baselines, and report files.

A sweep walks a grid of operating points (SNR in dB at fixed peak-to-average
ratio, or the ratio itself at fixed SNR), finds the best quantizer at each
point (unless thresholds are pinned), solves for capacity, solves the
unquantized reference, and evaluates the uniform PAM benchmark.  Rows come
back in grid order regardless of worker scheduling and serialize to CSV
(RFC-4180, 17 significant digits) or JSON with identical field names.
"""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .ba import mutual_information
from .channel import (
    ChannelSpec,
    InputDistribution,
    Quantizer,
    build_transition,
    count_ceiling,
)
from .solver import (
    KktCertificate,
    SolveReport,
    SolverConfig,
    solve,
    unquantized_capacity,
)
from .thresholds import search_1bit, search_multibit

__all__ = [
    "SweepRow",
    "uniform_pam_baseline",
    "run_sweep",
    "sweep_rows_to_csv",
    "sweep_rows_to_json",
    "write_report",
    "read_report",
]


@dataclass
class SweepRow:
    """One operating point of a sweep; field order fixes the CSV schema."""

    snr_db: float
    epsilon: float
    A: float
    K: int
    thresholds: tuple[int, ...]
    capacity_nats: float
    capacity_bits: float
    capacity_ratio_vs_unquantized: float
    unquantized_nats: float
    unquantized_bits: float
    pam_baseline_nats: float
    pam_baseline_bits: float
    n_effective_points: int
    eta: float
    kkt_passed: bool
    iterations: int
    wall_time_ms: float
    upper_bound_nats: float | None = None  # reserved; filled by external tooling
    error: str | None = None


def uniform_pam_baseline(
    spec: ChannelSpec, quantizer: Quantizer, k_plus_1: int
) -> float:
    """Mutual information of the uniform (K+1)-ary PAM benchmark, in nats.

    Equally spaced, equally likely amplitudes on [0, A], with the grid
    scaled down when its mean A/2 would break the average-power cap.  No
    optimization is performed.
    """
    if k_plus_1 < 2:
        raise ValueError("the PAM benchmark needs at least two levels")
    grid = np.linspace(0.0, spec.peak_power, k_plus_1)
    mean = float(grid.mean())
    scale = min(1.0, spec.avg_power / mean) if mean > 0 else 1.0
    dist = InputDistribution(grid * scale, np.full(k_plus_1, 1.0 / k_plus_1))
    trans = build_transition(dist.amplitudes, spec, quantizer)
    return mutual_information(dist, trans)


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------


def _pick_quantizer(spec, bits, thresholds, config, q_bound, budget):
    if thresholds is not None:
        return Quantizer(tuple(thresholds))
    K = 2**bits
    bound = q_bound if q_bound is not None else min(
        int(math.ceil(spec.peak_power + spec.dark_current)) + 2,
        count_ceiling(spec.peak_power + spec.dark_current),
    )
    if K == 2:
        return search_1bit(spec, range(bound), config).best_quantizer
    return search_multibit(spec, K, bound, config, budget=budget).best_quantizer


def _sweep_point(args) -> SweepRow:
    (snr_db, dark_current, alpha, bits, thresholds, config, q_bound, budget) = args
    spec = ChannelSpec.from_snr_db(snr_db, dark_current, alpha)
    start = time.perf_counter()
    try:
        quantizer = _pick_quantizer(spec, bits, thresholds, config, q_bound, budget)
        report = solve(spec, quantizer, config)
        reference = unquantized_capacity(spec, config)
        baseline = uniform_pam_baseline(spec, quantizer, quantizer.n_bins + 1)
        elapsed_ms = (time.perf_counter() - start) * 1e3
        ref_cap = reference.capacity_nats
        ratio = report.capacity_nats / ref_cap if ref_cap > 0 else 0.0
        floor = config.prob_floor if config is not None else 1e-6
        return SweepRow(
            snr_db=snr_db,
            epsilon=spec.avg_power,
            A=spec.peak_power,
            K=quantizer.n_bins,
            thresholds=quantizer.thresholds,
            capacity_nats=report.capacity_nats,
            capacity_bits=report.capacity_bits,
            capacity_ratio_vs_unquantized=ratio,
            unquantized_nats=ref_cap,
            unquantized_bits=ref_cap / math.log(2.0),
            pam_baseline_nats=baseline,
            pam_baseline_bits=baseline / math.log(2.0),
            n_effective_points=report.distribution.effective_size(floor),
            eta=report.eta,
            kkt_passed=report.kkt.passed,
            iterations=report.iterations,
            wall_time_ms=elapsed_ms,
        )
    except Exception as err:  # record per-row, let the caller decide the exit code
        elapsed_ms = (time.perf_counter() - start) * 1e3
        return SweepRow(
            snr_db=snr_db,
            epsilon=spec.avg_power,
            A=spec.peak_power,
            K=0,
            thresholds=(),
            capacity_nats=math.nan,
            capacity_bits=math.nan,
            capacity_ratio_vs_unquantized=math.nan,
            unquantized_nats=math.nan,
            unquantized_bits=math.nan,
            pam_baseline_nats=math.nan,
            pam_baseline_bits=math.nan,
            n_effective_points=0,
            eta=math.nan,
            kkt_passed=False,
            iterations=0,
            wall_time_ms=elapsed_ms,
            error=f"{type(err).__name__}: {err}",
        )


def run_sweep(
    dark_current: float,
    *,
    snr_db_grid=None,
    alpha: float | None = None,
    alpha_grid=None,
    snr_db: float | None = None,
    bits: int | None = None,
    thresholds=None,
    config: SolverConfig | None = None,
    q_bound: int | None = None,
    budget: int = 512,
    workers: int = 1,
) -> list[SweepRow]:
    """Sweep either an SNR grid (fixed alpha) or an alpha grid (fixed SNR).

    Exactly one of ``bits`` or ``thresholds`` selects the quantizer mode.
    Rows are returned in grid order; failures are recorded per row rather
    than raised.
    """
    if (bits is None) == (thresholds is None):
        raise ValueError("pass exactly one of bits or thresholds")
    if (snr_db_grid is None) == (alpha_grid is None):
        raise ValueError("pass exactly one of snr_db_grid or alpha_grid")
    cfg = config if config is not None else SolverConfig()
    if snr_db_grid is not None:
        if alpha is None:
            raise ValueError("an SNR sweep needs a fixed alpha")
        points = [(float(s), dark_current, float(alpha)) for s in snr_db_grid]
    else:
        if snr_db is None:
            raise ValueError("an alpha sweep needs a fixed snr_db")
        points = [(float(snr_db), dark_current, float(a)) for a in alpha_grid]
    tasks = [
        (s, lam, a, bits, thresholds, cfg, q_bound, budget) for (s, lam, a) in points
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_point, tasks))
    else:
        rows = [_sweep_point(t) for t in tasks]
    return rows


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.17g}"
    if isinstance(value, tuple):
        return " ".join(str(v) for v in value)
    return str(value)


def sweep_rows_to_csv(rows: list[SweepRow], path) -> None:
    """CSV with the SweepRow field order, RFC-4180 quoting, 17 digits."""
    names = [f.name for f in fields(SweepRow)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        for row in rows:
            writer.writerow([_format_cell(getattr(row, name)) for name in names])


def sweep_rows_to_json(rows: list[SweepRow], path) -> None:
    payload = [asdict(row) for row in rows]
    for entry in payload:
        entry["thresholds"] = list(entry["thresholds"])
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def write_report(
    path,
    spec: ChannelSpec,
    quantizer: Quantizer,
    config: SolverConfig,
    report: SolveReport,
) -> None:
    """Full solve report as JSON; floats survive a round trip bit-exactly."""
    payload = {
        "channel": {
            "dark_current": spec.dark_current,
            "peak_power": spec.peak_power,
            "avg_power": spec.avg_power,
        },
        "quantizer": {"thresholds": list(quantizer.thresholds)},
        "config": asdict(config),
        "report": {
            "capacity_nats": report.capacity_nats,
            "capacity_bits": report.capacity_bits,
            "eta": report.eta,
            "iterations": report.iterations,
            "converged": report.converged,
            "distribution": {
                "amplitudes": report.distribution.amplitudes.tolist(),
                "probs": report.distribution.probs.tolist(),
            },
            "mi_trace": list(report.mi_trace),
            "avg_power_trace": list(report.avg_power_trace),
            "kkt": asdict(report.kkt),
        },
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def read_report(path):
    """Load a report file back into (spec, quantizer, config, SolveReport)."""
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    spec = ChannelSpec(**payload["channel"])
    quantizer = Quantizer(tuple(payload["quantizer"]["thresholds"]))
    config = SolverConfig(**payload["config"])
    rep = payload["report"]
    dist = InputDistribution(
        np.asarray(rep["distribution"]["amplitudes"]),
        np.asarray(rep["distribution"]["probs"]),
    )
    report = SolveReport(
        capacity_nats=rep["capacity_nats"],
        distribution=dist,
        eta=rep["eta"],
        iterations=rep["iterations"],
        mi_trace=list(rep["mi_trace"]),
        avg_power_trace=list(rep["avg_power_trace"]),
        kkt=KktCertificate(**rep["kkt"]),
        converged=rep["converged"],
    )
    return spec, quantizer, config, report
