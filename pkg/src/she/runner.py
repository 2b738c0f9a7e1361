"""Outer loop, baselines and Monte Carlo experiments.

Each outer iteration updates the radar receive filter for the current
effective beamformer and then runs the hybrid-beamformer inner loop from the
previous iterate.
"""
from __future__ import annotations

import logging
import math
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import hbf
from .array_model import SystemConfig, angle_grid, db2lin, lin2db, make_channels
from .metrics import BeamformerSet, MetricsReport, evaluate
from .receive_filter import ReceiveFilterState, matched_filter, optimize_receive_filter

log = logging.getLogger(__name__)

VARIANTS = ("SHE", "FD-BF", "ConvHBF", "CommOnly-I2S", "CommOnly-Conv")
SWEEP_PARAMS = {
    "radar_sinr_target_db": "radar_sinr_target",
    "eue_rate_cap": "eue_rate_caps",
    "csi_error_var": "csi_error_var",
    "angle_uncertainty": "angle_uncertainty",
}
WORKERS_ENV = "SHE_NUM_WORKERS"

CONVERGED = "Converged"
ITERATION_CAP = "IterationCap"
INFEASIBLE_RELAXED = "InfeasibleRelaxed"


class UnknownVariant(ValueError):
    pass


@dataclass
class RunOptions:
    max_outer: int = 30
    tol: float = 1e-3  # relative worst-case SR change
    plateau_window: int = 5
    gamma_backoff_db: float = 3.0
    max_backoffs: int = 3
    filter_tol: float = 1e-4
    filter_max_outer: int = 50
    hbf: hbf.HbfOptions = field(default_factory=hbf.HbfOptions)


@dataclass
class RunResult:
    beamformers: BeamformerSet
    filter: ReceiveFilterState
    metrics: MetricsReport
    trace: List[dict]
    seed: int
    status: str
    wall_time: float
    variant: str = "SHE"
    achieved_gamma: float = 0.0
    inner_trace: List[dict] = field(default_factory=list)
    power_slack: bool = False
    consensus_residual: float = 0.0

    def summary(self) -> dict:
        row = {"variant": self.variant, "seed": self.seed, "status": self.status,
               "wall_time": self.wall_time, "outer_iterations": len(self.trace),
               "achieved_gamma_db": lin2db(self.achieved_gamma) if self.achieved_gamma > 0
               else -math.inf,
               "power_slack": int(self.power_slack),
               "consensus_residual": self.consensus_residual}
        row.update(self.metrics.to_dict())
        return row


def _variant_setup(config: SystemConfig, variant: str, opts: RunOptions):
    """(config, hbf options, update filter?) for a named variant."""
    h = opts.hbf
    if variant == "SHE":
        return config, h, True
    if variant == "FD-BF":
        return config.replace(num_rf=config.num_tx), replace(h, fully_digital=True), True
    if variant == "ConvHBF":
        return config, replace(h, use_i2s=False), True
    if variant == "CommOnly-I2S":
        return config, replace(h, radar_constraint=False), False
    if variant == "CommOnly-Conv":
        return config, replace(h, radar_constraint=False, use_i2s=False), False
    raise UnknownVariant(f"unknown variant {variant!r}; expected one of {VARIANTS}")


def _outer_row(outer_iter, inner_iters, eta, report: MetricsReport, resid,
               iterate_sr: float) -> dict:
    """Metrics of the best iterate so far; ``eta`` and ``iterate_sr`` belong to the latest."""
    return {
        "outer_iter": outer_iter,
        "inner_iter": inner_iters,
        "eta": eta,
        "worst_case_sr": report.secrecy_rate_worst,
        "iterate_sr": iterate_sr,
        "min_radar_sinr": report.min_radar_sinr,
        "consensus_residual": resid,
        "max_eue_rate": float(np.max(report.eue_rate_worst)),
    }


def _relative_change(new: float, old: float) -> float:
    return abs(new - old) / max(abs(old), 1e-12)


def _plateaued(trace: List[dict], tol: float, window: int) -> bool:
    """Relative SR change below ``tol`` across the last ``window`` outer iterations."""
    if len(trace) < window:
        return False
    srs = [row["worst_case_sr"] for row in trace[-window:]]
    return _relative_change(srs[-1], srs[0]) < tol


def _attempt(config, seed, opts: RunOptions, hopts: hbf.HbfOptions, update_filter, variant):
    ss = np.random.SeedSequence(seed)
    chan_seq, analog_seq = ss.spawn(2)
    channels = make_channels(config, np.random.default_rng(chan_seq))
    grid = angle_grid(config.target_angle, config.angle_uncertainty, config.grid_step)
    analog = hbf._analog_for(config, hopts, np.random.default_rng(analog_seq))
    Y = hbf.initial_effective(channels, config, use_i2s=hopts.use_i2s)
    digital = hbf.update_digital(Y, analog)
    if not hopts.use_i2s:
        digital[:, 0] = 0.0
    bf = BeamformerSet.from_digital(analog, digital)
    filt = ReceiveFilterState(w=matched_filter(config), l=np.zeros(len(grid)))
    # the splitting state (Y, Z, A, D_CI) carries over between outer iterations
    Y_admm, Z, A, D_admm = Y, None, analog, digital
    trace: List[dict] = []
    inner_trace: List[dict] = []
    best = None
    status = ITERATION_CAP
    for outer in range(1, opts.max_outer + 1):
        if update_filter:
            filt = optimize_receive_filter(Y_admm, filt.w, config, grid, tol=opts.filter_tol,
                                           max_outer=opts.filter_max_outer)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", hbf.MaxInnerIterations)
            res = hbf.inner_loop(channels, filt.w, BeamformerSet.from_digital(A, D_admm),
                                 config, grid, hopts, effective0=Y_admm, outer_iter=outer,
                                 dual0=Z)
        inner_trace.extend(res.trace)
        Y_admm, Z = res.al.effective, res.al.dual
        A, D_admm = res.beamformers.analog, res.admm_digital
        report = evaluate(config, channels, res.beamformers, filt.w, grid)
        sr = report.secrecy_rate_worst
        log.info("outer %d: worst-case SR %.6f after %d inner steps", outer, sr, len(res.trace))
        if best is None or sr >= best[0]:
            best = (sr, res, filt, report)
        sr_b, res_b, filt_b, report_b = best
        trace.append(_outer_row(outer, len(res.trace), res.al.eta, report_b,
                                res_b.consensus_residual, sr))
        if _plateaued(trace, opts.tol, opts.plateau_window):
            status = CONVERGED
            break
    _, res, filt, _ = best
    bf, slack, resid = res.beamformers, res.power_slack, res.consensus_residual
    return channels, grid, bf, filt, trace, inner_trace, status, slack, resid


def _run_variant(config: SystemConfig, seed: int, variant: str,
                 opts: Optional[RunOptions] = None) -> RunResult:
    opts = opts or RunOptions()
    config.validate()
    cfg, hopts, update_filter = _variant_setup(config, variant, opts)
    start = time.perf_counter()
    backoffs = 0
    radar_active = hopts.radar_constraint and cfg.radar_sinr_target > 0
    while True:
        try:
            out = _attempt(cfg, seed, opts, hopts, update_filter, variant)
            break
        except hbf.InfeasibleSubproblem:
            if not radar_active or backoffs >= opts.max_backoffs:
                raise
            backoffs += 1
            new_gamma = cfg.radar_sinr_target / db2lin(opts.gamma_backoff_db)
            log.warning("infeasible at gamma_r=%.2f dB; retrying at %.2f dB",
                        lin2db(cfg.radar_sinr_target), lin2db(new_gamma))
            cfg = cfg.replace(radar_sinr_target=new_gamma)
    channels, grid, bf, filt, trace, inner_trace, status, slack, resid = out
    if backoffs:
        status = INFEASIBLE_RELAXED
    report = evaluate(cfg, channels, bf, filt.w, grid)
    return RunResult(beamformers=bf, filter=filt, metrics=report, trace=trace, seed=seed,
                     status=status, wall_time=time.perf_counter() - start, variant=variant,
                     achieved_gamma=cfg.radar_sinr_target if radar_active else 0.0,
                     inner_trace=inner_trace, power_slack=slack, consensus_residual=resid)


def run_she(config: SystemConfig, seed: int, opts: Optional[RunOptions] = None) -> RunResult:
    """Alternate receive-filter and hybrid-beamformer updates until the SR settles."""
    return _run_variant(config, seed, "SHE", opts)


def run_baseline(config: SystemConfig, variant: str, seed: int,
                 opts: Optional[RunOptions] = None) -> RunResult:
    if variant not in VARIANTS:
        raise UnknownVariant(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    return _run_variant(config, seed, variant, opts)


def post_hoc_checks(result: RunResult, config: SystemConfig) -> Dict[str, bool]:
    """Constraint checks on the final iterate, restricted to the variant's constraints."""
    _, hopts, _ = _variant_setup(config, result.variant, RunOptions())
    m = result.metrics
    checks = {
        "eue_rate": bool(np.all(m.eue_rate_worst <= config.eue_rate_caps + 1e-4)),
        "power": bool(config.power_budget - 1e-6 <= m.power <= config.power_budget + 1e-9)
        or result.power_slack,
    }
    if hopts.radar_constraint and result.achieved_gamma > 0:
        checks["radar_sinr"] = bool(np.all(m.radar_sinr_grid >= result.achieved_gamma - 1e-6))
    if not hopts.fully_digital:
        checks["constant_modulus"] = result.beamformers.is_constant_modulus()
    return checks


# ---------------------------------------------------------------- experiments

@dataclass
class ExperimentSpec:
    base: SystemConfig
    sweep_param: str
    sweep_values: Sequence[float]
    variants: Sequence[str] = ("SHE",)
    trials: int = 50
    seed: int = 0
    output_dir: str = "results"
    options: RunOptions = field(default_factory=RunOptions)
    trace_trial: int = 0

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.sweep_param not in SWEEP_PARAMS:
            raise ValueError(f"unknown sweep parameter {self.sweep_param!r}; "
                             f"expected one of {sorted(SWEEP_PARAMS)}")
        for v in self.variants:
            if v not in VARIANTS:
                raise UnknownVariant(f"unknown variant {v!r}")
        self.sweep_values = sorted(float(v) for v in self.sweep_values)

    def trial_seeds(self) -> List[int]:
        children = np.random.SeedSequence(self.seed).spawn(self.trials)
        return [int(c.generate_state(1, dtype=np.uint32)[0]) for c in children]

    def config_for(self, value: float) -> SystemConfig:
        name = SWEEP_PARAMS[self.sweep_param]
        if self.sweep_param == "radar_sinr_target_db":
            value = db2lin(value)
        return self.base.replace(**{name: value})


def _trial(args):
    config, variant, seed, opts = args
    try:
        res = run_baseline(config, variant, seed, opts)
        return {"ok": True, "summary": res.summary(), "trace": res.trace,
                "checks": post_hoc_checks(res, config)}
    except Exception as exc:  # recorded per trial; the batch keeps going
        log.exception("trial failed: variant=%s seed=%d", variant, seed)
        return {"ok": False, "summary": {"variant": variant, "seed": seed,
                                         "status": f"Error: {type(exc).__name__}: {exc}"},
                "trace": [], "checks": {}}


def _fmt_value(value: float) -> str:
    return repr(float(value))


def file_stem(variant: str, param: str, value: float, seed: int) -> str:
    return f"{variant}__{param}__{_fmt_value(value)}__{seed}"


def num_workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValueError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None


def aggregate(values: Sequence[float]) -> dict:
    arr = np.asarray([v for v in values if np.isfinite(v)], dtype=float)
    if len(arr) == 0:
        return {"mean": math.nan, "std": math.nan, "trials": 0}
    return {"mean": float(np.mean(arr)), "std": float(np.std(arr)), "trials": int(len(arr))}


def run_experiment(spec: ExperimentSpec, workers: Optional[int] = None) -> dict:
    """Run every (variant, sweep value, trial) and write CSV and JSON reports."""
    from .serialization import write_rows_csv, write_json  # local import keeps the cycle out

    out = Path(spec.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    seeds = spec.trial_seeds()
    jobs, keys = [], []
    for variant in spec.variants:
        for value in spec.sweep_values:
            cfg = spec.config_for(value)
            for t, s in enumerate(seeds):
                jobs.append((cfg, variant, s, spec.options))
                keys.append((variant, value, t))
    workers = workers or num_workers()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_trial, jobs))
    else:
        results = [_trial(j) for j in jobs]
    grouped: Dict[tuple, list] = {}
    for (variant, value, t), res in zip(keys, results):
        grouped.setdefault((variant, value), []).append((t, res))
    report = {"sweep_param": spec.sweep_param, "seed": spec.seed, "trials": spec.trials,
              "entries": []}
    for (variant, value), items in grouped.items():
        stem = file_stem(variant, spec.sweep_param, value, spec.seed)
        rows = []
        for t, res in items:
            row = {"trial": t, **res["summary"]}
            row.update({f"check_{k}": int(v) for k, v in res["checks"].items()})
            rows.append(row)
        write_rows_csv(out / f"{stem}.csv", rows)
        for t, res in items:
            if t == spec.trace_trial and res["trace"]:
                write_rows_csv(out / f"trace__{stem}.csv", res["trace"])
        srs = [r.get("secrecy_rate_worst", math.nan) for r in rows]
        entry = {"variant": variant, "value": value, "file": f"{stem}.csv",
                 "failures": sum(1 for _, r in items if not r["ok"])}
        entry.update(aggregate(srs))
        report["entries"].append(entry)
    write_json(out / f"aggregate__{spec.sweep_param}__{spec.seed}.json", report)
    return report


def spec_asdict(spec: ExperimentSpec) -> dict:
    d = asdict(spec)
    d.pop("base")
    return d
