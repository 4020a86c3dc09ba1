"""Experiment orchestration and result persistence."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from ..control_loop import (
    IterationTrace,
    estimate_budget,
    optimization_time,
    optimize,
)
from ..domain import Objective, SuperchannelPlan, objective_value
from ..oracle import GridCapExceeded, GridSearchSpec, brute_force
from ..plm import SurrogateMonitor, snr
from .config import ExperimentConfig, config_to_dict

__all__ = [
    "CSV_COLUMNS",
    "ExperimentResult",
    "RunResult",
    "drift_starts",
    "run_experiment",
    "start_plans",
]

logger = logging.getLogger(__name__)

CSV_COLUMNS = (
    "case",
    "objective",
    "f_step_ghz",
    "start",
    "initial_db",
    "equidistant_db",
    "final_db",
    "true_final_db",
    "iterations",
    "monitor_calls",
    "t_opt_s",
    "oracle_best_db",
    "oracle_worst_db",
    "improvement_vs_worst_db",
    "improvement_vs_equidistant_db",
    "status",
    "best_distances_ghz",
)

NA = "NA"


@dataclass
class RunResult:
    case: str
    objective: Objective
    f_step: float
    start_index: int
    start_distances: tuple[float, ...]
    initial_objective: float
    equidistant_objective: float
    final_objective: float  # best value the loop measured (noisy when noise is on)
    true_objective: float  # noise-free value of the returned plan
    final_snr: tuple[float, ...]
    best_distances: tuple[float, ...]
    iterations: int
    monitor_calls: int
    minibatch_size: int
    t_opt: float
    convergence_iteration: int
    iteration_bound: int
    status: str
    oracle_best: float | None = None
    oracle_worst: float | None = None
    oracle_best_distances: tuple[float, ...] | None = None
    trace: IterationTrace | None = field(default=None, repr=False)

    # improvements compare noise-free values so monitor noise cannot inflate them
    @property
    def improvement_vs_equidistant(self) -> float:
        return self.true_objective - self.equidistant_objective

    @property
    def improvement_vs_worst(self) -> float | None:
        if self.oracle_worst is None:
            return None
        return self.true_objective - self.oracle_worst

    def row(self) -> dict[str, str]:
        def fmt(x: float | None) -> str:
            return NA if x is None or (isinstance(x, float) and math.isnan(x)) else f"{x:.4f}"

        return {
            "case": self.case,
            "objective": self.objective.value,
            "f_step_ghz": f"{self.f_step:g}",
            "start": str(self.start_index),
            "initial_db": fmt(self.initial_objective),
            "equidistant_db": fmt(self.equidistant_objective),
            "final_db": fmt(self.final_objective),
            "true_final_db": fmt(self.true_objective),
            "iterations": str(self.iterations),
            "monitor_calls": str(self.monitor_calls),
            "t_opt_s": f"{self.t_opt:g}",
            "oracle_best_db": fmt(self.oracle_best),
            "oracle_worst_db": fmt(self.oracle_worst),
            "improvement_vs_worst_db": fmt(self.improvement_vs_worst),
            "improvement_vs_equidistant_db": fmt(self.improvement_vs_equidistant),
            "status": self.status,
            "best_distances_ghz": " ".join(f"{d:g}" for d in self.best_distances),
        }

    def to_dict(self, include_trace: bool = True) -> dict[str, Any]:
        out = {k: v for k, v in dataclasses.asdict(self).items() if k != "trace"}
        out["objective"] = self.objective.value
        out["improvement_vs_equidistant"] = self.improvement_vs_equidistant
        out["improvement_vs_worst"] = self.improvement_vs_worst
        if include_trace and self.trace is not None:
            out["trace"] = _trace_dict(self.trace)
        return _jsonable(out)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunResult":
        names = {f.name for f in dataclasses.fields(cls)} - {"trace"}
        kwargs = {k: data[k] for k in names if k in data}
        kwargs["objective"] = Objective.parse(kwargs["objective"])
        for key in ("start_distances", "final_snr", "best_distances", "oracle_best_distances"):
            if kwargs.get(key) is not None:
                kwargs[key] = tuple(kwargs[key])
        for key in ("initial_objective", "equidistant_objective", "final_objective", "true_objective"):
            if kwargs.get(key) is None:
                kwargs[key] = float("nan")
        return cls(**kwargs)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    runs: list[RunResult]
    warnings: list[str] = field(default_factory=list)
    paths: dict[str, Path] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "config": config_to_dict(self.config),
            "warnings": list(self.warnings),
            "runs": [r.to_dict() for r in self.runs],
        }

    def csv_text(self) -> str:
        return runs_to_csv(self.runs)

    def json_text(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False) + "\n"

    def persist(self, out_dir: str | Path) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / f"{self.config.name}.csv"
        json_path = out / f"{self.config.name}.json"
        csv_path.write_text(self.csv_text(), newline="")
        json_path.write_text(self.json_text())
        self.paths = {"csv": csv_path, "json": json_path}
        return self.paths


def runs_to_csv(runs: Sequence[RunResult]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for r in runs:
        writer.writerow(r.row())
    return buf.getvalue()


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, Objective):
        return value.value
    if isinstance(value, (np.floating, float)):
        v = float(value)
        return v if math.isfinite(v) else None
    if isinstance(value, np.integer):
        return int(value)
    return value


def _trace_dict(trace: IterationTrace) -> dict[str, Any]:
    return _jsonable({
        "objective": trace.objective.value,
        "start_distances": trace.start_distances,
        "status": trace.status,
        "message": trace.message,
        "monitor_calls": trace.monitor_calls,
        "records": [dataclasses.asdict(r) for r in trace.records],
    })


# -- starts -----------------------------------------------------------------------

def drift_starts(base: SuperchannelPlan, half_range: float, count: int, seed: int) -> list[SuperchannelPlan]:
    """*count* plans with every carrier moved uniformly within +/- *half_range*.

    Offsets are drawn on the laser grid; draws that would reorder carriers
    or touch the filter edge are redrawn.
    """
    grid = base.laser_granularity or 0.25
    k = int(round(half_range / grid))
    plans = []
    for i in range(count):
        rng = np.random.default_rng([seed, i])
        for _ in range(1000):
            cand = base.offsets + rng.integers(-k, k + 1, size=base.n) * grid
            d = np.diff(np.concatenate(([-base.filter_bandwidth / 2], cand, [base.filter_bandwidth / 2])))
            if np.all(d > 0):
                plans.append(base.with_offsets(cand))
                break
        else:  # pragma: no cover - needs a pathologically tight plan
            raise ValueError("could not draw a feasible drifted start")
    return plans


def start_plans(config: ExperimentConfig) -> list[SuperchannelPlan]:
    sc, st = config.scenario, config.start
    if st.mode == "explicit":
        return [sc._plan(st.distances)]
    if st.mode == "random_drift":
        return drift_starts(sc.plan(), st.range, st.count, st.seed)
    return [sc.plan()]


# -- runs -------------------------------------------------------------------------

@dataclass(frozen=True)
class _Job:
    config: ExperimentConfig
    objective: Objective
    f_step: float
    start_index: int
    start: SuperchannelPlan


def _run_one(job: _Job) -> tuple[RunResult, list[str]]:
    cfg = job.config
    model = cfg.model
    noise_free = dataclasses.replace(model, monitor_noise_sigma=0.0)
    opt_cfg = cfg.optimizer_for(job.f_step, seed_offset=job.start_index)
    monitor = SurrogateMonitor(model, seed=model.rng_seed + job.start_index, t_mon=cfg.timing.t_mon)
    result = optimize(job.start, job.objective, monitor, opt_cfg)
    trace = result.trace
    eq_value = objective_value(snr(cfg.scenario.equidistant_plan(), noise_free), job.objective)
    initial = (trace.records[0].baseline_objective if trace.records
               else objective_value(snr(job.start, noise_free), job.objective))
    m = opt_cfg.minibatch_size
    budget = estimate_budget(trace, job.start.n, m, opt_cfg.tolerance)
    warnings: list[str] = []
    run = RunResult(
        case=cfg.scenario.name,
        objective=job.objective,
        f_step=job.f_step,
        start_index=job.start_index,
        start_distances=job.start.distances,
        initial_objective=initial,
        equidistant_objective=eq_value,
        final_objective=result.best_objective,
        true_objective=objective_value(snr(result.best_plan, noise_free), job.objective),
        final_snr=result.best_report.snr if result.best_report else (),
        best_distances=result.best_plan.distances,
        iterations=trace.iterations,
        monitor_calls=trace.monitor_calls,
        minibatch_size=m,
        t_opt=optimization_time(trace.iterations, m, cfg.timing),
        convergence_iteration=trace.convergence_iteration(opt_cfg.tolerance),
        iteration_bound=budget.implied_iterations,
        status=trace.status,
        trace=trace,
    )
    if trace.status == "error":
        warnings.append(f"{_label(run)}: optimisation aborted ({trace.message})")
    if cfg.oracle is not None and result.best_report is not None:
        spec = GridSearchSpec(result.best_plan, cfg.oracle.half_range, cfg.oracle.grid_step, job.objective)
        try:
            bf = brute_force(spec, noise_free, cap=cfg.oracle.cap, workers=cfg.oracle.workers)
        except GridCapExceeded as exc:
            warnings.append(f"{_label(run)}: oracle skipped, {exc}")
        else:
            run.oracle_best = bf.best_value
            run.oracle_worst = bf.worst_value
            run.oracle_best_distances = bf.best_plan.distances if bf.best_plan else None
    return run, warnings


def _label(run: RunResult) -> str:
    return f"{run.case}/{run.objective.value}/step {run.f_step:g}/start {run.start_index}"


def run_experiment(config: ExperimentConfig, out_dir: str | Path | None = None,
                   persist: bool = True) -> ExperimentResult:
    """Optimise every (objective, step size, start) combination of *config*.

    Runs are ordered by objective, then step size, then start index, whatever
    order the workers finish in.  Artifacts go to *out_dir* (or the
    configured output directory) when *persist* is set and a directory is known.
    """
    starts = start_plans(config)
    jobs = [_Job(config, obj, step, i, plan)
            for obj in config.objectives for step in config.step_sizes
            for i, plan in enumerate(starts)]
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            outcomes = list(pool.map(_run_one, jobs))
    else:
        outcomes = [_run_one(job) for job in jobs]
    runs = [run for run, _ in outcomes]
    warnings = [w for _, ws in outcomes for w in ws]
    for w in warnings:
        logger.warning(w)
    result = ExperimentResult(config, runs, warnings)
    target = out_dir if out_dir is not None else config.output_dir
    if persist and target is not None:
        result.persist(target)
    return result


def load_results(path: str | Path) -> tuple[list[RunResult], list[str]]:
    """Runs and warnings from a persisted JSON record."""
    data = json.loads(Path(path).read_text())
    return [RunResult.from_dict(r) for r in data.get("runs", [])], list(data.get("warnings", []))
