"""Closed-loop stochastic subgradient optimisation with monitoring probes.

Each iteration measures the current plan once (reused while the plan does
not change), probes ``M`` randomly chosen subchannels by shifting each one
``+f_step`` and estimates ``g_n = (h(D) - h(D + step on n)) / f_step``.
Probed subchannels whose ``|g_n|`` clears the dead-band then move jointly by
``f_step`` against the sign of ``g_n``.  The best measured plan (probes
included) is memorised; if the current plan falls more than ``tolerance``
below it the loop restarts from the memorised plan.  The loop stops after
``patience`` iterations without improvement or at ``max_iterations``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .domain import (
    InfeasibleShiftError,
    InvalidInputError,
    Objective,
    SnrReport,
    SuperchannelPlan,
    check_constraints,
    objective_value,
    shift_subchannel,
)
from .plm import Monitor

__all__ = [
    "ConvergenceBudget",
    "IterationRecord",
    "IterationTrace",
    "OptimizeResult",
    "OptimizerConfig",
    "ProbeRecord",
    "ProbeUnavailableError",
    "TimingModel",
    "apply_step",
    "estimate_budget",
    "finite_difference_subgradient",
    "iteration_bound",
    "near_minimum",
    "optimization_time",
    "optimize",
    "select_minibatch",
    "tie_aware_value",
]

logger = logging.getLogger(__name__)


class ProbeUnavailableError(InfeasibleShiftError):
    """The +f_step probe of a subchannel leaves the feasible set."""


@dataclass(frozen=True)
class OptimizerConfig:
    f_step: float = 0.25  # GHz
    minibatch_size: int = 2
    tolerance: float = 0.2  # dB
    patience: int = 20
    max_iterations: int = 200
    enforce_eq5: bool = False
    rng_seed: int = 0
    laser_granularity: float = 0.25  # GHz
    deadband: float = 0.0  # dB/GHz; |g_n| at or below this does not move
    improvement_threshold: float = 0.0  # dB; best-so-far gain above this resets patience
    tie_tolerance: float = 0.2  # dB; min-objective channels this close to the minimum count as tied

    def __post_init__(self) -> None:
        if not self.f_step > 0:
            raise InvalidInputError("f_step must be positive")
        if self.laser_granularity > 0:
            ratio = self.f_step / self.laser_granularity
            if abs(ratio - round(ratio)) > 1e-9:
                raise InvalidInputError(
                    f"f_step {self.f_step} is not a multiple of the laser granularity {self.laser_granularity}")
        if self.minibatch_size < 1:
            raise InvalidInputError("minibatch_size must be >= 1")
        if self.tolerance < 0 or self.patience < 1 or self.max_iterations < 0:
            raise InvalidInputError("tolerance >= 0, patience >= 1 and max_iterations >= 0 required")
        if self.deadband < 0 or self.improvement_threshold < 0 or self.tie_tolerance < 0:
            raise InvalidInputError("deadband, improvement_threshold and tie_tolerance must be >= 0")

    def tolerance_deadband(self) -> float:
        """Dead-band that ignores any probe changing the objective by under ``tolerance/2``."""
        return self.tolerance / (2.0 * self.f_step)


@dataclass(frozen=True)
class TimingModel:
    t_mon: float = 60.0  # s per simultaneous N-subchannel measurement
    t_calc: float = 1.0  # s per algorithm step

    def __post_init__(self) -> None:
        if self.t_mon < 0 or self.t_calc < 0:
            raise InvalidInputError("timing constants must be >= 0")


def iteration_bound(n: int, r: float, g: float, m: int, eps: float) -> int:
    """Expected iteration bound ``ceil((N R G / (M eps))**2)``."""
    if n <= 0 or m <= 0 or eps <= 0 or r < 0 or g < 0:
        raise InvalidInputError("iteration_bound needs positive N, M, eps and non-negative R, G")
    value = (n * r * g / (m * eps)) ** 2
    # guard against 63.99999999 style round-off before taking the ceiling
    return int(math.ceil(value - 1e-9 * max(1.0, value)))


def optimization_time(iterations: int, m: int, timing: TimingModel) -> float:
    """Total time ``I (M t_mon + t_calc)`` in seconds."""
    if iterations < 0 or m < 0:
        raise InvalidInputError("iterations and M must be non-negative")
    return iterations * (m * timing.t_mon + timing.t_calc)


@dataclass(frozen=True)
class ConvergenceBudget:
    gradient_bound: float  # dB/GHz
    start_distance: float  # GHz
    target_accuracy: float  # dB
    n: int
    m: int

    @property
    def implied_iterations(self) -> int:
        return iteration_bound(self.n, self.start_distance, self.gradient_bound, self.m, self.target_accuracy)


def select_minibatch(n: int, m: int, rng: np.random.Generator) -> list[int]:
    """``m`` distinct subchannel indices drawn uniformly, returned sorted."""
    if not 1 <= m <= n:
        raise InvalidInputError(f"minibatch size {m} must lie in [1, {n}]")
    return sorted(int(i) for i in rng.choice(n, size=m, replace=False))


def _feasible(plan: SuperchannelPlan, enforce_eq5: bool) -> bool:
    return not check_constraints(plan, enforce_lower_limits=enforce_eq5)


def tie_aware_value(values: Sequence[float], active: Sequence[int]) -> float:
    """Minimum with the near-minimum channels *active* replaced by their mean.

    Equals ``min(values)`` when *active* holds a single index that stays the
    minimum; with ties it credits a probe that lifts one of the tied channels.
    """
    act = [values[k] for k in active]
    rest = [v for k, v in enumerate(values) if k not in active]
    return min(math.fsum(act) / len(act), min(rest, default=math.inf))


def near_minimum(values: Sequence[float], tolerance: float) -> list[int]:
    floor = min(values)
    return [k for k, v in enumerate(values) if v <= floor + tolerance]


def finite_difference_subgradient(
    plan: SuperchannelPlan,
    n: int,
    objective: Objective,
    monitor: Monitor,
    f_step: float,
    baseline: SnrReport | None = None,
    enforce_eq5: bool = False,
    tie_tolerance: float = 0.0,
) -> tuple[float, SuperchannelPlan, SnrReport]:
    """Probe subchannel *n* with ``+f_step`` and return ``(g_n, probe_plan, probe_report)``.

    ``g_n = (h(D) - h(D_probe)) / f_step``, so a positive value means the probe
    lowered the objective.  *baseline* is the report for ``D``; it is measured
    here only when not supplied.  For the minimum objective a positive
    *tie_tolerance* scores both reports with :func:`tie_aware_value` over the
    channels within that tolerance of the baseline minimum.
    """
    objective = Objective.parse(objective)
    try:
        probe = shift_subchannel(plan, n, f_step)
    except InfeasibleShiftError as exc:
        raise ProbeUnavailableError(str(exc)) from None
    if not _feasible(probe, enforce_eq5):
        raise ProbeUnavailableError(f"probe of subchannel {n} violates the distance limits")
    if baseline is None:
        baseline = monitor.measure(plan)
    report = monitor.measure(probe)
    if objective is Objective.MIN_SNR and tie_tolerance > 0:
        active = near_minimum(baseline.snr, tie_tolerance)
        diff = tie_aware_value(baseline.snr, active) - tie_aware_value(report.snr, active)
    else:
        diff = objective_value(baseline, objective) - objective_value(report, objective)
    return diff / f_step, probe, report


def apply_step(
    plan: SuperchannelPlan,
    subgradients: Mapping[int, float],
    f_step: float,
    enforce_eq5: bool = False,
    deadband: float = 0.0,
) -> tuple[SuperchannelPlan, dict[int, float], list[int]]:
    """Move each subchannel whose ``|g_n| > deadband`` by ``-sign(g_n) f_step``.

    Moves are applied jointly in index order; a move that would break
    positivity (or the lower limits when enforced) is cancelled for that
    subchannel alone.  Returns ``(new_plan, applied_moves, cancelled)``.
    """
    current = plan
    moves: dict[int, float] = {}
    cancelled: list[int] = []
    for n in sorted(subgradients):
        g = subgradients[n]
        if not abs(g) > deadband:
            continue
        delta = -math.copysign(f_step, g)
        try:
            candidate = shift_subchannel(current, n, delta)
        except InfeasibleShiftError:
            cancelled.append(n)
            continue
        if not _feasible(candidate, enforce_eq5):
            cancelled.append(n)
            continue
        current = candidate
        moves[n] = delta
    return current, moves, cancelled


@dataclass
class ProbeRecord:
    index: int
    distances: tuple[float, ...] | None
    snr: tuple[float, ...] | None
    objective: float | None
    subgradient: float | None
    skipped: bool = False


@dataclass
class IterationRecord:
    iteration: int
    minibatch: list[int]
    baseline_measured: bool
    baseline_objective: float
    baseline_snr: tuple[float, ...]
    probes: list[ProbeRecord]
    moves: dict[int, float]
    cancelled: list[int]
    restarted: bool
    applied_distances: tuple[float, ...]
    best_objective: float
    best_distances: tuple[float, ...]
    monitor_calls: int


@dataclass
class IterationTrace:
    objective: Objective
    start_distances: tuple[float, ...]
    records: list[IterationRecord] = field(default_factory=list)
    monitor_calls: int = 0
    status: str = "running"
    message: str = ""

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def best_history(self) -> list[float]:
        return [r.best_objective for r in self.records]

    def convergence_iteration(self, accuracy: float = 0.0) -> int:
        """First iteration whose best-so-far is within *accuracy* of the final best.

        Returns 0 when the starting measurement already qualifies.
        """
        if not self.records:
            return 0
        target = self.records[-1].best_objective - accuracy
        if self.records[0].baseline_objective >= target:
            return 0
        for r in self.records:
            if r.best_objective >= target:
                return r.iteration
        return self.records[-1].iteration

    def all_plans(self) -> list[tuple[float, ...]]:
        """Every distance vector the loop configured (baselines, probes, applied)."""
        plans = [self.start_distances]
        for r in self.records:
            plans.extend(p.distances for p in r.probes if p.distances is not None)
            plans.append(r.applied_distances)
        return plans

    def max_abs_subgradient(self) -> float:
        return max((abs(p.subgradient) for r in self.records for p in r.probes
                    if p.subgradient is not None), default=0.0)


@dataclass
class OptimizeResult:
    best_plan: SuperchannelPlan
    best_objective: float
    best_report: SnrReport | None
    trace: IterationTrace

    def __iter__(self):
        return iter((self.best_plan, self.best_objective, self.trace))


def optimize(
    start_plan: SuperchannelPlan,
    objective: Objective | str,
    monitor: Monitor,
    config: OptimizerConfig = OptimizerConfig(),
) -> OptimizeResult:
    """Run the closed loop from *start_plan*; see the module docstring."""
    objective = Objective.parse(objective)
    n_ch = start_plan.n
    if config.minibatch_size > n_ch:
        raise InvalidInputError(f"minibatch size {config.minibatch_size} exceeds N={n_ch}")
    plan = SuperchannelPlan(start_plan.distances, start_plan.filter_bandwidth, start_plan.center_frequency,
                            start_plan.subchannels, config.laser_granularity)
    if not _feasible(plan, config.enforce_eq5):
        raise InvalidInputError(f"infeasible start plan: {check_constraints(plan, config.enforce_eq5)}")

    trace = IterationTrace(objective, plan.distances)
    deadband = config.deadband
    calls0 = monitor.calls
    h_cur: float | None = None
    rep_cur: SnrReport | None = None
    best_plan, best_h, best_rep = plan, -math.inf, None

    def measure(p: SuperchannelPlan) -> tuple[float, SnrReport]:
        rep = monitor.measure(p)
        return objective_value(rep, objective), rep

    stale = 0
    try:
        for it in range(1, config.max_iterations + 1):
            best_before = best_h
            restarted = False
            measured = h_cur is None
            if measured:
                h_cur, rep_cur = measure(plan)
                if h_cur > best_h:
                    best_plan, best_h, best_rep = plan, h_cur, rep_cur
                elif h_cur < best_h - config.tolerance:
                    plan, h_cur, rep_cur = best_plan, best_h, best_rep
                    restarted = True
            base_h, base_snr = h_cur, rep_cur.snr
            rng = np.random.default_rng([config.rng_seed, it])
            batch = select_minibatch(n_ch, config.minibatch_size, rng)
            probes: list[ProbeRecord] = []
            grads: dict[int, float] = {}
            tried = set(batch)
            queue = list(batch)
            resampled: set[int] = set()
            while queue:
                n = queue.pop(0)
                try:
                    g, probe, rep = finite_difference_subgradient(
                        plan, n, objective, monitor, config.f_step, rep_cur, config.enforce_eq5,
                        config.tie_tolerance)
                except ProbeUnavailableError:
                    probes.append(ProbeRecord(n, None, None, None, None, skipped=True))
                    spare = [i for i in range(n_ch) if i not in tried]
                    if n not in resampled and spare:
                        alt = int(spare[rng.integers(len(spare))])
                        tried.add(alt)
                        resampled.add(alt)
                        queue.append(alt)
                    continue
                h_p = objective_value(rep, objective)
                grads[n] = g
                probes.append(ProbeRecord(n, probe.distances, rep.snr, h_p, g))
                if h_p > best_h:
                    best_plan, best_h, best_rep = probe, h_p, rep
            new_plan, moves, cancelled = apply_step(plan, grads, config.f_step, config.enforce_eq5, deadband)
            if moves:
                plan, h_cur, rep_cur = new_plan, None, None
            trace.records.append(IterationRecord(
                iteration=it,
                minibatch=batch,
                baseline_measured=measured,
                baseline_objective=base_h,
                baseline_snr=base_snr,
                probes=probes,
                moves=moves,
                cancelled=cancelled,
                restarted=restarted,
                applied_distances=plan.distances,
                best_objective=best_h,
                best_distances=best_plan.distances,
                monitor_calls=monitor.calls - calls0,
            ))
            if best_h > best_before + config.improvement_threshold:
                stale = 0
            else:
                stale += 1
            if stale >= config.patience:
                trace.status = "patience"
                break
        else:
            trace.status = "max_iterations"
    except Exception as exc:  # monitor failures end the run with what we have
        logger.warning("optimisation aborted: %s", exc)
        trace.status = "error"
        trace.message = f"{type(exc).__name__}: {exc}"
    trace.monitor_calls = monitor.calls - calls0
    if best_rep is None:
        return OptimizeResult(plan, float("nan"), None, trace)
    return OptimizeResult(best_plan, best_h, best_rep, trace)


def estimate_budget(trace: IterationTrace, n: int, m: int, accuracy: float) -> ConvergenceBudget:
    """Gradient bound and start distance estimated from a finished trace."""
    if trace.records:
        best = np.asarray(trace.records[-1].best_distances)
        r = float(np.linalg.norm(best - np.asarray(trace.start_distances)))
    else:
        r = 0.0
    return ConvergenceBudget(trace.max_abs_subgradient(), r, accuracy, n, m)
