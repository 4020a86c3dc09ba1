"""Exhaustive grid search over per-subchannel frequency offsets.

Used as ground truth for the optimiser and to find the worst soft failure
(every carrier drifting within +/- half_range) around an optimum.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .domain import InvalidInputError, Objective, SuperchannelPlan, frequencies_to_distances
from .plm import PlmModel, snr_batch

__all__ = [
    "DEFAULT_CAP",
    "GridCapExceeded",
    "GridSearchResult",
    "GridSearchSpec",
    "brute_force",
    "grid_size",
    "soft_failure_margin",
]

DEFAULT_CAP = 1_000_000
_CHUNK = 50_000


class GridCapExceeded(RuntimeError):
    def __init__(self, count: int, cap: int):
        super().__init__(f"grid of {count} points exceeds the cap of {cap}; pass force=True to run it")
        self.count = count
        self.cap = cap


@dataclass(frozen=True)
class GridSearchSpec:
    center_plan: SuperchannelPlan
    half_range: float = 2.0  # GHz, i.e. Delta F / 2
    grid_step: float = 1.0  # GHz
    objective: Objective = Objective.AVERAGE_SNR

    def __post_init__(self) -> None:
        if self.half_range < 0:
            raise InvalidInputError("half_range must be >= 0")
        if self.half_range > 0 and not self.grid_step > 0:
            raise InvalidInputError("grid_step must be positive")
        object.__setattr__(self, "objective", Objective.parse(self.objective))

    @property
    def steps(self) -> np.ndarray:
        if self.half_range == 0:
            return np.zeros(1)
        k = int(round(self.half_range / self.grid_step))
        if abs(k * self.grid_step - self.half_range) > 1e-9:
            raise InvalidInputError("half_range must be a multiple of grid_step")
        return np.arange(-k, k + 1) * self.grid_step

    @property
    def count(self) -> int:
        return grid_size(self.center_plan.n, 2 * self.half_range, self.grid_step)


def grid_size(n: int, span: float, step: float) -> int:
    """Evaluations of a full grid: ``(1 + span/step) ** n``."""
    if span == 0:
        return 1
    return int(round(1 + span / step)) ** n


@dataclass
class GridSearchResult:
    best_plan: SuperchannelPlan | None
    best_value: float
    best_snr: tuple[float, ...]
    worst_offsets: tuple[float, ...]
    worst_value: float
    worst_snr: tuple[float, ...]
    worst_feasible: bool
    evaluations: int
    infeasible: int
    table: np.ndarray | None = None  # columns: offsets (N), snr (N), objective, feasible

    @property
    def margin(self) -> float:
        return self.best_value - self.worst_value

    def worst_plan(self, template: SuperchannelPlan) -> SuperchannelPlan:
        """The worst drift as a plan (raises if it is not a valid plan)."""
        return template.with_offsets(self.worst_offsets)


def _reduce(values: np.ndarray, objective: Objective) -> np.ndarray:
    if objective is Objective.AVERAGE_SNR:
        return values.mean(axis=1)
    return values.min(axis=1)


def _feasible_mask(offsets: np.ndarray, bandwidth: float) -> np.ndarray:
    edges = np.concatenate([np.full((len(offsets), 1), -bandwidth / 2), offsets,
                            np.full((len(offsets), 1), bandwidth / 2)], axis=1)
    return np.all(np.diff(edges, axis=1) > 0, axis=1)


def _evaluate_chunk(args):
    plan, model, offsets, objective = args
    snrs = snr_batch(plan, model, offsets)
    return snrs, _reduce(snrs, objective)


def _chunks(center: np.ndarray, steps: np.ndarray):
    n = len(center)
    buf = []
    for combo in itertools.product(steps, repeat=n):
        buf.append(combo)
        if len(buf) == _CHUNK:
            yield center + np.asarray(buf)
            buf = []
    if buf:
        yield center + np.asarray(buf)


def brute_force(
    spec: GridSearchSpec,
    model: PlmModel,
    cap: int = DEFAULT_CAP,
    force: bool = False,
    keep_table: bool = False,
    workers: int = 1,
) -> GridSearchResult:
    """Enumerate every offset combination on the grid around ``spec.center_plan``.

    Evaluation is noise-free.  Infeasible layouts (non-positive distances)
    are excluded from the best but kept for the worst, since a real drift
    does not respect constraints.
    """
    count = spec.count
    if count > cap and not force:
        raise GridCapExceeded(count, cap)
    plan = spec.center_plan
    center = plan.offsets
    bw = plan.filter_bandwidth
    jobs = ((plan, model, off, spec.objective) for off in _chunks(center, spec.steps))

    best_v, best_off, best_snr = -math.inf, None, None
    worst_v, worst_off, worst_snr, worst_ok = math.inf, None, None, True
    infeasible = 0
    tables = []

    def consume(off, snrs, values):
        nonlocal best_v, best_off, best_snr, worst_v, worst_off, worst_snr, worst_ok, infeasible
        ok = _feasible_mask(off, bw)
        infeasible += int((~ok).sum())
        if ok.any():
            masked = np.where(ok, values, -np.inf)
            i = int(np.argmax(masked))
            if masked[i] > best_v:
                best_v, best_off, best_snr = float(masked[i]), off[i], snrs[i]
        j = int(np.argmin(values))
        if values[j] < worst_v:
            worst_v, worst_off, worst_snr, worst_ok = float(values[j]), off[j], snrs[j], bool(ok[j])
        if keep_table:
            tables.append(np.column_stack([off, snrs, values, ok.astype(float)]))

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            offsets = list(_chunks(center, spec.steps))
            args = [(plan, model, off, spec.objective) for off in offsets]
            for off, (snrs, values) in zip(offsets, pool.map(_evaluate_chunk, args)):
                consume(off, snrs, values)
    else:
        for plan_, model_, off, obj in jobs:
            snrs, values = _evaluate_chunk((plan_, model_, off, obj))
            consume(off, snrs, values)

    best_plan = None
    if best_off is not None:
        best_plan = SuperchannelPlan(tuple(frequencies_to_distances(best_off, bw)), bw,
                                     plan.center_frequency, plan.subchannels, plan.laser_granularity)
    return GridSearchResult(
        best_plan=best_plan,
        best_value=best_v,
        best_snr=tuple(float(x) for x in best_snr) if best_snr is not None else (),
        worst_offsets=tuple(float(x) for x in worst_off),
        worst_value=worst_v,
        worst_snr=tuple(float(x) for x in worst_snr),
        worst_feasible=worst_ok,
        evaluations=count,
        infeasible=infeasible,
        table=np.vstack(tables) if keep_table else None,
    )


def soft_failure_margin(
    optimal_plan: SuperchannelPlan,
    half_range: float,
    grid_step: float,
    objective: Objective | str,
    model: PlmModel,
    **kwargs,
) -> float:
    """Best minus worst objective over the drift grid around *optimal_plan* (dB)."""
    result = brute_force(GridSearchSpec(optimal_plan, half_range, grid_step, Objective.parse(objective)),
                         model, **kwargs)
    return result.margin
