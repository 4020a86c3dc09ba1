"""Superchannel plans, objectives and the distance/frequency algebra.

A plan is stored as its distance vector ``D = [d_0, ..., d_N]`` (GHz):
``d_0`` runs from the lower 3 dB edge of the superfilter to the first
carrier, ``d_k`` (``1 <= k < N``) separates carriers ``k-1`` and ``k`` and
``d_N`` runs from the last carrier to the upper filter edge.  Subchannel and
distance indices are zero-based throughout the package.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "DEFAULT_LASER_GRANULARITY",
    "DEFAULT_SPACING",
    "ConstraintViolation",
    "InfeasibleShiftError",
    "InvalidInputError",
    "LinkSpec",
    "Modulation",
    "Objective",
    "ScenarioCase",
    "SnrReport",
    "SubchannelSpec",
    "SuperchannelPlan",
    "SCALING_CASES",
    "TABLE1_CASES",
    "check_constraints",
    "distances_to_frequencies",
    "equidistant_distances",
    "frequencies_to_distances",
    "min_distance",
    "objective_value",
    "quantize",
    "shift_subchannel",
]

DEFAULT_LASER_GRANULARITY = 0.25  # GHz
DEFAULT_SPACING = 34.5  # GHz, carrier spacing of the equidistant reference plan
SUM_TOLERANCE = 1e-9  # GHz


class InvalidInputError(ValueError):
    """Raised for malformed plans, reports or parameters."""


class InfeasibleShiftError(ValueError):
    """A requested carrier shift would make a distance non-positive."""


class Modulation(str, enum.Enum):
    QPSK = "QPSK"
    QAM16 = "16QAM"


class Objective(str, enum.Enum):
    AVERAGE_SNR = "average"
    MIN_SNR = "min"

    @classmethod
    def parse(cls, value: "str | Objective") -> "Objective":
        if isinstance(value, Objective):
            return value
        key = str(value).strip().lower()
        aliases = {
            "average": cls.AVERAGE_SNR, "avg": cls.AVERAGE_SNR, "mean": cls.AVERAGE_SNR,
            "obj1": cls.AVERAGE_SNR, "averagesnr": cls.AVERAGE_SNR,
            "min": cls.MIN_SNR, "minimum": cls.MIN_SNR, "obj2": cls.MIN_SNR,
            "minsnr": cls.MIN_SNR,
        }
        try:
            return aliases[key]
        except KeyError:
            raise InvalidInputError(f"unknown objective {value!r}") from None


@dataclass(frozen=True)
class SubchannelSpec:
    symbol_rate: float = 32.0  # GBd
    roll_off: float = 0.1
    modulation: Modulation = Modulation.QPSK
    launch_power: float = 0.0  # dBm

    def __post_init__(self) -> None:
        if not self.symbol_rate > 0:
            raise InvalidInputError(f"symbol_rate must be positive, got {self.symbol_rate!r}")
        if not 0.0 <= self.roll_off <= 1.0:
            raise InvalidInputError(f"roll_off must lie in [0, 1], got {self.roll_off!r}")
        object.__setattr__(self, "modulation", Modulation(self.modulation))

    @property
    def occupied_bandwidth(self) -> float:
        return self.symbol_rate * (1.0 + self.roll_off)


@dataclass(frozen=True)
class LinkSpec:
    span_length: float = 80.0  # km
    span_count: int = 2
    filter_count: int = 2
    attenuation: float = 0.2  # dB/km
    dispersion: float = 16.7  # ps/nm/km
    edfa_noise_figure: float = 5.5  # dB
    filter_order: float = 3.5  # super-Gaussian order

    def __post_init__(self) -> None:
        if self.span_count < 0:
            raise InvalidInputError("span_count must be >= 0")
        if self.filter_count < 1:
            raise InvalidInputError("filter_count must be >= 1 (back-to-back keeps one superfilter)")
        if self.span_length < 0 or self.attenuation < 0:
            raise InvalidInputError("span_length and attenuation must be non-negative")
        if not self.filter_order > 0:
            raise InvalidInputError("filter_order must be positive")


def quantize(value: float, granularity: float) -> float:
    """Round *value* to the nearest multiple of *granularity* (0 disables)."""
    if granularity <= 0:
        return float(value)
    return round(value / granularity) * granularity


def distances_to_frequencies(distances: Sequence[float], bandwidth: float) -> np.ndarray:
    """Carrier offsets from the filter centre (GHz) for a distance vector."""
    d = np.asarray(distances, dtype=float)
    return -bandwidth / 2.0 + np.cumsum(d[:-1])


def frequencies_to_distances(offsets: Sequence[float], bandwidth: float) -> np.ndarray:
    """Inverse of :func:`distances_to_frequencies`."""
    f = np.asarray(offsets, dtype=float)
    edges = np.concatenate(([-bandwidth / 2.0], f, [bandwidth / 2.0]))
    return np.diff(edges)


def equidistant_distances(n: int, bandwidth: float, spacing: float = DEFAULT_SPACING) -> tuple[float, ...]:
    """Carriers ``spacing`` apart, centred in the filter; the edges take the rest."""
    if n < 1:
        raise InvalidInputError("need at least one subchannel")
    edge = (bandwidth - (n - 1) * spacing) / 2.0
    if edge <= 0:
        raise InvalidInputError(
            f"{n} carriers at {spacing} GHz do not fit in a {bandwidth} GHz filter")
    return (edge, *([spacing] * (n - 1)), edge)


@dataclass(frozen=True)
class SuperchannelPlan:
    """Distance vector over ``N`` subchannels inside a superfilter.

    ``distances`` is the canonical state.  Carrier frequencies are derived
    and, when ``laser_granularity`` is positive, snapped to that grid
    (measured from the filter centre) before the distances are rebuilt, so
    the distances always sum to ``filter_bandwidth``.
    """

    distances: tuple[float, ...]
    filter_bandwidth: float = 137.5
    center_frequency: float = 193.1  # THz
    subchannels: tuple[SubchannelSpec, ...] = ()
    laser_granularity: float = DEFAULT_LASER_GRANULARITY

    def __post_init__(self) -> None:
        d = tuple(float(x) for x in self.distances)
        if len(d) < 3:
            raise InvalidInputError("a superchannel needs at least two subchannels (N+1 >= 3 distances)")
        if not self.filter_bandwidth > 0:
            raise InvalidInputError("filter_bandwidth must be positive")
        if not all(math.isfinite(x) for x in d):
            raise InvalidInputError("distances must be finite")
        if abs(sum(d) - self.filter_bandwidth) > 1e-6:
            raise InvalidInputError(
                f"distances sum to {sum(d)!r} GHz, filter bandwidth is {self.filter_bandwidth!r} GHz")
        n = len(d) - 1
        subs = tuple(self.subchannels) or (SubchannelSpec(),) * n
        if len(subs) == 1 and n > 1:
            subs = subs * n
        if len(subs) != n:
            raise InvalidInputError(f"expected {n} subchannel specs, got {len(subs)}")
        offsets = distances_to_frequencies(d, self.filter_bandwidth)
        if self.laser_granularity > 0:
            offsets = np.array([quantize(x, self.laser_granularity) for x in offsets])
        d = tuple(float(x) for x in frequencies_to_distances(offsets, self.filter_bandwidth))
        if any(x <= 0 for x in d):
            raise InvalidInputError(f"all distances must be positive, got {d}")
        object.__setattr__(self, "distances", d)
        object.__setattr__(self, "subchannels", subs)

    @classmethod
    def equidistant(
        cls,
        n: int = 4,
        filter_bandwidth: float = 137.5,
        spacing: float = DEFAULT_SPACING,
        spec: SubchannelSpec | None = None,
        **kwargs,
    ) -> "SuperchannelPlan":
        subs = (spec or SubchannelSpec(),) * n
        return cls(equidistant_distances(n, filter_bandwidth, spacing), filter_bandwidth,
                   subchannels=subs, **kwargs)

    @classmethod
    def from_offsets(cls, offsets: Sequence[float], filter_bandwidth: float, **kwargs) -> "SuperchannelPlan":
        return cls(tuple(frequencies_to_distances(offsets, filter_bandwidth)), filter_bandwidth, **kwargs)

    @property
    def n(self) -> int:
        return len(self.distances) - 1

    @property
    def offsets(self) -> np.ndarray:
        """Carrier offsets from the filter centre, GHz."""
        return distances_to_frequencies(self.distances, self.filter_bandwidth)

    @property
    def frequencies(self) -> np.ndarray:
        """Absolute carrier frequencies, THz."""
        return self.center_frequency + self.offsets * 1e-3

    @property
    def spec(self) -> SubchannelSpec:
        """The shared subchannel spec (uniform superchannels)."""
        return self.subchannels[0]

    def with_distances(self, distances: Iterable[float]) -> "SuperchannelPlan":
        return replace(self, distances=tuple(distances))

    def with_offsets(self, offsets: Sequence[float]) -> "SuperchannelPlan":
        return replace(self, distances=tuple(frequencies_to_distances(offsets, self.filter_bandwidth)))

    def key(self) -> tuple[float, ...]:
        """Hashable identity of the carrier layout (rounded offsets)."""
        return tuple(round(float(x), 9) for x in self.offsets)


@dataclass(frozen=True)
class SnrReport:
    snr: tuple[float, ...]
    noise_applied: bool = False

    def __post_init__(self) -> None:
        values = tuple(float(x) for x in self.snr)
        if not values:
            raise InvalidInputError("empty SNR report")
        if not all(math.isfinite(x) for x in values):
            raise InvalidInputError(f"non-finite SNR value in {values}")
        object.__setattr__(self, "snr", values)

    def __len__(self) -> int:
        return len(self.snr)

    @property
    def spread(self) -> float:
        return max(self.snr) - min(self.snr)


def objective_value(report: SnrReport | Sequence[float], objective: Objective | str) -> float:
    """Mean (dB domain) or minimum of the subchannel SNRs."""
    values = report.snr if isinstance(report, SnrReport) else tuple(report)
    if len(values) == 0:
        raise InvalidInputError("objective of an empty SNR report")
    objective = Objective.parse(objective)
    if objective is Objective.AVERAGE_SNR:
        return math.fsum(values) / len(values)
    return min(values)


def min_distance(spec: SubchannelSpec) -> float:
    """Crosstalk-free carrier spacing, ``R_s (1 + alpha)``."""
    return spec.symbol_rate * (1.0 + spec.roll_off)


def shift_subchannel(plan: SuperchannelPlan, n: int, delta: float) -> SuperchannelPlan:
    """Move carrier *n* by *delta* GHz.

    A positive delta raises the carrier frequency: the distance below the
    carrier (``d_n``) grows and the one above it (``d_{n+1}``) shrinks.
    """
    if not 0 <= n < plan.n:
        raise InvalidInputError(f"subchannel index {n} out of range for N={plan.n}")
    if delta == 0:
        return plan
    d = list(plan.distances)
    d[n] += delta
    d[n + 1] -= delta
    if d[n] <= 0 or d[n + 1] <= 0:
        raise InfeasibleShiftError(f"shifting subchannel {n} by {delta} GHz gives distances {d[n]}, {d[n + 1]}")
    return plan.with_distances(d)


@dataclass(frozen=True)
class ConstraintViolation:
    index: int  # distance index, or -1 for the sum constraint
    kind: str  # "sum", "non_positive" or "lower_limit"
    value: float
    limit: float


def check_constraints(plan: SuperchannelPlan, enforce_lower_limits: bool = False) -> list[ConstraintViolation]:
    """Diagnose the sum and positivity constraints, plus the optional lower limits.

    The optional lower limits are ``R_s/4`` for the two edge distances and
    ``R_s/2`` for the carrier-to-carrier distances.
    """
    out: list[ConstraintViolation] = []
    d = plan.distances
    total = math.fsum(d)
    if abs(total - plan.filter_bandwidth) > SUM_TOLERANCE:
        out.append(ConstraintViolation(-1, "sum", total, plan.filter_bandwidth))
    for i, x in enumerate(d):
        if x <= 0:
            out.append(ConstraintViolation(i, "non_positive", x, 0.0))
    if enforce_lower_limits:
        for i, limit in enumerate(lower_limits(plan)):
            if 0 < d[i] < limit:
                out.append(ConstraintViolation(i, "lower_limit", d[i], limit))
    return out


def lower_limits(plan: SuperchannelPlan) -> list[float]:
    rs = plan.spec.symbol_rate
    return [rs / 4.0 if i in (0, plan.n) else rs / 2.0 for i in range(plan.n + 1)]


@dataclass(frozen=True)
class ScenarioCase:
    case_id: str
    modulation: Modulation
    roll_off: float
    span_count: int
    filter_count: int
    filter_bandwidth: float
    subchannel_count: int = 4
    starting_distances: tuple[float, ...] = field(default=())
    minibatch_size: int = 2

    def __post_init__(self) -> None:
        object.__setattr__(self, "modulation", Modulation(self.modulation))
        if not self.starting_distances:
            object.__setattr__(self, "starting_distances",
                               equidistant_distances(self.subchannel_count, self.filter_bandwidth))

    def spec(self, symbol_rate: float = 32.0, launch_power: float = 0.0) -> SubchannelSpec:
        return SubchannelSpec(symbol_rate, self.roll_off, self.modulation, launch_power)

    def link(self, **kwargs) -> LinkSpec:
        return LinkSpec(span_count=self.span_count, filter_count=self.filter_count, **kwargs)

    def plan(self, **kwargs) -> SuperchannelPlan:
        return SuperchannelPlan(self.starting_distances, self.filter_bandwidth,
                                subchannels=(self.spec(),) * self.subchannel_count, **kwargs)


_Q, _16 = Modulation.QPSK, Modulation.QAM16

TABLE1_CASES: dict[str, ScenarioCase] = {
    c.case_id: c
    for c in (
        ScenarioCase("1", _Q, 0.10, 2, 2, 137.5),
        ScenarioCase("2", _16, 0.10, 2, 2, 137.5),
        ScenarioCase("3", _Q, 0.10, 2, 2, 150.0),
        ScenarioCase("4", _Q, 0.15, 2, 2, 137.5),
        ScenarioCase("5", _Q, 0.10, 10, 5, 137.5),
        ScenarioCase("6", _Q, 0.10, 0, 1, 137.5),
        ScenarioCase("7", _Q, 0.10, 0, 1, 200.0),
        ScenarioCase("8", _Q, 0.15, 0, 1, 137.5),
        ScenarioCase("9", _Q, 0.15, 0, 1, 200.0),
    )
}

# Larger superchannels: default-case link with a wider filter and M = N/2.
SCALING_CASES: dict[str, ScenarioCase] = {
    c.case_id: c
    for c in (
        ScenarioCase("N6", _Q, 0.10, 2, 2, 200.0, subchannel_count=6, minibatch_size=3),
        ScenarioCase("N8", _Q, 0.10, 2, 2, 275.0, subchannel_count=8, minibatch_size=4),
        ScenarioCase("N10", _Q, 0.10, 2, 2, 340.0, subchannel_count=10, minibatch_size=5),
    )
}
