"""Three-carrier spacing sweep: middle-channel SNR against the first distance."""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from ..domain import InvalidInputError, SubchannelSpec, SuperchannelPlan
from ..plm import PlmModel, snr

__all__ = ["SweepResult", "sweep"]


@dataclass
class SweepResult:
    d1: np.ndarray  # GHz
    snr: np.ndarray  # dB, middle channel
    d_total: float
    grid_step: float
    window: float

    @property
    def center(self) -> float:
        return self.d_total / 2.0

    @property
    def second_differences(self) -> np.ndarray:
        """Central second differences (dB/GHz^2) at ``d1[1:-1]``."""
        return (self.snr[2:] - 2.0 * self.snr[1:-1] + self.snr[:-2]) / self.grid_step ** 2

    def window_second_differences(self) -> np.ndarray:
        x = self.d1[1:-1]
        mask = np.abs(x - self.center) <= self.window + 1e-9
        return self.second_differences[mask]

    @property
    def max_second_difference(self) -> float:
        return float(self.window_second_differences().max())

    @property
    def peak(self) -> float:
        return float(self.d1[int(np.argmax(self.snr))])

    def is_concave(self, tol: float = 1e-6) -> bool:
        return self.max_second_difference <= tol

    def csv_text(self) -> str:
        buf = io.StringIO()
        buf.write("d1_ghz,snr_db\n")
        for x, y in zip(self.d1, self.snr):
            buf.write(f"{x:.4f},{y:.6f}\n")
        return buf.getvalue()


def sweep(
    spec: SubchannelSpec,
    d_total: float,
    grid_step: float,
    model: PlmModel,
    edge: float = 34.5,
    window: float = 2.0,
    span: float | None = None,
) -> SweepResult:
    """Sweep ``d_1`` with ``d_1 + d_2 = d_total`` for three carriers.

    The outer carriers sit *edge* GHz inside the filter edges, so the filter
    bandwidth is ``d_total + 2 * edge``.  ``d_1`` covers ``d_total/2 +/- span``
    (default: the concavity *window* plus one step on each side, so second
    differences exist across the whole window).
    """
    if not d_total > 2 * grid_step:
        raise InvalidInputError("d_total must exceed two grid steps")
    if not grid_step > 0:
        raise InvalidInputError("grid_step must be positive")
    half = window + grid_step if span is None else span
    k = int(round(half / grid_step))
    center = d_total / 2.0
    d1 = center + np.arange(-k, k + 1) * grid_step
    d1 = d1[(d1 > 0) & (d1 < d_total)]
    bandwidth = d_total + 2.0 * edge
    values = np.empty(len(d1))
    for i, x in enumerate(d1):
        plan = SuperchannelPlan((edge, float(x), d_total - float(x), edge), bandwidth,
                                subchannels=(spec,) * 3, laser_granularity=0.0)
        values[i] = snr(plan, model).snr[1]
    return SweepResult(d1, values, d_total, grid_step, window)
