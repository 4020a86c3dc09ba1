"""Analytic surrogate for the superchannel physical layer.

Per subchannel ``n`` the model combines, in linear inverse-SNR units,

    1/SNR_n = 1/SNR_ase + sum_{m != n} xt(m, n) + xpm_n

and then subtracts, in dB, the filter-cascade energy loss at the carrier
position and an implementation penalty, and adds a sinusoidal gain ripple.
Monitoring noise (Gaussian, dB) is added last by :class:`SurrogateMonitor`.

All spectral integrals use composite Simpson quadrature on segments split at
the roll-off breakpoints, with a step of at most ``QUAD_STEP`` GHz.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np
from scipy.integrate import simpson

from .domain import (
    InvalidInputError,
    LinkSpec,
    Modulation,
    SnrReport,
    SubchannelSpec,
    SuperchannelPlan,
)

__all__ = [
    "Monitor",
    "PlmModel",
    "QUAD_STEP",
    "SurrogateMonitor",
    "crosstalk_coefficient",
    "filter_gain",
    "filter_loss_db",
    "rrc_psd",
    "snr",
    "snr_batch",
    "snr_components",
    "span_ase_snr",
]

QUAD_STEP = 0.01  # GHz
PLANCK = 6.62607015e-34  # J s
_BROADENING_GRID = 0.001  # GHz
_GAUSS_TAIL = 8.0  # sigmas kept when broadening


def db2lin(x):
    return 10.0 ** (np.asarray(x, dtype=float) / 10.0)


def lin2db(x):
    return 10.0 * np.log10(x)


def rrc_psd(offset, spec: SubchannelSpec):
    """Unit-power spectral density (1/GHz) of a root-raised-cosine subchannel.

    This is the squared magnitude of the RRC pulse spectrum: flat at
    ``1/R_s`` up to ``(1-a)R_s/2`` and a raised-cosine roll-off reaching zero
    at ``(1+a)R_s/2``.
    """
    rs, a = spec.symbol_rate, spec.roll_off
    x = np.abs(np.asarray(offset, dtype=float))
    inner, outer = (1.0 - a) * rs / 2.0, (1.0 + a) * rs / 2.0
    out = np.where(x <= inner, 1.0, 0.0)
    if a > 0:
        edge = (x > inner) & (x < outer)
        out = np.where(edge, 0.5 * (1.0 + np.cos(np.pi / (a * rs) * (x - inner))), out)
    out = out / rs
    return float(out) if out.ndim == 0 else out


def filter_gain(offset, bandwidth: float, order: float, cascades: int = 1):
    """Power gain of ``cascades`` identical super-Gaussian filters."""
    if not bandwidth > 0:
        raise InvalidInputError("filter bandwidth must be positive")
    if cascades < 1:
        raise InvalidInputError("at least one filter in the cascade")
    x = np.asarray(offset, dtype=float)
    out = np.exp(-cascades * math.log(2.0) * np.abs(2.0 * x / bandwidth) ** (2.0 * order))
    return float(out) if out.ndim == 0 else out


def span_ase_snr(spec: SubchannelSpec, link: LinkSpec, center_thz: float = 193.1) -> float:
    """Linear SNR contributed by the ASE of one amplified span."""
    loss_db = link.span_length * link.attenuation
    p_sig = 1e-3 * db2lin(spec.launch_power)
    p_ase = (PLANCK * center_thz * 1e12 * db2lin(link.edfa_noise_figure) * db2lin(loss_db)
             * spec.symbol_rate * 1e9)
    return float(p_sig / p_ase)


class _Shape:
    """Subchannel PSD, optionally convolved with a Gaussian, with its breakpoints."""

    def __init__(self, spec: SubchannelSpec, sigma: float):
        self.spec = spec
        self.sigma = sigma
        rs, a = spec.symbol_rate, spec.roll_off
        outer = (1.0 + a) * rs / 2.0
        if sigma > 0:
            self.support = outer + _GAUSS_TAIL * sigma
            self.breaks = (-self.support, self.support)
            grid = np.arange(-self.support, self.support + _BROADENING_GRID / 2, _BROADENING_GRID)
            kern_x = np.arange(-_GAUSS_TAIL * sigma, _GAUSS_TAIL * sigma + _BROADENING_GRID / 2,
                               _BROADENING_GRID)
            kern = np.exp(-0.5 * (kern_x / sigma) ** 2)
            kern /= kern.sum()
            self._grid = grid
            self._values = np.convolve(rrc_psd(grid, spec), kern, mode="same")
        else:
            inner = (1.0 - a) * rs / 2.0
            self.support = outer
            self.breaks = tuple(sorted({-outer, -inner, inner, outer}))

    def __call__(self, x):
        if self.sigma > 0:
            return np.interp(x, self._grid, self._values, left=0.0, right=0.0)
        return rrc_psd(x, self.spec)


def _integrate(func, breaks) -> float:
    """Composite Simpson over consecutive breakpoint segments, step <= QUAD_STEP."""
    total = 0.0
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        width = hi - lo
        if width <= 0:
            continue
        intervals = max(2, 2 * math.ceil(width / (2 * QUAD_STEP)))
        x = np.linspace(lo, hi, intervals + 1)
        total += float(simpson(func(x), x=x))
    return total


@dataclass(frozen=True)
class PlmModel:
    """Parameters of the surrogate physical layer.

    ``ase_floor_snr`` is the back-to-back SNR of an isolated, unfiltered
    subchannel; amplified spans add ASE on top of it.  The default (17.3 dB)
    puts the inner subchannels of the default four-carrier case near 17 dB.
    """

    link: LinkSpec = field(default_factory=LinkSpec)
    ase_floor_snr: float = 17.3  # dB
    xpm_coefficient: float = 1e-4  # GHz, linear inverse-SNR per 1/GHz of separation
    ripple_amplitude: float = 0.3  # dB
    ripple_period: float = 90.0  # GHz
    ripple_phase: float = 2.0  # rad
    broadening_sigma_per_span: float = 0.0  # GHz
    monitor_noise_sigma: float = 0.05  # dB
    rng_seed: int = 0
    implementation_penalty: tuple[tuple[str, float], ...] = (("16QAM", 0.5), ("QPSK", 0.0))
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self) -> None:
        if self.xpm_coefficient < 0:
            raise InvalidInputError("xpm_coefficient must be >= 0")
        if self.ripple_amplitude < 0:
            raise InvalidInputError("ripple_amplitude must be >= 0")
        if not self.ripple_period > 0:
            raise InvalidInputError("ripple_period must be positive")
        if self.broadening_sigma_per_span < 0:
            raise InvalidInputError("broadening_sigma_per_span must be >= 0")
        if self.monitor_noise_sigma < 0:
            raise InvalidInputError("monitor_noise_sigma must be >= 0")
        penalty = self.implementation_penalty
        if isinstance(penalty, dict):
            penalty = penalty.items()
        # sorted so equal tables compare equal whatever order they were given in
        object.__setattr__(self, "implementation_penalty",
                           tuple(sorted((Modulation(k).value, float(v)) for k, v in penalty)))

    def penalty_db(self, modulation: Modulation) -> float:
        return dict(self.implementation_penalty).get(Modulation(modulation).value, 0.0)

    @property
    def effective_ripple(self) -> float:
        """Ripple amplitude actually applied: gain ripple needs amplifiers."""
        return self.ripple_amplitude if self.link.span_count > 0 else 0.0

    @property
    def broadening_sigma(self) -> float:
        return self.broadening_sigma_per_span * self.link.span_count

    def shape(self, spec: SubchannelSpec) -> _Shape:
        key = ("shape", spec.symbol_rate, spec.roll_off)
        try:
            return self._cache[key]
        except KeyError:
            s = self._cache[key] = _Shape(spec, self.broadening_sigma)
            return s

    def inverse_ase_snr(self, spec: SubchannelSpec) -> float:
        inv = 1.0 / float(db2lin(self.ase_floor_snr))
        if self.link.span_count:
            inv += self.link.span_count / span_ase_snr(spec, self.link)
        return inv

    def _memo(self, key, compute):
        try:
            return self._cache[key]
        except KeyError:
            if len(self._cache) > 200_000:
                self._cache.clear()
            value = self._cache[key] = compute()
            return value


def filter_loss_db(offset: float, spec: SubchannelSpec, bandwidth: float, model: PlmModel) -> float:
    """Energy lost (dB, >= 0) by a carrier at *offset* from the filter centre."""
    link = model.link

    def compute() -> float:
        shape = model.shape(spec)
        breaks = [offset + b for b in shape.breaks]
        kept = _integrate(
            lambda f: shape(f - offset) * filter_gain(f, bandwidth, link.filter_order, link.filter_count),
            breaks)
        return max(0.0, -float(lin2db(kept)))

    return model._memo(("filt", round(offset, 9), bandwidth, spec.symbol_rate, spec.roll_off), compute)


def _overlap(f_m: float, f_n: float, spec_m: SubchannelSpec, spec_n: SubchannelSpec,
             bandwidth: float, model: PlmModel) -> float:
    shape_m, shape_n = model.shape(spec_m), model.shape(spec_n)
    lo = max(f_m - shape_m.support, f_n - shape_n.support)
    hi = min(f_m + shape_m.support, f_n + shape_n.support)
    if hi <= lo:
        return 0.0
    link = model.link
    pts = {lo, hi}
    pts.update(f_m + b for b in shape_m.breaks)
    pts.update(f_n + b for b in shape_n.breaks)
    breaks = sorted(p for p in pts if lo <= p <= hi)
    # interferer PSD x receiver PSD x receiver window (its own PSD shape)
    num = _integrate(
        lambda f: shape_m(f - f_m) * shape_n(f - f_n) ** 2
        * filter_gain(f, bandwidth, link.filter_order, link.filter_count),
        breaks)
    ref = model._memo(("self", spec_n.symbol_rate, spec_n.roll_off),
                      lambda: _integrate(lambda f: shape_n(f) ** 3, list(shape_n.breaks)))
    return num / ref


def crosstalk_coefficient(plan: SuperchannelPlan, m: int, n: int, model: PlmModel) -> float:
    """Linear crosstalk from subchannel *m* into the receiver of subchannel *n*.

    Overlap of the filtered interferer spectrum with the receiving
    subchannel's spectrum, weighted by the receiver window (the receiving
    PSD shape again).  Normalised so that a co-located, unfiltered interferer
    of equal power gives 1.0.  The value is symmetric in (m, n) for equal
    specs whenever the filter gain is the same on both sides of the pair's
    midpoint, and very nearly so otherwise.
    """
    if m == n:
        raise InvalidInputError("crosstalk needs two distinct subchannels")
    off = plan.offsets
    return _pair_crosstalk(float(off[m]), float(off[n]), plan.subchannels[m], plan.subchannels[n],
                           plan.filter_bandwidth, model)


def _pair_crosstalk(f_m, f_n, spec_m, spec_n, bandwidth, model) -> float:
    if abs(f_m - f_n) >= model.shape(spec_m).support + model.shape(spec_n).support:
        return 0.0
    key = ("xt", round(f_m, 9), round(f_n, 9), bandwidth, spec_m.symbol_rate, spec_m.roll_off,
           spec_n.symbol_rate, spec_n.roll_off)
    return model._memo(key, lambda: _overlap(f_m, f_n, spec_m, spec_n, bandwidth, model))


def _xpm(offsets: np.ndarray, n: int, spec: SubchannelSpec, model: PlmModel) -> float:
    if model.xpm_coefficient == 0:
        return 0.0
    sep = np.abs(np.delete(offsets, n) - offsets[n])
    return model.xpm_coefficient * float(np.sum(1.0 / np.maximum(sep, spec.symbol_rate)))


def ripple_db(offset, model: PlmModel):
    """Amplifier gain ripple (dB) at *offset*; zero for a link without spans."""
    return model.effective_ripple * np.sin(2.0 * np.pi * np.asarray(offset) / model.ripple_period
                                           + model.ripple_phase)


def _combine(inv_ase, inv_xt, inv_xpm, filt, pen, rip):
    return lin2db(1.0 / (inv_ase + inv_xt + inv_xpm)) - filt - pen + rip


def snr_batch(plan: SuperchannelPlan, model: PlmModel, offsets) -> np.ndarray:
    """Noise-free SNR (dB) for many carrier layouts sharing *plan*'s filter and specs.

    *offsets* has shape ``(B, N)`` (GHz from the filter centre); the result
    has the same shape.  Layouts need not be feasible.  Terms are evaluated
    once per distinct carrier position (or position pair) and gathered.
    """
    off = np.atleast_2d(np.asarray(offsets, dtype=float))
    n_ch = plan.n
    if off.shape[1] != n_ch:
        raise InvalidInputError(f"expected {n_ch} offsets per layout, got {off.shape[1]}")
    specs = plan.subchannels
    bw = plan.filter_bandwidth
    inv_xt = np.zeros_like(off)
    inv_xpm = np.zeros_like(off)
    filt = np.empty_like(off)
    for n in range(n_ch):
        values, inverse = np.unique(off[:, n], return_inverse=True)
        table = np.array([filter_loss_db(float(v), specs[n], bw, model) for v in values])
        filt[:, n] = table[inverse.ravel()]
        for m in range(n_ch):
            if m == n:
                continue
            reach = model.shape(specs[m]).support + model.shape(specs[n]).support
            gap = np.abs(off[:, m] - off[:, n])
            if model.xpm_coefficient:
                inv_xpm[:, n] += model.xpm_coefficient / np.maximum(gap, specs[n].symbol_rate)
            near = gap < reach
            if not near.any():
                continue
            pairs, inverse = np.unique(off[near][:, [m, n]], axis=0, return_inverse=True)
            table = np.array([_pair_crosstalk(float(a), float(b), specs[m], specs[n], bw, model)
                              for a, b in pairs])
            inv_xt[near, n] += table[inverse.ravel()]
    inv_ase = np.array([model.inverse_ase_snr(s) for s in specs])
    pen = np.array([model.penalty_db(s.modulation) for s in specs])
    rip = ripple_db(off, model) if model.effective_ripple else 0.0
    return _combine(inv_ase, inv_xt, inv_xpm, filt, pen, rip)


def snr_components(plan: SuperchannelPlan, model: PlmModel) -> dict[str, np.ndarray]:
    """Per-subchannel breakdown of the noise-free SNR (dB unless noted)."""
    off = plan.offsets
    n_ch = plan.n
    xt = np.zeros(n_ch)
    xpm = np.zeros(n_ch)
    ase = np.zeros(n_ch)
    filt = np.zeros(n_ch)
    pen = np.zeros(n_ch)
    for n in range(n_ch):
        spec_n = plan.subchannels[n]
        ase[n] = model.inverse_ase_snr(spec_n)
        xt[n] = math.fsum(
            _pair_crosstalk(float(off[m]), float(off[n]), plan.subchannels[m], spec_n,
                            plan.filter_bandwidth, model)
            for m in range(n_ch) if m != n)
        xpm[n] = _xpm(off, n, spec_n, model)
        filt[n] = filter_loss_db(float(off[n]), spec_n, plan.filter_bandwidth, model)
        pen[n] = model.penalty_db(spec_n.modulation)
    rip = ripple_db(off, model) if model.effective_ripple else np.zeros(n_ch)
    total = _combine(ase, xt, xpm, filt, pen, rip)
    return {"inv_ase": ase, "inv_crosstalk": xt, "inv_xpm": xpm, "filter_loss": filt,
            "implementation_penalty": pen, "ripple": rip, "snr": total}


def snr(plan: SuperchannelPlan, model: PlmModel, with_noise: bool = False,
        rng: np.random.Generator | None = None) -> SnrReport:
    """Per-subchannel SNR in dB.

    With ``with_noise`` Gaussian monitoring noise of ``model.monitor_noise_sigma``
    dB is drawn from *rng* (required in that case).
    """
    values = snr_components(plan, model)["snr"]
    if with_noise and model.monitor_noise_sigma > 0:
        if rng is None:
            raise InvalidInputError("a random generator is required for noisy SNR")
        values = values + rng.normal(0.0, model.monitor_noise_sigma, size=values.shape)
        return SnrReport(tuple(values), noise_applied=True)
    return SnrReport(tuple(values), noise_applied=False)


class Monitor(Protocol):
    """Anything that can report per-subchannel SNR for a configured plan."""

    t_mon: float
    calls: int

    def measure(self, plan: SuperchannelPlan) -> SnrReport: ...


class SurrogateMonitor:
    """Monitor backed by :func:`snr`.

    Call ``k`` draws its noise from a generator keyed by ``(seed, k)``, so two
    monitors with the same seed produce the same measurement sequence.
    """

    supports_concurrency = False

    def __init__(self, model: PlmModel, seed: int | None = None, t_mon: float = 60.0):
        self.model = model
        self.seed = model.rng_seed if seed is None else int(seed)
        self.t_mon = t_mon
        self.calls = 0

    def measure(self, plan: SuperchannelPlan) -> SnrReport:
        noisy = self.model.monitor_noise_sigma > 0
        rng = np.random.default_rng([self.seed, self.calls]) if noisy else None
        self.calls += 1
        return snr(plan, self.model, with_noise=noisy, rng=rng)
