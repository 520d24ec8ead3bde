"""Infinite-train, lossless closed forms for the coincidence peaks.

All outputs here are relative weights: the geometric sums behind them omit
channels the exact engine tracks (notably the trigger analyzer's back
reflection), so only ratios, normalized curves and lineshape metrics are
contractual.  The shared phase dependence is an Airy lineshape in the phase
sum ``1 / ((1 - rho)^2 + 4 rho sin^2(phase_sum / 2))`` with loop gain
``rho = r1a r2a r1b r2b``.

Peak weights for the main stop channel:

* ``W(0) = (t1a t1b t2a t2b)^2 / |1 - rho e^{i phase_sum}|^2``
* ``W(n > 0) = (r1b r2b)^{2n} W(0)``, ``W(n < 0) = (r1a r2a)^{2|n|} W(0)``

For the control channel the central peak pits the direct reflection against
the loop paths, giving the destructive ``-r1b^2`` term:

* ``W'(0) = (t1a t2a / r1b)^2 |{-r1b^2} + t1b t2b rho e^{i phase_sum} / (1 - rho e^{i phase_sum})|^2``
* ``W'(1) = (t1a t2a t1b^2 r2b)^2 / |1 - rho e^{i phase_sum}|^2``
* ``W'(n > 1) = (r1b r2b)^{2(n-1)} W'(1)``, ``W'(n < 0) = (r1a r2a)^{2|n|} W'(0)``

The left-wing decay ``(r1a r2a)^{2|n|}`` follows from the trigger photon's
extra round trips scaling every interfering path by the same factor; it is
cross-checked against the exact engine and against a literal path
enumeration in the tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .amplitudes import PhaseScanCurve
from .model import CHANNEL_CONTROL, CHANNEL_MAIN, ExperimentConfig

_FWHM_GAIN_FLOOR = 3.0 - 2.0 * math.sqrt(2.0)


class DivergenceError(ValueError):
    """Loop gain at or above 1: the geometric path series diverges."""


@dataclass(frozen=True)
class ClosedFormParams:
    """Eight coupler amplitudes and the analyzer phase sum.

    Index 1 marks the coupler a photon meets first, index 2 the second one;
    suffix names the analyzer arm.
    """

    t1a: float
    r1a: float
    t2a: float
    r2a: float
    t1b: float
    r1b: float
    t2b: float
    r2b: float
    phase_sum: float = 0.0

    @property
    def loop_gain(self) -> float:
        return self.r1a * self.r2a * self.r1b * self.r2b

    @property
    def wing_a(self) -> float:
        return (self.r1a * self.r2a) ** 2

    @property
    def wing_b(self) -> float:
        return (self.r1b * self.r2b) ** 2

    def at_phase(self, phase_sum: float) -> "ClosedFormParams":
        return ClosedFormParams(self.t1a, self.r1a, self.t2a, self.r2a,
                                self.t1b, self.r1b, self.t2b, self.r2b,
                                phase_sum)

    def _check(self) -> None:
        if not 0.0 <= self.loop_gain < 1.0:
            raise DivergenceError(
                f"loop gain {self.loop_gain:.6g} must lie in [0, 1)")

    def resonance_denominator(self) -> float:
        """|1 - rho e^{i phase_sum}|^2 expanded as the Airy denominator."""
        rho = self.loop_gain
        return (1.0 - rho) ** 2 + 4.0 * rho * math.sin(self.phase_sum / 2.0) ** 2


def params_from_config(config: ExperimentConfig,
                       phase_sum: float | None = None) -> ClosedFormParams:
    a1, a2 = config.interferometer_a.coupler1, config.interferometer_a.coupler2
    b1, b2 = config.interferometer_b.coupler1, config.interferometer_b.coupler2
    if phase_sum is None:
        phase_sum = config.interferometer_a.phase + config.interferometer_b.phase
    return ClosedFormParams(
        t1a=a1.transmission, r1a=a1.reflection, t2a=a2.transmission, r2a=a2.reflection,
        t1b=b1.transmission, r1b=b1.reflection, t2b=b2.transmission, r2b=b2.reflection,
        phase_sum=phase_sum)


def peak_weight(n: int, params: ClosedFormParams) -> float:
    """Relative weight of main-channel peak ``n`` (unnormalized)."""
    params._check()
    central = ((params.t1a * params.t1b * params.t2a * params.t2b) ** 2
               / params.resonance_denominator())
    if n == 0:
        return central
    if n > 0:
        return params.wing_b ** n * central
    return params.wing_a ** (-n) * central


def control_peak_weight(n: int, params: ClosedFormParams) -> float:
    """Relative weight of control-channel peak ``n`` (unnormalized)."""
    params._check()
    rho = params.loop_gain
    denom = params.resonance_denominator()
    if n <= 0:
        resonant = rho * np.exp(1j * params.phase_sum)
        inner = -params.r1b ** 2 + params.t1b * params.t2b * resonant / (1.0 - resonant)
        central = (params.t1a * params.t2a / params.r1b) ** 2 * float(np.abs(inner) ** 2)
        if n == 0:
            return central
        return params.wing_a ** (-n) * central
    first = (params.t1a * params.t2a * params.t1b ** 2 * params.r2b) ** 2 / denom
    if n == 1:
        return first
    return params.wing_b ** (n - 1) * first


@dataclass(frozen=True)
class AiryMetrics:
    fringe_contrast: float
    coefficient_of_finesse: float
    fwhm_phase: float


def airy_metrics(params: ClosedFormParams) -> AiryMetrics:
    """Lineshape diagnostics of the shared resonance denominator.

    Contrast is the max/min ratio over the phase sum; the full width at half
    maximum exists only for loop gain above ``3 - 2 sqrt(2)`` and is reported
    as a full period otherwise.
    """
    params._check()
    rho = params.loop_gain
    contrast = ((1.0 + rho) / (1.0 - rho)) ** 2
    finesse_coeff = 4.0 * rho / (1.0 - rho) ** 2
    if rho > _FWHM_GAIN_FLOOR:
        fwhm = 4.0 * math.asin((1.0 - rho) / (2.0 * math.sqrt(rho)))
    else:
        fwhm = 2.0 * math.pi
    return AiryMetrics(contrast, finesse_coeff, fwhm)


def _window_sums(params: ClosedFormParams) -> tuple[float, float]:
    """All-peak sums for both channels at the params' phase (geometric)."""
    wa, wb = params.wing_a, params.wing_b
    if wa >= 1.0 or wb >= 1.0:
        raise DivergenceError("per-analyzer wing ratio at or above 1")
    main = peak_weight(0, params) * (1.0 + wa / (1.0 - wa) + wb / (1.0 - wb))
    control = (control_peak_weight(0, params) / (1.0 - wa)
               + control_peak_weight(1, params) / (1.0 - wb))
    return main, control


def normalized_curves(params: ClosedFormParams,
                      phase_grid) -> tuple[PhaseScanCurve, PhaseScanCurve]:
    """All-peak coincidence curves for both channels, each scaled to max 1."""
    grid = np.asarray(list(phase_grid), dtype=float)
    if grid.size == 0:
        raise ValueError("phase grid must not be empty")
    main = np.empty(grid.size)
    control = np.empty(grid.size)
    for i, phi in enumerate(grid.tolist()):
        main[i], control[i] = _window_sums(params.at_phase(phi))
    meta = {"loop_gain": params.loop_gain, "normalization": "per-curve max"}
    main_curve = PhaseScanCurve(phase=grid, value=main, channel=CHANNEL_MAIN,
                                window="full", meta=dict(meta)).normalized()
    control_curve = PhaseScanCurve(phase=grid, value=control, channel=CHANNEL_CONTROL,
                                   window="full", meta=dict(meta)).normalized()
    return main_curve, control_curve


def curve_fwhm(phase: np.ndarray, value: np.ndarray) -> float:
    """Width at half maximum of a peaked curve on a uniform periodic grid.

    Half maximum is literally half the curve's peak value (matching the
    lineshape formula in :func:`airy_metrics`), not the baseline-subtracted
    midpoint; a curve whose minimum stays above half maximum has no defined
    width and reports a full period.
    """
    n = value.size
    if n < 3:
        return 2.0 * math.pi
    step = float(phase[1] - phase[0])
    mid = n // 2
    vals = np.roll(np.asarray(value, dtype=float), mid - int(np.argmax(value)))
    x = (np.arange(n) - mid) * step
    top = float(vals[mid])
    half = 0.5 * top
    if float(np.min(vals)) >= half:
        return 2.0 * math.pi

    def crossing(direction: int) -> float:
        indices = range(mid, n) if direction > 0 else range(mid, -1, -1)
        prev = mid
        for idx in indices:
            if vals[idx] <= half:
                frac = (vals[prev] - half) / (vals[prev] - vals[idx])
                return x[prev] + frac * (x[idx] - x[prev])
            prev = idx
        return x[-1] if direction > 0 else x[0]

    return crossing(+1) - crossing(-1)
