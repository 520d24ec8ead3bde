"""Experimental-limitation models: loss, polarization contrast, spectrum, phase noise.

Four degradation mechanisms are supported:

* per-round-trip lumped loss (amplitude times ``1 - turn_loss`` per turn),
* polarization contrast decaying per turn (interference damped, counts kept),
* non-monochromatic pair spectrum with a residual per-turn analyzer length
  mismatch, handled by deterministic Gauss-Hermite quadrature, and
* slow Gaussian jitter of the analyzer-``a`` round-trip phase, averaged at
  probability level over measurement repetitions.

Every windowed curve depends on the two analyzer phases only through their
sum, and both the quadrature detunings and the phase draws enter as per-turn
phase offsets, i.e. as shifts of that sum.  The degraded curve is therefore a
weighted shift-average of one densely sampled exact-engine sweep, which keeps
the Monte Carlo loop cheap without approximating the physics.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import replace

import numpy as np

from .amplitudes import (CHANNEL_MAIN, PhaseScanCurve, evolve_state,
                         peak_distribution, phase_scan_exact, resolve_window)
from .model import (ExperimentConfig, NoiseSpec, SpectralSpec, config_hash)

SPEED_OF_LIGHT = 299792458.0
_FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))


def noise_hash(noise: NoiseSpec, spectral: SpectralSpec) -> str:
    payload = repr((noise, spectral)).encode("utf-8")
    return hashlib.sha256(payload).hexdigest()[:12]


def matched_bandwidth(fwhm: float, wavelength_from: float, wavelength_to: float) -> float:
    """Map a filter FWHM between the two pair wavelengths at equal frequency width."""
    return fwhm * (wavelength_to / wavelength_from) ** 2


def spectral_samples(spec: SpectralSpec, double_pass_a: bool = True,
                     double_pass_b: bool = False) -> list[tuple[float, float, float]]:
    """Quadrature over the pair spectrum as per-turn phase offsets.

    Returns ``(weight, offset_a, offset_b)`` triples whose weights sum to 1.
    The pump is monochromatic, so the two photons' frequency detunings are
    anti-correlated; a detuning only matters through the analyzers' residual
    per-turn group-delay mismatch, so matched analyzers (zero
    ``length_mismatch``) are dispersion-insensitive regardless of bandwidth.
    """
    n = spec.quadrature_points
    if n == 1:
        return [(1.0, 0.0, 0.0)]

    widths = []
    if spec.bandwidth_fwhm_a > 0.0:
        widths.append(SPEED_OF_LIGHT * spec.bandwidth_fwhm_a / spec.center_wavelength_a ** 2)
    if spec.bandwidth_fwhm_b > 0.0:
        widths.append(SPEED_OF_LIGHT * spec.bandwidth_fwhm_b / spec.center_wavelength_b ** 2)
    if not widths:
        raise ValueError("quadrature_points > 1 requires a positive bandwidth")
    # product of Gaussians: the narrower filter dominates the pair spectrum
    sigma = 1.0 / math.sqrt(sum(1.0 / (w * _FWHM_TO_SIGMA) ** 2 for w in widths))

    delay_a = (2.0 if double_pass_a else 1.0) * spec.group_index * spec.length_mismatch / SPEED_OF_LIGHT
    delay_b = (1.0 if not double_pass_b else 2.0) * spec.group_index * spec.length_mismatch / SPEED_OF_LIGHT

    nodes, weights = np.polynomial.hermite.hermgauss(n)
    samples = []
    for x, w in zip(nodes.tolist(), weights.tolist()):
        detuning = math.sqrt(2.0) * sigma * x
        samples.append((w / math.sqrt(math.pi),
                        2.0 * math.pi * detuning * delay_a,
                        -2.0 * math.pi * detuning * delay_b))
    return samples


def apply_noise(config: ExperimentConfig, noise: NoiseSpec) -> ExperimentConfig:
    """Fold the degradation bundle into the analyzer specs (composed)."""
    def degraded(spec, extra_loss):
        return replace(
            spec,
            turn_loss=1.0 - (1.0 - spec.turn_loss) * (1.0 - extra_loss),
            pol_contrast_per_turn=spec.pol_contrast_per_turn * noise.pol_contrast_per_turn,
        )

    return replace(
        config,
        interferometer_a=degraded(config.interferometer_a, noise.turn_loss_a),
        interferometer_b=degraded(config.interferometer_b, noise.turn_loss_b),
    )


def _dense_window_curve(config: ExperimentConfig, window, channel: str,
                        points: int) -> tuple[np.ndarray, np.ndarray]:
    grid = np.linspace(0.0, 2.0 * math.pi, points, endpoint=False)
    curve = phase_scan_exact(config, grid, window, channel=channel)
    return grid, curve.value


def _periodic_interp(base_grid: np.ndarray, base_values: np.ndarray,
                     at: np.ndarray) -> np.ndarray:
    period = 2.0 * math.pi
    xp = np.concatenate([base_grid, [period]])
    fp = np.concatenate([base_values, base_values[:1]])
    return np.interp(np.mod(at, period), xp, fp)


def degraded_phase_scan(config: ExperimentConfig, noise: NoiseSpec | None = None,
                        spectral: SpectralSpec | None = None, phase_grid=None,
                        window="full", mc_phase_draws: int = 200, seed: int = 0,
                        channel: str = CHANNEL_MAIN,
                        base_points: int = 512) -> PhaseScanCurve:
    """Phase scan under the configured imperfections, with standard errors.

    For every quadrature sample and Gaussian phase draw the exact engine
    curve is evaluated (through its phase-sum shift) and the probabilities
    are averaged with the quadrature weights; the per-point standard error
    reflects the Monte Carlo spread over phase draws.  Identical seeds give
    bit-identical curves.
    """
    noise = noise if noise is not None else config.noise
    spectral = spectral if spectral is not None else config.spectral
    if phase_grid is None:
        phase_grid = np.linspace(0.0, 2.0 * math.pi, 64, endpoint=False)
    grid = np.asarray(list(phase_grid), dtype=float)
    if grid.size == 0:
        raise ValueError("phase grid must not be empty")
    if mc_phase_draws < 1:
        raise ValueError("mc_phase_draws must be >= 1")

    degraded_config = apply_noise(config, noise)
    samples = spectral_samples(spectral)
    sigma = noise.phase_noise_fwhm * _FWHM_TO_SIGMA

    tag = {"config_hash": config_hash(config),
           "noise_hash": noise_hash(noise, spectral), "seed": seed}

    if sigma == 0.0 and len(samples) == 1:
        exact = phase_scan_exact(degraded_config, grid, window, channel=channel)
        meta = dict(exact.meta)
        meta.update(tag)
        return PhaseScanCurve(phase=grid, value=exact.value,
                              stderr=np.zeros(grid.size), channel=channel,
                              window=exact.window, meta=meta)

    base_grid, base_values = _dense_window_curve(degraded_config, window, channel,
                                                 base_points)
    rng = np.random.default_rng(seed)
    draws = rng.normal(0.0, sigma, size=mc_phase_draws) if sigma > 0.0 else np.zeros(1)

    per_draw = np.empty((draws.size, grid.size))
    for d, delta in enumerate(draws.tolist()):
        acc = np.zeros(grid.size)
        for weight, offset_a, offset_b in samples:
            acc += weight * _periodic_interp(base_grid, base_values,
                                             grid + offset_a + offset_b + delta)
        per_draw[d] = acc
    mean = per_draw.mean(axis=0)
    if draws.size > 1:
        stderr = per_draw.std(axis=0, ddof=1) / math.sqrt(draws.size)
    else:
        stderr = np.zeros(grid.size)
    return PhaseScanCurve(phase=grid, value=mean, stderr=stderr, channel=channel,
                          window=window if isinstance(window, str) else str(sorted(window)),
                          meta=tag)


def _smoothed_peak_curves_all(config: ExperimentConfig, noise: NoiseSpec,
                              spectral: SpectralSpec, base_points: int, channels
                              ) -> tuple[np.ndarray, dict[str, dict[int, np.ndarray]]]:
    """Dense per-peak curves averaged over quadrature and phase jitter.

    The Gaussian jitter average is done exactly in the Fourier domain
    (harmonic ``m`` damped by ``exp(-m^2 sigma^2 / 2)``), the quadrature as
    phase shifts (harmonic rotations); both commute with the curve's
    periodicity, so no Monte Carlo is needed here.  One engine sweep serves
    every requested channel.
    """
    degraded_config = apply_noise(config, noise)
    grid = np.linspace(0.0, 2.0 * math.pi, base_points, endpoint=False)
    raw: dict[str, dict[int, np.ndarray]] = {ch: {} for ch in channels}
    for i, phi in enumerate(grid.tolist()):
        table = evolve_state(degraded_config, phase_a=phi, phase_b=0.0)
        for channel in channels:
            dist = peak_distribution(table, channel, edges="in")
            rows = raw[channel]
            for n, value in dist.peaks.items():
                rows.setdefault(n, np.zeros(base_points))[i] = value

    sigma = noise.phase_noise_fwhm * _FWHM_TO_SIGMA
    samples = spectral_samples(spectral)
    m = np.fft.rfftfreq(base_points, d=1.0 / base_points)  # harmonic numbers
    kernel = np.exp(-0.5 * (m * sigma) ** 2).astype(complex)
    shift = np.zeros_like(kernel)
    for weight, offset_a, offset_b in samples:
        shift += weight * np.exp(1j * m * (offset_a + offset_b))
    kernel *= shift

    smoothed: dict[str, dict[int, np.ndarray]] = {}
    for channel, rows in raw.items():
        smoothed[channel] = {
            n: np.fft.irfft(np.fft.rfft(row) * kernel, n=base_points)
            for n, row in rows.items()}
    return grid, smoothed


def _smoothed_peak_curves(config: ExperimentConfig, noise: NoiseSpec,
                          spectral: SpectralSpec, channel: str,
                          base_points: int) -> tuple[np.ndarray, dict[int, np.ndarray]]:
    grid, per_channel = _smoothed_peak_curves_all(config, noise, spectral,
                                                  base_points, (channel,))
    return grid, per_channel[channel]


def per_turn_visibility_profile(config: ExperimentConfig, noise: NoiseSpec | None = None,
                                spectral: SpectralSpec | None = None,
                                channel: str = CHANNEL_MAIN, peaks=None,
                                base_points: int = 512) -> dict[int, float]:
    """Interference visibility of each arrival-difference peak.

    Deterministic: the phase-jitter average is computed exactly.  For an
    ideal analyzer pair every peak oscillates synchronously and the profile
    is flat; contrast loss growing with the number of round trips makes it
    strictly decreasing in ``|n|``.
    """
    noise = noise if noise is not None else config.noise
    spectral = spectral if spectral is not None else config.spectral
    _, smoothed = _smoothed_peak_curves(config, noise, spectral, channel, base_points)
    if peaks is None:
        peaks = resolve_window("full", config)
    profile: dict[int, float] = {}
    for n in peaks:
        row = smoothed.get(n)
        if row is None:
            continue
        top, bottom = float(row.max()), float(row.min())
        profile[n] = (top - bottom) / (top + bottom) if top + bottom > 0 else 0.0
    return profile


def degraded_peak_probabilities(config: ExperimentConfig, noise: NoiseSpec | None = None,
                                spectral: SpectralSpec | None = None,
                                base_points: int = 512,
                                channels=(CHANNEL_MAIN, "control")
                                ) -> dict[str, dict[int, float]]:
    """Imperfection-averaged per-peak probabilities at the configured phases.

    Used by the stochastic run to sample gate outcomes when the config
    carries imperfections; the slow drift averages at probability level over
    a histogram accumulation.
    """
    noise = noise if noise is not None else config.noise
    spectral = spectral if spectral is not None else config.spectral
    phase_sum = config.interferometer_a.phase + config.interferometer_b.phase
    grid, per_channel = _smoothed_peak_curves_all(config, noise, spectral,
                                                  base_points, channels)
    return {channel: {
        n: float(_periodic_interp(grid, row, np.asarray([phase_sum]))[0])
        for n, row in smoothed.items()}
        for channel, smoothed in per_channel.items()}
