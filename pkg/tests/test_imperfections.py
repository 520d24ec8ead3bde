import math

import numpy as np
import pytest

from fptimebin.amplitudes import evolve_state, peak_distribution, phase_scan_exact
from fptimebin.imperfections import (apply_noise, degraded_phase_scan,
                                     degraded_peak_probabilities,
                                     matched_bandwidth, noise_hash,
                                     per_turn_visibility_profile,
                                     spectral_samples)
from fptimebin.model import NoiseSpec, SpectralSpec

from conftest import make_config

PI8 = math.pi / 8


def lab_spectral(points=8, mismatch=2e-6) -> SpectralSpec:
    return SpectralSpec(bandwidth_fwhm_a=5.4e-9, bandwidth_fwhm_b=20e-9,
                        quadrature_points=points, length_mismatch=mismatch)


class TestSpectralSamples:
    def test_monochromatic_limit(self):
        samples = spectral_samples(SpectralSpec(quadrature_points=1))
        assert samples == [(1.0, 0.0, 0.0)]

    def test_weights_sum_to_one(self):
        samples = spectral_samples(lab_spectral(points=12))
        assert sum(w for w, _, _ in samples) == pytest.approx(1.0, abs=1e-12)

    def test_filter_bandwidths_match_in_frequency(self):
        # the 20 nm filter on the 1550 nm arm equals ~5.4 nm at 810 nm
        mapped = matched_bandwidth(20e-9, 1550e-9, 810e-9)
        assert mapped == pytest.approx(5.4e-9, rel=0.02)

    def test_matched_analyzers_are_dispersion_insensitive(self):
        spec = lab_spectral(points=8, mismatch=0.0)
        for _, offset_a, offset_b in spectral_samples(spec):
            assert offset_a == 0.0
            assert offset_b == 0.0

    def test_detunings_anticorrelated(self):
        for _, offset_a, offset_b in spectral_samples(lab_spectral()):
            # mirror arm passes the mismatch twice per turn, the loop once
            assert offset_a == pytest.approx(-2.0 * offset_b, rel=1e-9) or (
                offset_a == 0.0 and offset_b == 0.0)

    def test_bandwidth_required_for_quadrature(self):
        with pytest.raises(ValueError):
            spectral_samples(SpectralSpec(quadrature_points=4))


class TestDegradedScan:
    def test_degenerate_limit_matches_exact(self):
        config = make_config()
        grid = np.linspace(0, 2 * math.pi, 12, endpoint=False)
        quiet = NoiseSpec()
        degraded = degraded_phase_scan(config, quiet, SpectralSpec(), grid,
                                       window="central", mc_phase_draws=10, seed=1)
        exact = phase_scan_exact(config, grid, "central")
        assert np.max(np.abs(degraded.value - exact.value)) < 1e-12
        assert np.all(degraded.stderr == 0.0)

    def test_loss_only_wing_ratio(self):
        # one extra turn costs (0.9 * 0.95)^2 = 0.81 * 0.95^2 per peak step
        noise = NoiseSpec(turn_loss_a=0.05, turn_loss_b=0.05)
        config = apply_noise(make_config(dimension=200), noise)
        dist = peak_distribution(evolve_state(config), "main", edges="out")
        assert dist.ratio(1, 0) == pytest.approx(0.81 * 0.95 ** 2, abs=1e-9)
        assert dist.ratio(-1, 0) == pytest.approx(0.731, abs=1e-3)

    def test_noise_broadens_and_flattens(self):
        config = make_config()
        grid = np.linspace(0, 2 * math.pi, 32, endpoint=False)
        noise = NoiseSpec(phase_noise_fwhm=PI8, turn_loss_a=0.05, turn_loss_b=0.05)
        degraded = degraded_phase_scan(config, noise, lab_spectral(), grid,
                                       window="full", mc_phase_draws=300, seed=2)
        ideal = phase_scan_exact(config, grid, "full")
        ideal_vis = (ideal.value.max() - ideal.value.min()) / (
            ideal.value.max() + ideal.value.min())
        degraded_vis = (degraded.value.max() - degraded.value.min()) / (
            degraded.value.max() + degraded.value.min())
        assert degraded_vis < ideal_vis
        assert degraded.value.max() < ideal.value.max()

    def test_deterministic_under_seed(self):
        config = make_config()
        grid = np.linspace(0, 2 * math.pi, 8, endpoint=False)
        noise = NoiseSpec(phase_noise_fwhm=PI8)
        one = degraded_phase_scan(config, noise, SpectralSpec(), grid,
                                  window="central", mc_phase_draws=32, seed=9)
        two = degraded_phase_scan(config, noise, SpectralSpec(), grid,
                                  window="central", mc_phase_draws=32, seed=9)
        assert np.array_equal(one.value, two.value)
        assert np.array_equal(one.stderr, two.stderr)

    def test_quadrature_convergence(self):
        config = make_config()
        grid = np.linspace(0, 2 * math.pi, 16, endpoint=False)
        noise = NoiseSpec(phase_noise_fwhm=PI8)
        eight = degraded_phase_scan(config, noise, lab_spectral(points=8), grid,
                                    window="central", mc_phase_draws=400, seed=3)
        sixteen = degraded_phase_scan(config, noise, lab_spectral(points=16), grid,
                                      window="central", mc_phase_draws=400, seed=3)
        tol = 3.0 * np.maximum(eight.stderr, 1e-15)
        assert np.all(np.abs(eight.value - sixteen.value) <= tol)

    def test_mc_mean_agrees_with_exact_smoothing(self):
        # the Fourier-domain jitter average is the infinite-draw limit
        config = make_config()
        noise = NoiseSpec(phase_noise_fwhm=PI8)
        grid = np.linspace(0, 2 * math.pi, 8, endpoint=False)
        mc = degraded_phase_scan(config, noise, SpectralSpec(), grid,
                                 window="central", mc_phase_draws=4000, seed=5)
        probs = degraded_peak_probabilities(
            make_config(phase_a=float(grid[1])), noise, SpectralSpec())
        exact_point = probs["main"][0]
        assert mc.value[1] == pytest.approx(exact_point, abs=4 * mc.stderr[1])

    def test_draw_count_validated(self):
        with pytest.raises(ValueError):
            degraded_phase_scan(make_config(), NoiseSpec(), SpectralSpec(),
                                [0.0, 1.0], window="central", mc_phase_draws=0)

    def test_noise_hash_stable(self):
        assert noise_hash(NoiseSpec(), SpectralSpec()) == noise_hash(
            NoiseSpec(), SpectralSpec())


class TestVisibilityProfile:
    def test_ideal_profile_is_flat(self):
        config = make_config(reflectance=0.49)
        profile = per_turn_visibility_profile(config, NoiseSpec(), SpectralSpec(),
                                              peaks=[-2, -1, 0, 1, 2],
                                              base_points=256)
        values = list(profile.values())
        assert max(values) - min(values) < 1e-9

    def test_contrast_loss_decreases_with_peak_order(self):
        config = make_config(reflectance=0.49)
        noise = NoiseSpec(pol_contrast_per_turn=0.9)
        profile = per_turn_visibility_profile(config, noise, SpectralSpec(),
                                              peaks=[0, 1, 2, 3], base_points=256)
        assert profile[0] > profile[1] > profile[2] > profile[3]

    def test_phase_noise_degrades_central_peak(self):
        config = make_config(reflectance=0.49)
        noise = NoiseSpec(phase_noise_fwhm=PI8)
        profile = per_turn_visibility_profile(config, noise, SpectralSpec(),
                                              peaks=[0], base_points=256)
        assert profile[0] < 1.0 - 1e-4

    @pytest.mark.parametrize("levels", [
        [NoiseSpec(turn_loss_a=l, turn_loss_b=l) for l in (0.0, 0.05, 0.1)],
        [NoiseSpec(phase_noise_fwhm=f) for f in (0.0, 0.3, 0.6)],
        [NoiseSpec(pol_contrast_per_turn=c) for c in (1.0, 0.97, 0.94)],
    ])
    def test_degradation_monotone_in_noise(self, levels):
        config = make_config(reflectance=0.49)
        previous = None
        for noise in levels:
            profile = per_turn_visibility_profile(config, noise, SpectralSpec(),
                                                  peaks=[0, 1, 2], base_points=256)
            if previous is not None:
                for n in profile:
                    assert profile[n] <= previous[n] + 1e-9
            previous = profile

    def test_degradation_monotone_in_spectral_mismatch(self):
        config = make_config(reflectance=0.49)
        previous = None
        for mismatch in (0.0, 2e-6, 4e-6):
            profile = per_turn_visibility_profile(
                config, NoiseSpec(), lab_spectral(points=8, mismatch=mismatch),
                peaks=[0, 1], base_points=256)
            if previous is not None:
                for n in profile:
                    assert profile[n] <= previous[n] + 1e-9
            previous = profile
