import dataclasses
import math

import numpy as np
import pytest

from fptimebin.model import (ROLE_STOP_CONTROL, ROLE_STOP_MAIN, DetectorSpec,
                             RunRates, config_hash)
from fptimebin.montecarlo import (MultiPairError, TdcEventStream,
                                  conditional_stop_distribution,
                                  empirical_vs_exact, simulate_run)

from conftest import make_config


def lab_detectors(config, eff_main=0.16, eff_control=0.18,
                  dark_main=15.6, dark_control=17.6):
    return dataclasses.replace(
        config,
        stop_main=DetectorSpec(eff_main, dark_main, ROLE_STOP_MAIN),
        stop_control=DetectorSpec(eff_control, dark_control, ROLE_STOP_CONTROL))


def gates_duration(config, gates):
    return gates / config.rates.trigger_rate


class TestRateChain:
    def test_published_chain_lands_near_measured_gate_rate(self):
        rates = RunRates(pair_rate_into_fibers=430e3, transmission_a_db=-14.0,
                        efficiency_trigger=0.45)
        assert rates.trigger_rate == pytest.approx(430e3 * 10 ** -1.4 * 0.45, rel=1e-12)
        assert 4600.0 / 2 < rates.trigger_rate < 4600.0 * 2

    def test_multi_pair_guard(self):
        config = make_config()
        bad = RunRates(pair_rate_into_fibers=5e8)  # > one pair per pulse
        with pytest.raises(MultiPairError):
            simulate_run(config, rates=bad, duration=1e-3, seed=0)

    def test_gate_rate_bookkeeping(self):
        config = make_config()
        stream, summary = simulate_run(config, duration=0.4, seed=21)
        assert summary.singles_trigger == len(stream.events)
        assert summary.gate_rate == pytest.approx(summary.singles_trigger / 0.4)


class TestConditionalDistribution:
    def test_lossless_distribution_is_exhaustive(self):
        dist = conditional_stop_distribution(make_config())
        assert dist.probabilities.sum() == pytest.approx(1.0, abs=1e-9)
        assert dist.none_probability < 1e-9

    def test_loss_moves_mass_to_no_stop(self):
        dist = conditional_stop_distribution(make_config(turn_loss=0.05))
        assert dist.none_probability > 0.01


class TestSimulatedStops:
    def test_dark_only_stop_counts(self):
        # stop efficiency zero: every recorded stop is a dark count
        config = lab_detectors(make_config(), eff_main=0.0, eff_control=0.0)
        duration = gates_duration(config, 3e5)
        stream, summary = simulate_run(config, duration=duration, seed=5)
        for stops, dark in ((summary.stops_main, 15.6),
                            (summary.stops_control, 17.6)):
            expected = dark * config.gate_width * summary.singles_trigger
            assert stops == pytest.approx(expected, abs=3 * math.sqrt(expected) + 1)

    def test_expected_dark_stops_per_gate(self):
        assert 15.6 * 50e-9 == pytest.approx(7.8e-7, rel=1e-9)

    def test_rate_conservation(self):
        config = lab_detectors(make_config())
        dist = conditional_stop_distribution(config)
        center = config.gate_center_bin()
        period = config.source.repetition_period
        in_gate = {0: 0.0, 1: 0.0}
        for n, ch, p in zip(dist.peaks.tolist(), dist.channels.tolist(),
                            dist.probabilities.tolist()):
            if 0 <= (n + center) * period < config.gate_width:
                in_gate[ch] += p
        duration = gates_duration(config, 2e5)
        _, summary = simulate_run(config, duration=duration, seed=2)
        for stops, channel_idx, eff, dark in (
                (summary.stops_main, 0, 0.16, 15.6),
                (summary.stops_control, 1, 0.18, 17.6)):
            expected = in_gate[channel_idx] * eff + dark * config.gate_width
            observed = stops / summary.singles_trigger
            sigma = math.sqrt(expected / summary.singles_trigger)
            assert abs(observed - expected) < 3 * sigma

    def test_delays_on_lattice_inside_gate(self):
        config = make_config()
        stream, _ = simulate_run(config, duration=gates_duration(config, 2e4), seed=3)
        period = config.source.repetition_period
        for ev in stream.events:
            for _, delay in ev.stops:
                assert 0.0 <= delay < config.gate_width
                lattice = round(delay / period)
                assert abs(delay - lattice * period) < 1e-15


class TestDeterminism:
    def test_same_seed_same_bytes(self, tmp_path):
        config = lab_detectors(make_config())
        paths = []
        for run in range(2):
            stream, _ = simulate_run(config, duration=0.3, seed=99)
            path = tmp_path / f"run{run}.txt"
            stream.write(path)
            paths.append(path.read_bytes())
        assert paths[0] == paths[1]

    def test_worker_count_does_not_change_stream(self, tmp_path):
        config = lab_detectors(make_config())
        outputs = []
        for workers in (1, 4):
            stream, _ = simulate_run(config, duration=0.7, seed=42, workers=workers)
            path = tmp_path / f"w{workers}.txt"
            stream.write(path)
            outputs.append(path.read_bytes())
        assert outputs[0] == outputs[1]

    def test_stream_roundtrip(self, tmp_path):
        config = lab_detectors(make_config())
        stream, _ = simulate_run(config, duration=0.2, seed=7, scan_coordinate=1.25)
        path = tmp_path / "events.txt"
        stream.write(path)
        loaded = TdcEventStream.read(path)
        assert loaded.meta == stream.meta
        assert loaded.events == stream.events
        twice = tmp_path / "events2.txt"
        loaded.write(twice)
        assert twice.read_bytes() == path.read_bytes()


class TestGoodnessOfFit:
    def test_ideal_run_fits_exact_distribution(self):
        config = make_config()
        stream, _ = simulate_run(config, duration=gates_duration(config, 1e5), seed=11)
        report = empirical_vs_exact(stream, config)
        assert report.p_value > 1e-3
        assert all(abs(z) < 6 for z in report.z_scores.values())

    def test_seed_identical_reports(self):
        config = make_config()
        reports = []
        for _ in range(2):
            stream, _ = simulate_run(config, duration=gates_duration(config, 2e4),
                                     seed=17)
            reports.append(empirical_vs_exact(stream, config).to_text())
        assert reports[0] == reports[1]

    def test_wrong_phase_rejected(self):
        # simulate at mid-slope, test the histogram against a shifted phase
        simulated = make_config(phase_a=0.2)
        stream, _ = simulate_run(simulated,
                                 duration=gates_duration(simulated, 3e5), seed=12)
        wrong = make_config(phase_a=0.45)
        stream.meta["config_hash"] = config_hash(wrong)
        report = empirical_vs_exact(stream, wrong)
        assert report.p_value < 1e-3

    def test_config_hash_mismatch_refused(self):
        config = make_config()
        stream, _ = simulate_run(config, duration=gates_duration(config, 1e3), seed=1)
        other = make_config(phase_a=0.3)
        with pytest.raises(ValueError):
            empirical_vs_exact(stream, other)
