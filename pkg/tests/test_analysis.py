import dataclasses
import math

import numpy as np
import pytest

from fptimebin.amplitudes import evolve_state, peak_distribution
from fptimebin.analysis import (DifferenceHistogram, assemble_scan,
                                build_histogram, fit_airy, net_normalize,
                                read_tdc_csv, window_bin_count, window_counts)
from fptimebin.model import (ROLE_STOP_CONTROL, ROLE_STOP_MAIN, DetectorSpec,
                             config_hash)
from fptimebin.montecarlo import simulate_run

from conftest import make_config


def run_stream(config, gates, seed, **kw):
    duration = gates / config.rates.trigger_rate
    return simulate_run(config, duration=duration, seed=seed, **kw)[0]


def dark_only_config(dark=15.6):
    config = make_config()
    return dataclasses.replace(
        config,
        stop_main=DetectorSpec(0.0, dark, ROLE_STOP_MAIN),
        stop_control=DetectorSpec(0.0, 17.6, ROLE_STOP_CONTROL))


class TestBuildHistogram:
    def test_gate_holds_twenty_complete_bins(self):
        config = make_config()
        stream = run_stream(config, 2e4, seed=1)
        hist = build_histogram(stream, "main", config)
        assert len(hist.lattice_indices()) == 20
        assert len(hist.counts) <= 21
        assert set(hist.counts) <= set(hist.lattice_indices())

    def test_control_histogram_asymmetric(self):
        config = make_config(phase_a=math.pi)
        stream = run_stream(config, 5e4, seed=2)
        hist = build_histogram(stream, "control", config)
        right = sum(hist.counts.get(n, 0) for n in (1, 2, 3))
        left = sum(hist.counts.get(n, 0) for n in (-1, -2, -3))
        assert right < 0.2 * left

    def test_timing_from_stream_header(self):
        config = make_config()
        stream = run_stream(config, 1e4, seed=3)
        from_header = build_histogram(stream, "main")
        from_config = build_histogram(stream, "main", config)
        assert from_header.counts == from_config.counts

    def test_dark_only_histogram_flat(self):
        config = dark_only_config()
        stream = run_stream(config, 4e5, seed=4)
        hist = build_histogram(stream, "main", config, bin_width=5e-9)
        counts = np.array([hist.counts.get(i, 0) for i in range(10)])
        expected = counts.mean()
        assert np.all(np.abs(counts - expected) < 5 * math.sqrt(expected))

    def test_empty_stream_is_empty_histogram(self):
        from fptimebin.montecarlo import TdcEventStream
        config = make_config()
        stream = TdcEventStream(events=[], meta={"gates": 0})
        hist = build_histogram(stream, "main", config)
        assert hist.total() == 0


class TestWindows:
    @pytest.fixture(scope="class")
    def histogram(self):
        config = make_config()
        stream = run_stream(config, 3e5, seed=5)
        return build_histogram(stream, "main", config)

    def test_full_gate_partition(self, histogram):
        full = window_counts(histogram, "full")
        bins = histogram.lattice_indices()
        parts = [bins[:7], bins[7:13], bins[13:]]
        assert sum(window_counts(histogram, part) for part in parts) == full
        assert full == histogram.total()

    def test_central3_to_central_ratio(self, histogram):
        # two extra wings at 0.81 each: 1 + 2*0.81 = 2.62
        ratio = window_counts(histogram, "central3") / window_counts(histogram, "central")
        assert ratio == pytest.approx(2.62, rel=0.05)

    def test_window_outside_gate_rejected(self, histogram):
        with pytest.raises(ValueError):
            window_counts(histogram, [0, 99])

    def test_dark_counts_spread_over_twenty_bins(self):
        config = dark_only_config()
        stream = run_stream(config, 6e5, seed=6)
        hist = build_histogram(stream, "main", config)
        central = window_counts(hist, "central")
        full = window_counts(hist, "full")
        assert central == pytest.approx(full / 20, abs=4 * math.sqrt(full / 20))


class TestNetNormalize:
    def test_dark_only_net_compatible_with_zero(self):
        config = dark_only_config()
        stream = run_stream(config, 4e5, seed=7)
        hist = build_histogram(stream, "main", config)
        for window in ("central", "central3", "full"):
            point = net_normalize(0.0, window_counts(hist, window),
                                  hist.total_gates, window_bin_count(hist, window),
                                  dark_rate=15.6,
                                  period=config.source.repetition_period)
            assert abs(point.net) <= 3 * point.stderr

    def test_ratio_invariance_under_source_power(self):
        one = net_normalize(0.0, 500, 10_000, 1, dark_rate=15.6, period=2.3e-9)
        two = net_normalize(0.0, 1000, 20_000, 1, dark_rate=15.6, period=2.3e-9)
        assert two.net == pytest.approx(one.net, rel=1e-12)

    def test_zero_singles_flagged_not_dropped(self):
        point = net_normalize(0.0, 0, 0, 1, dark_rate=15.6, period=2.3e-9)
        assert not point.valid


class TestScanAssembly:
    @pytest.fixture(scope="class")
    def tagged_streams(self):
        config = make_config()
        grid = np.linspace(0, 2 * math.pi, 16, endpoint=False)
        streams = []
        for i, phi in enumerate(grid.tolist()):
            scan_config = make_config(phase_a=phi)
            streams.append((phi, run_stream(scan_config, 3e4, seed=100 + i,
                                            scan_coordinate=phi)))
        return config, streams

    def test_windows_share_argmax(self, tagged_streams):
        config, streams = tagged_streams
        argmaxes = set()
        for window in ("central", "central3", "full"):
            scan = assemble_scan(streams, window, "main", config,
                                 bootstrap_draws=50, seed=1)
            argmaxes.add(int(np.argmax(scan.curve.value)))
        assert len(argmaxes) == 1

    def test_lineshape_fit_recovers_loop_gain(self, tagged_streams):
        config, streams = tagged_streams
        scan = assemble_scan(streams, "full", "main", config,
                             bootstrap_draws=50, seed=2)
        assert scan.loop_gain is not None
        assert scan.loop_gain == pytest.approx(0.81, abs=0.03)

    def test_channels_anticorrelated(self, tagged_streams):
        config, streams = tagged_streams
        main = assemble_scan(streams, "full", "main", config,
                             bootstrap_draws=20, seed=3)
        control = assemble_scan(streams, "full", "control", config,
                                bootstrap_draws=20, seed=3)
        assert int(np.argmax(main.curve.value)) == int(np.argmin(control.curve.value))

    def test_duplicate_coordinates_aggregate(self, tagged_streams):
        config, streams = tagged_streams
        doubled = streams + streams[:4]
        scan = assemble_scan(doubled, "central", "main", config,
                             bootstrap_draws=10, seed=4)
        assert len(scan.points) == len({c for c, _ in streams})

    def test_single_coordinate_rejected(self, tagged_streams):
        config, streams = tagged_streams
        with pytest.raises(ValueError):
            assemble_scan(streams[:1], "central", "main", config)

    def test_degraded_scan_less_visible(self, tagged_streams):
        config, streams = tagged_streams
        ideal = assemble_scan(streams, "full", "main", config,
                              bootstrap_draws=30, seed=5)
        noisy_streams = []
        for i, phi in enumerate(np.linspace(0, 2 * math.pi, 16, endpoint=False)):
            noisy_config = make_config(phase_a=float(phi), turn_loss=0.05,
                                       pol_contrast=0.98)
            noisy_streams.append(
                (float(phi), run_stream(noisy_config, 3e4, seed=300 + i,
                                        scan_coordinate=float(phi),
                                        use_imperfections=True)))
        noisy = assemble_scan(noisy_streams, "full", "main", config,
                              bootstrap_draws=30, seed=5)
        assert noisy.visibility < ideal.visibility


class TestPurity:
    def test_fit_airy_on_clean_curve(self):
        phase = np.linspace(0, 2 * math.pi, 32, endpoint=False)
        truth = 0.7
        values = 2.5 / ((1 - truth) ** 2 + 4 * truth * np.sin((phase - 0.3) / 2) ** 2)
        fitted = fit_airy(phase, values)
        assert fitted is not None
        assert fitted[0] == pytest.approx(truth, abs=1e-6)

    def test_histogram_csv_reproducible(self, tmp_path):
        config = make_config()
        stream = run_stream(config, 1e4, seed=8)
        hist = build_histogram(stream, "main", config)
        first, second = tmp_path / "a.csv", tmp_path / "b.csv"
        hist.to_csv(first, {"config_hash": config_hash(config)})
        hist.to_csv(second, {"config_hash": config_hash(config)})
        assert first.read_bytes() == second.read_bytes()

    def test_external_tdc_csv_reader(self, tmp_path):
        config = make_config()
        period = config.source.repetition_period
        rows = ["# start_ns, stop_channel, stop_delay_ns",
                f"100.0, main, {(10 * period) * 1e9}",
                f"100.0, control, {(11 * period) * 1e9}",
                f"350.0, main, {(9 * period) * 1e9}"]
        path = tmp_path / "external.csv"
        path.write_text("\n".join(rows) + "\n", encoding="utf-8")
        stream = read_tdc_csv(path, period=period, gate_width=config.gate_width,
                              center_bin=config.gate_center_bin(), total_gates=1000)
        assert len(stream.events) == 2
        hist = build_histogram(stream, "main", config)
        assert hist.total() == 2
        assert hist.total_gates == 1000
