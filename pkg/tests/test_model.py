import math

import pytest

from fptimebin.model import (ConfigError, CouplerSpec, SourceSpec,
                             apply_overrides, config_hash, config_to_text,
                             coupler_from_power, load_config,
                             parse_config_text, parse_frequency, parse_length,
                             parse_time, phase_from_length, truncation_tail,
                             max_turns_for_gain)

from conftest import make_config


class TestCouplerFromPower:
    def test_90_10_coupler(self):
        c = coupler_from_power(0.9)
        assert c.reflection == pytest.approx(math.sqrt(0.9), abs=1e-12)
        assert c.transmission == pytest.approx(math.sqrt(0.1), abs=1e-12)
        assert c.is_lossless

    def test_fully_transmissive(self):
        c = coupler_from_power(0.0)
        assert c.reflection == 0.0
        assert c.transmission == 1.0

    def test_power_bookkeeping_with_loss(self):
        c = coupler_from_power(0.9, pass_loss=0.05)
        assert c.reflection == pytest.approx(math.sqrt(0.9))
        assert c.transmission == pytest.approx(math.sqrt(0.05))
        assert c.reflection ** 2 + c.transmission ** 2 == pytest.approx(0.95, abs=1e-12)

    def test_out_of_range_reflectance(self):
        with pytest.raises(ConfigError) as err:
            coupler_from_power(1.2)
        assert "reflectance" in str(err.value)

    def test_budget_overflow(self):
        with pytest.raises(ConfigError):
            coupler_from_power(0.9, pass_loss=0.2)

    def test_monotone_in_power(self):
        grid = [i / 50 for i in range(51)]
        couplers = [coupler_from_power(p) for p in grid]
        for low, high in zip(couplers, couplers[1:]):
            assert high.reflection >= low.reflection
            assert high.transmission <= low.transmission

    def test_direct_construction_requires_consistency(self):
        with pytest.raises(ConfigError):
            CouplerSpec(0.5, 0.5, pass_loss=0.0)  # r^2 + t^2 = 0.5 != 1


class TestPhaseFromLength:
    def test_zero_length(self):
        assert phase_from_length(0.0, 810e-9) == 0.0

    def test_quarter_wave_double_pass(self):
        # 25 nm shift at 810 nm, mirror cavity: close to pi/8
        phi = phase_from_length(25e-9, 810e-9, group_index=1.0, double_pass=True)
        assert phi == pytest.approx(2 * math.pi * 2 * 25 / 810, rel=1e-12)
        assert phi == pytest.approx(math.pi / 8, rel=0.02)

    def test_full_wavelength_single_pass(self):
        assert phase_from_length(810e-9, 810e-9) == pytest.approx(2 * math.pi)

    def test_linear_in_length(self):
        one = phase_from_length(3e-9, 1550e-9, group_index=1.47)
        two = phase_from_length(6e-9, 1550e-9, group_index=1.47)
        assert two == pytest.approx(2 * one, rel=1e-12)

    def test_nonpositive_wavelength(self):
        with pytest.raises(ConfigError):
            phase_from_length(1e-9, 0.0)


class TestQuantities:
    @pytest.mark.parametrize("raw,expected", [
        ("50 ns", 50e-9), ("2.5us", 2.5e-6), ("1 s", 1.0), ("3", 3.0)])
    def test_time(self, raw, expected):
        assert parse_time(raw) == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("raw,expected", [
        ("430 MHz", 430e6), ("15.6 Hz", 15.6), ("4.6 kHz", 4600.0)])
    def test_frequency(self, raw, expected):
        assert parse_frequency(raw) == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("raw,expected", [
        ("810 nm", 810e-9), ("5.4nm", 5.4e-9), ("2 um", 2e-6)])
    def test_length(self, raw, expected):
        assert parse_length(raw) == pytest.approx(expected, rel=1e-12)

    def test_garbage_rejected(self):
        with pytest.raises(ConfigError):
            parse_time("fifty ns")


class TestConfigParsing:
    def test_defaults_match_lab_numbers(self):
        config, _ = parse_config_text("[source]\ndimension = 20\n")
        assert config.source.dimension == 20
        assert config.source.repetition_period == pytest.approx(1 / 430e6)
        assert config.source.repetition_period * 1e9 == pytest.approx(2.3256, abs=1e-4)
        assert config.gate_capacity() == 21
        assert config.gate_bins() == 20

    def test_single_bin_flagged(self):
        config, warnings = parse_config_text("[source]\ndimension = 1\n")
        assert config.source.dimension == 1
        assert any("no inter-bin interference" in w for w in warnings)

    def test_multi_pair_risk_flagged(self):
        text = "[source]\ndimension = 40\npair_probability_per_pulse = 0.02\n"
        _, warnings = parse_config_text(text)
        assert any("well below 1" in w for w in warnings)

    def test_range_violation_names_field(self):
        with pytest.raises(ConfigError) as err:
            parse_config_text("[interferometer_a]\ncoupler1_reflectance = 1.2\n")
        assert "reflectance" in str(err.value)

    def test_unknown_key_lists_valid_ones(self):
        with pytest.raises(ConfigError) as err:
            parse_config_text("[source]\ndimenson = 20\n")
        assert "valid keys" in str(err.value)

    def test_unknown_section(self):
        with pytest.raises(ConfigError):
            parse_config_text("[sauce]\ndimension = 20\n")

    def test_period_and_rate_conflict(self):
        text = "[source]\nrepetition_period = 2 ns\nrepetition_rate = 430 MHz\n"
        with pytest.raises(ConfigError):
            parse_config_text(text)

    def test_gate_must_cover_one_period(self):
        with pytest.raises(ConfigError):
            parse_config_text("[detectors]\ngate_width = 1 ns\n")

    def test_roundtrip_is_identity(self):
        config = make_config(dimension=7, phase_a=0.371, phase_b=1.234,
                             turn_loss=0.0321)
        text = config_to_text(config)
        parsed, _ = parse_config_text(text)
        assert parsed == config
        assert config_hash(parsed) == config_hash(config)

    def test_roundtrip_from_file(self, tmp_path):
        config = make_config(dimension=3, phase_a=0.5)
        path = tmp_path / "case.cfg"
        path.write_text(config_to_text(config), encoding="utf-8")
        loaded, _ = load_config(path)
        assert loaded == config

    def test_overrides(self):
        config, _ = parse_config_text("[source]\ndimension = 20\n")
        updated, _ = apply_overrides(config, ["source.dimension=5",
                                              "interferometer_a.phase=0.25"])
        assert updated.source.dimension == 5
        assert updated.interferometer_a.phase == 0.25

    def test_override_unknown_key(self):
        config, _ = parse_config_text("[source]\ndimension = 20\n")
        with pytest.raises(ConfigError) as err:
            apply_overrides(config, ["source.dim=5"])
        assert "valid keys" in str(err.value)

    def test_override_bad_shape(self):
        config, _ = parse_config_text("")
        with pytest.raises(ConfigError):
            apply_overrides(config, ["dimension"])


class TestTurnCap:
    def test_tail_bound_decreases(self):
        assert truncation_tail(0.9, 100) < truncation_tail(0.9, 50)

    def test_auto_cap_meets_probability_bound(self):
        cap = max_turns_for_gain(0.9)
        assert truncation_tail(0.9, cap) < 1e-12

    def test_low_turn_cap_warned(self):
        config = make_config(max_turns=3)
        from fptimebin.model import config_warnings
        warnings = config_warnings(config)
        assert any("max_turns" in w for w in warnings)

    def test_source_normalization(self):
        src = SourceSpec(dimension=16)
        assert 16 * src.bin_magnitude() ** 2 == pytest.approx(1.0, abs=1e-12)
