"""Domain types, configuration grammar and unit conventions.

All times are seconds, lengths are meters, phases are radians, bin index
arithmetic is integer.  Every type is a frozen dataclass and is safe to share
across workers after validation.

Conventions used throughout the package:

* Beam-splitter phase: a reflection keeps the amplitude real (``+r``), a
  transmission multiplies by ``1j * t``.  This is what produces the
  destructive term in the control-detector central peak.
* ``turn_loss`` is a lumped per-round-trip attenuation: each round trip
  multiplies the path amplitude by ``1 - turn_loss`` (power by its square).
* Analyzer ``a`` is a mirror-type cavity (a photon travels the fiber twice
  per turn), analyzer ``b`` is a fiber loop with two couplers; the loop has a
  second output port used as a control channel.

Configuration files are line-oriented text: ``[section]`` headers and
``key = value`` pairs, ``#`` comments, and SI suffixes on values (``ns``,
``MHz``, ``nm``, ...).  See ``docs/config-format.md`` and the annotated
presets shipped with the package.
"""

from __future__ import annotations

import configparser
import hashlib
import io
import math
from dataclasses import dataclass, field, replace

TWO_PI = 2.0 * math.pi

# Tokens used for detector roles and stop channels in files and APIs.
ROLE_TRIGGER = "trigger"
ROLE_STOP_MAIN = "stop_main"
ROLE_STOP_CONTROL = "stop_control"
CHANNEL_MAIN = "main"
CHANNEL_CONTROL = "control"

# Per-photon amplitude tail kept below this when auto-picking the turn cap.
_TAIL_EPS = 1e-13
_MAX_AUTO_TURNS = 400


class ConfigError(ValueError):
    """Validation failure; ``field`` holds the offending dotted path."""

    def __init__(self, field_path: str, message: str):
        self.field = field_path
        super().__init__(f"{field_path}: {message}")


def _require(condition: bool, field_path: str, message: str) -> None:
    if not condition:
        raise ConfigError(field_path, message)


# ---------------------------------------------------------------------------
# Specs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CouplerSpec:
    """One coupler/mirror: amplitude reflectivity, transmissivity, excess loss.

    The power bookkeeping identity ``reflection**2 + transmission**2 ==
    1 - pass_loss`` is enforced: the loss share is carried by the
    transmission arm (the reflectance of a lossy mirror stays at its coated
    value).
    """

    reflection: float
    transmission: float
    pass_loss: float = 0.0

    def __post_init__(self):
        _require(0.0 <= self.reflection <= 1.0, "coupler.reflection", "must be in [0, 1]")
        _require(0.0 <= self.transmission <= 1.0, "coupler.transmission", "must be in [0, 1]")
        _require(0.0 <= self.pass_loss < 1.0, "coupler.pass_loss", "must be in [0, 1)")
        budget = self.reflection ** 2 + self.transmission ** 2
        _require(budget <= 1.0 + 1e-12, "coupler", "reflection^2 + transmission^2 exceeds 1")
        _require(abs(budget - (1.0 - self.pass_loss)) <= 1e-9, "coupler",
                 "reflection^2 + transmission^2 must equal 1 - pass_loss")

    @property
    def is_lossless(self) -> bool:
        return abs(self.reflection ** 2 + self.transmission ** 2 - 1.0) <= 1e-12


def coupler_from_power(reflectance: float, pass_loss: float = 0.0) -> CouplerSpec:
    """Build a coupler from a power reflectance and an excess power loss.

    ``r = sqrt(R)`` and ``t = sqrt(1 - R - pass_loss)``, so the returned spec
    satisfies ``r**2 + t**2 == 1 - pass_loss``.
    """
    _require(0.0 <= reflectance <= 1.0, "coupler.reflectance", "must be in [0, 1]")
    _require(0.0 <= pass_loss < 1.0, "coupler.pass_loss", "must be in [0, 1)")
    residual = 1.0 - reflectance - pass_loss
    _require(residual >= -1e-12, "coupler.pass_loss",
             "reflectance + pass_loss exceeds the unit power budget")
    return CouplerSpec(math.sqrt(reflectance), math.sqrt(max(residual, 0.0)), pass_loss)


GEOMETRY_MIRROR = "mirror"
GEOMETRY_LOOP = "loop"


@dataclass(frozen=True)
class InterferometerSpec:
    """One analyzer arm: two couplers, a round-trip phase, per-turn factors.

    ``phase`` is stored as given and accumulated exactly (``k * phase``) in
    the amplitude engine; use :meth:`phase_mod_2pi` for comparisons.
    ``turn_loss = 0`` and ``pol_contrast_per_turn = 1`` define the ideal
    analyzer.
    """

    coupler1: CouplerSpec
    coupler2: CouplerSpec
    phase: float = 0.0
    turn_loss: float = 0.0
    pol_contrast_per_turn: float = 1.0
    geometry: str = GEOMETRY_LOOP

    def __post_init__(self):
        _require(0.0 <= self.turn_loss < 1.0, "interferometer.turn_loss", "must be in [0, 1)")
        _require(0.0 < self.pol_contrast_per_turn <= 1.0,
                 "interferometer.pol_contrast_per_turn", "must be in (0, 1]")
        _require(self.geometry in (GEOMETRY_MIRROR, GEOMETRY_LOOP),
                 "interferometer.geometry", "must be 'mirror' or 'loop'")

    def phase_mod_2pi(self) -> float:
        return self.phase % TWO_PI

    @property
    def turn_amplitude(self) -> float:
        """|amplitude| multiplier per round trip (couplers x lumped loss)."""
        return (self.coupler1.reflection * self.coupler2.reflection
                * (1.0 - self.turn_loss))

    @property
    def is_ideal(self) -> bool:
        return (self.turn_loss == 0.0 and self.pol_contrast_per_turn == 1.0
                and self.coupler1.is_lossless and self.coupler2.is_lossless)


@dataclass(frozen=True)
class SourceSpec:
    """Pulse-train pair source: D bins with constant magnitude amplitudes.

    Per-bin amplitude is ``bin_magnitude() * exp(1j * j * pump_phase_step)``;
    a mode-locked pump makes both the magnitude and the phase increment
    constant, and the default increment is zero.
    """

    dimension: int = 20
    repetition_period: float = 1.0 / 430e6
    pair_probability_per_pulse: float = 0.01
    pump_phase_step: float = 0.0

    def __post_init__(self):
        _require(self.dimension >= 1, "source.dimension", "must be >= 1")
        _require(self.repetition_period > 0.0, "source.repetition_period", "must be > 0")
        _require(0.0 <= self.pair_probability_per_pulse < 1.0,
                 "source.pair_probability_per_pulse", "must be in [0, 1)")

    def bin_magnitude(self) -> float:
        return 1.0 / math.sqrt(self.dimension)

    def bin_phase(self, j: int) -> float:
        return j * self.pump_phase_step


@dataclass(frozen=True)
class DetectorSpec:
    efficiency: float
    dark_rate: float = 0.0
    role: str = ROLE_STOP_MAIN

    def __post_init__(self):
        _require(0.0 <= self.efficiency <= 1.0, "detector.efficiency", "must be in [0, 1]")
        _require(self.dark_rate >= 0.0, "detector.dark_rate", "must be >= 0")
        _require(self.role in (ROLE_TRIGGER, ROLE_STOP_MAIN, ROLE_STOP_CONTROL),
                 "detector.role", "unknown role")


@dataclass(frozen=True)
class SpectralSpec:
    """Photon-pair spectrum and residual analyzer length mismatch.

    The pump is treated as monochromatic, so the two photons' frequency
    detunings are exactly anti-correlated; the narrower of the two stated
    filter bandwidths (in frequency) limits the pair spectrum.
    ``quadrature_points = 1`` is the monochromatic limit.
    """

    center_wavelength_a: float = 810e-9
    center_wavelength_b: float = 1550e-9
    bandwidth_fwhm_a: float = 0.0
    bandwidth_fwhm_b: float = 0.0
    quadrature_points: int = 1
    length_mismatch: float = 0.0
    group_index: float = 1.47

    def __post_init__(self):
        _require(self.center_wavelength_a > 0.0, "spectral.center_wavelength_a", "must be > 0")
        _require(self.center_wavelength_b > 0.0, "spectral.center_wavelength_b", "must be > 0")
        _require(self.bandwidth_fwhm_a >= 0.0, "spectral.bandwidth_fwhm_a", "must be >= 0")
        _require(self.bandwidth_fwhm_b >= 0.0, "spectral.bandwidth_fwhm_b", "must be >= 0")
        _require(self.quadrature_points >= 1, "spectral.quadrature_points", "must be >= 1")
        _require(self.group_index > 0.0, "spectral.group_index", "must be > 0")


@dataclass(frozen=True)
class NoiseSpec:
    """Slow-drift settings for the degraded phase scans.

    ``phase_noise_fwhm`` is the FWHM of a per-measurement Gaussian jitter on
    the round-trip phase of analyzer ``a`` (optionally ``b``).  The per-turn
    losses and the polarization contrast override the analyzer settings when
    a degraded scan is evaluated.
    """

    phase_noise_fwhm: float = 0.0
    pol_contrast_per_turn: float = 1.0
    turn_loss_a: float = 0.0
    turn_loss_b: float = 0.0
    noise_on_b: bool = False

    def __post_init__(self):
        _require(self.phase_noise_fwhm >= 0.0, "noise.phase_noise_fwhm", "must be >= 0")
        _require(0.0 < self.pol_contrast_per_turn <= 1.0,
                 "noise.pol_contrast_per_turn", "must be in (0, 1]")
        _require(0.0 <= self.turn_loss_a < 1.0, "noise.turn_loss_a", "must be in [0, 1)")
        _require(0.0 <= self.turn_loss_b < 1.0, "noise.turn_loss_b", "must be in [0, 1)")


@dataclass(frozen=True)
class RunRates:
    """Trigger-arm rate chain for the stochastic run.

    ``pair_rate_into_fibers`` is the rate of pairs coupled into the fibers;
    ``transmission_a_db`` lumps all insertion loss of the trigger arm
    (including its analyzer) as the experiment's own rate accounting does.
    """

    pair_rate_into_fibers: float = 430e3
    transmission_a_db: float = -14.0
    efficiency_trigger: float = 0.45

    def __post_init__(self):
        _require(self.pair_rate_into_fibers >= 0.0,
                 "run.pair_rate_into_fibers", "must be >= 0")
        _require(0.0 <= self.efficiency_trigger <= 1.0,
                 "run.efficiency_trigger", "must be in [0, 1]")

    @property
    def trigger_rate(self) -> float:
        return (self.pair_rate_into_fibers
                * 10.0 ** (self.transmission_a_db / 10.0)
                * self.efficiency_trigger)


@dataclass(frozen=True)
class ExperimentConfig:
    source: SourceSpec = field(default_factory=SourceSpec)
    interferometer_a: InterferometerSpec = field(
        default_factory=lambda: InterferometerSpec(
            coupler_from_power(0.9), coupler_from_power(0.9), geometry=GEOMETRY_MIRROR))
    interferometer_b: InterferometerSpec = field(
        default_factory=lambda: InterferometerSpec(
            coupler_from_power(0.9), coupler_from_power(0.9), geometry=GEOMETRY_LOOP))
    trigger: DetectorSpec = field(
        default_factory=lambda: DetectorSpec(0.45, 0.0, ROLE_TRIGGER))
    stop_main: DetectorSpec = field(
        default_factory=lambda: DetectorSpec(0.16, 15.6, ROLE_STOP_MAIN))
    stop_control: DetectorSpec = field(
        default_factory=lambda: DetectorSpec(0.18, 17.6, ROLE_STOP_CONTROL))
    gate_width: float = 50e-9
    max_turns: int | None = None  # None = auto from the tail bound
    spectral: SpectralSpec = field(default_factory=SpectralSpec)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    rates: RunRates = field(default_factory=RunRates)

    def __post_init__(self):
        _require(self.gate_width > 0.0, "gate_width", "must be > 0")
        _require(self.gate_width / self.source.repetition_period >= 1.0 - 1e-12,
                 "gate_width", "gate must cover at least one repetition period")
        if self.max_turns is not None:
            _require(self.max_turns >= 0, "max_turns", "must be >= 0")
        _require(self.trigger.role == ROLE_TRIGGER, "trigger.role", "must be 'trigger'")
        _require(self.stop_main.role == ROLE_STOP_MAIN, "stop_main.role",
                 "must be 'stop_main'")
        _require(self.stop_control.role == ROLE_STOP_CONTROL, "stop_control.role",
                 "must be 'stop_control'")

    # -- derived gate/bin quantities -------------------------------------

    def gate_capacity(self) -> int:
        """Number of repetition periods whose start fits inside the gate."""
        return int(math.floor(self.gate_width / self.source.repetition_period + 1e-9))

    def gate_bins(self) -> int:
        """Count of complete detection bins inside the gate.

        Lattice bins are centered on multiples of the repetition period; a
        bin counts only when it lies entirely inside ``[0, gate_width)``, so
        a 50 ns gate at 430 MHz holds 21 lattice points but 20 complete bins.
        """
        return max(self.gate_capacity() - 1, 0)

    def gate_center_bin(self) -> int:
        """Lattice index inside the gate where zero arrival difference sits."""
        return self.gate_capacity() // 2

    def effective_max_turns(self) -> int:
        if self.max_turns is not None:
            return self.max_turns
        return default_max_turns(self)


def default_max_turns(config: ExperimentConfig) -> int:
    """Turn cap from the geometric tail bound.

    Picks the smallest cap whose neglected per-photon probability tail is
    below ``1e-13``; the joint neglected probability is then far below the
    1e-9 conservation tolerance, and peak-ratio checks keep full precision.
    """
    gain = max(config.interferometer_a.turn_amplitude,
               config.interferometer_b.turn_amplitude)
    return max_turns_for_gain(gain)


def max_turns_for_gain(gain: float) -> int:
    if gain <= 0.0:
        return 1
    if gain >= 1.0:
        return _MAX_AUTO_TURNS
    needed = math.log(_TAIL_EPS * (1.0 - gain * gain)) / (2.0 * math.log(gain))
    return min(max(int(math.ceil(needed)), 1), _MAX_AUTO_TURNS)


def truncation_tail(gain: float, max_turns: int) -> float:
    """Upper bound on the per-photon probability left beyond the turn cap."""
    if gain <= 0.0:
        return 0.0
    if gain >= 1.0:
        return 1.0
    g2 = gain * gain
    return g2 ** (max_turns + 1) / (1.0 - g2)


def phase_from_length(delta_length: float, wavelength: float,
                      group_index: float = 1.0, double_pass: bool = False) -> float:
    """Round-trip phase change from a path-length change.

    A mirror-type analyzer traverses the fiber twice per turn
    (``double_pass=True``); a loop passes the length change once.
    """
    _require(wavelength > 0.0, "wavelength", "must be > 0")
    passes = 2.0 if double_pass else 1.0
    return TWO_PI * group_index * passes * delta_length / wavelength


# ---------------------------------------------------------------------------
# Config text grammar
# ---------------------------------------------------------------------------

_TIME_UNITS = {"s": 1.0, "ms": 1e-3, "us": 1e-6, "ns": 1e-9, "ps": 1e-12, "fs": 1e-15}
_FREQ_UNITS = {"hz": 1.0, "khz": 1e3, "mhz": 1e6, "ghz": 1e9, "thz": 1e12}
_LENGTH_UNITS = {"m": 1.0, "mm": 1e-3, "um": 1e-6, "nm": 1e-9, "pm": 1e-12}


def _parse_with_units(raw: str, units: dict[str, float], field_path: str) -> float:
    text = raw.strip()
    for suffix in sorted(units, key=len, reverse=True):
        if text.lower().endswith(suffix):
            head = text[: len(text) - len(suffix)].strip()
            if head:
                try:
                    return float(head) * units[suffix]
                except ValueError:
                    raise ConfigError(field_path, f"cannot parse quantity {raw!r}") from None
    try:
        return float(text)
    except ValueError:
        raise ConfigError(field_path, f"cannot parse quantity {raw!r}") from None


def parse_time(raw: str, field_path: str = "time") -> float:
    return _parse_with_units(raw, _TIME_UNITS, field_path)


def parse_frequency(raw: str, field_path: str = "frequency") -> float:
    return _parse_with_units(raw, _FREQ_UNITS, field_path)


def parse_length(raw: str, field_path: str = "length") -> float:
    return _parse_with_units(raw, _LENGTH_UNITS, field_path)


def _parse_float(raw: str, field_path: str) -> float:
    try:
        return float(raw.strip())
    except ValueError:
        raise ConfigError(field_path, f"cannot parse number {raw!r}") from None


def _parse_int(raw: str, field_path: str) -> int:
    text = raw.strip()
    try:
        return int(text)
    except ValueError:
        raise ConfigError(field_path, f"cannot parse integer {raw!r}") from None


def _parse_bool(raw: str, field_path: str) -> bool:
    text = raw.strip().lower()
    if text in ("true", "yes", "on", "1"):
        return True
    if text in ("false", "no", "off", "0"):
        return False
    raise ConfigError(field_path, f"cannot parse boolean {raw!r}")


# section -> key -> parse kind.  Kinds: float/int/bool/time/frequency/length/auto_int
_SCHEMA: dict[str, dict[str, str]] = {
    "source": {
        "dimension": "int",
        "repetition_period": "time",
        "repetition_rate": "frequency",
        "pair_probability_per_pulse": "float",
        "pump_phase_step": "float",
    },
    "interferometer_a": {
        "coupler1_reflectance": "float",
        "coupler2_reflectance": "float",
        "coupler1_transmittance": "float",
        "coupler2_transmittance": "float",
        "coupler1_pass_loss": "float",
        "coupler2_pass_loss": "float",
        "phase": "float",
        "turn_loss": "float",
        "pol_contrast_per_turn": "float",
    },
    "interferometer_b": {
        "coupler1_reflectance": "float",
        "coupler2_reflectance": "float",
        "coupler1_transmittance": "float",
        "coupler2_transmittance": "float",
        "coupler1_pass_loss": "float",
        "coupler2_pass_loss": "float",
        "phase": "float",
        "turn_loss": "float",
        "pol_contrast_per_turn": "float",
    },
    "detectors": {
        "gate_width": "time",
        "efficiency_trigger": "float",
        "efficiency_main": "float",
        "efficiency_control": "float",
        "dark_rate_main": "float",
        "dark_rate_control": "float",
    },
    "spectral": {
        "center_wavelength_a": "length",
        "center_wavelength_b": "length",
        "bandwidth_fwhm_a": "length",
        "bandwidth_fwhm_b": "length",
        "quadrature_points": "int",
        "length_mismatch": "length",
        "group_index": "float",
    },
    "noise": {
        "phase_noise_fwhm": "float",
        "pol_contrast_per_turn": "float",
        "turn_loss_a": "float",
        "turn_loss_b": "float",
        "noise_on_b": "bool",
    },
    "simulation": {
        "max_turns": "auto_int",
        "pair_rate_into_fibers": "frequency",
        "transmission_a_db": "float",
    },
}

_PARSERS = {
    "float": _parse_float,
    "int": _parse_int,
    "bool": _parse_bool,
    "time": parse_time,
    "frequency": parse_frequency,
    "length": parse_length,
}


def valid_config_keys() -> list[str]:
    return [f"{section}.{key}" for section, keys in _SCHEMA.items() for key in keys]


def _coerce(section: str, key: str, raw: str):
    path = f"{section}.{key}"
    if section not in _SCHEMA or key not in _SCHEMA[section]:
        raise ConfigError(path, "unknown key; valid keys: " + ", ".join(valid_config_keys()))
    kind = _SCHEMA[section][key]
    if kind == "auto_int":
        if raw.strip().lower() == "auto":
            return None
        return _parse_int(raw, path)
    return _PARSERS[kind](raw, path)


def parse_config_text(text: str) -> tuple[ExperimentConfig, list[str]]:
    """Parse and validate a config; returns (config, warnings)."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("config", f"syntax error: {exc}") from None

    values: dict[str, dict[str, object]] = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(section, "unknown section; valid sections: "
                              + ", ".join(_SCHEMA))
        values[section] = {}
        for key, raw in parser.items(section):
            values[section][key] = _coerce(section, key, raw)
    return build_config(values)


def build_config(values: dict[str, dict[str, object]]) -> tuple[ExperimentConfig, list[str]]:
    """Assemble an :class:`ExperimentConfig` from coerced section/key values."""
    def get(section: str, key: str, default):
        return values.get(section, {}).get(key, default)

    src = values.get("source", {})
    if "repetition_period" in src and "repetition_rate" in src:
        raise ConfigError("source.repetition_period",
                          "give either repetition_period or repetition_rate, not both")
    if "repetition_rate" in src:
        rate = src["repetition_rate"]
        _require(rate > 0, "source.repetition_rate", "must be > 0")
        period = 1.0 / rate
    else:
        period = src.get("repetition_period", 1.0 / 430e6)

    source = SourceSpec(
        dimension=src.get("dimension", 20),
        repetition_period=period,
        pair_probability_per_pulse=src.get("pair_probability_per_pulse", 0.01),
        pump_phase_step=src.get("pump_phase_step", 0.0),
    )

    def coupler(section: str, index: int) -> CouplerSpec:
        reflectance = get(section, f"coupler{index}_reflectance", 0.9)
        pass_loss = get(section, f"coupler{index}_pass_loss", 0.0)
        transmittance = get(section, f"coupler{index}_transmittance", None)
        if transmittance is None:
            return coupler_from_power(reflectance, pass_loss)
        # explicit transmittance keeps serialize->parse stable to the ulp
        return CouplerSpec(math.sqrt(reflectance), math.sqrt(transmittance), pass_loss)

    def interferometer(section: str, geometry: str) -> InterferometerSpec:
        return InterferometerSpec(
            coupler1=coupler(section, 1),
            coupler2=coupler(section, 2),
            phase=get(section, "phase", 0.0),
            turn_loss=get(section, "turn_loss", 0.0),
            pol_contrast_per_turn=get(section, "pol_contrast_per_turn", 1.0),
            geometry=geometry,
        )

    config = ExperimentConfig(
        source=source,
        interferometer_a=interferometer("interferometer_a", GEOMETRY_MIRROR),
        interferometer_b=interferometer("interferometer_b", GEOMETRY_LOOP),
        trigger=DetectorSpec(get("detectors", "efficiency_trigger", 0.45), 0.0, ROLE_TRIGGER),
        stop_main=DetectorSpec(get("detectors", "efficiency_main", 0.16),
                               get("detectors", "dark_rate_main", 15.6), ROLE_STOP_MAIN),
        stop_control=DetectorSpec(get("detectors", "efficiency_control", 0.18),
                                  get("detectors", "dark_rate_control", 17.6),
                                  ROLE_STOP_CONTROL),
        gate_width=get("detectors", "gate_width", 50e-9),
        max_turns=get("simulation", "max_turns", None),
        spectral=SpectralSpec(
            center_wavelength_a=get("spectral", "center_wavelength_a", 810e-9),
            center_wavelength_b=get("spectral", "center_wavelength_b", 1550e-9),
            bandwidth_fwhm_a=get("spectral", "bandwidth_fwhm_a", 0.0),
            bandwidth_fwhm_b=get("spectral", "bandwidth_fwhm_b", 0.0),
            quadrature_points=get("spectral", "quadrature_points", 1),
            length_mismatch=get("spectral", "length_mismatch", 0.0),
            group_index=get("spectral", "group_index", 1.47),
        ),
        noise=NoiseSpec(
            phase_noise_fwhm=get("noise", "phase_noise_fwhm", 0.0),
            pol_contrast_per_turn=get("noise", "pol_contrast_per_turn", 1.0),
            turn_loss_a=get("noise", "turn_loss_a", 0.0),
            turn_loss_b=get("noise", "turn_loss_b", 0.0),
            noise_on_b=get("noise", "noise_on_b", False),
        ),
        rates=RunRates(
            pair_rate_into_fibers=get("simulation", "pair_rate_into_fibers", 430e3),
            transmission_a_db=get("simulation", "transmission_a_db", -14.0),
            efficiency_trigger=get("detectors", "efficiency_trigger", 0.45),
        ),
    )
    return config, config_warnings(config)


def config_warnings(config: ExperimentConfig) -> list[str]:
    warnings: list[str] = []
    d, p = config.source.dimension, config.source.pair_probability_per_pulse
    if d * p > 0.25:
        warnings.append(
            f"source: dimension * pair_probability_per_pulse = {d * p:.3g}; the "
            "single-pair-per-train assumption needs this to stay well below 1")
    if d == 1:
        warnings.append("source: dimension = 1, no inter-bin interference possible")
    if config.max_turns is not None:
        gain = max(config.interferometer_a.turn_amplitude,
                   config.interferometer_b.turn_amplitude)
        tail = truncation_tail(gain, config.max_turns)
        if tail > 1e-9:
            warnings.append(
                f"simulation.max_turns: truncation tail bound {tail:.2g} exceeds 1e-9; "
                f"suggested max_turns >= {max_turns_for_gain(gain)}")
    return warnings


def load_config(path) -> tuple[ExperimentConfig, list[str]]:
    with open(path, "r", encoding="utf-8") as handle:
        return parse_config_text(handle.read())


def apply_overrides(config: ExperimentConfig,
                    overrides: list[str]) -> tuple[ExperimentConfig, list[str]]:
    """Apply ``section.key=value`` overrides on top of a validated config."""
    values = _config_values(config)
    for item in overrides:
        if "=" not in item:
            raise ConfigError("override", f"expected section.key=value, got {item!r}")
        dotted, _, raw = item.partition("=")
        dotted = dotted.strip()
        if "." not in dotted:
            raise ConfigError("override", f"expected section.key=value, got {item!r}")
        section, _, key = dotted.partition(".")
        values.setdefault(section, {})[key] = _coerce(section, key, raw)
    return build_config(values)


def _config_values(config: ExperimentConfig) -> dict[str, dict[str, object]]:
    def interferometer_values(spec: InterferometerSpec) -> dict[str, object]:
        return {
            "coupler1_reflectance": spec.coupler1.reflection ** 2,
            "coupler2_reflectance": spec.coupler2.reflection ** 2,
            "coupler1_transmittance": spec.coupler1.transmission ** 2,
            "coupler2_transmittance": spec.coupler2.transmission ** 2,
            "coupler1_pass_loss": spec.coupler1.pass_loss,
            "coupler2_pass_loss": spec.coupler2.pass_loss,
            "phase": spec.phase,
            "turn_loss": spec.turn_loss,
            "pol_contrast_per_turn": spec.pol_contrast_per_turn,
        }

    return {
        "source": {
            "dimension": config.source.dimension,
            "repetition_period": config.source.repetition_period,
            "pair_probability_per_pulse": config.source.pair_probability_per_pulse,
            "pump_phase_step": config.source.pump_phase_step,
        },
        "interferometer_a": interferometer_values(config.interferometer_a),
        "interferometer_b": interferometer_values(config.interferometer_b),
        "detectors": {
            "gate_width": config.gate_width,
            "efficiency_trigger": config.trigger.efficiency,
            "efficiency_main": config.stop_main.efficiency,
            "efficiency_control": config.stop_control.efficiency,
            "dark_rate_main": config.stop_main.dark_rate,
            "dark_rate_control": config.stop_control.dark_rate,
        },
        "spectral": {
            "center_wavelength_a": config.spectral.center_wavelength_a,
            "center_wavelength_b": config.spectral.center_wavelength_b,
            "bandwidth_fwhm_a": config.spectral.bandwidth_fwhm_a,
            "bandwidth_fwhm_b": config.spectral.bandwidth_fwhm_b,
            "quadrature_points": config.spectral.quadrature_points,
            "length_mismatch": config.spectral.length_mismatch,
            "group_index": config.spectral.group_index,
        },
        "noise": {
            "phase_noise_fwhm": config.noise.phase_noise_fwhm,
            "pol_contrast_per_turn": config.noise.pol_contrast_per_turn,
            "turn_loss_a": config.noise.turn_loss_a,
            "turn_loss_b": config.noise.turn_loss_b,
            "noise_on_b": config.noise.noise_on_b,
        },
        "simulation": {
            "max_turns": config.max_turns if config.max_turns is not None else None,
            "pair_rate_into_fibers": config.rates.pair_rate_into_fibers,
            "transmission_a_db": config.rates.transmission_a_db,
        },
    }


def config_to_text(config: ExperimentConfig) -> str:
    """Serialize to canonical config text; parsing it back is the identity."""
    out = io.StringIO()
    for section, keys in _config_values(config).items():
        out.write(f"[{section}]\n")
        for key, value in keys.items():
            if key == "max_turns" and value is None:
                out.write("max_turns = auto\n")
            elif isinstance(value, bool):
                out.write(f"{key} = {'true' if value else 'false'}\n")
            elif isinstance(value, float):
                out.write(f"{key} = {value!r}\n")
            else:
                out.write(f"{key} = {value}\n")
        out.write("\n")
    return out.getvalue()


def config_hash(config: ExperimentConfig) -> str:
    return hashlib.sha256(config_to_text(config).encode("utf-8")).hexdigest()[:16]


def with_phases(config: ExperimentConfig, phase_a: float | None = None,
                phase_b: float | None = None) -> ExperimentConfig:
    """Copy of the config with analyzer round-trip phases replaced."""
    updated = config
    if phase_a is not None:
        updated = replace(updated, interferometer_a=replace(
            updated.interferometer_a, phase=phase_a))
    if phase_b is not None:
        updated = replace(updated, interferometer_b=replace(
            updated.interferometer_b, phase=phase_b))
    return updated
