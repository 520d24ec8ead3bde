"""Stochastic emulation of the acquisition chain.

Trigger clicks are a Poisson process on the pulse lattice, thinned through
the lumped rate chain (pairs into fibers, trigger-arm insertion in dB,
trigger efficiency).  Conditional on a trigger click, the joint outcome
(arrival-difference peak and stop channel) is sampled from the exact-engine
distribution — the interference physics is owned by one module and this
layer only exercises the detection chain.  Stops are thinned by detector
efficiency, dark counts are injected as per-gate Poisson processes uniform
inside the gate, and a start/stop record is emitted per gate.

Determinism: gates are generated in fixed-duration slices with per-slice
seeds derived from ``(seed, slice_index)``, and slices are assembled in
order, so the stream is byte-identical for any worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import chi2 as chi2_dist

from .amplitudes import evolve_state, peak_distribution
from .model import (CHANNEL_CONTROL, CHANNEL_MAIN, ExperimentConfig, RunRates,
                    config_hash)

_SLICE_SECONDS = 0.15
_CHANNELS = (CHANNEL_MAIN, CHANNEL_CONTROL)


class MultiPairError(ValueError):
    """Rate chain implies more than one expected pair per pulse."""


@dataclass(frozen=True)
class TdcEvent:
    """One gate: the trigger time and the stop delays, in nanoseconds.

    The stream layer works in nanoseconds end to end so that
    ``write -> read -> write`` reproduces files byte for byte.
    """

    start_ns: float
    stops: tuple[tuple[str, float], ...]  # (channel, delay_ns)


@dataclass
class TdcEventStream:
    events: list[TdcEvent] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def stop_count(self, channel: str) -> int:
        return sum(1 for ev in self.events for ch, _ in ev.stops if ch == channel)

    def write(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8") as handle:
            for key in sorted(self.meta):
                handle.write(f"# {key}={self.meta[key]!r}\n")
            for ev in self.events:
                stops = ";".join(f"{ch}:{delay!r}" for ch, delay in ev.stops)
                handle.write(f"{ev.start_ns!r},{stops}\n")

    @classmethod
    def read(cls, path) -> "TdcEventStream":
        meta: dict = {}
        events: list[TdcEvent] = []
        with Path(path).open("r", encoding="utf-8") as handle:
            for line in handle:
                line = line.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    key, _, value = line[1:].partition("=")
                    meta[key.strip()] = _parse_meta(value.strip())
                    continue
                start_text, _, stops_text = line.partition(",")
                stops = []
                if stops_text:
                    for item in stops_text.split(";"):
                        ch, _, delay = item.partition(":")
                        stops.append((ch, float(delay)))
                events.append(TdcEvent(float(start_text), tuple(stops)))
        return cls(events=events, meta=meta)


def _parse_meta(text: str):
    if text.startswith("'") and text.endswith("'"):
        return text[1:-1]
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    return text


@dataclass(frozen=True)
class RunSummary:
    duration: float
    singles_trigger: int
    gate_rate: float
    stops_main: int
    stops_control: int
    config_hash: str
    seed: int

    def to_text(self) -> str:
        lines = [f"duration_s = {self.duration!r}",
                 f"singles_trigger = {self.singles_trigger}",
                 f"gate_rate_hz = {self.gate_rate!r}",
                 f"stops_main = {self.stops_main}",
                 f"stops_control = {self.stops_control}",
                 f"config_hash = {self.config_hash}",
                 f"seed = {self.seed}"]
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class StopDistribution:
    """Conditional joint-outcome distribution given a trigger click."""

    peaks: np.ndarray      # arrival-difference indices
    channels: np.ndarray   # 0 = main, 1 = control
    probabilities: np.ndarray
    none_probability: float  # stop photon absorbed (lossy analyzers)

    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.probabilities)


def conditional_stop_distribution(config: ExperimentConfig,
                                  use_imperfections: bool = False) -> StopDistribution:
    """Outcome distribution of the stop photon, conditional on a trigger.

    With ``use_imperfections`` the per-peak probabilities are first averaged
    over the configured spectral quadrature and phase jitter (slow drift
    averages at probability level across a run).
    """
    if use_imperfections:
        from .imperfections import apply_noise, degraded_peak_probabilities
        peak_maps = degraded_peak_probabilities(config)
        marginal_config = apply_noise(config, config.noise)
    else:
        table = evolve_state(config)
        peak_maps = {ch: peak_distribution(table, ch).peaks for ch in _CHANNELS}
        marginal_config = config

    spec = marginal_config.interferometer_a
    r1, t1 = spec.coupler1.reflection, spec.coupler1.transmission
    r2, t2 = spec.coupler2.reflection, spec.coupler2.transmission
    gain = (r1 * r2 * (1.0 - spec.turn_loss)) ** 2
    trigger_marginal = (t1 * t2) ** 2 / (1.0 - gain) if gain < 1.0 else 1.0

    peaks, channels, probs = [], [], []
    for idx, channel in enumerate(_CHANNELS):
        for n, value in sorted(peak_maps[channel].items()):
            peaks.append(n)
            channels.append(idx)
            probs.append(value / trigger_marginal)
    probabilities = np.asarray(probs)
    none_probability = max(0.0, 1.0 - float(probabilities.sum()))
    return StopDistribution(np.asarray(peaks), np.asarray(channels),
                            probabilities, none_probability)


def _simulate_slice(slice_index: int, slice_slots: int, slot_offset: int,
                    config: ExperimentConfig, dist: StopDistribution,
                    seed: int) -> list[TdcEvent]:
    rng = np.random.default_rng([seed, slice_index])
    period = config.source.repetition_period
    period_ns = period * 1e9
    gate_ns = config.gate_width * 1e9
    center = config.gate_center_bin()
    trigger_rate = config.rates.trigger_rate

    n_gates = int(rng.poisson(trigger_rate * slice_slots * period))
    slots = np.sort(rng.integers(0, slice_slots, size=n_gates))
    # outcome per gate, then efficiency thinning, then dark counts
    u = rng.random(n_gates)
    cum = dist.cumulative()
    outcome = np.searchsorted(cum, u)  # == len(cum) -> absorbed, no true stop
    eff = np.array([config.stop_main.efficiency, config.stop_control.efficiency])
    detected = rng.random(n_gates)
    dark_rates = np.array([config.stop_main.dark_rate, config.stop_control.dark_rate])
    dark_counts = rng.poisson(dark_rates * config.gate_width, size=(n_gates, 2))
    dark_delays = rng.random(int(dark_counts.sum())) * gate_ns

    events: list[TdcEvent] = []
    dark_pos = 0
    for g in range(n_gates):
        start_ns = (slot_offset + int(slots[g])) * period_ns
        stops: list[tuple[str, float]] = []
        o = outcome[g]
        if o < dist.peaks.size:
            channel_idx = int(dist.channels[o])
            if detected[g] < eff[channel_idx]:
                delay_ns = (int(dist.peaks[o]) + center) * period_ns
                if 0.0 <= delay_ns < gate_ns:
                    stops.append((_CHANNELS[channel_idx], delay_ns))
        for channel_idx in (0, 1):
            for _ in range(int(dark_counts[g, channel_idx])):
                stops.append((_CHANNELS[channel_idx], float(dark_delays[dark_pos])))
                dark_pos += 1
        stops.sort(key=lambda item: (item[1], item[0]))
        events.append(TdcEvent(start_ns, tuple(stops)))
    return events


def simulate_run(config: ExperimentConfig, rates: RunRates | None = None,
                 duration: float = 1.0, seed: int = 0, workers: int = 1,
                 use_imperfections: bool = False,
                 scan_coordinate: float | None = None
                 ) -> tuple[TdcEventStream, RunSummary]:
    """Simulate gated start/stop acquisition for ``duration`` seconds."""
    if duration <= 0.0:
        raise ValueError("duration must be > 0")
    if rates is not None:
        from dataclasses import replace
        config = replace(config, rates=rates)
    period = config.source.repetition_period
    if config.rates.pair_rate_into_fibers * period > 1.0:
        raise MultiPairError(
            "pair rate implies more than one expected pair per pulse; the "
            "single-pair model does not apply")

    dist = conditional_stop_distribution(config, use_imperfections=use_imperfections)

    total_slots = int(math.floor(duration / period))
    slots_per_slice = max(int(round(_SLICE_SECONDS / period)), 1)
    n_slices = max(int(math.ceil(total_slots / slots_per_slice)), 1)

    def job(s: int) -> list[TdcEvent]:
        offset = s * slots_per_slice
        count = min(slots_per_slice, total_slots - offset)
        if count <= 0:
            return []
        return _simulate_slice(s, count, offset, config, dist, seed)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(job, range(n_slices)))
    else:
        chunks = [job(s) for s in range(n_slices)]

    events = [ev for chunk in chunks for ev in chunk]
    digest = config_hash(config)
    meta = {
        "config_hash": digest,
        "seed": seed,
        "duration_s": duration,
        "period_ns": period * 1e9,
        "gate_width_ns": config.gate_width * 1e9,
        "center_bin": config.gate_center_bin(),
        "gates": len(events),
    }
    if scan_coordinate is not None:
        meta["scan_coordinate"] = float(scan_coordinate)
    stream = TdcEventStream(events=events, meta=meta)
    summary = RunSummary(
        duration=duration,
        singles_trigger=len(events),
        gate_rate=len(events) / duration,
        stops_main=stream.stop_count(CHANNEL_MAIN),
        stops_control=stream.stop_count(CHANNEL_CONTROL),
        config_hash=digest,
        seed=seed,
    )
    return stream, summary


# ---------------------------------------------------------------------------
# Goodness of fit against the exact distribution
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FitReport:
    chi_square: float
    dof: int
    p_value: float
    gates: int
    z_scores: dict[tuple[str, int], float]

    def to_text(self) -> str:
        lines = [f"chi_square = {self.chi_square!r}",
                 f"dof = {self.dof}",
                 f"p_value = {self.p_value!r}",
                 f"gates = {self.gates}"]
        for (channel, n), z in sorted(self.z_scores.items()):
            lines.append(f"z[{channel},{n:+d}] = {z!r}")
        return "\n".join(lines) + "\n"


def empirical_vs_exact(stream: TdcEventStream, config: ExperimentConfig,
                       use_imperfections: bool = False) -> FitReport:
    """Pearson chi-square of the observed stop histogram against the model.

    Expected counts per lattice bin combine the conditional stop
    distribution, the stop efficiencies and the dark rates.  Bins with an
    expectation below 5 are pooled per channel.  Refuses streams whose
    config hash does not match.
    """
    digest = config_hash(config)
    if stream.meta.get("config_hash") != digest:
        raise ValueError("stream was produced with a different config "
                         f"(hash {stream.meta.get('config_hash')!r} != {digest!r})")

    gates = int(stream.meta.get("gates", len(stream.events)))
    period = config.source.repetition_period
    period_ns = period * 1e9
    center = config.gate_center_bin()
    capacity = config.gate_capacity()
    dist = conditional_stop_distribution(config, use_imperfections=use_imperfections)
    eff = {CHANNEL_MAIN: config.stop_main.efficiency,
           CHANNEL_CONTROL: config.stop_control.efficiency}
    dark = {CHANNEL_MAIN: config.stop_main.dark_rate,
            CHANNEL_CONTROL: config.stop_control.dark_rate}

    observed: dict[tuple[str, int], int] = {}
    for ev in stream.events:
        for channel, delay_ns in ev.stops:
            m = int(round(delay_ns / period_ns))
            if 1 <= m <= capacity - 1:
                key = (channel, m - center)
                observed[key] = observed.get(key, 0) + 1

    expected: dict[tuple[str, int], float] = {}
    for channel in _CHANNELS:
        for m in range(1, capacity):
            expected[(channel, m - center)] = gates * dark[channel] * period
    for n, ch_idx, p in zip(dist.peaks.tolist(), dist.channels.tolist(),
                            dist.probabilities.tolist()):
        channel = _CHANNELS[ch_idx]
        key = (channel, int(n))
        if key in expected:
            expected[key] += gates * p * eff[channel]

    z_scores = {key: (observed.get(key, 0) - exp) / math.sqrt(exp)
                for key, exp in expected.items() if exp > 0}

    chi_square = 0.0
    dof = 0
    for channel in _CHANNELS:
        pool_obs, pool_exp = 0.0, 0.0
        for key, exp in expected.items():
            if key[0] != channel:
                continue
            obs = observed.get(key, 0)
            if exp >= 5.0:
                chi_square += (obs - exp) ** 2 / exp
                dof += 1
            else:
                pool_obs += obs
                pool_exp += exp
        if pool_exp > 0.0:
            chi_square += (pool_obs - pool_exp) ** 2 / pool_exp
            dof += 1

    p_value = float(chi2_dist.sf(chi_square, dof)) if dof > 0 else 1.0
    return FitReport(chi_square=chi_square, dof=dof, p_value=p_value,
                     gates=gates, z_scores=z_scores)
