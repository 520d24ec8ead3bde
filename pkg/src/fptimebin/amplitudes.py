"""Exact finite-dimension two-photon amplitude engine.

A pair created in bin ``j`` evolves through both analyzers; a path is labeled
by the pair's creation bin and the two round-trip counts ``(k_a, k_b)``.  Its
amplitude is the product of the source amplitude for bin ``j`` and one
single-photon path amplitude per analyzer.  Paths sharing both absolute exit
times are indistinguishable and are summed coherently; different exit times
are resolved by the detectors and add incoherently.

Single-photon path amplitudes per analyzer (reflection real, transmission
``1j*t``, per-turn attenuation ``1 - turn_loss``, round-trip phase ``phi``):

* forward/main exit, ``k`` turns: ``(1j*t1)(1j*t2) * (r1*r2)**k * exp(1j*k*phi)``
* secondary exit (back reflection of the mirror cavity, or the control port
  of the loop), ``k = 0``: ``r1``; ``k >= 1``:
  ``(1j*t1)**2 * r2 * (r1*r2)**(k-1) * exp(1j*k*phi)``

The common first-passage factors are global phases and are kept only so that
the relative sign between the direct reflection and the multi-turn secondary
paths is exact; this is what makes the lossless evolution unitary.

Polarization misalignment is a per-turn contrast factor ``g``: a path with
``k_a + k_b`` total turns keeps an interfering (aligned) amplitude damped by
``g**(k_a + k_b)`` while the remaining per-path probability is accumulated in
an incoherent, phase-insensitive bucket.  Counts are conserved per path; the
bookkeeping is exact for ``g = 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .csvio import write_csv
from .model import (CHANNEL_CONTROL, CHANNEL_MAIN, GEOMETRY_LOOP,
                    GEOMETRY_MIRROR, ExperimentConfig, InterferometerSpec,
                    config_hash, truncation_tail, with_phases)

CHANNEL_BACK = "back"

_EXITS = (CHANNEL_MAIN, CHANNEL_CONTROL, CHANNEL_BACK)


class ChannelError(ValueError):
    """Exit channel not defined for the analyzer geometry."""


class TruncationError(ValueError):
    """Configured turn cap leaves too much probability unaccounted."""

    def __init__(self, bound: float, suggested: int):
        self.bound = bound
        self.suggested_max_turns = suggested
        super().__init__(
            f"turn-cap tail bound {bound:.3g} exceeds 1e-6 of total probability; "
            f"use max_turns >= {suggested}")


def _secondary_channel(spec: InterferometerSpec) -> str:
    return CHANNEL_BACK if spec.geometry == GEOMETRY_MIRROR else CHANNEL_CONTROL


def path_amplitude(spec: InterferometerSpec, turns: int, exit: str) -> complex:
    """Amplitude of one single-photon path with ``turns`` round trips."""
    if exit not in _EXITS:
        raise ChannelError(f"unknown exit channel {exit!r}")
    if turns < 0:
        raise ValueError("turns must be >= 0")
    if exit != CHANNEL_MAIN and exit != _secondary_channel(spec):
        raise ChannelError(
            f"{exit!r} exit is not defined for a {spec.geometry}-type analyzer")

    r1, t1 = spec.coupler1.reflection, spec.coupler1.transmission
    r2, t2 = spec.coupler2.reflection, spec.coupler2.transmission
    damp = (1.0 - spec.turn_loss) ** turns
    phase = np.exp(1j * spec.phase * turns)
    if exit == CHANNEL_MAIN:
        return (1j * t1) * (1j * t2) * (r1 * r2) ** turns * damp * phase
    if turns == 0:
        return complex(r1)
    return (1j * t1) ** 2 * r2 * (r1 * r2) ** (turns - 1) * damp * phase


def _amplitude_arrays(spec: InterferometerSpec, max_turns: int,
                      phase_offset_per_turn: float = 0.0
                      ) -> tuple[np.ndarray, np.ndarray]:
    """(main, secondary) amplitude vectors over turn count ``0..max_turns``."""
    k = np.arange(max_turns + 1)
    r1, t1 = spec.coupler1.reflection, spec.coupler1.transmission
    r2, t2 = spec.coupler2.reflection, spec.coupler2.transmission
    damp = (1.0 - spec.turn_loss) ** k
    phase = np.exp(1j * (spec.phase + phase_offset_per_turn) * k)
    main = -(t1 * t2) * (r1 * r2) ** k * damp * phase
    secondary = np.empty(max_turns + 1, dtype=complex)
    secondary[0] = r1
    if max_turns >= 1:
        kk = k[1:]
        secondary[1:] = (-(t1 * t1) * r2 * (r1 * r2) ** (kk - 1)
                         * damp[1:] * phase[1:])
    return main, secondary


@dataclass(frozen=True)
class JointAmplitudeTable:
    """Coherent joint amplitudes for every detected joint outcome.

    ``amp_main[i, j]`` is the amplitude for photon a exiting toward its
    detector in bin ``i + 1`` and photon b exiting toward the main stop
    detector in bin ``j + 1``; ``amp_control`` likewise for the control
    port.  ``incoh_*`` carry the phase-insensitive per-outcome probability
    from polarization contrast loss (all zeros for unit contrast).  Outcomes
    where photon a leaves backward are undetected and only their total
    probability is tracked.
    """

    amp_main: np.ndarray
    amp_control: np.ndarray
    incoh_main: np.ndarray
    incoh_control: np.ndarray
    back_probability: float
    dimension: int
    max_turns: int
    phase_a: float
    phase_b: float
    config_hash: str
    truncation_bound: float

    @property
    def size(self) -> int:
        return self.amp_main.shape[0]

    def channel_probability(self, channel: str) -> np.ndarray:
        amp, inc = self._channel_arrays(channel)
        return np.abs(amp) ** 2 + inc

    def _channel_arrays(self, channel: str) -> tuple[np.ndarray, np.ndarray]:
        if channel == CHANNEL_MAIN:
            return self.amp_main, self.incoh_main
        if channel == CHANNEL_CONTROL:
            return self.amp_control, self.incoh_control
        raise ChannelError(f"joint table holds channels 'main' and 'control', not {channel!r}")

    def total_probability(self) -> float:
        return float(self.channel_probability(CHANNEL_MAIN).sum()
                     + self.channel_probability(CHANNEL_CONTROL).sum()
                     + self.back_probability)

    def to_csv(self, path, threshold: float = 0.0) -> None:
        rows = []
        for channel in (CHANNEL_MAIN, CHANNEL_CONTROL):
            amp, _ = self._channel_arrays(channel)
            idx_a, idx_b = np.nonzero(np.abs(amp) > threshold)
            for i, j in zip(idx_a.tolist(), idx_b.tolist()):
                value = amp[i, j]
                rows.append((i + 1, j + 1, channel, float(value.real), float(value.imag)))
        write_csv(path, ["exit_time_a", "exit_time_b", "channel", "re", "im"], rows,
                  comments={"config_hash": self.config_hash,
                            "phase_a": self.phase_a, "phase_b": self.phase_b,
                            "dimension": self.dimension, "max_turns": self.max_turns})


def evolve_state(config: ExperimentConfig, phase_a: float | None = None,
                 phase_b: float | None = None,
                 phase_offset_a: float = 0.0, phase_offset_b: float = 0.0,
                 strict_truncation: bool = True) -> JointAmplitudeTable:
    """Evolve the source state through both analyzers.

    ``phase_a``/``phase_b`` override the configured round-trip phases (used
    by phase scans); the ``phase_offset_*`` arguments are added per turn (used
    by the spectral quadrature).  Paths are accumulated in increasing
    creation-bin order with a fixed summation order, so results are
    bit-identical run to run.
    """
    if phase_a is not None or phase_b is not None:
        config = with_phases(config, phase_a, phase_b)

    spec_a, spec_b = config.interferometer_a, config.interferometer_b
    dim = config.source.dimension
    cap = config.effective_max_turns()

    tail = max(truncation_tail(spec_a.turn_amplitude, cap),
               truncation_tail(spec_b.turn_amplitude, cap))
    if strict_truncation and tail > 1e-6:
        from .model import max_turns_for_gain
        gain = max(spec_a.turn_amplitude, spec_b.turn_amplitude)
        raise TruncationError(tail, max_turns_for_gain(gain))

    a_main, a_sec = _amplitude_arrays(spec_a, cap, phase_offset_a)
    b_main, b_sec = _amplitude_arrays(spec_b, cap, phase_offset_b)

    k = np.arange(cap + 1)
    contrast_a = spec_a.pol_contrast_per_turn ** k
    contrast_b = spec_b.pol_contrast_per_turn ** k
    with_contrast = (spec_a.pol_contrast_per_turn < 1.0
                     or spec_b.pol_contrast_per_turn < 1.0)

    magnitude = config.source.bin_magnitude()
    source = magnitude * np.exp(
        1j * config.source.pump_phase_step * np.arange(1, dim + 1))

    size = dim + cap
    pairs = {
        CHANNEL_MAIN: (a_main, b_main),
        CHANNEL_CONTROL: (a_main, b_sec),
        "back_main": (a_sec, b_main),
        "back_control": (a_sec, b_sec),
    }

    coherent: dict[str, np.ndarray] = {}
    incoherent: dict[str, np.ndarray] = {}
    for name, (vec_a, vec_b) in pairs.items():
        outer = np.outer(vec_a * contrast_a, vec_b * contrast_b)
        coh = np.zeros((size, size), dtype=complex)
        for j in range(dim):
            coh[j:j + cap + 1, j:j + cap + 1] += source[j] * outer
        coherent[name] = coh
        if with_contrast:
            residue = (np.outer(np.abs(vec_a) ** 2, np.abs(vec_b) ** 2)
                       - np.abs(outer) ** 2)
            inc = np.zeros((size, size), dtype=float)
            for j in range(dim):
                inc[j:j + cap + 1, j:j + cap + 1] += (magnitude ** 2) * residue
            incoherent[name] = inc
        else:
            incoherent[name] = np.zeros((size, size), dtype=float)

    back_probability = float(
        (np.abs(coherent["back_main"]) ** 2 + incoherent["back_main"]).sum()
        + (np.abs(coherent["back_control"]) ** 2 + incoherent["back_control"]).sum())

    return JointAmplitudeTable(
        amp_main=coherent[CHANNEL_MAIN],
        amp_control=coherent[CHANNEL_CONTROL],
        incoh_main=incoherent[CHANNEL_MAIN],
        incoh_control=incoherent[CHANNEL_CONTROL],
        back_probability=back_probability,
        dimension=dim,
        max_turns=cap,
        phase_a=spec_a.phase,
        phase_b=spec_b.phase,
        config_hash=config_hash(config),
        truncation_bound=tail,
    )


# ---------------------------------------------------------------------------
# Peak distributions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PeakDistribution:
    """Coincidence probability per arrival-difference peak.

    Peak index ``n`` counts lattice steps of the arrival difference
    (stop minus trigger): 0 for equal turn counts, positive when photon b
    lags.  ``edges='in'`` keeps every exit bin of the finite pulse train;
    ``edges='out'`` keeps only exit bins whose interfering-path depth is the
    maximum the train allows, which removes train-boundary effects.
    """

    peaks: dict[int, float]
    channel: str
    phase_a: float
    phase_b: float
    edges: str = "in"

    def probability(self, n: int) -> float:
        return self.peaks.get(n, 0.0)

    def ratio(self, n: int, m: int) -> float:
        return self.probability(n) / self.probability(m)

    def total(self) -> float:
        return float(sum(self.peaks.values()))

    def indices(self) -> list[int]:
        return sorted(self.peaks)


def peak_distribution(table: JointAmplitudeTable, channel: str,
                      edges: str = "in") -> PeakDistribution:
    """Sum joint-outcome probabilities at fixed arrival difference.

    Coherent summation happened inside :func:`evolve_state`; outcomes with
    different absolute exit times are distinguishable, so each diagonal is an
    incoherent sum.
    """
    if edges not in ("in", "out"):
        raise ValueError("edges must be 'in' or 'out'")
    prob = table.channel_probability(channel)
    cap = table.max_turns
    peaks: dict[int, float] = {}
    if edges == "out":
        depth = min(cap, table.dimension - 1)
        rows = np.arange(depth, table.dimension)
    else:
        rows = None
    for n in range(-cap, cap + 1):
        diag = np.diagonal(prob, offset=n)
        if rows is None:
            value = float(diag.sum())
        else:
            offset = max(0, -n)
            sel = rows - offset
            sel = sel[(sel >= 0) & (sel < diag.size)]
            value = float(diag[sel].sum())
        if value != 0.0:
            peaks[n] = value
    return PeakDistribution(peaks=peaks, channel=channel,
                            phase_a=table.phase_a, phase_b=table.phase_b,
                            edges=edges)


def peaks_to_csv(path, dist_in: PeakDistribution, dist_out: PeakDistribution,
                 comments: dict) -> None:
    indices = sorted(set(dist_in.indices()) | set(dist_out.indices()))
    rows = [(n, dist_in.probability(n), dist_out.probability(n)) for n in indices]
    write_csv(path, ["peak", "probability_edge_in", "probability_edge_out"], rows,
              comments=comments)


# ---------------------------------------------------------------------------
# Phase scans
# ---------------------------------------------------------------------------

WINDOW_CENTRAL = "central"
WINDOW_CENTRAL3 = "central3"
WINDOW_FULL = "full"


def resolve_window(window, config: ExperimentConfig) -> list[int]:
    """Resolve a named or explicit peak window against the detection gate."""
    if isinstance(window, str):
        name = window.lower()
        center = config.gate_center_bin()
        if name == WINDOW_CENTRAL:
            return [0]
        if name == WINDOW_CENTRAL3:
            return [-1, 0, 1]
        if name == WINDOW_FULL:
            return list(range(1 - center, config.gate_capacity() - center))
        raise ValueError(f"unknown window {window!r}; use central, central3 or full")
    indices = sorted(set(int(n) for n in window))
    if not indices:
        raise ValueError("window must contain at least one peak index")
    return indices


@dataclass(frozen=True)
class PhaseScanCurve:
    """Windowed coincidence weight versus analyzer phase sum."""

    phase: np.ndarray
    value: np.ndarray
    stderr: np.ndarray | None = None
    channel: str = CHANNEL_MAIN
    window: str = WINDOW_FULL
    meta: dict = field(default_factory=dict)

    def normalized(self) -> "PhaseScanCurve":
        peak = float(np.max(self.value))
        scale = 1.0 / peak if peak > 0 else 1.0
        return PhaseScanCurve(
            phase=self.phase, value=self.value * scale,
            stderr=None if self.stderr is None else self.stderr * scale,
            channel=self.channel, window=self.window, meta=dict(self.meta))

    def visibility(self) -> float:
        top, bottom = float(np.max(self.value)), float(np.min(self.value))
        if top + bottom == 0.0:
            return 0.0
        return (top - bottom) / (top + bottom)

    def to_csv(self, path, comments: dict | None = None) -> None:
        merged = {"channel": self.channel, "window": str(self.window)}
        merged.update(self.meta)
        merged.update(comments or {})
        if self.stderr is None:
            rows = zip(self.phase.tolist(), self.value.tolist())
            header = ["phase_sum_rad", "value"]
        else:
            rows = zip(self.phase.tolist(), self.value.tolist(), self.stderr.tolist())
            header = ["phase_sum_rad", "value", "stderr"]
        write_csv(path, header, rows, comments=merged)


def phase_scan_exact(config: ExperimentConfig, phase_grid, window,
                     channel: str = CHANNEL_MAIN, edges: str = "in") -> PhaseScanCurve:
    """Windowed peak sum versus the phase sum, from the exact engine.

    The engine output depends on the analyzer phases only through their sum,
    so the grid value is applied to analyzer ``a`` with analyzer ``b`` at
    zero.
    """
    grid = np.asarray(list(phase_grid), dtype=float)
    if grid.size == 0:
        raise ValueError("phase grid must not be empty")
    indices = resolve_window(window, config)
    values = np.empty(grid.size, dtype=float)
    for pos, phi in enumerate(grid.tolist()):
        table = evolve_state(config, phase_a=phi, phase_b=0.0)
        dist = peak_distribution(table, channel, edges=edges)
        missing = [n for n in indices if abs(n) > table.max_turns]
        if missing:
            raise ValueError(f"window indices {missing} exceed the computed peak range")
        values[pos] = sum(dist.probability(n) for n in indices)
    return PhaseScanCurve(phase=grid, value=values, channel=channel,
                          window=window if isinstance(window, str) else str(indices),
                          meta={"config_hash": config_hash(config), "edges": edges})
