"""Data reduction for event streams: histograms, windows, net rates, scans.

The pipeline mirrors the experimental procedure: build arrival-difference
histograms per stop channel, select coincidence windows (central peak, three
central peaks, or the whole gate), subtract the expected detector dark
counts, normalize by the trigger singles so source-power drift cancels, and
assemble phase scans with visibility and lineshape-fit estimates.

Everything here is pure: the same input files produce byte-identical output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import curve_fit

from .amplitudes import PhaseScanCurve, resolve_window
from .csvio import write_csv
from .model import CHANNEL_CONTROL, CHANNEL_MAIN, ExperimentConfig
from .montecarlo import TdcEvent, TdcEventStream

WINDOW_NAMES = ("central", "central3", "full")


@dataclass(frozen=True)
class DifferenceHistogram:
    """Counts of stop-minus-start arrival differences.

    In lattice mode bins are the repetition-period lattice indices relative
    to the gate center, restricted to bins lying entirely inside the gate;
    otherwise bins are ``floor(delay / bin_width)`` of the raw stop delay.
    """

    bin_width: float
    counts: dict[int, int]
    channel: str
    total_gates: int
    lattice: bool
    center_bin: int = 0
    capacity: int = 0

    def total(self) -> int:
        return int(sum(self.counts.values()))

    def lattice_indices(self) -> list[int]:
        """All in-gate lattice bins (populated or not); lattice mode only."""
        if not self.lattice:
            raise ValueError("not a lattice-aligned histogram")
        return list(range(1 - self.center_bin, self.capacity - self.center_bin))

    def to_csv(self, path, comments: dict | None = None) -> None:
        merged = {"channel": self.channel, "total_gates": self.total_gates,
                  "bin_width_ns": self.bin_width * 1e9, "lattice": self.lattice}
        merged.update(comments or {})
        if self.lattice:
            rows = [(n, n * self.bin_width * 1e9, self.counts.get(n, 0))
                    for n in self.lattice_indices()]
            write_csv(path, ["delta_bins", "delta_ns", "count"], rows, comments=merged)
        else:
            rows = [(idx, idx * self.bin_width * 1e9, self.counts[idx])
                    for idx in sorted(self.counts)]
            write_csv(path, ["bin", "delay_ns", "count"], rows, comments=merged)


def _stream_timing(stream: TdcEventStream, config: ExperimentConfig | None
                   ) -> tuple[float, float, int]:
    if config is not None:
        return (config.source.repetition_period, config.gate_width,
                config.gate_center_bin())
    meta = stream.meta
    try:
        return (float(meta["period_ns"]) * 1e-9, float(meta["gate_width_ns"]) * 1e-9,
                int(meta["center_bin"]))
    except KeyError as exc:
        raise ValueError(f"stream header lacks timing key {exc}; pass a config") from None


def build_histogram(stream: TdcEventStream, channel: str,
                    config: ExperimentConfig | None = None,
                    bin_width: float | None = None) -> DifferenceHistogram:
    """Histogram stop delays for one channel.

    With no explicit ``bin_width`` the histogram is lattice-aligned: stops
    snap to the nearest repetition-period multiple and only complete in-gate
    bins are kept (a 50 ns gate at 430 MHz keeps 20).  An explicit
    ``bin_width`` must divide the period evenly for lattice alignment;
    other widths produce a plain delay histogram.
    """
    period, gate, center = _stream_timing(stream, config)
    gates = int(stream.meta.get("gates", len(stream.events)))
    capacity = int(math.floor(gate / period + 1e-9))

    lattice = bin_width is None
    if bin_width is not None:
        if bin_width <= 0:
            raise ValueError("bin_width must be > 0")
        ratio = period / bin_width
        lattice = abs(ratio - round(ratio)) < 1e-9 and round(ratio) == 1

    counts: dict[int, int] = {}
    period_ns = period * 1e9
    if lattice:
        for ev in stream.events:
            for ch, delay_ns in ev.stops:
                if ch != channel:
                    continue
                m = int(round(delay_ns / period_ns))
                if 1 <= m <= capacity - 1:
                    n = m - center
                    counts[n] = counts.get(n, 0) + 1
        return DifferenceHistogram(bin_width=period, counts=counts, channel=channel,
                                   total_gates=gates, lattice=True,
                                   center_bin=center, capacity=capacity)
    width_ns = bin_width * 1e9
    for ev in stream.events:
        for ch, delay_ns in ev.stops:
            if ch != channel:
                continue
            idx = int(math.floor(delay_ns / width_ns))
            counts[idx] = counts.get(idx, 0) + 1
    return DifferenceHistogram(bin_width=bin_width, counts=counts, channel=channel,
                               total_gates=gates, lattice=False)


def window_counts(histogram: DifferenceHistogram, window) -> int:
    """Exact count sum over a coincidence window of whole lattice bins."""
    if not histogram.lattice:
        raise ValueError("window counting requires a lattice-aligned histogram")
    in_gate = histogram.lattice_indices()
    if isinstance(window, str):
        name = window.lower()
        if name == "central":
            indices = [0]
        elif name == "central3":
            indices = [-1, 0, 1]
        elif name == "full":
            indices = in_gate
        else:
            raise ValueError(f"unknown window {window!r}")
    else:
        indices = sorted(set(int(n) for n in window))
    outside = [n for n in indices if n not in in_gate]
    if outside:
        raise ValueError(f"window bins {outside} lie outside the gate")
    return int(sum(histogram.counts.get(n, 0) for n in indices))


def window_bin_count(histogram: DifferenceHistogram, window) -> int:
    if isinstance(window, str):
        name = window.lower()
        if name == "central":
            return 1
        if name == "central3":
            return 3
        if name == "full":
            return len(histogram.lattice_indices())
        raise ValueError(f"unknown window {window!r}")
    return len(set(int(n) for n in window))


@dataclass(frozen=True)
class NetRatePoint:
    """One scan point after dark subtraction and singles normalization."""

    coordinate: float
    net: float
    stderr: float
    raw_counts: int
    gates: int
    dark_subtracted: bool
    valid: bool = True


def net_normalize(coordinate: float, counts: int, gates: int, window_bins: int,
                  dark_rate: float, period: float) -> NetRatePoint:
    """Net normalized coincidences for one accumulation point.

    ``net = (counts - dark_rate * window_duration * gates) / gates``; the
    dark rate is a separately calibrated constant, so the Poisson error is
    ``sqrt(counts) / gates``.  A point with zero trigger singles is flagged
    invalid instead of being dropped.
    """
    if gates <= 0:
        return NetRatePoint(coordinate, 0.0, 0.0, counts, gates,
                            dark_subtracted=True, valid=False)
    expected_dark = dark_rate * window_bins * period * gates
    net = (counts - expected_dark) / gates
    stderr = math.sqrt(max(counts, 1)) / gates
    return NetRatePoint(coordinate, net, stderr, counts, gates,
                        dark_subtracted=True, valid=True)


def points_to_csv(path, points: list[NetRatePoint], comments: dict | None = None) -> None:
    rows = [(p.coordinate, p.net, p.stderr, p.raw_counts, p.gates,
             p.dark_subtracted, p.valid) for p in points]
    write_csv(path, ["coordinate", "net_normalized", "stderr", "raw_counts",
                     "gates", "dark_subtracted", "valid"], rows, comments)


# ---------------------------------------------------------------------------
# Scan assembly
# ---------------------------------------------------------------------------

def airy_model(phi: np.ndarray, amplitude: float, loop_gain: float,
               phase_offset: float) -> np.ndarray:
    return amplitude / ((1.0 - loop_gain) ** 2
                        + 4.0 * loop_gain * np.sin((phi - phase_offset) / 2.0) ** 2)


def fit_airy(phase: np.ndarray, value: np.ndarray,
             stderr: np.ndarray | None = None) -> tuple[float, float, float] | None:
    """Fit the resonance lineshape; returns (loop_gain, error, phase_offset).

    Returns None when the fit does not converge or is unconstrained.
    """
    top, bottom = float(np.max(value)), float(np.min(value))
    if top <= 0 or top == bottom:
        return None
    ratio = math.sqrt(max(bottom, 1e-12) / top)
    gain0 = min(max((1.0 - ratio) / (1.0 + ratio), 0.05), 0.95)
    amp0 = top * (1.0 - gain0) ** 2
    phi0 = float(phase[int(np.argmax(value))])
    sigma = None
    if stderr is not None and np.all(np.asarray(stderr) > 0):
        sigma = np.asarray(stderr)
    try:
        popt, pcov = curve_fit(airy_model, phase, value,
                               p0=[amp0, gain0, phi0], sigma=sigma,
                               bounds=([0.0, 0.0, -math.pi], [np.inf, 0.999999, 3 * math.pi]),
                               maxfev=10000)
    except (RuntimeError, ValueError):
        return None
    err = float(np.sqrt(pcov[1, 1])) if np.isfinite(pcov[1, 1]) else float("nan")
    return float(popt[1]), err, float(popt[2])


@dataclass(frozen=True)
class ScanResult:
    points: list[NetRatePoint]
    curve: PhaseScanCurve
    visibility: float
    visibility_err: float
    visibility_source: str  # "fit" or "raw"
    loop_gain: float | None
    loop_gain_err: float | None
    window: str
    channel: str


def _visibility_of(values: np.ndarray) -> float:
    top, bottom = float(np.max(values)), float(np.min(values))
    if top + bottom <= 0:
        return 0.0
    return (top - bottom) / (top + bottom)


def _curve_visibility(phase: np.ndarray, values: np.ndarray,
                      stderr: np.ndarray | None) -> tuple[float, str, tuple | None]:
    fit = fit_airy(phase, values, stderr)
    if fit is not None and math.isfinite(fit[1]):
        gain = fit[0]
        contrast = ((1.0 + gain) / (1.0 - gain)) ** 2
        return (contrast - 1.0) / (contrast + 1.0), "fit", fit
    return _visibility_of(values), "raw", fit


def assemble_scan(tagged_streams, window, channel: str,
                  config: ExperimentConfig, bootstrap_draws: int = 200,
                  seed: int = 0) -> ScanResult:
    """Assemble a phase scan from coordinate-tagged event streams.

    Streams sharing a coordinate are aggregated (counts and gates combined).
    Visibility comes from the lineshape fit when it converges, from the raw
    extrema otherwise; its error is a Poisson bootstrap over the counts.
    """
    if isinstance(tagged_streams, dict):
        items = list(tagged_streams.items())
    else:
        items = list(tagged_streams)
    if len({coord for coord, _ in items}) < 2:
        raise ValueError("a scan needs streams at two or more coordinates")

    dark_rate = (config.stop_main.dark_rate if channel == CHANNEL_MAIN
                 else config.stop_control.dark_rate)
    period = config.source.repetition_period

    grouped: dict[float, tuple[int, int, int]] = {}
    bins = None
    for coordinate, stream in items:
        hist = build_histogram(stream, channel, config)
        if bins is None:
            bins = window_bin_count(hist, window)
        counts = window_counts(hist, window)
        gates = hist.total_gates
        prev = grouped.get(float(coordinate), (0, 0, 0))
        grouped[float(coordinate)] = (prev[0] + counts, prev[1] + gates, bins)

    coordinates = np.asarray(sorted(grouped))
    points = [net_normalize(c, *grouped[c][:2], window_bins=grouped[c][2],
                            dark_rate=dark_rate, period=period)
              for c in coordinates.tolist()]
    values = np.asarray([p.net for p in points])
    errors = np.asarray([p.stderr for p in points])

    visibility, source, fit = _curve_visibility(coordinates, values, errors)

    rng = np.random.default_rng(seed)
    draws = np.empty(bootstrap_draws)
    raw_counts = np.asarray([p.raw_counts for p in points], dtype=float)
    gates_arr = np.asarray([p.gates for p in points], dtype=float)
    dark_per_gate = dark_rate * grouped[coordinates[0]][2] * period
    for b in range(bootstrap_draws):
        resampled = rng.poisson(np.maximum(raw_counts, 0.0))
        nets = (resampled - dark_per_gate * gates_arr) / gates_arr
        vis_b, _, _ = _curve_visibility(coordinates, nets, errors)
        draws[b] = vis_b
    visibility_err = float(np.std(draws, ddof=1)) if bootstrap_draws > 1 else 0.0

    curve = PhaseScanCurve(phase=coordinates, value=values, stderr=errors,
                           channel=channel,
                           window=window if isinstance(window, str) else str(window),
                           meta={"net": True})
    return ScanResult(points=points, curve=curve, visibility=visibility,
                      visibility_err=visibility_err, visibility_source=source,
                      loop_gain=None if fit is None else fit[0],
                      loop_gain_err=None if fit is None else fit[1],
                      window=str(window), channel=channel)


# ---------------------------------------------------------------------------
# External TDC data
# ---------------------------------------------------------------------------

def read_tdc_csv(path, period: float, gate_width: float, center_bin: int,
                 total_gates: int | None = None) -> TdcEventStream:
    """Read generic TDC rows ``start_ns, stop_channel, stop_delay_ns``.

    Rows sharing a start time form one gate; channels are the stream tokens
    (``main``/``control``).  ``total_gates`` should be supplied when gates
    without stops were not recorded.
    """
    gates: dict[float, list[tuple[str, float]]] = {}
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line or line.startswith("#") or line.lower().startswith("start"):
                continue
            start_text, channel, delay_text = [cell.strip() for cell in line.split(",")]
            gates.setdefault(float(start_text), []).append(
                (channel, float(delay_text)))
    events = [TdcEvent(start, tuple(sorted(stops, key=lambda s: (s[1], s[0]))))
              for start, stops in sorted(gates.items())]
    meta = {
        "period_ns": period * 1e9,
        "gate_width_ns": gate_width * 1e9,
        "center_bin": center_bin,
        "gates": total_gates if total_gates is not None else len(events),
        "config_hash": "external",
        "seed": -1,
        "duration_s": 0.0,
    }
    return TdcEventStream(events=events, meta=meta)
