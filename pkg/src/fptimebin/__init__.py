"""Two-photon Fabry-Perot interferometry of time-bin entangled pairs.

Exact finite-dimension coincidence amplitudes, infinite-train closed forms,
experimental-imperfection models, a stochastic detection chain, and the
histogram/phase-scan analysis pipeline, plus a CLI with figure-reproduction
presets.
"""

from .amplitudes import (ChannelError, JointAmplitudeTable, PeakDistribution,
                         PhaseScanCurve, TruncationError, evolve_state,
                         path_amplitude, peak_distribution, phase_scan_exact,
                         resolve_window)
from .closedform import (AiryMetrics, ClosedFormParams, DivergenceError,
                         airy_metrics, control_peak_weight, normalized_curves,
                         params_from_config, peak_weight)
from .imperfections import (degraded_phase_scan, matched_bandwidth,
                            per_turn_visibility_profile, spectral_samples)
from .model import (CHANNEL_CONTROL, CHANNEL_MAIN, ConfigError, CouplerSpec,
                    DetectorSpec, ExperimentConfig, InterferometerSpec,
                    NoiseSpec, RunRates, SourceSpec, SpectralSpec,
                    config_hash, config_to_text, coupler_from_power,
                    load_config, parse_config_text, phase_from_length,
                    with_phases)

__version__ = "0.1.0"
