import math

import pytest

from fptimebin.model import (GEOMETRY_LOOP, GEOMETRY_MIRROR, ExperimentConfig,
                             InterferometerSpec, SourceSpec, coupler_from_power)


def make_config(dimension=20, phase_a=0.0, phase_b=0.0, reflectance=0.9,
                max_turns=None, turn_loss=0.0, pol_contrast=1.0,
                **kwargs) -> ExperimentConfig:
    """Symmetric-coupler config; defaults are the ideal analyzer pair."""
    def arm(geometry):
        coupler = coupler_from_power(reflectance)
        phase = phase_a if geometry == GEOMETRY_MIRROR else phase_b
        return InterferometerSpec(coupler, coupler, phase=phase,
                                  turn_loss=turn_loss,
                                  pol_contrast_per_turn=pol_contrast,
                                  geometry=geometry)

    return ExperimentConfig(
        source=SourceSpec(dimension=dimension),
        interferometer_a=arm(GEOMETRY_MIRROR),
        interferometer_b=arm(GEOMETRY_LOOP),
        max_turns=max_turns,
        **kwargs)


@pytest.fixture(scope="session")
def ideal_config():
    return make_config()


@pytest.fixture(scope="session")
def phi_grid_16():
    return [2.0 * math.pi * k / 16 for k in range(16)]
