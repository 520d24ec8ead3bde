"""Named figure-reproduction configs shipped with the package."""

from __future__ import annotations

from importlib import resources

from .model import ExperimentConfig, parse_config_text

PRESET_NAMES = ("fig3-ideal", "fig8-degraded", "paper-experiment", "d1-lossless")


def preset_text(name: str) -> str:
    if name not in PRESET_NAMES:
        raise ValueError(f"unknown preset {name!r}; available: {', '.join(PRESET_NAMES)}")
    return (resources.files("fptimebin") / "presets" / f"{name}.cfg").read_text("utf-8")


def load_preset(name: str) -> tuple[ExperimentConfig, list[str]]:
    return parse_config_text(preset_text(name))
