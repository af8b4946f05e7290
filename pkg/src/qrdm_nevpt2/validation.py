"""Argument checks shared by the configuration loader and the estimators."""

from __future__ import annotations

from pathlib import Path

from .chem_io import MOIntegrals, load_fcidump


class ConfigError(ValueError):
    """Invalid run configuration or estimator parameter."""


def check_choice(name: str, value, choices) -> None:
    if value not in choices:
        raise ConfigError(f"{name} must be one of {list(choices)}, got {value!r}")


def check_positive_int(name: str, value) -> None:
    if isinstance(value, bool) or not isinstance(value, int) or value <= 0:
        raise ConfigError(f"{name} must be a positive integer, got {value!r}")


def check_nonnegative(name: str, value) -> None:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or value < 0:
        raise ConfigError(f"{name} must be non-negative, got {value!r}")


def check_seed(name: str, value, required: bool) -> None:
    if value is None:
        if required:
            raise ConfigError(f"{name} is required for sampled runs")
        return
    if isinstance(value, bool) or not isinstance(value, int) or value < 0:
        raise ConfigError(f"{name} must be a non-negative integer, got {value!r}")


def as_integrals(system) -> MOIntegrals:
    """Accept MOIntegrals or a path to an FCIDUMP file."""
    if isinstance(system, MOIntegrals):
        return system
    if isinstance(system, (str, Path)):
        return load_fcidump(system)
    raise ConfigError(f"expected MOIntegrals or an FCIDUMP path, got {type(system).__name__}")


def check_systems(systems) -> list[MOIntegrals]:
    if isinstance(systems, (str, Path, MOIntegrals)):
        systems = [systems]
    out = [as_integrals(s) for s in systems]
    if not out:
        raise ConfigError("no systems supplied")
    return out
