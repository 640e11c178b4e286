"""Benchmark presets.

``make_problem(id, overrides)`` returns a fully populated preset.  Presets
carry the published experiment constants; ``DESK`` overrides (see
:func:`desk_overrides`) shrink training budgets to what a
single CPU core finishes in minutes.
"""
from __future__ import annotations

from .base import ConfigError, ProblemSpec, apply_overrides, as_jet
from .ex1 import InversePotential
from .ex2 import BurgersControl
from .ex3 import SourceIdentification
from .ex4 import SparseHeatControl

PRESETS = {
    "ex1": InversePotential,
    "ex2": BurgersControl,
    "ex3": SourceIdentification,
    "ex4": SparseHeatControl,
}

__all__ = ["make_problem", "PRESETS", "ProblemSpec", "ConfigError", "preset_defaults", "desk_overrides", "as_jet"]


def preset_defaults(problem_id: str) -> dict:
    try:
        return PRESETS[problem_id].defaults()
    except KeyError:
        raise ConfigError(f"unknown problem {problem_id!r} (choose from {', '.join(PRESETS)})") from None


def desk_overrides(problem_id: str) -> dict:
    """Reduced budgets for a single CPU core; every other constant keeps its published value."""
    preset_defaults(problem_id)
    return dict(PRESETS[problem_id].DESK)


def make_problem(problem_id: str, overrides: dict | None = None) -> ProblemSpec:
    settings = apply_overrides(preset_defaults(problem_id), overrides)
    return PRESETS[problem_id](settings)
