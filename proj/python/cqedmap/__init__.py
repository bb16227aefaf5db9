"""Fiber-coupled cavity QED state mapping: dynamics, entanglement classes and scenario drivers."""

from ._core import (
    Config,
    ConfigError,
    bipartite_negativity,
    classify,
    config_keys,
    evolve,
    robustness_tau_off,
    run_fig1,
    run_multimode,
    run_werner_plane,
    sweep_cavity_decay,
    sweep_fiber_decay,
    tripartite_negativity,
)

__all__ = [
    "Config",
    "ConfigError",
    "bipartite_negativity",
    "classify",
    "config_keys",
    "evolve",
    "robustness_tau_off",
    "run_fig1",
    "run_multimode",
    "run_werner_plane",
    "sweep_cavity_decay",
    "sweep_fiber_decay",
    "tripartite_negativity",
]
