"""Discrete-event simulator of BitTorrent-like video-on-demand swarms."""

from .model import (MediaFile, PolicyKind, Provision, Scenario, ScenarioConfig,
                    build_scenario, load_config)
from .swarm import RunResult, Swarm, simulate
from .metrics import aggregate, finalize_run

__all__ = [
    "MediaFile", "PolicyKind", "Provision", "Scenario", "ScenarioConfig", "build_scenario",
    "load_config", "RunResult", "Swarm", "simulate", "aggregate", "finalize_run",
]
__version__ = "0.1.0"
