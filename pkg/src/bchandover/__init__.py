"""Blockchain-assisted handover authentication simulator for SDN-managed cells."""

from .engine import RunArtifacts, run
from .scenario import Model, Scenario, load_scenario

__all__ = ["Model", "RunArtifacts", "Scenario", "load_scenario", "run"]
__version__ = "0.1.0"
