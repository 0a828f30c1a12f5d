"""Discrete-event simulation of SFT-enabled replicas under faults."""

from .config import (CRASH, DIEMBFT, DOUBLE_VOTE, EQUIVOCATE, FORK, LIE_MARKER, SILENT, STREAMLET,
                     WITHHOLD, ConfigError, FaultSpec, ScenarioConfig)
from .network import Jitter, Network, Regions, Stragglers, Uniform, symmetric_regions
from .oracle import BlockRegistry, CommitRecord, SafetyOracle, Violation
from .runner import RunResult, Simulation, run
