"""Scenario configuration and fault specifications."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from ..accounting import MARKER_ONLY, EndorsementMode, parse_mode
from ..types import faults_for
from .network import NetworkModel, Uniform, model_from_dict

DIEMBFT = "diembft"
STREAMLET = "streamlet"

CRASH = "crash"
SILENT = "silent"
EQUIVOCATE = "equivocate"
FORK = "fork"
WITHHOLD = "withhold"
# fuzzing extras: vote for anything offered, and lie about conflicting history
DOUBLE_VOTE = "double_vote"
LIE_MARKER = "lie_marker"

BEHAVIORS = (CRASH, SILENT, EQUIVOCATE, FORK, WITHHOLD, DOUBLE_VOTE, LIE_MARKER)
SCRIPTS = ("equivocation", "one_round_fork")


class ConfigError(ValueError):
    """Invalid scenario; `field` names the offending top-level key when known."""

    def __init__(self, message: str, field: Optional[str] = None):
        super().__init__(message)
        self.field = field


@dataclass(frozen=True)
class FaultSpec:
    """One faulty replica.

    at_round: crash round, or first round a Byzantine behavior is active.
    rounds: rounds a behavior applies to (empty means every round from at_round).
    """

    replica: int
    behavior: str
    at_round: int = 0
    rounds: tuple[int, ...] = ()

    def __post_init__(self):
        if self.behavior not in BEHAVIORS:
            raise ConfigError(f"unknown fault behavior {self.behavior!r}")

    @property
    def byzantine(self) -> bool:
        return self.behavior != CRASH

    def active(self, r: int) -> bool:
        if r < self.at_round:
            return False
        return not self.rounds or r in self.rounds

    def to_dict(self) -> dict:
        return {"replica": self.replica, "behavior": self.behavior, "at_round": self.at_round,
                "rounds": list(self.rounds)}

    @classmethod
    def from_dict(cls, d: dict) -> "FaultSpec":
        return cls(int(d["replica"]), str(d["behavior"]), int(d.get("at_round", 0)),
                   tuple(int(x) for x in d.get("rounds", ())))


@dataclass
class ScenarioConfig:
    protocol: str = DIEMBFT
    n: int = 4
    f: Optional[int] = None
    mode: EndorsementMode = MARKER_ONLY
    seed: int = 0
    duration_rounds: int = 30
    gst: float = 0.0
    pre_gst_cap: float = 0.0
    latency: NetworkModel = field(default_factory=lambda: Uniform(10.0))
    faults: tuple[FaultSpec, ...] = ()
    extra_wait: float = 0.0
    extra_wait_schedule: dict[int, float] = field(default_factory=dict)
    timer_base: float = 100.0
    backoff: bool = False
    delta: float = 10.0
    payload_size: int = 16
    echo: bool = True
    vote_broadcast: bool = False
    script: Optional[str] = None
    observer: Optional[int] = None
    trace: bool = True

    def __post_init__(self):
        if self.f is None:
            try:
                self.f = faults_for(self.n)
            except (TypeError, ValueError) as exc:
                raise ConfigError(str(exc), "n") from None
        if isinstance(self.mode, str):
            try:
                self.mode = parse_mode(self.mode)
            except ValueError as exc:
                raise ConfigError(str(exc), "mode") from None
        self.faults = tuple(self.faults)

    def validate(self) -> "ScenarioConfig":
        if self.protocol not in (DIEMBFT, STREAMLET):
            raise ConfigError(f"protocol must be {DIEMBFT} or {STREAMLET}, got {self.protocol!r}", "protocol")
        if self.n < 4 or self.n != 3 * self.f + 1:
            raise ConfigError(f"need n = 3f+1 with f >= 1, got n={self.n} f={self.f}", "n")
        if self.duration_rounds < 1:
            raise ConfigError("duration_rounds must be positive", "duration_rounds")
        if self.timer_base <= 0 or self.delta <= 0:
            raise ConfigError("timer_base and delta must be positive",
                              "timer_base" if self.timer_base <= 0 else "delta")
        if self.script is not None and self.script not in SCRIPTS:
            raise ConfigError(f"unknown script {self.script!r}", "script")
        seen = set()
        for fs in self.faults:
            if not 0 <= fs.replica < self.n:
                raise ConfigError(f"fault replica {fs.replica} out of range", "faults")
            if fs.replica in seen:
                raise ConfigError(f"replica {fs.replica} has two fault specs", "faults")
            seen.add(fs.replica)
            if any(r > self.duration_rounds for r in fs.rounds) or fs.at_round > self.duration_rounds:
                raise ConfigError(f"fault for replica {fs.replica} references rounds beyond duration", "faults")
        # the one-round fork deliberately corrupts 2f+1 replicas for a single round
        cap = 2 * self.f + 1 if self.script == "one_round_fork" else 2 * self.f
        if self.byzantine_count > cap:
            raise ConfigError(f"more than {cap} Byzantine replicas", "faults")
        if self.observer is not None and self.observer in self.faulty:
            raise ConfigError("observer must be an honest replica", "observer")
        return self

    @property
    def faulty(self) -> set[int]:
        return {fs.replica for fs in self.faults}

    @property
    def byzantine(self) -> set[int]:
        return {fs.replica for fs in self.faults if fs.byzantine}

    @property
    def byzantine_count(self) -> int:
        if self.script == "equivocation":
            return self.f + 1
        if self.script == "one_round_fork":
            return 2 * self.f + 1
        return len(self.byzantine)

    def observer_id(self) -> int:
        if self.observer is not None:
            return self.observer
        return min(i for i in range(self.n) if i not in self.faulty)

    def to_dict(self) -> dict:
        return {
            "protocol": self.protocol, "n": self.n, "f": self.f, "mode": str(self.mode),
            "seed": self.seed, "duration_rounds": self.duration_rounds, "gst": self.gst,
            "pre_gst_cap": self.pre_gst_cap, "latency": self.latency.to_dict(),
            "faults": [fs.to_dict() for fs in self.faults], "extra_wait": self.extra_wait,
            "extra_wait_schedule": {str(k): v for k, v in sorted(self.extra_wait_schedule.items())},
            "timer_base": self.timer_base, "backoff": self.backoff, "delta": self.delta,
            "payload_size": self.payload_size, "echo": self.echo,
            "vote_broadcast": self.vote_broadcast, "script": self.script, "observer": self.observer,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown scenario fields: {', '.join(sorted(unknown))}")
        kw = dict(d)
        if "latency" in kw and isinstance(kw["latency"], dict):
            kw["latency"] = model_from_dict(kw["latency"])
        if "faults" in kw:
            kw["faults"] = tuple(FaultSpec.from_dict(x) for x in kw["faults"] or ())
        if "extra_wait_schedule" in kw:
            kw["extra_wait_schedule"] = {int(k): float(v) for k, v in (kw["extra_wait_schedule"] or {}).items()}
        if "mode" in kw and isinstance(kw["mode"], str):
            kw["mode"] = parse_mode(kw["mode"])
        return cls(**kw)
