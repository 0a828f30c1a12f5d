"""Ready-made scenario configurations and the FBFT message-count comparison."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Optional

from ..accounting import FBFT_DIRECT_ONLY, MARKER_ONLY, NAIVE_ALL_INDIRECT, EndorsementMode
from ..types import faults_for
from .config import DIEMBFT, ConfigError, ScenarioConfig
from .network import Regions, Stragglers, Uniform, symmetric_regions
from .runner import run
from .scripts import counterexample_roles, one_round_fork_round

# delay so large that messages on the link never arrive within any run
NEVER = 1e9


def equivocation_scenario(f: int, mode: EndorsementMode = NAIVE_ALL_INDIRECT, seed: int = 0) -> ScenarioConfig:
    """The equivocation counterexample for fault parameter f (n = 3f+1)."""
    if f < 1:
        raise ConfigError("f must be at least 1")
    roles = counterexample_roles(3 * f + 1, f)
    fork_rounds = range(roles.fork_round, roles.fork_round + 12)
    return ScenarioConfig(protocol=DIEMBFT, n=3 * f + 1, f=f, mode=mode, seed=seed,
                          duration_rounds=roles.fork_round + 12, script="equivocation",
                          extra_wait_schedule={r: 1.0 for r in fork_rounds})


def one_round_fork_scenario(protocol: str, n: int, mode: EndorsementMode = MARKER_ONLY,
                            seed: int = 0) -> ScenarioConfig:
    """2f+1 replicas corrupted for one round certify a block extending genesis."""
    R = one_round_fork_round(n)
    return ScenarioConfig(protocol=protocol, n=n, mode=mode, seed=seed, duration_rounds=R + 3 * n + 12,
                          latency=Uniform(4.0), timer_base=100.0, delta=10.0,
                          script="one_round_fork")


def symmetric_latency_scenario(n: int = 31, delta: float = 100.0, stragglers: int = 3,
                               jitter: Optional[float] = None, extra_wait: float = 0.0,
                               duration_rounds: int = 60, seed: int = 0) -> ScenarioConfig:
    """Three equal regions with cross-region delay delta and a few slow replicas.

    Intra-region delay is delta/10 and each message gets up to delta/10 jitter.
    The slow replicas (the highest ids, one per region when stragglers <= 3) add
    delta to everything they send, so their votes only make a QC when they lead.
    """
    jitter = delta / 10 if jitter is None else jitter
    model = symmetric_regions(n, 3, delta / 10, delta, jitter)
    if stragglers:
        model = Stragglers(model, tuple(range(n - stragglers, n)), delta)
    return ScenarioConfig(protocol=DIEMBFT, n=n, mode=MARKER_ONLY, seed=seed,
                          duration_rounds=duration_rounds, latency=model, timer_base=10 * delta,
                          delta=delta, extra_wait=extra_wait, trace=False)


def asymmetric_outcast_scenario(n: int, f: Optional[int] = None, outcast_count: int = 0,
                                delta: float = 10.0, duration_rounds: int = 200,
                                seed: int = 0) -> ScenarioConfig:
    """Outcasts sit in their own region behind links that never deliver during the run.

    Their leadership rounds time out and their votes never reach a collector in
    time, so no QC ever contains them.
    """
    f = faults_for(n) if f is None else f
    if outcast_count >= f:
        raise ConfigError("outcast_count must be below f")
    outcasts = set(range(n - outcast_count, n))
    assignment = tuple(1 if i in outcasts else 0 for i in range(n))
    model = Regions(assignment, delta, ((delta, NEVER), (NEVER, delta)))
    return ScenarioConfig(protocol=DIEMBFT, n=n, f=f, mode=MARKER_ONLY, seed=seed,
                          duration_rounds=duration_rounds, latency=model, timer_base=8 * delta)


def straggler_scenario(n: int, mode: EndorsementMode, stragglers: Optional[int] = None,
                       delta: float = 10.0, duration_rounds: int = 40, seed: int = 0) -> ScenarioConfig:
    """f (by default) replicas with slower links: their votes always miss the QC but stay in-round."""
    f = faults_for(n)
    k = f if stragglers is None else stragglers
    slow = set(range(n - k, n))
    assignment = tuple(1 if i in slow else 0 for i in range(n))
    model = Regions(assignment, delta, ((delta, 3 * delta), (3 * delta, delta)))
    return ScenarioConfig(protocol=DIEMBFT, n=n, f=f, mode=mode, seed=seed,
                          duration_rounds=duration_rounds, latency=model, timer_base=20 * delta,
                          trace=False)


@dataclass
class FbftReport:
    n: int
    stragglers: int
    sft_messages: int
    fbft_messages: int
    sft_blocks: int
    fbft_blocks: int
    late_vote_messages: int

    @property
    def sft_per_block(self) -> float:
        return self.sft_messages / max(1, self.sft_blocks)

    @property
    def fbft_per_block(self) -> float:
        return self.fbft_messages / max(1, self.fbft_blocks)

    @property
    def ratio(self) -> float:
        return self.fbft_per_block / self.sft_per_block

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.update(sft_per_block=self.sft_per_block, fbft_per_block=self.fbft_per_block, ratio=self.ratio)
        return d


def _committed(result) -> int:
    return len(result.engines[result.config.observer_id()].committed)


def fbft_comparison(config: ScenarioConfig) -> FbftReport:
    """Run config twice, in marker mode and in FBFT direct-vote mode, and count messages."""
    if config.protocol != DIEMBFT:
        raise ConfigError("FBFT comparison needs the diembft protocol")
    sft = run(dataclasses.replace(config, mode=MARKER_ONLY, trace=False))
    fbft = run(dataclasses.replace(config, mode=FBFT_DIRECT_ONLY, trace=False))
    stragglers = 0
    if isinstance(config.latency, Regions):
        stragglers = sum(1 for a in config.latency.assignment if a != 0)
    return FbftReport(config.n, stragglers, sft.metrics.total_messages, fbft.metrics.total_messages,
                      _committed(sft), _committed(fbft), fbft.metrics.messages.get("late_vote", 0))
