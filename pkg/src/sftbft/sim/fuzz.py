"""Randomized adversarial scenarios for safety fuzzing."""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Optional

from ..accounting import FULL_INTERVALS, MARKER_ONLY, windowed
from .config import (CRASH, DIEMBFT, DOUBLE_VOTE, EQUIVOCATE, FORK, LIE_MARKER, SILENT, STREAMLET,
                     WITHHOLD, FaultSpec, ScenarioConfig)
from .network import Jitter, Uniform, symmetric_regions
from .oracle import Violation
from .runner import run

SIZES = (4, 4, 7, 7, 13)
BYZANTINE_BEHAVIORS = (SILENT, EQUIVOCATE, FORK, WITHHOLD, DOUBLE_VOTE, LIE_MARKER)


def random_scenario(protocol: str, seed: int, duration_rounds: Optional[int] = None) -> ScenarioConfig:
    """One random fault script with at most 2f Byzantine replicas.

    Byzantine replicas form a single coalition; crash faults come on top only
    while the total stays within 2f.
    """
    rng = random.Random(f"fuzz/{protocol}/{seed}")
    n = rng.choice(SIZES)
    f = (n - 1) // 3
    if duration_rounds is None:
        duration_rounds = rng.randint(10, 16) if n < 13 else rng.randint(8, 11)
    mode = rng.choice([MARKER_ONLY, FULL_INTERVALS, windowed(n)])
    t = rng.randint(0, 2 * f)
    crashes = rng.randint(0, 2 * f - t) if rng.random() < 0.3 else 0
    ids = list(range(n))
    rng.shuffle(ids)
    faults = []
    for rid in ids[:t]:
        behavior = rng.choice(BYZANTINE_BEHAVIORS)
        if rng.random() < 0.5:
            rounds = tuple(sorted(rng.sample(range(1, duration_rounds + 1), rng.randint(1, 4))))
            faults.append(FaultSpec(rid, behavior, 0, rounds))
        else:
            faults.append(FaultSpec(rid, behavior, rng.randint(0, duration_rounds // 2)))
    for rid in ids[t:t + crashes]:
        faults.append(FaultSpec(rid, CRASH, rng.randint(1, duration_rounds)))
    delta = 10.0
    if rng.random() < 0.5:
        latency = Jitter(Uniform(rng.choice([2.0, 5.0])), rng.choice([0.0, 3.0, 5.0]))
    else:
        latency = symmetric_regions(n, 3, 1.0, 5.0, rng.choice([0.0, 2.0]))
    gst, cap = 0.0, 0.0
    if rng.random() < 0.3:
        gst, cap = rng.choice([50.0, 150.0]), rng.choice([20.0, 60.0])
    return ScenarioConfig(protocol=protocol, n=n, f=f, mode=mode, seed=seed,
                          duration_rounds=duration_rounds, gst=gst, pre_gst_cap=cap, latency=latency,
                          faults=tuple(sorted(faults, key=lambda fs: fs.replica)),
                          extra_wait=rng.choice([0.0, 0.0, 3.0]), timer_base=40.0, delta=delta,
                          echo=False, trace=False)


@dataclass
class FuzzReport:
    protocol: str
    runs: int = 0
    commits: int = 0
    strong_commits: int = 0
    violations: list[tuple[int, Violation]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"protocol": self.protocol, "runs": self.runs, "commits": self.commits,
                "strong_commits": self.strong_commits,
                "violations": [{"seed": s, **v.to_dict()} for s, v in self.violations]}


def fuzz(protocol: str, runs: int, first_seed: int = 0) -> FuzzReport:
    report = FuzzReport(protocol)
    for seed in range(first_seed, first_seed + runs):
        cfg = random_scenario(protocol, seed)
        res = run(cfg)
        report.runs += 1
        report.commits += len(res.records)
        report.strong_commits += sum(1 for r in res.records if r.strength > cfg.f)
        if res.violation is not None:
            report.violations.append((seed, res.violation))
    return report


PROTOCOLS = (DIEMBFT, STREAMLET)
