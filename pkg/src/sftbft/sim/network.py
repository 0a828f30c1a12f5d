"""Network delay models and the seeded delivery-delay sampler."""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Optional, Union


@dataclass(frozen=True)
class Uniform:
    delay: float

    def base(self, src: int, dst: int) -> float:
        return self.delay

    def sample(self, src: int, dst: int, rng: random.Random) -> float:
        return self.delay

    def bound(self) -> float:
        return self.delay

    def to_dict(self) -> dict:
        return {"kind": "uniform", "delay": self.delay}


@dataclass(frozen=True)
class Regions:
    """Replicas grouped into regions; intra-region and region-pair latencies."""

    assignment: tuple[int, ...]
    intra: float
    inter: tuple[tuple[float, ...], ...]

    def base(self, src: int, dst: int) -> float:
        a, b = self.assignment[src], self.assignment[dst]
        return self.intra if a == b else self.inter[a][b]

    def sample(self, src: int, dst: int, rng: random.Random) -> float:
        return self.base(src, dst)

    def bound(self) -> float:
        return max([self.intra] + [x for row in self.inter for x in row])

    def to_dict(self) -> dict:
        return {"kind": "regions", "assignment": list(self.assignment), "intra": self.intra,
                "inter": [list(row) for row in self.inter]}


@dataclass(frozen=True)
class Jitter:
    """Base model plus uniform jitter in [0, jitter] drawn from the run's RNG."""

    inner: "NetworkModel"
    jitter: float

    def base(self, src: int, dst: int) -> float:
        return self.inner.base(src, dst)

    def sample(self, src: int, dst: int, rng: random.Random) -> float:
        return self.inner.sample(src, dst, rng) + rng.uniform(0.0, self.jitter)

    def bound(self) -> float:
        return self.inner.bound() + self.jitter

    def to_dict(self) -> dict:
        return {"kind": "jitter", "inner": self.inner.to_dict(), "jitter": self.jitter}


@dataclass(frozen=True)
class Stragglers:
    """Base model plus a fixed extra delay on everything the listed replicas send.

    Models replicas that are slow to compute or badly connected: their votes
    reach a collector after the quorum has already formed.
    """

    inner: "NetworkModel"
    replicas: tuple[int, ...]
    extra: float

    def base(self, src: int, dst: int) -> float:
        return self.inner.base(src, dst) + (self.extra if src in self.replicas else 0.0)

    def sample(self, src: int, dst: int, rng: random.Random) -> float:
        return self.inner.sample(src, dst, rng) + (self.extra if src in self.replicas else 0.0)

    def bound(self) -> float:
        return self.inner.bound() + self.extra

    def to_dict(self) -> dict:
        return {"kind": "stragglers", "inner": self.inner.to_dict(), "replicas": list(self.replicas),
                "extra": self.extra}


NetworkModel = Union[Uniform, Regions, Jitter, Stragglers]


def model_from_dict(d: dict) -> NetworkModel:
    kind = d.get("kind")
    if kind == "uniform":
        return Uniform(float(d["delay"]))
    if kind == "regions":
        return Regions(tuple(int(x) for x in d["assignment"]), float(d["intra"]),
                       tuple(tuple(float(x) for x in row) for row in d["inter"]))
    if kind == "jitter":
        return Jitter(model_from_dict(d["inner"]), float(d["jitter"]))
    if kind == "stragglers":
        return Stragglers(model_from_dict(d["inner"]), tuple(int(x) for x in d["replicas"]),
                          float(d["extra"]))
    raise ValueError(f"unknown network model {kind!r}")


def symmetric_regions(n: int, regions: int, intra: float, inter: float,
                      jitter: float = 0.0) -> NetworkModel:
    """Round-robin region assignment (replica i in region i mod regions)."""
    assignment = tuple(i % regions for i in range(n))
    matrix = tuple(tuple(intra if a == b else inter for b in range(regions)) for a in range(regions))
    model: NetworkModel = Regions(assignment, intra, matrix)
    return Jitter(model, jitter) if jitter > 0 else model


@dataclass
class Network:
    model: NetworkModel
    gst: float = 0.0
    pre_gst_cap: float = 0.0
    seed: int = 0
    rng: random.Random = field(init=False)

    def __post_init__(self):
        self.rng = random.Random(self.seed)

    def delay(self, src: int, dst: int, now: float) -> float:
        if src == dst:
            return 0.0
        d = self.model.sample(src, dst, self.rng)
        if now < self.gst and self.pre_gst_cap > 0:
            d += self.rng.uniform(0.0, self.pre_gst_cap)
        return d

    def bound(self) -> float:
        return self.model.bound()
