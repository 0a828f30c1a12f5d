"""Global block registry and the conflicting-strong-commit safety oracle."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from ..types import GENESIS, Block, BlockId


class BlockRegistry:
    """Every block any replica ever sent, for causal sync and global ancestry checks."""

    def __init__(self):
        self.blocks: dict[BlockId, Block] = {GENESIS.id: GENESIS}

    def __contains__(self, bid: BlockId) -> bool:
        return bid in self.blocks

    def add(self, b: Block) -> bool:
        if b.id in self.blocks:
            return False
        self.blocks[b.id] = b
        return True

    def get(self, bid: BlockId) -> Block:
        return self.blocks[bid]

    def extends(self, descendant: BlockId, ancestor: BlockId) -> bool:
        a, d = self.blocks[ancestor], self.blocks[descendant]
        while d.height > a.height:
            d = self.blocks[d.parent]
        return d.id == a.id

    def conflicts(self, a: BlockId, b: BlockId) -> bool:
        return not self.extends(a, b) and not self.extends(b, a)

    def missing_chain(self, bid: BlockId, known) -> list[Block]:
        """Blocks from the oldest one absent from `known` up to bid (inclusive)."""
        chain = []
        cur = bid
        while cur is not None and cur not in known:
            b = self.blocks[cur]
            chain.append(b)
            cur = b.parent
        chain.reverse()
        return chain


@dataclass(frozen=True)
class CommitRecord:
    replica: int
    block: BlockId
    strength: int
    time: float


@dataclass(frozen=True)
class Violation:
    first: CommitRecord
    second: CommitRecord
    byzantine: int

    def describe(self) -> str:
        a, b = self.first, self.second
        return (f"conflicting commits: replica {a.replica} block {a.block.hex()[:12]} at strength "
                f"{a.strength} vs replica {b.replica} block {b.block.hex()[:12]} at strength "
                f"{b.strength}, with only {self.byzantine} Byzantine replicas")

    def to_dict(self) -> dict:
        return {"first": _rec(self.first), "second": _rec(self.second), "byzantine": self.byzantine}


def _rec(r: CommitRecord) -> dict:
    return {"replica": r.replica, "block": r.block.hex(), "strength": r.strength, "time": r.time}


@dataclass
class SafetyOracle:
    """Flags two honest commits of conflicting blocks when both strengths reach t.

    Commits at strength >= y must all lie on one chain for every level
    y in [max(t, f), 2f]; a single tip per level is enough to check that.
    """

    registry: BlockRegistry
    f: int
    byzantine: int
    records: list[CommitRecord] = field(default_factory=list)
    best: dict[tuple[int, BlockId], int] = field(default_factory=dict)
    tips: dict[int, CommitRecord] = field(default_factory=dict)
    violation: Optional[Violation] = None

    def record(self, replica: int, block: BlockId, strength: int, time: float) -> Optional[Violation]:
        key = (replica, block)
        if self.best.get(key, -1) >= strength:
            return None
        self.best[key] = strength
        rec = CommitRecord(replica, block, strength, time)
        self.records.append(rec)
        for y in range(max(self.byzantine, self.f), min(strength, 2 * self.f) + 1):
            tip = self.tips.get(y)
            if tip is None or self.registry.extends(block, tip.block):
                self.tips[y] = rec
            elif not self.registry.extends(tip.block, block):
                if self.violation is None:
                    self.violation = Violation(tip, rec, self.byzantine)
                return self.violation
        return None

    def max_strength(self, block: BlockId) -> Optional[int]:
        vals = [x for (_, b), x in self.best.items() if b == block]
        return max(vals) if vals else None


def brute_force_violations(registry: BlockRegistry, records, byzantine: int) -> list[tuple]:
    """Pairwise check of every record pair, used to cross-check the incremental oracle."""
    out = []
    recs = list(records)
    for i, a in enumerate(recs):
        for b in recs[i + 1:]:
            if min(a.strength, b.strength) >= byzantine and registry.conflicts(a.block, b.block):
                out.append((a, b))
    return out
