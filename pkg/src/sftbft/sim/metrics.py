"""Per-block commit timing at a designated observer, plus message counts."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

from ..types import BlockId

# strength labels as fractions of f; column names use "f", "1.1f", ..., "2f"
FRACTIONS = tuple(round(1 + i / 10, 1) for i in range(11))


def fraction_label(frac: float) -> str:
    if frac == 1.0:
        return "f"
    if frac == 2.0:
        return "2f"
    return f"{frac:g}f"


def level_for(frac: float, f: int) -> int:
    """Smallest integer strength covering frac * f."""
    return min(2 * f, math.ceil(round(frac * f, 9)))


CSV_COLUMNS = (["block_id", "round", "height", "proposer", "t_proposed"]
               + [f"t_commit_{fraction_label(x)}" for x in FRACTIONS] + ["max_strength"])


@dataclass
class BlockMetrics:
    block_id: BlockId
    round: int
    height: int
    proposer: int
    t_proposed: float
    t_regular: Optional[float] = None
    r_regular: Optional[int] = None
    t_strong: dict[int, float] = field(default_factory=dict)
    r_strong: dict[int, int] = field(default_factory=dict)
    max_strength: Optional[int] = None

    def latency_rounds(self, x: int) -> Optional[int]:
        r = self.r_strong.get(x)
        return None if r is None else r - self.round

    def latency_time(self, x: int) -> Optional[float]:
        t = self.t_strong.get(x)
        return None if t is None else t - self.t_proposed

    def csv_row(self, f: int) -> list:
        row = [self.block_id.hex(), self.round, self.height, self.proposer, _fmt(self.t_proposed)]
        for frac in FRACTIONS:
            row.append(_fmt(self.t_strong.get(level_for(frac, f))))
        row.append("" if self.max_strength is None else self.max_strength)
        return row


def _fmt(t: Optional[float]) -> str:
    return "" if t is None else f"{t:.6f}"


@dataclass
class Metrics:
    observer: int
    f: int
    blocks: dict[BlockId, BlockMetrics] = field(default_factory=dict)
    messages: Counter = field(default_factory=Counter)
    per_round: Counter = field(default_factory=Counter)
    replica_strength: dict[int, dict[BlockId, int]] = field(default_factory=dict)

    def on_proposed(self, bid: BlockId, rnd: int, height: int, proposer: int, now: float):
        if bid not in self.blocks:
            self.blocks[bid] = BlockMetrics(bid, rnd, height, proposer, now)

    def on_message(self, kind: str, sender_round: int):
        self.messages[kind] += 1
        self.per_round[sender_round] += 1

    def on_strength(self, replica: int, bid: BlockId, x: int, now: float, observer_round: int):
        per = self.replica_strength.setdefault(replica, {})
        per[bid] = max(x, per.get(bid, x))
        if replica != self.observer or bid not in self.blocks:
            return
        m = self.blocks[bid]
        for y in range(self.f, x + 1):
            if y not in m.t_strong:
                m.t_strong[y] = now
                m.r_strong[y] = observer_round
        m.max_strength = max(x, m.max_strength or x)

    def on_regular_commit(self, replica: int, bid: BlockId, now: float, observer_round: int):
        if replica != self.observer or bid not in self.blocks:
            return
        m = self.blocks[bid]
        if m.t_regular is None:
            m.t_regular = now
            m.r_regular = observer_round

    def rows(self) -> list[BlockMetrics]:
        return sorted(self.blocks.values(), key=lambda m: (m.round, m.block_id))

    def csv_rows(self) -> list[list]:
        return [m.csv_row(self.f) for m in self.rows()]

    @property
    def total_messages(self) -> int:
        return sum(self.messages.values())
