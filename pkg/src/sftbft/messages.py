"""Wire messages and engine outputs shared by both protocol engines."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

from .types import (Block, BlockId, TimeoutCertificate, TimeoutMsg, StrongVote, canonical_bytes,
                    digest)


@dataclass(frozen=True)
class Proposal:
    block: Block
    kind = "proposal"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "block": self.block.to_dict()}


@dataclass(frozen=True)
class VoteMsg:
    vote: StrongVote
    kind = "vote"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "vote": self.vote.to_dict()}


@dataclass(frozen=True)
class TimeoutNotice:
    """A signed timeout plus the sender's latest TC so laggards can catch up."""

    msg: TimeoutMsg
    last_tc: Optional[TimeoutCertificate] = None
    kind = "timeout"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "msg": self.msg.to_dict(),
                "tc": self.last_tc.to_dict() if self.last_tc is not None else None}


@dataclass(frozen=True)
class LateVote:
    """FBFT baseline: a vote that missed the QC, multicast by the collecting leader."""

    vote: StrongVote
    kind = "late_vote"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "vote": self.vote.to_dict()}


Message = Union[Proposal, VoteMsg, TimeoutNotice, LateVote]


def message_from_dict(d: dict) -> Message:
    k = d["kind"]
    if k == "proposal":
        return Proposal(Block.from_dict(d["block"]))
    if k == "vote":
        return VoteMsg(StrongVote.from_dict(d["vote"]))
    if k == "late_vote":
        return LateVote(StrongVote.from_dict(d["vote"]))
    if k == "timeout":
        return TimeoutNotice(TimeoutMsg.from_dict(d["msg"]),
                             TimeoutCertificate.from_dict(d["tc"]) if d["tc"] is not None else None)
    raise ValueError(f"unknown message kind {k!r}")


def message_digest(msg: Message) -> bytes:
    return digest(canonical_bytes(msg.to_dict()))


def referenced_blocks(msg: Message) -> list[BlockId]:
    """Blocks a receiver must hold before it can process msg (used for causal delivery)."""
    if isinstance(msg, Proposal):
        return [msg.block.parent] if msg.block.parent is not None else []
    if isinstance(msg, TimeoutNotice):
        refs = [msg.msg.qc_high.block]
        if msg.last_tc is not None:
            refs += [m.qc_high.block for m in msg.last_tc.msgs]
        return refs
    return []


OTHERS = -1


@dataclass
class Send:
    dest: Optional[int]  # None: every replica including the sender; OTHERS: everyone else
    msg: Message


@dataclass
class Output:
    sends: list[Send] = field(default_factory=list)
    commits: list[BlockId] = field(default_factory=list)
    strength: list[tuple[BlockId, int]] = field(default_factory=list)
    timers: list[tuple[str, int, float]] = field(default_factory=list)

    def extend(self, other: "Output") -> None:
        self.sends += other.sends
        self.commits += other.commits
        self.strength += other.strength
        self.timers += other.timers
