"""Byzantine replica variants driven by FaultSpec behaviors.

Each variant runs the honest engine and then bends specific steps: which block
it proposes, what it votes for, what history it claims, and which messages
leave the replica. Crashes are handled by the simulator, not here.
"""

from __future__ import annotations

import random
from typing import Optional

from ..diembft import DiemReplica
from ..messages import Output, Proposal, Send, VoteMsg
from ..streamlet import StreamletReplica
from ..types import Block, IntervalSet, StrongVote
from .config import DOUBLE_VOTE, EQUIVOCATE, FORK, LIE_MARKER, SILENT, WITHHOLD, FaultSpec


def _fork_parent(tree, tip_round: int, rng: random.Random) -> Optional[Block]:
    """A random certified block strictly older than the current tip, genesis included."""
    cands = sorted((bid for bid in tree.certified if tree.get(bid).round < tip_round),
                   key=lambda bid: (tree.get(bid).height, bid))
    if not cands:
        return None
    return tree.get(rng.choice(cands))


class _Byzantine:
    """Mixin holding the behavior switch and the outgoing-message filter."""

    spec: FaultSpec
    coalition: frozenset
    rng: random.Random
    fork_base = None  # fixed parent for fork blocks; random older certified block when None

    def _alt_parent(self, tip_round: int) -> Optional[Block]:
        if self.fork_base is not None and self.fork_base in self.tree:
            return self.tree.get(self.fork_base)
        return _fork_parent(self.tree, tip_round, self.rng)

    def _on(self, behavior: str, r: int) -> bool:
        return self.spec.behavior == behavior and self.spec.active(r)

    def _filter(self, out: Output) -> Output:
        if self._on(SILENT, self.r_cur):
            out.sends = []
        elif self.spec.behavior == WITHHOLD:
            out.sends = [s for s in out.sends
                         if not (isinstance(s.msg, VoteMsg) and s.msg.vote.voter == self.id
                                 and self.spec.active(s.msg.vote.round))]
        return out

    def _split_sends(self, a: Block, b: Block) -> list[Send]:
        """Equivocation: half the honest replicas see a, the rest see b; the coalition sees both."""
        others = [i for i in range(self.n) if i != self.id and i not in self.coalition]
        self.rng.shuffle(others)
        half = len(others) // 2
        sends = []
        for i in others[:half]:
            sends.append(Send(i, Proposal(a)))
        for i in others[half:]:
            sends.append(Send(i, Proposal(b)))
        for i in sorted(self.coalition | {self.id}):
            sends.append(Send(i, Proposal(a)))
            sends.append(Send(i, Proposal(b)))
        return sends

    def _lie(self, b: Block, intervals: bool) -> StrongVote:
        """A signed vote claiming no conflicting history at all."""
        if intervals:
            vote = StrongVote(self.id, b.id, b.round, None, IntervalSet.from_ranges([(1, b.round)]))
        else:
            vote = StrongVote(self.id, b.id, b.round, 0, None)
        return vote.signed(self.cfg.signer)

    def _lying(self, r: int) -> bool:
        return self._on(LIE_MARKER, r) or self._on(DOUBLE_VOTE, r) or self._proposing_badly(r)

    def _proposing_badly(self, r: int) -> bool:
        return self._on(FORK, r) or self._on(EQUIVOCATE, r)

    def _votes_anyway(self, b: Block) -> bool:
        # double voters back every block of the round; a bad proposer backs its own blocks
        return self._on(DOUBLE_VOTE, b.round) or (self._proposing_badly(b.round) and b.proposer == self.id)


class ByzantineDiem(_Byzantine, DiemReplica):
    def __init__(self, rid, cfg, spec: FaultSpec, coalition=frozenset(), seed: int = 0):
        DiemReplica.__init__(self, rid, cfg)
        self.spec = spec
        self.coalition = frozenset(coalition)
        self.rng = random.Random(seed)
        self.voted_blocks: set = set()

    def start(self, now):
        return self._filter(super().start(now))

    def handle(self, msg, now):
        return self._filter(super().handle(msg, now))

    def on_timer(self, kind, r, now):
        return self._filter(super().on_timer(kind, r, now))

    def sync_block(self, b, now):
        return self._filter(super().sync_block(b, now))

    def propose(self, r, now, out, tc):
        forking = self._on(FORK, r)
        if not (forking or self._on(EQUIVOCATE, r)):
            return super().propose(r, now, out, tc)
        tip = self.tree.get(self.qc_high.block)
        alt_parent = self._alt_parent(tip.round)
        if alt_parent is None:
            return super().propose(r, now, out, tc)
        log = self._take_log(tip)
        honest = Block.create(tip, self.qc_high, r, self.cfg.payload(r, self.id), self.id,
                              self.cfg.signer, tc, log)
        alt = Block.create(alt_parent, self.tree.certified[alt_parent.id], r,
                           self.cfg.payload(r, self.id) + b"/alt", self.id, self.cfg.signer, tc, ())
        if forking:
            out.sends.append(Send(None, Proposal(alt)))
        else:
            out.sends += self._split_sends(honest, alt)

    def should_vote(self, b):
        if self._votes_anyway(b):
            return b.round >= self.r_cur - 1 and b.id not in self.voted_blocks
        return super().should_vote(b)

    def cast_vote(self, b, now, out):
        if not self._lying(b.round):
            self.voted_blocks.add(b.id)
            return super().cast_vote(b, now, out)
        vote = self._lie(b, self.cfg.mode.uses_intervals)
        self.voted_blocks.add(b.id)
        if not self.history.voted or b.round > self.history.voted[-1][1]:
            self.history.record(b.id, b.round)
        self.r_vote = max(self.r_vote, b.round)
        dest = None if self.cfg.vote_broadcast else self.leader(b.round + 1)
        out.sends.append(Send(dest, VoteMsg(vote)))


class ByzantineStreamlet(_Byzantine, StreamletReplica):
    def __init__(self, rid, cfg, spec: FaultSpec, coalition=frozenset(), seed: int = 0):
        StreamletReplica.__init__(self, rid, cfg)
        self.spec = spec
        self.coalition = frozenset(coalition)
        self.rng = random.Random(seed)
        self.voted_blocks: set = set()

    def start(self, now):
        return self._filter(super().start(now))

    def handle(self, msg, now):
        return self._filter(super().handle(msg, now))

    def on_round_start(self, r, now):
        return self._filter(super().on_round_start(r, now))

    def sync_block(self, b, now):
        return self._filter(super().sync_block(b, now))

    def propose(self, r, out, parent=None):
        forking = self._on(FORK, r)
        if parent is not None or not (forking or self._on(EQUIVOCATE, r)):
            return super().propose(r, out, parent)
        tip = self.best_tip()
        alt_parent = self._alt_parent(tip.round)
        if alt_parent is None:
            return super().propose(r, out)
        honest = Block.create(tip, self.tree.certified[tip.id], r, self.cfg.payload(r, self.id),
                              self.id, self.cfg.signer)
        alt = Block.create(alt_parent, self.tree.certified[alt_parent.id], r,
                           self.cfg.payload(r, self.id) + b"/alt", self.id, self.cfg.signer)
        if forking:
            out.sends.append(Send(None, Proposal(alt)))
        else:
            out.sends += self._split_sends(honest, alt)

    def on_proposal(self, b, out):
        if not self._votes_anyway(b):
            return super().on_proposal(b, out)
        self._insert(b, out)
        if b.round >= self.r_cur - 1 and b.id not in self.voted_blocks:
            self.cast_vote(b, out)

    def cast_vote(self, b, out):
        if not self._lying(b.round):
            if b.round in self.voted_rounds:
                return
            self.voted_blocks.add(b.id)
            return super().cast_vote(b, out)
        vote = self._lie(b, False)
        self.voted_blocks.add(b.id)
        self.voted_rounds.add(b.round)
        if not self.history.voted or b.round > self.history.voted[-1][1]:
            self.history.record(b.id, b.round)
        out.sends.append(Send(None, VoteMsg(vote)))
