"""Lock-step Streamlet replica with height-marker strong votes."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

from .accounting import MARKER_ONLY, EndorsementLedger, EndorsementMode, compute_marker
from .chain import BlockTree, VoteHistory
from .messages import OTHERS, Message, Output, Proposal, Send, VoteMsg, message_digest
from .types import Block, BlockId, Signer, StrongQC, StrongVote


@dataclass
class StreamletConfig:
    n: int
    f: int
    signer: Signer
    mode: EndorsementMode = MARKER_ONLY
    delta: float = 10.0
    echo: bool = True
    payload: Callable[[int, int], bytes] = lambda rnd, rid: b"r%d/p%d" % (rnd, rid)

    def leader(self, r: int) -> int:
        return r % self.n

    @property
    def round_length(self) -> float:
        return 2 * self.delta


class StreamletReplica:
    def __init__(self, rid: int, cfg: StreamletConfig):
        self.id = rid
        self.cfg = cfg
        self.n, self.f = cfg.n, cfg.f
        self.r_cur = 0
        self.tree = BlockTree()
        self.history = VoteHistory()
        self.ledger = EndorsementLedger(cfg.f, cfg.mode, streamlet=True)
        self.votes: dict[BlockId, dict[int, StrongVote]] = {}
        self.seen: set[bytes] = set()
        self.voted_rounds: set[int] = set()
        self.proposal_rounds: set[int] = set()
        self.committed: set[BlockId] = set()
        self.commit_order: list[BlockId] = []

    def leader(self, r: int) -> int:
        return self.cfg.leader(r)

    def sync_block(self, b: Block, now: float) -> Output:
        """Insert a block fetched for causal delivery (no vote is cast for it)."""
        out = Output()
        if b.id not in self.tree:
            self._insert(b, out)
        return out

    def _insert(self, b: Block, out: Output):
        if b.id in self.tree:
            return
        self.tree.insert(b)
        self._merge_votes(b.qc.block, b.qc.votes, out)
        if b.id in self.votes:
            self._merge_votes(b.id, [], out)

    # rounds -------------------------------------------------------------------

    def start(self, now: float) -> Output:
        return self.on_round_start(1, now)

    def on_round_start(self, r: int, now: float) -> Output:
        out = Output()
        if r <= self.r_cur:
            return out
        self.r_cur = r
        if self.leader(r) == self.id:
            self.propose(r, out)
        return out

    def best_tip(self) -> Block:
        tips = self.tree.longest_certified_chains()
        return self.tree.get(min(tips))

    def propose(self, r: int, out: Output, parent: Optional[Block] = None):
        parent = parent or self.best_tip()
        qc = self.tree.certified[parent.id]
        block = Block.create(parent, qc, r, self.cfg.payload(r, self.id), self.id, self.cfg.signer)
        out.sends.append(Send(None, Proposal(block)))

    # messages -----------------------------------------------------------------

    def handle(self, msg: Message, now: float) -> Output:
        out = Output()
        d = message_digest(msg)
        if d in self.seen:
            return out
        self.seen.add(d)
        if isinstance(msg, Proposal):
            if not self.valid_proposal(msg.block):
                return out
            if self.cfg.echo:
                out.sends.append(Send(OTHERS, msg))
            self.on_proposal(msg.block, out)
        elif isinstance(msg, VoteMsg):
            if not msg.vote.verify(self.cfg.signer):
                return out
            if self.cfg.echo:
                out.sends.append(Send(OTHERS, msg))
            self._merge_votes(msg.vote.block, [msg.vote], out)
        return out

    def valid_proposal(self, b: Block) -> bool:
        if b.proposer != self.leader(b.round) or not b.check_id() or b.qc is None:
            return False
        if not b.verify_signature(self.cfg.signer):
            return False
        if not (b.qc.is_genesis or b.qc.is_valid(self.f, self.cfg.signer)):
            return False
        return b.parent in self.tree

    def on_proposal(self, b: Block, out: Output):
        self._insert(b, out)
        first = b.round not in self.proposal_rounds
        self.proposal_rounds.add(b.round)
        if first and self.should_vote(b):
            self.cast_vote(b, out)

    def should_vote(self, b: Block) -> bool:
        if b.round != self.r_cur or b.round in self.voted_rounds:
            return False
        tips = self.tree.longest_certified_chains()
        return b.parent in tips

    def cast_vote(self, b: Block, out: Output):
        marker = compute_marker(self.history, self.tree, b.id, by_height=True)
        vote = StrongVote(self.id, b.id, b.round, marker).signed(self.cfg.signer)
        self.voted_rounds.add(b.round)
        self.history.record(b.id, b.round)
        out.sends.append(Send(None, VoteMsg(vote)))

    def _merge_votes(self, bid: BlockId, votes, out: Output):
        store = self.votes.setdefault(bid, {})
        for v in votes:
            if v.block == bid and v.voter not in store:
                store[v.voter] = v
        if bid not in self.tree or len(store) < 2 * self.f + 1:
            return
        was_certified = self.tree.is_certified(bid)
        qc = StrongQC.from_votes(bid, self.tree.get(bid).round, store.values())
        if not self.tree.add_qc(qc) and was_certified:
            return
        out.strength += self.ledger.register_qc(qc, self.tree)
        if not was_certified:
            self._check_commit(bid, out)

    def _check_commit(self, bid: BlockId, out: Output):
        b = self.tree.get(bid)
        middles = [b] + [self.tree.get(c) for c in self.tree.children[bid]]
        if b.parent is not None:
            middles.append(self.tree.get(b.parent))
        for m in middles:
            if self._centred(m):
                self._commit(m.id, out)

    def _centred(self, m: Block) -> bool:
        if m.parent is None or not self.tree.is_certified(m.id):
            return False
        p = self.tree.get(m.parent)
        if p.is_genesis or p.round != m.round - 1:
            return False
        return any(self.tree.blocks[c].round == m.round + 1 and self.tree.is_certified(c)
                   for c in self.tree.children[m.id])

    def _commit(self, bid: BlockId, out: Output):
        newly = []
        for b in self.tree.ancestors(bid):
            if b.is_genesis or b.id in self.committed:
                break
            newly.append(b.id)
        for x in reversed(newly):
            self.committed.add(x)
            self.commit_order.append(x)
        out.commits += list(reversed(newly))

    def strength_of(self, bid: BlockId) -> Optional[int]:
        return self.ledger.strength.get(bid)
