"""DiemBFT replica with strong-vote accounting.

The replica is an event-driven state machine: every handler takes the current
simulated time and returns an Output (messages, commits, strength updates,
timer requests). All timing is owned by the caller.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

from .accounting import FBFT, MARKER_ONLY, EndorsementLedger, EndorsementMode, make_endorsement
from .chain import BlockTree, VoteHistory
from .lightclient import build_commit_log
from .messages import LateVote, Message, Output, Proposal, Send, TimeoutNotice, VoteMsg
from .types import (Block, BlockId, InvalidCertificate, LogEntry, Signer, StrongQC, StrongVote,
                    TimeoutCertificate, TimeoutMsg, qc_rank)


@dataclass
class DiemConfig:
    n: int
    f: int
    signer: Signer
    mode: EndorsementMode = MARKER_ONLY
    timer_base: float = 40.0
    backoff: bool = False
    # extra wait after the (2f+1)-th vote: a default plus per-round overrides
    extra_wait: float = 0.0
    extra_wait_rounds: dict[int, float] = field(default_factory=dict)
    vote_broadcast: bool = False
    payload: Callable[[int, int], bytes] = lambda rnd, rid: b"r%d/p%d" % (rnd, rid)

    def leader(self, r: int) -> int:
        return r % self.n

    def wait_for(self, r: int) -> float:
        return self.extra_wait_rounds.get(r, self.extra_wait)


class DiemReplica:
    def __init__(self, rid: int, cfg: DiemConfig):
        self.id = rid
        self.cfg = cfg
        self.n, self.f = cfg.n, cfg.f
        self.r_vote = 0
        self.r_lock = 0
        self.r_cur = 0
        self.qc_high = StrongQC.genesis()
        self.tree = BlockTree()
        self.history = VoteHistory()
        self.ledger = EndorsementLedger(cfg.f, cfg.mode)
        self.pending_votes: dict[int, dict[BlockId, dict[int, StrongVote]]] = {}
        self.pending_timeouts: dict[int, dict[int, TimeoutMsg]] = {}
        self.formed: dict[tuple[int, BlockId], StrongQC] = {}
        self.extra_armed: set[int] = set()
        self.timed_out: set[int] = set()
        self.handled_proposals: set[BlockId] = set()
        self.committed: set[BlockId] = set()
        self.commit_order: list[BlockId] = []
        self.pending_log: dict[BlockId, int] = {}
        self.last_tc: Optional[TimeoutCertificate] = None
        self.consecutive_timeouts = 0
        self.forwarded_late: set[tuple[BlockId, int]] = set()
        self._checked_qcs: set[tuple] = set()

    # helpers ----------------------------------------------------------------

    def leader(self, r: int) -> int:
        return self.cfg.leader(r)

    def _sign_vote(self, vote: StrongVote) -> StrongVote:
        return vote.signed(self.cfg.signer)

    def valid_qc(self, qc: StrongQC) -> bool:
        if qc.is_genesis:
            return True
        key = (qc.block, qc.round, tuple(v.signature for v in qc.votes))
        if key in self._checked_qcs:
            return True
        ok = qc.is_valid(self.f, self.cfg.signer)
        if ok:
            self._checked_qcs.add(key)
        return ok

    def sync_block(self, b: Block, now: float) -> Output:
        """Insert a block fetched for causal delivery and process its QC; never votes."""
        out = Output()
        if b.id in self.tree or b.parent not in self.tree or not self.valid_qc(b.qc):
            return out
        self.tree.insert(b)
        self._process_qc(b.qc, now, out)
        for r, per_block in list(self.pending_votes.items()):
            if b.id in per_block:
                self._try_form(r, b.id, now, out)
        return out

    # entry points -------------------------------------------------------------

    def start(self, now: float) -> Output:
        out = Output()
        self._enter_round(1, now, out)
        return out

    def handle(self, msg: Message, now: float) -> Output:
        out = Output()
        if isinstance(msg, Proposal):
            self.on_proposal(msg.block, now, out)
        elif isinstance(msg, VoteMsg):
            self.on_vote(msg.vote, now, out)
        elif isinstance(msg, TimeoutNotice):
            self.on_timeout_msg(msg, now, out)
        elif isinstance(msg, LateVote):
            self.on_late_vote(msg.vote, now, out)
        return out

    def on_timer(self, kind: str, r: int, now: float) -> Output:
        out = Output()
        if kind == "round":
            self.on_timer_expired(r, now, out)
        elif kind == "extra":
            self.extra_armed.discard(r)
            for bid in list(self.pending_votes.get(r, {})):
                self._try_form(r, bid, now, out, force=True)
        return out

    # rounds and proposals -----------------------------------------------------

    def _enter_round(self, r: int, now: float, out: Output, tc: Optional[TimeoutCertificate] = None):
        if r <= self.r_cur:
            return
        self.r_cur = r
        dur = self.cfg.timer_base
        if self.cfg.backoff:
            dur *= 2 ** min(self.consecutive_timeouts, 10)
        out.timers.append(("round", r, now + dur))
        if self.leader(r) == self.id:
            carry = tc if tc is not None and self.qc_high.round < r - 1 else None
            self.propose(r, now, out, carry)

    def _take_log(self, parent: Block) -> tuple[LogEntry, ...]:
        # skip updates the branch being extended already logs
        pending, self.pending_log = self.pending_log, {}
        if not pending:
            return ()
        lowest = min(self.tree.get(b).height for b in pending)
        logged: dict[BlockId, int] = {}
        cur = parent
        while not cur.is_genesis and cur.height > lowest:
            for e in cur.commit_log:
                logged[e.block] = max(e.strength, logged.get(e.block, e.strength))
            cur = self.tree.get(cur.parent)
        return tuple(build_commit_log(pending.items(), lambda b: self.tree.get(b).height, logged))

    def propose(self, r: int, now: float, out: Output, tc: Optional[TimeoutCertificate]):
        parent = self.tree.get(self.qc_high.block)
        block = Block.create(parent, self.qc_high, r, self.cfg.payload(r, self.id), self.id,
                             self.cfg.signer, tc, self._take_log(parent))
        out.sends.append(Send(None, Proposal(block)))

    def valid_proposal(self, b: Block) -> bool:
        if b.proposer != self.leader(b.round) or not b.check_id():
            return False
        if not b.verify_signature(self.cfg.signer) or b.qc is None or not self.valid_qc(b.qc):
            return False
        if b.tc is not None and not b.tc.is_valid(self.f, self.cfg.signer):
            return False
        return b.parent in self.tree

    def on_proposal(self, b: Block, now: float, out: Output):
        if b.id in self.handled_proposals or not self.valid_proposal(b):
            return
        self.handled_proposals.add(b.id)
        if b.id not in self.tree:
            self.tree.insert(b)
        self._process_qc(b.qc, now, out)
        if b.tc is not None:
            self._process_tc(b.tc, now, out)
        if self.should_vote(b):
            self.cast_vote(b, now, out)
        for r, per_block in list(self.pending_votes.items()):
            if b.id in per_block:
                self._try_form(r, b.id, now, out)

    def should_vote(self, b: Block) -> bool:
        parent = self.tree.get(b.parent)
        if b.round != self.r_cur or b.round <= self.r_vote or b.round in self.timed_out:
            return False
        if parent.round < self.r_lock:
            return False
        # the commit log must match what this replica can confirm itself
        return all(self.ledger.strength.get(e.block, -1) >= e.strength for e in b.commit_log)

    def cast_vote(self, b: Block, now: float, out: Output):
        marker, intervals = make_endorsement(self.history, self.tree, b.id, self.cfg.mode)
        vote = self._sign_vote(StrongVote(self.id, b.id, b.round, marker, intervals))
        self.history.record(b.id, b.round)
        self.r_vote = max(self.r_vote, b.round)
        dest = None if self.cfg.vote_broadcast else self.leader(b.round + 1)
        out.sends.append(Send(dest, VoteMsg(vote)))

    # votes and certificates ---------------------------------------------------

    def on_vote(self, vote: StrongVote, now: float, out: Output):
        if not self.cfg.vote_broadcast and self.leader(vote.round + 1) != self.id:
            return
        if not vote.verify(self.cfg.signer):
            return
        key = (vote.round, vote.block)
        if key in self.formed:
            self._late_vote(vote, out)
            return
        if vote.round < self.r_cur - 1:
            return  # stale; buffer holds at most one round back
        per_voter = self.pending_votes.setdefault(vote.round, {}).setdefault(vote.block, {})
        if vote.voter in per_voter:
            return
        per_voter[vote.voter] = vote
        self._try_form(vote.round, vote.block, now, out)

    def _late_vote(self, vote: StrongVote, out: Output):
        qc = self.formed[(vote.round, vote.block)]
        if self.cfg.mode.kind != FBFT or vote.voter in qc.voters:
            return
        key = (vote.block, vote.voter)
        if key in self.forwarded_late:
            return
        self.forwarded_late.add(key)
        out.sends.append(Send(None, LateVote(vote)))

    def on_late_vote(self, vote: StrongVote, now: float, out: Output):
        if self.cfg.mode.kind != FBFT or vote.block not in self.tree or not vote.verify(self.cfg.signer):
            return
        if not self.tree.is_certified(vote.block):
            return
        self._record_updates(self.ledger.register_direct_votes(vote.block, [vote], self.tree), out)

    def _try_form(self, r: int, bid: BlockId, now: float, out: Output, force: bool = False):
        if (r, bid) in self.formed or bid not in self.tree:
            return
        votes = self.pending_votes.get(r, {}).get(bid, {})
        if len(votes) < 2 * self.f + 1:
            return
        wait = self.cfg.wait_for(r)
        if not force and wait > 0 and len(votes) < self.n:
            if r not in self.extra_armed:
                self.extra_armed.add(r)
                out.timers.append(("extra", r, now + wait))
            return
        qc = StrongQC.from_votes(bid, r, votes.values())
        self.formed[(r, bid)] = qc
        self._process_qc(qc, now, out)

    def _record_updates(self, updates, out: Output):
        for bid, x in updates:
            self.pending_log[bid] = max(x, self.pending_log.get(bid, x))
        out.strength += updates

    def _process_qc(self, qc: StrongQC, now: float, out: Output):
        if qc.block not in self.tree:
            return
        if not qc.is_genesis:
            self.tree.add_qc(qc)
            parent = self.tree.parent_of(qc.block)
            self.r_lock = max(self.r_lock, parent.round)
        if qc_rank(qc) > qc_rank(self.qc_high):
            self.qc_high = qc
        self._record_updates(self.ledger.register_qc(qc, self.tree), out)
        self._check_regular_commit(qc.block, out)
        if qc.round + 1 > self.r_cur:
            self.consecutive_timeouts = 0
            self._enter_round(qc.round + 1, now, out)

    def _check_regular_commit(self, tip: BlockId, out: Output):
        g = self.tree.get(tip)
        if g.parent is None:
            return
        c = self.tree.get(g.parent)
        if c.parent is None or c.round + 1 != g.round:
            return
        d = self.tree.get(c.parent)
        if d.is_genesis or d.round + 1 != c.round or d.id in self.committed:
            return
        newly = []
        for b in self.tree.ancestors(d.id):
            if b.is_genesis or b.id in self.committed:
                break
            newly.append(b.id)
        for bid in reversed(newly):
            self.committed.add(bid)
            self.commit_order.append(bid)
        out.commits += list(reversed(newly))

    # timeouts -----------------------------------------------------------------

    def on_timer_expired(self, r: int, now: float, out: Output):
        if r != self.r_cur or r in self.timed_out:
            return
        self.timed_out.add(r)
        self.r_vote = max(self.r_vote, r)
        self.consecutive_timeouts += 1
        msg = TimeoutMsg(r, self.qc_high, self.id).signed(self.cfg.signer)
        out.sends.append(Send(None, TimeoutNotice(msg, self.last_tc)))

    def on_timeout_msg(self, note: TimeoutNotice, now: float, out: Output):
        msg = note.msg
        if not msg.verify(self.cfg.signer) or not self.valid_qc(msg.qc_high):
            return
        self._process_qc(msg.qc_high, now, out)
        if note.last_tc is not None:
            self._process_tc(note.last_tc, now, out)
        bucket = self.pending_timeouts.setdefault(msg.round, {})
        if msg.sender in bucket:
            return
        bucket[msg.sender] = msg
        if len(bucket) >= 2 * self.f + 1 and msg.round >= self.r_cur:
            tc = TimeoutCertificate(msg.round, tuple(sorted(bucket.values(), key=lambda m: m.sender)))
            self._process_tc(tc, now, out)

    def _process_tc(self, tc: TimeoutCertificate, now: float, out: Output):
        try:
            tc.validate(self.f, self.cfg.signer)
        except InvalidCertificate:
            return
        for m in tc.msgs:
            if self.valid_qc(m.qc_high):
                self._process_qc(m.qc_high, now, out)
        if self.last_tc is None or tc.round > self.last_tc.round:
            self.last_tc = tc
        if tc.round + 1 > self.r_cur:
            self._enter_round(tc.round + 1, now, out, tc)

    # introspection ------------------------------------------------------------

    def strength_of(self, bid: BlockId) -> Optional[int]:
        return self.ledger.strength.get(bid)
