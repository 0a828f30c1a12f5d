"""Scripted attacks: the naive-counting counterexample and the one-round fork.

The counterexample driver replaces the timed network with an adversarial
scheduler. Honest replicas are unmodified engines; the script decides which
queued message is delivered next, when timers expire, and injects the
Byzantine replicas' messages. Byzantine replicas keep a shadow honest engine
so they can collect votes and propose like a leader would when the script
wants them to.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Optional

from ..diembft import DiemReplica
from ..messages import Proposal, TimeoutNotice, VoteMsg
from ..streamlet import StreamletReplica
from ..types import Block, StrongQC, StrongVote, TimeoutCertificate, TimeoutMsg
from .config import DIEMBFT, DOUBLE_VOTE, FORK, ConfigError, FaultSpec, ScenarioConfig
from .faults import ByzantineDiem, ByzantineStreamlet
from .runner import RunResult, Simulation


# ---------------------------------------------------------------------------
# counterexample roles


@dataclass(frozen=True)
class CounterexampleRoles:
    """Who plays h1..h2f and b1..b(f+1), and the rounds the script uses."""

    n: int
    f: int
    base_round: int
    hide_round: int
    fork_round: int
    honest: tuple[int, ...]
    byzantine: tuple[int, ...]

    def h(self, i: int) -> int:
        return self.honest[i - 1]

    def b(self, i: int) -> int:
        return self.byzantine[i - 1]

    def label(self, rid: int) -> str:
        if rid in self.honest:
            return f"h{self.honest.index(rid) + 1}"
        return f"b{self.byzantine.index(rid) + 1}"

    def labels(self, ids) -> set[str]:
        return {self.label(i) for i in ids}


def counterexample_roles(n: int, f: int) -> CounterexampleRoles:
    """Pick ids so the rotating leaders of the scripted rounds have the needed roles.

    Leaders of r+1 and r+2 must be Byzantine (equivocation, collecting both
    round r+1 certificates). The fork round's leader is Byzantine and also
    collects the hidden certificate one round earlier. With n = 4 the leader
    of r+4 is the leader of r again, so for f = 1 the fork moves to r+5.
    """
    r = n + 1
    lead = lambda x: x % n  # noqa: E731
    fork_round = r + 4 if f >= 2 else r + 5
    hide_round = fork_round - 1
    byz = [lead(r + 1), lead(r + 2)]
    if lead(fork_round) not in byz:
        byz.append(lead(fork_round))
    reserved = {lead(r), lead(r + 3)}
    for i in range(n):
        if len(byz) == f + 1:
            break
        if i not in byz and i not in reserved:
            byz.append(i)
    rest = sorted(i for i in range(n) if i not in byz and i not in reserved)
    # h1 proposes B_r; h_{f+1} collects the round r+2 certificate
    honest = [lead(r)] + rest[: f - 1] + [lead(r + 3)] + rest[f - 1:]
    return CounterexampleRoles(n, f, r, hide_round, fork_round, tuple(honest), tuple(byz))


Item = tuple  # (src, dst, msg)


class ShadowReplica(DiemReplica):
    """Honest-looking engine run on behalf of a Byzantine replica; it votes without
    checking the proposer's commit log, since a Byzantine voter has no reason to."""

    def should_vote(self, b):
        parent = self.tree.get(b.parent)
        if b.round != self.r_cur or b.round <= self.r_vote or b.round in self.timed_out:
            return False
        return parent.round >= self.r_lock


class ScriptedSimulation(Simulation):
    """Simulation whose deliveries and timers are chosen explicitly by a script."""

    def __init__(self, cfg: ScenarioConfig):
        self.outbox: list[Item] = []
        self.timer_requests: list[tuple[int, str, int]] = []
        super().__init__(cfg)

    def schedule_delivery(self, src, dst, msg, at):
        self.outbox.append((src, dst, msg))

    def schedule_timer(self, rid, kind, r, at):
        self.timer_requests.append((rid, kind, r))

    def step(self):
        self.now += 1.0

    def deliver_where(self, pred: Callable[[int, int, object], bool], limit: int = 100_000) -> int:
        """Deliver queued messages matching pred, oldest first, until none match."""
        count = 0
        while self.stop_reason is None and count < limit:
            for i, (src, dst, msg) in enumerate(self.outbox):
                if pred(src, dst, msg):
                    del self.outbox[i]
                    self.step()
                    self.deliver(dst, src, msg)
                    count += 1
                    break
            else:
                break
        return count

    def drop_where(self, pred) -> list[Item]:
        kept, dropped = [], []
        for item in self.outbox:
            (dropped if pred(*item) else kept).append(item)
        self.outbox = kept
        return dropped

    def inject(self, src: int, dests, msg):
        """A Byzantine message, sent only to dests and delivered immediately."""
        if isinstance(msg, Proposal):
            self.registry.add(msg.block)
            self.metrics.on_proposed(msg.block.id, msg.block.round, msg.block.height, src, self.now)
        for dst in dests:
            self._emit({"t": self.now, "ev": "send", "actor": src, "dest": dst, "msg": msg.to_dict()})
            if dst != src:
                self.metrics.on_message(msg.kind, self.engines[src].r_cur)
            self.step()
            self.deliver(dst, src, msg)

    def expire(self, rid: int, r: int):
        self.step()
        self.fire_timer(rid, "round", r)

    def fire_extra_timers(self) -> bool:
        pending = [t for t in self.timer_requests if t[1] == "extra"]
        self.timer_requests = [t for t in self.timer_requests if t[1] != "extra"]
        for rid, kind, r in pending:
            self.step()
            self.fire_timer(rid, kind, r)
        return bool(pending)


def _is_proposal(msg, rnd: Optional[int] = None) -> bool:
    return isinstance(msg, Proposal) and (rnd is None or msg.block.round == rnd)


def _is_vote(msg, block=None) -> bool:
    return isinstance(msg, VoteMsg) and (block is None or msg.vote.block == block)


class EquivocationSimulation(ScriptedSimulation):
    """Equivocation plus a late vote from h_{f+1} that naive counting mistakes for endorsement.

    Rounds r..r+2 build B_r, B_{r+1}, B_{r+2} with the attack's exact quorums.
    A certificate extending B_{r+2} that includes b_{f+1} is shown only to
    h_{f+1}, which gives every block of that 3-chain 2f+2 naive endorsers while
    the other honest replicas stay locked at r+1. The fork then grows from
    B'_{r+1} with honest votes.
    """

    def __init__(self, cfg: ScenarioConfig):
        if cfg.protocol != DIEMBFT:
            raise ConfigError("the counterexample script runs on diembft")
        self.roles = counterexample_roles(cfg.n, cfg.f)
        super().__init__(cfg)
        self.byzantine = set(self.roles.byzantine)
        self.blocks: dict[str, Block] = {}
        self.qcs: dict[str, StrongQC] = {}

    def build_engines(self):
        ecfg = self.diem_config()
        byz = set(self.roles.byzantine)
        return {i: (ShadowReplica if i in byz else DiemReplica)(i, ecfg) for i in range(self.n)}

    # helpers -------------------------------------------------------------------

    def _byz_vote(self, voter: int, b: Block) -> StrongVote:
        return StrongVote(voter, b.id, b.round, 0, None).signed(self.signer)

    def _byz_timeout(self, sender: int, rnd: int, qc: StrongQC) -> TimeoutNotice:
        return TimeoutNotice(TimeoutMsg(rnd, qc, sender).signed(self.signer))

    def _proposal_from(self, proposer: int, rnd: int) -> Block:
        for src, _, msg in self.outbox:
            if src == proposer and _is_proposal(msg, rnd):
                return msg.block
        raise RuntimeError(f"replica {proposer} has not proposed in round {rnd}")

    def _votes_for(self, b: Block, voters) -> list[StrongVote]:
        found = {}
        for _, _, msg in self.outbox:
            if _is_vote(msg, b.id) and msg.vote.voter in voters:
                found[msg.vote.voter] = msg.vote
        return [found[v] for v in sorted(found)]

    # script ---------------------------------------------------------------------

    def run(self) -> RunResult:
        ro = self.roles
        f, r = self.f, ro.base_round
        H = list(ro.honest)
        B = list(ro.byzantine)
        A = H[:f]                    # h1..hf
        C = H[f:]                    # h_{f+1}..h_{2f}
        hs = ro.h(f + 1)
        lead = lambda x: x % self.n  # noqa: E731

        # synchronous prefix up to (but excluding) the round-r proposal
        for rid in range(self.n):
            self.apply(rid, self.engines[rid].start(self.now))
        self.deliver_where(lambda s, d, m: not (isinstance(m, Proposal) and m.block.round >= r))
        b_r = self._proposal_from(lead(r), r)
        self.blocks["B_r"] = b_r
        self.blocks["B_r-1"] = self.engines[lead(r)].tree.get(b_r.parent)

        # round r: only h1..hf and the Byzantine replicas see B_r
        self.deliver_where(lambda s, d, m: _is_proposal(m, r) and d in A + B)
        self.drop_where(lambda s, d, m: _is_proposal(m, r))
        self.deliver_where(lambda s, d, m: _is_vote(m, b_r.id))
        b1 = ro.b(1)
        qc_r = self.engines[b1].formed[(r, b_r.id)]
        self.qcs["QC_r"] = qc_r

        # round r+1: b1 equivocates; h_{f+1}.. learn QC_r from a Byzantine timeout message
        b_r1 = self._proposal_from(b1, r + 1)
        self.blocks["B_r+1"] = b_r1
        self.deliver_where(lambda s, d, m: _is_proposal(m, r + 1) and d in A + B)
        self.drop_where(lambda s, d, m: _is_proposal(m, r + 1))
        self.inject(b1, C, self._byz_timeout(b1, r + 1, qc_r))
        prev = self.blocks["B_r-1"]
        fork_r1 = Block.create(prev, self.engines[b1].tree.certified[prev.id], r + 1,
                               self.diem_config().payload(r + 1, b1) + b"/fork", b1, self.signer)
        self.blocks["B'_r+1"] = fork_r1
        self.inject(b1, C + B, Proposal(fork_r1))
        b2 = ro.b(2)
        self.deliver_where(lambda s, d, m: _is_vote(m, b_r1.id))
        self.qcs["QC_r+1"] = self.engines[b2].formed[(r + 1, b_r1.id)]
        for b in B:
            self.inject(b, [b2], VoteMsg(self._byz_vote(b, fork_r1)))
        self.deliver_where(lambda s, d, m: _is_vote(m, fork_r1.id))
        self.qcs["QC'_r+1"] = self.engines[b2].formed[(r + 1, fork_r1.id)]

        # round r+2: h_{f+2}.. do not see B_{r+2}; b_{f+1} does not vote for it
        b_r2 = self._proposal_from(b2, r + 2)
        self.blocks["B_r+2"] = b_r2
        self.deliver_where(lambda s, d, m: _is_proposal(m, r + 2) and d in A + [hs] + B)
        self.drop_where(lambda s, d, m: _is_proposal(m, r + 2))
        self.drop_where(lambda s, d, m: _is_vote(m, b_r2.id) and s == ro.b(f + 1))
        self.deliver_where(lambda s, d, m: _is_vote(m, b_r2.id))
        self.qcs["QC_r+2"] = self.engines[hs].formed[(r + 2, b_r2.id)]

        # rounds r+3 .. hide_round: main-chain blocks extending B_{r+2}
        qc_high = self.qcs["QC_r+2"]
        rnd = r + 3
        while True:
            blk = self._proposal_from(lead(rnd), rnd)
            self.blocks[f"B_r+{rnd - r}"] = blk
            self.deliver_where(lambda s, d, m, rnd=rnd: _is_proposal(m, rnd))
            if rnd == ro.hide_round:
                break
            # Byzantine replicas abstain, so this block is never certified
            self.drop_where(lambda s, d, m, blk=blk: _is_vote(m, blk.id) and s in B)
            self.deliver_where(lambda s, d, m, blk=blk: _is_vote(m, blk.id))
            self._timeout_round(rnd, qc_high, H, B)
            rnd += 1

        hidden = self.blocks[f"B_r+{ro.hide_round - r}"]
        votes = self._votes_for(hidden, set(A)) + [self._byz_vote(b, hidden) for b in B]
        qc_hidden = StrongQC.from_votes(hidden.id, hidden.round, votes)
        self.qcs["QC_hidden"] = qc_hidden
        self.drop_where(lambda s, d, m: _is_vote(m, hidden.id))
        tc = self._timeout_round(ro.hide_round, qc_high, H, B)

        # only h_{f+1} learns the certificate; it now locks on B_{r+2}
        bf = lead(ro.fork_round)
        self.inject(bf, [hs], self._byz_timeout(bf, ro.fork_round, qc_hidden))

        # the fork: B'_{fork} extends B'_{r+1}; honest replicas locked at r+1 vote for it
        self.drop_where(lambda s, d, m: s in B)
        fork_block = Block.create(fork_r1, self.qcs["QC'_r+1"], ro.fork_round,
                                  self.diem_config().payload(ro.fork_round, bf) + b"/fork", bf,
                                  self.signer, tc)
        self.blocks["B'_fork"] = fork_block
        self.inject(bf, H + B, Proposal(fork_block))

        # with f >= 2 only h_{f+2} of C votes on the fork, matching the drawn quorum
        held = {h for h in C if h != ro.h(f + 2)} if f >= 2 else set()
        target = ro.fork_round + 6
        while self.stop_reason is None:
            moved = self.deliver_where(lambda s, d, m: not (s in held and _is_vote(m)))
            if max(self.engines[h].r_cur for h in H) >= target:
                break
            if not self.fire_extra_timers() and not moved:
                break
        return self.finish(self.stop_reason or "script")

    def _timeout_round(self, rnd: int, qc_high: StrongQC, H, B) -> TimeoutCertificate:
        """All honest replicas time out; Byzantine replicas join so a TC forms everywhere."""
        for h in H:
            self.expire(h, rnd)
        msgs = {m.msg.sender: m.msg for _, _, m in self.outbox
                if isinstance(m, TimeoutNotice) and m.msg.round == rnd}
        for b in B:
            note = self._byz_timeout(b, rnd, qc_high)
            msgs[b] = note.msg
            self.inject(b, H + B, note)
        self.deliver_where(lambda s, d, m: isinstance(m, TimeoutNotice) and m.msg.round == rnd)
        chosen = [msgs[k] for k in sorted(msgs)][: 2 * self.f + 1]
        return TimeoutCertificate(rnd, tuple(chosen))

    # trace inspection -------------------------------------------------------------

    def fork_qcs(self) -> list[StrongQC]:
        """Certificates of fork blocks at or after the fork round, by round."""
        out = {}
        for eng in self.engines.values():
            for bid, qc in eng.tree.certified.items():
                b = eng.tree.get(bid)
                if b.round >= self.roles.fork_round and self.registry.extends(bid, self.blocks["B'_fork"].id):
                    out[qc.round] = qc if qc.round not in out or len(qc.votes) > len(out[qc.round].votes) else out[qc.round]
        return [out[k] for k in sorted(out)]


def expected_quorums(roles: CounterexampleRoles) -> dict[str, set[str]]:
    """The attack's certificates by role label; the fork entry is the first fork QC."""
    f = roles.f
    hs = lambda lo, hi: {f"h{i}" for i in range(lo, hi + 1)}  # noqa: E731
    bs = lambda hi: {f"b{i}" for i in range(1, hi + 1)}  # noqa: E731
    fork = hs(1, f) | bs(f + 1)
    if f >= 2:
        fork.add(f"h{f + 2}")
    return {
        "QC_r": hs(1, f) | bs(f + 1),
        "QC_r+1": hs(1, f) | bs(f + 1),
        "QC'_r+1": hs(f + 1, 2 * f) | bs(f + 1),
        "QC_r+2": hs(1, f + 1) | bs(f),
        "QC_fork": fork,
    }


def _qcs_in(msg: dict):
    kind = msg["kind"]
    if kind == "proposal":
        if msg["block"]["qc"] is not None:
            yield msg["block"]["qc"]
        if msg["block"]["tc"] is not None:
            yield from (m["qc_high"] for m in msg["block"]["tc"]["msgs"])
    elif kind == "timeout":
        yield msg["msg"]["qc_high"]
        if msg["tc"] is not None:
            yield from (m["qc_high"] for m in msg["tc"]["msgs"])


def trace_quorums(lines) -> dict[str, set[str]]:
    """Recover the attack's certificates from a counterexample trace alone.

    Blocks are identified by round and ancestry, voters are mapped to role labels
    through the roles implied by the header's n and f.
    """
    records = [json.loads(line) for line in lines]
    cfg = records[0]["config"]
    roles = counterexample_roles(cfg["n"], cfg["f"])
    r = roles.base_round
    blocks: dict[str, dict] = {}
    qcs: dict[str, dict] = {}
    for rec in records:
        if rec.get("ev") != "send":
            continue
        msg = rec["msg"]
        if msg["kind"] == "proposal":
            blocks.setdefault(msg["block"]["id"], msg["block"])
        for qc in _qcs_in(msg):
            cur = qcs.get(qc["block"])
            if cur is None or len(qc["votes"]) > len(cur["votes"]):
                qcs[qc["block"]] = qc

    def only(pred) -> dict:
        found = [b for b in blocks.values() if pred(b)]
        if len(found) != 1:
            raise ValueError(f"expected one matching block, found {len(found)}")
        return found[0]

    b_r = only(lambda b: b["round"] == r)
    b_r1 = only(lambda b: b["round"] == r + 1 and b["parent"] == b_r["id"])
    fork_r1 = only(lambda b: b["round"] == r + 1 and b["parent"] != b_r["id"])
    b_r2 = only(lambda b: b["round"] == r + 2)
    fork = only(lambda b: b["round"] == roles.fork_round and b["parent"] == fork_r1["id"])

    def voters(b: dict) -> set[str]:
        return roles.labels(v["voter"] for v in qcs[b["id"]]["votes"])

    return {"QC_r": voters(b_r), "QC_r+1": voters(b_r1), "QC'_r+1": voters(fork_r1),
            "QC_r+2": voters(b_r2), "QC_fork": voters(fork)}


# ---------------------------------------------------------------------------
# one-round fork


def one_round_fork_round(n: int) -> int:
    return 2 * n + 6


class OneRoundForkSimulation(Simulation):
    """2f+1 replicas misbehave for a single round: the leader proposes a block extending
    genesis and the coalition votes for it. Everyone behaves honestly afterwards."""

    def build_engines(self):
        R = one_round_fork_round(self.n)
        lead = lambda x: x % self.n  # noqa: E731
        members = [lead(R)]
        if self.cfg.protocol == DIEMBFT:
            members.append(lead(R + 1))
        for i in range(self.n):
            if len(members) == 2 * self.f + 1:
                break
            if i not in members:
                members.append(i)
        self.coalition = frozenset(members)
        self.fork_round = R
        self.byzantine = set(members)
        engines = {}
        specs = {lead(R): FaultSpec(lead(R), FORK, rounds=(R,))}
        for m in members[1:]:
            specs[m] = FaultSpec(m, DOUBLE_VOTE, rounds=(R,))
        if self.cfg.protocol == DIEMBFT:
            ecfg = self.diem_config()
            for i in range(self.n):
                engines[i] = (ByzantineDiem(i, ecfg, specs[i], self.coalition, self.cfg.seed + i)
                              if i in specs else DiemReplica(i, ecfg))
        else:
            scfg = self.streamlet_config()
            for i in range(self.n):
                engines[i] = (ByzantineStreamlet(i, scfg, specs[i], self.coalition, self.cfg.seed + i)
                              if i in specs else StreamletReplica(i, scfg))
        engines[lead(R)].fork_base = engines[lead(R)].tree.genesis
        return engines
