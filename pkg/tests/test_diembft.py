from sftbft.accounting import FULL_INTERVALS
from sftbft.diembft import DiemConfig, DiemReplica
from sftbft.messages import Proposal, VoteMsg
from sftbft.types import Block, LogEntry, Signer

from pump import Pump

N, F = 4, 1


def engines(mode=None, **kw):
    cfg = DiemConfig(N, F, Signer(N, b"unit"), **({"mode": mode} if mode else {}), **kw)
    return {i: DiemReplica(i, cfg) for i in range(N)}


def test_fault_free_rounds_commit():
    reps = engines()
    Pump(reps).start().run(12)
    for rep in reps.values():
        assert rep.r_cur >= 12
        assert len(rep.committed) >= 8
        assert rep.commit_order == reps[0].commit_order[:len(rep.commit_order)]
    # FIFO delivery always drops the same last voter, so QCs stay at 2f+1 and strength at f
    first = reps[0].commit_order[0]
    assert reps[0].strength_of(first) == F


def test_extra_wait_reaches_2f():
    reps = engines(extra_wait=5.0)
    p = Pump(reps).start()
    for r in range(1, 10):
        p.run(r)
        for i in range(N):
            if (i, "extra", r) in p.timers:
                p.fire(i, "extra", r)
    first = reps[0].commit_order[0]
    assert reps[0].strength_of(first) == 2 * F


def test_interval_mode_runs_too():
    reps = engines(FULL_INTERVALS)
    p = Pump(reps).start().run(8)
    votes = [m.vote for _, m in p.sent if isinstance(m, VoteMsg)]
    assert votes and all(v.intervals is not None and v.marker is None for v in votes)
    assert all(len(r.committed) >= 4 for r in reps.values())


def test_votes_go_to_next_leader():
    reps = engines()
    p = Pump(reps).start().run(3)
    for src, msg in p.sent:
        if isinstance(msg, VoteMsg):
            assert msg.vote.voter == src
    # voter 1 never collects for round 1 (leader of round 2 is 2)
    assert 1 not in reps[1].pending_votes.get(1, {})


def test_commit_log_lists_strength_updates():
    reps = engines()
    p = Pump(reps).start().run(10)
    logged = [e for _, m in p.sent if isinstance(m, Proposal) for e in m.block.commit_log]
    assert logged
    tree = reps[0].tree
    for e in logged:
        assert e.block in tree and 1 <= e.strength <= 2 * F
    # a block's update is logged once per strength along one branch
    assert len({(e.block, e.strength) for e in logged}) == len(logged)


def test_vote_refused_for_unconfirmed_log():
    reps = engines()
    # replica 2 leads round 6 but never sees its own proposal, so it has not voted in round 6
    Pump(reps, drop=lambda s, d, m: d == 2 and isinstance(m, Proposal) and m.block.round == 6).start().run(6)
    rep = reps[2]
    assert rep.r_cur == 6 and rep.r_vote == 5
    leader = rep.leader(rep.r_cur)
    parent = rep.tree.get(rep.qc_high.block)
    bogus = Block.create(parent, rep.qc_high, rep.r_cur, b"x", leader, rep.cfg.signer,
                         commit_log=(LogEntry(parent.id, 2 * F),))
    assert rep.strength_of(parent.id) is None
    assert not rep.should_vote(bogus)
    honest = Block.create(parent, rep.qc_high, rep.r_cur, b"x", leader, rep.cfg.signer)
    assert rep.should_vote(honest)


def test_invalid_proposals_ignored():
    reps = engines()
    Pump(reps).start().run(3)
    rep = reps[1]
    parent = rep.tree.get(rep.qc_high.block)
    wrong_leader = Block.create(parent, rep.qc_high, rep.r_cur, b"x", (rep.r_cur + 1) % N, rep.cfg.signer)
    assert not rep.valid_proposal(wrong_leader)
    unsigned = Block.create(parent, rep.qc_high, rep.r_cur, b"x", rep.leader(rep.r_cur))
    assert not rep.valid_proposal(unsigned)


def test_timeouts_form_certificate_and_advance():
    reps = engines()
    # replica 2 (leader of round 2, collector of round 1 votes) is silent
    p = Pump(reps, drop=lambda s, d, m: s == 2).start().run(2)
    live = [i for i in reps if i != 2]
    assert all(reps[i].r_cur == 1 for i in live)
    for r in (1, 2):
        for i in live:
            p.fire(i, "round", r)
        p.run(3)
    assert all(reps[i].r_cur >= 3 for i in live)
    assert all(reps[i].last_tc is not None and reps[i].last_tc.round >= 2 for i in live)


def test_lock_blocks_votes_on_stale_branches():
    reps = engines()
    Pump(reps).start().run(6)
    rep = reps[0]
    assert rep.r_lock >= 3
    low = next(b for b in rep.tree.blocks.values() if b.round == 1)
    stale = Block.create(low, rep.tree.certified[low.id], rep.r_cur, b"s", rep.leader(rep.r_cur),
                         rep.cfg.signer)
    rep.tree.insert(stale)
    assert not rep.should_vote(stale)
