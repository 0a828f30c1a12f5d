import pytest
from hypothesis import given
from hypothesis import strategies as st

from sftbft.types import (GENESIS, GENESIS_ID, Block, IntervalSet, LogEntry, Signer, StrongQC, StrongVote,
                          TimeoutCertificate, TimeoutMsg, canonical_bytes, decode, encode, faults_for,
                          hash_block_header, qc_rank)

from treebuild import child, qc_for, vote


def test_faults_for_accepts_only_3f_plus_1():
    assert [faults_for(n) for n in (4, 7, 13, 31)] == [1, 2, 4, 10]
    for n in (1, 3, 5, 6, 12):
        with pytest.raises(ValueError):
            faults_for(n)


def test_canonical_bytes_ignores_key_order():
    assert canonical_bytes({"b": 1, "a": [1, 2]}) == canonical_bytes({"a": [1, 2], "b": 1})
    assert canonical_bytes({"a": 1}) == b'{"a":1}'


def test_signer_round_trip_and_rejection():
    s = Signer(4, b"k")
    sig = s.sign(2, b"msg")
    assert s.verify(2, b"msg", sig)
    assert not s.verify(1, b"msg", sig)
    assert not s.verify(2, b"other", sig)
    assert not s.verify(9, b"msg", sig)
    assert not Signer(4, b"other-key").verify(2, b"msg", sig)
    with pytest.raises(KeyError):
        s.sign(4, b"msg")


def test_interval_set_rejects_overlap_and_adjacency():
    with pytest.raises(ValueError):
        IntervalSet(((1, 3), (3, 5)))
    with pytest.raises(ValueError):
        IntervalSet(((1, 3), (4, 5)))
    with pytest.raises(ValueError):
        IntervalSet(((5, 1),))
    assert IntervalSet.from_ranges([(4, 5), (1, 3)]).intervals == ((1, 5),)


def test_interval_set_subtract_splits():
    s = IntervalSet.from_ranges([(1, 10)]).subtract(4, 6)
    assert s.intervals == ((1, 3), (7, 10))
    assert 3 in s and 4 not in s and 7 in s
    assert s.max_value() == 10
    assert IntervalSet().max_value() is None


ranges = st.lists(st.tuples(st.integers(-5, 40), st.integers(-5, 40)), max_size=8)


@given(ranges, st.integers(-5, 40), st.integers(-5, 40))
def test_interval_set_matches_python_sets(rs, lo, hi):
    members = {r for a, b in rs for r in range(a, b + 1)}
    s = IntervalSet.from_ranges(rs)
    assert {r for r in range(-10, 50) if r in s} == members
    left = members - set(range(lo, hi + 1))
    t = s.subtract(lo, hi)
    assert {r for r in range(-10, 50) if r in t} == left
    # normal form is unique
    assert t == IntervalSet.from_ranges((r, r) for r in left)


@given(ranges)
def test_interval_set_list_round_trip(rs):
    s = IntervalSet.from_ranges(rs)
    assert IntervalSet.from_list(s.to_list()) == s
    assert decode(encode(s)) == s


def test_vote_signature_covers_marker_and_intervals():
    b = child(GENESIS, 1)
    s = Signer(4, b"k")
    v = vote(1, b, marker=0, signer=s)
    assert v.verify(s)
    assert not StrongVote(1, b.id, 1, 3, None, v.signature).verify(s)
    iv = vote(1, b, intervals=IntervalSet.from_ranges([(1, 1)]), signer=s)
    assert iv.verify(s)
    assert not StrongVote(1, b.id, 1, None, IntervalSet(), iv.signature).verify(s)


def test_qc_validation():
    s = Signer(4, b"k")
    b = child(GENESIS, 1)
    qc = qc_for(b, (0, 1, 2), signer=s)
    qc.validate(1, s)
    assert not qc_for(b, (0, 1), signer=s).is_valid(1, s)
    dup = StrongQC(b.id, 1, (vote(0, b, signer=s),) * 3)
    assert not dup.is_valid(1)
    forged = StrongQC(b.id, 1, qc.votes[:2] + (StrongVote(2, b.id, 1, 0, None, b"x" * 32),))
    assert forged.is_valid(1) and not forged.is_valid(1, s)
    other = child(GENESIS, 2, payload=b"other")
    mixed = StrongQC(b.id, 1, qc.votes[:2] + (vote(2, other, signer=s),))
    assert not mixed.is_valid(1)
    assert StrongQC.genesis().is_valid(1, s)


def test_qc_rank_prefers_round_then_size_then_smaller_id():
    b = child(GENESIS, 1)
    big = qc_for(b, (0, 1, 2, 3))
    small = qc_for(b, (0, 1, 2))
    later = qc_for(child(b, 2), (0, 1, 2))
    assert max([small, big, later], key=qc_rank) is later
    assert max([small, big], key=qc_rank) is big
    x, y = child(GENESIS, 1, payload=b"x"), child(GENESIS, 1, payload=b"y")
    lo, hi = sorted([x, y], key=lambda blk: blk.id)
    assert max([qc_for(hi, (0, 1, 2)), qc_for(lo, (0, 1, 2))], key=qc_rank).block == lo.id


def test_timeout_certificate_validation_and_high_qc():
    s = Signer(4, b"k")
    b = child(GENESIS, 1)
    qc1 = qc_for(b, (0, 1, 2), signer=s)
    msgs = [TimeoutMsg(3, qc1 if i == 2 else StrongQC.genesis(), i).signed(s) for i in range(3)]
    tc = TimeoutCertificate(3, tuple(msgs))
    tc.validate(1, s)
    assert tc.high_qc() == qc1
    assert not TimeoutCertificate(3, tuple(msgs[:2])).is_valid(1, s)
    # a timeout may not carry a QC from its own round
    assert not TimeoutMsg(1, qc1, 0).signed(s).verify(s)


def test_block_id_commits_to_header():
    b = child(GENESIS, 1, log=(LogEntry(GENESIS_ID, 1),))
    assert b.check_id()
    assert hash_block_header(b.header()) == b.id
    for field, value in (("round", 2), ("proposer", 3), ("log", [])):
        h = dict(b.header(), **{field: value})
        assert hash_block_header(h) != b.id
    assert hash_block_header(GENESIS.header()) == GENESIS_ID


def test_block_signature():
    s = Signer(4, b"k")
    b = child(GENESIS, 1, proposer=1, signer=s)
    assert b.verify_signature(s)
    assert not Block(b.id, b.parent, b.qc, b.round, b.height, b.payload, 2, signature=b.signature).verify_signature(s)


def test_encode_decode_round_trips():
    s = Signer(4, b"k")
    b1 = child(GENESIS, 1, signer=s)
    b2 = child(b1, 2, signer=s, log=(LogEntry(b1.id, 1),))
    tm = TimeoutMsg(3, b2.qc, 1).signed(s)
    tc = TimeoutCertificate(3, (tm,))
    for obj in (b1, b2, b2.qc, b2.qc.votes[0], tm, tc, LogEntry(b1.id, 2),
                IntervalSet.from_ranges([(1, 2), (5, 9)])):
        data = encode(obj)
        assert decode(data) == obj
        assert encode(decode(data)) == data


@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 50)), min_size=1, max_size=4,
                unique_by=lambda t: t[0]),
       st.integers(1, 100))
def test_qc_encoding_round_trip_property(votes, rnd):
    blk = child(GENESIS, rnd)
    qc = StrongQC.from_votes(blk.id, rnd, [StrongVote(v, blk.id, rnd, m) for v, m in votes])
    assert decode(encode(qc)) == qc
    assert [v.voter for v in qc.votes] == sorted(v for v, _ in votes)
