import pytest

from sftbft.chain import BlockTree, InvalidBlock, OrphanBlock, UnknownBlock, VoteHistory
from sftbft.types import GENESIS, Block, StrongQC

from treebuild import child, grow, qc_for


def test_genesis_is_certified():
    t = BlockTree()
    assert GENESIS.id in t and len(t) == 1
    assert t.is_certified(GENESIS.id)
    assert t.longest_certified_chains() == {GENESIS.id}


def test_insert_rejects_orphans_and_bad_qcs():
    t = BlockTree()
    b1 = child(GENESIS, 1)
    b2 = child(b1, 2)
    with pytest.raises(OrphanBlock):
        t.insert(b2)
    assert t.insert(b1) and not t.insert(b1)
    wrong_qc = Block.create(b1, StrongQC.genesis(), 2, b"x", 0)
    with pytest.raises(InvalidBlock):
        t.insert(wrong_qc)
    stale = Block.create(b1, qc_for(b1, (0, 1, 2)), 1, b"x", 0)
    with pytest.raises(InvalidBlock):
        t.insert(stale)
    with pytest.raises(UnknownBlock):
        t.get(b"\0" * 32)


def test_ancestry_and_lca():
    t = BlockTree()
    a1, a2, a3 = grow(t, GENESIS, [1, 2, 3])
    f3, f4 = grow(t, a1, [3, 4], payload=b"fork")
    assert t.extends(a3.id, a1.id) and t.extends(a3.id, a3.id)
    assert not t.extends(a1.id, a3.id)
    assert t.conflicts(a3.id, f4.id) and t.conflicts(a2.id, f3.id)
    assert not t.conflicts(a1.id, f4.id)
    assert t.lowest_common_ancestor(a3.id, f4.id) == a1.id
    assert t.lowest_common_ancestor(a3.id, a2.id) == a2.id
    assert [b.round for b in t.ancestors(a3.id)] == [3, 2, 1, 0]
    assert {b.id for b in t.descendants(a1.id)} == {a1.id, a2.id, a3.id, f3.id, f4.id}


def test_certified_tips_and_largest_qc():
    t = BlockTree()
    a1, a2, a3 = grow(t, GENESIS, [1, 2, 3])
    # a3 is uncertified, so the certified tip is a2
    assert t.longest_certified_chains() == {a2.id}
    assert not t.add_qc(qc_for(a2, (1, 2, 3)))
    assert t.add_qc(qc_for(a2, (0, 1, 2, 3)))
    assert len(t.certified[a2.id].votes) == 4
    t.add_qc(qc_for(a3, (0, 1, 2)))
    assert t.longest_certified_chains() == {a3.id}


def test_vote_history_rounds_strictly_increase():
    h = VoteHistory()
    h.record(b"a", 1)
    h.record(b"b", 3)
    with pytest.raises(ValueError):
        h.record(b"c", 3)
    assert list(h) == [(b"a", 1), (b"b", 3)] and len(h) == 2
