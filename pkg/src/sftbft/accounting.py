"""Endorsement accounting: markers, interval sets, endorser sets and strong commit levels."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

from .chain import BlockTree, VoteHistory
from .types import Block, BlockId, IntervalSet, StrongQC, StrongVote

MARKER = "marker"
WINDOWED = "windowed"
FULL = "full"
NAIVE = "naive"
FBFT = "fbft"


@dataclass(frozen=True)
class EndorsementMode:
    kind: str = MARKER
    window: Optional[int] = None

    def __post_init__(self):
        if self.kind not in (MARKER, WINDOWED, FULL, NAIVE, FBFT):
            raise ValueError(f"unknown endorsement mode {self.kind!r}")
        if self.kind == WINDOWED and (self.window is None or self.window < 1):
            raise ValueError("windowed mode needs window >= 1")

    @property
    def uses_intervals(self) -> bool:
        return self.kind in (WINDOWED, FULL)

    def __str__(self) -> str:
        return f"windowed:{self.window}" if self.kind == WINDOWED else self.kind


MARKER_ONLY = EndorsementMode(MARKER)
FULL_INTERVALS = EndorsementMode(FULL)
NAIVE_ALL_INDIRECT = EndorsementMode(NAIVE)
FBFT_DIRECT_ONLY = EndorsementMode(FBFT)


def windowed(window: int) -> EndorsementMode:
    return EndorsementMode(WINDOWED, window)


def parse_mode(text: str) -> EndorsementMode:
    """Parse 'marker', 'full', 'windowed:<w>', 'naive' or 'fbft'."""
    text = text.strip().lower()
    if text.startswith("windowed"):
        _, _, w = text.partition(":")
        if not w:
            raise ValueError("windowed mode needs a window, e.g. windowed:13")
        return windowed(int(w))
    return EndorsementMode(text)


def _conflicting_votes(history: VoteHistory, tree: BlockTree, target: BlockId):
    for bid, _ in history:
        if bid in tree and tree.conflicts(bid, target):
            yield tree.get(bid)


def compute_marker(history: VoteHistory, tree: BlockTree, target: BlockId,
                   by_height: bool = False) -> int:
    """Highest round (or height) among voted blocks conflicting with target; 0 if none."""
    tree.get(target)
    best = 0
    for b in _conflicting_votes(history, tree, target):
        best = max(best, b.height if by_height else b.round)
    return best


def compute_intervals(history: VoteHistory, tree: BlockTree, target: BlockId,
                      mode: EndorsementMode) -> IntervalSet:
    """Rounds the vote endorses: a base range minus one excluded range per conflicting fork.

    Each conflicting voted block excludes (lca round, its own round]. Blocks sharing a
    branch point share the lower end, so the union equals the per-fork exclusion.
    """
    r = tree.get(target).round
    lo = 1 if mode.kind == FULL else max(1, r - (mode.window or 0))
    result = IntervalSet.from_ranges([(lo, r)])
    for b in _conflicting_votes(history, tree, target):
        lca = tree.get(tree.lowest_common_ancestor(target, b.id))
        result = result.subtract(lca.round + 1, b.round)
    return result


def make_endorsement(history: VoteHistory, tree: BlockTree, target: BlockId,
                     mode: EndorsementMode, by_height: bool = False):
    """(marker, intervals) to attach to a vote for target."""
    if mode.uses_intervals:
        return None, compute_intervals(history, tree, target, mode)
    return compute_marker(history, tree, target, by_height), None


def _round_endorsed(vote: StrongVote, r: int) -> bool:
    if vote.intervals is not None:
        return r in vote.intervals
    return (vote.marker or 0) < r


def endorses(vote: StrongVote, target: BlockId, tree: BlockTree,
             mode: EndorsementMode = MARKER_ONLY) -> bool:
    """Does vote endorse target? Naive mode drops the round check, FBFT mode counts direct votes only."""
    t = tree.get(target)
    if vote.block == target:
        return True
    if mode.kind == FBFT or not tree.extends(vote.block, target):
        return False
    if mode.kind == NAIVE:
        return True
    return _round_endorsed(vote, t.round)


def k_endorses(vote: StrongVote, target: BlockId, tree: BlockTree, k: Optional[int] = None) -> bool:
    """Height-marker endorsement. k defaults to the target's height."""
    t = tree.get(target)
    if k is None:
        k = t.height
    if vote.block == target:
        return True
    return tree.extends(vote.block, target) and (vote.marker or 0) < k


def _three_chains(tree: BlockTree, b: Block):
    """(b, child, grandchild) triples with consecutive rounds."""
    for c in tree.children[b.id]:
        cb = tree.blocks[c]
        if cb.round != b.round + 1:
            continue
        for g in tree.children[c]:
            gb = tree.blocks[g]
            if gb.round == cb.round + 1:
                yield cb, gb


def _level(counts: Iterable[int], f: int) -> Optional[int]:
    m = min(counts)
    if m < 2 * f + 1:
        return None
    return min(m - f - 1, 2 * f)


class EndorsementLedger:
    """Endorser sets and strong commit strength per block, fed by certificates.

    Only votes inside QCs (or, for the FBFT baseline, multicast late votes) count.
    With streamlet=True the ledger tracks height-marker k-endorsements instead.
    """

    def __init__(self, f: int, mode: EndorsementMode = MARKER_ONLY, streamlet: bool = False,
                 prune: bool = True):
        self.f = f
        self.prune = prune
        self.mode = mode
        self.streamlet = streamlet
        self.endorsers: dict[BlockId, set[int]] = {}
        self.strength: dict[BlockId, int] = {}
        self.registered: set[tuple[BlockId, int]] = set()
        # streamlet bookkeeping: lowest marker per voter among votes for strict descendants
        self.min_marker: dict[BlockId, dict[int, int]] = {}

    # counting -------------------------------------------------------------

    def count(self, b: BlockId, k: Optional[int] = None) -> int:
        if not self.streamlet:
            return len(self.endorsers.get(b, ()))
        direct = self.endorsers.get(b, set())
        extra = self.min_marker.get(b, {})
        return len(direct) + sum(1 for v, m in extra.items() if m < k and v not in direct)

    def k_endorsers(self, b: BlockId, k: int) -> set[int]:
        direct = self.endorsers.get(b, set())
        return direct | {v for v, m in self.min_marker.get(b, {}).items() if m < k}

    def direct_level(self, tree: BlockTree, b: Block) -> Optional[int]:
        """Best level of a 3-chain starting at b (round-based) or centred on b (height-based)."""
        best = None
        if not self.streamlet:
            for cb, gb in _three_chains(tree, b):
                x = _level((self.count(b.id), self.count(cb.id), self.count(gb.id)), self.f)
                if x is not None and (best is None or x > best):
                    best = x
            return best
        if b.parent is None:
            return None
        p = tree.blocks[b.parent]
        if p.is_genesis or p.round != b.round - 1:
            return None
        k = b.height
        for c in tree.children[b.id]:
            cb = tree.blocks[c]
            if cb.round != b.round + 1:
                continue
            x = _level((self.count(p.id, k), self.count(b.id, k), self.count(cb.id, k)), self.f)
            if x is not None and (best is None or x > best):
                best = x
        return best

    # updates --------------------------------------------------------------

    def _path(self, tree: BlockTree, top: BlockId) -> list[Block]:
        path = []
        for b in tree.ancestors(top):
            if b.is_genesis or (self.prune and self.strength.get(b.id) == 2 * self.f):
                break
            path.append(b)
        return path

    def _absorb(self, tree: BlockTree, top: BlockId, votes: list[StrongVote], direct_only: bool):
        path = self._path(tree, top)
        for v in votes:
            for b in path:
                if b.id == v.block:
                    self.endorsers.setdefault(b.id, set()).add(v.voter)
                    continue
                if direct_only:
                    break
                if self.streamlet:
                    mm = self.min_marker.setdefault(b.id, {})
                    m = v.marker or 0
                    if m < mm.get(v.voter, m + 1):
                        mm[v.voter] = m
                    continue
                if self.mode.kind == NAIVE or _round_endorsed(v, b.round):
                    self.endorsers.setdefault(b.id, set()).add(v.voter)
                elif v.intervals is None:
                    break  # rounds only decrease further down
        return path

    def _reevaluate(self, tree: BlockTree, path: list[Block]) -> list[tuple[BlockId, int]]:
        updates = []

        def bump(bid: BlockId, x: Optional[int]):
            if x is not None and x > self.strength.get(bid, -1):
                self.strength[bid] = x
                updates.append((bid, x))

        running = None
        on_path = {b.id for b in path}
        for b in path:
            cands = [running, self.direct_level(tree, b)]
            if self.streamlet:
                # a new endorser of b can complete a triple centred on an off-path child
                for c in tree.children[b.id]:
                    if c not in on_path:
                        x = self.direct_level(tree, tree.blocks[c])
                        bump(c, x)
                        cands.append(x)
            vals = [x for x in cands if x is not None]
            running = max(vals) if vals else None
            bump(b.id, running)
        updates.sort(key=lambda u: (tree.get(u[0]).height, u[0]))
        return updates

    def register_qc(self, qc: StrongQC, tree: BlockTree) -> list[tuple[BlockId, int]]:
        """Absorb qc's unseen votes; return strictly increased (block, strength) pairs by height."""
        if qc.is_genesis:
            return []
        new = [v for v in qc.votes if (qc.block, v.voter) not in self.registered]
        if not new:
            return []
        for v in new:
            self.registered.add((qc.block, v.voter))
        path = self._absorb(tree, qc.block, new, self.mode.kind == FBFT)
        return self._reevaluate(tree, path)

    def register_direct_votes(self, block: BlockId, votes: Iterable[StrongVote],
                              tree: BlockTree) -> list[tuple[BlockId, int]]:
        """FBFT baseline: late votes multicast by a leader count as direct votes."""
        new = [v for v in votes if v.block == block and (block, v.voter) not in self.registered]
        if not new:
            return []
        for v in new:
            self.registered.add((block, v.voter))
        path = self._absorb(tree, block, new, True)
        return self._reevaluate(tree, path)


def register_qc(ledger: EndorsementLedger, qc: StrongQC, tree: BlockTree):
    return ledger.register_qc(qc, tree)


def endorser_count(ledger: EndorsementLedger, b: BlockId, k: Optional[int] = None) -> int:
    return ledger.count(b, k)


def strong_commit_level(ledger: EndorsementLedger, tree: BlockTree, b: BlockId) -> Optional[int]:
    """Recompute b's strength from scratch by scanning every 3-chain at or below b."""
    tree.get(b)
    best = None
    for d in tree.descendants(b):
        x = ledger.direct_level(tree, d)
        if x is not None and (best is None or x > best):
            best = x
    return best


def streamlet_strong_commit_level(ledger: EndorsementLedger, tree: BlockTree,
                                  b: BlockId) -> Optional[int]:
    """Same scan for the height-based rule; b counts when it is the middle block or below it."""
    if not ledger.streamlet:
        raise ValueError("ledger does not track k-endorsements")
    return strong_commit_level(ledger, tree, b)


def three_chain_fires(tree: BlockTree, b: BlockId) -> bool:
    """Regular commit rule: some certified 3-chain with consecutive rounds starts at or below b."""
    for d in tree.descendants(b):
        if not tree.is_certified(d.id):
            continue
        for cb, gb in _three_chains(tree, d):
            if tree.is_certified(cb.id) and tree.is_certified(gb.id):
                return True
    return False


def streamlet_triple_fires(tree: BlockTree, b: BlockId) -> bool:
    """Regular Streamlet rule: certified (parent, middle, child) with consecutive rounds, b at or above middle."""
    def centred(m: Block) -> bool:
        if m.parent is None or not tree.is_certified(m.id):
            return False
        p = tree.blocks[m.parent]
        if p.round != m.round - 1 or p.is_genesis:
            return False
        return any(tree.blocks[c].round == m.round + 1 and tree.is_certified(c) for c in tree.children[m.id])

    return any(centred(d) for d in tree.descendants(b))
