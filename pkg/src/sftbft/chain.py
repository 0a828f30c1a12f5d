"""Per-replica block tree and vote history."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional

from .types import GENESIS, Block, BlockId, StrongQC


class OrphanBlock(KeyError):
    pass


class UnknownBlock(KeyError):
    pass


class InvalidBlock(ValueError):
    pass


class BlockTree:
    """Blocks keyed by id, child links, and the largest known QC per block.

    Genesis is present from the start and certified by the empty genesis QC.
    """

    def __init__(self):
        self.genesis: BlockId = GENESIS.id
        self.blocks: dict[BlockId, Block] = {GENESIS.id: GENESIS}
        self.children: dict[BlockId, set[BlockId]] = {GENESIS.id: set()}
        self.certified: dict[BlockId, StrongQC] = {GENESIS.id: StrongQC.genesis()}

    def __contains__(self, bid: BlockId) -> bool:
        return bid in self.blocks

    def __len__(self) -> int:
        return len(self.blocks)

    def get(self, bid: BlockId) -> Block:
        try:
            return self.blocks[bid]
        except KeyError:
            raise UnknownBlock(bid.hex()[:12]) from None

    def insert(self, b: Block) -> bool:
        """Insert b; returns False when it was already present."""
        if b.id in self.blocks:
            return False
        if b.parent is None or b.parent not in self.blocks:
            raise OrphanBlock(b.id.hex()[:12])
        parent = self.blocks[b.parent]
        if b.qc is None or b.qc.block != b.parent or b.qc.round != parent.round:
            raise InvalidBlock("embedded QC does not certify the parent")
        if b.round <= b.qc.round:
            raise InvalidBlock("block round must exceed its QC round")
        if b.height != parent.height + 1:
            raise InvalidBlock("height must be parent height + 1")
        self.blocks[b.id] = b
        self.children[b.id] = set()
        self.children[b.parent].add(b.id)
        self.add_qc(b.qc)
        return True

    def add_qc(self, qc: StrongQC) -> bool:
        """Record qc if it is the first or the largest for its block. Returns True on change."""
        if qc.block not in self.blocks:
            raise UnknownBlock(qc.block.hex()[:12])
        old = self.certified.get(qc.block)
        if old is None or len(qc.votes) > len(old.votes):
            self.certified[qc.block] = qc
            return True
        return False

    def is_certified(self, bid: BlockId) -> bool:
        return bid in self.certified

    def parent_of(self, bid: BlockId) -> Optional[Block]:
        p = self.get(bid).parent
        return self.blocks[p] if p is not None else None

    def ancestors(self, bid: BlockId) -> Iterator[Block]:
        """Yield bid itself then each ancestor down to genesis."""
        b = self.get(bid)
        while True:
            yield b
            if b.parent is None:
                return
            b = self.blocks[b.parent]

    def extends(self, descendant: BlockId, ancestor: BlockId) -> bool:
        a = self.get(ancestor)
        d = self.get(descendant)
        while d.height > a.height:
            d = self.blocks[d.parent]
        return d.id == a.id

    def conflicts(self, a: BlockId, b: BlockId) -> bool:
        return not self.extends(a, b) and not self.extends(b, a)

    def lowest_common_ancestor(self, a: BlockId, b: BlockId) -> BlockId:
        x, y = self.get(a), self.get(b)
        while x.height > y.height:
            x = self.blocks[x.parent]
        while y.height > x.height:
            y = self.blocks[y.parent]
        while x.id != y.id:
            x, y = self.blocks[x.parent], self.blocks[y.parent]
        return x.id

    def longest_certified_chains(self) -> set[BlockId]:
        """Tips of maximal-height chains whose blocks are all certified.

        Every inserted block embeds a QC for its parent, so a certified block's
        ancestors are certified too and the tips are just the highest certified blocks.
        """
        best = max(self.blocks[b].height for b in self.certified)
        return {b for b in self.certified if self.blocks[b].height == best}

    def descendants(self, bid: BlockId) -> Iterator[Block]:
        stack = [bid]
        while stack:
            cur = stack.pop()
            yield self.blocks[cur]
            stack.extend(self.children[cur])


@dataclass
class VoteHistory:
    """Blocks this replica voted for, in voting order with strictly increasing rounds."""

    voted: list[tuple[BlockId, int]] = field(default_factory=list)

    def record(self, block: BlockId, round: int) -> None:
        if self.voted and round <= self.voted[-1][1]:
            raise ValueError(f"vote round {round} does not exceed last voted round {self.voted[-1][1]}")
        self.voted.append((block, round))

    def __iter__(self):
        return iter(self.voted)

    def __len__(self) -> int:
        return len(self.voted)
