"""Strong-commit proofs for stateless clients.

A proposal's commit log lists strength updates its proposer observed. Once the
proposal is certified by a QC, at least one honest replica signed over that log,
so a client that assumes at most 2f Byzantine replicas can trust it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Optional

from .types import (Block, BlockId, InvalidCertificate, LogEntry, Signer, StrongQC, canonical_bytes,
                    hash_block_header)


class Unprovable(LookupError):
    """No certified proposal logs the requested strength yet."""


def build_commit_log(updates: Iterable[tuple[BlockId, int]], height_of: Callable[[BlockId], int],
                     logged: Optional[Mapping[BlockId, int]] = None) -> list[LogEntry]:
    """One entry per block whose strength rose above what is already logged, by height.

    `logged` holds strengths already carried by ancestors of the new proposal.
    """
    logged = logged or {}
    best: dict[BlockId, int] = {}
    for bid, x in updates:
        if x > best.get(bid, -1):
            best[bid] = x
    keep = [(bid, x) for bid, x in best.items() if x > logged.get(bid, -1)]
    keep.sort(key=lambda e: (height_of(e[0]), e[0]))
    return [LogEntry(bid, x) for bid, x in keep]


@dataclass(frozen=True)
class StrongCommitProof:
    header: dict
    qc: StrongQC
    block: BlockId
    strength: int

    @property
    def proposal_id(self) -> BlockId:
        return self.qc.block

    def to_dict(self) -> dict:
        return {"header": self.header, "qc": self.qc.to_dict(),
                "claim": {"block": self.block.hex(), "strength": self.strength}}

    @classmethod
    def from_dict(cls, d: dict) -> "StrongCommitProof":
        claim = d["claim"]
        return cls(dict(d["header"]), StrongQC.from_dict(d["qc"]), bytes.fromhex(claim["block"]),
                   int(claim["strength"]))

    def to_bytes(self) -> bytes:
        return canonical_bytes(self.to_dict())


def certificates(blocks: Iterable[Block], extra_qcs: Iterable[StrongQC] = ()) -> dict[BlockId, StrongQC]:
    """Largest known QC per certified block, from embedded QCs and any extras."""
    best: dict[BlockId, StrongQC] = {}
    qcs = [b.qc for b in blocks if b.qc is not None and not b.qc.is_genesis]
    for qc in list(qcs) + [q for q in extra_qcs if not q.is_genesis]:
        cur = best.get(qc.block)
        if cur is None or (len(qc.votes), qc.digest()) > (len(cur.votes), cur.digest()):
            best[qc.block] = qc
    return best


def make_proof(blocks: Iterable[Block], target: BlockId, x: int,
               extra_qcs: Iterable[StrongQC] = ()) -> StrongCommitProof:
    """Proof from the earliest certified proposal whose log puts target at strength >= x.

    The claim carries the logged strength itself, which may exceed x.
    """
    blocks = list(blocks)
    certs = certificates(blocks, extra_qcs)
    candidates = []
    for b in blocks:
        if b.id not in certs:
            continue
        for e in b.commit_log:
            if e.block == target and e.strength >= x:
                candidates.append((b.round, b.id, b, e.strength))
    if not candidates:
        raise Unprovable(f"no certified log entry for {target.hex()[:12]} at strength {x}")
    _, _, prop, logged = min(candidates, key=lambda c: (c[0], c[1]))
    return StrongCommitProof(prop.header(), certs[prop.id], target, logged)


@dataclass(frozen=True)
class Verdict:
    ok: bool
    reason: str

    def __bool__(self) -> bool:
        return self.ok


def verify_proof(proof: StrongCommitProof, signer: Signer, f: int, x: Optional[int] = None) -> Verdict:
    """Check the header hash, a 2f+1 quorum of valid signatures, and the claimed log entry.

    The claimed strength must equal the logged one; pass x to also require claim >= x.
    """
    try:
        pid = hash_block_header(proof.header)
        log = [LogEntry.from_list(e) for e in proof.header["log"]]
        header_round = int(proof.header["round"])
    except (KeyError, TypeError, ValueError, AttributeError):
        return Verdict(False, "malformed")
    if pid != proof.qc.block or header_round != proof.qc.round:
        return Verdict(False, "header_mismatch")
    if any(not 0 <= v.voter < signer.n for v in proof.qc.votes):
        return Verdict(False, "unknown_voter")
    if len(proof.qc.voters) < 2 * f + 1:
        return Verdict(False, "sub_quorum")
    try:
        proof.qc.validate(f, signer)
    except InvalidCertificate as exc:
        return Verdict(False, "bad_signature" if "signature" in str(exc) else "bad_certificate")
    if not any(e.block == proof.block and e.strength == proof.strength for e in log):
        return Verdict(False, "claim_not_in_log")
    if x is not None and proof.strength < x:
        return Verdict(False, "strength_too_low")
    return Verdict(True, "ok")


def verify_proof_bytes(data: bytes, signer: Signer, f: int, x: Optional[int] = None) -> Verdict:
    """Verify a serialized proof; any non-canonical encoding is rejected outright."""
    try:
        proof = StrongCommitProof.from_dict(json.loads(data))
    except (ValueError, KeyError, TypeError, AttributeError, UnicodeDecodeError):
        return Verdict(False, "malformed")
    try:
        if proof.to_bytes() != data:
            return Verdict(False, "non_canonical")
    except (TypeError, ValueError, AttributeError):
        return Verdict(False, "malformed")
    return verify_proof(proof, signer, f, x)
