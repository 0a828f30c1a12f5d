"""Core value types: blocks, strong votes, certificates and the signing mock."""

from __future__ import annotations

import hashlib
import hmac
import json
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Optional

BlockId = bytes


def canonical_bytes(obj: Any) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()


def digest(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def _memo(obj: Any, key: str, compute) -> Any:
    # per-instance cache on frozen dataclasses; fields never change, so neither does the value
    cache = obj.__dict__
    if key not in cache:
        object.__setattr__(obj, key, compute())
    return cache[key]


GENESIS_ID: BlockId = digest(b"sftbft/genesis")


def faults_for(n: int) -> int:
    """Largest f with n >= 3f+1. Raises unless n == 3f+1 exactly."""
    if n < 4 or (n - 1) % 3 != 0:
        raise ValueError(f"n must be 3f+1 with f >= 1, got n={n}")
    return (n - 1) // 3


class Signer:
    """Deterministic keyed-MAC stand-in for per-replica signatures."""

    def __init__(self, n: int, secret: bytes = b"sftbft-default-secret"):
        self.n = n
        self._keys = [digest(secret + b"/replica/" + str(i).encode()) for i in range(n)]
        self._verified: dict[tuple, bool] = {}

    def sign(self, signer: int, message: bytes) -> bytes:
        if not 0 <= signer < self.n:
            raise KeyError(f"unknown signer {signer}")
        return hmac.new(self._keys[signer], message, hashlib.sha256).digest()

    def verify(self, signer: int, message: bytes, signature: bytes) -> bool:
        if not 0 <= signer < self.n or not isinstance(signature, bytes):
            return False
        key = (signer, message, signature)
        hit = self._verified.get(key)
        if hit is None:
            expected = hmac.new(self._keys[signer], message, hashlib.sha256).digest()
            hit = self._verified[key] = hmac.compare_digest(expected, signature)
        return hit


@dataclass(frozen=True)
class IntervalSet:
    """Sorted, disjoint, non-adjacent closed integer intervals."""

    intervals: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        prev_hi = None
        for lo, hi in self.intervals:
            if lo > hi:
                raise ValueError(f"empty interval [{lo}, {hi}]")
            if prev_hi is not None and lo <= prev_hi + 1:
                raise ValueError("intervals must be sorted, disjoint and non-adjacent")
            prev_hi = hi

    @classmethod
    def from_ranges(cls, ranges: Iterable[tuple[int, int]]) -> "IntervalSet":
        merged: list[list[int]] = []
        for lo, hi in sorted(r for r in ranges if r[0] <= r[1]):
            if merged and lo <= merged[-1][1] + 1:
                merged[-1][1] = max(merged[-1][1], hi)
            else:
                merged.append([lo, hi])
        return cls(tuple((lo, hi) for lo, hi in merged))

    def __contains__(self, r: int) -> bool:
        for lo, hi in self.intervals:
            if r < lo:
                return False
            if r <= hi:
                return True
        return False

    def subtract(self, lo: int, hi: int) -> "IntervalSet":
        out = []
        for a, b in self.intervals:
            if b < lo or a > hi:
                out.append((a, b))
                continue
            if a < lo:
                out.append((a, lo - 1))
            if b > hi:
                out.append((hi + 1, b))
        return IntervalSet.from_ranges(out)

    def max_value(self) -> Optional[int]:
        return self.intervals[-1][1] if self.intervals else None

    def to_list(self) -> list:
        return [list(iv) for iv in self.intervals]

    @classmethod
    def from_list(cls, data: list) -> "IntervalSet":
        return cls(tuple((int(lo), int(hi)) for lo, hi in data))


@dataclass(frozen=True)
class StrongVote:
    voter: int
    block: BlockId
    round: int
    marker: Optional[int] = None
    intervals: Optional[IntervalSet] = None
    signature: bytes = b""

    def signing_bytes(self) -> bytes:
        return _memo(self, "_signing", lambda: canonical_bytes(
            ["vote", self.block.hex(), self.round, self.marker,
             self.intervals.to_list() if self.intervals is not None else None]))

    def signed(self, signer: Signer) -> "StrongVote":
        return replace(self, signature=signer.sign(self.voter, self.signing_bytes()))

    def verify(self, signer: Signer) -> bool:
        return signer.verify(self.voter, self.signing_bytes(), self.signature)

    def to_dict(self) -> dict:
        return {
            "voter": self.voter,
            "block": self.block.hex(),
            "round": self.round,
            "marker": self.marker,
            "intervals": self.intervals.to_list() if self.intervals is not None else None,
            "sig": self.signature.hex(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StrongVote":
        iv = d.get("intervals")
        return cls(
            voter=int(d["voter"]),
            block=bytes.fromhex(d["block"]),
            round=int(d["round"]),
            marker=d.get("marker"),
            intervals=IntervalSet.from_list(iv) if iv is not None else None,
            signature=bytes.fromhex(d["sig"]),
        )


class InvalidCertificate(ValueError):
    pass


@dataclass(frozen=True)
class StrongQC:
    """Quorum of strong votes for one (block, round). Votes are kept sorted by voter."""

    block: BlockId
    round: int
    votes: tuple[StrongVote, ...] = ()

    @classmethod
    def genesis(cls) -> "StrongQC":
        return cls(GENESIS_ID, 0, ())

    @classmethod
    def from_votes(cls, block: BlockId, round: int, votes: Iterable[StrongVote]) -> "StrongQC":
        return cls(block, round, tuple(sorted(votes, key=lambda v: v.voter)))

    @property
    def is_genesis(self) -> bool:
        return self.block == GENESIS_ID and self.round == 0 and not self.votes

    @property
    def voters(self) -> frozenset[int]:
        return frozenset(v.voter for v in self.votes)

    def validate(self, f: int, signer: Optional[Signer] = None) -> None:
        if self.is_genesis:
            return
        voters = [v.voter for v in self.votes]
        if len(set(voters)) != len(voters):
            raise InvalidCertificate("duplicate voter in QC")
        if len(voters) < 2 * f + 1:
            raise InvalidCertificate(f"QC has {len(voters)} votes, needs {2 * f + 1}")
        for v in self.votes:
            if v.block != self.block or v.round != self.round:
                raise InvalidCertificate("QC mixes votes for different blocks or rounds")
            if signer is not None and not v.verify(signer):
                raise InvalidCertificate(f"bad signature from voter {v.voter}")

    def is_valid(self, f: int, signer: Optional[Signer] = None) -> bool:
        try:
            self.validate(f, signer)
        except InvalidCertificate:
            return False
        return True

    def digest(self) -> bytes:
        return _memo(self, "_digest", lambda: digest(canonical_bytes(self.to_dict())))

    def to_dict(self) -> dict:
        return {"block": self.block.hex(), "round": self.round,
                "votes": [v.to_dict() for v in self.votes]}

    @classmethod
    def from_dict(cls, d: dict) -> "StrongQC":
        return cls(bytes.fromhex(d["block"]), int(d["round"]),
                   tuple(StrongVote.from_dict(v) for v in d["votes"]))


def qc_rank(qc: StrongQC) -> tuple:
    # higher round, then more votes, then lexicographically smaller block id
    return (qc.round, len(qc.votes), -int.from_bytes(qc.block, "big"))


@dataclass(frozen=True)
class TimeoutMsg:
    round: int
    qc_high: StrongQC
    sender: int
    signature: bytes = b""

    def signing_bytes(self) -> bytes:
        return _memo(self, "_signing",
                     lambda: canonical_bytes(["timeout", self.round, self.qc_high.digest().hex()]))

    def signed(self, signer: Signer) -> "TimeoutMsg":
        return replace(self, signature=signer.sign(self.sender, self.signing_bytes()))

    def verify(self, signer: Signer) -> bool:
        return self.qc_high.round < self.round and signer.verify(
            self.sender, self.signing_bytes(), self.signature)

    def to_dict(self) -> dict:
        return {"round": self.round, "qc_high": self.qc_high.to_dict(),
                "sender": self.sender, "sig": self.signature.hex()}

    @classmethod
    def from_dict(cls, d: dict) -> "TimeoutMsg":
        return cls(int(d["round"]), StrongQC.from_dict(d["qc_high"]), int(d["sender"]),
                   bytes.fromhex(d["sig"]))


@dataclass(frozen=True)
class TimeoutCertificate:
    round: int
    msgs: tuple[TimeoutMsg, ...]

    def validate(self, f: int, signer: Optional[Signer] = None) -> None:
        senders = [m.sender for m in self.msgs]
        if len(set(senders)) != len(senders):
            raise InvalidCertificate("duplicate sender in TC")
        if len(senders) < 2 * f + 1:
            raise InvalidCertificate("TC below quorum")
        for m in self.msgs:
            if m.round != self.round:
                raise InvalidCertificate("TC mixes rounds")
            if signer is not None and not m.verify(signer):
                raise InvalidCertificate(f"bad timeout signature from {m.sender}")

    def is_valid(self, f: int, signer: Optional[Signer] = None) -> bool:
        try:
            self.validate(f, signer)
        except InvalidCertificate:
            return False
        return True

    def high_qc(self) -> StrongQC:
        return max((m.qc_high for m in self.msgs), key=qc_rank)

    def digest(self) -> bytes:
        return _memo(self, "_digest", lambda: digest(canonical_bytes(self.to_dict())))

    def to_dict(self) -> dict:
        return {"round": self.round, "msgs": [m.to_dict() for m in self.msgs]}

    @classmethod
    def from_dict(cls, d: dict) -> "TimeoutCertificate":
        return cls(int(d["round"]), tuple(TimeoutMsg.from_dict(m) for m in d["msgs"]))


@dataclass(frozen=True)
class LogEntry:
    block: BlockId
    strength: int

    def to_list(self) -> list:
        return [self.block.hex(), self.strength]

    @classmethod
    def from_list(cls, data: list) -> "LogEntry":
        return cls(bytes.fromhex(data[0]), int(data[1]))


def header_fields(parent: Optional[BlockId], qc: Optional[StrongQC], round: int, height: int,
                  payload_digest: bytes, proposer: int, tc: Optional[TimeoutCertificate],
                  commit_log: tuple[LogEntry, ...]) -> dict:
    return {
        "parent": parent.hex() if parent is not None else None,
        "qc": qc.digest().hex() if qc is not None else None,
        "round": round,
        "height": height,
        "payload": payload_digest.hex(),
        "proposer": proposer,
        "tc": tc.digest().hex() if tc is not None else None,
        "log": [e.to_list() for e in commit_log],
    }


def hash_block_header(fields: dict) -> BlockId:
    """Block id: sha256 over the canonical header encoding. Genesis maps to GENESIS_ID."""
    if fields.get("parent") is None and fields.get("round") == 0:
        return GENESIS_ID
    return digest(canonical_bytes(fields))


@dataclass(frozen=True)
class Block:
    id: BlockId
    parent: Optional[BlockId]
    qc: Optional[StrongQC]
    round: int
    height: int
    payload: bytes = b""
    proposer: int = -1
    tc: Optional[TimeoutCertificate] = None
    commit_log: tuple[LogEntry, ...] = ()
    signature: bytes = field(default=b"", compare=False)

    @classmethod
    def create(cls, parent: "Block", qc: StrongQC, round: int, payload: bytes, proposer: int,
               signer: Optional[Signer] = None, tc: Optional[TimeoutCertificate] = None,
               commit_log: Iterable[LogEntry] = ()) -> "Block":
        log = tuple(commit_log)
        hdr = header_fields(parent.id, qc, round, parent.height + 1, digest(payload), proposer, tc, log)
        bid = hash_block_header(hdr)
        sig = signer.sign(proposer, bid) if signer is not None else b""
        return cls(bid, parent.id, qc, round, parent.height + 1, payload, proposer, tc, log, sig)

    def header(self) -> dict:
        return header_fields(self.parent, self.qc, self.round, self.height, digest(self.payload),
                             self.proposer, self.tc, self.commit_log)

    def check_id(self) -> bool:
        return hash_block_header(self.header()) == self.id

    def verify_signature(self, signer: Signer) -> bool:
        return signer.verify(self.proposer, self.id, self.signature)

    @property
    def is_genesis(self) -> bool:
        return self.id == GENESIS_ID

    def to_dict(self) -> dict:
        return {
            "id": self.id.hex(),
            "parent": self.parent.hex() if self.parent is not None else None,
            "qc": self.qc.to_dict() if self.qc is not None else None,
            "round": self.round,
            "height": self.height,
            "payload": self.payload.hex(),
            "proposer": self.proposer,
            "tc": self.tc.to_dict() if self.tc is not None else None,
            "log": [e.to_list() for e in self.commit_log],
            "sig": self.signature.hex(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Block":
        return cls(
            id=bytes.fromhex(d["id"]),
            parent=bytes.fromhex(d["parent"]) if d["parent"] is not None else None,
            qc=StrongQC.from_dict(d["qc"]) if d["qc"] is not None else None,
            round=int(d["round"]),
            height=int(d["height"]),
            payload=bytes.fromhex(d["payload"]),
            proposer=int(d["proposer"]),
            tc=TimeoutCertificate.from_dict(d["tc"]) if d["tc"] is not None else None,
            commit_log=tuple(LogEntry.from_list(e) for e in d["log"]),
            signature=bytes.fromhex(d["sig"]),
        )


GENESIS = Block(GENESIS_ID, None, None, 0, 0)


def encode(obj: Any) -> bytes:
    """Canonical JSON encoding of any core value."""
    if isinstance(obj, LogEntry):
        return canonical_bytes({"type": "LogEntry", "v": obj.to_list()})
    if isinstance(obj, IntervalSet):
        return canonical_bytes({"type": "IntervalSet", "v": obj.to_list()})
    return canonical_bytes({"type": type(obj).__name__, "v": obj.to_dict()})


_DECODERS = {
    "Block": Block.from_dict,
    "StrongVote": StrongVote.from_dict,
    "StrongQC": StrongQC.from_dict,
    "TimeoutMsg": TimeoutMsg.from_dict,
    "TimeoutCertificate": TimeoutCertificate.from_dict,
    "LogEntry": LogEntry.from_list,
    "IntervalSet": IntervalSet.from_list,
}


def decode(data: bytes) -> Any:
    obj = json.loads(data)
    return _DECODERS[obj["type"]](obj["v"])
