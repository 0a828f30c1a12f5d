"""Trace files: reading, replay by re-simulation, and block/QC extraction."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

from ..types import Block, StrongQC
from .config import ScenarioConfig
from .runner import TRACE_VERSION, run


class TraceError(ValueError):
    pass


def read_trace(path: str) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return text.split("\n")[:-1] if text.endswith("\n") else text.split("\n")


def trace_config(lines: list[str]) -> ScenarioConfig:
    if not lines:
        raise TraceError("empty trace")
    try:
        header = json.loads(lines[0])
    except ValueError:
        raise TraceError("line 1: header is not JSON") from None
    if header.get("ev") != "header" or header.get("version") != TRACE_VERSION:
        raise TraceError(f"line 1: expected a version {TRACE_VERSION} trace header")
    try:
        return ScenarioConfig.from_dict(header["config"])
    except (KeyError, TypeError, ValueError) as exc:
        raise TraceError(f"line 1: bad config in header: {exc}") from None


@dataclass
class ReplayReport:
    ok: bool
    lines_checked: int
    total_lines: int
    divergence_line: Optional[int] = None
    expected: Optional[str] = None
    found: Optional[str] = None
    truncated: bool = False

    def describe(self) -> str:
        if self.ok:
            tail = " (trace is a truncated prefix)" if self.truncated else ""
            return f"replay matches: {self.lines_checked} lines{tail}"
        return (f"divergence at line {self.divergence_line}\n  expected: {self.expected}\n"
                f"  found:    {self.found}")

    def to_dict(self) -> dict:
        return {"ok": self.ok, "lines_checked": self.lines_checked, "total_lines": self.total_lines,
                "divergence_line": self.divergence_line, "expected": self.expected,
                "found": self.found, "truncated": self.truncated}


def replay(lines: list[str], partial_last_line: bool = False) -> ReplayReport:
    """Re-run the header's scenario with fresh engines and compare line by line.

    A trace that stops early matches if every line it has matches; with
    partial_last_line the final line may also be a cut-off prefix.
    """
    cfg = trace_config(lines)
    fresh = run(cfg).trace or []
    for i, line in enumerate(lines):
        if i >= len(fresh):
            return ReplayReport(False, i, len(fresh), i + 1, None, line)
        if line != fresh[i]:
            last = i == len(lines) - 1
            if last and partial_last_line and fresh[i].startswith(line):
                return ReplayReport(True, i, len(fresh), truncated=True)
            return ReplayReport(False, i, len(fresh), i + 1, fresh[i], line)
    return ReplayReport(True, len(lines), len(fresh), truncated=len(lines) < len(fresh))


def trace_blocks_and_qcs(lines: list[str]) -> tuple[dict[bytes, Block], list[StrongQC]]:
    """Every proposed block and every QC carried by any sent message."""
    blocks: dict[bytes, Block] = {}
    qcs: list[StrongQC] = []
    for line in lines[1:]:
        rec = json.loads(line)
        if rec.get("ev") != "send":
            continue
        msg = rec["msg"]
        if msg["kind"] == "proposal":
            b = Block.from_dict(msg["block"])
            blocks.setdefault(b.id, b)
        elif msg["kind"] == "timeout":
            qcs.append(StrongQC.from_dict(msg["msg"]["qc_high"]))
            if msg.get("tc"):
                qcs += [StrongQC.from_dict(m["qc_high"]) for m in msg["tc"]["msgs"]]
    return blocks, qcs
