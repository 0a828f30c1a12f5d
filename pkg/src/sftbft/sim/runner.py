"""Deterministic discrete-event simulator driving the protocol engines."""

from __future__ import annotations

import hashlib
import heapq
from dataclasses import dataclass, field
from typing import Optional

from ..diembft import DiemConfig, DiemReplica
from ..messages import OTHERS, Output, Proposal, Send, message_digest, referenced_blocks
from ..streamlet import StreamletConfig, StreamletReplica
from ..types import Signer, canonical_bytes
from .config import CRASH, DIEMBFT, STREAMLET, ScenarioConfig
from .faults import ByzantineDiem, ByzantineStreamlet
from .metrics import Metrics
from .network import Network
from .oracle import BlockRegistry, SafetyOracle, Violation

TRACE_VERSION = 1
MAX_EVENTS = 5_000_000


def make_payload(seed: int, size: int):
    def payload(rnd: int, rid: int) -> bytes:
        h = hashlib.sha256(b"payload/%d/%d/%d" % (seed, rnd, rid)).digest()
        return (h * (size // len(h) + 1))[:size]
    return payload


@dataclass
class RunResult:
    config: ScenarioConfig
    metrics: Metrics
    oracle: SafetyOracle
    trace: Optional[list[str]]
    engines: dict
    stop_reason: str
    end_time: float
    registry: BlockRegistry = field(repr=False, default=None)

    @property
    def violation(self) -> Optional[Violation]:
        return self.oracle.violation

    @property
    def records(self):
        return self.oracle.records

    def trace_text(self) -> str:
        return "".join(line + "\n" for line in self.trace or [])


class Simulation:
    def __init__(self, cfg: ScenarioConfig):
        cfg.validate()
        self.cfg = cfg
        self.n, self.f = cfg.n, cfg.f
        self.signer = Signer(cfg.n, b"sftbft-sim/%d" % cfg.seed)
        self.net = Network(cfg.latency, cfg.gst, cfg.pre_gst_cap, seed=cfg.seed)
        self.now = 0.0
        self.heap: list = []
        self._seq = 0
        self.events = 0
        self.registry = BlockRegistry()
        self.oracle = SafetyOracle(self.registry, cfg.f, cfg.byzantine_count)
        self.observer = cfg.observer_id()
        self.metrics = Metrics(self.observer, cfg.f)
        self.trace: Optional[list[str]] = [] if cfg.trace else None
        self.crash_round = {fs.replica: fs.at_round for fs in cfg.faults if fs.behavior == CRASH}
        self.crashed: set[int] = set()
        self.byzantine = set(cfg.byzantine)
        self.stop_reason: Optional[str] = None
        self.engines = self.build_engines()
        self._emit({"ev": "header", "version": TRACE_VERSION, "config": cfg.to_dict()})

    # construction -------------------------------------------------------------

    def diem_config(self, **overrides) -> DiemConfig:
        c = self.cfg
        kw = dict(n=c.n, f=c.f, signer=self.signer, mode=c.mode, timer_base=c.timer_base,
                  backoff=c.backoff, extra_wait=c.extra_wait,
                  extra_wait_rounds=dict(c.extra_wait_schedule), vote_broadcast=c.vote_broadcast,
                  payload=make_payload(c.seed, c.payload_size))
        kw.update(overrides)
        return DiemConfig(**kw)

    def streamlet_config(self) -> StreamletConfig:
        c = self.cfg
        return StreamletConfig(c.n, c.f, self.signer, c.mode, c.delta, c.echo,
                               make_payload(c.seed, c.payload_size))

    def build_engines(self) -> dict:
        specs = {fs.replica: fs for fs in self.cfg.faults if fs.byzantine}
        coalition = frozenset(specs)
        engines = {}
        if self.cfg.protocol == DIEMBFT:
            ecfg = self.diem_config()
            for i in range(self.n):
                if i in specs:
                    engines[i] = ByzantineDiem(i, ecfg, specs[i], coalition, self.cfg.seed * 7919 + i)
                else:
                    engines[i] = DiemReplica(i, ecfg)
        else:
            scfg = self.streamlet_config()
            for i in range(self.n):
                if i in specs:
                    engines[i] = ByzantineStreamlet(i, scfg, specs[i], coalition, self.cfg.seed * 7919 + i)
                else:
                    engines[i] = StreamletReplica(i, scfg)
        return engines

    # trace --------------------------------------------------------------------

    def _emit(self, rec: dict):
        if self.trace is not None:
            self.trace.append(canonical_bytes(rec).decode())

    # scheduling -----------------------------------------------------------------

    def _push(self, at: float, *event, late: bool = False):
        # round ticks sort after deliveries due at the same instant
        heapq.heappush(self.heap, (at, int(late), self._seq, event))
        self._seq += 1

    def schedule_delivery(self, src: int, dst: int, msg, at: float):
        self._push(at, "deliver", dst, src, msg)

    def schedule_timer(self, rid: int, kind: str, r: int, at: float):
        self._push(at, "timer", rid, kind, r)

    def destinations(self, src: int, dest) -> list[int]:
        if dest is None:
            return list(range(self.n))
        if dest == OTHERS:
            return [i for i in range(self.n) if i != src]
        return [dest]

    def send(self, src: int, s: Send):
        msg = s.msg
        if isinstance(msg, Proposal):
            b = msg.block
            self.registry.add(b)
            self.metrics.on_proposed(b.id, b.round, b.height, b.proposer, self.now)
        if self.trace is not None:
            self._emit({"t": self.now, "ev": "send", "actor": src, "dest": s.dest, "msg": msg.to_dict()})
        sender_round = self.engines[src].r_cur
        for dst in self.destinations(src, s.dest):
            if dst != src:
                self.metrics.on_message(msg.kind, sender_round)
            self.schedule_delivery(src, dst, msg, self.now + self.net.delay(src, dst, self.now))

    def apply(self, rid: int, out: Output):
        eng = self.engines[rid]
        if rid in self.crash_round and eng.r_cur >= self.crash_round[rid]:
            if rid not in self.crashed:
                self.crashed.add(rid)
                self._emit({"t": self.now, "ev": "crash", "actor": rid, "round": eng.r_cur})
            return
        for kind, r, at in out.timers:
            self.schedule_timer(rid, kind, r, at)
        for s in out.sends:
            self.send(rid, s)
        if rid in self.byzantine:
            return
        obs_round = self.engines[self.observer].r_cur
        for bid in out.commits:
            self._emit({"t": self.now, "ev": "commit", "actor": rid, "block": bid.hex()})
            self.metrics.on_regular_commit(rid, bid, self.now, obs_round)
            self._record(rid, bid, self.f)
        for bid, x in out.strength:
            self._emit({"t": self.now, "ev": "strength", "actor": rid, "block": bid.hex(), "x": x})
            self.metrics.on_strength(rid, bid, x, self.now, obs_round)
            self._record(rid, bid, x)
        if self.cfg.protocol == DIEMBFT and eng.r_cur > self.cfg.duration_rounds and self.stop_reason is None:
            self.stop_reason = "duration"

    def _record(self, rid: int, bid, x: int):
        v = self.oracle.record(rid, bid, x, self.now)
        if v is not None and self.stop_reason != "violation":
            self.stop_reason = "violation"
            self._emit({"t": self.now, "ev": "violation", "detail": v.to_dict()})

    # delivery ---------------------------------------------------------------------

    def sync(self, dst: int, bid):
        eng = self.engines[dst]
        if bid in eng.tree or bid not in self.registry:
            return
        for b in self.registry.missing_chain(bid, eng.tree):
            self._emit({"t": self.now, "ev": "sync", "actor": dst, "block": b.id.hex()})
            self.apply(dst, eng.sync_block(b, self.now))

    def deliver(self, dst: int, src: int, msg):
        if dst in self.crashed:
            return
        for ref in referenced_blocks(msg):
            self.sync(dst, ref)
        if self.trace is not None:
            self._emit({"t": self.now, "ev": "deliver", "actor": dst, "src": src, "kind": msg.kind,
                        "digest": message_digest(msg).hex()})
        self.apply(dst, self.engines[dst].handle(msg, self.now))

    def fire_timer(self, rid: int, kind: str, r: int):
        if rid in self.crashed:
            return
        self._emit({"t": self.now, "ev": "timer", "actor": rid, "kind": kind, "round": r})
        self.apply(rid, self.engines[rid].on_timer(kind, r, self.now))

    # main loop --------------------------------------------------------------------

    def alive(self) -> list[int]:
        return [i for i in range(self.n) if i not in self.crashed]

    def _start(self):
        for rid in range(self.n):
            if self.crash_round.get(rid, 2) <= 1:
                self.crashed.add(rid)
                self._emit({"t": 0.0, "ev": "crash", "actor": rid, "round": 0})
        if self.cfg.protocol == DIEMBFT:
            for rid in self.alive():
                self._push(0.0, "start", rid)
        else:
            self._push(0.0, "tick", 1, late=True)

    def time_limit(self) -> float:
        c = self.cfg
        if c.protocol == STREAMLET:
            return c.duration_rounds * 2 * c.delta
        scale = 2 ** 10 if c.backoff else 1
        return c.gst + c.pre_gst_cap + (c.duration_rounds + 10) * c.timer_base * 4 * scale

    def run(self) -> RunResult:
        self._start()
        limit = self.time_limit()
        while self.heap and self.stop_reason is None:
            at, _, _, event = heapq.heappop(self.heap)
            if at > limit:
                # Streamlet rounds are clocked, so its time limit is its duration
                self.stop_reason = "duration" if self.cfg.protocol == STREAMLET else "time"
                break
            self.now = at
            self.events += 1
            if self.events > MAX_EVENTS:
                self.stop_reason = "events"
                break
            kind = event[0]
            if kind == "deliver":
                self.deliver(event[1], event[2], event[3])
            elif kind == "timer":
                self.fire_timer(event[1], event[2], event[3])
            elif kind == "start":
                self._emit({"t": self.now, "ev": "start", "actor": event[1]})
                self.apply(event[1], self.engines[event[1]].start(self.now))
            elif kind == "tick":
                self.tick(event[1])
        if self.stop_reason is None:
            # Streamlet stops scheduling ticks after the last round, so an empty queue is a normal end
            self.stop_reason = "duration" if self.cfg.protocol == STREAMLET else "drained"
        return self.finish(self.stop_reason)

    def tick(self, r: int):
        self._emit({"t": self.now, "ev": "tick", "round": r})
        for rid in self.alive():
            self.apply(rid, self.engines[rid].on_round_start(r, self.now))
        if r < self.cfg.duration_rounds:
            self._push(r * 2 * self.cfg.delta, "tick", r + 1, late=True)

    def finish(self, reason: str) -> RunResult:
        final = {}
        for rid, eng in sorted(self.engines.items()):
            strengths = sorted((b.hex(), x) for b, x in eng.ledger.strength.items())
            final[str(rid)] = {"r_cur": eng.r_cur, "committed": len(eng.committed),
                               "strengths": hashlib.sha256(canonical_bytes(strengths)).hexdigest()}
        self._emit({"t": self.now, "ev": "end", "reason": reason, "final": final,
                    "messages": dict(sorted(self.metrics.messages.items()))})
        return RunResult(self.cfg, self.metrics, self.oracle, self.trace, self.engines, reason,
                         self.now, self.registry)


def run(config: ScenarioConfig) -> RunResult:
    """Execute one scenario; scripted attacks dispatch to their own drivers."""
    if config.script == "equivocation":
        from .scripts import EquivocationSimulation
        return EquivocationSimulation(config).run()
    if config.script == "one_round_fork":
        from .scripts import OneRoundForkSimulation
        return OneRoundForkSimulation(config).run()
    return Simulation(config).run()
