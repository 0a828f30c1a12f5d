"""In-memory message pump for driving engines without the simulator."""

from collections import deque

from sftbft.messages import OTHERS


class Pump:
    """Synchronous FIFO delivery; `drop(src, dst, msg)` filters messages."""

    def __init__(self, reps, drop=None):
        self.reps = reps
        self.queue = deque()
        self.drop = drop or (lambda s, d, m: False)
        self.sent = []
        self.timers = {}

    def apply(self, src, out):
        for s in out.sends:
            self.sent.append((src, s.msg))
            dests = [s.dest] if s.dest not in (None, OTHERS) else [
                i for i in self.reps if s.dest is None or i != src]
            for d in dests:
                if not self.drop(src, d, s.msg):
                    self.queue.append((src, d, s.msg))
        for kind, r, at in out.timers:
            self.timers[(src, kind, r)] = at

    def start(self):
        for i, rep in self.reps.items():
            self.apply(i, rep.start(0.0))
        return self

    def run(self, until_round, limit=100_000):
        # messages for replicas already past until_round wait for a later call
        steps, held = 0, []
        while self.queue and steps < limit:
            src, dst, msg = self.queue.popleft()
            if self.reps[dst].r_cur > until_round:
                held.append((src, dst, msg))
                continue
            self.apply(dst, self.reps[dst].handle(msg, 0.0))
            steps += 1
        self.queue.extend(held)
        return self

    def fire(self, rid, kind, r):
        self.apply(rid, self.reps[rid].on_timer(kind, r, 0.0))

    def tick(self, r):
        """Start round r on every replica (lock-step engines)."""
        for i, rep in self.reps.items():
            self.apply(i, rep.on_round_start(r, 0.0))
        return self
