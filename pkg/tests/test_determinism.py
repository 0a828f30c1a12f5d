import dataclasses
import hashlib
import os
import subprocess
import sys

from sftbft.sim import run
from sftbft.sim.fuzz import random_scenario
from sftbft.sim.scenarios import equivocation_scenario

SCRIPT = """
import dataclasses, hashlib
from sftbft.sim import run
from sftbft.sim.fuzz import random_scenario
for proto, seed in (("diembft", 11), ("streamlet", 11), ("diembft", 23)):
    cfg = dataclasses.replace(random_scenario(proto, seed), trace=True)
    print(hashlib.sha256(run(cfg).trace_text().encode()).hexdigest())
"""


def trace_hashes(hash_seed):
    env = dict(os.environ, PYTHONHASHSEED=str(hash_seed))
    out = subprocess.run([sys.executable, "-c", SCRIPT], env=env, capture_output=True, text=True,
                         check=True)
    return out.stdout.split()


def test_traces_do_not_depend_on_hash_randomization():
    first = trace_hashes(0)
    assert len(first) == 3
    assert trace_hashes(1) == first
    assert trace_hashes(4242) == first


def test_same_seed_same_bytes_in_process():
    cfg = dataclasses.replace(random_scenario("diembft", 5), trace=True)
    a, b = run(cfg).trace_text(), run(cfg).trace_text()
    assert a == b
    other = dataclasses.replace(cfg, seed=cfg.seed + 1)
    assert hashlib.sha256(run(other).trace_text().encode()).digest() != hashlib.sha256(a.encode()).digest()


def test_scripted_scenario_is_deterministic():
    cfg = equivocation_scenario(2)
    assert run(cfg).trace == run(cfg).trace
