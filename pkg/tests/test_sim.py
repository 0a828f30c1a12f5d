import dataclasses
import json

import pytest

from sftbft.accounting import FULL_INTERVALS, windowed
from sftbft.sim import (CRASH, DIEMBFT, SILENT, STREAMLET, ConfigError, FaultSpec, ScenarioConfig,
                        Uniform, run)
from sftbft.sim.fuzz import random_scenario
from sftbft.sim.metrics import CSV_COLUMNS, FRACTIONS, fraction_label, level_for
from sftbft.sim.scripts import counterexample_roles, expected_quorums


def test_config_defaults_and_validation():
    cfg = ScenarioConfig(n=7)
    assert cfg.f == 2 and cfg.validate() is cfg
    bad = [
        (dict(n=6), "n"),
        (dict(mode="windowed"), "mode"),
        (dict(protocol="pbft"), "protocol"),
        (dict(duration_rounds=0), "duration_rounds"),
        (dict(faults=(FaultSpec(9, CRASH),)), "faults"),
        (dict(faults=(FaultSpec(1, CRASH), FaultSpec(1, SILENT))), "faults"),
        (dict(faults=(FaultSpec(1, SILENT), FaultSpec(2, SILENT), FaultSpec(3, SILENT))), "faults"),
        (dict(script="bogus"), "script"),
        (dict(faults=(FaultSpec(1, CRASH),), observer=1), "observer"),
    ]
    for kw, field in bad:
        with pytest.raises(ConfigError) as exc:
            ScenarioConfig(**kw).validate()
        assert exc.value.field == field, kw
    with pytest.raises(ConfigError):
        FaultSpec(0, "explode")


def test_config_dict_round_trip():
    cfg = ScenarioConfig(n=7, mode=windowed(7), seed=3, faults=(FaultSpec(2, SILENT, 4, (5, 6)),),
                         extra_wait_schedule={3: 1.5}, latency=Uniform(2.0))
    again = ScenarioConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again.to_dict() == cfg.to_dict()
    with pytest.raises(ConfigError):
        ScenarioConfig.from_dict({"bogus": 1})


def test_fault_activity_windows():
    fs = FaultSpec(1, SILENT, 3, (4, 6))
    assert [r for r in range(8) if fs.active(r)] == [4, 6]
    assert [r for r in range(5) if FaultSpec(1, SILENT, 2).active(r)] == [2, 3, 4]
    assert not FaultSpec(1, CRASH).byzantine


def test_fraction_columns():
    assert [fraction_label(x) for x in FRACTIONS][:3] == ["f", "1.1f", "1.2f"]
    assert fraction_label(2.0) == "2f"
    assert [level_for(x, 10) for x in FRACTIONS] == list(range(10, 21))
    assert [level_for(x, 1) for x in FRACTIONS] == [1] + [2] * 10
    assert CSV_COLUMNS[:5] == ["block_id", "round", "height", "proposer", "t_proposed"]
    assert CSV_COLUMNS[-1] == "max_strength" and len(CSV_COLUMNS) == 17


@pytest.mark.parametrize("protocol", [DIEMBFT, STREAMLET])
def test_fault_free_run_commits(protocol):
    res = run(ScenarioConfig(protocol=protocol, n=4, duration_rounds=15, seed=1))
    assert res.violation is None
    assert res.stop_reason in ("time", "duration", "drained")
    obs = res.engines[res.config.observer_id()]
    assert len(obs.committed) >= 8
    assert max(r.strength for r in res.records) == 2
    rows = res.metrics.rows()
    assert rows and all(m.t_regular is None or m.t_regular >= m.t_proposed for m in rows)
    assert res.metrics.total_messages > 0


def test_interval_mode_run():
    res = run(ScenarioConfig(n=7, mode=FULL_INTERVALS, duration_rounds=12))
    assert res.violation is None and len(res.records) > 0


def test_crashed_replica_goes_quiet():
    res = run(ScenarioConfig(n=4, duration_rounds=20, faults=(FaultSpec(3, CRASH, 5),)))
    sends = [json.loads(line) for line in res.trace if '"ev":"send"' in line]
    by_3 = [s["msg"]["vote"]["round"] for s in sends if s["actor"] == 3 and s["msg"]["kind"] == "vote"]
    assert by_3 and max(by_3) < 5
    assert res.engines[3].r_cur <= 5
    assert res.violation is None


def test_trace_header_and_end():
    res = run(ScenarioConfig(n=4, duration_rounds=5))
    head, end = json.loads(res.trace[0]), json.loads(res.trace[-1])
    assert head["ev"] == "header" and head["config"]["n"] == 4
    assert end["ev"] == "end" and set(end["final"]) == {"0", "1", "2", "3"}
    assert res.trace_text().count("\n") == len(res.trace)


def test_random_scenarios_stay_within_2f():
    for proto in (DIEMBFT, STREAMLET):
        for seed in range(40):
            cfg = random_scenario(proto, seed)
            cfg.validate()
            assert len(cfg.faulty) <= 2 * cfg.f
            assert cfg.n in (4, 7, 13)
            assert random_scenario(proto, seed).to_dict() == cfg.to_dict()


@pytest.mark.parametrize("f", [1, 2, 3])
def test_counterexample_roles_line_up_with_leaders(f):
    n = 3 * f + 1
    roles = counterexample_roles(n, f)
    r = roles.base_round
    lead = lambda x: x % n  # noqa: E731
    assert len(roles.honest) == 2 * f and len(roles.byzantine) == f + 1
    assert set(roles.honest) | set(roles.byzantine) == set(range(n))
    assert lead(r) == roles.h(1) and lead(r + 3) == roles.h(f + 1)
    for rnd in (r + 1, r + 2, roles.fork_round):
        assert lead(rnd) in roles.byzantine
    quorums = expected_quorums(roles)
    for name, members in quorums.items():
        assert len(members) == (2 * f + 2 if name == "QC_fork" and f >= 2 else 2 * f + 1), name


def test_fault_spec_dict_round_trip():
    fs = FaultSpec(2, SILENT, 1, (3, 4))
    assert FaultSpec.from_dict(fs.to_dict()) == fs
    assert dataclasses.replace(fs, rounds=()).active(9)
