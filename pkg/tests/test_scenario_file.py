import pytest

from sftbft.accounting import FULL_INTERVALS
from sftbft.sim import ConfigError, FaultSpec, Stragglers, Uniform
from sftbft.sim.scenario_file import ScenarioFileError, load_scenario, parse_scenario


def test_plain_fields():
    sf = parse_scenario("""
n: 7
mode: full
seed: 5
latency: {kind: uniform, delay: 3}
faults:
  - {replica: 6, behavior: silent}
""")
    cfg = sf.config
    assert (cfg.n, cfg.f, cfg.mode, cfg.seed) == (7, 2, FULL_INTERVALS, 5)
    assert cfg.latency == Uniform(3.0)
    assert cfg.faults == (FaultSpec(6, "silent"),)
    assert parse_scenario("").config.n == 4


def test_preset_with_overrides():
    sf = parse_scenario("preset: {name: symmetric_latency, n: 13, stragglers: 2}\nduration_rounds: 20\n")
    cfg = sf.config
    assert cfg.n == 13 and cfg.duration_rounds == 20
    assert isinstance(cfg.latency, Stragglers) and cfg.latency.replicas == (11, 12)
    appc = parse_scenario("preset: {name: equivocation, f: 2, mode: marker}\n").config
    assert (appc.script, appc.n, str(appc.mode)) == ("equivocation", 7, "marker")
    with pytest.raises(ScenarioFileError, match="missing"):
        parse_scenario("preset: equivocation\n")


def test_with_param_reruns_preset_or_overrides():
    sf = parse_scenario("preset: {name: asymmetric_outcast, n: 13}\nduration_rounds: 30\n")
    cfg = sf.with_param("outcast_count", 2)
    assert cfg.duration_rounds == 30
    assert sum(cfg.latency.assignment) == 2
    plain = parse_scenario("n: 4\nseed: 2\n")
    assert plain.with_param("delta", 5.0).delta == 5.0
    bigger = plain.with_param("n", 7)
    assert (bigger.n, bigger.f, bigger.seed) == (7, 2, 2)
    with pytest.raises(ConfigError):
        plain.with_param("outcast_count", 1)


@pytest.mark.parametrize("text,line,needle", [
    ("n: 4\nseed: 1\nbogus: 3\n", 3, "unknown scenario field"),
    ("n: 4\nseed: one\n", 2, "seed must be an integer"),
    ("n: 6\n", 1, "n"),
    ("n: 4\nmode: windowed\n", 2, "window"),
    ("n: 4\nfaults:\n  - {replica: 9, behavior: crash}\n", 2, "out of range"),
    ("n: 4\nlatency: {kind: nope}\n", 2, "latency"),
    ("seed: 1\npreset: {name: nope}\n", 2, "preset must name"),
    ("preset: {name: symmetric_latency, bogus: 1}\n", 1, "takes no argument"),
    ("n: [4\n", 2, "YAML syntax"),
    ("echo: maybe\n", 1, "true or false"),
])
def test_errors_carry_line_numbers(text, line, needle):
    with pytest.raises(ScenarioFileError) as exc:
        parse_scenario(text, "s.yaml")
    assert exc.value.line == line
    assert needle in str(exc.value)
    assert str(exc.value).startswith(f"s.yaml:{line}:")


def test_top_level_must_be_mapping():
    with pytest.raises(ScenarioFileError):
        parse_scenario("- 1\n- 2\n")


def test_load_from_disk(tmp_path):
    p = tmp_path / "s.yaml"
    p.write_text("n: 13\nmode: windowed:13\n")
    assert load_scenario(str(p)).config.mode.window == 13
