import csv
import json

import pytest
from click.testing import CliRunner

from sftbft.cli import SWEEP_COLUMNS, main
from sftbft.sim.metrics import CSV_COLUMNS

GOLDEN_HEADER = ("block_id,round,height,proposer,t_proposed,t_commit_f,t_commit_1.1f,t_commit_1.2f,"
                 "t_commit_1.3f,t_commit_1.4f,t_commit_1.5f,t_commit_1.6f,t_commit_1.7f,t_commit_1.8f,"
                 "t_commit_1.9f,t_commit_2f,max_strength")


@pytest.fixture
def cli(tmp_path):
    runner = CliRunner()

    def invoke(*args):
        return runner.invoke(main, [str(a) for a in args], catch_exceptions=False)
    return invoke


@pytest.fixture
def scenario(tmp_path):
    p = tmp_path / "s.yaml"
    p.write_text("n: 4\nduration_rounds: 12\nseed: 3\n")
    return p


def test_run_writes_outputs(cli, scenario, tmp_path):
    out = tmp_path / "out"
    r = cli("run", scenario, "--out", out)
    assert r.exit_code == 0, r.output
    header = (out / "metrics.csv").read_text().splitlines()[0]
    assert header == GOLDEN_HEADER == ",".join(CSV_COLUMNS)
    rows = list(csv.reader((out / "metrics.csv").open()))
    assert len(rows) > 5 and all(len(row) == len(CSV_COLUMNS) for row in rows)
    summary = json.loads((out / "summary.json").read_text())
    assert summary["n"] == 4 and summary["violation"] is None and summary["max_strength"] == 2
    assert (out / "trace.jsonl").read_text().endswith("\n")


def test_run_overrides_and_config_errors(cli, scenario, tmp_path):
    out = tmp_path / "o2"
    r = cli("run", scenario, "--mode", "windowed:4", "--seed", 8, "--protocol", "streamlet", "--out", out)
    assert r.exit_code == 0
    summary = json.loads((out / "summary.json").read_text())
    assert (summary["mode"], summary["seed"], summary["protocol"]) == ("windowed:4", 8, "streamlet")
    bad = tmp_path / "bad.yaml"
    bad.write_text("n: 4\nbogus: 1\n")
    out3 = tmp_path / "o3"
    r = cli("run", bad, "--out", out3)
    assert r.exit_code == 3 and "bad.yaml:2" in r.output
    assert not out3.exists()
    assert cli("run", tmp_path / "missing.yaml", "--out", out3).exit_code == 3
    assert cli("run", scenario, "--mode", "bogus", "--out", out3).exit_code == 3


def test_run_exit_code_on_violation(cli, tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("preset: {name: equivocation, f: 1, mode: naive}\n")
    r = cli("run", p, "--out", tmp_path / "o")
    assert r.exit_code == 4 and "SAFETY VIOLATION" in r.output
    p.write_text("preset: {name: equivocation, f: 1, mode: marker}\n")
    assert cli("run", p, "--out", tmp_path / "o").exit_code == 0


def test_replay_command(cli, scenario, tmp_path):
    out = tmp_path / "out"
    cli("run", scenario, "--out", out)
    trace = out / "trace.jsonl"
    r = cli("replay", trace)
    assert r.exit_code == 0 and "matches" in r.output
    orig = trace.read_text().splitlines()
    lines = list(orig)
    lines[5] = lines[5].replace('"t":', '"t":1')
    trace.write_text("\n".join(lines) + "\n")
    r = cli("replay", trace)
    assert r.exit_code == 5 and "line 6" in r.output
    # a trace cut mid-line (no final newline) is checked as a prefix
    trace.write_text("\n".join(orig[:5]) + "\n" + orig[5][:20])
    r = cli("replay", trace)
    assert r.exit_code == 0 and "truncated" in r.output
    assert cli("replay", tmp_path / "none.jsonl").exit_code == 3


def test_prove_and_verify(cli, scenario, tmp_path):
    out = tmp_path / "out"
    cli("run", scenario, "--out", out)
    trace = out / "trace.jsonl"
    row = next(csv.DictReader((out / "metrics.csv").open()))
    proof = tmp_path / "p.json"
    r = cli("prove", trace, "--block", row["block_id"][:16], "--x", 1, "--out", proof)
    assert r.exit_code == 0, r.output
    r = cli("verify", proof, "--trace", trace)
    assert r.exit_code == 0 and "VALID" in r.output
    assert cli("verify", proof, "--n", 4, "--seed", 3, "--x", 1).exit_code == 0
    assert cli("verify", proof, "--n", 4, "--seed", 99).exit_code == 5
    assert cli("verify", proof, "--n", 4, "--seed", 3, "--x", 3).exit_code == 5
    assert cli("verify", proof).exit_code == 2
    assert cli("prove", trace, "--block", "zz", "--x", 1).exit_code == 3
    assert cli("prove", trace, "--block", row["block_id"], "--x", 3).exit_code == 5
    data = bytearray(proof.read_bytes())
    data[40] ^= 1
    proof.write_bytes(bytes(data))
    r = cli("verify", proof, "--trace", trace)
    assert r.exit_code == 5 and "INVALID" in r.output


def test_sweep_long_csv(cli, scenario, tmp_path):
    out = tmp_path / "sweep.csv"
    r = cli("sweep", scenario, "--param", "extra_wait", "--values", "0,30", "--out", out)
    assert r.exit_code == 0, r.output
    rows = list(csv.DictReader(out.open()))
    assert tuple(rows[0]) == SWEEP_COLUMNS
    assert len(rows) == 2 * 11
    assert {r["value"] for r in rows} == {"0.0", "30.0"}
    assert cli("sweep", scenario, "--param", "extra_wait", "--values", "").exit_code == 2
    assert cli("sweep", scenario, "--param", "bogus", "--values", "1").exit_code == 2
    assert cli("sweep", scenario, "--param", "n", "--values", "5").exit_code == 3


def test_compare_fbft(cli, tmp_path):
    out = tmp_path / "f.json"
    r = cli("compare-fbft", "--n", "4,7", "--rounds", 15, "--out", out)
    assert r.exit_code == 0, r.output
    reports = json.loads(out.read_text())
    assert [x["n"] for x in reports] == [4, 7]
    assert all(x["ratio"] > 1 for x in reports)
    assert cli("compare-fbft", "--n", "5").exit_code == 3


def test_version(cli):
    r = cli("--version")
    assert r.exit_code == 0 and "0.1.0" in r.output
