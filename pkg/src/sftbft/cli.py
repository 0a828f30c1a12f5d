"""Command-line entry point: run, sweep, replay, prove, verify, compare-fbft.

Exit codes: 0 success, 2 usage error, 3 bad scenario or input, 4 safety
violation detected, 5 verification failure (bad proof, replay divergence,
nothing provable yet).
"""

from __future__ import annotations

import csv
import dataclasses
import json
import os
import statistics
import sys
from typing import Optional

import click

from .accounting import MARKER_ONLY
from .lightclient import StrongCommitProof, Unprovable, make_proof, verify_proof_bytes
from .sim.config import ConfigError, ScenarioConfig
from .sim.metrics import CSV_COLUMNS, FRACTIONS, fraction_label, level_for
from .sim.replay import TraceError, read_trace, replay, trace_blocks_and_qcs, trace_config
from .sim.runner import RunResult, run as run_scenario
from .sim.scenario_file import ScenarioFileError, load_scenario
from .sim.scenarios import fbft_comparison, straggler_scenario
from .types import Signer, faults_for

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_VIOLATION = 4
EXIT_VERIFY = 5

SWEEPABLE = ("delta", "extra_wait", "n", "outcast_count")


def _fail(code: int, message: str):
    click.echo(message, err=True)
    sys.exit(code)


def _overrides(cfg: ScenarioConfig, seed, mode, protocol) -> ScenarioConfig:
    kw = {}
    if seed is not None:
        kw["seed"] = seed
    if mode is not None:
        kw["mode"] = mode
    if protocol is not None:
        kw["protocol"] = protocol
    try:
        return dataclasses.replace(cfg, **kw).validate() if kw else cfg
    except ConfigError as exc:
        _fail(EXIT_CONFIG, f"error: {exc}")


def _load(path: str):
    try:
        return load_scenario(path)
    except ScenarioFileError as exc:
        _fail(EXIT_CONFIG, f"error: {exc}")
    except OSError as exc:
        _fail(EXIT_CONFIG, f"error: cannot read {path}: {exc.strerror}")


def write_metrics_csv(result: RunResult, path: str):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        w.writerows(result.metrics.csv_rows())


def summary(result: RunResult) -> dict:
    cfg = result.config
    out = {
        "protocol": cfg.protocol, "n": cfg.n, "f": cfg.f, "mode": str(cfg.mode), "seed": cfg.seed,
        "stop_reason": result.stop_reason, "end_time": result.end_time,
        "observer": cfg.observer_id(), "blocks": len(result.metrics.blocks),
        "messages": dict(sorted(result.metrics.messages.items())),
        "max_strength": max((r.strength for r in result.records), default=None),
        "violation": result.violation.to_dict() if result.violation else None,
    }
    return out


common_options = [
    click.option("--seed", type=int, default=None, help="Override the scenario seed."),
    click.option("--mode", default=None, help="Endorsement mode: marker, full, windowed:<w>, naive, fbft."),
    click.option("--protocol", type=click.Choice(["diembft", "streamlet"]), default=None),
]


def with_common(fn):
    for opt in reversed(common_options):
        fn = opt(fn)
    return fn


@click.group()
@click.version_option(package_name="sftbft")
def main():
    """Strengthened-fault-tolerance BFT simulator."""


@main.command()
@click.argument("scenario", type=click.Path(dir_okay=False))
@with_common
@click.option("--out", type=click.Path(file_okay=False), default="out", show_default=True,
              help="Directory for metrics.csv, trace.jsonl and summary.json.")
def run(scenario, seed, mode, protocol, out):
    """Run one scenario and write metrics, trace and a summary."""
    sf = _load(scenario)
    cfg = _overrides(dataclasses.replace(sf.config, trace=True), seed, mode, protocol)
    result = run_scenario(cfg)
    os.makedirs(out, exist_ok=True)
    write_metrics_csv(result, os.path.join(out, "metrics.csv"))
    with open(os.path.join(out, "trace.jsonl"), "w", encoding="utf-8") as fh:
        fh.write(result.trace_text())
    info = summary(result)
    with open(os.path.join(out, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(info, fh, indent=2, sort_keys=True)
        fh.write("\n")
    click.echo(f"{cfg.protocol} n={cfg.n} mode={cfg.mode} seed={cfg.seed}: {info['blocks']} blocks, "
               f"stop={result.stop_reason}, max strength={info['max_strength']}")
    if result.violation is not None:
        _fail(EXIT_VIOLATION, f"SAFETY VIOLATION: {result.violation.describe()}")


def sweep_rows(sf, param: str, values: list) -> list[dict]:
    rows = []
    for value in values:
        cfg = dataclasses.replace(sf.with_param(param, value), trace=False).validate()
        result = run_scenario(cfg)
        for frac in FRACTIONS:
            x = level_for(frac, cfg.f)
            rounds = [m.latency_rounds(x) for m in result.metrics.rows()]
            times = [m.latency_time(x) for m in result.metrics.rows()]
            rounds = [v for v in rounds if v is not None]
            times = [v for v in times if v is not None]
            rows.append({
                "param": param, "value": value, "x": fraction_label(frac), "level": x,
                "blocks": len(rounds),
                "mean_latency_rounds": statistics.fmean(rounds) if rounds else "",
                "mean_latency_time": statistics.fmean(times) if times else "",
            })
    return rows


SWEEP_COLUMNS = ("param", "value", "x", "level", "blocks", "mean_latency_rounds", "mean_latency_time")


def _parse_values(param: str, text: str) -> list:
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if not parts:
        raise click.BadParameter("needs at least one value", param_hint="--values")
    try:
        return [int(p) for p in parts] if param in ("n", "outcast_count") else [float(p) for p in parts]
    except ValueError:
        raise click.BadParameter(f"not a number list: {text!r}", param_hint="--values") from None


@main.command()
@click.argument("scenario", type=click.Path(dir_okay=False))
@click.option("--param", type=click.Choice(SWEEPABLE), required=True)
@click.option("--values", required=True, help="Comma-separated values.")
@with_common
@click.option("--out", type=click.Path(dir_okay=False), default="-", show_default=True)
def sweep(scenario, param, values, seed, mode, protocol, out):
    """Run the scenario once per value; write long-format latency rows per strength level."""
    vals = _parse_values(param, values)
    sf = _load(scenario)
    overrides = {}
    if seed is not None:
        overrides["seed"] = seed
    if mode is not None:
        overrides["mode"] = mode
    if protocol is not None:
        overrides["protocol"] = protocol
    sf = dataclasses.replace(sf, overrides=dict(sf.overrides, **overrides))
    try:
        rows = sweep_rows(sf, param, vals)
    except ConfigError as exc:
        _fail(EXIT_CONFIG, f"error: {exc}")
    fh = sys.stdout if out == "-" else open(out, "w", newline="", encoding="utf-8")
    try:
        w = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
        w.writeheader()
        w.writerows(rows)
    finally:
        if fh is not sys.stdout:
            fh.close()


@main.command("replay")
@click.argument("trace", type=click.Path(dir_okay=False))
def replay_cmd(trace):
    """Re-simulate a trace from its header and report the first divergent line."""
    try:
        lines = read_trace(trace)
        with open(trace, "rb") as fh:
            partial = not fh.read().endswith(b"\n")
        report = replay(lines, partial_last_line=partial)
    except (OSError, TraceError) as exc:
        _fail(EXIT_CONFIG, f"error: {exc}")
    click.echo(report.describe())
    if not report.ok:
        sys.exit(EXIT_VERIFY)


def _find_block(blocks: dict, text: str) -> bytes:
    text = text.strip().lower()
    hits = [bid for bid in blocks if bid.hex().startswith(text)] if text else []
    if len(hits) != 1:
        what = "unknown" if not hits else "ambiguous"
        _fail(EXIT_CONFIG, f"error: {what} block id {text!r}")
    return hits[0]


@main.command()
@click.argument("trace", type=click.Path(dir_okay=False))
@click.option("--block", "block_id", required=True, help="Block id or unique hex prefix.")
@click.option("--x", "strength", type=int, required=True, help="Strength to prove.")
@click.option("--out", type=click.Path(dir_okay=False), default="-", show_default=True)
def prove(trace, block_id, strength, out):
    """Build a strong-commit proof for a block from a run's trace."""
    try:
        lines = read_trace(trace)
        trace_config(lines)
        blocks, qcs = trace_blocks_and_qcs(lines)
    except (OSError, TraceError, ValueError, KeyError) as exc:
        _fail(EXIT_CONFIG, f"error: {exc}")
    target = _find_block(blocks, block_id)
    try:
        proof = make_proof(blocks.values(), target, strength, qcs)
    except Unprovable as exc:
        _fail(EXIT_VERIFY, f"unprovable: {exc}")
    data = proof.to_bytes()
    if out == "-":
        click.echo(data.decode())
    else:
        with open(out, "wb") as fh:
            fh.write(data)
        click.echo(f"proof for {target.hex()[:12]} at strength {proof.strength} "
                   f"certified by {len(proof.qc.votes)} votes -> {out}")


@main.command()
@click.argument("proof_file", type=click.Path(dir_okay=False))
@click.option("--trace", type=click.Path(dir_okay=False), default=None,
              help="Take the validator set (n and key seed) from this trace's header.")
@click.option("--n", type=int, default=None, help="Validator count, when no trace is given.")
@click.option("--seed", type=int, default=None, help="Key seed of the validator set.")
@click.option("--x", "strength", type=int, default=None, help="Also require claimed strength >= x.")
def verify(proof_file, trace, n, seed, strength):
    """Verify a proof file against a validator set."""
    if trace is not None:
        try:
            cfg = trace_config(read_trace(trace))
        except (OSError, TraceError) as exc:
            _fail(EXIT_CONFIG, f"error: {exc}")
        n, seed = cfg.n, cfg.seed
    if n is None or seed is None:
        raise click.UsageError("give --trace, or both --n and --seed")
    try:
        f = faults_for(n)
    except ValueError as exc:
        _fail(EXIT_CONFIG, f"error: {exc}")
    try:
        with open(proof_file, "rb") as fh:
            data = fh.read().rstrip(b"\n")
    except OSError as exc:
        _fail(EXIT_CONFIG, f"error: cannot read {proof_file}: {exc.strerror}")
    verdict = verify_proof_bytes(data, Signer(n, b"sftbft-sim/%d" % seed), f, strength)
    if not verdict:
        _fail(EXIT_VERIFY, f"INVALID: {verdict.reason}")
    proof = StrongCommitProof.from_dict(json.loads(data))
    click.echo(f"VALID: block {proof.block.hex()[:12]} is {proof.strength}-strong committed")


@main.command("compare-fbft")
@click.option("--n", "sizes", default="4,7,13,31", show_default=True, help="Comma-separated n values.")
@click.option("--stragglers", type=int, default=None, help="Late voters per run (default f).")
@click.option("--rounds", type=int, default=40, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Also write JSON here.")
def compare_fbft(sizes, stragglers, rounds, seed, out):
    """Messages per committed block: marker-mode strong votes vs FBFT direct votes."""
    try:
        ns = [int(x) for x in sizes.split(",") if x.strip()]
    except ValueError:
        raise click.BadParameter(f"not an integer list: {sizes!r}", param_hint="--n") from None
    reports = []
    try:
        for n in ns:
            cfg = straggler_scenario(n, MARKER_ONLY, stragglers, duration_rounds=rounds, seed=seed)
            reports.append(fbft_comparison(cfg).to_dict())
    except (ConfigError, ValueError) as exc:
        _fail(EXIT_CONFIG, f"error: {exc}")
    click.echo(f"{'n':>4} {'late':>5} {'sft/blk':>9} {'fbft/blk':>9} {'ratio':>7}")
    for r in reports:
        click.echo(f"{r['n']:>4} {r['stragglers']:>5} {r['sft_per_block']:>9.2f} "
                   f"{r['fbft_per_block']:>9.2f} {r['ratio']:>7.3f}")
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            json.dump(reports, fh, indent=2)
            fh.write("\n")


if __name__ == "__main__":
    main()
