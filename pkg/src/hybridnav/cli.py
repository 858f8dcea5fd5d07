"""Command line entry point: ``hybridnav run|suite|validate|scan-debug``.

Exit codes: 0 every run converged, 1 some run timed out, 2 some run hit a
safety or Zeno fault, 3 configuration error.
"""
from __future__ import annotations

import csv
import itertools
import json
import sys
import time
from pathlib import Path

import click
import numpy as np

from .executor import CONVERGED, SAFETY_FAULT, TIMEOUT, ZENO_FAULT, run
from .metrics import compute_metrics, rld
from .scenario import ScenarioError, load_scenario
from .sensor import scan_2d, scan_3d, segment_returns

EXIT_OK, EXIT_TIMEOUT, EXIT_FAULT, EXIT_CONFIG = 0, 1, 2, 3


def _exit_code(kinds) -> int:
    kinds = set(kinds)
    if kinds & {SAFETY_FAULT, ZENO_FAULT}:
        return EXIT_FAULT
    if TIMEOUT in kinds:
        return EXIT_TIMEOUT
    return EXIT_OK


def _load(path, overrides):
    try:
        sc = load_scenario(path)
    except ScenarioError as exc:
        click.echo(f"configuration error: {exc}", err=True)
        for v in exc.violations:
            click.echo(f"  - {v}", err=True)
        sys.exit(EXIT_CONFIG)
    for key, value in overrides.items():
        if value is None:
            continue
        section, field = key
        getattr(sc, section)[field] = value
        if f"{section}.{field}" in sc.defaults_applied:
            sc.defaults_applied.remove(f"{section}.{field}")
    try:
        sc.workspace()
        for v in sc.variants:
            sc.run_config(v)
    except ValueError as exc:
        click.echo(f"configuration error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    return sc


def execute(sc, out_dir: Path, variants, starts) -> tuple[list[dict], int]:
    """Run ``starts x variants``, write one CSV and one metrics file per run.

    Returns the summary records and the exit code.
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    ws = sc.workspace()
    records = []
    for variant in variants:
        cfg = sc.run_config(variant)
        opts = sc.controller_options(variant)
        for i in starts:
            x0 = sc.starts[i]
            t0 = time.perf_counter()
            res = run(ws, x0, cfg, **opts)
            wall = time.perf_counter() - t0
            met = compute_metrics(res, x0, ws.target)
            stem = f"{sc.name}_{variant}_{i:03d}"
            res.trajectory.to_csv(out_dir / f"{stem}.csv")
            rec = {"start_index": i, "x0": [float(v) for v in x0], "variant": variant,
                   "metrics": met.to_record(), "message": res.outcome.message,
                   "metadata": sc.metadata()}
            (out_dir / f"{stem}.json").write_text(json.dumps(rec, indent=2, sort_keys=True))
            click.echo(f"{stem}: {met.outcome} t={met.t_final:.3f}s j={met.jumps} "
                       f"L={met.path_length:.4f}m wall={wall:.2f}s")
            records.append(rec)
    return records, _exit_code(r["metrics"]["outcome"] for r in records)


def summarize(records, variants) -> dict:
    by = {(r["variant"], r["start_index"]): r["metrics"] for r in records}
    starts = sorted({r["start_index"] for r in records})
    pairs = []
    for a, b in itertools.combinations(variants, 2):
        for i in starts:
            if (a, i) in by and (b, i) in by:
                la, lb = by[(a, i)]["path_length"], by[(b, i)]["path_length"]
                pairs.append({"start_index": i, "reference": a, "variant": b,
                              "rld_percent": rld(lb, la) if la > 0 else None})
    return {"runs": [{"variant": r["variant"], "start_index": r["start_index"],
                      "outcome": r["metrics"]["outcome"],
                      "path_length": r["metrics"]["path_length"]} for r in records],
            "converged": sum(r["metrics"]["outcome"] == CONVERGED for r in records),
            "total": len(records), "rld": pairs}


_overrides = [
    click.option("--dt", type=float, default=None, help="Integration step [s]."),
    click.option("--t-max", type=float, default=None, help="Time limit [s]."),
    click.option("--e-c", type=float, default=None, help="Stop radius [m]."),
    click.option("--gamma", type=float, default=None, help="Controller gain [1/s]."),
    click.option("--mode-map", type=click.Choice(["zeno_free", "original"]), default=None),
    click.option("--choice-map", type=click.Choice(["continuity", "original"]), default=None),
]


def with_overrides(f):
    for opt in reversed(_overrides):
        f = opt(f)
    return f


def _collect(dt, t_max, e_c, gamma, mode_map, choice_map):
    return {("run", "dt"): dt, ("run", "t_max"): t_max, ("run", "e_c"): e_c,
            ("controller", "gamma"): gamma, ("controller", "mode_map"): mode_map,
            ("controller", "choice_map"): choice_map}


@click.group()
def cli():
    """Hybrid obstacle-avoidance simulator for sphere worlds."""


@cli.command("run")
@click.argument("scenario", type=click.Path(dir_okay=False))
@click.option("--start", "start", type=int, default=None, help="Only this start index.")
@click.option("--variant", default=None, help="Variant to run (default: first listed).")
@click.option("--out", "out", type=click.Path(file_okay=False), default="runs")
@with_overrides
def run_cmd(scenario, start, variant, out, **kw):
    """Run one variant of SCENARIO from its starts."""
    sc = _load(scenario, _collect(**kw))
    variant = variant or sc.variants[0]
    if variant not in sc.variants:
        sc.variants.append(variant)
    starts = range(len(sc.starts)) if start is None else [start]
    if start is not None and not 0 <= start < len(sc.starts):
        click.echo(f"configuration error: start {start} out of range", err=True)
        sys.exit(EXIT_CONFIG)
    _, code = execute(sc, Path(out), [variant], list(starts))
    sys.exit(code)


@cli.command("suite")
@click.argument("scenario", type=click.Path(dir_okay=False))
@click.option("--out", "out", type=click.Path(file_okay=False), default="runs")
@with_overrides
def suite_cmd(scenario, out, **kw):
    """Run every start under every variant and write a summary."""
    sc = _load(scenario, _collect(**kw))
    records, code = execute(sc, Path(out), sc.variants, range(len(sc.starts)))
    summary = summarize(records, sc.variants)
    Path(out, f"{sc.name}_summary.json").write_text(json.dumps(summary, indent=2,
                                                               sort_keys=True))
    click.echo(f"converged {summary['converged']}/{summary['total']}")
    sys.exit(code)


@cli.command("validate")
@click.argument("scenario", type=click.Path(dir_okay=False))
def validate_cmd(scenario):
    """Check SCENARIO and print the applied defaults."""
    sc = _load(scenario, {})
    click.echo(f"ok: {len(sc.radii)} obstacles, {len(sc.starts)} starts, "
               f"dimension {sc.dimension}")
    for d in sc.defaults_applied:
        click.echo(f"  default {d} = {_lookup(sc, d)}")


def _lookup(sc, dotted):
    if "." not in dotted:
        return getattr(sc, dotted)
    sec, key = dotted.split(".", 1)
    section = getattr(sc, sec) or {}
    value = section.get(key)
    return "(derived)" if value is None else value


@cli.command("scan-debug")
@click.argument("scenario", type=click.Path(dir_okay=False))
@click.option("--start", "start", type=int, default=0)
@click.option("--out", "out", type=click.Path(dir_okay=False), default="scan.csv")
def scan_debug_cmd(scenario, start, out):
    """Dump one synthetic scan taken at a start position."""
    sc = _load(scenario, {})
    ws = sc.workspace()
    cfg = sc.scan_config()
    x0 = sc.starts[start]
    frame = scan_2d(x0, ws, cfg) if sc.dimension == 2 else scan_3d(x0, ws, cfg)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if sc.dimension == 2:
            w.writerow(["psi_deg", "range"])
            for a, r in zip(np.rad2deg(frame.angles[0]), frame.ranges):
                w.writerow([repr(float(a)), repr(float(r))])
        else:
            w.writerow(["polar_deg", "azimuth_deg", "range"])
            pol, azi = np.rad2deg(frame.angles[0]), np.rad2deg(frame.angles[1])
            for i, p in enumerate(pol):
                for j, a in enumerate(azi):
                    w.writerow([repr(float(p)), repr(float(a)), repr(float(frame.ranges[i, j]))])
    arcs = segment_returns(frame)
    click.echo(f"{frame.ranges.size} beams, {int(frame.hits.sum())} returns, "
               f"{len(arcs)} groups ({sum(a.symmetric for a in arcs)} symmetric)")


def main():
    cli()


if __name__ == "__main__":
    main()
