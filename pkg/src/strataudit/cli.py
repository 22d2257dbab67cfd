"""Command-line surface: simulators, one-shot risk measurement, an
interactive audit loop, and the session service."""

from __future__ import annotations

import csv
import json
import sys
from pathlib import Path

import click

from . import combiner as comb
from . import sim
from .assorter import plurality_assorter
from .engine import AuditConfig, AuditSession, SessionStopped, IngestError
from .ingest import (
    CALIFORNIA_CSV,
    LoadError,
    load_california_results,
    load_cvr_mvr,
    load_kalamazoo_fixture,
    load_population,
)
from .martingale import ALPHA_ST, ALPHA_UB, EB
from .selector import AuditComplete

METHOD_FLAGS = {"alpha-st": ALPHA_ST, "alpha-ub": ALPHA_UB, "eb": EB}


@click.group()
def main():
    """Stratified risk-limiting audit toolkit."""


def _write_csv(path: Path, rows, fieldnames=None):
    rows = list(rows)
    if not rows:
        return
    fieldnames = fieldnames or list(rows[0].keys())
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.DictWriter(f, fieldnames=fieldnames)
        w.writeheader()
        w.writerows(rows)


@main.command()
@click.option("--scenarios", default="0.01,0.05,0.10", show_default=True,
              help="Comma-separated reported margins to audit.")
@click.option("--true-margins", default="0.01,0.05,0.10", show_default=True)
@click.option("--methods", default="alpha-st,alpha-ub,eb", show_default=True)
@click.option("--combiners", default="fisher,intersection", show_default=True)
@click.option("--allocations", default="lower_sided,proportional", show_default=True)
@click.option("--reps", default=300, show_default=True, type=int)
@click.option("--alpha", default=0.05, show_default=True, type=float)
@click.option("--seed", required=True, type=int)
@click.option("--workers", default=None, type=int,
              help="Replication worker processes (default: CPU count).")
@click.option("--out", default="out", show_default=True,
              type=click.Path(file_okay=False))
def simulate(scenarios, true_margins, methods, combiners, allocations, reps,
             alpha, seed, workers, out):
    """Two-stratum comparison-audit scenario matrix; writes workload,
    score, and stop-probability tables."""
    try:
        reported = [float(x) for x in scenarios.split(",") if x]
        true = [float(x) for x in true_margins.split(",") if x]
        meths = [METHOD_FLAGS[m.strip()] for m in methods.split(",") if m]
        combs = [c.strip() for c in combiners.split(",") if c]
        allocs = [a.strip() for a in allocations.split(",") if a]
    except KeyError as exc:
        raise click.UsageError(f"unknown method {exc.args[0]!r}")
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)

    def progress(cell):
        click.echo(
            f"reported {cell.reported:.2f} true {cell.true:.2f} "
            f"{sim.METHOD_LABELS[cell.method]:9s} {cell.headline:12s} "
            f"{cell.rule:12s} mean {cell.mean:8.1f} p90 {cell.p90:6.0f}"
        )

    import os

    report = sim.replicate(
        reported_margins=reported,
        true_margins=true,
        methods=meths,
        headlines=combs,
        rules=allocs,
        reps=reps,
        seed=seed,
        risk_limit=alpha,
        progress=progress,
        workers=workers if workers is not None else (os.cpu_count() or 1),
    )
    _write_csv(out_dir / "table1.csv", report.table_rows())
    _write_csv(out_dir / "table2.csv", sim.score(report))
    _write_csv(out_dir / "figure1.csv", report.curve_rows())
    click.echo(f"wrote {out_dir}/table1.csv, table2.csv, figure1.csv")


@main.command()
@click.option("--fixture", default=None, type=click.Path(exists=True, dir_okay=False))
@click.option("--reshuffles", default=10000, show_default=True, type=int)
@click.option("--seed", default=1, show_default=True, type=int)
@click.option("--out", default=None, type=click.Path(file_okay=False))
def kalamazoo(fixture, reshuffles, seed, out):
    """Recompute the 2018 pilot's measured risk over sample reshuffles."""
    try:
        fx = load_kalamazoo_fixture(fixture)
    except LoadError as exc:
        raise click.ClickException(str(exc))
    result = sim.kalamazoo_replication(fx, reshuffles=reshuffles, seed=seed)
    rows = [
        {"method": "SUITE (pilot)", "combiner": "-", "mean": result["suite_pvalue"],
         "sd": "", "p90": ""}
    ]
    for fam, label in (("alpha", "ALPHA"), ("eb", "EB")):
        for key, cname in (("p_fisher", "Fisher"), ("p_intersection", "Intersection")):
            s = result[f"{fam}_{key}"]
            rows.append(
                {"method": label, "combiner": cname,
                 "mean": round(s["mean"], 4), "sd": round(s["sd"], 4),
                 "p90": round(s["p90"], 4)}
            )
    for r in rows:
        click.echo(f"{r['method']:14s} {r['combiner']:13s} mean={r['mean']} "
                   f"sd={r['sd']} p90={r['p90']}")
    if out:
        out_dir = Path(out)
        out_dir.mkdir(parents=True, exist_ok=True)
        _write_csv(out_dir / "table3.csv", rows)
        click.echo(f"wrote {out_dir}/table3.csv")


@main.command()
@click.option("--data", default=None, type=click.Path(exists=True, dir_okay=False))
@click.option("--reps", default=300, show_default=True, type=int)
@click.option("--seed", default=1, show_default=True, type=int)
@click.option("--budget", default=70580, show_default=True, type=int)
@click.option("--curve/--no-curve", default=False, show_default=True,
              help="Evaluate a 5,000-card checkpoint curve, not just the budget.")
@click.option("--lambda-max", default=0.9, show_default=True, type=float)
@click.option("--out", default=None, type=click.Path(file_okay=False))
def california(data, reps, seed, budget, curve, lambda_max, out):
    """Statewide 58-county ballot-polling simulation (EB + Fisher + LP)."""
    try:
        counties, winner, loser = load_california_results(data or CALIFORNIA_CSV)
    except LoadError as exc:
        raise click.ClickException(str(exc))
    if len(counties) != 58:
        raise click.ClickException(f"expected 58 counties, got {len(counties)}")
    checkpoints = list(range(5580, budget + 30001, 5000)) if curve else None
    result = sim.california_study(
        counties, reps=reps, seed=seed, budget=budget,
        checkpoints=checkpoints, lambda_max=lambda_max,
    )
    total = sum(c[1] for c in counties)
    click.echo(f"{len(counties)} strata, {total:,} ballots, "
               f"{winner} vs {loser}")
    click.echo(f"allocation: min {min(result['allocation'].values())}, "
               f"max {max(result['allocation'].values())}")
    for cp, frac in sorted(result["stop_fraction"].items()):
        click.echo(f"stopped by {cp:>7,} cards: {frac:.3f}")
    click.echo(f"mean LP solve: {result['mean_lp_seconds'] * 1000:.1f} ms "
               f"(max {result['max_lp_seconds'] * 1000:.1f} ms)")
    if out:
        out_dir = Path(out)
        out_dir.mkdir(parents=True, exist_ok=True)
        _write_csv(
            out_dir / "california_curve.csv",
            (
                {"budget": cp, "fraction_stopped": f, "method": "EB",
                 "combiner": "Fisher", "allocation": "Proportional+10"}
                for cp, f in sorted(result["stop_fraction"].items())
            ),
        )
        click.echo(f"wrote {out_dir}/california_curve.csv")


def _config_from_file(path) -> AuditConfig:
    try:
        with open(path, encoding="utf-8") as f:
            return AuditConfig.from_dict(json.load(f))
    except FileNotFoundError:
        raise click.ClickException(f"config file {path} not found")
    except (KeyError, ValueError) as exc:
        raise click.ClickException(f"bad config: {exc}")


@main.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--sample", "sample_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--population", "population_path", default=None,
              type=click.Path(exists=True, dir_okay=False),
              help="Optional population CSV; validates stratum sizes.")
@click.option("--trace", "trace_path", default=None,
              type=click.Path(dir_okay=False),
              help="Write the per-null P-value trace (grid sessions only).")
def measure(config_path, sample_path, population_path, trace_path):
    """One-shot risk measurement from a fixed sample file."""
    config = _config_from_file(config_path)
    config.auto_stop = False
    try:
        records = load_cvr_mvr(sample_path)
        if population_path:
            pop = load_population(population_path)
            sizes = {s.sid: s.size for s in pop.strata}
            for s in config.strata:
                if s.sid in sizes and sizes[s.sid] != s.size:
                    raise LoadError(
                        f"stratum {s.sid}: population file has {sizes[s.sid]} "
                        f"cards, config says {s.size}"
                    )
    except LoadError as exc:
        raise click.ClickException(str(exc))
    session = AuditSession(config)
    kinds = {s.sid: s.kind for s in config.strata}
    best = {"p_fisher": 1.0, "p_intersection": 1.0}
    for sid, cvr, mvr in records:
        try:
            mv = float(mvr) if _is_number(mvr) else plurality_assorter(mvr)
            cv = None
            if kinds.get(sid) == "comparison":
                cv = float(cvr) if _is_number(cvr) else plurality_assorter(cvr)
            session.ingest_card(sid, mv, cv)
        except IngestError as exc:
            raise click.ClickException(str(exc))
        best["p_fisher"] = min(best["p_fisher"], session.risk.p_fisher)
        best["p_intersection"] = min(best["p_intersection"], session.risk.p_intersection)
    if trace_path:
        if session.grid is None:
            raise click.ClickException("trace export needs the grid maximizer")
        from .combiner import grid_trace_rows

        _write_csv(Path(trace_path), grid_trace_rows(session.grid, session.panels))
    am = session.risk.argmax_intersection
    click.echo(json.dumps({
        "draws": len(records),
        "p_fisher": best["p_fisher"],
        "p_intersection": best["p_intersection"],
        "final_p_fisher": session.risk.p_fisher,
        "final_p_intersection": session.risk.p_intersection,
        "argmax_theta": None if am is None else [float(t) for t in am.theta],
    }, indent=2))


def _is_number(s: str) -> bool:
    try:
        float(s)
        return True
    except (TypeError, ValueError):
        return False


@main.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--snapshot-out", default="audit_session.json", show_default=True,
              type=click.Path(dir_okay=False))
def audit(config_path, snapshot_out):
    """Interactive audit: read ``stratum,mvr[,cvr]`` lines from stdin."""
    config = _config_from_file(config_path)
    session = AuditSession(config)
    kinds = {s.sid: s.kind for s in config.strata}

    def show_state():
        try:
            sid, why = session.recommended_stratum()
            click.echo(f"next stratum: {sid} ({why})")
        except AuditComplete as exc:
            click.echo(f"audit complete: {exc}")

    click.echo(f"audit session started; risk limit {config.risk_limit}")
    show_state()
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        try:
            sid = int(parts[0])
            mv = float(parts[1]) if _is_number(parts[1]) else plurality_assorter(parts[1])
            cv = None
            if kinds.get(sid) == "comparison":
                if len(parts) < 3:
                    raise IngestError("comparison stratum needs a cvr value")
                cv = float(parts[2]) if _is_number(parts[2]) else plurality_assorter(parts[2])
            session.ingest_card(sid, mv, cv)
        except (ValueError, IndexError, IngestError) as exc:
            click.echo(f"rejected: {exc}; expected stratum,mvr[,cvr]")
            continue
        except SessionStopped:
            click.echo("session already stopped")
            continue
        click.echo(
            f"draws={len(session.draw_log)} "
            f"P_fisher={session.risk.p_fisher:.6g} "
            f"P_intersection={session.risk.p_intersection:.6g} "
            f"status={session.status}"
        )
        if session.status == "running":
            show_state()
        else:
            click.echo(f"risk limit met: audit stopped")
    Path(snapshot_out).write_text(session.snapshot_json())
    click.echo(f"snapshot written to {snapshot_out}")


@main.command()
@click.option("--port", default=8717, show_default=True, type=int)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--state-dir", default=None, type=click.Path(file_okay=False))
def serve(port, host, state_dir):
    """Run the audit-session HTTP service."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(state_dir), host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
