"""Command-line front end (``deconflict``)."""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import click
import numpy as np

from .errors import DeconflictError, InitialLoss, InstanceFormatError
from .instances import generate_cp, generate_rcp, load_instance, save_instance
from .model import ControlBounds, ControlDecision
from .orchestrate import ResolutionReport, resolve, verify
from .relax import EnvelopeVariant

EXIT_OK, EXIT_NOSOL, EXIT_INPUT, EXIT_SOLVER = 0, 2, 3, 4
CP_SIZES = tuple(range(4, 21))
RCP_SIZES = (10, 20, 30, 40)
STEPS = (("miqp", "LB-MIQP"), ("miqcp", "LB-MIQCP"), ("nlp", "UB-NLP"))
STEP_FIELDS = ("objective", "time_s", "gap_pct", "status", "n_v")
STATUS_VALUES = ("global", "local", "viol", "infeas", "nosol")
FINAL_VALUES = ("global", "local", "infeas", "nosol")

BENCH_COLUMNS = (["instance", "n_aircraft", "n_c"]
                 + [f"{s}_{f}" for s, _ in STEPS for f in STEP_FIELDS]
                 + ["status", "objective", "lower_bound", "gap_pct", "total_time_s"])

_NUMERIC = ("n_c", *(f"{s}_{f}" for s, _ in STEPS for f in ("objective", "time_s", "gap_pct", "n_v")),
            "objective", "gap_pct", "total_time_s")
AGG_COLUMNS = (["n_aircraft", "instances"]
               + [f"{c}_{stat}" for c in _NUMERIC for stat in ("mean", "std")]
               + [f"{s}_{v}" for s, _ in STEPS for v in STATUS_VALUES]
               + [f"final_{v}" for v in FINAL_VALUES])

log = logging.getLogger("deconflict")


class InputError(click.ClickException):
    exit_code = EXIT_INPUT


def _setup_logging():
    level = os.environ.get("DECONFLICT_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _bounds(text: str | None) -> ControlBounds:
    if not text:
        return ControlBounds()
    try:
        return ControlBounds.parse(text)
    except ValueError as exc:
        raise InputError(f"bad --bounds: {exc}") from exc


def _load(path, bounds=None):
    try:
        return load_instance(path, bounds)
    except FileNotFoundError as exc:
        raise InputError(f"{path}: no such file") from exc
    except (InstanceFormatError, InitialLoss, ValueError) as exc:
        raise InputError(f"{path}: {exc}") from exc


def _load_controls(path) -> list[ControlDecision]:
    try:
        data = json.loads(Path(path).read_text())
        return [ControlDecision(float(c["dx"]), float(c["dy"])) for c in data["controls"]]
    except FileNotFoundError as exc:
        raise InputError(f"{path}: no such file") from exc
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{path}: not a report with controls ({exc})") from exc


bounds_option = click.option("--bounds", default=None, metavar="Q_LO,Q_HI,TH_LO,TH_HI",
                             help="Speed-ratio and heading-deviation bounds (radians).")
time_option = click.option("--time-limit", type=float, default=300.0, show_default=True,
                           help="Seconds per MIP step.")
envelope_option = click.option("--envelope", type=click.Choice([e.value for e in EnvelopeVariant]),
                               default=EnvelopeVariant.VERBATIM.value, show_default=True,
                               help="Secant used for the speed-ring hull.")
timings_option = click.option("--no-timings", is_flag=True,
                              help="Write zero times so outputs are byte-reproducible.")


@click.group()
def main():
    """Aircraft conflict resolution by speed and heading control."""
    _setup_logging()


@main.command()
@click.option("--kind", type=click.Choice(["cp", "rcp"]), required=True)
@click.option("-n", "n_aircraft", type=int, required=True)
@click.option("--seed", type=int, default=0, show_default=True, help="RCP seed (first of a batch).")
@click.option("--count", type=int, default=1, show_default=True, help="RCP instances, seeds seed..seed+count-1.")
@click.option("--radius", type=float, default=200.0, show_default=True)
@click.option("-o", "--out", type=click.Path(), required=True,
              help="Output file, or directory when --count > 1.")
def generate(kind, n_aircraft, seed, count, radius, out):
    """Write CP or RCP instance files."""
    if n_aircraft < 2:
        raise InputError("need at least two aircraft")
    if kind == "cp":
        save_instance(generate_cp(n_aircraft, radius=radius), out)
        click.echo(out)
        return
    if count == 1:
        save_instance(generate_rcp(n_aircraft, radius=radius, seed=seed), out)
        click.echo(out)
        return
    outdir = Path(out)
    outdir.mkdir(parents=True, exist_ok=True)
    for s in range(seed, seed + count):
        path = outdir / f"RCP-{n_aircraft}-s{s}.json"
        save_instance(generate_rcp(n_aircraft, radius=radius, seed=s), path)
        click.echo(str(path))


@main.command()
@click.argument("instance", type=click.Path())
@bounds_option
@time_option
@envelope_option
@timings_option
@click.option("-o", "--out", type=click.Path(), default=None, help="Report JSON (stdout if omitted).")
def solve(instance, bounds, time_limit, envelope, no_timings, out):
    """Run the three-step pipeline on INSTANCE and write a JSON report."""
    inst = _load(instance, _bounds(bounds))
    try:
        report = resolve(inst, time_limit, envelope)
    except DeconflictError as exc:
        click.echo(f"solver failure: {exc}", err=True)
        sys.exit(EXIT_SOLVER)
    except Exception as exc:  # pragma: no cover - defensive
        log.exception("unexpected solver error")
        click.echo(f"solver failure: {exc}", err=True)
        sys.exit(EXIT_SOLVER)
    if report.feasible and not verify(inst, report.controls).feasible:
        click.echo("solver failure: reported solution fails verification", err=True)
        sys.exit(EXIT_SOLVER)
    text = report.to_json(timings=not no_timings)
    if out:
        Path(out).write_text(text)
    else:
        click.echo(text, nl=False)
    click.echo(f"{inst.name or instance}: {report.status.value} objective={report.objective}", err=True)
    sys.exit(EXIT_OK if report.feasible else EXIT_NOSOL)


@main.command(name="verify")
@click.argument("instance", type=click.Path())
@click.argument("report", type=click.Path())
@bounds_option
def verify_cmd(instance, report, bounds):
    """Independently check the controls in REPORT against INSTANCE."""
    inst = _load(instance, _bounds(bounds))
    controls = _load_controls(report)
    if len(controls) != inst.n:
        raise InputError(f"report has {len(controls)} controls, instance has {inst.n} aircraft")
    res = verify(inst, controls)
    for (i, j), m in sorted(res.margins.items()):
        click.echo(f"{i},{j},{m:.9f}")
    click.echo(f"feasible={str(res.feasible).lower()} min_margin={res.min_margin:.9f} "
               f"violated_pairs={len(res.violated_pairs)} bound_violations={len(res.bound_violations)}",
               err=True)
    sys.exit(EXIT_OK if res.feasible else EXIT_NOSOL)


@main.command()
@click.argument("instance", type=click.Path())
@click.option("--report", type=click.Path(), default=None, help="Report JSON whose controls to draw.")
@click.option("-o", "--out", type=click.Path(), required=True, help="Output SVG (or PNG).")
def plot(instance, report, out):
    """Draw an instance, optionally with resolved headings."""
    from .plotting import plot_instance

    inst = _load(instance)
    controls = _load_controls(report) if report else None
    if controls is not None and len(controls) != inst.n:
        raise InputError("report does not match the instance")
    plot_instance(inst, out, controls)
    click.echo(out)


def _fmt(v, digits=None):
    if v is None or (isinstance(v, float) and not math.isfinite(v)):
        return ""
    if digits is not None:
        return f"{v:.{digits}f}"
    return repr(float(v)) if isinstance(v, float) else str(v)


def bench_row(report: ResolutionReport, timings: bool = True) -> dict:
    """Flatten a report into one CSV row with the ``BENCH_COLUMNS`` keys."""
    row = {"instance": report.instance, "n_aircraft": report.n_aircraft, "n_c": report.n_c}
    by_name = {s.step: s for s in report.steps}
    total = 0.0
    for key, name in STEPS:
        s = by_name.get(name)
        t = (s.time_s if timings else 0.0) if s else None
        total += t or 0.0
        row[f"{key}_objective"] = _fmt(s.objective) if s else ""
        row[f"{key}_time_s"] = _fmt(t, 3) if s else ""
        row[f"{key}_gap_pct"] = _fmt(None if s is None or s.gap is None else 100 * s.gap, 3)
        row[f"{key}_status"] = s.status.value if s else ""
        row[f"{key}_n_v"] = _fmt(s.n_v) if s and s.n_v is not None else ""
    row["status"] = report.status.value
    row["objective"] = _fmt(report.objective)
    row["lower_bound"] = _fmt(report.lower_bound)
    row["gap_pct"] = _fmt(None if report.gap is None else 100 * report.gap, 3)
    row["total_time_s"] = _fmt(total, 3)
    return row


def aggregate_rows(rows: list[dict]) -> list[dict]:
    """Per-size mean and (population) standard deviation, plus status counts."""
    out = []
    for n in sorted({int(r["n_aircraft"]) for r in rows}):
        group = [r for r in rows if int(r["n_aircraft"]) == n]
        agg = {"n_aircraft": n, "instances": len(group)}
        for col in _NUMERIC:
            vals = np.array([float(r[col]) for r in group if r[col] != ""], dtype=float)
            agg[f"{col}_mean"] = _fmt(float(vals.mean())) if len(vals) else ""
            agg[f"{col}_std"] = _fmt(float(vals.std())) if len(vals) else ""
        for key, _ in STEPS:
            for v in STATUS_VALUES:
                agg[f"{key}_{v}"] = sum(r[f"{key}_status"] == v for r in group)
        for v in FINAL_VALUES:
            agg[f"final_{v}"] = sum(r["status"] == v for r in group)
        out.append(agg)
    return out


def write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow(r)


def _bench_one(job):
    kind, n, seed, bounds, time_limit, envelope, timings = job
    inst = generate_cp(n) if kind == "cp" else generate_rcp(n, seed=seed)
    inst = inst.with_bounds(bounds)
    report = resolve(inst, time_limit, envelope)
    if report.feasible and not verify(inst, report.controls).feasible:
        raise RuntimeError(f"{inst.name}: reported solution fails verification")
    return bench_row(report, timings)


def _sizes(text: str | None, default):
    if text is None:
        return list(default)
    text = text.strip()
    if not text:
        return []
    try:
        return [int(t) for t in text.split(",")]
    except ValueError as exc:
        raise InputError(f"bad --sizes: {text!r}") from exc


@main.command()
@click.option("--suite", type=click.Choice(["cp", "rcp"]), required=True)
@click.option("--sizes", default=None, help="Comma-separated aircraft counts (empty for none).")
@click.option("--count", type=int, default=100, show_default=True, help="RCP instances per size.")
@click.option("--seed", type=int, default=0, show_default=True, help="First RCP seed.")
@bounds_option
@time_option
@envelope_option
@timings_option
@click.option("--parallel", type=int, default=1, show_default=True, help="Worker processes.")
@click.option("-o", "--out", type=click.Path(), required=True, help="CSV path.")
@click.option("--figure/--no-figure", default=True, show_default=True,
              help="Also render an SVG summary next to the CSV.")
def bench(suite, sizes, count, seed, bounds, time_limit, envelope, no_timings, parallel, out, figure):
    """Run a CP or RCP sweep and write a CSV (plus a summary figure)."""
    b = _bounds(bounds)
    ns = _sizes(sizes, CP_SIZES if suite == "cp" else RCP_SIZES)
    if any(n < 2 for n in ns):
        raise InputError("sizes must be at least 2")
    if suite == "cp":
        jobs = [("cp", n, None, b, time_limit, envelope, not no_timings) for n in ns]
    else:
        jobs = [("rcp", n, s, b, time_limit, envelope, not no_timings)
                for n in ns for s in range(seed, seed + count)]
    try:
        if parallel > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=parallel) as pool:
                rows = list(pool.map(_bench_one, jobs))
        else:
            rows = [_bench_one(j) for j in jobs]
    except Exception as exc:
        click.echo(f"solver failure: {exc}", err=True)
        sys.exit(EXIT_SOLVER)

    out = Path(out)
    if suite == "cp":
        write_csv(out, BENCH_COLUMNS, rows)
        summary = rows
    else:
        write_csv(out.with_name(out.stem + "_instances.csv"), BENCH_COLUMNS, rows)
        write_csv(out, AGG_COLUMNS, aggregate_rows(rows))
        summary = [{"n_aircraft": a["n_aircraft"], "objective": a["objective_mean"],
                    "total_time_s": a["total_time_s_mean"]} for a in aggregate_rows(rows)]
    click.echo(str(out))
    if figure:
        from .plotting import plot_bench

        fig_path = out.with_suffix(".svg")
        plot_bench(summary, fig_path, title=f"{suite.upper()} benchmark")
        click.echo(str(fig_path))
    # per-instance statuses live in the CSV; a completed sweep is a success
    sys.exit(EXIT_OK)


if __name__ == "__main__":  # pragma: no cover
    main()
