"""Command-line entry point.

    bchandover validate --scenario table1.ini
    bchandover run --scenario table1.ini --seeds 0,1,2 --out runs/
    bchandover run --scenario attacks.ini --figures fig13 --seeds 0-99
    bchandover sweep --sweep K=2,3,4 --out runs/

Exit code 0 means success. Invalid input exits with 2; a failure during
a run exits with 3.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import metrics
from .attacks import inject_and_detect
from .engine import build_topology, run, write_run
from .scenario import MODELS, SECTION_OF, Model, ParseError, Scenario, ValidationError, coerce, load_scenario

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 2, 3
OUT_ENV = "BCHO_OUT"
FIGURES = ("fig06", "fig07", "fig08", "fig09", "fig10", "fig11", "fig12", "fig13", "table2")
RUN_FIGURES = ("fig06", "fig07", "fig11", "fig12")
FILENAMES = {"fig06": "fig06_overhead.csv", "fig07": "fig07_energy.csv", "fig08": "fig08_service.csv",
             "fig09": "fig09_delay.csv", "fig10": "fig10_bandwidth.csv", "fig11": "fig11_handover.csv",
             "fig12": "fig12_consensus.csv", "fig13": "fig13_detection.csv", "table2": "table2_privacy.csv"}
SWEEP_EXTRA = ("miner_count",)


class UnknownParam(ValueError):
    pass


class InputError(ValueError):
    pass


def parse_seeds(text: str) -> list[int]:
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            seeds.extend(range(int(lo), int(hi) + 1))
        else:
            seeds.append(int(part))
    if not seeds:
        raise InputError("no seeds given")
    return seeds


def parse_sweep(text: str) -> tuple[str, list[str]]:
    if "=" not in text:
        raise InputError(f"--sweep expects key=v1,v2,..., got {text!r}")
    key, values = text.split("=", 1)
    key = key.strip()
    if key not in SECTION_OF and key not in SWEEP_EXTRA:
        raise UnknownParam(f"unknown sweep parameter {key!r}")
    vals = [v.strip() for v in values.split(",") if v.strip()]
    if not vals:
        raise UnknownParam(f"sweep over {key!r} has no values")
    if len(vals) == 1 and ".." in vals[0]:
        lo, hi = vals[0].split("..")
        vals = [str(v) for v in range(int(lo), int(hi) + 1)]
    return key, vals


def scenario_from(args) -> tuple[Scenario, str]:
    if args.scenario:
        return load_scenario(args.scenario), Path(args.scenario).stem
    return Scenario(), "default"


def out_root(args) -> Path:
    return Path(args.out or os.environ.get(OUT_ENV) or "runs")


def models_from(args) -> list[Model]:
    if not args.model:
        return list(MODELS)
    return [coerce("model", m) for m in args.model.split(",")]


def seeds_from(args, base: Scenario) -> list[int]:
    if args.seeds:
        return parse_seeds(args.seeds)
    if args.seed is not None:
        return [args.seed]
    return [base.seed]


def figures_from(args, default) -> list[str]:
    if not args.figures:
        return list(default)
    figs = [f.strip() for f in args.figures.split(",") if f.strip()]
    bad = [f for f in figs if f not in FIGURES]
    if bad:
        raise InputError(f"unknown figures {bad}; choose from {list(FIGURES)}")
    return figs


# --- commands -----------------------------------------------------------------------

def cmd_validate(args) -> int:
    s, _ = scenario_from(args)
    print(f"ok: {s.model.value}, {s.cells} cells, {s.users} users, seed {s.seed}")
    return EXIT_OK


def _one(s: Scenario, directory: Path):
    art = run(s)
    write_run(art, directory)
    return art


def _detect(s: Scenario):
    return inject_and_detect(s)


def cmd_run(args) -> int:
    base, stem = scenario_from(args)
    figs = figures_from(args, RUN_FIGURES)
    seeds = seeds_from(args, base)
    root = out_root(args)
    jobs = max(1, args.jobs)
    if figs == ["fig13"]:
        cases = [base.with_overrides(seed=seed, model=Model.PROPOSED) for seed in seeds]
        reports = _map(_detect, cases, jobs)
        metrics.write_csv(root / FILENAMES["fig13"], metrics.fig13_rows(reports))
        for r in reports:
            print(f"seed {r.seed}: class1 {r.class1_rate:.3f} class2 {r.class2_rate:.3f} "
                  f"false positives {r.false_positives}")
        return EXIT_OK
    cases, dirs = [], []
    for model in models_from(args):
        for seed in seeds:
            cases.append(base.with_overrides(seed=seed, model=model))
            dirs.append(root / f"{stem}-{model.value}-s{seed}")
    arts = _map(_one, cases, jobs, dirs)
    for art, d in zip(arts, dirs):
        n = sum(1 for e, _ in art.handovers if e.kind.value == "InterCell")
        print(f"{d.name}: {n} handovers, {art.meta['blocks']} blocks")
    emit_figures(figs, base, seeds, arts, root)
    return EXIT_OK


def _map(fn, cases, jobs, *extra):
    if jobs == 1:
        return [fn(c, *e) for c, *e in zip(cases, *extra)]
    with ProcessPoolExecutor(jobs) as ex:
        return list(ex.map(fn, cases, *extra))


def emit_figures(figs, base: Scenario, seeds, arts, root: Path) -> None:
    rows: dict[str, list[dict]] = {}
    if "fig06" in figs:
        rows["fig06"] = [r for a in arts for r in metrics.fig06_rows(a)]
    if "fig07" in figs:
        rows["fig07"] = [r for a in arts for r in metrics.fig07_rows(a)]
    if "fig11" in figs:
        rows["fig11"] = metrics.fig11_rows(arts)
    if "fig12" in figs:
        counts = sorted({1, *np.linspace(0, base.transactions, 7).astype(int)[1:]})
        rows["fig12"] = metrics.consensus_times(counts, base.pow_difficulty, seeds=range(20),
                                                delegates=base.delegate_count)
    if "fig08" in figs:
        rows["fig08"] = metrics.fig08_rows(base.controllers, (150.0, base.miner_mu), base.miner_var)
    if "fig09" in figs or "fig10" in figs:
        topo = build_topology(base)
        src, dst = far_pair(topo)
        sizes = [64 * 4 ** k for k in range(8)]
        data = [r for seed in seeds for r in metrics.transfer_rows(topo, src, dst, sizes, (2, 3, 4), seed,
                                                                   base.Ts, base.tr)]
        for f in ("fig09", "fig10"):
            if f in figs:
                rows[f] = data
    if "fig13" in figs:
        rows["fig13"] = metrics.fig13_rows(a.detection for a in arts
                                           if a.scenario.model is Model.PROPOSED)
    if "table2" in figs:
        rng = np.random.default_rng(base.seed)
        rows["table2"] = metrics.table2_rows(tuple(int(v) for v in rng.integers(0, 50, 3)) for _ in range(10))
    for f, r in rows.items():
        metrics.write_csv(root / FILENAMES[f], r)


def far_pair(topo) -> tuple[int, int]:
    """Two interior cells (six neighbours each) far apart, so K up to 4 has disjoint routes."""
    inner = [c.id for c in topo.cells.values() if len(c.neighbors) == 6]
    pool = inner if len(inner) >= 2 else sorted(topo.cells)
    best = max(((a, b) for a in pool for b in pool if a < b),
               key=lambda ab: (np.hypot(*np.subtract(topo.cells[ab[0]].center, topo.cells[ab[1]].center)),
                               -ab[0], -ab[1]))
    return best


def cmd_sweep(args) -> int:
    base, _ = scenario_from(args)
    if not args.sweep:
        raise InputError("sweep needs --sweep key=v1,v2,...")
    key, values = parse_sweep(args.sweep)
    seeds = seeds_from(args, base)
    rows = sweep_rows(base, key, values, seeds, models_from(args))
    path = metrics.write_csv(out_root(args) / f"sweep_{key}.csv", rows)
    print(f"{len(rows)} rows -> {path}")
    return EXIT_OK


def _aggregate(rows: list[dict], field: str) -> None:
    """Attach per-group summary statistics over seeds to rows sharing a value."""
    groups: dict = {}
    for r in rows:
        groups.setdefault((r.get("model"), r["value"]), []).append(r)
    for grp in groups.values():
        v = np.array([r[field] for r in grp], dtype=float)
        half = 1.96 * v.std(ddof=1) / np.sqrt(len(v)) if len(v) > 1 else 0.0
        for r in grp:
            r.update({"mean": float(v.mean()), "p95": float(np.percentile(v, 95)), "ci_low": float(v.mean() - half),
                      "ci_high": float(v.mean() + half)})


def sweep_rows(base: Scenario, key: str, values: list[str], seeds: list[int], models) -> list[dict]:
    rows = []
    if key == "miner_count":
        counts = [int(v) for v in values]
        for seed in seeds:
            demand = metrics.service_demand(max(counts), base.miner_mu, base.miner_var, np.random.default_rng(seed))
            for m in counts:
                rows.append({"param": key, "value": m, "seed": seed, "demand": float(demand[m - 1]),
                             "rate": float(demand[m - 1] / demand[max(counts) - 1])})
        _aggregate(rows, "rate")
        return rows
    if key in ("K", "transfer_size"):
        topo = build_topology(base)
        src, dst = far_pair(topo)
        for seed in seeds:
            for v in values:
                K = int(v) if key == "K" else base.K
                size = int(v) if key == "transfer_size" else base.transfer_size
                for r in metrics.transfer_rows(topo, src, dst, [size], [K], seed, base.Ts, base.tr):
                    rows.append({"param": key, "value": coerce(key, v), **r})
        _aggregate(rows, "multipath_ms")
        return rows
    if key == "transactions":
        for seed in seeds:
            for v in values:
                r = metrics.consensus_times([int(v)], base.pow_difficulty, seeds=[seed],
                                            delegates=base.delegate_count)[0]
                rows.append({"param": key, "value": int(v), "seed": seed, **r})
        _aggregate(rows, "pow_ms")
        return rows
    for model in models:
        for v in values:
            for seed in seeds:
                s = base.with_overrides(**{key: v, "seed": seed, "model": model})
                art = run(s)
                d = np.array([e.delay for e, _ in art.handovers if e.kind.value == "InterCell"])
                last = art.samples[-1] if art.samples else {"overhead_bytes": 0, "energy_mJ": 0.0}
                rows.append({"param": key, "value": coerce(key, v), "seed": seed, "model": model.value,
                             "handovers": len(d), "delay_mean_ms": float(d.mean()) if len(d) else float("nan"),
                             "overhead_bytes": last["overhead_bytes"], "energy_mJ": last["energy_mJ"]})
    _aggregate(rows, "delay_mean_ms")
    return rows


# --- entry ----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bchandover", description="Handover authentication simulator")
    sub = p.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", help="scenario file; defaults to the built-in parameters")
    common.add_argument("--model", help="comma-separated subset of Proposed,PowBased,NetworkBased")
    common.add_argument("--seed", type=int)
    common.add_argument("--seeds", help="list such as 0,1,2 or a range 0-99")
    common.add_argument("--out", help=f"output root (default ${OUT_ENV} or ./runs)")
    common.add_argument("--figures", help=f"comma-separated subset of {','.join(FIGURES)}")
    common.add_argument("--jobs", type=int, default=1, help="parallel runs")
    sub.add_parser("validate", parents=[common], help="check a scenario file")
    sub.add_parser("run", parents=[common], help="run models and seeds, emit figure data")
    sw = sub.add_parser("sweep", parents=[common], help="vary one parameter")
    sw.add_argument("--sweep", help="key=v1,v2,... or key=lo..hi")
    return p


COMMANDS = {"validate": cmd_validate, "run": cmd_run, "sweep": cmd_sweep}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ParseError, ValidationError, UnknownParam, InputError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001 - any other failure is a runtime error
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
