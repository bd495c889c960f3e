#!/usr/bin/env python3
"""Run all three models on the default scenario and write every figure CSV.

    python3 scripts/run_figures.py --seeds 0-4 --out runs/figures
"""

import argparse
import time
from pathlib import Path

from bchandover.cli import FIGURES, emit_figures, parse_seeds
from bchandover.engine import run, write_run
from bchandover.scenario import MODELS, Scenario, load_scenario


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenario")
    ap.add_argument("--seeds", default="0-4")
    ap.add_argument("--out", default="runs/figures")
    args = ap.parse_args()

    base = load_scenario(args.scenario) if args.scenario else Scenario()
    seeds = parse_seeds(args.seeds)
    root = Path(args.out)
    arts = []
    for model in MODELS:
        for seed in seeds:
            t0 = time.perf_counter()
            art = run(base.with_overrides(model=model, seed=seed))
            write_run(art, root / f"{model.value}-s{seed}")
            arts.append(art)
            print(f"{model.value:>12} seed {seed}: {time.perf_counter() - t0:5.1f} s, "
                  f"overhead {art.samples[-1]['overhead_bytes']} B")
    emit_figures([f for f in FIGURES if f != "fig13"], base, seeds, arts, root)
    print(f"figure CSVs in {root}")


if __name__ == "__main__":
    main()
