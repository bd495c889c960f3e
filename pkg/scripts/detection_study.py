#!/usr/bin/env python3
"""Repeat the attack-detection scenario over many seeds and summarise the rates.

    python3 scripts/detection_study.py --runs 100 --out runs/fig13_detection.csv
"""

import argparse

import numpy as np

from bchandover.attacks import fig13_scenario, inject_and_detect
from bchandover.metrics import fig13_rows, write_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--runs", type=int, default=100)
    ap.add_argument("--dup-threshold", type=float, default=0.5)
    ap.add_argument("--out", default="runs/fig13_detection.csv")
    args = ap.parse_args()

    reports = [inject_and_detect(fig13_scenario(seed, dup_threshold=args.dup_threshold))
               for seed in range(args.runs)]
    rows = fig13_rows(reports)
    write_csv(args.out, rows)
    for key in ("class1_rate", "class1_latency_ms", "class2_rate", "join_time_rate", "ap_detection_rate"):
        v = np.array([r[key] for r in rows], dtype=float)
        print(f"{key:>20}: mean {np.nanmean(v):8.3f}  min {np.nanmin(v):8.3f}")
    print(f"{'false positives':>20}: {sum(r['false_positives'] for r in rows)}")


if __name__ == "__main__":
    main()
