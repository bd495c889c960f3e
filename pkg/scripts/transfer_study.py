#!/usr/bin/env python3
"""Multipath transfer delay and bandwidth against a hop-count single path."""

import argparse

from bchandover.cli import far_pair
from bchandover.engine import build_topology
from bchandover.metrics import transfer_rows, write_csv
from bchandover.scenario import Scenario


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--backlog", type=float, default=500.0, help="mean queued bytes per link")
    ap.add_argument("--out", default="runs/fig09_delay.csv")
    args = ap.parse_args()

    topo = build_topology(Scenario())
    src, dst = far_pair(topo)
    sizes = [64 * 2 ** k for k in range(13)]
    rows = [r for seed in range(args.seeds)
            for r in transfer_rows(topo, src, dst, sizes, (2, 3, 4), seed, backlog=args.backlog)]
    write_csv(args.out, rows)
    print(f"cells {src} -> {dst}")
    for r in rows:
        if r["seed"] == 0:
            print(f"{r['size']:>8} B  K={r['K']}  multipath {r['multipath_ms']:8.3f} ms  "
                  f"single {r['baseline_ms']:8.3f} ms")


if __name__ == "__main__":
    main()
