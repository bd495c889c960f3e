#!/usr/bin/env python3
"""Mining time against batch size for DPOS and POW at several difficulties."""

import argparse

from bchandover.metrics import consensus_times, linear_r2, write_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--difficulties", default="8,10,12")
    ap.add_argument("--max-txs", type=int, default=1200)
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--out", default="runs/fig12_consensus.csv")
    args = ap.parse_args()

    counts = [1] + list(range(100, args.max_txs + 1, 100))
    rows = []
    for d in (int(x) for x in args.difficulties.split(",")):
        part = consensus_times(counts, difficulty=d, seeds=range(args.seeds))
        rows += part
        r2 = linear_r2([r["txs"] for r in part], [r["dpos_ms"] for r in part])
        ratio = min(r["pow_ms"] / r["dpos_ms"] for r in part)
        print(f"d={d:2d}: DPOS linear R2 {r2:.5f}, POW/DPOS at least {ratio:.2f}x, "
              f"mean search {part[0]['pow_iterations']:.0f} (2^d = {2 ** d})")
    write_csv(args.out, rows)


if __name__ == "__main__":
    main()
