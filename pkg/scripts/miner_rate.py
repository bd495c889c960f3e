#!/usr/bin/env python3
"""Offered service rate against miner count for both mean block sizes."""

import argparse

from bchandover.metrics import fig08_rows, write_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--miners", type=int, default=30)
    ap.add_argument("--seeds", type=int, default=1000)
    ap.add_argument("--out", default="runs/fig08_service.csv")
    args = ap.parse_args()

    rows = fig08_rows(args.miners, (150.0, 1500.0), 4.0, range(args.seeds))
    write_csv(args.out, rows)
    for r in rows:
        if r["miners"] in (1, args.miners // 2, args.miners):
            print(f"mu_t={r['mu_t']:6.0f}  miners={r['miners']:2d}  rate {r['rate_mean']:.4f} "
                  f"[{r['ci_low']:.4f}, {r['ci_high']:.4f}]")


if __name__ == "__main__":
    main()
