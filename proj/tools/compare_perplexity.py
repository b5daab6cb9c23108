#!/usr/bin/env python3
"""Compare two perplexity.csv files written by `vbblocks predict`.

Prints the mean perplexity of each file, how many time steps each one wins,
and the mean log ratio.  Exits 2 if the files do not cover the same steps.
"""

import argparse
import csv
import math
import sys


def load(path):
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != ["t", "perplexity"]:
            sys.exit(f"{path}: expected header t,perplexity, got {reader.fieldnames}")
        return {int(row["t"]): float(row["perplexity"]) for row in reader}


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("a")
    parser.add_argument("b")
    args = parser.parse_args()
    a, b = load(args.a), load(args.b)
    if a.keys() != b.keys():
        print("files cover different time steps", file=sys.stderr)
        return 2
    steps = sorted(a)
    mean_a = sum(a[t] for t in steps) / len(steps)
    mean_b = sum(b[t] for t in steps) / len(steps)
    wins_a = sum(a[t] < b[t] for t in steps)
    wins_b = sum(b[t] < a[t] for t in steps)
    log_ratio = sum(math.log(a[t] / b[t]) for t in steps) / len(steps)
    print(f"steps {len(steps)}")
    print(f"mean_perplexity_a {mean_a:.6g}")
    print(f"mean_perplexity_b {mean_b:.6g}")
    print(f"lower_a {wins_a}")
    print(f"lower_b {wins_b}")
    print(f"mean_log_ratio_a_over_b {log_ratio:.6g}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
