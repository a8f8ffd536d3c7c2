#!/usr/bin/env python3
"""Quick-look plots of jjswitch output directories (requires matplotlib).

    plot.py OUT_DIR          # simulate: telegraph trace; ensemble: histogram vs master
    plot.py OUT_DIR -o fig.png
"""
import argparse
import csv
import os

import matplotlib.pyplot as plt


def rows(path):
    with open(path) as f:
        return list(csv.DictReader(line for line in f if not line.startswith("#")))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("directory")
    ap.add_argument("-o", "--output")
    a = ap.parse_args()
    d = a.directory
    fig, ax = plt.subplots(figsize=(8, 4))
    if os.path.exists(os.path.join(d, "histogram.csv")):
        h = rows(os.path.join(d, "histogram.csv"))
        lo = [float(r["bin_lo_uA"]) for r in h]
        width = float(h[0]["bin_hi_uA"]) - lo[0]
        n = sum(int(r["count"]) for r in h)
        ax.bar(lo, [int(r["count"]) / (n * width) for r in h], width=width, align="edge", alpha=0.5, label="trajectories")
        m = rows(os.path.join(d, "master.csv"))
        ax.plot([float(r["I_uA"]) for r in m], [float(r["density_per_uA"]) for r in m], "k-", label="master equation")
        ax.set_xlabel("I_s (uA)")
        ax.set_ylabel("P(I_s) (1/uA)")
        ax.legend()
    elif os.path.exists(os.path.join(d, "sweep.csv")):
        s = rows(os.path.join(d, "sweep.csv"))
        x = [float(r["value"]) for r in s]
        for key in ("mean_dwell_upper", "mean_dwell_lower"):
            ax.plot(x, [float(r[key]) if r[key] else float("nan") for r in s], "o-", label=key)
        ax.set_xlabel("sweep value")
        ax.set_ylabel("mean dwell (ramps)")
        ax.legend()
    else:
        r = rows(os.path.join(d, "records.csv"))
        ax.plot([int(x["ramp_index"]) for x in r], [float(x["I_s_uA"]) for x in r], ".", ms=2)
        ax.set_xlabel("ramp index")
        ax.set_ylabel("I_s (uA)")
    fig.tight_layout()
    if a.output:
        fig.savefig(a.output, dpi=150)
    else:
        plt.show()


if __name__ == "__main__":
    main()
