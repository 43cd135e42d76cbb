"""Coarse scan of the two coupler amplitudes of the CCZ segment.

Writes one CSV row per grid point (appending, so an interrupted scan resumes)
and prints the best points by leakage plus CCZ phase error.

    python3 scripts/scan_operating_point.py --c1 -1.2:-2.3:111 --c2 -0.1:-1.8:86 --out scan.csv
"""

import argparse
import csv
import os

import numpy as np

from cczsim.calibration import GateSimulator, SimulatorSettings, evaluate_point

FIELDS = ["amp_c1", "amp_c2", "leakage", "max_loss", "phi12", "phi23", "phi13", "phi123", "phi_ccz"]


def axis(text):
    lo, hi, n = text.split(":")
    return np.linspace(float(lo), float(hi), int(n))


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--c1", type=axis, required=True)
    p.add_argument("--c2", type=axis, required=True)
    p.add_argument("--tau", type=float, default=150.0)
    p.add_argument("--sigma", type=float, default=50.0)
    p.add_argument("--dt", type=float, default=1.0, help="coarser than calibration; fine for locating regions")
    p.add_argument("--out", required=True)
    args = p.parse_args()

    sim = GateSimulator(settings=SimulatorSettings(dt=args.dt))
    done = set()
    if os.path.exists(args.out):
        with open(args.out, newline="") as fh:
            done = {(round(float(r["amp_c1"]), 9), round(float(r["amp_c2"]), 9)) for r in csv.DictReader(fh)}
    new = not done and not os.path.exists(args.out)
    with open(args.out, "a", newline="") as fh:
        w = csv.writer(fh)
        if new:
            w.writerow(FIELDS)
        for a1 in args.c1:
            for a2 in args.c2:
                if (round(a1, 9), round(a2, 9)) in done:
                    continue
                op = evaluate_point(sim, a1, a2, args.tau, args.sigma)
                ph = op.phases
                w.writerow([f"{v:.15g}" for v in (a1, a2, op.leakage, op.max_loss, ph.phi12, ph.phi23, ph.phi13,
                                                    ph.phi123, ph.phi_ccz)])
                fh.flush()

    with open(args.out, newline="") as fh:
        rows = [{k: float(v) for k, v in r.items()} for r in csv.DictReader(fh)]
    score = lambda r: r["leakage"] + abs(abs(r["phi_ccz"]) - np.pi) if np.isfinite(r["phi_ccz"]) else np.inf
    print(" ".join(f"{f:>9}" for f in FIELDS))
    for r in sorted(rows, key=score)[:10]:
        print(" ".join(f"{r[f]:9.4f}" for f in FIELDS))


if __name__ == "__main__":
    main()
