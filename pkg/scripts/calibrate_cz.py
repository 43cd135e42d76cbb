"""Shortest flat-top length at which each coupler-only CZ reaches pi.

Lengths are tried in increasing order; a pair passes once ``calibrate_cphase``
finds an amplitude with pair phase pi within 0.01 rad and pair leakage below 1%.

    python3 scripts/calibrate_cz.py --taus 44,62,100,160,200,230,250
"""

import argparse
import time

import numpy as np

from cczsim.calibration import (
    GateSimulator,
    UnreachableTargetError,
    calibrate_cphase,
    measure_conditional_phases,
    measure_leakage,
)


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--taus", default="44,62,100,160,200,210,220,230,250,300")
    args = p.parse_args()
    taus = [float(t) for t in args.taus.split(",")]
    sim = GateSimulator()
    for pair, init in (((1, 2), "110"), ((2, 3), "011")):
        for tau in taus:
            t0 = time.time()
            try:
                sch = calibrate_cphase(sim, pair, np.pi, tau=tau)
            except UnreachableTargetError:
                print(f"pair {pair} tau {tau:6.1f} ns: unreachable ({time.time() - t0:.0f} s)", flush=True)
                continue
            ph = measure_conditional_phases(sim, sch)
            phase = ph.phi12 if pair == (1, 2) else ph.phi23
            (pulse,) = next(iter(sch.channels.values()))
            print(f"pair {pair} tau {tau:6.1f} ns: amplitude {pulse.amplitude:.5f}, phase {phase:+.5f}, "
                  f"leakage {measure_leakage(sim, sch, initial=init):.2e}", flush=True)
            break


if __name__ == "__main__":
    main()
