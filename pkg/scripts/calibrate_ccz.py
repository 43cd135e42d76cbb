"""Full direct-CCZ calibration: operating-point sweep, compensation pulses, virtual Z.

    python3 scripts/calibrate_ccz.py --out ccz_gate.json
    python3 scripts/calibrate_ccz.py --c1 -1.95:-1.85:21 --c2 -1.15:-1.05:21 --no-loss-filter --out gate.json
"""

import argparse
import time

import numpy as np

from cczsim.calibration import (
    DEFAULT_GRID,
    GateSimulator,
    NoOperatingPointError,
    assemble_ccz,
    evaluate_point,
    select_operating_point,
)
from cczsim.tomography import CCZ, ideal_chi, process_fidelity, qpt


def axis(text):
    lo, hi, n = text.split(":")
    return np.linspace(float(lo), float(hi), int(n))


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--c1", type=axis, default=DEFAULT_GRID[0])
    p.add_argument("--c2", type=axis, default=DEFAULT_GRID[1])
    p.add_argument("--no-loss-filter", action="store_true",
                   help="select on phase and |111> leakage only, as in the bare selection rule")
    p.add_argument("--accept-nearest-miss", action="store_true",
                   help="assemble the gate at the nearest miss when no point passes the filters")
    p.add_argument("--out", required=True)
    args = p.parse_args()

    t0 = time.time()
    sim = GateSimulator()
    points = [evaluate_point(sim, a1, a2) for a1 in args.c1 for a2 in args.c2]
    print(f"swept {len(points)} points in {time.time() - t0:.0f} s", flush=True)
    try:
        res = select_operating_point(points, loss_tol=None if args.no_loss_filter else 0.05)
        op = res.selected
        print(f"{len(res.candidates)} candidates")
    except NoOperatingPointError as exc:
        print(exc)
        op = exc.nearest_miss
        if op is None or not args.accept_nearest_miss:
            raise SystemExit(1)
    print(f"selected ({op.amp_c1:.4f}, {op.amp_c2:.4f}) leakage {op.leakage:.4f} "
          f"max loss {op.max_loss:.3f} phi_ccz {op.phases.phi_ccz:.4f} phi13 {op.phases.phi13:.4f}", flush=True)
    gate = assemble_ccz(sim, point=op)
    gate.save(args.out)
    f_noisy = process_fidelity(qpt(sim.executor(gate.schedule(), "lindblad")), ideal_chi(CCZ))
    print(f"tau12 {gate.tau12:g} ns, tau23 {gate.tau23:g} ns, total {gate.total_ns:g} ns; "
          f"process fidelity noiseless {gate.fidelity:.4f}, Lindblad {f_noisy:.4f} "
          f"({time.time() - t0:.0f} s total)")


if __name__ == "__main__":
    main()
