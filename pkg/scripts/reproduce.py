"""Headline numbers for a calibrated gate: process fidelities, truth table, Grover, multilayer leakage.

    python3 scripts/reproduce.py --gate ccz_gate.json
"""

import argparse

import numpy as np

from cczsim.calibration import CczGate, GateSimulator
from cczsim.circuits import Circuit, Gate, PulseBackend, grover, multilayer_leakage, nominal_duration
from cczsim.tomography import CCZ, average_state_fidelity, ideal_chi, process_fidelity, qpt, truth_table


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--gate", required=True)
    p.add_argument("--layers", type=int, default=10)
    args = p.parse_args()

    gate = CczGate.load(args.gate)
    sim = GateSimulator(idle=gate.idle if np.all(np.isfinite(gate.idle)) else None)
    rows = []
    for mode in ("ideal", "lindblad"):
        ex = sim.executor(gate.schedule(), mode)
        for probes in ("probe64", "probe216"):
            rows.append((f"process fidelity {mode} {probes}", process_fidelity(qpt(ex, probes), ideal_chi(CCZ))))
        rows.append((f"truth-table visibility {mode}", truth_table(ex).visibility))
        rows.append((f"average state fidelity {mode}", average_state_fidelity(ex)))
    backend = PulseBackend(sim, gate)
    rows.append(("Grover P(111) ideal", grover("111", 2)[7]))
    rows.append(("Grover P(111) Lindblad", grover("111", 2, "lindblad", backend)[7]))
    rows.append(("direct CCZ nominal ns", gate.total_ns))
    rows.append(("decomposed CCZ nominal ns", nominal_duration(Circuit([Gate("CCZ_decomposed", (1, 2, 3))]), backend)))
    for name, value in rows:
        print(f"{name:40s} {value:.4f}", flush=True)
    if args.layers:
        direct = multilayer_leakage("direct", args.layers, backend)
        decomposed = multilayer_leakage("decomposed", args.layers, backend)
        print("layer  direct  decomposed")
        for k, (a, b) in enumerate(zip(direct, decomposed)):
            print(f"{k:5d}  {a:.4f}  {b:.4f}")


if __name__ == "__main__":
    main()
