"""Command-line entry point.

Every command writes its numeric output with 15 significant digits and a
``<output>.manifest.json`` side file recording how it was produced.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .calibration import (
    DEFAULT_GRID,
    CalibrationError,
    CczGate,
    GateSimulator,
    SimulatorSettings,
    assemble_ccz,
    sweep_operating_point,
)
from .circuits import (
    CircuitError,
    FitDegenerateError,
    PulseBackend,
    fit_rb_decay,
    grover,
    multilayer_leakage,
    nominal_duration,
    Circuit,
    Gate,
    rb_fidelity,
)
from .device import CONFIG_ENV_VAR, DeviceError, load_config, device_from_dict, noise_from_dict
from .dynamics import EvolutionError, PulseSchedule, evolve_schrodinger
from .tomography import (
    CCZ,
    TomographyError,
    ideal_chi,
    make_probes,
    process_fidelity,
    qpt,
    truth_table,
    write_chi_csv,
)

SUMMARY_SCHEMA = "cczsim.summary/1"
REFERENCE_TARGETS = {
    "process_fidelity_noiseless": 0.9875,
    "process_fidelity_noisy": 0.9354,
    "grover_p111_ideal": 0.9453,
    "direct_total_ns": 256.0,
    "decomposed_total_ns": 640.0,
}


def fmt(x) -> str:
    return f"{float(x):.15g}"


@dataclass
class RunManifest:
    command: str
    config_sha256: str
    seed: int
    dt: float
    started: float = field(default_factory=time.time)
    finished: float | None = None
    outputs: list = field(default_factory=list)
    version: str = __version__

    def write(self, out_path) -> Path:
        self.finished = time.time()
        path = Path(str(out_path) + ".manifest.json")
        path.write_text(json.dumps(asdict(self), indent=2))
        return path


def _config_hash(path) -> str:
    cfg = load_config(path)
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()


def _axis(spec: str) -> np.ndarray:
    try:
        lo, hi, n = spec.split(":")
        return np.linspace(float(lo), float(hi), int(n))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected lo:hi:n, got {spec!r}") from exc


def _grid(spec: str):
    parts = dict(p.split("=", 1) for p in spec.split(","))
    try:
        return _axis(parts["c1"]), _axis(parts["c2"])
    except KeyError as exc:
        raise argparse.ArgumentTypeError(f"grid needs c1=... and c2=..., got {spec!r}") from exc


def _simulator(args, gate: CczGate | None = None) -> GateSimulator:
    cfg = load_config(args.config)
    settings = SimulatorSettings(dt=args.dt, dephasing=getattr(args, "dephasing", "printed"))
    idle = None
    if gate is not None and np.all(np.isfinite(gate.idle)):
        idle = gate.idle
    return GateSimulator(device_from_dict(cfg), noise_from_dict(cfg), settings, idle=idle)


def _load_gate(path) -> CczGate:
    try:
        return CczGate.load(path)
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        raise CalibrationError(f"cannot read gate file {path}: {exc}") from exc


def _write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, default=_json_default))


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(type(o).__name__)


# commands ------------------------------------------------------------------------------


def cmd_sweep_couplings(args, manifest):
    from .couplings import sweep_couplings, write_sweep_csv

    cfg = load_config(args.config)
    reports = sweep_couplings(device_from_dict(cfg), args.c1, args.c2, method=args.method, frame=args.frame,
                              jobs=args.jobs)
    write_sweep_csv(reports, args.out)
    manifest.outputs.append(str(args.out))
    return {"points": len(reports), "flagged": sum(bool(r.flag) for r in reports)}


def cmd_evolve(args, manifest):
    cfg = load_config(args.config)
    schedule = PulseSchedule.from_dict(json.loads(Path(args.schedule).read_text()))
    device = device_from_dict(cfg)
    labels = [tuple(int(c) for c in lab) for lab in args.labels.split(",")]
    psi0 = None
    if args.initial:
        from .device import basis_index

        psi0 = np.zeros(device.hilbert_dim, dtype=complex)
        psi0[basis_index([int(c) for c in args.initial], device)] = 1.0
    res = evolve_schrodinger(device, schedule, dt=args.dt, psi0=psi0, frame=args.frame,
                             trace_labels=labels, trace_every=args.every)
    times, names, pops = res.population_trace
    with open(args.trace, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_ns"] + list(names))
        for t, row in zip(times, pops):
            w.writerow([fmt(t)] + [fmt(p) for p in row])
    manifest.outputs.append(str(args.trace))
    return {"steps": len(times), "norm_drift": res.norm_drift}


def cmd_calibrate(args, manifest):
    sim = _simulator(args)
    g1, g2 = args.grid if args.grid is not None else DEFAULT_GRID
    result = sweep_operating_point(sim, g1, g2, tau=args.tau)
    if args.heatmap:
        with open(args.heatmap, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["amp_c1", "amp_c2", "leakage", "phi12", "phi23", "phi13", "phi123", "phi_ccz", "max_loss"])
            for p in result.points:
                ph = p.phases
                w.writerow([fmt(v) for v in (p.amp_c1, p.amp_c2, p.leakage, ph.phi12, ph.phi23, ph.phi13,
                                             ph.phi123, ph.phi_ccz, p.max_loss)])
        manifest.outputs.append(str(args.heatmap))
    gate = assemble_ccz(sim, point=result.selected)
    gate.save(args.out)
    manifest.outputs.append(str(args.out))
    return {"fidelity": gate.fidelity, "virtual_z": list(gate.virtual_z), "total_ns": gate.total_ns}


def cmd_qpt(args, manifest):
    gate = _load_gate(args.gate)
    sim = _simulator(args, gate)
    ex = sim.executor(gate.schedule(), args.mode)
    chi = qpt(ex, make_probes(f"probe{args.probes}"))
    write_chi_csv(chi, args.out)
    manifest.outputs.append(str(args.out))
    return {"process_fidelity": process_fidelity(chi, ideal_chi(CCZ))}


def cmd_truth_table(args, manifest):
    gate = _load_gate(args.gate)
    sim = _simulator(args, gate)
    tt = truth_table(sim.executor(gate.schedule(), args.mode), CCZ, sim.noise if args.readout else None)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["input"] + [f"{k:03b}" for k in range(8)])
        for k, row in enumerate(tt.probs):
            w.writerow([f"{k:03b}"] + [fmt(p) for p in row])
    manifest.outputs.append(str(args.out))
    return {"visibility": tt.visibility}


def _backend(args):
    if args.mode == "ideal":
        return None
    if not args.gate:
        raise CircuitError(f"{args.mode} mode needs --gate with a calibrated gate file")
    gate = _load_gate(args.gate)
    return PulseBackend(_simulator(args, gate), gate)


def cmd_grover(args, manifest):
    probs = grover(args.target, args.iterations, args.mode, _backend(args))
    out = {"target": args.target, "iterations": args.iterations, "mode": args.mode,
           "probabilities": {f"{k:03b}": float(fmt(p)) for k, p in enumerate(probs)}}
    _write_json(args.out, out)
    manifest.outputs.append(str(args.out))
    return {"p_target": out["probabilities"][args.target]}


def cmd_leakage_layers(args, manifest):
    if not args.gate:
        raise CircuitError("leakage-layers needs --gate with a calibrated gate file")
    args.mode = "lindblad"
    backend = _backend(args)
    direct = multilayer_leakage("direct", args.layers, backend)
    decomposed = multilayer_leakage("decomposed", args.layers, backend)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["layer", "direct", "decomposed"])
        for k, (a, b) in enumerate(zip(direct, decomposed)):
            w.writerow([k, fmt(a), fmt(b)])
    manifest.outputs.append(str(args.out))
    return {"direct_final": direct[-1], "decomposed_final": decomposed[-1]}


def cmd_rb_analyze(args, manifest):
    with open(args.data, newline="") as fh:
        rows = list(csv.DictReader(fh))
    try:
        depth = np.array([float(r["depth"]) for r in rows])
        ref = np.array([float(r["reference"]) for r in rows])
        inter = np.array([float(r["interleaved"]) for r in rows])
    except KeyError as exc:
        raise FitDegenerateError(f"rb data needs columns depth, reference, interleaved; missing {exc}") from exc
    a_r, p_r, b_r = fit_rb_decay(depth, ref)
    a_g, p_g, b_g = fit_rb_decay(depth, inter)
    out = {"p_ref": p_r, "p_gate": p_g, "fit_ref": [a_r, p_r, b_r], "fit_gate": [a_g, p_g, b_g],
           "fidelity": rb_fidelity(p_r, p_g, args.d), "d": args.d}
    if args.out:
        _write_json(args.out, out)
        manifest.outputs.append(str(args.out))
    return out


def cmd_reproduce(args, manifest):
    sim = _simulator(args)
    if args.gate:
        gate = _load_gate(args.gate)
    else:
        g1, g2 = DEFAULT_GRID
        gate = assemble_ccz(sim, g1, g2)
    summary = {"schema": SUMMARY_SCHEMA, "mode": args.mode, "reference_targets": REFERENCE_TARGETS,
               "idle_ghz": list(sim.idle), "gate": gate.to_dict()}
    ex = sim.executor(gate.schedule(), args.mode)
    summary["process_fidelity"] = process_fidelity(qpt(ex), ideal_chi(CCZ))
    summary["truth_table_visibility"] = truth_table(ex).visibility
    backend = PulseBackend(sim, gate)
    summary["grover_p111_ideal"] = float(grover("111", 2, "ideal")[7])
    summary["grover_p111"] = float(grover("111", 2, "pulse" if args.mode == "ideal" else "lindblad", backend)[7])
    summary["direct_total_ns"] = gate.total_ns
    summary["decomposed_total_ns"] = nominal_duration(Circuit([Gate("CCZ_decomposed", (1, 2, 3))]), backend)
    if args.layers > 0:
        summary["leakage_direct"] = multilayer_leakage("direct", args.layers, backend).tolist()
        summary["leakage_decomposed"] = multilayer_leakage("decomposed", args.layers, backend).tolist()
    _write_json(args.out, summary)
    manifest.outputs.append(str(args.out))
    return {"process_fidelity": summary["process_fidelity"], "grover_p111": summary["grover_p111"]}


# parser ------------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cczsim", description="Pulse-level simulation and calibration of a direct CCZ gate.")
    p.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help=f"device JSON (default: ${CONFIG_ENV_VAR} or the bundled device)")
    common.add_argument("--seed", type=int, default=0, help="seed of the single random source")
    common.add_argument("--dt", type=float, default=0.5, help="integration step in ns")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")
    sub = p.add_subparsers(dest="command", required=True, metavar="command")

    s = sub.add_parser("sweep-couplings", parents=[common], help="ZZ/ZZZ couplings over a coupler-frequency grid")
    s.add_argument("--c1", type=_axis, required=True, help="coupler 1 frequencies lo:hi:n (GHz)")
    s.add_argument("--c2", type=_axis, required=True, help="coupler 2 frequencies lo:hi:n (GHz)")
    s.add_argument("--method", choices=["exact", "pert", "order2", "order3", "order4"], default="exact")
    s.add_argument("--frame", choices=["full", "rwa"], default="full")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sweep_couplings)

    s = sub.add_parser("evolve", parents=[common], help="Schrodinger evolution of a pulse schedule")
    s.add_argument("--schedule", required=True, help="schedule JSON")
    s.add_argument("--trace", required=True, help="population trace CSV")
    s.add_argument("--initial", default="10101", help="initial Fock state as q1 c1 q2 c2 q3 digits")
    s.add_argument("--labels", default="10101,10002,00101,10100", help="comma-separated Fock labels to trace")
    s.add_argument("--every", type=float, default=1.0, help="trace spacing in ns")
    s.add_argument("--frame", choices=["full", "rwa"], default="full")
    s.set_defaults(func=cmd_evolve)

    s = sub.add_parser("calibrate", parents=[common], help="operating-point sweep and full gate calibration")
    s.add_argument("--grid", type=_grid, help="amplitude grid c1=a:b:n,c2=a:b:n")
    s.add_argument("--tau", type=float, default=150.0)
    s.add_argument("--heatmap", help="CSV of every swept point")
    s.add_argument("--out", required=True, help="gate JSON")
    s.set_defaults(func=cmd_calibrate)

    for name, func, help_ in (("qpt", cmd_qpt, "process tomography of a calibrated gate"),
                              ("truth-table", cmd_truth_table, "computational-basis truth table")):
        s = sub.add_parser(name, parents=[common], help=help_)
        s.add_argument("--gate", required=True)
        s.add_argument("--mode", choices=["ideal", "lindblad"], default="ideal")
        s.add_argument("--dephasing", choices=["printed", "standard"], default="printed")
        s.add_argument("--out", required=True)
        if name == "qpt":
            s.add_argument("--probes", type=int, choices=[64, 216], default=64)
        else:
            s.add_argument("--readout", action="store_true", help="apply readout errors")
        s.set_defaults(func=func)

    s = sub.add_parser("grover", parents=[common], help="three-qubit Grover search")
    s.add_argument("--target", default="111")
    s.add_argument("--iterations", type=int, default=2)
    s.add_argument("--mode", choices=["ideal", "pulse", "lindblad"], default="ideal")
    s.add_argument("--gate", help="calibrated gate JSON (pulse and lindblad modes)")
    s.add_argument("--dephasing", choices=["printed", "standard"], default="printed")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_grover)

    s = sub.add_parser("leakage-layers", parents=[common], help="leakage of repeated direct and decomposed CCZ")
    s.add_argument("--layers", type=int, default=10)
    s.add_argument("--gate", help="calibrated gate JSON")
    s.add_argument("--dephasing", choices=["printed", "standard"], default="printed")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_leakage_layers)

    s = sub.add_parser("rb-analyze", parents=[common], help="fit RB decays and compute the interleaved fidelity")
    s.add_argument("--data", required=True, help="CSV with columns depth, reference, interleaved")
    s.add_argument("--d", type=int, default=4)
    s.add_argument("--out")
    s.set_defaults(func=cmd_rb_analyze)

    s = sub.add_parser("reproduce", parents=[common], help="run the whole pipeline and write a summary JSON")
    s.add_argument("--mode", choices=["ideal", "lindblad"], default="ideal")
    s.add_argument("--gate", help="reuse a calibrated gate instead of calibrating")
    s.add_argument("--layers", type=int, default=10)
    s.add_argument("--dephasing", choices=["printed", "standard"], default="printed")
    s.add_argument("--out", default="summary.json")
    s.set_defaults(func=cmd_reproduce)
    return p


DOMAIN_ERRORS = (CalibrationError, CircuitError, DeviceError, EvolutionError, TomographyError,
                 FitDegenerateError, ValueError, OSError)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.jobs < 1 or args.dt <= 0:
        parser.error("--jobs must be >= 1 and --dt positive")
    args.rng = np.random.default_rng(args.seed)
    manifest = RunManifest(args.command, "", args.seed, args.dt)
    try:
        manifest.config_sha256 = _config_hash(args.config)
        result = args.func(args, manifest)
    except DOMAIN_ERRORS as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc), "command": args.command}),
              file=sys.stderr)
        return 1
    for out in manifest.outputs:
        manifest.write(out)
    print(json.dumps(result, default=_json_default))
    return 0


if __name__ == "__main__":
    sys.exit(main())
