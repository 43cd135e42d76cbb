"""Gate library and three-qubit application circuits.

Circuits run either on ideal 8×8 unitaries or, through a :class:`PulseBackend`,
on the pulse-level model. In the pulse-level modes single-qubit gates are
instantaneous ideal rotations in the dressed frame followed by an idle
window, while CZ and CCZ gates play their calibrated schedules.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import curve_fit

from .calibration import (
    CczGate,
    GateSimulator,
    calibrate_cphase,
    optimize_virtual_z,
)
from .device import QUBITS
from .dynamics import PulseSchedule

SINGLE_QUBIT_KINDS = ("H", "X", "T", "Tdag", "Rz")
KINDS = SINGLE_QUBIT_KINDS + ("CZ", "CNOT", "CCZ_direct", "CCZ_decomposed", "Toffoli")
NATIVE_PAIRS = ((1, 2), (2, 3))
SINGLE_QUBIT_NS = 24.0
# shortest flat-top lengths (ns) at which a coupler-only CZ reaches pi with pair leakage below 1%;
# found by scripts/calibrate_cz.py on the bundled device
CZ_TAU = {(1, 2): 62.0, (2, 3): 230.0}


class CircuitError(ValueError):
    pass


class FitDegenerateError(ValueError):
    pass


_H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
_X = np.array([[0, 1], [1, 0]], dtype=complex)


def _single(kind: str, theta: float | None = None) -> np.ndarray:
    if kind == "H":
        return _H
    if kind == "X":
        return _X
    if kind == "T":
        return np.diag([1.0, np.exp(1j * np.pi / 4)])
    if kind == "Tdag":
        return np.diag([1.0, np.exp(-1j * np.pi / 4)])
    if kind == "Rz":
        return np.diag([np.exp(-0.5j * theta), np.exp(0.5j * theta)])
    raise CircuitError(f"{kind} is not a single-qubit gate")


def embed_single(op: np.ndarray, qubit: int) -> np.ndarray:
    """Act with a 2×2 ``op`` on ``qubit`` (1-based, q1 most significant)."""
    mats = [np.eye(2, dtype=complex)] * 3
    mats[qubit - 1] = op
    return np.kron(np.kron(mats[0], mats[1]), mats[2])


def _bits():
    return np.array(list(itertools.product((0, 1), repeat=3)))


def cz_unitary(pair) -> np.ndarray:
    b = _bits()
    return np.diag(np.where(b[:, pair[0] - 1] & b[:, pair[1] - 1], -1.0, 1.0)).astype(complex)


def cnot_unitary(control: int, target: int) -> np.ndarray:
    U = np.zeros((8, 8), dtype=complex)
    for k, bits in enumerate(_bits()):
        out = bits.copy()
        out[target - 1] ^= bits[control - 1]
        U[out @ [4, 2, 1], k] = 1.0
    return U


CCZ_UNITARY = np.diag([1, 1, 1, 1, 1, 1, 1, -1]).astype(complex)


@dataclass(frozen=True)
class Gate:
    """One circuit element.

    ``targets`` are 1-based qubit numbers. For ``CNOT`` the first entry is
    the control; for ``Toffoli`` the last entry is the target.
    """

    kind: str
    targets: tuple = ()
    theta: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise CircuitError(f"unknown gate kind {self.kind!r}")
        object.__setattr__(self, "targets", tuple(int(q) for q in self.targets))
        if any(q not in (1, 2, 3) for q in self.targets):
            raise CircuitError(f"qubits must be 1, 2 or 3, got {self.targets}")
        need = {"CZ": 2, "CNOT": 2, "CCZ_direct": 3, "CCZ_decomposed": 3, "Toffoli": 3}.get(self.kind, 1)
        if len(self.targets) != need or len(set(self.targets)) != need:
            raise CircuitError(f"{self.kind} needs {need} distinct qubits, got {self.targets}")
        if self.kind == "Rz" and self.theta is None:
            raise CircuitError("Rz needs an angle")

    @property
    def is_single(self) -> bool:
        return self.kind in SINGLE_QUBIT_KINDS

    def unitary(self) -> np.ndarray:
        """Ideal 8×8 unitary."""
        if self.is_single:
            return embed_single(_single(self.kind, self.theta), self.targets[0])
        if self.kind == "CZ":
            return cz_unitary(self.targets)
        if self.kind == "CNOT":
            return cnot_unitary(*self.targets)
        if self.kind in ("CCZ_direct", "CCZ_decomposed"):
            return CCZ_UNITARY.copy()
        h = embed_single(_H, self.targets[2])
        return h @ CCZ_UNITARY @ h


@dataclass
class Circuit:
    gates: list = field(default_factory=list)
    n_qubits: int = 3

    def __post_init__(self):
        if self.n_qubits != 3:
            raise CircuitError("circuits act on exactly three qubits")
        self.gates = list(self.gates)

    def append(self, kind: str, *targets, theta=None) -> "Circuit":
        self.gates.append(Gate(kind, targets, theta))
        return self

    def extend(self, other: "Circuit") -> "Circuit":
        self.gates.extend(other.gates)
        return self

    def check_native(self) -> None:
        """Two-qubit gates must sit on the coupled pairs (1,2) or (2,3)."""
        for g in self.gates:
            if g.kind in ("CZ", "CNOT") and tuple(sorted(g.targets)) not in NATIVE_PAIRS:
                raise CircuitError(f"{g.kind}{g.targets} acts on an uncoupled pair")

    def unitary(self) -> np.ndarray:
        U = np.eye(8, dtype=complex)
        for g in self.gates:
            U = g.unitary() @ U
        return U

    def count(self, *kinds) -> int:
        return sum(g.kind in kinds for g in self.gates)

    def moments(self) -> list:
        """Layers of execution.

        Each multi-qubit gate is its own layer; a run of single-qubit gates
        between them forms one layer, as it would compile to one rotation per qubit.
        """
        layers: list = []
        run: list = []
        for g in self.gates:
            if g.is_single:
                run.append(g)
                continue
            if run:
                layers.append(run)
                run = []
            layers.append([g])
        if run:
            layers.append(run)
        return layers


def decomposed_ccz() -> Circuit:
    """Eight nearest-neighbour CNOTs and seven T/T† gates implementing CCZ.

    The CNOTs alternate between (1→2) and (2→3); the T gates sit on the parity
    each wire carries at that point, so the phases sum to pi on ``|111>``.
    """
    c = Circuit()
    for q in (1, 2, 3):
        c.append("T", q)
    c.append("CNOT", 1, 2).append("Tdag", 2)
    c.append("CNOT", 2, 3).append("T", 3)
    c.append("CNOT", 1, 2)
    c.append("CNOT", 2, 3).append("Tdag", 3)
    c.append("CNOT", 1, 2)
    c.append("CNOT", 2, 3).append("Tdag", 3)
    c.append("CNOT", 1, 2)
    c.append("CNOT", 2, 3)
    return c


def expand_native(circuit: Circuit, ccz: str = "direct") -> Circuit:
    """Rewrite CNOT as H·CZ·H, Toffoli as H·CCZ·H and decomposed CCZ as its CNOT circuit."""
    out = Circuit()
    for g in circuit.gates:
        if g.kind == "CNOT":
            c, t = g.targets
            out.append("H", t).append("CZ", *sorted((c, t))).append("H", t)
        elif g.kind == "Toffoli":
            t = g.targets[2]
            inner = Circuit([Gate("CCZ_direct" if ccz == "direct" else "CCZ_decomposed", (1, 2, 3))])
            out.append("H", t).extend(expand_native(inner, ccz)).append("H", t)
        elif g.kind == "CCZ_decomposed":
            out.extend(expand_native(decomposed_ccz()))
        else:
            out.gates.append(g)
    return out


def toffoli(mode: str = "ideal") -> Gate:
    """Toffoli with controls q1, q3 and target q2, built from CCZ and two Hadamards."""
    if mode not in ("ideal", "pulse", "lindblad"):
        raise CircuitError(f"unknown mode {mode!r}")
    return Gate("Toffoli", (1, 3, 2))


# pulse-level execution -------------------------------------------------------------


class PulseBackend:
    """Calibrated gates on a :class:`GateSimulator`.

    Parameters
    ----------
    sim : GateSimulator
    ccz : CczGate, optional
        Needed for direct CCZ and Toffoli gates.
    cz : mapping, optional
        ``{(1, 2): schedule, (2, 3): schedule}``; calibrated on demand when missing.
    cz_tau : mapping, optional
        Flat-top length per pair for on-demand CZ calibration, default ``CZ_TAU``.
    single_qubit_ns : float
        Idle window that stands in for each single-qubit layer.
    """

    def __init__(self, sim: GateSimulator, ccz: CczGate | None = None, cz=None,
                 single_qubit_ns: float = SINGLE_QUBIT_NS, cz_tau=None):
        self.sim = sim
        self.ccz = ccz
        self.cz = dict(cz or {})
        self.cz_tau = dict(CZ_TAU if cz_tau is None else cz_tau)
        self.single_qubit_ns = single_qubit_ns
        self._ops: dict = {}

    def cz_schedule(self, pair) -> PulseSchedule:
        pair = tuple(sorted(pair))
        if pair not in self.cz:
            sch = calibrate_cphase(self.sim, pair, np.pi, tau=self.cz_tau[pair])
            ideal = cz_unitary(pair)
            theta, _ = optimize_virtual_z(self.sim, sch, ideal=ideal)
            self.cz[pair] = sch.with_virtual_z(dict(zip(QUBITS, theta)))
        return self.cz[pair]

    def schedule_for(self, gate: Gate) -> PulseSchedule:
        if gate.kind == "CZ":
            return self.cz_schedule(gate.targets)
        if gate.kind == "CCZ_direct":
            if self.ccz is None:
                raise CircuitError("direct CCZ requested but no calibrated gate was supplied")
            return self.ccz.schedule()
        raise CircuitError(f"{gate.kind} has no pulse schedule")

    def nominal_ns(self, gate: Gate) -> float:
        if gate.is_single:
            return self.single_qubit_ns
        if gate.kind == "CZ":
            sch = self.cz_schedule(gate.targets)
            return max((p.tau for ps in sch.channels.values() for p in ps), default=0.0)
        if gate.kind == "CCZ_direct":
            return self.ccz.total_ns if self.ccz is not None else float("nan")
        raise CircuitError(f"{gate.kind} must be expanded first")

    def single_operator(self, gate: Gate) -> np.ndarray:
        """Model-basis matrix of an ideal single-qubit gate on the dressed states.

        Components that would leave the truncated basis are dropped.
        """
        key = (gate.kind, gate.targets, gate.theta)
        op = self._ops.get(key)
        if op is None:
            model = self.sim.model
            u = _single(gate.kind, gate.theta)
            k = 2 * (gate.targets[0] - 1)  # site position of the qubit
            op = np.zeros((model.dim, model.dim), dtype=complex)
            for j, occ in enumerate(model.occupations):
                n = occ[k]
                if n > 1:
                    op[j, j] = 1.0
                    continue
                for m in (0, 1):
                    new = occ.copy()
                    new[k] = m
                    i = model._pos.get(tuple(new))
                    if i is not None:
                        op[i, j] += u[m, n]
            self._ops[key] = op
        return op


@dataclass
class CircuitResult:
    """Final logical state and the leakage after every moment.

    ``state`` is an 8-vector in ideal mode and a model-basis vector or
    density matrix otherwise.
    """

    state: np.ndarray
    leakage: list
    nominal_ns: float
    duration_ns: float
    backend: PulseBackend | None = None

    def probabilities(self) -> np.ndarray:
        """Computational-basis outcome probabilities, renormalized over the kept weight."""
        s = self.state
        if s.ndim == 1 and s.shape[0] == 8:
            p = np.abs(s) ** 2
        else:
            comp = self.backend.sim.comp
            p = np.abs(s[comp]) ** 2 if s.ndim == 1 else np.real(np.diag(s))[comp]
        return p / p.sum()


def _initial_vector(initial, n: int = 8) -> np.ndarray:
    if initial is None:
        v = np.zeros(n, dtype=complex)
        v[0] = 1.0
        return v
    if isinstance(initial, str):
        v = np.zeros(n, dtype=complex)
        v[int(initial, 2)] = 1.0
        return v
    return np.asarray(initial, dtype=complex)


def run_circuit(circuit: Circuit, mode: str = "ideal", initial_state=None,
                backend: PulseBackend | None = None, ccz: str = "direct") -> CircuitResult:
    """Apply ``circuit`` gate by gate.

    ``initial_state`` is a bit string, an 8-vector, or (pulse modes) a model
    vector or density matrix. ``ccz`` picks how ``Toffoli`` gates are built.
    """
    if mode == "ideal":
        psi = _initial_vector(initial_state)
        if psi.shape != (8,):
            raise CircuitError("ideal mode takes an 8-component state")
        for g in circuit.gates:
            psi = g.unitary() @ psi
        return CircuitResult(psi, [0.0] * len(circuit.gates), float("nan"), float("nan"))
    if mode not in ("pulse", "lindblad"):
        raise CircuitError(f"unknown mode {mode!r}")
    if backend is None:
        raise CircuitError(f"{mode} mode needs a calibrated PulseBackend")
    native = expand_native(circuit, ccz)
    native.check_native()
    sim = backend.sim
    comp = sim.comp
    sim_mode = "ideal" if mode == "pulse" else mode
    state = np.asarray(initial_state if initial_state is not None else "000")
    if state.dtype.kind in "US":
        v = _initial_vector(str(state))
        state = np.zeros(sim.model.dim, dtype=complex)
        state[comp] = v
    elif state.shape == (8,):
        full = np.zeros(sim.model.dim, dtype=complex)
        full[comp] = state
        state = full
    state = state.astype(complex)
    if mode == "lindblad" and state.ndim == 1:
        state = np.outer(state, state.conj())
    t = 0.0
    nominal = 0.0
    leakage = []
    for layer in native.moments():
        if layer[0].is_single:
            for g in layer:
                op = backend.single_operator(g)
                state = op @ state if state.ndim == 1 else op @ state @ op.conj().T
            idle = PulseSchedule.idle(backend.single_qubit_ns)
            state = sim.evolve(idle, state, sim_mode, t_start=t)
            t += idle.total_time
            nominal += backend.single_qubit_ns
        else:
            g = layer[0]
            sch = backend.schedule_for(g)
            state = sim.evolve(sch, state, sim_mode, t_start=t)
            t += sch.total_time
            nominal += backend.nominal_ns(g)
        leakage.append(_leakage(state, comp))
    return CircuitResult(state, leakage, nominal, t, backend)


def _leakage(state, comp) -> float:
    if state.ndim == 1:
        total = np.vdot(state, state).real
        kept = np.sum(np.abs(state[comp]) ** 2)
    else:
        total = np.trace(state).real
        kept = np.real(np.trace(state[np.ix_(comp, comp)]))
    return float(max(0.0, 1.0 - kept / total)) if total > 0 else 1.0


def nominal_duration(circuit: Circuit, backend: PulseBackend, ccz: str = "direct") -> float:
    """Sum of the nominal lengths of the execution layers."""
    return float(sum(backend.single_qubit_ns if layer[0].is_single else backend.nominal_ns(layer[0])
                     for layer in expand_native(circuit, ccz).moments()))


def multilayer_leakage(impl: str, n_layers: int, backend: PulseBackend, mode: str = "lindblad") -> np.ndarray:
    """Leakage out of the computational states after each of ``n_layers`` CCZ applications on ``|111>``.

    Entry 0 is the starting point (zero leakage).
    """
    if impl not in ("direct", "decomposed"):
        raise CircuitError(f"impl must be 'direct' or 'decomposed', got {impl!r}")
    layer = Circuit([Gate("CCZ_direct" if impl == "direct" else "CCZ_decomposed", (1, 2, 3))])
    out = [0.0]
    state = "111"
    for _ in range(n_layers):
        res = run_circuit(layer, mode, state, backend)
        state = res.state
        out.append(res.leakage[-1])
    return np.array(out)


# Grover ---------------------------------------------------------------------------


def grover_circuit(target: str = "111", iterations: int = 2, ccz: str = "CCZ_direct") -> Circuit:
    """Uniform superposition, then ``iterations`` rounds of oracle and diffusion."""
    if len(target) != 3 or set(target) - {"0", "1"}:
        raise CircuitError(f"target must be a 3-bit string, got {target!r}")
    if iterations < 0:
        raise CircuitError("iterations must be non-negative")
    c = Circuit()
    for q in (1, 2, 3):
        c.append("H", q)
    flips = [q for q, b in zip((1, 2, 3), target) if b == "0"]
    for _ in range(iterations):
        for q in flips:
            c.append("X", q)
        c.append(ccz, 1, 2, 3)
        for q in flips:
            c.append("X", q)
        for kind in ("H", "X"):
            for q in (1, 2, 3):
                c.append(kind, q)
        c.append(ccz, 1, 2, 3)
        for kind in ("X", "H"):
            for q in (1, 2, 3):
                c.append(kind, q)
    return c


def grover(target: str = "111", iterations: int = 2, mode: str = "ideal",
           backend: PulseBackend | None = None) -> np.ndarray:
    """Outcome distribution of the three-qubit Grover search."""
    res = run_circuit(grover_circuit(target, iterations), mode, "000", backend)
    return res.probabilities()


def optimal_iterations(n_items: int = 8) -> int:
    return int(round(np.pi / 4 * np.sqrt(n_items)))


def grover_success_probability(iterations: int, n_items: int = 8) -> float:
    """Closed form ``sin^2((2k+1) theta)`` with ``sin theta = 1/sqrt(N)``."""
    theta = np.arcsin(1 / np.sqrt(n_items))
    return float(np.sin((2 * iterations + 1) * theta) ** 2)


# randomized benchmarking analysis -----------------------------------------------------


def rb_fidelity(p_ref: float, p_gate: float, d: int = 4) -> float:
    """Interleaved-RB gate fidelity ``1 - (1 - p_gate/p_ref)(1 - 1/d)``."""
    if not (0 < p_gate <= p_ref <= 1):
        raise ValueError(f"need 0 < p_gate <= p_ref <= 1, got p_gate={p_gate}, p_ref={p_ref}")
    if d < 2:
        raise ValueError("dimension must be at least 2")
    return 1.0 - (1.0 - p_gate / p_ref) * (1.0 - 1.0 / d)


def _rb_model(m, A, p, B):
    return A * p ** m + B


def fit_rb_decay(depths, survival) -> tuple[float, float, float]:
    """Least-squares fit of ``A p^m + B`` with ``p`` in (0, 1]."""
    m = np.asarray(depths, dtype=float)
    y = np.asarray(survival, dtype=float)
    if m.shape != y.shape or len(np.unique(m)) < 3:
        raise FitDegenerateError("need at least three distinct depths with matching survival data")
    if np.ptp(y) < 1e-12:
        raise FitDegenerateError("survival is constant; decay rate is not identifiable")
    popt, _ = curve_fit(_rb_model, m, y, p0=(0.5, 0.99, 0.5),
                        bounds=([-np.inf, 1e-12, -np.inf], [np.inf, 1.0, np.inf]),
                        xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=20000)
    return float(popt[0]), float(popt[1]), float(popt[2])
