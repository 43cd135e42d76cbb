"""Calibration of the direct CCZ gate.

The gate is a simultaneous flat-top pulse on both couplers followed by two
single-coupler compensation pulses and trailing virtual-Z rotations. Phases are
read out the way an experiment would, by Ramsey-style probes whose reduced
single-qubit coherence is compared between control settings.
"""

from __future__ import annotations

import functools
import itertools
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import brentq, minimize

from .couplings import find_idle_point
from .device import COUPLERS, QUBITS, DeviceModel, NoiseSpec, default_device, default_noise
from .dynamics import (
    FlatTopPulse,
    PulseSchedule,
    _virtual_z_phases,
    block_propagator,
    build_model,
    dressed_frame,
    lindblad_propagate,
    pulse_envelope,
)
from .tomography import CCZ, ideal_chi, process_fidelity, qpt

SEGMENT_TAU = 150.0
SEGMENT_SIGMA = 50.0
CPHASE_TAU = {(1, 2): 62.0, (2, 3): 44.0}
CPHASE_SIGMA = 10.0
CPHASE_COUPLER = {(1, 2): "C1", (2, 3): "C2"}
PLATEAU_MARGIN_GHZ = 0.1


class CalibrationError(RuntimeError):
    pass


class NoOperatingPointError(CalibrationError):
    """No swept point met the selection rule; ``nearest_miss`` holds the closest one."""

    def __init__(self, message: str, nearest_miss=None):
        super().__init__(message)
        self.nearest_miss = nearest_miss


class SignalLossError(CalibrationError):
    pass


class UnreachableTargetError(CalibrationError):
    pass


def wrap_phase(x):
    """Map angles to ``(-pi, pi]``."""
    return np.pi - np.mod(np.pi - np.asarray(x, dtype=float), 2 * np.pi)


# phases -------------------------------------------------------------------------------


@dataclass(frozen=True)
class PhaseSet:
    """Conditional phases of a (near-)diagonal three-qubit gate, in rad.

    ``phi123`` compares q2's Ramsey phase with q1 and q3 both excited against
    both in the ground state; ``phi_ccz`` removes the three pairwise parts.
    """

    phi12: float
    phi23: float
    phi13: float
    phi123: float

    @property
    def phi_ccz(self) -> float:
        return float(wrap_phase(self.phi123 - self.phi12 - self.phi23 - self.phi13))

    @classmethod
    def from_unitary(cls, U: np.ndarray) -> "PhaseSet":
        """Phases read directly from the diagonal of an 8×8 matrix."""
        a = np.angle(np.diag(np.asarray(U)))
        A = lambda x, y, z: a[4 * x + 2 * y + z]
        return cls(
            float(wrap_phase(A(1, 1, 0) - A(1, 0, 0) - A(0, 1, 0) + A(0, 0, 0))),
            float(wrap_phase(A(0, 1, 1) - A(0, 1, 0) - A(0, 0, 1) + A(0, 0, 0))),
            float(wrap_phase(A(1, 0, 1) - A(1, 0, 0) - A(0, 0, 1) + A(0, 0, 0))),
            float(wrap_phase(A(1, 1, 1) - A(1, 0, 1) - A(0, 1, 0) + A(0, 0, 0))),
        )

    def as_dict(self) -> dict:
        d = asdict(self)
        d["phi_ccz"] = self.phi_ccz
        return d


def conditional_phase_vector(U: np.ndarray) -> np.ndarray:
    """Phases left on the eight basis states after removing global and single-qubit parts.

    An ideal CCZ gives ``(0, ..., 0, pi)``.
    """
    a = np.angle(np.diag(np.asarray(U)))
    bits = np.array(list(itertools.product((0, 1), repeat=3)))
    single = a[[4, 2, 1]] - a[0]
    return wrap_phase(a - a[0] - bits @ single)


_PLUS = np.array([1.0, 1.0]) / np.sqrt(2)
_KET = {0: np.array([1.0, 0.0]), 1: np.array([0.0, 1.0]), "+": _PLUS}

# (label, Ramsey qubit (0-based), settings of the other qubits for reference and signal)
_PROBES = {
    "phi12": (0, ((None, 0, 0), (None, 1, 0))),
    "phi23": (1, ((0, None, 0), (0, None, 1))),
    "phi13": (0, ((None, 0, 0), (None, 0, 1))),
    "phi123": (1, ((0, None, 0), (1, None, 1))),
}


def _probe_state(pattern, target):
    kets = [_KET["+"] if k == target else _KET[v] for k, v in enumerate(pattern)]
    return np.kron(np.kron(kets[0], kets[1]), kets[2]).astype(complex)


def ramsey_phase(rho8: np.ndarray, qubit: int, min_coherence: float = 0.1) -> float:
    """Phase of the reduced ``|1><0|`` coherence of one qubit of an 8×8 density matrix."""
    r = np.asarray(rho8).reshape(2, 2, 2, 2, 2, 2)
    letters = "abc"
    ket = "".join("x" if k == qubit else letters[k] for k in range(3))
    bra = "".join("y" if k == qubit else letters[k] for k in range(3))
    red = np.einsum(f"{ket}{bra}->xy", r)
    tr = np.trace(red).real
    coherence = 2 * abs(red[1, 0]) / tr if tr > 0 else 0.0
    if coherence < min_coherence:
        raise SignalLossError(f"Ramsey coherence of q{qubit + 1} is {coherence:.3f}, below {min_coherence}")
    return float(np.angle(red[1, 0]))


def phases_from_executor(executor) -> PhaseSet:
    """Run the eight Ramsey probes through ``executor`` (stack of 8×8 inputs) and difference them."""
    names = list(_PROBES)
    inputs = []
    for name in names:
        target, patterns = _PROBES[name]
        for pat in patterns:
            psi = _probe_state(pat, target)
            inputs.append(np.outer(psi, psi.conj()))
    out = np.asarray(executor(np.array(inputs)))
    values = {}
    for k, name in enumerate(names):
        target = _PROBES[name][0]
        ref = ramsey_phase(out[2 * k], target)
        sig = ramsey_phase(out[2 * k + 1], target)
        values[name] = float(wrap_phase(sig - ref))
    return PhaseSet(**values)


# simulator ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SimulatorSettings:
    """Numerical settings shared by every calibration step."""

    frame: str = "rwa"
    max_excitations: int | None = 3
    dt: float = 0.5
    dephasing: str = "printed"


def _schedule_key(schedule: PulseSchedule) -> str:
    d = schedule.to_dict()
    d.pop("virtual_z", None)
    return json.dumps(d, sort_keys=True)


@functools.lru_cache(maxsize=8)
def _idle_point(device: DeviceModel, frame: str) -> tuple[float, float]:
    return find_idle_point(device, frame=frame)


class GateSimulator:
    """Model, dressed frame and caches for evaluating pulse schedules as logical gates.

    Parameters
    ----------
    device : DeviceModel, optional
        Defaults to the bundled device. Couplers are moved to their zero-ZZ
        idle point unless ``idle`` is given.
    noise : NoiseSpec, optional
        Used in ``"lindblad"`` mode.
    settings : SimulatorSettings, optional
    idle : (float, float), optional
        Coupler idle frequencies in GHz; pass the device's own values to skip the search.
    """

    def __init__(self, device: DeviceModel | None = None, noise: NoiseSpec | None = None,
                 settings: SimulatorSettings | None = None, idle=None):
        device = default_device() if device is None else device
        self.settings = SimulatorSettings() if settings is None else settings
        if idle is None:
            idle = _idle_point(device, self.settings.frame)
        self.idle = (float(idle[0]), float(idle[1]))
        self.device = device.with_couplers(*self.idle)
        self.noise = default_noise() if noise is None else noise
        self.model = build_model(self.device, self.settings.frame, self.settings.max_excitations)
        self.frame = dressed_frame(self.model)
        self.comp = self.model.computational
        self._unitaries: dict = {}
        self._channels: dict = {}

    # unitary evolution

    def logical_unitary(self, schedule: PulseSchedule, dt: float | None = None) -> np.ndarray:
        """Dressed-frame propagator on the model basis, virtual Z included."""
        dt = self.settings.dt if dt is None else dt
        key = (_schedule_key(schedule), dt)
        U = self._unitaries.get(key)
        if U is None:
            U = self.frame.to_logical(block_propagator(self.model, schedule, dt), schedule.total_time)
            if len(self._unitaries) > 256:
                self._unitaries.clear()
            self._unitaries[key] = U
        return _virtual_z_phases(self.model, schedule.virtual_z)[:, None] * U

    def computational_block(self, schedule: PulseSchedule, dt: float | None = None) -> np.ndarray:
        U = self.logical_unitary(schedule, dt)
        return U[np.ix_(self.comp, self.comp)]

    # open-system evolution

    def lindblad_channel(self, schedule: PulseSchedule, noise: NoiseSpec | None = None,
                         dephasing: str | None = None, dt: float | None = None) -> np.ndarray:
        """Logical-frame images of the 64 operators ``|i><j|`` on the computational states.

        Returns an array ``out[i, j]`` of model-basis matrices; virtual Z is
        applied on top. Only ``i <= j`` is propagated, the rest follows from
        Hermitian conjugation.
        """
        noise = self.noise if noise is None else noise
        dephasing = self.settings.dephasing if dephasing is None else dephasing
        dt = self.settings.dt if dt is None else dt
        key = (_schedule_key(schedule), dt, dephasing, json.dumps(_noise_key(noise)))
        ch = self._channels.get(key)
        if ch is None:
            D = self.model.dim
            pairs = [(i, j) for i in range(8) for j in range(i, 8)]
            stack = np.zeros((len(pairs), D, D), dtype=complex)
            for k, (i, j) in enumerate(pairs):
                stack[k, self.comp[i], self.comp[j]] = 1.0
            S = self.frame.S
            lab = S @ stack @ S.conj().T
            out, _ = lindblad_propagate(self.model, schedule, noise, lab, dt=dt, dephasing=dephasing)
            r = self.frame.rotation(schedule.total_time)
            out = r[:, None] * (S.conj().T @ out @ S) * r.conj()[None, :]
            ch = np.zeros((8, 8, D, D), dtype=complex)
            for k, (i, j) in enumerate(pairs):
                ch[i, j] = out[k]
                ch[j, i] = out[k].conj().T
            if len(self._channels) > 8:
                self._channels.clear()
            self._channels[key] = ch
        z = _virtual_z_phases(self.model, schedule.virtual_z)
        return z[None, None, :, None] * ch * z.conj()[None, None, None, :]

    # executors on 8×8 inputs

    def executor(self, schedule: PulseSchedule, mode: str = "ideal", normalize: bool = True,
                 noise: NoiseSpec | None = None):
        """Callable mapping a stack of 8×8 input states to 8×8 outputs.

        Outputs are projected on the computational states and, with
        ``normalize``, renormalized.
        """
        if mode == "ideal":
            M = self.computational_block(schedule)

            def run(rho):
                out = M @ np.asarray(rho) @ M.conj().T
                return _normalize(out) if normalize else out

        elif mode == "lindblad":
            ch = self.lindblad_channel(schedule, noise)
            comp = self.comp
            block = ch[:, :, comp[:, None], comp[None, :]]

            def run(rho):
                out = np.einsum("...ij,ijab->...ab", np.asarray(rho), block)
                return _normalize(out) if normalize else out

        else:
            raise CalibrationError(f"unknown mode {mode!r}")
        return run

    def evolve(self, schedule: PulseSchedule, state: np.ndarray, mode: str = "ideal",
               noise: NoiseSpec | None = None, t_start: float = 0.0) -> np.ndarray:
        """Evolve a logical model-basis vector or density matrix through ``schedule`` starting at ``t_start``.

        Starting later than zero only shifts the dressed-frame phases of the
        propagator, so cached gates are reused.
        """
        r = self.frame.rotation(t_start)
        state = np.asarray(state, dtype=complex)
        if mode == "ideal":
            U = r[:, None] * self.logical_unitary(schedule) * r.conj()[None, :]
            if state.ndim == 1:
                return U @ state
            return U @ state @ U.conj().T
        if mode != "lindblad":
            raise CalibrationError(f"unknown mode {mode!r}")
        rho = np.outer(state, state.conj()) if state.ndim == 1 else state
        rho = r.conj()[:, None] * rho * r[None, :]
        noise = self.noise if noise is None else noise
        dephasing = self.settings.dephasing
        S = self.frame.S
        out, _ = lindblad_propagate(self.model, schedule, noise, S @ rho @ S.conj().T,
                                    dt=self.settings.dt, dephasing=dephasing)
        rt = self.frame.rotation(t_start + schedule.total_time)
        out = rt[:, None] * (S.conj().T @ out @ S) * rt.conj()[None, :]
        z = _virtual_z_phases(self.model, schedule.virtual_z)
        return z[:, None] * out * z.conj()[None, :]

    def plateau_fraction(self, tau: float, sigma: float) -> float:
        """Envelope value at the pulse centre for unit amplitude."""
        p = FlatTopPulse(1.0, 0.0, tau, sigma)
        return float(pulse_envelope(p, np.array([tau / 2]))[0])

    def amplitude_for(self, site: str, plateau_ghz: float, tau: float, sigma: float) -> float:
        """Pulse amplitude that parks ``site`` at ``plateau_ghz`` mid-pulse."""
        k = COUPLERS.index(site)
        return (plateau_ghz - self.idle[k]) / self.plateau_fraction(tau, sigma)


def _noise_key(noise: NoiseSpec):
    return [noise.t1, noise.t2]


def _normalize(out):
    tr = np.real(np.einsum("...ii->...", out))
    return out / tr[..., None, None]


# leakage and phase measurements ------------------------------------------------------


def _as_simulator(sim):
    if isinstance(sim, GateSimulator):
        return sim
    if isinstance(sim, DeviceModel) or sim is None:
        return GateSimulator(sim)
    raise CalibrationError(f"expected a GateSimulator or DeviceModel, got {type(sim).__name__}")


def measure_leakage(sim, schedule: PulseSchedule, mode: str = "ideal", noise: NoiseSpec | None = None,
                    initial: str = "111") -> float:
    """Population outside the computational states after the gate, starting from ``initial``."""
    sim = _as_simulator(sim)
    i = sim.comp[int(initial, 2)]
    if mode == "ideal":
        col = sim.logical_unitary(schedule)[:, i]
        return float(max(0.0, 1.0 - np.sum(np.abs(col[sim.comp]) ** 2)))
    if mode == "lindblad":
        k = int(initial, 2)
        rho = sim.lindblad_channel(schedule, noise)[k, k]
        return float(max(0.0, np.trace(rho).real - np.trace(rho[np.ix_(sim.comp, sim.comp)]).real))
    raise CalibrationError(f"unknown mode {mode!r}")


def max_population_loss(U8: np.ndarray) -> float:
    """Largest ``1 - |<x|U|x>|^2`` over the eight basis inputs."""
    return float(np.max(1.0 - np.abs(np.diag(U8)) ** 2))


def measure_conditional_phases(sim, target, mode: str = "ideal", noise: NoiseSpec | None = None) -> PhaseSet:
    """Ramsey-probe conditional phases of a schedule or of a given matrix.

    ``target`` is a :class:`PulseSchedule` evaluated on ``sim``, or an 8×8
    (or model-basis) matrix injected as the evolution.
    """
    if isinstance(target, PulseSchedule):
        sim = _as_simulator(sim)
        ex = sim.executor(target, mode, normalize=False, noise=noise)
    else:
        M = np.asarray(target, dtype=complex)
        if M.shape != (8, 8):
            sim = _as_simulator(sim)
            M = M[np.ix_(sim.comp, sim.comp)]
        ex = lambda rho: M @ rho @ M.conj().T
    return phases_from_executor(ex)


# operating point ---------------------------------------------------------------------


@dataclass(frozen=True)
class OperatingPoint:
    """One evaluated first-segment pulse: amplitudes (GHz), timing (ns) and figures of merit."""

    amp_c1: float
    amp_c2: float
    tau: float
    sigma: float
    leakage: float
    phases: PhaseSet
    max_loss: float = float("nan")

    def schedule(self) -> PulseSchedule:
        return PulseSchedule.flat_top(self.amp_c1, self.amp_c2, self.tau, self.sigma)

    @property
    def phase_error(self) -> float:
        return abs(abs(self.phases.phi_ccz) - np.pi)

    def feasible(self, phase_tol: float = 0.05, leak_tol: float = 0.02, loss_tol: float | None = None) -> bool:
        ok = self.phase_error < phase_tol and self.leakage < leak_tol
        if loss_tol is not None:
            ok = ok and self.max_loss < loss_tol
        return bool(ok)

    def to_dict(self) -> dict:
        return {
            "amp_c1": self.amp_c1, "amp_c2": self.amp_c2, "tau": self.tau, "sigma": self.sigma,
            "leakage": self.leakage, "max_loss": self.max_loss, "phases": self.phases.as_dict(),
        }

    @classmethod
    def from_dict(cls, d) -> "OperatingPoint":
        ph = {k: d["phases"][k] for k in ("phi12", "phi23", "phi13", "phi123")}
        return cls(d["amp_c1"], d["amp_c2"], d["tau"], d["sigma"], d["leakage"], PhaseSet(**ph),
                   d.get("max_loss", float("nan")))


def evaluate_point(sim, amp_c1: float, amp_c2: float, tau: float = SEGMENT_TAU,
                   sigma: float = SEGMENT_SIGMA) -> OperatingPoint:
    sim = _as_simulator(sim)
    sch = PulseSchedule.flat_top(amp_c1, amp_c2, tau, sigma)
    M = sim.computational_block(sch)
    try:
        phases = measure_conditional_phases(sim, M)
    except SignalLossError:
        nan = float("nan")
        phases = PhaseSet(nan, nan, nan, nan)
    return OperatingPoint(float(amp_c1), float(amp_c2), tau, sigma, measure_leakage(sim, sch), phases,
                          max_population_loss(M))


@dataclass
class SweepResult:
    points: list
    selected: OperatingPoint
    candidates: list = field(default_factory=list)


def select_operating_point(points, phase_tol: float = 0.05, leak_tol: float = 0.02,
                           loss_tol: float | None = 0.05) -> SweepResult:
    """Keep points whose CCZ phase is within ``phase_tol`` of pi, then minimize (leakage, |phi13|)."""
    feasible = [p for p in points if p.feasible(phase_tol, leak_tol, loss_tol)]
    if not feasible:
        finite = [p for p in points if np.isfinite(p.phase_error)]
        miss = min(finite, key=lambda p: p.phase_error + p.leakage + (p.max_loss if loss_tol else 0.0),
                   default=None)
        detail = "no point carried a readable phase" if miss is None else (
            f"nearest miss at amplitudes ({miss.amp_c1:.4f}, {miss.amp_c2:.4f}): "
            f"||phi_ccz|-pi| = {miss.phase_error:.3f}, leakage = {miss.leakage:.4f}, "
            f"max population loss = {miss.max_loss:.4f}")
        raise NoOperatingPointError(f"no feasible operating point; {detail}", miss)
    ranked = sorted(feasible, key=lambda p: (p.leakage, abs(p.phases.phi13)))
    return SweepResult(list(points), ranked[0], ranked)


def sweep_operating_point(sim, amps_c1, amps_c2, tau: float = SEGMENT_TAU, sigma: float = SEGMENT_SIGMA,
                          phase_tol: float = 0.05, leak_tol: float = 0.02, loss_tol: float | None = 0.05,
                          progress=None) -> SweepResult:
    """Evaluate every amplitude pair of the grid and select the operating point.

    Besides the leakage out of ``|111>``, ``loss_tol`` bounds the population
    any computational input fails to return to itself; pass ``None`` to drop
    that filter.
    """
    sim = _as_simulator(sim)
    amps_c1 = np.atleast_1d(np.asarray(amps_c1, dtype=float))
    amps_c2 = np.atleast_1d(np.asarray(amps_c2, dtype=float))
    if amps_c1.size == 0 or amps_c2.size == 0:
        raise CalibrationError("empty amplitude grid")
    points = []
    for a1 in amps_c1:
        for a2 in amps_c2:
            points.append(evaluate_point(sim, a1, a2, tau, sigma))
            if progress is not None:
                progress(points[-1])
    return select_operating_point(points, phase_tol, leak_tol, loss_tol)


def refine_operating_point(sim, point: OperatingPoint, span: float = 0.01, n: int = 5, **kw) -> SweepResult:
    """Re-sweep an ``n``×``n`` grid of half-width ``span`` centred on ``point``."""
    g1 = point.amp_c1 + np.linspace(-span, span, n)
    g2 = point.amp_c2 + np.linspace(-span, span, n)
    return sweep_operating_point(sim, g1, g2, point.tau, point.sigma, **kw)


# compensation pulses ------------------------------------------------------------------


def cphase_schedule(pair, amplitude: float, tau: float | None = None, sigma: float = CPHASE_SIGMA) -> PulseSchedule:
    pair = tuple(pair)
    tau = CPHASE_TAU[pair] if tau is None else tau
    site = CPHASE_COUPLER[pair]
    window = tau + 8 * sigma
    if amplitude == 0.0:
        return PulseSchedule.idle(window)
    return PulseSchedule({site: (FlatTopPulse(float(amplitude), 4 * sigma, tau, sigma),)}, total_time=window)


def _pair_phase(phases: PhaseSet, pair) -> float:
    return phases.phi12 if tuple(pair) == (1, 2) else phases.phi23


def _pair_leakage(sim, schedule, pair) -> float:
    return measure_leakage(sim, schedule, initial="110" if tuple(pair) == (1, 2) else "011")


def calibrate_cphase(sim, pair, target_phase: float, tau: float | None = None, sigma: float = CPHASE_SIGMA,
                     tol: float = 0.01, leak_tol: float = 0.01, amp_min: float | None = None,
                     n_scan: int = 48) -> PulseSchedule:
    """Find the coupler amplitude whose pair conditional phase equals ``target_phase``.

    The amplitude is scanned from zero towards the qubits (at most down to
    ``amp_min``, by default a plateau 100 MHz above the upper qubit of the pair);
    the first sign change of the wrapped phase error with acceptable leakage is
    then refined by Brent's method.
    """
    sim = _as_simulator(sim)
    pair = tuple(pair)
    if pair not in CPHASE_TAU:
        raise CalibrationError(f"pair must be (1, 2) or (2, 3), got {pair}")
    if not -np.pi < target_phase <= np.pi:
        raise CalibrationError("target_phase must lie in (-pi, pi]")
    tau = CPHASE_TAU[pair] if tau is None else tau
    site = CPHASE_COUPLER[pair]
    if amp_min is None:
        top = max(sim.device.frequency(f"Q{pair[0]}"), sim.device.frequency(f"Q{pair[1]}"))
        amp_min = sim.amplitude_for(site, top + PLATEAU_MARGIN_GHZ, tau, sigma)

    def err(a):
        sch = cphase_schedule(pair, a, tau, sigma)
        return float(wrap_phase(_pair_phase(measure_conditional_phases(sim, sch), pair) - target_phase))

    e0 = err(0.0)
    if abs(e0) <= tol:
        return cphase_schedule(pair, 0.0, tau, sigma)
    amps = np.linspace(0.0, amp_min, n_scan + 1)
    prev_a, prev_e = 0.0, e0
    for a in amps[1:]:
        e = err(a)
        if np.sign(e) != np.sign(prev_e) and abs(e - prev_e) < np.pi:
            root = brentq(err, prev_a, a, xtol=1e-7)
            sch = cphase_schedule(pair, root, tau, sigma)
            if abs(err(root)) <= tol and _pair_leakage(sim, sch, pair) < leak_tol:
                return sch
        prev_a, prev_e = a, e
    raise UnreachableTargetError(
        f"pair {pair}: no amplitude in [{amp_min:.4f}, 0] reaches phase {target_phase:.4f} rad "
        f"within {tol} with leakage below {leak_tol}")


# composite gate ----------------------------------------------------------------------


def concatenate(schedules, virtual_z=None) -> PulseSchedule:
    """Play schedules back to back in one window."""
    channels: dict = {}
    offset = 0.0
    for sch in schedules:
        for site, pulses in sch.channels.items():
            shifted = tuple(FlatTopPulse(p.amplitude, p.t0 + offset, p.tau, p.sigma) for p in pulses)
            channels[site] = channels.get(site, ()) + shifted
        offset += sch.total_time
    return PulseSchedule(channels, offset, dict(virtual_z or {}))


@dataclass
class CczGate:
    """Calibrated direct CCZ: first segment, two compensation pulses and virtual Z.

    ``total_ns`` is the nominal gate length (sum of flat-top durations);
    ``duration_ns`` is the simulated window including the pulse ramps.
    """

    point: OperatingPoint
    cphase12: PulseSchedule
    cphase23: PulseSchedule
    virtual_z: tuple = (0.0, 0.0, 0.0)
    tau12: float = CPHASE_TAU[(1, 2)]
    tau23: float = CPHASE_TAU[(2, 3)]
    idle: tuple = (float("nan"), float("nan"))
    fidelity: float = float("nan")

    @property
    def total_ns(self) -> float:
        return self.point.tau + self.tau12 + self.tau23

    def schedule(self, with_virtual_z: bool = True) -> PulseSchedule:
        vz = dict(zip(QUBITS, self.virtual_z)) if with_virtual_z else {}
        return concatenate([self.point.schedule(), self.cphase12, self.cphase23], vz)

    @property
    def duration_ns(self) -> float:
        return self.schedule().total_time

    def to_dict(self) -> dict:
        return {
            "point": self.point.to_dict(),
            "cphase12": self.cphase12.to_dict(),
            "cphase23": self.cphase23.to_dict(),
            "virtual_z": list(self.virtual_z),
            "tau12": self.tau12,
            "tau23": self.tau23,
            "idle_ghz": list(self.idle),
            "total_ns": self.total_ns,
            "duration_ns": self.duration_ns,
            "fidelity": self.fidelity,
        }

    @classmethod
    def from_dict(cls, d) -> "CczGate":
        return cls(OperatingPoint.from_dict(d["point"]), PulseSchedule.from_dict(d["cphase12"]),
                   PulseSchedule.from_dict(d["cphase23"]), tuple(d["virtual_z"]), d["tau12"], d["tau23"],
                   tuple(d.get("idle_ghz", (float("nan"),) * 2)), d.get("fidelity", float("nan")))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path) -> "CczGate":
        return cls.from_dict(json.loads(Path(path).read_text()))


def ramsey_seed(executor) -> np.ndarray:
    """Virtual-Z angles undoing each qubit's phase with the other two in ``|0>``."""
    seed = []
    for q in range(3):
        pat = [0, 0, 0]
        psi = _probe_state(pat, q)
        out = executor(np.outer(psi, psi.conj())[None])[0]
        seed.append(-ramsey_phase(out, q))
    return np.array(seed)


def _vz_executor(base, theta):
    z = np.exp(1j * np.array([sum(t * b for t, b in zip(theta, bits))
                              for bits in itertools.product((0, 1), repeat=3)]))
    return lambda rho: z[:, None] * base(rho) * z.conj()[None, :]


def optimize_virtual_z(sim, gate, objective: str = "process_fidelity", mode: str = "ideal",
                       noise: NoiseSpec | None = None, ideal: np.ndarray = CCZ, maxiter: int = 200,
                       xatol: float = 1e-4):
    """Nelder-Mead search of the trailing virtual-Z angles.

    ``gate`` is a :class:`CczGate`, a :class:`PulseSchedule`, or an 8×8
    matrix. Returns ``(angles, value)`` where ``value`` is the process
    fidelity or the summed squared single-qubit phase residual.
    """
    if isinstance(gate, CczGate):
        gate = gate.schedule(with_virtual_z=False)
    if isinstance(gate, PulseSchedule):
        sim = _as_simulator(sim)
        base = sim.executor(gate.with_virtual_z({}), mode, normalize=True, noise=noise)
    else:
        M = np.asarray(gate, dtype=complex)
        base = lambda rho: _normalize(M @ rho @ M.conj().T)
    chi_ideal = ideal_chi(ideal)
    seed = ramsey_seed(base)

    if objective == "process_fidelity":
        def cost(theta):
            return -process_fidelity(qpt(_vz_executor(base, theta)), chi_ideal)
    elif objective == "phase_residual":
        def cost(theta):
            return float(np.sum(wrap_phase(-ramsey_seed(_vz_executor(base, theta))) ** 2))
    else:
        raise CalibrationError(f"unknown objective {objective!r}")

    simplex = np.array([seed, seed + [0.1, 0, 0], seed + [0, 0.1, 0], seed + [0, 0, 0.1]])
    res = minimize(cost, seed, method="Nelder-Mead",
                   options={"initial_simplex": simplex, "xatol": xatol, "fatol": 1e-10, "maxiter": maxiter})
    theta = wrap_phase(res.x)
    value = cost(theta)
    return theta, (-value if objective == "process_fidelity" else value)


def composite_phases(sim, schedules) -> PhaseSet:
    return measure_conditional_phases(sim, concatenate(schedules))


# flat-top lengths tried, in order, when a compensation phase is out of reach at the default length
COMPENSATION_TAUS = {(1, 2): (62.0, 100.0, 150.0, 230.0), (2, 3): (44.0, 62.0, 100.0, 150.0, 230.0)}


def _compensate(sim, pair, target: float, shortest: float | None = None):
    """CPhase schedule for ``target`` at the shortest admissible length of the ladder."""
    taus = [t for t in COMPENSATION_TAUS[pair] if shortest is None or t >= shortest]
    for tau in taus:
        try:
            return calibrate_cphase(sim, pair, float(wrap_phase(target)), tau=tau), tau
        except UnreachableTargetError:
            if tau == taus[-1]:
                raise
    raise CalibrationError(f"no compensation length available for pair {pair}")


def assemble_ccz(sim=None, amps_c1=None, amps_c2=None, point: OperatingPoint | None = None,
                 objective: str = "process_fidelity", passes: int = 2, progress=None) -> CczGate:
    """Run the whole calibration: operating point, compensation pulses, virtual Z.

    Pass ``point`` to skip the sweep; otherwise the grid ``amps_c1 × amps_c2``
    (default: :data:`DEFAULT_GRID`) is searched. A compensation phase that is
    out of reach at the default CPhase length is retried along
    :data:`COMPENSATION_TAUS`, and the gate records the lengths used.
    """
    sim = _as_simulator(sim)
    if point is None:
        g1, g2 = DEFAULT_GRID if amps_c1 is None else (amps_c1, amps_c2)
        point = sweep_operating_point(sim, g1, g2, progress=progress).selected
    seg = point.schedule()
    base = measure_conditional_phases(sim, seg)
    cp12, tau12 = _compensate(sim, (1, 2), -base.phi12)
    cp23, tau23 = _compensate(sim, (2, 3), -composite_phases(sim, [seg, cp12]).phi23)
    for _ in range(passes - 1):
        ph = composite_phases(sim, [seg, cp12, cp23])
        if abs(ph.phi12) < 0.005 and abs(ph.phi23) < 0.005:
            break
        p12 = _pair_phase(measure_conditional_phases(sim, cp12), (1, 2))
        cp12, tau12 = _compensate(sim, (1, 2), p12 - ph.phi12, tau12)
        p23 = _pair_phase(measure_conditional_phases(sim, cp23), (2, 3))
        ph = composite_phases(sim, [seg, cp12, cp23])
        cp23, tau23 = _compensate(sim, (2, 3), p23 - ph.phi23, tau23)
    gate = CczGate(point, cp12, cp23, tau12=tau12, tau23=tau23, idle=sim.idle)
    theta, value = optimize_virtual_z(sim, gate, objective)
    gate.virtual_z = tuple(float(t) for t in theta)
    if objective == "process_fidelity":
        gate.fidelity = float(value)
    return gate


DEFAULT_GRID = (np.linspace(-1.95, -1.85, 21), np.linspace(-1.15, -1.05, 21))
