"""Coupler pulses and time evolution of the five-transmon device.

The only time dependence is the coupler frequencies, so ``H(t) = D(t) + V``
with ``D`` diagonal. Evolution defaults to exact exponentials of the
fourth-order Magnus generator over short steps: because ``D`` is diagonal the
commutator term is an element-wise rescaling of ``V`` and each step stays exactly
unitary. A classical RK4 integrator is kept for cross-checks.

In the rotating-wave frame the total excitation number is conserved, so the
Hilbert space can be truncated to states with at most ``max_excitations``
quanta without approximation for inputs inside that sector.
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import erf

from .device import (
    COUPLERS,
    QUBITS,
    SITES,
    TWO_PI,
    DeviceError,
    DeviceModel,
    NoiseSpec,
    bare_diagonal,
    build_interaction,
    fock_states,
    mhz_to_angular,
)

SQRT3 = np.sqrt(3.0)


class EvolutionError(ValueError):
    """Invalid evolution request (bad step, bad initial state, ...)."""


# pulses ---------------------------------------------------------------------


@dataclass(frozen=True)
class FlatTopPulse:
    """Erf-edged plateau.

    ``amplitude`` is the plateau detuning of the coupler in GHz (negative
    tunes down) or, under a cosine flux map, the flux in units of Φ0.
    """

    amplitude: float
    t0: float
    tau: float
    sigma: float = 50.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise EvolutionError(f"sigma must be positive, got {self.sigma}")
        if not self.tau > 0:
            raise EvolutionError(f"tau must be positive, got {self.tau}")

    @property
    def end(self) -> float:
        return self.t0 + self.tau


def pulse_envelope(p: FlatTopPulse, t):
    """``(A/2) [erf((t0 + tau - t) / (sqrt2 sigma)) - erf((t0 - t) / (sqrt2 sigma))]``."""
    t = np.asarray(t, dtype=float)
    s = np.sqrt(2.0) * p.sigma
    return 0.5 * p.amplitude * (erf((p.t0 + p.tau - t) / s) - erf((p.t0 - t) / s))


@dataclass(frozen=True)
class FluxMap:
    """How channel envelopes become coupler frequencies.

    ``direct_detuning``: the envelope is added to the idle frequency in GHz.
    ``cosine_flux``: ``w = w_max sqrt|cos(pi (offset + envelope))|``.
    """

    kind: str = "direct_detuning"
    omega_max: Mapping[str, float] = field(default_factory=dict)
    flux_offset: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("direct_detuning", "cosine_flux"):
            raise EvolutionError(f"unknown flux map {self.kind!r}")


@dataclass(frozen=True)
class PulseSchedule:
    """Coupler pulses, trailing virtual-Z phases and the simulated window.

    Parameters
    ----------
    channels : mapping
        ``{"C1": (pulse, ...), "C2": (...)}``.
    virtual_z : mapping
        Qubit label to frame-rotation angle (rad), applied after the pulses.
    total_time : float
        Simulated window in ns; must cover every pulse plus a 4-sigma tail.
    """

    channels: Mapping[str, tuple[FlatTopPulse, ...]]
    total_time: float
    virtual_z: Mapping[str, float] = field(default_factory=dict)
    flux_map: FluxMap = field(default_factory=FluxMap)

    def __post_init__(self):
        for site, pulses in self.channels.items():
            if site not in COUPLERS:
                raise EvolutionError(f"pulses can only drive couplers, got {site!r}")
            ordered = sorted(pulses, key=lambda p: p.t0)
            for a, b in zip(ordered, ordered[1:]):
                if b.t0 - a.end < 4 * max(a.sigma, b.sigma):
                    raise EvolutionError(f"pulses on {site} overlap within their 4-sigma tails")
            for p in pulses:
                if self.total_time < p.end + 4 * p.sigma - 1e-9:
                    raise EvolutionError(
                        f"total_time {self.total_time} ns is shorter than pulse end + 4 sigma "
                        f"({p.end + 4 * p.sigma} ns)"
                    )
        for q in self.virtual_z:
            if q not in QUBITS:
                raise EvolutionError(f"virtual Z only applies to qubits, got {q!r}")

    @classmethod
    def flat_top(cls, amp_c1: float, amp_c2: float, tau: float, sigma: float = 50.0, pad: float | None = None):
        """Simultaneous pulses on both couplers, starting ``pad`` (default 4 sigma) into the window."""
        pad = 4 * sigma if pad is None else pad
        channels = {}
        for site, amp in (("C1", amp_c1), ("C2", amp_c2)):
            if amp != 0.0:
                channels[site] = (FlatTopPulse(float(amp), pad, tau, sigma),)
        return cls(channels, total_time=pad + tau + 4 * sigma)

    @classmethod
    def idle(cls, total_time: float):
        return cls({}, total_time=float(total_time))

    def envelope(self, site: str, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for p in self.channels.get(site, ()):
            out = out + pulse_envelope(p, t)
        return out

    def with_virtual_z(self, phases: Mapping[str, float]) -> "PulseSchedule":
        return PulseSchedule(dict(self.channels), self.total_time, dict(phases), self.flux_map)

    def to_dict(self) -> dict:
        return {
            "total_time_ns": self.total_time,
            "channels": {
                site: [
                    {"amplitude": p.amplitude, "t0_ns": p.t0, "tau_ns": p.tau, "sigma_ns": p.sigma}
                    for p in pulses
                ]
                for site, pulses in self.channels.items()
            },
            "virtual_z": dict(self.virtual_z),
            "flux_map": {
                "kind": self.flux_map.kind,
                "omega_max_ghz": dict(self.flux_map.omega_max),
                "flux_offset": dict(self.flux_map.flux_offset),
            },
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "PulseSchedule":
        try:
            channels = {
                site: tuple(
                    FlatTopPulse(float(p["amplitude"]), float(p["t0_ns"]), float(p["tau_ns"]), float(p.get("sigma_ns", 50.0)))
                    for p in pulses
                )
                for site, pulses in d.get("channels", {}).items()
            }
            fm = d.get("flux_map", {})
            flux_map = FluxMap(
                fm.get("kind", "direct_detuning"),
                {k: float(v) for k, v in fm.get("omega_max_ghz", {}).items()},
                {k: float(v) for k, v in fm.get("flux_offset", {}).items()},
            )
            return cls(channels, float(d["total_time_ns"]), {k: float(v) for k, v in d.get("virtual_z", {}).items()}, flux_map)
        except KeyError as exc:
            raise EvolutionError(f"schedule lacks field {exc}") from None


def coupler_frequency(schedule: PulseSchedule, site: str, t, device: DeviceModel):
    """Instantaneous coupler frequency in GHz."""
    if site not in COUPLERS:
        raise DeviceError(f"{site!r} is not a coupler")
    env = schedule.envelope(site, t)
    fm = schedule.flux_map
    if fm.kind == "direct_detuning":
        return device.frequency(site) + env
    w_max = fm.omega_max.get(site, device.frequency(site))
    return w_max * np.sqrt(np.abs(np.cos(np.pi * (fm.flux_offset.get(site, 0.0) + env))))


def coupler_detuning(schedule: PulseSchedule, site: str, t, device: DeviceModel):
    """Shift of the coupler frequency away from the device value, GHz."""
    return coupler_frequency(schedule, site, t, device) - device.frequency(site)


# model on a (possibly truncated) basis ------------------------------------------


class SimulationModel:
    """Hamiltonian pieces of a device restricted to a basis of Fock states.

    Parameters
    ----------
    device : DeviceModel
    frame : {"full", "rwa"}
        Coupling form. Truncation by excitation number requires ``"rwa"``.
    max_excitations : int, optional
        Keep only Fock states with at most this many quanta in total.
    """

    def __init__(self, device: DeviceModel, frame: str = "full", max_excitations: int | None = None):
        if max_excitations is not None and frame != "rwa":
            raise EvolutionError("excitation truncation is exact only with frame='rwa'")
        self.device = device
        self.frame = frame
        self.max_excitations = max_excitations
        occ_all = fock_states(device)
        n_all = occ_all.sum(axis=1)
        if max_excitations is None:
            keep = np.arange(len(occ_all))
        else:
            keep = np.where(n_all <= max_excitations)[0]
        self.full_dim = device.hilbert_dim
        self.indices = keep
        self.occupations = occ_all[keep]
        self.dim = len(keep)
        self.static_diag = bare_diagonal(device)[keep]
        self.number = {s: self.occupations[:, k].astype(float) for k, s in enumerate(SITES)}
        V = build_interaction(device, frame)[np.ix_(keep, keep)]
        self.V = np.ascontiguousarray(V.real) if np.allclose(V.imag, 0.0) else V
        if frame == "rwa":
            n = self.occupations.sum(axis=1)
            self.blocks = [np.where(n == k)[0] for k in np.unique(n)]
        else:
            self.blocks = [np.arange(self.dim)]
        self._Vb = [np.ascontiguousarray(self.V[np.ix_(b, b)]) for b in self.blocks]
        self._pos = {tuple(o): i for i, o in enumerate(self.occupations)}

    def index(self, occupations) -> int:
        try:
            return self._pos[tuple(int(n) for n in occupations)]
        except KeyError:
            raise EvolutionError(f"state {tuple(occupations)} is not in the model basis") from None

    def qubit_index(self, q1: int, q2: int, q3: int) -> int:
        return self.index((q1, 0, q2, 0, q3))

    @property
    def computational(self) -> np.ndarray:
        return np.array([self.qubit_index(a, b, c) for a, b, c in itertools.product((0, 1), repeat=3)])

    def label(self, i: int) -> str:
        o = self.occupations[i]
        return "".join(str(x) for x in o)

    def diag_at(self, d1, d2) -> np.ndarray:
        """Diagonal of ``H`` for coupler detunings ``d1, d2`` (GHz); broadcasts over a leading axis."""
        d1 = np.asarray(d1, dtype=float)[..., None]
        d2 = np.asarray(d2, dtype=float)[..., None]
        return self.static_diag + TWO_PI * (d1 * self.number["C1"] + d2 * self.number["C2"])

    def hamiltonian(self, d1: float = 0.0, d2: float = 0.0) -> np.ndarray:
        return np.diag(self.diag_at(d1, d2)) + self.V

    def embed(self, psi_full: np.ndarray) -> np.ndarray:
        """Restrict a full-space vector (or matrix columns) to the model basis."""
        return np.asarray(psi_full)[self.indices]

    def lift(self, psi: np.ndarray) -> np.ndarray:
        out = np.zeros((self.full_dim,) + psi.shape[1:], dtype=complex)
        out[self.indices] = psi
        return out

    def lowering(self, site: str) -> np.ndarray:
        """Lowering operator of ``site`` restricted to the model basis."""
        k = SITES.index(site)
        L = self.device.levels[k]
        b = np.zeros((self.dim, self.dim))
        for j, occ in enumerate(self.occupations):
            n = occ[k]
            if n == 0:
                continue
            lower = occ.copy()
            lower[k] -= 1
            i = self._pos.get(tuple(lower))
            if i is not None:
                b[i, j] = np.sqrt(n)
        assert L >= 2
        return b


@functools.lru_cache(maxsize=16)
def build_model(device: DeviceModel, frame: str = "full", max_excitations: int | None = None) -> SimulationModel:
    return SimulationModel(device, frame, max_excitations)


def _as_model(device_or_model, frame="full", max_excitations=None) -> SimulationModel:
    if isinstance(device_or_model, SimulationModel):
        return device_or_model
    return build_model(device_or_model, frame, max_excitations)


# dressed idle frame -------------------------------------------------------------


class DressedFrame:
    """Eigenbasis of the idle Hamiltonian, labelled by the closest bare state.

    Gate-level quantities are expressed in this basis and in a frame rotating
    at the dressed single-qubit frequencies, so that idling maps each
    computational state to itself up to the residual idle ZZ phase.
    """

    def __init__(self, model: SimulationModel):
        self.model = model
        D = model.dim
        S = np.zeros((D, D), dtype=complex)
        E = np.zeros(D)
        overlap = np.zeros(D)
        diag = model.diag_at(0.0, 0.0)
        for b, Vb in zip(model.blocks, model._Vb):
            w, v = np.linalg.eigh(Vb + np.diag(diag[b]))
            rows, cols = linear_sum_assignment(-np.abs(v) ** 2)
            for bare, dressed in zip(rows, cols):
                vec = v[:, dressed]
                phase = np.exp(-1j * np.angle(vec[bare]))
                S[b, b[bare]] = vec * phase
                E[b[bare]] = w[dressed]
                overlap[b[bare]] = abs(vec[bare]) ** 2
        self.S = S
        self.energies = E
        self.overlap = overlap
        comp = model.computational
        e0 = E[comp[0]]
        fq = np.array([E[model.qubit_index(1, 0, 0)], E[model.qubit_index(0, 1, 0)], E[model.qubit_index(0, 0, 1)]]) - e0
        Ef = E.copy()
        for (a, b_, c), i in zip(itertools.product((0, 1), repeat=3), comp):
            Ef[i] = e0 + a * fq[0] + b_ * fq[1] + c * fq[2]
        self.frame_energies = Ef
        self.qubit_frequencies = fq

    def rotation(self, T: float) -> np.ndarray:
        return np.exp(1j * self.frame_energies * T)

    def to_logical(self, U_lab: np.ndarray, T: float) -> np.ndarray:
        """``R(T) S† U S`` with ``R(T) = exp(i E_frame T)``."""
        return self.rotation(T)[:, None] * (self.S.conj().T @ U_lab @ self.S)

    def state_to_lab(self, psi_logical: np.ndarray) -> np.ndarray:
        return self.S @ psi_logical

    def state_to_logical(self, psi_lab: np.ndarray, T: float) -> np.ndarray:
        r = self.rotation(T)
        out = self.S.conj().T @ psi_lab
        return r.reshape((-1,) + (1,) * (out.ndim - 1)) * out

    def rho_to_lab(self, rho_logical: np.ndarray) -> np.ndarray:
        return self.S @ rho_logical @ self.S.conj().T

    def rho_to_logical(self, rho_lab: np.ndarray, T: float) -> np.ndarray:
        r = self.rotation(T)
        out = self.S.conj().T @ rho_lab @ self.S
        return r[:, None] * out * r.conj()[None, :]


@functools.lru_cache(maxsize=16)
def dressed_frame(model: SimulationModel) -> DressedFrame:
    return DressedFrame(model)


# propagation ------------------------------------------------------------------


@dataclass
class EvolutionResult:
    """Outcome of one evolution.

    ``population_trace`` holds ``(times, labels, populations)`` in the bare
    Fock basis when requested.
    """

    final_state: np.ndarray | None
    propagator: np.ndarray | None
    dt_used: float
    population_trace: tuple[np.ndarray, list[str], np.ndarray] | None = None
    norm_drift: float = 0.0
    trace_drift: float = 0.0


def _step_count(T: float, dt: float) -> tuple[int, float]:
    if not dt > 0:
        raise EvolutionError(f"dt must be positive, got {dt}")
    if T < 0:
        raise EvolutionError(f"evolution time must be non-negative, got {T}")
    n = max(1, int(np.ceil(T / dt - 1e-9))) if T > 0 else 0
    return n, (T / n if n else 0.0)


def _coupler_detunings(model: SimulationModel, schedule: PulseSchedule, t) -> tuple[np.ndarray, np.ndarray]:
    dev = model.device
    return coupler_detuning(schedule, "C1", t, dev), coupler_detuning(schedule, "C2", t, dev)


class _MagnusStepper:
    """Exact exponential of the fourth-order Magnus generator, block by block."""

    def __init__(self, model: SimulationModel, schedule: PulseSchedule, t_start: float, n: int, h: float):
        self.model = model
        self.h = h
        k = np.arange(n)
        ta = t_start + (k + 0.5 - SQRT3 / 6) * h
        tb = t_start + (k + 0.5 + SQRT3 / 6) * h
        self.da = model.diag_at(*_coupler_detunings(model, schedule, ta))
        self.db = model.diag_at(*_coupler_detunings(model, schedule, tb))

    def blocks(self, k: int):
        """Per-block step unitaries for step ``k``."""
        mean = 0.5 * (self.da[k] + self.db[k])
        delta = self.db[k] - self.da[k]
        c = SQRT3 * self.h / 12.0
        out = []
        for b, Vb in zip(self.model.blocks, self.model._Vb):
            if len(b) == 1:
                out.append(np.exp(-1j * self.h * mean[b]).reshape(1, 1))
                continue
            dd = delta[b]
            H = Vb - 1j * c * (dd[:, None] - dd[None, :]) * Vb
            H[np.diag_indices_from(H)] += mean[b]
            w, v = np.linalg.eigh(H)
            out.append((v * np.exp(-1j * self.h * w)) @ v.conj().T)
        return out


def _apply_blocks(model: SimulationModel, Ub, Y: np.ndarray) -> np.ndarray:
    out = np.empty_like(Y)
    for b, U in zip(model.blocks, Ub):
        out[b] = U @ Y[b]
    return out


def _rk4(model: SimulationModel, schedule: PulseSchedule, Y: np.ndarray, t_start: float, n: int, h: float, callback=None):
    V = model.V

    def rhs(t, y):
        d = model.diag_at(*_coupler_detunings(model, schedule, t))
        return -1j * (d.reshape((-1,) + (1,) * (y.ndim - 1)) * y + V @ y)

    for k in range(n):
        t = t_start + k * h
        k1 = rhs(t, Y)
        k2 = rhs(t + h / 2, Y + 0.5 * h * k1)
        k3 = rhs(t + h / 2, Y + 0.5 * h * k2)
        k4 = rhs(t + h, Y + h * k3)
        Y = Y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if callback is not None:
            callback(k, Y)
    return Y


def _virtual_z_phases(model: SimulationModel, virtual_z: Mapping[str, float]) -> np.ndarray:
    ph = np.zeros(model.dim)
    for q, theta in virtual_z.items():
        ph = ph + theta * model.number[q]
    return np.exp(1j * ph)


def propagate(
    model: SimulationModel,
    schedule: PulseSchedule,
    Y0: np.ndarray,
    dt: float = 0.1,
    t_span: tuple[float, float] | None = None,
    method: str = "magnus4",
    callback: Callable[[int, float, np.ndarray], None] | None = None,
) -> tuple[np.ndarray, float]:
    """Evolve the columns of ``Y0`` (model basis, bare lab frame).

    Returns the evolved array and the step actually used. Virtual-Z phases of
    the schedule are *not* applied here; they act in the dressed frame.
    """
    t0, t1 = (0.0, schedule.total_time) if t_span is None else t_span
    n, h = _step_count(t1 - t0, dt)
    Y = np.array(Y0, dtype=complex, copy=True)
    if method == "magnus4":
        stepper = _MagnusStepper(model, schedule, t0, n, h)
        for k in range(n):
            Y = _apply_blocks(model, stepper.blocks(k), Y)
            if callback is not None:
                callback(k, t0 + (k + 1) * h, Y)
    elif method == "rk4":
        cb = None if callback is None else (lambda k, y: callback(k, t0 + (k + 1) * h, y))
        Y = _rk4(model, schedule, Y, t0, n, h, cb)
    else:
        raise EvolutionError(f"unknown integration method {method!r}")
    return Y, h


def block_propagator(model: SimulationModel, schedule: PulseSchedule, dt: float = 0.1, t_span=None) -> np.ndarray:
    """Lab-frame propagator on the model basis, accumulated block by block."""
    t0, t1 = (0.0, schedule.total_time) if t_span is None else t_span
    n, h = _step_count(t1 - t0, dt)
    stepper = _MagnusStepper(model, schedule, t0, n, h)
    Ub = [np.eye(len(b), dtype=complex) for b in model.blocks]
    for k in range(n):
        step = stepper.blocks(k)
        Ub = [s @ u for s, u in zip(step, Ub)]
    U = np.zeros((model.dim, model.dim), dtype=complex)
    for b, u in zip(model.blocks, Ub):
        U[np.ix_(b, b)] = u
    return U


def evolve_schrodinger(
    device,
    schedule: PulseSchedule,
    t_span: tuple[float, float] | None = None,
    dt: float = 0.1,
    psi0: np.ndarray | None = None,
    want: str = "state",
    frame: str = "full",
    max_excitations: int | None = None,
    method: str = "magnus4",
    trace_labels: Sequence[tuple[int, ...]] | None = None,
    trace_every: float = 0.5,
) -> EvolutionResult:
    """Integrate ``i dpsi/dt = H(t) psi`` in the bare lab frame.

    Parameters
    ----------
    device : DeviceModel or SimulationModel
    psi0 : array, optional
        Initial state, either over the full Fock space or over the model basis.
        Required when ``want="state"``.
    want : {"state", "propagator"}
    trace_labels : sequence of occupation tuples, optional
        Record bare populations of these states every ``trace_every`` ns.
    """
    model = _as_model(device, frame, max_excitations)
    if want not in ("state", "propagator"):
        raise EvolutionError(f"want must be 'state' or 'propagator', got {want!r}")
    if want == "state":
        if psi0 is None:
            raise EvolutionError("psi0 is required for state evolution")
        psi0 = np.asarray(psi0, dtype=complex)
        full_input = psi0.shape[0] == model.full_dim and model.dim != model.full_dim
        y0 = model.embed(psi0) if full_input else psi0
        if y0.shape[0] != model.dim:
            raise EvolutionError(f"psi0 has dimension {psi0.shape[0]}, expected {model.dim} or {model.full_dim}")
        norm = np.linalg.norm(y0)
        if abs(norm - 1.0) > 1e-9:
            raise EvolutionError(f"psi0 is not normalized (norm {norm:.12g})")
    else:
        full_input = False
        y0 = np.eye(model.dim, dtype=complex)

    trace = None
    callback = None
    if trace_labels is not None:
        idx = [model.index(l) for l in trace_labels]
        times, pops = [0.0], [np.abs(y0[idx]) ** 2 if y0.ndim == 1 else None]
        n, h = _step_count((t_span[1] - t_span[0]) if t_span else schedule.total_time, dt)
        every = max(1, int(round(trace_every / h))) if h else 1

        def callback(k, t, y):
            if (k + 1) % every == 0 or k == n - 1:
                times.append(t)
                pops.append(np.abs(y[idx]) ** 2 if y.ndim == 1 else np.abs(y[idx, :]) ** 2)

    y, h = propagate(model, schedule, y0, dt=dt, t_span=t_span, method=method, callback=callback)
    if trace_labels is not None:
        labels = ["".join(str(x) for x in l) for l in trace_labels]
        trace = (np.array(times), labels, np.array([p for p in pops if p is not None]))
    if want == "state":
        drift = abs(np.linalg.norm(y) - 1.0)
        out = model.lift(y) if full_input else y
        return EvolutionResult(out, None, h, trace, norm_drift=drift)
    drift = np.max(np.abs(y.conj().T @ y - np.eye(model.dim)))
    return EvolutionResult(None, y, h, trace, norm_drift=drift)


# Lindblad ---------------------------------------------------------------------


class Dissipator:
    """Relaxation and dephasing of every site, acting on stacks of density matrices.

    ``dephasing="printed"`` uses ``(1 - n) / sqrt(2 T2)`` for each site.
    ``dephasing="standard"`` uses ``sqrt(2 / T_phi) n`` with
    ``1/T_phi = 1/T2 - 1/(2 T1)``, which dephases a qubit at ``1/T_phi``.
    Times are taken in µs and converted to ns.
    """

    def __init__(self, model: SimulationModel, noise: NoiseSpec, dephasing: str = "printed"):
        if dephasing not in ("printed", "standard"):
            raise EvolutionError(f"unknown dephasing variant {dephasing!r}")
        self.decay = []
        factor = np.zeros((model.dim, model.dim))
        for site in SITES:
            n = model.number[site]
            t1 = noise.t1.get(site)
            t2 = noise.t2.get(site)
            if t1 is not None:
                gamma = 1.0 / (1000.0 * t1)
                b = model.lowering(site)
                # each row of b holds at most one entry, so b rho b^T is a gather
                rows = np.abs(b).argmax(axis=1)
                coef = np.sqrt(gamma) * b[np.arange(model.dim), rows]
                self.decay.append((rows, coef[:, None] * coef[None, :]))
                factor -= 0.5 * gamma * (n[:, None] + n[None, :])
            if t2 is not None:
                if dephasing == "printed":
                    c2 = 1.0 / (2000.0 * t2)
                    l = 1.0 - n
                else:
                    rate = 1.0 / t2 - (0.5 / t1 if t1 is not None else 0.0)
                    if rate < 0:
                        raise EvolutionError(f"{site}: T2 exceeds 2 T1, pure dephasing rate negative")
                    c2 = 2.0 * rate / 1000.0
                    l = n
                factor += c2 * (l[:, None] * l[None, :] - 0.5 * (l[:, None] ** 2 + l[None, :] ** 2))
        self.factor = factor

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        out = self.factor * rho
        for rows, weight in self.decay:
            out = out + weight * rho[..., rows[:, None], rows[None, :]]
        return out

    def step(self, rho: np.ndarray, h: float) -> np.ndarray:
        """Second-order Taylor step of ``exp(h D)``; the rates make ``h |D|`` tiny."""
        d1 = self(rho)
        return rho + h * d1 + 0.5 * h * h * self(d1)


def lindblad_propagate(
    model: SimulationModel,
    schedule: PulseSchedule,
    noise: NoiseSpec,
    rho0: np.ndarray,
    dt: float = 0.1,
    dephasing: str = "printed",
    t_span=None,
) -> tuple[np.ndarray, float]:
    """Strang-split Lindblad evolution of one density matrix or a stack ``(K, D, D)``."""
    t0, t1 = (0.0, schedule.total_time) if t_span is None else t_span
    n, h = _step_count(t1 - t0, dt)
    diss = Dissipator(model, noise, dephasing)
    stepper = _MagnusStepper(model, schedule, t0, n, h)
    rho = np.array(rho0, dtype=complex, copy=True)
    U = np.zeros((model.dim, model.dim), dtype=complex)
    for k in range(n):
        for b, u in zip(model.blocks, stepper.blocks(k)):
            U[np.ix_(b, b)] = u
        rho = diss.step(rho, 0.5 * h)
        rho = U @ rho @ U.conj().T
        rho = diss.step(rho, 0.5 * h)
    return rho, h


def evolve_lindblad(
    device,
    schedule: PulseSchedule,
    noise: NoiseSpec,
    rho0: np.ndarray,
    t_span=None,
    dt: float = 0.1,
    frame: str = "full",
    max_excitations: int | None = None,
    dephasing: str = "printed",
) -> EvolutionResult:
    """Integrate the Lindblad equation with per-site relaxation and dephasing."""
    model = _as_model(device, frame, max_excitations)
    rho0 = np.asarray(rho0, dtype=complex)
    full_input = rho0.shape[0] == model.full_dim and model.dim != model.full_dim
    r0 = rho0[np.ix_(model.indices, model.indices)] if full_input else rho0
    if r0.shape != (model.dim, model.dim):
        raise EvolutionError(f"rho0 has shape {rho0.shape}, expected {model.dim} or {model.full_dim} square")
    if np.max(np.abs(r0 - r0.conj().T)) > 1e-9:
        raise EvolutionError("rho0 is not Hermitian")
    if abs(np.trace(r0).real - 1.0) > 1e-9:
        raise EvolutionError("rho0 does not have unit trace")
    if np.linalg.eigvalsh(r0).min() < -1e-9:
        raise EvolutionError("rho0 is not positive semidefinite")
    rho, h = lindblad_propagate(model, schedule, noise, r0, dt=dt, dephasing=dephasing, t_span=t_span)
    drift = abs(np.trace(rho).real - 1.0)
    if full_input:
        out = np.zeros((model.full_dim, model.full_dim), dtype=complex)
        out[np.ix_(model.indices, model.indices)] = rho
        rho = out
    return EvolutionResult(rho, None, h, None, trace_drift=drift)


# reduced three-excitation model -----------------------------------------------

THREE_EXCITATION_LABELS = ("210", "201", "120", "111", "102", "021", "012")


def three_excitation_hamiltonian(g12, g23, g13, omegas, alphas) -> np.ndarray:
    """Seven-level Hamiltonian of the three-quantum qubit manifold (rad/ns).

    ``omegas`` in GHz, ``alphas`` and couplings in MHz. Basis order is
    ``|210>, |201>, |120>, |111>, |102>, |021>, |012>``.
    """
    w1, w2, w3 = (TWO_PI * np.asarray(omegas, dtype=float)).tolist()
    a1, a2, a3 = mhz_to_angular(alphas).tolist()
    g12, g23, g13 = (float(mhz_to_angular(g)) for g in (g12, g23, g13))
    r2 = np.sqrt(2.0)
    return np.array(
        [
            [2 * w1 + a1 + w2, -g23, -2 * g12, -r2 * g13, 0, 0, 0],
            [-g23, 2 * w1 + a1 + w3, 0, -r2 * g12, -2 * g13, 0, 0],
            [-2 * g12, 0, 2 * w2 + a2 + w1, -r2 * g23, 0, -g13, 0],
            [-r2 * g13, -r2 * g12, -r2 * g23, w1 + w2 + w3, -r2 * g23, -r2 * g12, -r2 * g13],
            [0, -2 * g13, 0, -r2 * g23, 2 * w3 + a3 + w1, 0, -g12],
            [0, 0, -g13, -r2 * g12, 0, 2 * w2 + a2 + w3, -2 * g23],
            [0, 0, 0, -r2 * g13, -g12, -2 * g23, 2 * w3 + a3 + w2],
        ]
    )


def three_excitation_model(g12, g23, g13, omegas, alphas, times, psi0=None, dt: float = 0.05):
    """Populations of the seven three-quantum states versus time, starting in ``|111>``.

    ``omegas`` may be a 3-sequence of constants (GHz) or a callable ``t -> (w1, w2, w3)``.
    Returns an array of shape ``(len(times), 7)``.
    """
    times = np.asarray(times, dtype=float)
    psi = np.zeros(7, dtype=complex)
    psi[3] = 1.0
    if psi0 is not None:
        psi = np.asarray(psi0, dtype=complex)
    out = np.zeros((len(times), 7))
    if not callable(omegas):
        w, v = np.linalg.eigh(three_excitation_hamiltonian(g12, g23, g13, omegas, alphas))
        c = v.conj().T @ psi
        for k, t in enumerate(times):
            out[k] = np.abs(v @ (np.exp(-1j * w * t) * c)) ** 2
        return out
    t = 0.0
    for k, target in enumerate(times):
        n, h = _step_count(target - t, dt)
        for _ in range(n):
            H = three_excitation_hamiltonian(g12, g23, g13, omegas(t + 0.5 * h), alphas)
            w, v = np.linalg.eigh(H)
            psi = (v * np.exp(-1j * h * w)) @ (v.conj().T @ psi)
            t += h
        out[k] = np.abs(psi) ** 2
    return out
