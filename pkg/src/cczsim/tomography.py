"""Three-qubit state and process tomography, truth tables and readout errors.

Process matrices use the Pauli basis ``{I, X, Y, Z}^{⊗3}`` in lexicographic
order with q1 the slowest index, so ``chi[0, 0]`` is the ``III`` entry.

An *executor* is any callable mapping a stack of 8×8 input density matrices
``(K, 8, 8)`` to the corresponding output stack; the modes (ideal pulse,
Lindblad, shot-sampled) differ only in the executor.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .device import QUBITS, NoiseSpec

Executor = Callable[[np.ndarray], np.ndarray]


class TomographyError(ValueError):
    pass


I2 = np.eye(2, dtype=complex)
PX = np.array([[0, 1], [1, 0]], dtype=complex)
PY = np.array([[0, -1j], [1j, 0]], dtype=complex)
PZ = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI_1Q = {"I": I2, "X": PX, "Y": PY, "Z": PZ}
PAULI_LABELS = tuple("".join(p) for p in itertools.product("IXYZ", repeat=3))


def kron3(a, b, c):
    return np.kron(np.kron(a, b), c)


PAULI_3Q = np.array([kron3(*(PAULI_1Q[s] for s in lab)) for lab in PAULI_LABELS])
CCZ = np.diag([1, 1, 1, 1, 1, 1, 1, -1]).astype(complex)


def rx(theta):
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -1j * s], [-1j * s, c]])


def ry(theta):
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


PREPARATIONS = {
    "I": I2,
    "X": rx(np.pi),
    "X/2": rx(np.pi / 2),
    "-X/2": rx(-np.pi / 2),
    "Y/2": ry(np.pi / 2),
    "-Y/2": ry(-np.pi / 2),
}


# probes ------------------------------------------------------------------------


@dataclass(frozen=True)
class ProbeSet:
    """Product input states prepared by single-qubit rotations on ``|000>``."""

    kind: str
    labels: tuple[tuple[str, str, str], ...]
    states: np.ndarray  # (K, 8) state vectors

    @property
    def density_matrices(self) -> np.ndarray:
        return np.einsum("ki,kj->kij", self.states, self.states.conj())

    def __len__(self):
        return len(self.labels)


def make_probes(kind: str = "probe64") -> ProbeSet:
    if kind in ("probe64", "64", 64):
        ops, kind = ("I", "X", "X/2", "Y/2"), "probe64"
    elif kind in ("probe216", "216", 216):
        ops, kind = ("I", "X", "X/2", "-X/2", "Y/2", "-Y/2"), "probe216"
    else:
        raise TomographyError(f"unknown probe set {kind!r}")
    zero = np.array([1, 0], dtype=complex)
    labels, states = [], []
    for lab in itertools.product(ops, repeat=3):
        labels.append(lab)
        states.append(kron3(*(PREPARATIONS[o] @ zero for o in lab)))
    return ProbeSet(kind, tuple(labels), np.array(states))


def probe_rank(probes: ProbeSet) -> int:
    """Rank of the span of the probe density matrices (64 = complete)."""
    P = probes.density_matrices.reshape(len(probes), -1)
    return int(np.linalg.matrix_rank(P, tol=1e-10))


# process matrices ------------------------------------------------------------------


@dataclass(frozen=True)
class ChiMatrix:
    entries: np.ndarray
    basis: tuple[str, ...] = PAULI_LABELS

    def __post_init__(self):
        if self.entries.shape != (64, 64):
            raise TomographyError(f"chi must be 64x64, got {self.entries.shape}")

    @property
    def trace(self) -> complex:
        return np.trace(self.entries)

    def normalized(self) -> "ChiMatrix":
        return ChiMatrix(self.entries / self.trace.real, self.basis)

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(0.5 * (self.entries + self.entries.conj().T))

    def to_superoperator(self) -> np.ndarray:
        """Row-major superoperator ``vec(rho_out) = S vec(rho_in)``."""
        E = PAULI_3Q
        return np.einsum("mn,mac,nbd->abcd", self.entries, E, E.conj()).reshape(64, 64)

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return np.einsum("mn,mij,...jk,nlk->...il", self.entries, PAULI_3Q, rho, PAULI_3Q.conj())


def superoperator_to_chi(S: np.ndarray) -> ChiMatrix:
    """Project a row-major superoperator onto ``E_m ⊗ conj(E_n)``."""
    L = S.reshape(8, 8, 8, 8)
    chi = np.einsum("mac,nbd,abcd->mn", PAULI_3Q.conj(), PAULI_3Q, L) / 64.0
    return ChiMatrix(chi)


def qpt(executor: Executor, probes: ProbeSet | str = "probe64") -> ChiMatrix:
    """Linear-inversion process tomography from probe input/output pairs."""
    if isinstance(probes, str):
        probes = make_probes(probes)
    rho_in = probes.density_matrices
    P = rho_in.reshape(len(probes), 64).T  # columns: row-major vec of inputs
    if np.linalg.matrix_rank(P, tol=1e-10) < 64:
        raise TomographyError("probe states are not informationally complete")
    rho_out = np.asarray(executor(rho_in))
    R = rho_out.reshape(len(probes), 64).T
    S = R @ np.linalg.pinv(P)
    return superoperator_to_chi(S)


def ideal_chi(U: np.ndarray) -> ChiMatrix:
    """Rank-one process matrix ``chi_mn = c_m c_n*`` with ``U = sum_m c_m E_m``."""
    U = np.asarray(U, dtype=complex)
    if U.shape != (8, 8):
        raise TomographyError(f"expected an 8x8 unitary, got {U.shape}")
    if not np.allclose(U.conj().T @ U, np.eye(8), atol=1e-9):
        raise TomographyError("ideal_chi requires a unitary")
    c = np.einsum("mij,ij->m", PAULI_3Q.conj(), U) / 8.0
    return ChiMatrix(np.outer(c, c.conj()))


def process_fidelity(chi_exp: ChiMatrix, chi_ideal: ChiMatrix) -> float:
    """``Re Tr(chi_exp chi_ideal)``."""
    a = chi_exp.entries if isinstance(chi_exp, ChiMatrix) else np.asarray(chi_exp)
    b = chi_ideal.entries if isinstance(chi_ideal, ChiMatrix) else np.asarray(chi_ideal)
    if a.shape != b.shape:
        raise TomographyError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.real(np.einsum("ij,ji->", a, b)))


def write_chi_csv(chi: ChiMatrix, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "col", "re", "im"])
        for i, a in enumerate(chi.basis):
            for j, b in enumerate(chi.basis):
                z = chi.entries[i, j]
                w.writerow([a, b, f"{z.real:.15g}", f"{z.imag:.15g}"])


def read_chi_csv(path) -> ChiMatrix:
    idx = {lab: i for i, lab in enumerate(PAULI_LABELS)}
    chi = np.zeros((64, 64), dtype=complex)
    with open(path) as fh:
        for row in csv.DictReader(fh):
            chi[idx[row["row"]], idx[row["col"]]] = float(row["re"]) + 1j * float(row["im"])
    return ChiMatrix(chi)


# executors ---------------------------------------------------------------------------


def unitary_executor(U: np.ndarray) -> Executor:
    U = np.asarray(U, dtype=complex)
    return lambda rho: U @ rho @ U.conj().T


def reduce_to_computational(state: np.ndarray, indices: np.ndarray, max_leakage: float = 0.5):
    """Project onto the computational subspace and renormalize.

    ``state`` is a vector or density matrix over any basis; ``indices`` are the
    positions of ``|000>, ..., |111>`` in that basis. Returns the 8×8 density
    matrix and the discarded weight.
    """
    state = np.asarray(state)
    if state.ndim == 1:
        total = float(np.vdot(state, state).real)
        amp = state[indices]
        rho = np.outer(amp, amp.conj())
    else:
        total = float(np.trace(state).real)
        rho = state[np.ix_(indices, indices)]
    kept = float(np.trace(rho).real)
    leakage = max(0.0, total - kept) / total if total > 0 else 1.0
    if leakage > max_leakage:
        raise TomographyError(f"discarded weight {leakage:.3f} exceeds {max_leakage}")
    return rho / kept, leakage


# truth tables and state fidelity ------------------------------------------------------


@dataclass(frozen=True)
class TruthTable:
    probs: np.ndarray
    ideal: np.ndarray
    phases: np.ndarray | None = None

    @property
    def visibility(self) -> float:
        return float(np.trace(self.probs @ self.ideal.T) / 8.0)


def classical_transfer(U: np.ndarray) -> np.ndarray:
    """Rows: inputs, columns: outcome probabilities of the ideal gate."""
    return (np.abs(np.asarray(U)) ** 2).T


def basis_inputs() -> np.ndarray:
    return np.array([np.outer(e, e) for e in np.eye(8, dtype=complex)])


def truth_table(executor: Executor, ideal: np.ndarray = CCZ, readout: NoiseSpec | None = None) -> TruthTable:
    """Outcome probabilities for the eight computational inputs."""
    out = np.asarray(executor(basis_inputs()))
    probs = np.real(np.einsum("kii->ki", out))
    if readout is not None:
        probs = np.array([readout_channel(p, readout) for p in probs])
    phases = None
    return TruthTable(probs, classical_transfer(ideal), phases)


def average_state_fidelity(executor: Executor, probes: ProbeSet | str = "probe64", ideal: np.ndarray = CCZ) -> float:
    """Mean of ``<psi_ideal| rho_out |psi_ideal>`` over the probe states."""
    if isinstance(probes, str):
        probes = make_probes(probes)
    out = np.asarray(executor(probes.density_matrices))
    targets = probes.states @ np.asarray(ideal).T
    return float(np.mean(np.real(np.einsum("ki,kij,kj->k", targets.conj(), out, targets))))


# readout ---------------------------------------------------------------------------


def confusion_matrix(noise: NoiseSpec) -> np.ndarray:
    """Column-stochastic 8×8 readout matrix, columns = prepared states."""
    mats = []
    for q in QUBITS:
        f0 = noise.readout_f0.get(q, 1.0)
        f1 = noise.readout_f1.get(q, 1.0)
        mats.append(np.array([[f0, 1 - f1], [1 - f0, f1]]))
    return kron3(*mats).real


def readout_channel(probs: np.ndarray, noise: NoiseSpec) -> np.ndarray:
    p = np.asarray(probs, dtype=float)
    if p.shape != (8,) or np.any(p < -1e-12) or abs(p.sum() - 1.0) > 1e-6:
        raise TomographyError("readout_channel expects an 8-outcome probability vector")
    return confusion_matrix(noise) @ p


def readout_correct(measured: np.ndarray, noise: NoiseSpec) -> np.ndarray:
    return np.linalg.solve(confusion_matrix(noise), np.asarray(measured, dtype=float))


# state tomography with sampling -------------------------------------------------------------

_BASIS_ROTATIONS = {"X": ry(-np.pi / 2), "Y": rx(np.pi / 2), "Z": I2}


def measurement_probabilities(rho: np.ndarray, setting: tuple[str, str, str]) -> np.ndarray:
    R = kron3(*(_BASIS_ROTATIONS[s] for s in setting))
    return np.clip(np.real(np.diag(R @ rho @ R.conj().T)), 0.0, None)


def state_tomography(rho: np.ndarray, shots: int | None = None, rng: np.random.Generator | None = None,
                     readout: NoiseSpec | None = None, correct_readout: bool = False) -> np.ndarray:
    """Reconstruct an 8×8 state from the 27 Pauli measurement settings.

    With ``shots`` set, outcome counts are drawn from a multinomial after the
    optional readout channel; ``correct_readout`` inverts the confusion matrix
    before the linear inversion.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    signs = np.array([[1 - 2 * ((k >> (2 - q)) & 1) for q in range(3)] for k in range(8)])
    expect = {}
    for setting in itertools.product("XYZ", repeat=3):
        p = measurement_probabilities(rho, setting)
        p = p / p.sum()
        if readout is not None:
            p = confusion_matrix(readout) @ p
        if shots is not None:
            p = rng.multinomial(shots, p) / shots
        if readout is not None and correct_readout:
            p = readout_correct(p, readout)
        for mask in itertools.product((0, 1), repeat=3):
            lab = "".join(s if m else "I" for s, m in zip(setting, mask))
            val = float(np.sum(p * np.prod(np.where(np.array(mask)[None, :] == 1, signs, 1), axis=1)))
            expect.setdefault(lab, []).append(val)
    est = np.zeros((8, 8), dtype=complex)
    for lab, E in zip(PAULI_LABELS, PAULI_3Q):
        est += np.mean(expect[lab]) * E
    return est / 8.0


def sampled_executor(executor: Executor, shots: int, seed: int = 0, readout: NoiseSpec | None = None,
                     correct_readout: bool = False) -> Executor:
    """Wrap an exact executor with shot-sampled state tomography of each output."""
    rng = np.random.default_rng(seed)

    def run(rho_in):
        out = np.asarray(executor(rho_in))
        return np.array([state_tomography(r, shots, rng, readout, correct_readout) for r in out])

    return run
