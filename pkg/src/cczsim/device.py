"""Three-qubit, two-coupler transmon device and its Hamiltonians.

Sites are ordered ``(Q1, C1, Q2, C2, Q3)`` so that a Fock basis index is the
mixed-radix number ``(n_q1, n_c1, n_q2, n_c2, n_q3)`` with Q1 most significant.

Frequencies are stored in the units used by device tables (GHz for transition
frequencies, MHz for anharmonicities and couplings). Every matrix built here is
in angular units of rad/ns, so ``H * t`` with ``t`` in ns is a phase.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Mapping

import numpy as np

TWO_PI = 2.0 * np.pi
SITES = ("Q1", "C1", "Q2", "C2", "Q3")
QUBITS = ("Q1", "Q2", "Q3")
COUPLERS = ("C1", "C2")
DEFAULT_EDGES = (
    ("Q1", "Q2"),
    ("Q2", "Q3"),
    ("Q1", "Q3"),
    ("Q1", "C1"),
    ("Q2", "C1"),
    ("Q2", "C2"),
    ("Q3", "C2"),
)
CONFIG_ENV_VAR = "CCZSIM_DEVICE_CONFIG"


class DeviceError(ValueError):
    """Invalid device description or operator request."""


def ghz_to_angular(f_ghz):
    """Convert a linear frequency in GHz to rad/ns."""
    return TWO_PI * np.asarray(f_ghz, dtype=float)


def mhz_to_angular(f_mhz):
    """Convert a linear frequency in MHz to rad/ns."""
    return TWO_PI * np.asarray(f_mhz, dtype=float) / 1000.0


@dataclass(frozen=True)
class TransmonSpec:
    """One transmon: a qubit or a tunable coupler.

    Parameters
    ----------
    label : str
        One of ``Q1, Q2, Q3, C1, C2``.
    frequency : float
        0-1 transition frequency in GHz. For couplers this is the idle frequency.
    anharmonicity : float
        In MHz, negative for a transmon.
    levels : int
        Number of Fock levels kept.
    """

    label: str
    frequency: float
    anharmonicity: float
    levels: int = 3

    def __post_init__(self):
        if self.label not in SITES:
            raise DeviceError(f"unknown site label {self.label!r}")
        if int(self.levels) < 2:
            raise DeviceError(f"{self.label}: levels must be >= 2, got {self.levels}")
        if not np.isfinite(self.frequency):
            raise DeviceError(f"{self.label}: frequency must be finite")

    @property
    def is_coupler(self) -> bool:
        return self.label in COUPLERS


@dataclass(frozen=True)
class CouplingGraph:
    """Symmetric hopping couplings ``g`` in MHz, keyed by unordered site pairs."""

    edges: tuple[tuple[str, str, float], ...]

    def __post_init__(self):
        seen = set()
        for a, b, _ in self.edges:
            if a == b:
                raise DeviceError(f"self-coupling on {a}")
            if a not in SITES or b not in SITES:
                raise DeviceError(f"unknown site in edge ({a}, {b})")
            key = frozenset((a, b))
            if key in seen:
                raise DeviceError(f"duplicate edge ({a}, {b})")
            seen.add(key)

    @classmethod
    def from_mapping(cls, g: Mapping[tuple[str, str], float]) -> "CouplingGraph":
        return cls(tuple((a, b, float(v)) for (a, b), v in g.items()))

    def g(self, a: str, b: str) -> float:
        """Coupling between ``a`` and ``b`` in MHz (0 if the edge is absent)."""
        for x, y, v in self.edges:
            if {x, y} == {a, b}:
                return v
        return 0.0

    def scaled(self, factor: float) -> "CouplingGraph":
        return CouplingGraph(tuple((a, b, v * factor) for a, b, v in self.edges))

    def replace(self, **updates: float) -> "CouplingGraph":
        """Return a copy with edges overridden, e.g. ``replace(Q1_Q3=0.0)``."""
        out = []
        pending = dict(updates)
        for a, b, v in self.edges:
            for key in (f"{a}_{b}", f"{b}_{a}"):
                if key in pending:
                    v = float(pending.pop(key))
            out.append((a, b, v))
        for key, v in pending.items():
            a, b = key.split("_")
            out.append((a, b, float(v)))
        return CouplingGraph(tuple(out))


@dataclass(frozen=True)
class NoiseSpec:
    """Coherence times (µs) per site and per-qubit readout fidelities."""

    t1: Mapping[str, float]
    t2: Mapping[str, float]
    readout_f0: Mapping[str, float] = field(default_factory=dict)
    readout_f1: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        for name, table in (("t1", self.t1), ("t2", self.t2)):
            for site, v in table.items():
                if not v > 0:
                    raise DeviceError(f"{name}[{site}] must be positive, got {v}")
        for name, table in (("f0", self.readout_f0), ("f1", self.readout_f1)):
            for site, v in table.items():
                if not 0.0 <= v <= 1.0:
                    raise DeviceError(f"readout {name}[{site}] outside [0, 1]: {v}")

    def scaled(self, factor: float) -> "NoiseSpec":
        """Multiply every coherence time by ``factor`` (readout unchanged)."""
        return NoiseSpec(
            {k: v * factor for k, v in self.t1.items()},
            {k: v * factor for k, v in self.t2.items()},
            dict(self.readout_f0),
            dict(self.readout_f1),
        )


@dataclass(frozen=True)
class DeviceModel:
    """Immutable five-transmon device in the fixed site ordering."""

    transmons: tuple[TransmonSpec, ...]
    couplings: CouplingGraph

    def __post_init__(self):
        labels = tuple(t.label for t in self.transmons)
        if labels != SITES:
            raise DeviceError(f"transmons must be ordered {SITES}, got {labels}")

    @property
    def levels(self) -> tuple[int, ...]:
        return tuple(int(t.levels) for t in self.transmons)

    @property
    def hilbert_dim(self) -> int:
        return int(np.prod(self.levels))

    def site(self, label: str) -> TransmonSpec:
        try:
            return self.transmons[SITES.index(label)]
        except ValueError:
            raise DeviceError(f"unknown site {label!r}") from None

    def frequency(self, label: str) -> float:
        return self.site(label).frequency

    def anharmonicity(self, label: str) -> float:
        return self.site(label).anharmonicity

    def g(self, a: str, b: str) -> float:
        return self.couplings.g(a, b)

    def with_couplers(self, omega_c1: float | None = None, omega_c2: float | None = None) -> "DeviceModel":
        """Copy with coupler frequencies (GHz) replaced. Qubits are untouched."""
        new = []
        for t in self.transmons:
            if t.label == "C1" and omega_c1 is not None:
                t = dataclasses.replace(t, frequency=float(omega_c1))
            elif t.label == "C2" and omega_c2 is not None:
                t = dataclasses.replace(t, frequency=float(omega_c2))
            new.append(t)
        return DeviceModel(tuple(new), self.couplings)

    def with_levels(self, levels: int) -> "DeviceModel":
        return DeviceModel(tuple(dataclasses.replace(t, levels=levels) for t in self.transmons), self.couplings)

    def with_couplings(self, couplings: CouplingGraph) -> "DeviceModel":
        return DeviceModel(self.transmons, couplings)

    def to_dict(self) -> dict:
        def entry(t):
            return {
                "label": t.label,
                "frequency_ghz": t.frequency,
                "anharmonicity_mhz": t.anharmonicity,
                "levels": t.levels,
            }

        return {
            "qubits": [entry(self.site(q)) for q in QUBITS],
            "couplers": [entry(self.site(c)) for c in COUPLERS],
            "couplings": [{"a": a, "b": b, "g_mhz": g} for a, b, g in self.couplings.edges],
        }


# Fock-space operators ------------------------------------------------------


def annihilation_operator(levels: int) -> np.ndarray:
    """Truncated bosonic lowering operator with ``b[n-1, n] = sqrt(n)``."""
    if int(levels) != levels or levels < 2:
        raise DeviceError(f"levels must be an integer >= 2, got {levels}")
    return np.diag(np.sqrt(np.arange(1, levels, dtype=float)), k=1).astype(complex)


def embed_operator(op: np.ndarray, site: str, device: DeviceModel) -> np.ndarray:
    """Place a single-site operator into the full tensor-product space."""
    idx = SITES.index(site) if site in SITES else None
    if idx is None:
        raise DeviceError(f"unknown site {site!r}")
    levels = device.levels
    op = np.asarray(op)
    if op.shape != (levels[idx], levels[idx]):
        raise DeviceError(f"operator shape {op.shape} does not match {site} with {levels[idx]} levels")
    out = np.ones((1, 1), dtype=complex)
    for k, n in enumerate(levels):
        out = np.kron(out, op if k == idx else np.eye(n))
    return out


def fock_states(device: DeviceModel) -> np.ndarray:
    """All occupation tuples, one row per basis index, shape ``(dim, 5)``."""
    grids = np.indices(device.levels).reshape(len(SITES), -1).T
    return grids.astype(int)


def basis_index(occupations: Iterable[int], device: DeviceModel) -> int:
    """Index of the Fock state with the given ``(q1, c1, q2, c2, q3)`` occupations."""
    occ = tuple(int(n) for n in occupations)
    if len(occ) != len(SITES) or any(n < 0 or n >= L for n, L in zip(occ, device.levels)):
        raise DeviceError(f"occupation {occ} outside the truncated space")
    return int(np.ravel_multi_index(occ, device.levels))


def qubit_label_index(q1: int, q2: int, q3: int, device: DeviceModel) -> int:
    """Index of ``|q1 q2 q3>`` with both couplers in the ground state."""
    return basis_index((q1, 0, q2, 0, q3), device)


def computational_indices(device: DeviceModel) -> np.ndarray:
    """Indices of the eight computational states, ordered ``|000>, |001>, ..., |111>``."""
    return np.array(
        [qubit_label_index(a, b, c, device) for a in (0, 1) for b in (0, 1) for c in (0, 1)]
    )


def number_diagonal(site: str, device: DeviceModel) -> np.ndarray:
    """Diagonal of ``b†b`` for ``site`` in the full Fock basis."""
    return fock_states(device)[:, SITES.index(site)].astype(float)


def bare_diagonal(device: DeviceModel) -> np.ndarray:
    """Diagonal of the bare Hamiltonian (rad/ns)."""
    occ = fock_states(device).astype(float)
    d = np.zeros(device.hilbert_dim)
    for k, t in enumerate(device.transmons):
        n = occ[:, k]
        d += ghz_to_angular(t.frequency) * n + 0.5 * mhz_to_angular(t.anharmonicity) * n * (n - 1)
    return d


def build_bare_hamiltonian(device: DeviceModel) -> np.ndarray:
    """``H0 = sum_j w_j n_j + (a_j / 2) n_j (n_j - 1)``, dense and diagonal."""
    return np.diag(bare_diagonal(device)).astype(complex)


def build_interaction(device: DeviceModel, frame: str = "full") -> np.ndarray:
    """Capacitive coupling between all edges of the coupling graph.

    ``frame="full"`` keeps the counter-rotating terms,
    ``g (b_j† - b_j)(b_k - b_k†)``; ``frame="rwa"`` keeps only the
    excitation-conserving hopping ``g (b_j† b_k + b_j b_k†)``.
    """
    if frame not in ("full", "rwa"):
        raise DeviceError(f"frame must be 'full' or 'rwa', got {frame!r}")
    dim = device.hilbert_dim
    ops = {s: embed_operator(annihilation_operator(L), s, device) for s, L in zip(SITES, device.levels)}
    V = np.zeros((dim, dim), dtype=complex)
    for a, b, g in device.couplings.edges:
        if g == 0.0:
            continue
        ga = mhz_to_angular(g)
        ba, bb = ops[a], ops[b]
        if frame == "full":
            V += ga * (ba.conj().T - ba) @ (bb - bb.conj().T)
        else:
            V += ga * (ba.conj().T @ bb + ba @ bb.conj().T)
    return V


# configuration files -------------------------------------------------------

def _site_from_entry(entry: Mapping) -> TransmonSpec:
    return TransmonSpec(
        label=str(entry["label"]),
        frequency=float(entry["frequency_ghz"]),
        anharmonicity=float(entry["anharmonicity_mhz"]),
        levels=int(entry.get("levels", 3)),
    )


def device_from_dict(cfg: Mapping) -> DeviceModel:
    try:
        specs = {t.label: t for t in map(_site_from_entry, list(cfg["qubits"]) + list(cfg["couplers"]))}
        edges = tuple((str(e["a"]), str(e["b"]), float(e["g_mhz"])) for e in cfg["couplings"])
    except (KeyError, TypeError) as exc:
        raise DeviceError(f"malformed device config: missing {exc}") from None
    missing = set(SITES) - set(specs)
    if missing:
        raise DeviceError(f"device config lacks sites {sorted(missing)}")
    return DeviceModel(tuple(specs[s] for s in SITES), CouplingGraph(edges))


def noise_from_dict(cfg: Mapping) -> NoiseSpec:
    noise = cfg["noise"]
    return NoiseSpec(
        t1={k: float(v) for k, v in noise["t1_us"].items()},
        t2={k: float(v) for k, v in noise["t2_us"].items()},
        readout_f0={k: float(v) for k, v in noise.get("f0", {}).items()},
        readout_f1={k: float(v) for k, v in noise.get("f1", {}).items()},
    )


def load_config(path: str | os.PathLike | None = None) -> dict:
    """Read a device config. ``None`` falls back to ``$CCZSIM_DEVICE_CONFIG``, then the bundled default."""
    path = path or os.environ.get(CONFIG_ENV_VAR)
    if path is None:
        text = resources.files("cczsim.data").joinpath("default_device.json").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise DeviceError(f"config is not valid JSON: {exc}") from None


def load_device(path=None) -> DeviceModel:
    return device_from_dict(load_config(path))


def load_noise(path=None) -> NoiseSpec:
    return noise_from_dict(load_config(path))


def default_device() -> DeviceModel:
    """Bundled three-qubit device with both couplers at 6.5 GHz."""
    return load_device(resources.files("cczsim.data").joinpath("default_device.json"))


def default_noise() -> NoiseSpec:
    return load_noise(resources.files("cczsim.data").joinpath("default_device.json"))
