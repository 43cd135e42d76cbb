"""Effective ZZ and ZZZ couplings versus coupler frequencies.

Two routes are provided and kept independent:

* closed-form perturbation series of orders 2, 3 and 4 for the RWA Hamiltonian;
* exact diagonalization of ``H0 + V`` with dressed states labelled by maximum
  overlap with the bare computational states.

All couplings are returned in MHz (linear frequency).
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import brentq

from .device import TWO_PI, DeviceModel, bare_diagonal, build_interaction, fock_states, qubit_label_index


class ResonanceError(ZeroDivisionError):
    """A perturbative denominator vanished."""


class AssignmentError(RuntimeError):
    """A bare computational state has no dressed partner with overlap >= 0.5."""


METHODS = ("order2", "order3", "order4", "perturbative_sum", "exact")


@dataclass(frozen=True)
class CouplingReport:
    omega_c1: float
    omega_c2: float
    zeta12: float
    zeta23: float
    zeta13: float
    zeta123_total: float
    zeta_zzz_irreducible: float
    method: str
    flag: str = ""

    @classmethod
    def from_parts(cls, omega_c1, omega_c2, z12, z23, z13, z123, method, flag=""):
        return cls(
            float(omega_c1), float(omega_c2), float(z12), float(z23), float(z13), float(z123),
            float(z123 - z12 - z23 - z13), method, flag,
        )

    def values(self) -> np.ndarray:
        return np.array([self.zeta12, self.zeta23, self.zeta13, self.zeta123_total, self.zeta_zzz_irreducible])


def _params(device: DeviceModel) -> dict:
    """Frequencies, anharmonicities and couplings in MHz."""
    p = {}
    for name, site in (("1", "Q1"), ("2", "Q2"), ("3", "Q3"), ("c1", "C1"), ("c2", "C2")):
        p["w" + name] = 1000.0 * device.frequency(site)
        p["a" + name] = device.anharmonicity(site)
    g = device.g
    p.update(
        g12=g("Q1", "Q2"), g23=g("Q2", "Q3"), g13=g("Q1", "Q3"),
        g1c1=g("Q1", "C1"), g2c1=g("Q2", "C1"), g2c2=g("Q2", "C2"), g3c2=g("Q3", "C2"),
    )
    return p


class _Inv:
    """Reciprocal that reports which denominator vanished."""

    def __init__(self, tol: float = 1e-9):
        self.tol = tol

    def __call__(self, x: float, name: str) -> float:
        if abs(x) < self.tol:
            raise ResonanceError(f"vanishing denominator {name} = {x:.3g} MHz")
        return 1.0 / x


def _detunings(p: dict) -> dict:
    return dict(
        D12=p["w1"] - p["w2"], D23=p["w2"] - p["w3"], D13=p["w1"] - p["w3"],
        D1c1=p["w1"] - p["wc1"], D2c1=p["w2"] - p["wc1"],
        D2c2=p["w2"] - p["wc2"], D3c2=p["w3"] - p["wc2"],
    )


def _order2(p: dict) -> tuple[float, float, float, float]:
    inv = _Inv()
    d = _detunings(p)
    a1, a2, a3 = p["a1"], p["a2"], p["a3"]
    z12 = 2 * p["g12"] ** 2 * (inv(d["D12"] - a2, "D12-a2") - inv(d["D12"] + a1, "D12+a1"))
    z23 = 2 * p["g23"] ** 2 * (inv(d["D23"] - a3, "D23-a3") - inv(d["D23"] + a2, "D23+a2"))
    z13 = 2 * p["g13"] ** 2 * (inv(d["D13"] - a3, "D13-a3") - inv(d["D13"] + a1, "D13+a1"))
    return z12, z23, z13, z12 + z23 + z13


def _order3(p: dict) -> tuple[float, float, float, float]:
    inv = _Inv()
    d = _detunings(p)
    D12, D23, D13 = d["D12"], d["D23"], d["D13"]
    D1c1, D2c1, D2c2, D3c2 = d["D1c1"], d["D2c1"], d["D2c2"], d["D3c2"]
    a1, a2, a3 = p["a1"], p["a2"], p["a3"]
    ggg = p["g12"] * p["g13"] * p["g23"]
    gc1 = p["g12"] * p["g1c1"] * p["g2c1"]
    gc2 = p["g23"] * p["g2c2"] * p["g3c2"]

    # coupler-mediated triple products shared by z12 / z23 and z123
    c1_term = 4 * gc1 * (
        inv(D1c1 * (D12 - a2), "D1c1(D12-a2)")
        - inv(D2c1 * (D12 + a1), "D2c1(D12+a1)")
        + inv(D1c1 * D2c1, "D1c1 D2c1")
    )
    c2_term = 4 * gc2 * (
        inv(D2c2 * (D23 - a3), "D2c2(D23-a3)")
        - inv(D3c2 * (D23 + a2), "D3c2(D23+a2)")
        + inv(D2c2 * D3c2, "D2c2 D3c2")
    )
    z12 = (
        4 * ggg * (inv(D13 * (D12 - a2), "D13(D12-a2)") - inv(D23 * (D12 + a1), "D23(D12+a1)"))
        + 2 * ggg * inv(D13 * D23, "D13 D23")
        + c1_term
    )
    z23 = (
        4 * ggg * (inv(D13 * (D23 + a2), "D13(D23+a2)") - inv(D12 * (D23 - a3), "D12(D23-a3)"))
        + 2 * ggg * inv(D12 * D13, "D12 D13")
        + c2_term
    )
    z13 = 4 * ggg * (
        inv(D23 * (D13 + a1), "D23(D13+a1)")
        + inv(D12 * (D13 - a3), "D12(D13-a3)")
        - inv(D12 * D23, "D12 D23")
    )
    z123 = (
        4 * ggg * (
            inv((D12 + a1) * (D13 + a1), "(D12+a1)(D13+a1)")
            + inv((D13 - a3) * (D23 - a3), "(D13-a3)(D23-a3)")
            - inv((D12 - a2) * (D23 + a2), "(D12-a2)(D23+a2)")
            + 2 * inv((D13 + a1) * (D23 + a2), "(D13+a1)(D23+a2)")
            + 2 * inv((D12 - a2) * (D13 - a3), "(D12-a2)(D13-a3)")
            - 2 * inv((D12 + a1) * (D23 - a3), "(D12+a1)(D23-a3)")
        )
        + c1_term
        + c2_term
    )
    return z12, z23, z13, z123


def _same_coupler4(gA, gB, DA, DB, Dq, a_low, a_high, a_c, inv, tag):
    """Quartic term of two qubits sharing one coupler.

    ``a_low`` enters as ``Dq - a_low`` and ``a_high`` as ``Dq + a_high``, the
    two qubit anharmonicity denominators.
    """
    return gA ** 2 * gB ** 2 * (
        (inv(DA, f"D_{tag}A") + inv(DB, f"D_{tag}B")) ** 2 * 2 * inv(DA + DB - a_c, f"D_{tag}A+D_{tag}B-a_c")
        + 2 * inv(DA ** 2 * (Dq - a_low), f"D_{tag}A^2(Dq-a)")
        - 2 * inv(DB ** 2 * (Dq + a_high), f"D_{tag}B^2(Dq+a)")
        + (inv(DB, f"D_{tag}B") - inv(Dq, "Dq")) * inv(DA ** 2, f"D_{tag}A^2")
        + (inv(DA, f"D_{tag}A") + inv(Dq, "Dq")) * inv(DB ** 2, f"D_{tag}B^2")
    )


def _cross_coupler4(gA, gB, DA, DB, inv, tag):
    """Quartic term of two qubits each coupled to a different coupler."""
    return gA ** 2 * gB ** 2 * (
        inv(DA + DB, f"D_{tag}A+D_{tag}B") * (inv(DA, f"D_{tag}A") + inv(DB, f"D_{tag}B")) ** 2
        + inv(DA * DB ** 2, f"D_{tag}A D_{tag}B^2")
        + inv(DA ** 2 * DB, f"D_{tag}A^2 D_{tag}B")
    )


def _order4(p: dict, zeta23_alpha: str = "printed") -> tuple[float, float, float, float]:
    """Quartic coupler contributions.

    ``zeta23_alpha="printed"`` keeps the ``(D23 + a3)`` denominator of the
    pair (2,3) same-coupler term; ``"alpha2"`` uses ``(D23 + a2)``, the
    analogue of the pair (1,2) expression.
    """
    inv = _Inv()
    d = _detunings(p)
    a1, a2, a3 = p["a1"], p["a2"], p["a3"]
    s12 = _same_coupler4(p["g1c1"], p["g2c1"], d["D1c1"], d["D2c1"], d["D12"], a2, a1, p["ac1"], inv, "c1")
    a_high23 = a3 if zeta23_alpha == "printed" else a2
    s23 = _same_coupler4(p["g2c2"], p["g3c2"], d["D2c2"], d["D3c2"], d["D23"], a3, a_high23, p["ac2"], inv, "c2")
    x_1c1_2c2 = _cross_coupler4(p["g1c1"], p["g2c2"], d["D1c1"], d["D2c2"], inv, "x12")
    x_2c1_3c2 = _cross_coupler4(p["g2c1"], p["g3c2"], d["D2c1"], d["D3c2"], inv, "x23")
    x_1c1_3c2 = _cross_coupler4(p["g1c1"], p["g3c2"], d["D1c1"], d["D3c2"], inv, "x13")
    z12 = s12 + x_1c1_2c2
    z23 = s23 + x_2c1_3c2
    z13 = x_1c1_3c2
    z123 = s12 + x_1c1_2c2 + s23 + x_2c1_3c2 + x_1c1_3c2
    return z12, z23, z13, z123


def _report(device: DeviceModel, parts, method: str) -> CouplingReport:
    return CouplingReport.from_parts(device.frequency("C1"), device.frequency("C2"), *parts, method)


def zeta_order2(device: DeviceModel) -> CouplingReport:
    """Second-order ZZ couplings; the three-body total is the pairwise sum."""
    return _report(device, _order2(_params(device)), "order2")


def zeta_order3(device: DeviceModel) -> CouplingReport:
    return _report(device, _order3(_params(device)), "order3")


def zeta_order4(device: DeviceModel, zeta23_alpha: str = "printed") -> CouplingReport:
    return _report(device, _order4(_params(device), zeta23_alpha), "order4")


def zeta_perturbative(device: DeviceModel, omega_c1: float | None = None, omega_c2: float | None = None,
                      zeta23_alpha: str = "printed") -> CouplingReport:
    """Sum of orders 2 to 4 at the given coupler frequencies (GHz)."""
    dev = device.with_couplers(omega_c1, omega_c2)
    p = _params(dev)
    total = np.sum([_order2(p), _order3(p), _order4(p, zeta23_alpha)], axis=0)
    return _report(dev, total, "perturbative_sum")


# exact route -------------------------------------------------------------------

COMPUTATIONAL_LABELS = tuple(itertools.product((0, 1), repeat=3))


_INTERACTIONS: dict = {}


def _interaction(device: DeviceModel, frame: str) -> np.ndarray:
    # the coupling matrix does not depend on site frequencies, which is what sweeps vary
    key = (device.couplings, tuple(device.levels), frame)
    V = _INTERACTIONS.get(key)
    if V is None:
        V = _INTERACTIONS[key] = build_interaction(device, frame)
    return V


def dressed_computational_energies(device: DeviceModel, frame: str = "full", floor: float = 0.5) -> dict:
    """Dressed energies (MHz) of the eight computational states.

    Each bare label is matched to the eigenvector with the largest squared
    overlap; an overlap below ``floor`` raises :class:`AssignmentError`.
    """
    H = np.diag(bare_diagonal(device)) + _interaction(device, frame)
    if frame == "rwa":
        # total excitation number is conserved, so each sector can be diagonalized alone
        n_total = fock_states(device).sum(axis=1)
        sectors = {}
        for n in range(4):
            idx = np.flatnonzero(n_total == n)
            sectors[n] = (idx, *np.linalg.eigh(H[np.ix_(idx, idx)]))
    else:
        w_all, v_all = np.linalg.eigh(H)
    out = {}
    for label in COMPUTATIONAL_LABELS:
        i = qubit_label_index(*label, device)
        if frame == "rwa":
            idx, w, v = sectors[sum(label)]
            weights = np.abs(v[np.searchsorted(idx, i), :]) ** 2
        else:
            w, weights = w_all, np.abs(v_all[i, :]) ** 2
        k = int(np.argmax(weights))
        if weights[k] < floor:
            raise AssignmentError(
                f"|{''.join(map(str, label))}> has maximum dressed overlap {weights[k]:.3f} < {floor}"
            )
        out[label] = w[k] / TWO_PI * 1000.0
    return out


def zeta_from_energies(E: dict) -> tuple[float, float, float, float]:
    e = lambda a, b, c: E[(a, b, c)]
    z12 = e(1, 1, 0) - e(1, 0, 0) - e(0, 1, 0) + e(0, 0, 0)
    z23 = e(0, 1, 1) - e(0, 1, 0) - e(0, 0, 1) + e(0, 0, 0)
    z13 = e(1, 0, 1) - e(1, 0, 0) - e(0, 0, 1) + e(0, 0, 0)
    z123 = e(1, 1, 1) - e(1, 0, 0) - e(0, 1, 0) - e(0, 0, 1) + 2 * e(0, 0, 0)
    return z12, z23, z13, z123


def zeta_exact(device: DeviceModel, omega_c1: float | None = None, omega_c2: float | None = None,
               frame: str = "full") -> CouplingReport:
    """ZZ and ZZZ couplings from exact dressed energies."""
    dev = device.with_couplers(omega_c1, omega_c2)
    return _report(dev, zeta_from_energies(dressed_computational_energies(dev, frame)), "exact")


# sweeps ----------------------------------------------------------------------


def _evaluate(device, c1, c2, method, frame):
    if method == "exact":
        return zeta_exact(device, c1, c2, frame=frame)
    dev = device.with_couplers(c1, c2)
    if method == "perturbative_sum":
        return zeta_perturbative(dev)
    return {"order2": zeta_order2, "order3": zeta_order3, "order4": zeta_order4}[method](dev)


def sweep_couplings(device: DeviceModel, omega_c1, omega_c2, method: str = "exact", frame: str = "full",
                    jobs: int = 1) -> list[CouplingReport]:
    """Evaluate every ``(c1, c2)`` grid point, row-major with ``c1`` slowest.

    Points where the exact labelling is ambiguous or a perturbative denominator
    vanishes are returned with NaN values and a non-empty ``flag``.
    """
    if method == "pert":
        method = "perturbative_sum"
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    c1s = np.atleast_1d(np.asarray(omega_c1, dtype=float))
    c2s = np.atleast_1d(np.asarray(omega_c2, dtype=float))
    if c1s.size == 0 or c2s.size == 0:
        raise ValueError("coupler grid must be non-empty")
    points = [(a, b) for a in c1s for b in c2s]

    args = [(device, a, b, method, frame) for a, b in points]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(jobs) as pool:
            return list(pool.map(_sweep_worker, args))
    return [_sweep_worker(a) for a in args]


def _sweep_worker(args):
    device, a, b, method, frame = args
    try:
        return _evaluate(device, a, b, method, frame)
    except AssignmentError:
        return CouplingReport.from_parts(a, b, *([np.nan] * 4), method, "ambiguous")
    except ResonanceError:
        return CouplingReport.from_parts(a, b, *([np.nan] * 4), method, "resonant")


def sweep_grid(reports: list[CouplingReport], which: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Reshape a row-major sweep into ``(c1_axis, c2_axis, values[c1, c2])``."""
    c1 = np.unique([r.omega_c1 for r in reports])
    c2 = np.unique([r.omega_c2 for r in reports])
    attr = {"z12": "zeta12", "z23": "zeta23", "z13": "zeta13", "z123_total": "zeta123_total",
            "zzz": "zeta_zzz_irreducible"}.get(which, which)
    vals = np.array([getattr(r, attr) for r in reports]).reshape(len(c1), len(c2))
    return c1, c2, vals


def zero_contour(c1_axis, c2_axis, values) -> list[tuple[tuple[float, float], tuple[float, float]]]:
    """Segments of the zero set of ``values[c1, c2]``.

    Sign changes between neighbouring grid points are located by linear
    interpolation; the crossing points of each grid cell are joined pairwise.
    """
    x = np.asarray(c1_axis, dtype=float)
    y = np.asarray(c2_axis, dtype=float)
    Z = np.asarray(values, dtype=float)
    segments = []
    for i in range(len(x) - 1):
        for j in range(len(y) - 1):
            corners = [(x[i], y[j], Z[i, j]), (x[i + 1], y[j], Z[i + 1, j]),
                       (x[i + 1], y[j + 1], Z[i + 1, j + 1]), (x[i], y[j + 1], Z[i, j + 1])]
            pts = []
            for (xa, ya, za), (xb, yb, zb) in zip(corners, corners[1:] + corners[:1]):
                if not (np.isfinite(za) and np.isfinite(zb)):
                    continue
                if za == 0.0:
                    pts.append((xa, ya))
                elif za * zb < 0:
                    s = za / (za - zb)
                    pts.append((xa + s * (xb - xa), ya + s * (yb - ya)))
            pts = list(dict.fromkeys(pts))
            for a, b in zip(pts[0::2], pts[1::2]):
                segments.append((a, b))
    return segments


def contour_from_sweep(reports: list[CouplingReport], which: str):
    return zero_contour(*sweep_grid(reports, which))


CSV_COLUMNS = ("omega_c1_ghz", "omega_c2_ghz", "zeta12_mhz", "zeta23_mhz", "zeta13_mhz",
               "zeta123_total_mhz", "zeta_zzz_mhz", "flag")


def write_sweep_csv(reports: list[CouplingReport], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for r in reports:
            w.writerow([f"{v:.15g}" for v in (r.omega_c1, r.omega_c2, *r.values())] + [r.flag])


def read_sweep_csv(path, method: str = "exact") -> list[CouplingReport]:
    out = []
    with open(path) as fh:
        for row in csv.DictReader(fh):
            vals = [float(row[c]) for c in CSV_COLUMNS[:7]]
            out.append(CouplingReport(*vals, method=method, flag=row["flag"]))
    return out


# idle point -----------------------------------------------------------------


def _upper_zero(f, lo: float, hi: float, n: int = 97) -> float:
    """Highest root of ``f`` in ``[lo, hi]`` found by scanning downward."""
    grid = np.linspace(hi, lo, n)
    vals = [f(x) for x in grid]
    for (xa, fa), (xb, fb) in zip(zip(grid, vals), zip(grid[1:], vals[1:])):
        if np.isfinite(fa) and np.isfinite(fb) and fa * fb <= 0:
            return brentq(f, xb, xa, xtol=1e-12)
    raise ValueError(f"no zero crossing in [{lo}, {hi}] GHz")


def find_idle_point(device: DeviceModel, frame: str = "full", bracket=(5.6, 8.0), tol: float = 1e-9,
                    max_iter: int = 20) -> tuple[float, float]:
    """Coupler frequencies where exact ZZ between neighbouring qubits vanishes.

    ζ12 is controlled mostly by coupler 1 and ζ23 by coupler 2, so the two
    one-dimensional problems are solved alternately until both frequencies
    stop moving. Each solve takes the highest zero below ``bracket[1]``.
    """
    c1, c2 = device.frequency("C1"), device.frequency("C2")

    def z(which, a, b):
        try:
            r = zeta_exact(device, a, b, frame=frame)
        except AssignmentError:
            return np.nan
        return r.zeta12 if which == 12 else r.zeta23

    for _ in range(max_iter):
        new1 = _upper_zero(lambda x: z(12, x, c2), *bracket)
        new2 = _upper_zero(lambda x: z(23, new1, x), *bracket)
        done = abs(new1 - c1) < tol and abs(new2 - c2) < tol
        c1, c2 = new1, new2
        if done:
            break
    return c1, c2


def report_dict(r: CouplingReport) -> dict:
    return asdict(r)
