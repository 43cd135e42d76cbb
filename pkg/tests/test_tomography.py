import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import unitary_group

from cczsim.device import NoiseSpec, default_noise
from cczsim.tomography import (
    CCZ,
    PAULI_LABELS,
    ChiMatrix,
    TomographyError,
    average_state_fidelity,
    classical_transfer,
    confusion_matrix,
    ideal_chi,
    kron3,
    make_probes,
    probe_rank,
    process_fidelity,
    qpt,
    read_chi_csv,
    readout_channel,
    readout_correct,
    reduce_to_computational,
    sampled_executor,
    state_tomography,
    truth_table,
    unitary_executor,
    write_chi_csv,
)

I = np.eye(2)
Z = np.diag([1.0, -1.0])
H = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
X = np.array([[0, 1], [1, 0]])
TOFFOLI = kron3(I, H, I) @ CCZ @ kron3(I, H, I)


def depolarize(rho):
    return np.einsum("kii->k", rho)[:, None, None] * np.eye(8) / 8.0


def random_unitary(seed):
    return unitary_group.rvs(8, random_state=seed)


# probes ---------------------------------------------------------------------------


def test_probe_sets_sizes_and_completeness():
    p64 = make_probes("probe64")
    p216 = make_probes(216)
    assert len(p64) == 64 and len(p216) == 216
    assert probe_rank(p64) == 64 and probe_rank(p216) == 64
    np.testing.assert_allclose(np.linalg.norm(p64.states, axis=1), 1.0)
    assert p64.labels[0] == ("I", "I", "I")
    np.testing.assert_allclose(np.abs(p64.states[p64.labels.index(("X", "X", "X"))]), np.eye(8)[7], atol=1e-15)


def test_incomplete_probes_rejected():
    probes = make_probes("probe64")
    partial = type(probes)(probes.kind, probes.labels[:20], probes.states[:20])
    with pytest.raises(TomographyError):
        qpt(unitary_executor(CCZ), partial)


# chi matrices ---------------------------------------------------------------------


def test_ideal_chi_basis_elements():
    chi = ideal_chi(np.eye(8))
    assert chi.entries[0, 0] == pytest.approx(1.0)
    assert np.count_nonzero(np.abs(chi.entries) > 1e-14) == 1
    k = PAULI_LABELS.index("ZII")
    chi = ideal_chi(kron3(Z, I, I))
    assert chi.entries[k, k] == pytest.approx(1.0)
    assert np.count_nonzero(np.abs(chi.entries) > 1e-14) == 1


def test_ideal_chi_of_ccz_pauli_expansion():
    coeffs = {"III": 0.75, "ZII": 0.25, "IZI": 0.25, "IIZ": 0.25, "ZZI": -0.25, "ZIZ": -0.25, "IZZ": -0.25,
              "ZZZ": 0.25}
    c = np.zeros(64)
    for lab, v in coeffs.items():
        c[PAULI_LABELS.index(lab)] = v
    np.testing.assert_allclose(ideal_chi(CCZ).entries, np.outer(c, c), atol=1e-15)


def test_ideal_chi_rejects_non_unitary():
    with pytest.raises(TomographyError):
        ideal_chi(2 * np.eye(8))


def test_qpt_identity_and_ccz():
    chi = qpt(unitary_executor(np.eye(8)))
    expected = np.zeros((64, 64))
    expected[0, 0] = 1.0
    np.testing.assert_allclose(chi.entries, expected, atol=1e-12)
    chi = qpt(unitary_executor(CCZ))
    assert process_fidelity(chi, ideal_chi(CCZ)) == pytest.approx(1.0, abs=1e-9)
    ev = chi.eigenvalues()
    assert ev[-1] == pytest.approx(1.0, abs=1e-9)
    assert np.abs(ev[:-1]).max() < 1e-9


def test_process_fidelity_of_orthogonal_unitaries():
    assert process_fidelity(ideal_chi(np.eye(8)), ideal_chi(kron3(Z, I, I))) == pytest.approx(0.0, abs=1e-15)


def test_process_fidelity_shape_mismatch():
    with pytest.raises(TomographyError):
        process_fidelity(np.eye(64), np.eye(8))


def test_depolarizing_channel_chi():
    chi = qpt(depolarize)
    np.testing.assert_allclose(chi.entries, np.eye(64) / 64, atol=1e-12)
    assert average_state_fidelity(depolarize, ideal=np.eye(8)) == pytest.approx(1 / 8)


def test_probe216_agrees_with_probe64():
    U = random_unitary(5)
    a = qpt(unitary_executor(U), "probe64")
    b = qpt(unitary_executor(U), "probe216")
    np.testing.assert_allclose(a.entries, b.entries, atol=1e-10)


def test_chi_apply_and_superoperator_consistent():
    U = random_unitary(11)
    chi = ideal_chi(U)
    rho = make_probes().density_matrices[17]
    np.testing.assert_allclose(chi.apply(rho), U @ rho @ U.conj().T, atol=1e-12)
    S = chi.to_superoperator()
    np.testing.assert_allclose((S @ rho.reshape(-1)).reshape(8, 8), U @ rho @ U.conj().T, atol=1e-12)


def test_chi_csv_round_trip(tmp_path):
    chi = qpt(unitary_executor(random_unitary(2)))
    path = tmp_path / "chi.csv"
    write_chi_csv(chi, path)
    np.testing.assert_allclose(read_chi_csv(path).entries, chi.entries, rtol=1e-14, atol=1e-15)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_unitary_chi_is_rank_one_and_hermitian(seed):
    U = random_unitary(seed)
    chi = qpt(unitary_executor(U))
    assert np.abs(chi.entries - chi.entries.conj().T).max() < 1e-10
    assert chi.trace.real == pytest.approx(1.0, abs=1e-10)
    assert chi.eigenvalues()[-1] >= 0.999 * chi.trace.real
    assert process_fidelity(chi, ideal_chi(U)) == pytest.approx(1.0, abs=1e-9)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(0, 2**31 - 1), st.floats(0.0, 1.0))
def test_qpt_is_linear_in_the_channel(s1, s2, w):
    U, V = random_unitary(s1), random_unitary(s2)
    mixed = lambda rho: w * unitary_executor(U)(rho) + (1 - w) * unitary_executor(V)(rho)
    chi = qpt(mixed)
    expected = w * qpt(unitary_executor(U)).entries + (1 - w) * qpt(unitary_executor(V)).entries
    assert np.abs(chi.entries - expected).max() < 1e-8


# reduction ----------------------------------------------------------------------------


def test_reduce_product_state():
    psi = np.zeros(20, dtype=complex)
    idx = np.arange(3, 11)
    psi[idx[0]] = 1.0
    rho, leak = reduce_to_computational(psi, idx)
    assert leak == 0.0
    np.testing.assert_allclose(rho, np.diag(np.eye(8)[0]))


def test_reduce_reports_leakage():
    psi = np.zeros(20, dtype=complex)
    idx = np.arange(8)
    psi[7] = np.sqrt(0.9)
    psi[15] = np.sqrt(0.1)
    rho, leak = reduce_to_computational(psi, idx)
    assert leak == pytest.approx(0.1)
    assert rho[7, 7] == pytest.approx(1.0)


def test_reduce_maximally_mixed():
    rho, leak = reduce_to_computational(np.eye(243) / 243, np.arange(0, 80, 10), max_leakage=1.0)
    np.testing.assert_allclose(rho, np.eye(8) / 8)
    assert leak == pytest.approx(1 - 8 / 243)


def test_reduce_dominance_error():
    with pytest.raises(TomographyError):
        reduce_to_computational(np.eye(243) / 243, np.arange(8))


# truth tables -------------------------------------------------------------------------


def test_truth_table_ideal_ccz():
    tt = truth_table(unitary_executor(CCZ))
    np.testing.assert_allclose(tt.probs, np.eye(8), atol=1e-15)
    assert tt.visibility == pytest.approx(1.0)


def test_truth_table_toffoli_swaps_101_and_111():
    T = classical_transfer(TOFFOLI)
    perm = np.eye(8)[[0, 1, 2, 3, 4, 7, 6, 5]]
    np.testing.assert_allclose(T, perm, atol=1e-15)
    assert truth_table(unitary_executor(TOFFOLI), TOFFOLI).visibility == pytest.approx(1.0)
    assert truth_table(unitary_executor(CCZ), TOFFOLI).visibility == pytest.approx(0.75)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_truth_table_rows_are_distributions(seed):
    tt = truth_table(unitary_executor(random_unitary(seed)))
    np.testing.assert_allclose(tt.probs.sum(axis=1), 1.0, atol=1e-12)
    assert 0.0 <= tt.visibility <= 1.0


def test_average_state_fidelity_identity():
    assert average_state_fidelity(unitary_executor(CCZ)) == pytest.approx(1.0)
    assert average_state_fidelity(lambda r: r, ideal=np.eye(8)) == pytest.approx(1.0)


# readout ------------------------------------------------------------------------------


def test_readout_perfect_is_identity():
    perfect = NoiseSpec({}, {}, {"Q1": 1.0, "Q2": 1.0, "Q3": 1.0}, {"Q1": 1.0, "Q2": 1.0, "Q3": 1.0})
    np.testing.assert_allclose(confusion_matrix(perfect), np.eye(8))


def test_readout_of_000_with_table_fidelities():
    p = readout_channel(np.eye(8)[0], default_noise())
    assert p[0] == pytest.approx(0.9814 * 0.9768 * 0.9861, rel=1e-12)
    assert p[0] == pytest.approx(0.9453, abs=1e-4)


def test_confusion_matrix_is_stochastic_and_invertible():
    M = confusion_matrix(default_noise())
    np.testing.assert_allclose(M.sum(axis=0), 1.0)
    p = np.random.default_rng(0).dirichlet(np.ones(8))
    np.testing.assert_allclose(readout_correct(M @ p, default_noise()), p, atol=1e-12)


def test_readout_rejects_invalid_distribution():
    with pytest.raises(TomographyError):
        readout_channel(np.ones(8), default_noise())


# state tomography ---------------------------------------------------------------------


def test_state_tomography_exact_expectations():
    rho = make_probes().density_matrices[41]
    np.testing.assert_allclose(state_tomography(rho), rho, atol=1e-12)


def test_sampled_tomography_is_seeded_and_close():
    rho = make_probes().density_matrices[23]
    a = state_tomography(rho, shots=20000, rng=np.random.default_rng(4))
    b = state_tomography(rho, shots=20000, rng=np.random.default_rng(4))
    np.testing.assert_array_equal(a, b)
    assert np.abs(a - rho).max() < 0.03


def test_readout_correction_recovers_state():
    rho = make_probes().density_matrices[50]
    noisy = state_tomography(rho, readout=default_noise())
    fixed = state_tomography(rho, readout=default_noise(), correct_readout=True)
    assert np.abs(noisy - rho).max() > 0.01
    np.testing.assert_allclose(fixed, rho, atol=1e-12)


def test_sampled_executor_process_fidelity():
    ex = sampled_executor(unitary_executor(CCZ), shots=4000, seed=1)
    f = process_fidelity(qpt(ex), ideal_chi(CCZ))
    assert 0.9 < f < 1.05


def test_chi_shape_validation():
    with pytest.raises(TomographyError):
        ChiMatrix(np.eye(8))
