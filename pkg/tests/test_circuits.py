import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cczsim.calibration import CczGate, OperatingPoint, PhaseSet, cphase_schedule
from cczsim.circuits import (
    CCZ_UNITARY,
    CZ_TAU,
    SINGLE_QUBIT_NS,
    Circuit,
    CircuitError,
    FitDegenerateError,
    Gate,
    PulseBackend,
    cnot_unitary,
    cz_unitary,
    decomposed_ccz,
    embed_single,
    expand_native,
    fit_rb_decay,
    grover,
    grover_circuit,
    grover_success_probability,
    nominal_duration,
    optimal_iterations,
    rb_fidelity,
    run_circuit,
    toffoli,
)

H = np.array([[1, 1], [1, -1]]) / np.sqrt(2)


def basis(bits):
    v = np.zeros(8, dtype=complex)
    v[int(bits, 2)] = 1.0
    return v


# gate library -----------------------------------------------------------------------


def test_decomposition_equals_ccz():
    c = decomposed_ccz()
    assert np.abs(c.unitary() - CCZ_UNITARY).max() < 1e-12
    assert c.count("CNOT") == 8
    assert c.count("T", "Tdag") == 7
    c.check_native()


def test_native_expansion_preserves_unitary():
    c = decomposed_ccz()
    native = expand_native(c)
    assert native.count("CNOT") == 0 and native.count("CZ") == 8
    assert np.abs(native.unitary() - c.unitary()).max() < 1e-12
    wrapped = Circuit([Gate("CCZ_decomposed", (1, 2, 3))])
    assert np.abs(expand_native(wrapped).unitary() - CCZ_UNITARY).max() < 1e-12


@pytest.mark.parametrize("control,target", [(1, 2), (2, 1), (2, 3), (3, 2)])
def test_cnot_is_hadamard_conjugated_cz(control, target):
    h = embed_single(H, target)
    assert np.abs(h @ cz_unitary(tuple(sorted((control, target)))) @ h - cnot_unitary(control, target)).max() < 1e-12


def test_t_and_tdag_cancel():
    c = Circuit().append("T", 2).append("Tdag", 2)
    assert np.abs(c.unitary() - np.eye(8)).max() < 1e-15


def test_toffoli_targets_middle_qubit():
    U = toffoli().unitary()
    assert np.abs(U @ U - np.eye(8)).max() < 1e-12
    out = np.abs(U @ basis("101")) ** 2
    assert out[int("111", 2)] == pytest.approx(1.0)
    assert np.abs(U @ basis("100") - basis("100")).max() < 1e-12
    assert np.abs(expand_native(Circuit([toffoli()])).unitary() - U).max() < 1e-12


def test_invalid_gates_rejected():
    with pytest.raises(CircuitError):
        Gate("SWAP", (1, 2))
    with pytest.raises(CircuitError):
        Gate("CZ", (1, 1))
    with pytest.raises(CircuitError):
        Gate("H", (4,))
    with pytest.raises(CircuitError):
        Gate("Rz", (1,))
    with pytest.raises(CircuitError):
        Circuit(n_qubits=4)
    with pytest.raises(CircuitError):
        toffoli("bogus")


def test_non_native_pair_flagged():
    with pytest.raises(CircuitError):
        Circuit().append("CNOT", 1, 3).check_native()


def test_moments_group_single_qubit_runs():
    c = Circuit().append("H", 1).append("H", 2).append("CZ", 1, 2).append("X", 3).append("CZ", 2, 3)
    assert [len(layer) for layer in c.moments()] == [2, 1, 1, 1]


# ideal execution ----------------------------------------------------------------------


def test_empty_circuit_is_identity():
    res = run_circuit(Circuit(), initial_state="011")
    np.testing.assert_allclose(res.state, basis("011"))


def test_x_on_all_qubits():
    c = Circuit().append("X", 1).append("X", 2).append("X", 3)
    np.testing.assert_allclose(run_circuit(c, initial_state="000").state, basis("111"))


def test_ccz_twice_is_identity():
    c = Circuit().append("CCZ_direct", 1, 2, 3).append("CCZ_direct", 1, 2, 3)
    assert np.abs(c.unitary() - np.eye(8)).max() < 1e-15


def test_ideal_mode_rejects_model_state():
    with pytest.raises(CircuitError):
        run_circuit(Circuit(), initial_state=np.ones(51))


def test_pulse_mode_needs_backend():
    with pytest.raises(CircuitError):
        run_circuit(Circuit(), "pulse")
    with pytest.raises(CircuitError):
        run_circuit(Circuit(), "bogus")


# Grover -------------------------------------------------------------------------------


def test_grover_zero_iterations_is_uniform():
    np.testing.assert_allclose(grover("111", 0), np.full(8, 1 / 8), atol=1e-12)


def test_grover_two_iterations():
    p = grover("111", 2)
    assert p[7] == pytest.approx(0.9453125, abs=1e-12)
    assert p.sum() == pytest.approx(1.0)
    assert optimal_iterations(8) == 2


@pytest.mark.parametrize("k", range(6))
def test_grover_matches_closed_form(k):
    assert grover("111", k)[7] == pytest.approx(grover_success_probability(k), abs=1e-12)


@pytest.mark.parametrize("target", [format(i, "03b") for i in range(8)])
def test_grover_oracle_marks_every_target(target):
    p = grover(target, 2)
    assert int(np.argmax(p)) == int(target, 2)
    assert p[int(target, 2)] == pytest.approx(0.9453125, abs=1e-12)


def test_grover_bad_arguments():
    with pytest.raises(CircuitError):
        grover_circuit("11", 2)
    with pytest.raises(CircuitError):
        grover_circuit("111", -1)


def test_grover_decomposed_oracle_agrees():
    a = run_circuit(grover_circuit("111", 2, "CCZ_direct")).probabilities()
    b = run_circuit(grover_circuit("111", 2, "CCZ_decomposed")).probabilities()
    np.testing.assert_allclose(a, b, atol=1e-12)


# randomized benchmarking --------------------------------------------------------------


def test_rb_fidelity_reference_values():
    assert rb_fidelity(0.9947, 0.9876, 4) == pytest.approx(0.9946, abs=5e-5)
    assert rb_fidelity(0.9958, 0.9903, 4) == pytest.approx(0.9959, abs=5e-5)
    assert rb_fidelity(0.9947, 0.9876, 4) == pytest.approx(0.9946466271, abs=1e-9)


def test_rb_fidelity_limits():
    assert rb_fidelity(0.98, 0.98) == 1.0
    for bad in ((0.9, 0.95), (0.9, 0.0), (1.1, 0.9)):
        with pytest.raises(ValueError):
            rb_fidelity(*bad)
    with pytest.raises(ValueError):
        rb_fidelity(0.9, 0.8, d=1)


@settings(max_examples=100)
@given(st.floats(0.5, 1.0), st.floats(0.01, 0.99), st.floats(0.01, 0.99))
def test_rb_fidelity_monotone_in_gate_decay(p_ref, u, v):
    lo, hi = sorted((u * p_ref, v * p_ref))
    assert rb_fidelity(p_ref, lo) <= rb_fidelity(p_ref, hi)


def test_rb_fit_recovers_exact_decay():
    m = np.arange(1, 200, 10)
    A, p, B = fit_rb_decay(m, 0.48 * 0.9876 ** m + 0.5)
    assert (A, p, B) == pytest.approx((0.48, 0.9876, 0.5), abs=1e-6)


def test_rb_fit_with_noise():
    rng = np.random.default_rng(12)
    m = np.repeat(np.arange(1, 300, 15), 5)
    y = 0.47 * 0.9947 ** m + 0.51 + rng.normal(0, 0.005, m.size)
    _, p, _ = fit_rb_decay(m, y)
    assert p == pytest.approx(0.9947, abs=0.005)


def test_rb_fit_degenerate_inputs():
    with pytest.raises(FitDegenerateError):
        fit_rb_decay([1, 2], [0.9, 0.8])
    with pytest.raises(FitDegenerateError):
        fit_rb_decay([1, 5, 10], [0.7, 0.7, 0.7])


# pulse-level execution ----------------------------------------------------------------


def dummy_ccz():
    op = OperatingPoint(-1.9, -1.1, 150.0, 50.0, 0.01, PhaseSet(0.0, 0.0, 0.0, np.pi))
    return CczGate(op, cphase_schedule((1, 2), 0.0), cphase_schedule((2, 3), 0.0), (0.0, 0.0, 0.0))


def test_nominal_durations(sim):
    backend = PulseBackend(sim, ccz=dummy_ccz(), cz={(1, 2): cphase_schedule((1, 2), -1.5),
                                                     (2, 3): cphase_schedule((2, 3), -1.0)})
    direct = Circuit([Gate("CCZ_direct", (1, 2, 3))])
    decomposed = Circuit([Gate("CCZ_decomposed", (1, 2, 3))])
    assert nominal_duration(direct, backend) == 256.0
    assert nominal_duration(decomposed, backend) == 4 * 62 + 4 * 44 + 9 * SINGLE_QUBIT_NS == 640.0


def test_calibrated_cz_lengths(cz_backend):
    decomposed = Circuit([Gate("CCZ_decomposed", (1, 2, 3))])
    expected = 4 * CZ_TAU[(1, 2)] + 4 * CZ_TAU[(2, 3)] + 9 * SINGLE_QUBIT_NS
    assert nominal_duration(decomposed, cz_backend) == expected
    for pair in CZ_TAU:
        sch = cz_backend.cz_schedule(pair)
        assert sch.total_time == CZ_TAU[pair] + 80.0


def test_direct_ccz_needs_calibrated_gate(sim):
    with pytest.raises(CircuitError):
        run_circuit(Circuit([Gate("CCZ_direct", (1, 2, 3))]), "pulse", backend=PulseBackend(sim))


def test_single_qubit_layer_in_pulse_mode(sim):
    backend = PulseBackend(sim)
    res = run_circuit(Circuit().append("X", 1).append("X", 3), "pulse", "000", backend)
    p = res.probabilities()
    assert p[int("101", 2)] == pytest.approx(1.0, abs=1e-6)
    assert res.leakage[-1] < 1e-6
    assert res.duration_ns == SINGLE_QUBIT_NS


@pytest.mark.slow
def test_pulse_cnot_truth_table(cz_backend):
    c = Circuit().append("CNOT", 1, 2)
    for bits, out in (("000", "000"), ("100", "110"), ("110", "100"), ("011", "011")):
        p = run_circuit(c, "pulse", bits, cz_backend).probabilities()
        assert p[int(out, 2)] > 0.99


@pytest.mark.slow
def test_pulse_decomposed_ccz_phase(cz_backend):
    plus = np.kron(np.kron(H[:, 0], H[:, 0]), H[:, 0]).astype(complex)
    res = run_circuit(Circuit([Gate("CCZ_decomposed", (1, 2, 3))]), "pulse", plus, cz_backend)
    rho = np.outer(res.state[cz_backend.sim.comp], res.state[cz_backend.sim.comp].conj())
    ideal = CCZ_UNITARY @ plus
    assert np.real(ideal.conj() @ rho @ ideal) > 0.9
