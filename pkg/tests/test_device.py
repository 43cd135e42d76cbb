import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cczsim.device import (
    SITES,
    CouplingGraph,
    DeviceError,
    DeviceModel,
    NoiseSpec,
    TransmonSpec,
    annihilation_operator,
    basis_index,
    build_bare_hamiltonian,
    build_interaction,
    computational_indices,
    default_device,
    default_noise,
    device_from_dict,
    embed_operator,
    load_device,
    number_diagonal,
)


def small_device(freqs=(5.0, 6.0, 4.9, 6.0, 5.04), alphas=(-200, -300, -200, -300, -200), g=None, levels=3):
    transmons = tuple(TransmonSpec(s, f, a, levels) for s, f, a in zip(SITES, freqs, alphas))
    g = {} if g is None else g
    return DeviceModel(transmons, CouplingGraph.from_mapping(g))


def test_annihilation_operator_ladder():
    np.testing.assert_allclose(annihilation_operator(2), [[0, 1], [0, 0]])
    b = annihilation_operator(3)
    np.testing.assert_allclose(b, [[0, 1, 0], [0, 0, np.sqrt(2)], [0, 0, 0]])
    np.testing.assert_allclose(b.conj().T @ b, np.diag([0, 1, 2]))


def test_annihilation_operator_rejects_one_level():
    with pytest.raises(DeviceError):
        annihilation_operator(1)


def test_embed_identity_and_number():
    dev = default_device()
    np.testing.assert_allclose(embed_operator(np.eye(3), "C1", dev), np.eye(243))
    n = embed_operator(np.diag([0.0, 1.0, 2.0]), "Q1", dev)
    occ = np.indices(dev.levels).reshape(5, -1).T
    np.testing.assert_allclose(np.diag(n).real, occ[:, 0])
    b = annihilation_operator(3)
    assert np.trace(embed_operator(b.conj().T @ b, "Q2", dev)).real == pytest.approx(243.0)


def test_embed_rejects_wrong_shape():
    with pytest.raises(DeviceError):
        embed_operator(np.eye(2), "Q1", default_device())


def test_single_transmon_spectrum():
    dev = small_device(freqs=(5.0, 0.0, 0.0, 0.0, 0.0), alphas=(-200.0, 0, 0, 0, 0))
    e = np.diag(build_bare_hamiltonian(dev)).real
    i0, i1, i2 = (basis_index((n, 0, 0, 0, 0), dev) for n in range(3))
    np.testing.assert_allclose(e[[i0, i1, i2]] / (2 * np.pi), [0.0, 5.0, 9.8], atol=1e-12)


def test_zero_device_hamiltonian_vanishes():
    dev = small_device(freqs=(0,) * 5, alphas=(0,) * 5)
    assert not build_bare_hamiltonian(dev).any()
    assert not build_interaction(dev).any()


def test_default_device_energy_of_111():
    dev = default_device()
    e = np.diag(build_bare_hamiltonian(dev)).real
    i = basis_index((1, 0, 1, 0, 1), dev)
    assert e[i] / (2 * np.pi) == pytest.approx(14.936, abs=1e-12)


def test_rwa_hopping_element_two_level():
    dev = small_device(levels=2, g={("Q1", "Q2"): 5.0})
    V = build_interaction(dev, "rwa")
    i = basis_index((1, 0, 0, 0, 0), dev)
    j = basis_index((0, 0, 1, 0, 0), dev)
    assert V[i, j].real / (2 * np.pi) * 1000 == pytest.approx(5.0)


def test_full_frame_matches_rwa_on_conserving_blocks():
    dev = default_device()
    full = build_interaction(dev, "full")
    rwa = build_interaction(dev, "rwa")
    n = np.indices(dev.levels).reshape(5, -1).sum(axis=0)
    same = n[:, None] == n[None, :]
    np.testing.assert_allclose(full[same], rwa[same], atol=1e-12)
    assert np.abs(full[~same]).max() > 0


def test_excitation_number_conservation():
    dev = default_device()
    N = sum(np.diag(number_diagonal(s, dev)) for s in SITES)
    H = build_bare_hamiltonian(dev) + build_interaction(dev, "rwa")
    assert np.abs(H @ N - N @ H).max() < 1e-12
    Hf = build_bare_hamiltonian(dev) + build_interaction(dev, "full")
    assert np.abs(Hf @ N - N @ Hf).max() > 1e-6


def test_computational_indices_ordering():
    dev = default_device()
    idx = computational_indices(dev)
    assert len(idx) == 8
    occ = np.indices(dev.levels).reshape(5, -1).T[idx]
    assert [tuple(o) for o in occ[:, [0, 2, 4]]] == [
        (a, b, c) for a in (0, 1) for b in (0, 1) for c in (0, 1)
    ]
    assert not occ[:, [1, 3]].any()


def test_bundled_config_values():
    dev = load_device()
    assert dev.frequency("Q2") == pytest.approx(4.896)
    assert dev.anharmonicity("C1") == pytest.approx(-340.0)
    assert dev.g("Q2", "Q1") == pytest.approx(5.0)
    noise = default_noise()
    assert noise.t1["C1"] == pytest.approx(27.9)
    assert noise.readout_f0["Q3"] == pytest.approx(0.9861)


def test_config_file_and_env_override(tmp_path, monkeypatch):
    cfg = default_device().to_dict()
    cfg["qubits"][0]["frequency_ghz"] = 5.1
    path = tmp_path / "dev.json"
    path.write_text(json.dumps(cfg))
    assert load_device(path).frequency("Q1") == pytest.approx(5.1)
    monkeypatch.setenv("CCZSIM_DEVICE_CONFIG", str(path))
    assert load_device().frequency("Q1") == pytest.approx(5.1)


def test_config_round_trip():
    dev = default_device()
    assert device_from_dict(dev.to_dict()) == dev


def test_bad_configs_rejected():
    cfg = default_device().to_dict()
    cfg["qubits"][0]["levels"] = 1
    with pytest.raises(DeviceError):
        device_from_dict(cfg)
    with pytest.raises(DeviceError):
        NoiseSpec({"Q1": -1.0}, {})


def test_with_couplers_leaves_qubits():
    dev = default_device()
    moved = dev.with_couplers(7.0, 7.5)
    assert moved.frequency("C1") == 7.0 and moved.frequency("C2") == 7.5
    for q in ("Q1", "Q2", "Q3"):
        assert moved.site(q) == dev.site(q)


freq = st.floats(3.0, 8.0)
alpha = st.floats(-400.0, -50.0)
coupling = st.floats(-100.0, 100.0)


@settings(max_examples=15, deadline=None)
@given(st.tuples(*[freq] * 5), st.tuples(*[alpha] * 5), st.tuples(*[coupling] * 3))
def test_hamiltonian_hermitian(freqs, alphas, gs):
    dev = small_device(freqs, alphas, {("Q1", "C1"): gs[0], ("Q2", "C1"): gs[1], ("Q1", "Q3"): gs[2]})
    H0 = build_bare_hamiltonian(dev)
    assert np.count_nonzero(H0 - np.diag(np.diag(H0))) == 0
    for frame in ("full", "rwa"):
        V = build_interaction(dev, frame)
        assert np.abs(V - V.conj().T).max() < 1e-12


@settings(max_examples=10, deadline=None)
@given(st.permutations(range(5)))
def test_bare_spectrum_invariant_under_relabeling(perm):
    freqs = np.array([5.0, 6.3, 4.9, 6.1, 5.04])
    alphas = np.array([-198.0, -340, -200, -320, -206])
    e = np.sort(np.diag(build_bare_hamiltonian(small_device(freqs, alphas))).real)
    p = list(perm)
    ep = np.sort(np.diag(build_bare_hamiltonian(small_device(freqs[p], alphas[p]))).real)
    np.testing.assert_allclose(e, ep, atol=1e-9)
