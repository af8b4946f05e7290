from __future__ import annotations

import numpy as np
import pytest

from qrdm_nevpt2.fci import determinant_energy
from qrdm_nevpt2.pauli import PauliSum, word_from_string
from qrdm_nevpt2.simulator import (
    Circuit,
    NoiseModel,
    StateVector,
    apply,
    expectation,
    parities,
    random_circuit,
    sample,
)
from qrdm_nevpt2.state_prep import hf_bits
from qrdm_nevpt2.symmetry import find_z2_symmetries

from conftest import load_system


def plus_state() -> StateVector:
    return StateVector(1, np.array([1.0, 1.0]) / np.sqrt(2))


def test_empty_circuit_is_identity(rng):
    amp = rng.normal(size=8) + 1j * rng.normal(size=8)
    s = StateVector(3, amp / np.linalg.norm(amp))
    np.testing.assert_allclose(apply(Circuit(3), s).amplitudes, s.amplitudes)


def test_x_rotation_by_pi():
    out = apply(Circuit(1).pauli_exp("X", np.pi), StateVector.basis(1))
    np.testing.assert_allclose(out.amplitudes, [0.0, -1j], atol=1e-15)


@pytest.mark.parametrize("seed", range(6))
def test_decomposed_matches_native(seed):
    rng = np.random.default_rng(seed)
    circ = random_circuit(4, 25, rng)
    s = StateVector.basis(4, int(rng.integers(16)))
    a = apply(circ, s)
    b = apply(circ, s, decompose=True)
    assert a.fidelity(b) == pytest.approx(1.0, abs=1e-10)


def test_inverse_circuit_undoes(rng):
    circ = random_circuit(3, 20, rng)
    s = StateVector.basis(3, 5)
    back = apply(circ.inverse(), apply(circ, s))
    assert back.fidelity(s) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("k", range(3))
def test_zero_state_z_expectation(k):
    z = ["I"] * 3
    z[k] = "Z"
    assert expectation(StateVector.basis(3), PauliSum.from_strings({"".join(z): 1.0})) == 1.0


@pytest.mark.parametrize("name", ["h2_631g_r0.74", "lih_sto3g_r1.60", "beh2_sto3g_r1.33"])
def test_hf_energy_closed_form(name):
    sys = load_system(name)
    n_a, n_b = sys.spaces.n_alpha, sys.spaces.n_beta
    state = StateVector.basis(sys.spaces.n_qubits, hf_bits(n_a, n_b))
    ref = determinant_energy(sys.active.h1_eff, sys.active.eri_act, (1 << n_a) - 1, (1 << n_b) - 1)
    assert expectation(state, sys.hamiltonian) == pytest.approx(ref + sys.active.e_frozen, abs=1e-10)


def test_symmetry_generators_take_sector_values():
    sys = load_system("lih_sto3g_r3.00")
    g = find_z2_symmetries(sys.hamiltonian, hf_bits(sys.spaces.n_alpha, sys.spaces.n_beta))
    state = sys.casci.statevector()
    for z, s in zip(g.generators, g.sector):
        assert expectation(state, PauliSum(state.n_qubits, {(0, z): 1.0})) == pytest.approx(s, abs=1e-12)


def test_sample_basis_state():
    table = sample(StateVector.basis(1), None, 1000, np.random.default_rng(0))
    assert table.as_dict() == {"0": 1000}


def test_sample_requires_generator():
    with pytest.raises(TypeError):
        sample(StateVector.basis(1), None, 10, 0)
    with pytest.raises(ValueError):
        sample(StateVector.basis(1), None, 0, np.random.default_rng(0))


def test_standard_error_scaling():
    shots = [100, 1000, 10000, 100000]
    errs = []
    for n in shots:
        means = [sample(plus_state(), None, n, np.random.default_rng([7, n, b])).mean_parity(1)
                 for b in range(20)]
        errs.append(np.std(means, ddof=1))
    slope = np.polyfit(np.log(shots), np.log(errs), 1)[0]
    assert slope == pytest.approx(-0.5, abs=0.1)


def test_full_readout_scrambling():
    s = StateVector.from_bits("111")
    table = sample(s, None, 20000, np.random.default_rng(3), NoiseModel(readout=0.5))
    for z in (1, 2, 4, 7):
        assert abs(table.mean_parity(z)) < 4 / np.sqrt(20000)


def test_depolarizing_reduces_contrast():
    circ = Circuit(2).h(0).cnot(0, 1)
    s = StateVector.basis(2)
    clean = sample(s, circ, 4000, np.random.default_rng(1))
    noisy = sample(s, circ, 4000, np.random.default_rng(1), NoiseModel(depolarizing=0.3))
    assert clean.mean_parity(3) == 1.0
    assert noisy.mean_parity(3) < 0.9


def test_sampling_is_seed_deterministic():
    s = plus_state()
    a = sample(s, None, 500, np.random.default_rng(42)).to_json()
    b = sample(s, None, 500, np.random.default_rng(42)).to_json()
    assert a == b


def test_parities_rows():
    out = parities(np.array([0, 1, 3]), [1, 3])
    np.testing.assert_array_equal(out, [[1, -1, -1], [1, -1, 1]])


def test_noise_model_bounds():
    with pytest.raises(ValueError):
        NoiseModel(readout=1.5)


def test_state_validation():
    with pytest.raises(ValueError):
        StateVector(1, np.array([1.0, 1.0]))
    with pytest.raises(ValueError):
        Circuit(2).cnot(1, 1)
    assert word_from_string("ZI") == (0, 1)
