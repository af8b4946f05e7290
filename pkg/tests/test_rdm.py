from __future__ import annotations

import itertools

import numpy as np
import pytest

from qrdm_nevpt2.fci import FCISpace, ci_to_statevector
from qrdm_nevpt2.fermion import fermion_matrix, spin_traced_excitation
from qrdm_nevpt2.rdm import RDMSet, partial_trace, statevector_pdm, statevector_rdm, statevector_rdms
from qrdm_nevpt2.simulator import StateVector

from conftest import load_system


def random_sector_state(rng, n: int, na: int, nb: int) -> StateVector:
    space = FCISpace(n, na, nb)
    v = rng.normal(size=space.dimension)
    return ci_to_statevector(v / np.linalg.norm(v), space)


def direct_element(state: StateVector, ups, los) -> float:
    m = fermion_matrix(spin_traced_excitation(ups, los), state.n_qubits)
    psi = state.amplitudes
    return float(np.real(np.vdot(psi, m @ psi)))


def test_closed_shell_determinant_closed_form():
    n, occ = 3, [0, 1]
    bits = sum(1 << (2 * p) | 1 << (2 * p + 1) for p in occ)
    r = statevector_rdms(StateVector.basis(2 * n, bits), (1, 2))
    d = np.zeros((n, n))
    d[occ, occ] = 1.0
    np.testing.assert_allclose(r.gamma1, 2 * d, atol=1e-14)
    g2 = 4 * np.einsum("pq,rs->prqs", d, d) - 2 * np.einsum("ps,rq->prqs", d, d)
    np.testing.assert_allclose(r.gamma2, g2, atol=1e-14)


@pytest.mark.parametrize("rank", [1, 2, 3])
def test_elements_match_operator_matrices(rng, rank):
    state = random_sector_state(rng, 2, 2, 1)
    g = statevector_rdm(state, rank)
    for idx in itertools.product(range(2), repeat=2 * rank):
        assert g[idx] == pytest.approx(direct_element(state, idx[:rank], idx[rank:]), abs=1e-12)


@pytest.mark.parametrize("name", ["h4_631g_r2.00", "beh2_sto3g_r2.80", "h3_631g_r1.00", "h2_631g_r1.00"])
def test_partial_trace_chain(name):
    r = load_system(name).rdms
    n_el = r.n_electrons
    prev = r.gamma1
    for k in (2, 3, 4):
        g = r.rank(k)
        if g is None:
            break
        np.testing.assert_allclose(partial_trace(g), (n_el - k + 1) * prev, atol=1e-10)
        prev = g
    assert np.trace(r.gamma1) == pytest.approx(n_el, abs=1e-10)


def test_invariant_errors_report(h2):
    errs = h2.rdms.invariant_errors()
    assert errs["vanishing3"] == 0.0
    assert max(errs.values()) < 1e-10


def test_rank4_vanishes_for_three_electrons():
    r = statevector_rdms(load_system("h3_631g_r1.00").casci.statevector(), (1, 2, 3, 4))
    assert np.abs(r.gamma4).max() < 1e-14


@pytest.mark.parametrize("rank", [1, 2, 3])
def test_pdm_matches_operator_products(rng, rank):
    state = random_sector_state(rng, 2, 1, 1)
    pdm = statevector_pdm(state, rank)
    psi = state.amplitudes
    for idx in itertools.product(range(2), repeat=2 * rank):
        m = None
        for p, q in zip(idx[:rank], idx[rank:]):
            e = fermion_matrix(spin_traced_excitation([p], [q]), 4)
            m = e if m is None else m @ e
        assert pdm[idx] == pytest.approx(float(np.real(np.vdot(psi, m @ psi))), abs=1e-12)


def test_save_load_round_trip(tmp_path, h2):
    r = h2.rdms
    r.save(tmp_path, "h2")
    back = RDMSet.load(tmp_path, "h2")
    np.testing.assert_array_equal(back.gamma2, r.gamma2)
    assert back.gamma4 is None
    assert (back.n_active, back.n_electrons, back.provenance) == (2, 2, r.provenance)
