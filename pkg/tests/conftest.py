from __future__ import annotations

import functools
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pytest

from qrdm_nevpt2.chem_io import MOIntegrals, OrbitalSpaces, build_active_hamiltonian, load_fcidump
from qrdm_nevpt2.fci import CASCIResult, casci_solve
from qrdm_nevpt2.fermion import qubit_hamiltonian
from qrdm_nevpt2.pauli import PauliSum
from qrdm_nevpt2.rdm import RDMSet, statevector_rdms

DATA = Path(__file__).parent / "data"
ROOT_CONFIGS = Path(__file__).resolve().parents[1] / "configs"
GOLDEN = json.loads((DATA / "golden_pyscf.json").read_text())

# systems with at most 16 spin-orbitals in total, used for the oracle matrix
SMALL_SYSTEMS = [
    "h2_631g_r0.74", "h2_631g_r2.00", "h3_631g_r1.00", "h4_631g_r0.90", "h4_631g_r2.00",
    "lih_sto3g_r1.60", "lih_sto3g_r3.00", "lih_631g_r2.00_trunc8", "beh2_sto3g_r1.33",
    "beh2_sto3g_r2.80", "h6_sto3g_r1.50", "h2o_sto3g_eq", "ch2_sto3g_triplet",
]
H2_POINTS = [k for k in GOLDEN if k.startswith("h2_631g")]


@dataclass
class System:
    name: str
    ints: MOIntegrals
    spaces: OrbitalSpaces
    active: object
    casci: CASCIResult
    hamiltonian: PauliSum

    @functools.cached_property
    def rdms(self) -> RDMSet:
        ranks = (1, 2, 3, 4) if self.spaces.n_active_electrons >= 4 else (1, 2, 3)
        return statevector_rdms(self.casci.statevector(), ranks)


@functools.lru_cache(maxsize=None)
def load_system(name: str, n_active: int | None = None, n_active_electrons: int | None = None) -> System:
    g = GOLDEN[name]
    ints = load_fcidump(DATA / f"{name}.FCIDUMP")
    spaces = OrbitalSpaces.from_counts(
        ints.n_orbitals, ints.n_electrons,
        n_active or g["n_active"], n_active_electrons or g["n_active_electrons"], ints.spin_2s,
    )
    ah = build_active_hamiltonian(ints, spaces)
    h = qubit_hamiltonian(ah.h1_eff, ah.eri_act, ah.e_frozen)
    return System(name, ints, spaces, ah, casci_solve(ah, spaces), h)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def h2():
    return load_system("h2_631g_r0.74")


def random_integrals(n: int, rng: np.random.Generator, scale: float = 0.3) -> tuple[np.ndarray, np.ndarray]:
    """Real integrals with the full 8-fold permutational symmetry."""
    h1 = rng.normal(size=(n, n))
    h1 = 0.5 * (h1 + h1.T) - 2.0 * np.eye(n)
    a = rng.normal(size=(n * n, n * n)) * scale
    a = a @ a.T
    eri = a.reshape(n, n, n, n)
    eri = 0.5 * (eri + eri.transpose(1, 0, 2, 3))
    eri = 0.5 * (eri + eri.transpose(0, 1, 3, 2))
    return h1, eri
