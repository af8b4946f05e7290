"""Determinant-basis machinery: strings, excitation operators, CASCI.

A determinant is a pair of alpha/beta occupation bit strings; its index in a
:class:`FCISpace` is ``ia * n_beta_strings + ib``. The reference ordering of
creators is all alpha (ascending orbital) then all beta (ascending orbital).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .chem_io import ActiveHamiltonian, ContractViolation, OrbitalSpaces
from .simulator import StateVector

MAX_DIMENSION = 1_000_000
DENSE_LIMIT = 2500


def make_strings(norb: int, nelec: int) -> np.ndarray:
    """All occupation bit strings with ``nelec`` bits among ``norb``, ascending."""
    if nelec < 0 or nelec > norb:
        return np.zeros(0, dtype=np.int64)
    out = [sum(1 << i for i in occ) for occ in itertools.combinations(range(norb), nelec)]
    return np.array(sorted(out), dtype=np.int64)


def _popcount_below(s: int, p: int) -> int:
    return bin(s & ((1 << p) - 1)).count("1")


def string_excitations(strings: np.ndarray, norb: int) -> dict[tuple[int, int], sp.csr_matrix]:
    """Sparse matrices of ``a+_p a_q`` acting within one spin's string space."""
    index = {int(s): i for i, s in enumerate(strings)}
    dim = len(strings)
    ops = {}
    for p in range(norb):
        for q in range(norb):
            rows, cols, vals = [], [], []
            for i, s in enumerate(strings):
                s = int(s)
                if not (s >> q) & 1:
                    continue
                t = s ^ (1 << q)
                if (t >> p) & 1:
                    continue
                sign = (-1) ** (_popcount_below(s, q) + _popcount_below(t, p))
                rows.append(index[t | (1 << p)])
                cols.append(i)
                vals.append(sign)
            ops[(p, q)] = sp.csr_matrix((vals, (rows, cols)), shape=(dim, dim), dtype=float)
    return ops


@dataclass
class FCISpace:
    """Fixed-(N, Sz) determinant space over ``norb`` spatial orbitals."""

    norb: int
    nalpha: int
    nbeta: int

    def __post_init__(self):
        if self.nalpha > self.norb or self.nbeta > self.norb or min(self.nalpha, self.nbeta) < 0:
            raise ContractViolation("electron counts do not fit in the orbitals")
        if self.dimension > MAX_DIMENSION:
            raise ContractViolation(
                f"determinant space dimension {self.dimension} exceeds budget {MAX_DIMENSION}"
            )

    @cached_property
    def alpha_strings(self) -> np.ndarray:
        return make_strings(self.norb, self.nalpha)

    @cached_property
    def beta_strings(self) -> np.ndarray:
        return make_strings(self.norb, self.nbeta)

    @property
    def shape(self) -> tuple[int, int]:
        from math import comb
        return comb(self.norb, self.nalpha), comb(self.norb, self.nbeta)

    @property
    def dimension(self) -> int:
        na, nb = self.shape
        return na * nb

    @cached_property
    def _alpha_ops(self):
        return string_excitations(self.alpha_strings, self.norb)

    @cached_property
    def _beta_ops(self):
        if self.nbeta == self.nalpha:
            return self._alpha_ops
        return string_excitations(self.beta_strings, self.norb)

    @cached_property
    def e_alpha(self) -> dict:
        nb = len(self.beta_strings)
        eye = sp.identity(nb, format="csr")
        return {k: sp.kron(m, eye, format="csr") for k, m in self._alpha_ops.items()}

    @cached_property
    def e_beta(self) -> dict:
        na = len(self.alpha_strings)
        eye = sp.identity(na, format="csr")
        return {k: sp.kron(eye, m, format="csr") for k, m in self._beta_ops.items()}

    @cached_property
    def e_ops(self) -> dict:
        """Spin-summed ``E_pq`` as sparse matrices on the flattened space."""
        return {k: (self.e_alpha[k] + self.e_beta[k]).tocsr() for k in self.e_alpha}

    def hamiltonian(self, h1: np.ndarray, eri: np.ndarray, dense: bool | None = None):
        """Matrix of ``sum h_pq E_pq + 1/2 sum (pq|rs)(E_pq E_rs - d_qr E_ps)``."""
        n = self.norb
        hp = h1 - 0.5 * np.einsum("prrq->pq", eri)
        ops = self.e_ops
        dim = self.dimension
        mat = sp.csr_matrix((dim, dim))
        for (p, q), e in ops.items():
            if hp[p, q] != 0.0:
                mat = mat + hp[p, q] * e
        for r in range(n):
            for s in range(n):
                k = sp.csr_matrix((dim, dim))
                for (p, q), e in ops.items():
                    v = eri[p, q, r, s]
                    if v != 0.0:
                        k = k + v * e
                if k.nnz:
                    mat = mat + 0.5 * (k @ ops[(r, s)])
        if dense is None:
            dense = dim <= DENSE_LIMIT
        return mat.toarray() if dense else mat.tocsr()

    def sigma(self, h1: np.ndarray, eri: np.ndarray, vec: np.ndarray) -> np.ndarray:
        """``H vec`` without forming the Hamiltonian."""
        n = self.norb
        hp = h1 - 0.5 * np.einsum("prrq->pq", eri)
        ops = self.e_ops
        d = np.array([ops[(r, s)] @ vec for r in range(n) for s in range(n)]).reshape(n, n, -1)
        out = np.einsum("pq,pqi->i", hp, d)
        g = 0.5 * np.einsum("pqrs,rsi->pqi", eri, d)
        for (p, q), e in ops.items():
            out = out + e @ g[p, q]
        return out

    def occupations(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-determinant alpha and beta strings as flat arrays."""
        na, nb = len(self.alpha_strings), len(self.beta_strings)
        ia = np.repeat(self.alpha_strings, nb)
        ib = np.tile(self.beta_strings, na)
        return ia, ib

    def index_of(self, alpha: int, beta: int) -> int:
        ia = int(np.searchsorted(self.alpha_strings, alpha))
        ib = int(np.searchsorted(self.beta_strings, beta))
        if self.alpha_strings[ia] != alpha or self.beta_strings[ib] != beta:
            raise KeyError("determinant not in space")
        return ia * len(self.beta_strings) + ib

    def hf_index(self) -> int:
        return self.index_of((1 << self.nalpha) - 1, (1 << self.nbeta) - 1)


def interleave(alpha: np.ndarray, beta: np.ndarray, norb: int) -> tuple[np.ndarray, np.ndarray]:
    """Qubit basis index and reordering sign for (alpha, beta) string pairs."""
    alpha = np.asarray(alpha, dtype=np.int64)
    beta = np.asarray(beta, dtype=np.int64)
    idx = np.zeros_like(alpha)
    crossings = np.zeros_like(alpha)
    for p in range(norb):
        a = (alpha >> p) & 1
        b = (beta >> p) & 1
        idx |= a << (2 * p)
        idx |= b << (2 * p + 1)
        below = beta & ((1 << p) - 1)
        crossings += a * np.bitwise_count(below.astype(np.uint64)).astype(np.int64)
    return idx, 1 - 2 * (crossings & 1)


def ci_to_statevector(civec: np.ndarray, space: FCISpace) -> StateVector:
    """Embed a CI vector in the interleaved Jordan-Wigner register."""
    ia, ib = space.occupations()
    idx, sign = interleave(ia, ib, space.norb)
    amp = np.zeros(1 << (2 * space.norb), dtype=complex)
    amp[idx] = sign * np.asarray(civec).reshape(-1)
    return StateVector(2 * space.norb, amp)


def statevector_to_ci(state: StateVector, space: FCISpace) -> np.ndarray:
    ia, ib = space.occupations()
    idx, sign = interleave(ia, ib, space.norb)
    vec = state.amplitudes[idx] * sign
    leak = 1.0 - np.vdot(vec, vec).real
    if leak > 1e-8:
        raise ValueError(f"state has weight {leak:.3e} outside the determinant space")
    return vec


@dataclass(frozen=True)
class CASCIResult:
    energy: float  # active-space electronic energy, e_frozen excluded
    civec: np.ndarray
    space: FCISpace
    e_frozen: float = 0.0

    @property
    def total_energy(self) -> float:
        return self.energy + self.e_frozen

    def statevector(self) -> StateVector:
        return ci_to_statevector(self.civec, self.space)


def lowest_eigenpair(h, dim: int, v0: np.ndarray | None = None) -> tuple[float, np.ndarray]:
    if isinstance(h, np.ndarray):
        w, v = scipy.linalg.eigh(h, subset_by_index=[0, 0])
        vec = v[:, 0]
    else:
        w, v = spla.eigsh(h, k=1, which="SA", v0=v0, tol=1e-14)
        vec = v[:, 0]
    # fixed phase convention: largest component positive
    k = int(np.argmax(np.abs(vec)))
    if vec[k] < 0:
        vec = -vec
    return float(w[0]), vec


def casci_solve(h: ActiveHamiltonian, spaces: OrbitalSpaces, include_frozen: bool = False) -> CASCIResult:
    """Lowest eigenpair of the active Hamiltonian in the fixed (N, Sz) space."""
    if h.n_active != spaces.n_active:
        raise ContractViolation("active Hamiltonian size does not match the orbital spaces")
    space = FCISpace(spaces.n_active, spaces.n_alpha, spaces.n_beta)
    mat = space.hamiltonian(h.h1_eff, h.eri_act)
    e, vec = lowest_eigenpair(mat, space.dimension)
    if include_frozen:
        e += h.e_frozen
    return CASCIResult(e, vec, space, 0.0 if include_frozen else h.e_frozen)


def determinant_energy(h1: np.ndarray, eri: np.ndarray, alpha: int, beta: int) -> float:
    """Slater determinant energy from closed-form Slater-Condon diagonal rules."""
    oa = [p for p in range(h1.shape[0]) if (alpha >> p) & 1]
    ob = [p for p in range(h1.shape[0]) if (beta >> p) & 1]
    e = sum(h1[p, p] for p in oa) + sum(h1[p, p] for p in ob)
    for occ in (oa, ob):
        for i in occ:
            for j in occ:
                e += 0.5 * (eri[i, i, j, j] - eri[i, j, j, i])
    for i in oa:
        for j in ob:
            e += eri[i, i, j, j]
    return float(e)
