"""Second-quantized fermionic operators and the Jordan-Wigner mapping.

Spin-orbitals are interleaved: ``2p`` is ``p`` alpha and ``2p + 1`` is ``p``
beta. Qubit ``j`` carries spin-orbital ``j``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .pauli import PauliSum

Ladder = tuple[tuple[int, bool], ...]


def spin_orbital(p: int, spin: int) -> int:
    """Index of spatial orbital ``p`` with spin 0 (alpha) or 1 (beta)."""
    return 2 * p + spin


@dataclass(frozen=True)
class FermionOperator:
    """Linear combination of ladder-operator strings.

    Each term is ``(coefficient, ((index, is_creation), ...))`` and the string
    is read left to right as an operator product.
    """

    terms: tuple = field(default_factory=tuple)

    @classmethod
    def from_terms(cls, terms: Iterable[tuple[complex, Sequence[tuple[int, bool]]]]) -> "FermionOperator":
        return cls(tuple((complex(c), tuple((int(i), bool(d)) for i, d in s)) for c, s in terms))

    @classmethod
    def excitation(cls, p: int, q: int, coeff: complex = 1.0) -> "FermionOperator":
        """Single spin-orbital excitation ``a+_p a_q``."""
        return cls.from_terms([(coeff, ((p, True), (q, False)))])

    def __add__(self, other: "FermionOperator") -> "FermionOperator":
        return FermionOperator(self.terms + other.terms)

    def __mul__(self, other):
        if isinstance(other, FermionOperator):
            return FermionOperator(tuple(
                (c1 * c2, s1 + s2) for c1, s1 in self.terms for c2, s2 in other.terms
            ))
        return FermionOperator(tuple((c * other, s) for c, s in self.terms))

    __rmul__ = __mul__

    def adjoint(self) -> "FermionOperator":
        return FermionOperator(tuple(
            (np.conj(c), tuple((i, not d) for i, d in reversed(s))) for c, s in self.terms
        ))

    def max_index(self) -> int:
        return max((i for _, s in self.terms for i, _ in s), default=-1)

    def normal_ordered(self) -> "FermionOperator":
        """Equivalent operator with creators left of annihilators, indices sorted descending.

        Duplicate ladder operators are removed, like terms merged.
        """
        acc: dict[Ladder, complex] = {}
        stack = [(c, list(s)) for c, s in self.terms]
        while stack:
            c, s = stack.pop()
            done = True
            for k in range(len(s) - 1):
                (i, di), (j, dj) = s[k], s[k + 1]
                if (not di and dj) or (di == dj and i < j):
                    # swap neighbours; anticommutator adds a contraction when needed
                    swapped = s[:k] + [s[k + 1], s[k]] + s[k + 2:]
                    stack.append((-c, swapped))
                    if i == j and di != dj:
                        stack.append((c, s[:k] + s[k + 2:]))
                    done = False
                    break
                if di == dj and i == j:
                    done = False
                    break
            if done:
                key = tuple(s)
                acc[key] = acc.get(key, 0) + c
        return FermionOperator(tuple((c, k) for k, c in sorted(acc.items()) if abs(c) > 1e-14))


def spin_traced_excitation(upper: Sequence[int], lower: Sequence[int], n_active: int | None = None) -> FermionOperator:
    """Spin-traced excitation operator ``E^{p r ...}_{q s ...}``.

    Sum over spin labels of ``a+_{p s1} a+_{r s2} ... a_{s s2} a_{q s1}``.
    """
    upper, lower = list(upper), list(lower)
    if len(upper) != len(lower) or not 1 <= len(upper) <= 4:
        raise ValueError("rank must be 1..4 with equal upper and lower index counts")
    if n_active is not None and any(not 0 <= i < n_active for i in upper + lower):
        raise ValueError(f"orbital index out of range 0..{n_active - 1}")
    terms = []
    for spins in itertools.product((0, 1), repeat=len(upper)):
        cre = [(spin_orbital(p, s), True) for p, s in zip(upper, spins)]
        ann = [(spin_orbital(q, s), False) for q, s in zip(lower, spins)][::-1]
        terms.append((1.0, tuple(cre + ann)))
    return FermionOperator.from_terms(terms)


_I_POW = np.array([1, 1j, -1, -1j])


def _mul_arrays(x1, z1, x2, z2):
    """Vectorized word product; returns (power of i, x, z)."""
    X1, Y1, Z1 = x1 & ~z1, x1 & z1, ~x1 & z1
    X2, Y2, Z2 = x2 & ~z2, x2 & z2, ~x2 & z2
    plus = np.bitwise_count((X1 & Y2) | (Y1 & Z2) | (Z1 & X2)).astype(np.int64)
    minus = np.bitwise_count((X1 & Z2) | (Y1 & X2) | (Z1 & Y2)).astype(np.int64)
    return (plus - minus) % 4, x1 ^ x2, z1 ^ z2


def ladder_words(js: np.ndarray, dagger: np.ndarray):
    """Unmerged Pauli expansion of many ladder strings of equal length.

    Args:
        js: ``(S, L)`` spin-orbital indices.
        dagger: ``(S, L)`` or ``(L,)`` creation flags.

    Returns:
        ``(x, z, c)`` arrays of shape ``(S, 2**L)``.
    """
    js = np.asarray(js, dtype=np.uint64)
    S, L = js.shape
    dagger = np.broadcast_to(np.asarray(dagger, dtype=bool), (S, L))
    x = np.zeros((S, 1), dtype=np.uint64)
    z = np.zeros((S, 1), dtype=np.uint64)
    c = np.ones((S, 1), dtype=complex)
    for pos in range(L):
        bit = np.uint64(1) << js[:, pos]
        zlow = bit - np.uint64(1)
        lx = np.stack([bit, bit], axis=1)
        lz = np.stack([zlow, zlow | bit], axis=1)
        lc = np.stack([np.full(S, 0.5), np.where(dagger[:, pos], -0.5j, 0.5j)], axis=1)
        k, nx, nz = _mul_arrays(x[:, :, None], z[:, :, None], lx[:, None, :], lz[:, None, :])
        c = (c[:, :, None] * lc[:, None, :] * _I_POW[k]).reshape(S, -1)
        x, z = nx.reshape(S, -1), nz.reshape(S, -1)
    return x, z, c


def _batch_words(strings: Sequence[Sequence[tuple[int, bool]]]):
    js = np.array([[j for j, _ in s] for s in strings], dtype=np.uint64)
    dag = np.array([[d for _, d in s] for s in strings], dtype=bool)
    return ladder_words(js, dag)


def _string_words(string: Sequence[tuple[int, bool]]):
    """Expand a ladder string into arrays ``(x, z, coeff)``; unmerged."""
    x, z, c = _batch_words([string])
    return x[0], z[0], c[0]


def jordan_wigner(op: FermionOperator, n_qubits: int | None = None) -> PauliSum:
    """Map a fermionic operator to a Pauli sum (complex coefficients kept)."""
    if n_qubits is None:
        n_qubits = op.max_index() + 1
    if n_qubits > 31:
        raise ValueError("registers above 31 qubits are not supported")
    xs, zs, cs = [], [], []
    groups: dict[int, list] = {}
    for coeff, string in op.terms:
        if any(j >= n_qubits for j, _ in string):
            raise ValueError(f"ladder index outside a {n_qubits}-qubit register")
        groups.setdefault(len(string), []).append((coeff, string))
    for length, items in groups.items():
        if length == 0:
            xs.append(np.zeros(len(items), dtype=np.uint64))
            zs.append(np.zeros(len(items), dtype=np.uint64))
            cs.append(np.array([c for c, _ in items], dtype=complex))
            continue
        x, z, c = _batch_words([s for _, s in items])
        xs.append(x.ravel())
        zs.append(z.ravel())
        cs.append((c * np.array([cf for cf, _ in items], dtype=complex)[:, None]).ravel())
    if not xs:
        return PauliSum(n_qubits)
    key = (np.concatenate(xs) << np.uint64(n_qubits)) | np.concatenate(zs)
    uniq, inv = np.unique(key, return_inverse=True)
    tot = np.zeros(uniq.size, dtype=complex)
    np.add.at(tot, inv, np.concatenate(cs))
    mask = np.uint64((1 << n_qubits) - 1)
    return PauliSum(n_qubits, {
        (int(k >> np.uint64(n_qubits)), int(k & mask)): v for k, v in zip(uniq, tot)
    })


def ladder_matrix(j: int, dagger: bool, n_qubits: int) -> sp.csr_matrix:
    """Explicit sparse matrix of ``a_j`` or ``a+_j`` in the occupation basis."""
    dim = 1 << n_qubits
    k = np.arange(dim)
    occ = (k >> j) & 1
    src = k[occ == (0 if dagger else 1)]
    below = np.array([bin(v & ((1 << j) - 1)).count("1") for v in src])
    vals = (-1.0) ** below
    return sp.csr_matrix((vals, (src ^ (1 << j), src)), shape=(dim, dim))


def fermion_matrix(op: FermionOperator, n_qubits: int) -> sp.csr_matrix:
    """Dense-register matrix of a fermionic operator from explicit ladder matrices."""
    dim = 1 << n_qubits
    mat = sp.csr_matrix((dim, dim), dtype=complex)
    for coeff, string in op.terms:
        cur = sp.identity(dim, dtype=complex, format="csr") * coeff
        for j, dagger in string:
            cur = cur @ ladder_matrix(j, dagger, n_qubits)
        mat = mat + cur
    return mat


def molecular_hamiltonian(h1: np.ndarray, eri: np.ndarray, constant: float = 0.0,
                          tol: float = 1e-14) -> FermionOperator:
    """Spin-orbital Hamiltonian ``sum h_pq E_pq + 1/2 sum (pq|rs) e_pqrs`` plus a constant."""
    n = h1.shape[0]
    terms = []
    if constant:
        terms.append((constant, ()))
    for p, q in itertools.product(range(n), repeat=2):
        if abs(h1[p, q]) > tol:
            for s in (0, 1):
                terms.append((h1[p, q], ((2 * p + s, True), (2 * q + s, False))))
    for p, q, r, s in itertools.product(range(n), repeat=4):
        v = eri[p, q, r, s]
        if abs(v) <= tol:
            continue
        for a, b in itertools.product((0, 1), repeat=2):
            if p == r and a == b or q == s and a == b:
                continue
            terms.append((0.5 * v, ((2 * p + a, True), (2 * r + b, True), (2 * s + b, False), (2 * q + a, False))))
    return FermionOperator.from_terms(terms)


def qubit_hamiltonian(h1: np.ndarray, eri: np.ndarray, constant: float = 0.0) -> PauliSum:
    """Jordan-Wigner image of the active-space Hamiltonian with real coefficients."""
    n = h1.shape[0]
    return jordan_wigner(molecular_hamiltonian(h1, eri, constant), 2 * n).real()


def number_operator(n_qubits: int) -> PauliSum:
    return jordan_wigner(FermionOperator.from_terms(
        [(1.0, ((j, True), (j, False))) for j in range(n_qubits)]), n_qubits).real()


def sz_operator(n_qubits: int) -> PauliSum:
    return jordan_wigner(FermionOperator.from_terms(
        [(0.5 if j % 2 == 0 else -0.5, ((j, True), (j, False))) for j in range(n_qubits)]), n_qubits).real()
