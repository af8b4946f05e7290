"""Diagonal Z2 symmetries, qubit tapering and symmetry-forced zeros."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .pauli import PauliSum, multiply_words, popcount, word_from_string, word_to_string

_I_POW = (1, 1j, -1, -1j)


@dataclass(frozen=True)
class SymmetryGroup:
    """Independent I/Z-only generators and their eigenvalues in the target sector.

    Generators are stored as Z masks (bit ``j`` set means ``Z`` on qubit ``j``).
    """

    n_qubits: int
    generators: tuple = field(default_factory=tuple)
    sector: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.sector and len(self.sector) != len(self.generators):
            raise ValueError("sector length must match the number of generators")
        if _gf2_rank(list(self.generators)) != len(self.generators):
            raise ValueError("generators are not independent over GF(2)")

    @property
    def words(self) -> list[str]:
        return [word_to_string(0, z, self.n_qubits) for z in self.generators]

    def with_sector_from_bits(self, occupation: int) -> "SymmetryGroup":
        """Sector eigenvalues for a computational basis state (bit j = qubit j)."""
        sector = tuple(1 - 2 * (popcount(occupation & g) % 2) for g in self.generators)
        return SymmetryGroup(self.n_qubits, self.generators, sector)

    def for_state(self, amplitudes: np.ndarray, tol: float = 1e-8) -> "SymmetryGroup":
        """Sector read off a state; generators it is not an eigenstate of are dropped.

        A correlated ground state need not share the reference determinant's
        sector, so reductions must use the sector of the state actually measured.
        """
        prob = np.abs(np.asarray(amplitudes)) ** 2
        idx = np.arange(prob.size, dtype=np.int64)
        gens, sector = [], []
        for g in self.generators:
            parity = (np.bitwise_count(idx & g) & 1).astype(np.int64)
            val = float(prob @ (1 - 2 * parity))
            if abs(abs(val) - 1.0) < tol:
                gens.append(g)
                sector.append(1 if val > 0 else -1)
        return SymmetryGroup(self.n_qubits, tuple(gens), tuple(sector))

    def span_contains(self, z: int) -> bool:
        return _gf2_rank(list(self.generators) + [z]) == len(self.generators)

    def subgroup(self, masks) -> "SymmetryGroup":
        """Group generated by the given Z masks, sector inherited by products."""
        masks = [word_from_string(m)[1] if isinstance(m, str) else int(m) for m in masks]
        for m in masks:
            if not self.span_contains(m):
                raise ValueError(f"{word_to_string(0, m, self.n_qubits)} is not in the symmetry group")
        sector = tuple(self.eigenvalue(m) for m in masks) if self.sector else ()
        return SymmetryGroup(self.n_qubits, tuple(masks), sector)

    def eigenvalue(self, z: int) -> int:
        """Sector value of any element of the group given as a Z mask."""
        coeffs = _gf2_solve(list(self.generators), z)
        if coeffs is None:
            raise ValueError("word is not in the group")
        val = 1
        for c, s in zip(coeffs, self.sector):
            if c:
                val *= s
        return val


def _gf2_rank(vectors: list[int]) -> int:
    basis: dict[int, int] = {}
    for v in vectors:
        while v:
            top = v.bit_length() - 1
            if top in basis:
                v ^= basis[top]
            else:
                basis[top] = v
                break
    return len(basis)


def _gf2_solve(gens: list[int], target: int):
    """Coefficients c with XOR_k c_k gens[k] == target, or None."""
    basis: dict[int, tuple[int, int]] = {}
    for k, g in enumerate(gens):
        v, combo = g, 1 << k
        while v:
            top = v.bit_length() - 1
            if top in basis:
                v ^= basis[top][0]
                combo ^= basis[top][1]
            else:
                basis[top] = (v, combo)
                break
    v, combo = target, 0
    while v:
        top = v.bit_length() - 1
        if top not in basis:
            return None
        v ^= basis[top][0]
        combo ^= basis[top][1]
    return [(combo >> k) & 1 for k in range(len(gens))]


def _gf2_nullspace(rows: list[int], n: int) -> list[int]:
    """Basis of {z : popcount(row & z) even for all rows}, as integers on n bits."""
    pivots: dict[int, int] = {}
    for r in rows:
        v = r
        for col, prow in pivots.items():
            if (v >> col) & 1:
                v ^= prow
        if v == 0:
            continue
        col = (v & -v).bit_length() - 1
        for c in list(pivots):
            if (pivots[c] >> col) & 1:
                pivots[c] ^= v
        pivots[col] = v
    free = [j for j in range(n) if j not in pivots]
    basis = []
    for f in free:
        z = 1 << f
        for col, prow in pivots.items():
            if (prow >> f) & 1:
                z |= 1 << col
        basis.append(z)
    return sorted(basis)


def find_z2_symmetries(h: PauliSum, reference_bits: int | None = None) -> SymmetryGroup:
    """Maximal independent set of I/Z-only words commuting with every term.

    A Z mask ``z`` commutes with word ``(x, _)`` iff ``popcount(x & z)`` is
    even, so the group is the GF(2) null space of the X block.
    """
    rows = sorted({x for x, _ in h.words() if x})
    gens = _gf2_nullspace(rows, h.n_qubits)
    # reduced echelon form keeps the generator list deterministic and readable
    group = SymmetryGroup(h.n_qubits, tuple(_reduce_basis(gens)))
    if reference_bits is not None:
        group = group.with_sector_from_bits(reference_bits)
    return group


def _reduce_basis(vectors: list[int]) -> list[int]:
    rows = sorted(vectors, reverse=True)
    out: list[int] = []
    for v in rows:
        for b in out:
            if v ^ b < v:
                v ^= b
        if v:
            out = [b ^ v if b ^ v < b else b for b in out]
            out.append(v)
            out.sort(reverse=True)
    return sorted(out)


def symmetry_vanishes(observable: PauliSum, g: SymmetryGroup) -> bool:
    """True iff every word anticommutes with some generator (expectation is 0)."""
    if not len(observable):
        return True
    for x, _z in observable.words():
        if all(popcount(x & gz) % 2 == 0 for gz in g.generators):
            return False
    return True


def commutes_with_group(x: int, g: SymmetryGroup) -> bool:
    return all(popcount(x & gz) % 2 == 0 for gz in g.generators)


@dataclass(frozen=True)
class Tapering:
    """Clifford data needed to taper operators and states consistently."""

    n_qubits: int
    generators: tuple
    sector: tuple
    qubits: tuple  # qubit removed for each generator

    @property
    def kept(self) -> list[int]:
        return [j for j in range(self.n_qubits) if j not in self.qubits]

    def _conjugate_word(self, x: int, z: int) -> list[tuple[complex, int, int]]:
        """Apply U P U with U = prod_k (X_qk + Z_gk)/sqrt(2) to one word."""
        terms = [(1.0 + 0j, x, z)]
        for gz, q in zip(self.generators, self.qubits):
            new = []
            for c, wx, wz in terms:
                # U_k = (X_q + tau_k)/sqrt2, self-inverse; U P U = 1/2 sum over four products
                for ax, az in ((1 << q, 0), (0, gz)):
                    for bx, bz in ((1 << q, 0), (0, gz)):
                        k1, x1, z1 = multiply_words(ax, az, wx, wz)
                        k2, x2, z2 = multiply_words(x1, z1, bx, bz)
                        new.append((0.5 * c * _I_POW[(k1 + k2) % 4], x2, z2))
            acc: dict = {}
            for c, wx, wz in new:
                acc[(wx, wz)] = acc.get((wx, wz), 0) + c
            terms = [(c, wx, wz) for (wx, wz), c in acc.items() if abs(c) > 1e-14]
        return terms

    def taper_operator(self, h: PauliSum) -> PauliSum:
        kept = self.kept
        out: dict = {}
        for (x, z), c in h:
            for cc, wx, wz in self._conjugate_word(x, z):
                val = c * cc
                for q, s in zip(self.qubits, self.sector):
                    if (wz >> q) & 1:
                        raise RuntimeError("tapered qubit still carries a Z after conjugation")
                    if (wx >> q) & 1:
                        val *= s
                nx = sum(((wx >> j) & 1) << i for i, j in enumerate(kept))
                nz = sum(((wz >> j) & 1) << i for i, j in enumerate(kept))
                out[(nx, nz)] = out.get((nx, nz), 0) + val
        return PauliSum(len(kept), out)

    def taper_state(self, psi: np.ndarray) -> np.ndarray:
        """Map a sector eigenstate to the tapered register.

        After ``U`` each removed qubit sits in the ``X`` eigenstate with the
        sector eigenvalue, so it is projected out with the matching weight.
        """
        phi = np.asarray(psi, dtype=complex)
        n = self.n_qubits
        for gz, q in zip(self.generators, self.qubits):
            phi = (_apply_x(phi, q) + _apply_z(phi, gz, n)) / np.sqrt(2)
        idx = np.arange(1 << n)
        small = np.zeros(idx.size, dtype=np.int64)
        for i, j in enumerate(self.kept):
            small |= ((idx >> j) & 1) << i
        weight = np.ones(idx.size)
        for q, s in zip(self.qubits, self.sector):
            weight = np.where((idx >> q) & 1, weight * s, weight)
        out = np.zeros(1 << len(self.kept), dtype=complex)
        np.add.at(out, small, weight * phi)
        return out / np.sqrt(2.0 ** len(self.qubits))


def _apply_x(psi: np.ndarray, q: int) -> np.ndarray:
    idx = np.arange(psi.size) ^ (1 << q)
    return psi[idx]


def _apply_z(psi: np.ndarray, zmask: int, n: int) -> np.ndarray:
    k = np.arange(1 << n, dtype=np.uint64)
    return psi * (1.0 - 2.0 * (np.bitwise_count(k & np.uint64(zmask)) & 1))


def build_tapering(g: SymmetryGroup) -> Tapering:
    """Pick one qubit per generator and check the Clifford construction applies.

    Qubit ``q_k`` must be acted on by ``Z`` in generator ``k`` and by no other
    generator; the generator list is put in a suitable reduced form first.
    """
    if not g.generators:
        return Tapering(g.n_qubits, (), (), ())
    if len(g.sector) != len(g.generators):
        raise ValueError("sector inconsistent with generator count")
    gens = list(g.generators)
    sector = list(g.sector)
    qubits: list[int] = []
    # Gauss-Jordan elimination on generator bit masks, highest qubit first
    for k in range(len(gens)):
        piv = max(range(g.n_qubits), key=lambda j: (((gens[k] >> j) & 1) and j not in qubits, j))
        if not (gens[k] >> piv) & 1 or piv in qubits:
            raise ValueError("generators are not independent")
        for m in range(len(gens)):
            if m != k and (gens[m] >> piv) & 1:
                gens[m] ^= gens[k]
                sector[m] *= sector[k]
        qubits.append(piv)
    return Tapering(g.n_qubits, tuple(gens), tuple(sector), tuple(qubits))


def taper(h: PauliSum, g: SymmetryGroup) -> PauliSum:
    """Remove one qubit per generator of ``g`` (see :class:`Tapering`)."""
    if not g.generators:
        return h
    return build_tapering(g).taper_operator(h)
