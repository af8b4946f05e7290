"""RDM/PDM observables, commuting-set measurement plans, execution and assembly.

Matrix elements are measured through the Hermitian part of their Jordan-Wigner
image, which equals the element itself for real wavefunctions (CASCI vectors
and the real-amplitude UCCSD states prepared here).
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from .fermion import FermionOperator, jordan_wigner, ladder_words, spin_traced_excitation
from .pauli import PauliSum, word_expectations, word_to_string
from .rdm import RDMSet
from .simulator import Circuit, NoiseModel, StateVector, parities, sample
from .symmetry import SymmetryGroup

log = logging.getLogger(__name__)

KINDS = ("rdm", "pdm")
STRATEGIES = ("general", "qubitwise")


class PlanInvariantError(RuntimeError):
    """A claimed-commuting set could not be diagonalized (indicates a bug)."""


class AssemblyError(ValueError):
    """Raised when estimates are missing for a required tuple."""


# canonical index tuples

def _variant_axes(rank: int, kind: str) -> list[tuple[int, ...]]:
    """Axis permutations of the rank-``rank`` tensor that leave it invariant."""
    ups, los = list(range(rank)), list(range(rank, 2 * rank))
    out = []
    if kind == "rdm":
        for perm in itertools.permutations(range(rank)):
            u = [ups[i] for i in perm]
            lo = [los[i] for i in perm]
            out.append(tuple(u + lo))
            out.append(tuple(lo + u))
    else:
        # ordered product: only Hermitian conjugation, which reverses the pair order
        out.append(tuple(ups + los))
        out.append(tuple(los[::-1] + ups[::-1]))
    return out


@dataclass(frozen=True)
class TupleIndex:
    """Canonical representatives and the fan-out map of one tensor rank."""

    n_active: int
    rank: int
    kind: str
    canonical: np.ndarray  # (m, 2*rank) canonical tuples, lexicographic
    inverse: np.ndarray  # flat tensor index -> row of ``canonical``


def canonical_tuples(n_active: int, rank: int, kind: str = "rdm") -> TupleIndex:
    """Enumerate symmetry-unique index tuples (uppers then lowers)."""
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}")
    width = 2 * rank
    size = n_active ** width
    idx = np.indices((n_active,) * width).reshape(width, -1).T
    weights = n_active ** np.arange(width - 1, -1, -1)
    best = np.full(size, np.iinfo(np.int64).max)
    for axes in _variant_axes(rank, kind):
        best = np.minimum(best, idx[:, list(axes)] @ weights)
    uniq, inverse = np.unique(best, return_inverse=True)
    canon = idx[uniq]
    return TupleIndex(n_active, rank, kind, canon, inverse.reshape(-1))


def element_operator(indices, kind: str = "rdm") -> FermionOperator:
    """Fermionic operator whose expectation is the tensor element at ``indices``."""
    k = len(indices) // 2
    ups, los = list(indices[:k]), list(indices[k:])
    if kind == "rdm":
        return spin_traced_excitation(ups, los)
    op = spin_traced_excitation([ups[0]], [los[0]])
    for p, q in zip(ups[1:], los[1:]):
        op = op * spin_traced_excitation([p], [q])
    return op


def hermitian_observable(op: FermionOperator, n_qubits: int) -> PauliSum:
    """``(A + A^dagger) / 2`` mapped to qubits, with real coefficients."""
    p = jordan_wigner(op, n_qubits)
    return ((p + p.adjoint()) * 0.5).real()


def _ladder_layout(tuples: np.ndarray, kind: str):
    """Spin-orbital ladder strings for every spin labelling of every tuple."""
    T, width = tuples.shape
    k = width // 2
    spins = np.array(list(itertools.product((0, 1), repeat=k)), dtype=np.int64)  # (2^k, k)
    ups = 2 * tuples[:, None, :k] + spins[None]
    los = 2 * tuples[:, None, k:] + spins[None]
    if kind == "rdm":
        js = np.concatenate([ups, los[:, :, ::-1]], axis=2)
        dag = np.array([True] * k + [False] * k)
    else:
        js = np.stack([ups, los], axis=3).reshape(T, spins.shape[0], width)
        dag = np.array([True, False] * k)
    return js.reshape(T * spins.shape[0], width), dag, spins.shape[0]


@dataclass
class TermTable:
    """Flat Pauli terms of many observables: term ``i`` belongs to ``owner[i]``."""

    owner: np.ndarray  # int64
    x: np.ndarray  # uint64
    z: np.ndarray  # uint64
    coeff: np.ndarray  # float64

    def __len__(self) -> int:
        return self.owner.size

    def take(self, sel) -> "TermTable":
        return TermTable(self.owner[sel], self.x[sel], self.z[sel], self.coeff[sel])

    @classmethod
    def from_sums(cls, sums) -> "TermTable":
        owner, xs, zs, cs = [], [], [], []
        for i, o in enumerate(sums):
            for (x, z), c in o:
                owner.append(i)
                xs.append(x)
                zs.append(z)
                cs.append(float(np.real(c)))
        return cls(np.array(owner, dtype=np.int64), np.array(xs, dtype=np.uint64),
                   np.array(zs, dtype=np.uint64), np.array(cs, dtype=float))

    def to_sums(self, n_owners: int, n_qubits: int) -> list[PauliSum]:
        order = np.argsort(self.owner, kind="stable")
        t = self.take(order)
        bounds = np.searchsorted(t.owner, np.arange(n_owners + 1))
        xs, zs, cs = t.x.tolist(), t.z.tolist(), t.coeff.tolist()
        return [PauliSum(n_qubits, dict(zip(zip(xs[lo:hi], zs[lo:hi]), cs[lo:hi])))
                for lo, hi in zip(bounds[:-1], bounds[1:])]


def _combine(owner, x, z, coeff, tol: float = 1e-12) -> TermTable:
    """Sum duplicate ``(owner, word)`` terms and drop negligible ones."""
    if owner.size == 0:
        return TermTable(owner.astype(np.int64), x.astype(np.uint64), z.astype(np.uint64),
                         coeff.astype(float))
    nb = int(x.max() | z.max()).bit_length()
    if int(owner.max()).bit_length() + 2 * nb <= 64:
        key = ((owner.astype(np.uint64) << np.uint64(2 * nb)) | (x << np.uint64(nb)) | z)
        order = np.argsort(key)
        key = key[order]
        o, xx, zz = owner[order], x[order], z[order]
        start = np.ones(o.size, dtype=bool)
        start[1:] = key[1:] != key[:-1]
    else:
        order = np.lexsort((z, x, owner))
        o, xx, zz = owner[order], x[order], z[order]
        start = np.ones(o.size, dtype=bool)
        start[1:] = (o[1:] != o[:-1]) | (xx[1:] != xx[:-1]) | (zz[1:] != zz[:-1])
    grp = np.cumsum(start) - 1
    n = int(grp[-1]) + 1
    tot = np.bincount(grp, weights=coeff[order].real, minlength=n)
    if np.iscomplexobj(coeff):
        tot = tot + 1j * np.bincount(grp, weights=coeff[order].imag, minlength=n)
    keep = np.abs(tot) > tol
    first = np.flatnonzero(start)[keep]
    return TermTable(o[first].astype(np.int64), xx[first], zz[first], tot[keep])


def _one_body_images(n_active: int):
    """JW words of every spin-traced ``E^p_q`` padded to a common length."""
    p, q = np.indices((n_active, n_active)).reshape(2, -1)
    spin = np.arange(2)
    js = np.stack([2 * p[:, None] + spin, 2 * q[:, None] + spin], axis=2).reshape(-1, 2)
    x, z, c = ladder_words(js, np.array([True, False]))
    k = 2 * x.shape[1]
    shape = (n_active, n_active, k)
    return (x.reshape(shape).astype(np.uint64), z.reshape(shape).astype(np.uint64),
            c.reshape(shape).astype(complex))


def _word_phase(x1, z1, x2, z2) -> np.ndarray:
    """Power of ``i`` in the product of word arrays (see ``multiply_words``)."""
    X1, Y1, Z1 = x1 & ~z1, x1 & z1, ~x1 & z1
    X2, Y2, Z2 = x2 & ~z2, x2 & z2, ~x2 & z2
    plus = np.bitwise_count((X1 & Y2) | (Y1 & Z2) | (Z1 & X2)).astype(np.int64)
    minus = np.bitwise_count((X1 & Z2) | (Y1 & X2) | (Z1 & Y2)).astype(np.int64)
    return (plus - minus) % 4


_I_POW = np.array([1, 1j, -1, -1j])


def _product_terms(tuples: np.ndarray, n_qubits: int, tol: float) -> TermTable:
    """Ordered products of one-body operators, combining after every factor."""
    T, width = tuples.shape
    k = width // 2
    fx, fz, fc = _one_body_images(n_qubits // 2)
    owner = np.arange(T, dtype=np.int64)
    x = np.zeros(T, dtype=np.uint64)
    z = np.zeros(T, dtype=np.uint64)
    c = np.ones(T, dtype=complex)
    for f in range(k):
        p, q = tuples[owner, f], tuples[owner, k + f]
        bx, bz = fx[p, q], fz[p, q]
        ph = _word_phase(x[:, None], z[:, None], bx, bz)
        cc = c[:, None] * fc[p, q] * _I_POW[ph]
        keep = cc != 0
        t = _combine(np.broadcast_to(owner[:, None], bx.shape)[keep], (x[:, None] ^ bx)[keep],
                     (z[:, None] ^ bz)[keep], cc[keep], tol)
        owner, x, z, c = t.owner, t.x, t.z, t.coeff
    # Hermitian part of a sum of Hermitian words keeps the real coefficients
    return _combine(owner, x, z, c.real, tol)


def element_terms(tuples: np.ndarray, kind: str, n_qubits: int, chunk: int = 256,
                  tol: float = 1e-12) -> TermTable:
    """Hermitian observables of many tensor elements as one term table."""
    tuples = np.atleast_2d(np.asarray(tuples, dtype=np.int64))
    if kind == "pdm" and len(tuples):
        parts = []
        for s in range(0, len(tuples), 16 * chunk):
            t = _product_terms(tuples[s:s + 16 * chunk], n_qubits, tol)
            parts.append(TermTable(t.owner + s, t.x, t.z, t.coeff))
        return TermTable(*(np.concatenate([getattr(p, f) for p in parts])
                           for f in ("owner", "x", "z", "coeff")))
    parts = []
    for s in range(0, len(tuples), chunk):
        block = tuples[s:s + chunk]
        js, dag, n_spin = _ladder_layout(block, kind)
        x, z, c = ladder_words(js, dag)
        owner = np.repeat(np.arange(s, s + len(block)), n_spin * x.shape[1])
        # Hermitian part of a sum of Hermitian words keeps the real coefficients
        parts.append(_combine(owner, x.ravel().astype(np.uint64), z.ravel().astype(np.uint64),
                              c.real.ravel(), tol))
    if not parts:
        return _combine(*(np.zeros(0, dtype=t) for t in (np.int64, np.uint64, np.uint64, float)))
    return TermTable(*(np.concatenate([getattr(p, f) for p in parts])
                       for f in ("owner", "x", "z", "coeff")))


def element_observables(tuples: np.ndarray, kind: str, n_qubits: int, chunk: int = 256,
                        tol: float = 1e-12) -> list[PauliSum]:
    """Hermitian observables of many tensor elements in one vectorized pass."""
    tuples = np.atleast_2d(np.asarray(tuples, dtype=np.int64))
    return element_terms(tuples, kind, n_qubits, chunk, tol).to_sums(len(tuples), n_qubits)


def _odd_under(x: np.ndarray, group: SymmetryGroup) -> np.ndarray:
    """Which X parts anticommute with at least one generator."""
    odd = np.zeros(x.shape, dtype=bool)
    for g in group.generators:
        odd |= (np.bitwise_count(x & np.uint64(g)) & 1).astype(bool)
    return odd


@dataclass
class ObservableSet:
    """Measured observables keyed by ``(kind, canonical tuple)``.

    ``terms.owner`` indexes ``keys``; the identity word carries the constant.
    """

    n_active: int
    n_qubits: int
    keys: list
    terms: TermTable
    structural_zeros: list
    indices: dict  # (kind, rank) -> TupleIndex
    _sums: dict | None = field(default=None, repr=False)

    @property
    def observables(self) -> dict:
        if self._sums is None:
            self._sums = dict(zip(self.keys, self.terms.to_sums(len(self.keys), self.n_qubits)))
        return self._sums

    def keys_for(self, kind: str, rank: int) -> list:
        return [k for k in self.keys if k[0] == kind and len(k[1]) == 2 * rank]

    def word_count(self) -> int:
        t = self.terms
        nz = (t.x | t.z) != 0
        return int(np.unique(np.stack([t.x[nz], t.z[nz]]), axis=1).shape[1])


def rdm_observables(n_active: int, ranks=(1, 2, 3), kind: str = "rdm",
                    symmetry: SymmetryGroup | None = None,
                    include: np.ndarray | None = None) -> ObservableSet:
    """One Hermitian Pauli sum per canonical tuple of each requested rank.

    Args:
        n_active: active spatial orbitals (register has ``2 * n_active`` qubits).
        ranks: tensor ranks to include.
        kind: "rdm" for spin-traced RDMs, "pdm" for ordered products.
        symmetry: tuples whose observable anticommutes termwise with the group
            are recorded as structural zeros instead of being measured.
        include: optional boolean mask over the full tensor (single rank only);
            canonical tuples with no selected element are skipped.
    """
    if not ranks:
        raise ValueError("ranks must be non-empty")
    nq = 2 * n_active
    keys, zeros, indices, tables = [], [], {}, []
    for rank in sorted(set(ranks)):
        ti = canonical_tuples(n_active, rank, kind)
        indices[(kind, rank)] = ti
        rows = np.arange(len(ti.canonical))
        if include is not None:
            if len(ranks) != 1:
                raise ValueError("an include mask needs exactly one rank")
            wanted = np.zeros(len(ti.canonical), dtype=bool)
            wanted[ti.inverse[np.asarray(include).reshape(-1)]] = True
            zeros.extend((kind, tuple(t)) for t in ti.canonical[~wanted].tolist())
            rows = np.flatnonzero(wanted)
        t = element_terms(ti.canonical[rows], kind, nq)
        if symmetry is not None and symmetry.generators:
            # words odd under the symmetry have zero expectation in the sector
            t = t.take(~_odd_under(t.x, symmetry))
        live = np.zeros(len(rows), dtype=bool)
        live[t.owner] = True
        canon = ti.canonical[rows].tolist()
        zeros.extend((kind, tuple(canon[i])) for i in np.flatnonzero(~live))
        renum = np.cumsum(live) - 1 + len(keys)
        keys.extend((kind, tuple(canon[i])) for i in np.flatnonzero(live))
        tables.append(TermTable(renum[t.owner], t.x, t.z, t.coeff))
    terms = TermTable(*(np.concatenate([getattr(p, f) for p in tables])
                        for f in ("owner", "x", "z", "coeff")))
    return ObservableSet(n_active, nq, keys, terms, zeros, indices)


# Clifford basis changes in the symplectic picture (Aaronson-Gottesman update rules)

def _conj_h(x, z, r, a):
    xa, za = (x >> a) & 1, (z >> a) & 1
    r ^= xa & za
    x = (x & ~(1 << a)) | (za << a)
    z = (z & ~(1 << a)) | (xa << a)
    return x, z, r


def _conj_s(x, z, r, a):
    xa, za = (x >> a) & 1, (z >> a) & 1
    r ^= xa & za
    z ^= xa << a
    return x, z, r


def _conj_cnot(x, z, r, a, b):
    xa, za, xb, zb = (x >> a) & 1, (z >> a) & 1, (x >> b) & 1, (z >> b) & 1
    r ^= xa & zb & (xb ^ za ^ 1)
    x ^= xa << b
    z ^= zb << a
    return x, z, r


def conjugate_word(circuit: Circuit, x: int, z: int) -> tuple[int, int, int]:
    """``U P U^dagger`` for a Clifford circuit ``U``; returns ``(x, z, sign_bit)``."""
    r = 0
    for g in circuit.gates:
        if g.name == "H":
            x, z, r = _conj_h(x, z, r, g.qubits[0])
        elif g.name == "S":
            x, z, r = _conj_s(x, z, r, g.qubits[0])
        elif g.name == "SDG":
            for _ in range(3):
                x, z, r = _conj_s(x, z, r, g.qubits[0])
        elif g.name == "CNOT":
            x, z, r = _conj_cnot(x, z, r, *g.qubits)
        elif g.name in ("X", "Y", "Z"):
            px = 1 if g.name in ("X", "Y") else 0
            pz = 1 if g.name in ("Z", "Y") else 0
            a = g.qubits[0]
            # Pauli conjugation flips the sign when the words anticommute
            r ^= (((x >> a) & 1) & pz) ^ (((z >> a) & 1) & px)
        else:
            raise PlanInvariantError(f"non-Clifford gate {g.name} in a basis change")
    return x, z, r


def _gf2_independent(words):
    """Indices of a maximal independent subset of symplectic vectors."""
    basis: dict[int, int] = {}
    keep = []
    for i, (x, z) in enumerate(words):
        v = (x << 64) | z
        while v:
            top = v.bit_length() - 1
            if top in basis:
                v ^= basis[top]
            else:
                basis[top] = v
                keep.append(i)
                break
    return keep


def diagonalizing_circuit(words, n_qubits: int) -> Circuit:
    """Clifford circuit mapping every word of a commuting set to an I/Z word."""
    gens = [words[i] for i in _gf2_independent(words)]
    rows = [(x, z) for x, z in gens]
    circ = Circuit(n_qubits)
    pivots: list[int] = []

    def push(gate_fn, *qs):
        nonlocal rows
        getattr(circ, gate_fn)(*qs)
        sub = Circuit(n_qubits)
        getattr(sub, gate_fn)(*qs)
        rows = [conjugate_word(sub, x, z)[:2] for x, z in rows]

    for i in range(len(rows)):
        x, z = rows[i]
        for q in pivots:
            if (x >> q) & 1:
                raise PlanInvariantError("set words do not commute")
        # strip pivot qubits (they carry at most Z, removable by earlier rows)
        for j, q in enumerate(pivots):
            if (z >> q) & 1:
                z ^= rows[j][1]
                x ^= rows[j][0]
        rows[i] = (x, z)
        free = [q for q in range(n_qubits) if q not in pivots and ((x | z) >> q) & 1]
        if not free:
            raise PlanInvariantError("dependent generator in a commuting set")
        xq = [q for q in free if (x >> q) & 1]
        if xq:
            q = xq[0]
            if (z >> q) & 1:
                push("sdg", q)
            for j in free:
                if j == q:
                    continue
                xj, zj = (rows[i][0] >> j) & 1, (rows[i][1] >> j) & 1
                if zj and not xj:
                    push("h", j)
                elif xj and zj:
                    push("sdg", j)
                push("cnot", q, j)
            push("h", q)
        else:
            q = free[0]
            for j in free[1:]:
                push("cnot", j, q)
        pivots.append(q)
    for x, _ in (conjugate_word(circ, x, z)[:2] for x, z in words):
        if x:
            raise PlanInvariantError("basis change leaves an X component")
    return circ


def qubitwise_circuit(words, n_qubits: int) -> Circuit:
    circ = Circuit(n_qubits)
    for q in range(n_qubits):
        letters = {((x >> q) & 1, (z >> q) & 1) for x, z in words} - {(0, 0), (0, 1)}
        if len(letters) > 1:
            raise PlanInvariantError(f"qubit {q} carries incompatible letters")
        if letters == {(1, 0)}:
            circ.h(q)
        elif letters == {(1, 1)}:
            circ.sdg(q).h(q)
    return circ


# coloring

def _conflicts(kind: str, x: int, z: int, xs: np.ndarray, zs: np.ndarray) -> np.ndarray:
    ux, uz = np.uint64(x), np.uint64(z)
    if kind == "general":
        return (np.bitwise_count((ux & zs) ^ (uz & xs)) & 1).astype(bool)
    both = (ux | uz) & (xs | zs)
    return ((ux ^ xs) | (uz ^ zs)) & both != 0


RLF_MAX_WORDS = 12000  # dense conflict matrix limit (bytes = words**2)


def _conflict_matrix(xs: np.ndarray, zs: np.ndarray, strategy: str, chunk: int = 2048) -> np.ndarray:
    m = xs.size
    out = np.empty((m, m), dtype=bool)
    for s in range(0, m, chunk):
        bx, bz = xs[s:s + chunk, None], zs[s:s + chunk, None]
        if strategy == "general":
            out[s:s + chunk] = (np.bitwise_count((bx & zs[None]) ^ (bz & xs[None])) & 1).astype(bool)
        else:
            out[s:s + chunk] = ((bx ^ xs[None]) | (bz ^ zs[None])) & ((bx | bz) & (xs[None] | zs[None])) != 0
    return out


def _largest_first(xs: np.ndarray, zs: np.ndarray, labels: list, strategy: str, chunk: int = 2048) -> np.ndarray:
    m = xs.size
    deg = np.zeros(m, dtype=np.int64)
    for s in range(0, m, chunk):
        deg[s:s + chunk] = _conflict_matrix_rows(xs, zs, s, chunk, strategy).sum(axis=1)
    order = sorted(range(m), key=lambda i: (-deg[i], labels[i]))
    color = np.full(m, -1, dtype=np.int64)
    for i in order:
        clash = _conflicts(strategy, int(xs[i]), int(zs[i]), xs, zs) & (color >= 0)
        used = set(color[clash].tolist())
        c = 0
        while c in used:
            c += 1
        color[i] = c
    return color


def _conflict_matrix_rows(xs, zs, s, chunk, strategy):
    bx, bz = xs[s:s + chunk, None], zs[s:s + chunk, None]
    if strategy == "general":
        return (np.bitwise_count((bx & zs[None]) ^ (bz & xs[None])) & 1).astype(bool)
    return ((bx ^ xs[None]) | (bz ^ zs[None])) & ((bx | bz) & (xs[None] | zs[None])) != 0


def _recursive_largest_first(conf: np.ndarray) -> np.ndarray:
    """RLF: grow one color class at a time from the highest-degree vertex.

    Each step adds the candidate with most conflicts into the excluded pool
    (fewest into the candidate pool on ties, then lowest index).
    """
    # conf is symmetric, so row slices stand in for column slices
    m = conf.shape[0]
    color = np.full(m, -1, dtype=np.int64)
    left = np.ones(m, dtype=bool)
    deg = conf.sum(axis=1, dtype=np.int64)
    c = 0
    while left.any():
        idx = np.flatnonzero(left)
        v = idx[np.argmax(deg[idx])]
        color[v], left[v] = c, False
        excl = left & conf[v]
        cand = left & ~conf[v]
        to_x = conf[excl].sum(axis=0, dtype=np.int64)
        to_c = conf[cand].sum(axis=0, dtype=np.int64)
        while cand.any():
            idx = np.flatnonzero(cand)
            u = idx[np.lexsort((to_c[idx], -to_x[idx]))[0]]
            color[u], left[u], cand[u] = c, False, False
            to_c -= conf[u]
            moved = cand & conf[u]
            if moved.any():
                d = conf[moved].sum(axis=0, dtype=np.int64)
                to_x += d
                to_c -= d
                cand &= ~moved
        deg -= conf[color == c].sum(axis=0, dtype=np.int64)
        c += 1
    return color


def color_words(words, n_qubits: int, strategy: str = "general", method: str = "auto") -> np.ndarray:
    """Greedy coloring of the word-incompatibility graph.

    Words are first sorted lexicographically by their string, which fixes all
    tie-breaks. ``method`` is "rlf" (recursive largest first), "largest-first"
    (first-fit in decreasing degree order) or "auto" (RLF while the dense
    conflict matrix stays small). Returns the color (set id) of each word.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"strategy must be one of {STRATEGIES}")
    m = len(words)
    if m == 0:
        return np.zeros(0, dtype=np.int64)
    labels = [word_to_string(int(x), int(z), n_qubits) for x, z in words]
    perm = np.array(sorted(range(m), key=labels.__getitem__))
    xs = np.array([words[i][0] for i in perm], dtype=np.uint64)
    zs = np.array([words[i][1] for i in perm], dtype=np.uint64)
    if method == "auto":
        method = "rlf" if m <= RLF_MAX_WORDS else "largest-first"
    if method == "rlf":
        col = _recursive_largest_first(_conflict_matrix(xs, zs, strategy))
    elif method == "largest-first":
        col = _largest_first(xs, zs, [labels[i] for i in perm], strategy)
    else:
        raise ValueError(f"unknown coloring method {method!r}")
    out = np.empty(m, dtype=np.int64)
    out[perm] = col
    return out


@dataclass
class MeasurementSet:
    words: list  # (x, z) words estimated from this set
    basis_change: Circuit
    zmasks: list  # diagonal image of each word
    signs: list  # +-1 from the conjugation
    syndromes: list = field(default_factory=list)  # (zmask, sign, expected) for PMSV


@dataclass
class MeasurementPlan:
    """Commuting sets plus the linear map from word estimates to elements.

    Element ``keys[owner[i]]`` receives ``coeffs[i]`` times word ``positions[i]``
    of set ``set_ids[i]``, on top of its constant.
    """

    n_qubits: int
    strategy: str
    sets: list
    keys: list
    constants: np.ndarray
    owner: np.ndarray
    set_ids: np.ndarray
    positions: np.ndarray
    coeffs: np.ndarray
    structural_zeros: list = field(default_factory=list)
    pmsv_group: SymmetryGroup | None = None

    @property
    def n_sets(self) -> int:
        return len(self.sets)

    @property
    def n_words(self) -> int:
        return sum(len(s.words) for s in self.sets)

    @property
    def element_map(self) -> dict:
        """key -> list of (set id, word position, coefficient)."""
        out = {k: [] for k in self.keys}
        for o, s, p, c in zip(self.owner.tolist(), self.set_ids.tolist(),
                              self.positions.tolist(), self.coeffs.tolist()):
            out[self.keys[o]].append((s, p, c))
        return out

    def check_commuting(self) -> bool:
        """Exhaustive pairwise check of every set (general commutation)."""
        for s in self.sets:
            xs = np.array([w[0] for w in s.words], dtype=np.uint64)
            zs = np.array([w[1] for w in s.words], dtype=np.uint64)
            for x, z in s.words:
                if _conflicts("general", x, z, xs, zs).any():
                    return False
        return True


def group_elements(group: SymmetryGroup) -> list[tuple[int, int]]:
    """Every element of the group as ``(z mask, sector eigenvalue)``."""
    out = [(0, 1)]
    for g, s in zip(group.generators, group.sector):
        out += [(z ^ g, v * s) for z, v in out]
    return out


def _sector_reduce_terms(t: TermTable, group: SymmetryGroup) -> TermTable:
    elems = group_elements(group)
    gz = np.array([z for z, _ in elems], dtype=np.uint64)
    gs = np.array([s for _, s in elems], dtype=float)
    t = t.take(~_odd_under(t.x, group))
    j = np.argmin(t.z[:, None] ^ gz[None, :], axis=1)
    g = gz[j]
    # P G = i^k P' with k = #(Y on G) - #(X on G), even for commuting words
    k = (np.bitwise_count(t.x & t.z & g).astype(np.int64)
         - np.bitwise_count(t.x & ~t.z & g).astype(np.int64)) % 4
    coeff = t.coeff * (1 - (k & 2)) * gs[j]
    return _combine(t.owner, t.x, t.z ^ g, coeff)


def sector_reduce(observables: dict, group: SymmetryGroup) -> dict:
    """Rewrite observables on one representative word per symmetry coset.

    In a sector eigenstate ``<P G> = s_G <P>``, so words differing by a group
    element carry the same information up to a sign. Words anticommuting with
    a generator have zero expectation and are dropped. This is the in-register
    equivalent of qubit tapering.
    """
    if not group.generators:
        return dict(observables)
    if len(group.sector) != len(group.generators):
        raise ValueError("sector reduction needs sector eigenvalues")
    keys = list(observables)
    nq = next(iter(observables.values())).n_qubits if keys else 0
    t = _sector_reduce_terms(TermTable.from_sums([observables[k] for k in keys]), group)
    return dict(zip(keys, t.to_sums(len(keys), nq)))


def plan_measurements(observables: dict | ObservableSet, strategy: str = "general",
                      symmetry: SymmetryGroup | None = None, pmsv: bool = False,
                      n_qubits: int | None = None, coloring: str = "auto") -> MeasurementPlan:
    """Partition all observable words into commuting sets with basis changes.

    Args:
        observables: key -> PauliSum, or an :class:`ObservableSet`.
        strategy: "general" (full commutation, Clifford diagonalization) or
            "qubitwise" (single-qubit rotations only).
        symmetry: sector symmetry group; words are merged modulo the group.
        pmsv: measure the group generators alongside every compatible set.
        coloring: see :func:`color_words`.
    """
    zeros = []
    if isinstance(observables, ObservableSet):
        zeros = list(observables.structural_zeros)
        n_qubits = observables.n_qubits
        keys, terms = list(observables.keys), observables.terms
    else:
        keys = list(observables)
        if n_qubits is None:
            n_qubits = next(iter(observables.values())).n_qubits if keys else 0
        terms = TermTable.from_sums([observables[k] for k in keys])
    if pmsv and (symmetry is None or not symmetry.generators):
        raise ValueError("symmetry verification needs a symmetry group with generators")
    if symmetry is not None and symmetry.generators:
        if len(symmetry.sector) != len(symmetry.generators):
            raise ValueError("sector reduction needs sector eigenvalues")
        terms = _sector_reduce_terms(terms, symmetry)
    ident = (terms.x | terms.z) == 0
    consts = np.bincount(terms.owner[ident], weights=terms.coeff[ident], minlength=len(keys))
    t = terms.take(~ident)
    if 2 * n_qubits <= 64:
        packed, inv = np.unique((t.x << np.uint64(n_qubits)) | t.z, return_inverse=True)
        lo = np.uint64((1 << n_qubits) - 1)
        uniq = np.stack([packed >> np.uint64(n_qubits), packed & lo])
    else:
        uniq, inv = np.unique(np.stack([t.x, t.z]), axis=1, return_inverse=True)
    inv = inv.reshape(-1)
    labels = [word_to_string(x, z, n_qubits) for x, z in zip(uniq[0].tolist(), uniq[1].tolist())]
    order = np.array(sorted(range(len(labels)), key=labels.__getitem__), dtype=np.int64)
    words = [(int(uniq[0, i]), int(uniq[1, i])) for i in order]
    color = color_words(words, n_qubits, strategy, coloring)
    n_sets = int(color.max()) + 1 if len(words) else 0
    # position of each word inside its set, keeping lexicographic order
    pos = np.zeros(len(words), dtype=np.int64)
    members: list[list] = [[] for _ in range(n_sets)]
    for i, (w, c) in enumerate(zip(words, color.tolist())):
        pos[i] = len(members[c])
        members[c].append(w)
    rank = np.empty(len(words), dtype=np.int64)
    rank[order] = np.arange(len(words))
    sets = []
    builder = diagonalizing_circuit if strategy == "general" else qubitwise_circuit
    for ws in members:
        circ = builder(ws, n_qubits)
        zmasks, signs = [], []
        for x, z in ws:
            cx, cz, r = conjugate_word(circ, x, z)
            if cx:
                raise PlanInvariantError("word not diagonal after basis change")
            zmasks.append(cz)
            signs.append(-1 if r else 1)
        syn = []
        if pmsv:
            for g, sv in zip(symmetry.generators, symmetry.sector):
                gx, gz, r = conjugate_word(circ, 0, g)
                if gx == 0:
                    syn.append((gz, -1 if r else 1, sv))
        sets.append(MeasurementSet(ws, circ, zmasks, signs, syn))
    r = rank[inv]
    return MeasurementPlan(n_qubits, strategy, sets, keys, consts, t.owner.copy(), color[r], pos[r],
                           t.coeff.copy(), zeros, symmetry if pmsv and symmetry is not None else None)


@dataclass
class Estimates:
    values: dict
    word_values: list  # per set: array of word estimates
    retained: list  # per set: fraction of shots kept
    shots: int | None = None
    seed: int | None = None

    @property
    def min_retained(self) -> float:
        return min(self.retained) if self.retained else 1.0


def execute_plan(plan: MeasurementPlan, state: StateVector, mode: str = "exact", shots: int = 0,
                 seed: int | None = None, noise: NoiseModel | None = None,
                 pmsv: bool = False) -> Estimates:
    """Evaluate every planned element exactly or from sampled shots.

    In shot mode each set gets ``shots`` samples from its own child seed, so
    results do not depend on set execution order. With ``pmsv`` shots whose
    measured syndromes disagree with the sector are discarded.
    """
    if state.n_qubits != plan.n_qubits:
        raise ValueError("plan and state register sizes differ")
    word_vals, retained = [], []
    if mode == "exact":
        for s in plan.sets:
            word_vals.append(word_expectations(state.amplitudes, s.words).real)
            retained.append(1.0)
    elif mode == "shots":
        if shots <= 0 or seed is None:
            raise ValueError("shot mode needs a positive shot count and an explicit seed")
        children = np.random.SeedSequence(seed).spawn(len(plan.sets))
        for s, ss in zip(plan.sets, children):
            rng = np.random.default_rng(ss)
            table = sample(state, s.basis_change, shots, rng, noise)
            outcomes = np.repeat(table.outcomes, table.counts)
            keep = np.ones(outcomes.size, dtype=bool)
            if pmsv and s.syndromes:
                par = parities(outcomes, [m for m, _, _ in s.syndromes])
                for row, (_, sign, want) in zip(par, s.syndromes):
                    keep &= (sign * row) == want
            kept = outcomes[keep]
            retained.append(kept.size / outcomes.size)
            if kept.size == 0:
                word_vals.append(np.full(len(s.words), np.nan))
                continue
            par = parities(kept, s.zmasks)
            word_vals.append(np.asarray(s.signs) * par.mean(axis=1))
    else:
        raise ValueError("mode must be 'exact' or 'shots'")
    offsets = np.cumsum([0] + [len(s.words) for s in plan.sets])
    flat = np.concatenate(word_vals) if word_vals else np.zeros(0)
    contrib = plan.coeffs * flat[offsets[plan.set_ids] + plan.positions] if flat.size else plan.coeffs
    tot = plan.constants + np.bincount(plan.owner, weights=contrib, minlength=len(plan.keys))
    values = dict(zip(plan.keys, tot.tolist()))
    return Estimates(values, word_vals, retained, shots if mode == "shots" else None, seed)


def assemble_tensor(values: dict, observables: ObservableSet, kind: str, rank: int) -> np.ndarray:
    """Full tensor of one kind and rank from canonical estimates (fan-out)."""
    n = observables.n_active
    ti = observables.indices[(kind, rank)]
    zero_keys = set(observables.structural_zeros)
    vals = np.zeros(len(ti.canonical))
    for row, t in enumerate(ti.canonical):
        key = (kind, tuple(int(i) for i in t))
        if key in zero_keys:
            continue
        if key not in values or not np.isfinite(values[key]):
            raise AssemblyError(f"missing estimate for {kind} element {key[1]}")
        vals[row] = values[key]
    return vals[ti.inverse].reshape((n,) * (2 * rank))


def assemble_rdms(values: dict, observables: ObservableSet, n_electrons: int,
                  provenance: str = "exact") -> RDMSet:
    """Fill full tensors from canonical estimates by symmetry fan-out.

    Ranks that vanish for the electron count and were not measured are zero.
    """
    n = observables.n_active
    tensors = {key: assemble_tensor(values, observables, *key) for key in observables.indices}
    g = {r: tensors.get(("rdm", r)) for r in (1, 2, 3, 4)}
    for r in (3, 4):
        if g[r] is None and n_electrons < r and g[2] is not None:
            g[r] = np.zeros((n,) * (2 * r))
    return RDMSet(n, n_electrons, g[1], g[2], g[3], g[4], tensors.get(("pdm", 4)), provenance)


# measurement-cost report in the layout of the reference circuit-count table
REFERENCE_COUNTS = {
    (4, "None"): (13, 31), (4, "CU(4)"): (13, 31), (4, "CU(4)-PDM-filtered"): (13, 60),
    (5, "None"): (23, 79), (5, "CU(4)"): (23, 63), (5, "CU(4)-PDM-filtered"): (23, 132),
}
APPROXIMATIONS = ("None", "CU(4)", "CU(4)-PDM-filtered")


@dataclass
class PlanCostRow:
    n_active_electrons: int
    n_active: int
    approximation: str
    vqe_sets: int
    rdm_sets: int
    rdm_words: int
    reference_vqe: int | None
    reference_rdm: int | None

    def as_dict(self) -> dict:
        return {
            "active_space": f"({self.n_active_electrons},{self.n_active})",
            "approximation": self.approximation,
            "vqe_sets": self.vqe_sets,
            "rdm_sets": self.rdm_sets,
            "rdm_words": self.rdm_words,
            "reference_vqe": "" if self.reference_vqe is None else self.reference_vqe,
            "reference_rdm": "" if self.reference_rdm is None else self.reference_rdm,
        }


def plan_cost_rows(n_active: int, n_active_electrons: int, hamiltonian: PauliSum,
                   symmetry: SymmetryGroup | None = None, pdm_mask: np.ndarray | None = None,
                   strategy: str = "general", approximations=APPROXIMATIONS) -> list[PlanCostRow]:
    """Circuit counts for VQE energy and RDM measurement per 4-RDM approximation.

    "None" measures ranks 1-4 jointly, "CU(4)" ranks 1-3, and the PDM-filtered
    variant adds a separate plan for the 4-PDM elements selected by ``pdm_mask``.
    """
    vqe = plan_measurements({"H": hamiltonian}, strategy, symmetry=symmetry)
    cache: dict = {}

    def cost(ranks, kind="rdm", include=None):
        key = (ranks, kind, include is not None)
        if key not in cache:
            obs = rdm_observables(n_active, ranks, kind, symmetry=symmetry, include=include)
            plan = plan_measurements(obs, strategy, symmetry=symmetry)
            cache[key] = (plan.n_sets, plan.n_words)
        return cache[key]

    rows = []
    for approx in approximations:
        if approx == "None":
            sets, words = cost((1, 2, 3, 4))
        elif approx == "CU(4)":
            sets, words = cost((1, 2, 3))
        elif approx == "CU(4)-PDM-filtered":
            if pdm_mask is None:
                raise ValueError("the PDM-filtered row needs a 4-PDM selection mask")
            s3, w3 = cost((1, 2, 3))
            s4, w4 = cost((4,), "pdm", pdm_mask)
            sets, words = s3 + s4, w3 + w4
        else:
            raise ValueError(f"unknown approximation {approx!r}")
        ref = REFERENCE_COUNTS.get((n_active, approx)) if n_active_electrons == 4 else None
        rows.append(PlanCostRow(n_active_electrons, n_active, approx, vqe.n_sets, sets, words,
                                ref[0] if ref else None, ref[1] if ref else None))
    return rows
