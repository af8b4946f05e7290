"""Pauli words in symplectic form and real/complex linear combinations of them.

A word on ``n`` qubits is a pair of integers ``(x, z)``; bit ``j`` of each
refers to qubit ``j`` and the operator is ``i**popcount(x & z) X**x Z**z``,
so ``x = z = 1`` on a qubit is exactly ``Y``. In letter strings character
``j`` acts on qubit ``j``.
"""

from __future__ import annotations

import json
from typing import Iterable, Iterator, Mapping

import numpy as np
import scipy.sparse as sp

PRUNE_TOL = 1e-12

_LETTER = {(0, 0): "I", (1, 0): "X", (1, 1): "Y", (0, 1): "Z"}
_BITS = {v: k for k, v in _LETTER.items()}


def popcount(v: int) -> int:
    return int(v).bit_count()


def word_from_string(word: str) -> tuple[int, int]:
    """Convert a letter string such as ``"IZZI"`` to ``(x, z)``."""
    x = z = 0
    for j, ch in enumerate(word.upper()):
        try:
            bx, bz = _BITS[ch]
        except KeyError as exc:
            raise ValueError(f"invalid Pauli letter {ch!r} in {word!r}") from exc
        x |= bx << j
        z |= bz << j
    return x, z


def word_to_string(x: int, z: int, n_qubits: int) -> str:
    return "".join(_LETTER[((x >> j) & 1, (z >> j) & 1)] for j in range(n_qubits))


def multiply_words(x1: int, z1: int, x2: int, z2: int) -> tuple[int, int, int]:
    """Product of two words as ``(k, x, z)`` meaning ``i**k`` times word ``(x, z)``."""
    X1, Y1, Z1 = x1 & ~z1, x1 & z1, ~x1 & z1
    X2, Y2, Z2 = x2 & ~z2, x2 & z2, ~x2 & z2
    plus = popcount((X1 & Y2) | (Y1 & Z2) | (Z1 & X2))
    minus = popcount((X1 & Z2) | (Y1 & X2) | (Z1 & Y2))
    return (plus - minus) % 4, x1 ^ x2, z1 ^ z2


def words_commute(x1: int, z1: int, x2: int, z2: int) -> bool:
    return popcount((x1 & z2) ^ (z1 & x2)) % 2 == 0


def anticommute_mask(x: int, z: int, xs: np.ndarray, zs: np.ndarray) -> np.ndarray:
    """Boolean vector: which of the words ``(xs, zs)`` anticommute with ``(x, z)``."""
    v = (np.uint64(x) & zs) ^ (np.uint64(z) & xs)
    return (np.bitwise_count(v) & 1).astype(bool)


_I_POW = np.array([1, 1j, -1, -1j])


def _parity_signs(z: int, dim: int) -> np.ndarray:
    k = np.arange(dim, dtype=np.uint64)
    return 1.0 - 2.0 * (np.bitwise_count(k & np.uint64(z)) & 1)


def apply_word(x: int, z: int, psi: np.ndarray) -> np.ndarray:
    """Return ``P psi`` for the word ``(x, z)``."""
    dim = psi.shape[0]
    phase = _I_POW[popcount(x & z) % 4]
    out = np.empty_like(psi, dtype=complex)
    idx = np.arange(dim) ^ x
    out[idx] = phase * _parity_signs(z, dim) * psi
    return out


def word_matrix(x: int, z: int, n_qubits: int) -> sp.csr_matrix:
    """Sparse matrix of a word, columns are input basis states."""
    dim = 1 << n_qubits
    cols = np.arange(dim)
    rows = cols ^ x
    vals = _I_POW[popcount(x & z) % 4] * _parity_signs(z, dim)
    return sp.csr_matrix((vals, (rows, cols)), shape=(dim, dim))


class PauliSum:
    """Linear combination of Pauli words, immutable after construction.

    Coefficients are stored as complex numbers internally; observables built
    from Hermitian operators have real coefficients, see :meth:`real`.
    """

    __slots__ = ("n_qubits", "_terms")

    def __init__(self, n_qubits: int, terms: Mapping[tuple[int, int], complex] | None = None,
                 tol: float = PRUNE_TOL):
        self.n_qubits = int(n_qubits)
        clean = {}
        if terms:
            lim = 1 << self.n_qubits
            for (x, z), c in terms.items():
                if x >= lim or z >= lim:
                    raise ValueError(f"word acts beyond {self.n_qubits} qubits")
                if abs(c) > tol:
                    clean[(int(x), int(z))] = complex(c)
        self._terms = clean

    # construction helpers
    @classmethod
    def from_strings(cls, items: Mapping[str, complex] | Iterable[tuple[str, complex]]) -> "PauliSum":
        items = list(items.items()) if isinstance(items, Mapping) else list(items)
        if not items:
            raise ValueError("cannot infer qubit count from an empty list")
        n = len(items[0][0])
        acc: dict = {}
        for w, c in items:
            if len(w) != n:
                raise ValueError("all words must have the same length")
            key = word_from_string(w)
            acc[key] = acc.get(key, 0) + c
        return cls(n, acc)

    @classmethod
    def identity(cls, n_qubits: int, coeff: complex = 1.0) -> "PauliSum":
        return cls(n_qubits, {(0, 0): coeff})

    @classmethod
    def zero(cls, n_qubits: int) -> "PauliSum":
        return cls(n_qubits)

    # container protocol
    @property
    def terms(self) -> dict:
        return dict(self._terms)

    def __len__(self) -> int:
        return len(self._terms)

    def __iter__(self) -> Iterator[tuple[tuple[int, int], complex]]:
        return iter(sorted(self._terms.items()))

    def words(self) -> list[tuple[int, int]]:
        return sorted(self._terms)

    def coefficient(self, word: str | tuple[int, int]) -> complex:
        key = word_from_string(word) if isinstance(word, str) else word
        return self._terms.get(key, 0.0)

    def constant(self) -> complex:
        return self._terms.get((0, 0), 0.0)

    # algebra
    def _check(self, other: "PauliSum"):
        if self.n_qubits != other.n_qubits:
            raise ValueError(f"qubit counts differ: {self.n_qubits} vs {other.n_qubits}")

    def __add__(self, other):
        if isinstance(other, (int, float, complex)):
            other = PauliSum.identity(self.n_qubits, other)
        self._check(other)
        acc = dict(self._terms)
        for k, c in other._terms.items():
            acc[k] = acc.get(k, 0) + c
        return PauliSum(self.n_qubits, acc)

    __radd__ = __add__

    def __neg__(self):
        return PauliSum(self.n_qubits, {k: -c for k, c in self._terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, float, complex, np.number)):
            return PauliSum(self.n_qubits, {k: c * other for k, c in self._terms.items()})
        self._check(other)
        acc: dict = {}
        for (x1, z1), c1 in self._terms.items():
            for (x2, z2), c2 in other._terms.items():
                k, x, z = multiply_words(x1, z1, x2, z2)
                acc[(x, z)] = acc.get((x, z), 0) + c1 * c2 * _I_POW[k]
        return PauliSum(self.n_qubits, acc)

    def __rmul__(self, other):
        if isinstance(other, (int, float, complex, np.number)):
            return self * other
        return NotImplemented

    def __matmul__(self, other):
        return self * other

    def adjoint(self) -> "PauliSum":
        return PauliSum(self.n_qubits, {k: np.conj(c) for k, c in self._terms.items()})

    def is_hermitian(self, tol: float = 1e-10) -> bool:
        return all(abs(c.imag) < tol for c in self._terms.values())

    def real(self, tol: float = 1e-10) -> "PauliSum":
        """Drop imaginary parts after checking they are negligible."""
        bad = max((abs(c.imag) for c in self._terms.values()), default=0.0)
        if bad >= tol:
            raise ValueError(f"operator is not Hermitian: imaginary coefficient {bad:.3e}")
        return PauliSum(self.n_qubits, {k: c.real for k, c in self._terms.items()})

    def allclose(self, other: "PauliSum", atol: float = 1e-10) -> bool:
        diff = self - other
        return all(abs(c) < atol for c in diff._terms.values())

    def commutes_termwise(self, x: int, z: int) -> bool:
        return all(words_commute(x, z, a, b) for a, b in self._terms)

    # numerics
    def to_matrix(self, sparse: bool = True):
        dim = 1 << self.n_qubits
        mat = sp.csr_matrix((dim, dim), dtype=complex)
        for (x, z), c in self._terms.items():
            mat = mat + c * word_matrix(x, z, self.n_qubits)
        return mat if sparse else mat.toarray()

    def apply(self, psi: np.ndarray) -> np.ndarray:
        out = np.zeros(psi.shape[0], dtype=complex)
        for (x, z), c in self._terms.items():
            out += c * apply_word(x, z, psi)
        return out

    # serialization
    def to_list(self) -> list:
        out = []
        for (x, z), c in self:
            val = c.real if abs(c.imag) < PRUNE_TOL else [c.real, c.imag]
            out.append([word_to_string(x, z, self.n_qubits), val])
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_list())

    @classmethod
    def from_json(cls, text: str) -> "PauliSum":
        items = []
        for w, v in json.loads(text):
            items.append((w, complex(*v) if isinstance(v, list) else v))
        return cls.from_strings(items)

    def __repr__(self) -> str:
        body = " + ".join(f"{c.real:+.6g}*{word_to_string(x, z, self.n_qubits)}" for (x, z), c in list(self)[:6])
        more = "" if len(self) <= 6 else f" + ... ({len(self)} terms)"
        return f"PauliSum({body}{more})"


def word_expectations(psi: np.ndarray, words: Iterable[tuple[int, int]]) -> np.ndarray:
    """Exact expectation values ``<psi|P|psi>`` for many words (real parts).

    Words sharing an X mask reuse the same overlap vector.
    """
    words = list(words)
    dim = psi.shape[0]
    out = np.empty(len(words))
    by_x: dict[int, list[int]] = {}
    for i, (x, _) in enumerate(words):
        by_x.setdefault(x, []).append(i)
    k = np.arange(dim, dtype=np.uint64)
    for x, idxs in by_x.items():
        overlap = np.conj(psi[np.arange(dim) ^ x]) * psi
        for i in idxs:
            z = words[i][1]
            sign = 1.0 - 2.0 * (np.bitwise_count(k & np.uint64(z)) & 1)
            val = _I_POW[popcount(x & z) % 4] * np.dot(overlap, sign)
            out[i] = val.real
    return out
