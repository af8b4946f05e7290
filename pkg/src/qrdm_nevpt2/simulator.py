"""Dense statevector simulator with shot sampling and a simple noise model.

Basis index bit ``j`` is qubit ``j``; a measured bitstring is printed with
qubit 0 first, matching Pauli letter strings.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .pauli import PauliSum, apply_word, word_expectations, word_from_string, word_to_string

NORM_TOL = 1e-10

_SQ = {
    "H": np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2),
    "S": np.array([[1, 0], [0, 1j]], dtype=complex),
    "SDG": np.array([[1, 0], [0, -1j]], dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}
_INVERSE = {"H": "H", "S": "SDG", "SDG": "S", "X": "X", "Y": "Y", "Z": "Z", "CNOT": "CNOT"}


@dataclass
class StateVector:
    """Normalized amplitudes over ``2**n_qubits`` basis states."""

    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        amp = np.asarray(self.amplitudes, dtype=complex)
        if amp.shape != (1 << self.n_qubits,):
            raise ValueError(f"expected {1 << self.n_qubits} amplitudes, got {amp.shape}")
        norm = np.linalg.norm(amp)
        if abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"state is not normalized (norm {norm:.12f})")
        self.amplitudes = amp

    @classmethod
    def basis(cls, n_qubits: int, index: int = 0) -> "StateVector":
        amp = np.zeros(1 << n_qubits, dtype=complex)
        amp[index] = 1.0
        return cls(n_qubits, amp)

    @classmethod
    def from_bits(cls, bits: str) -> "StateVector":
        """Basis state from a string with qubit 0 first."""
        return cls.basis(len(bits), int(bits[::-1], 2))

    def copy(self) -> "StateVector":
        return StateVector(self.n_qubits, self.amplitudes.copy())

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def fidelity(self, other: "StateVector") -> float:
        return float(abs(np.vdot(self.amplitudes, other.amplitudes)) ** 2)


@dataclass(frozen=True)
class Gate:
    """One circuit instruction.

    ``name`` is one of H, S, SDG, X, Y, Z, CNOT, RZ, PAULI_EXP. For PAULI_EXP
    ``word`` is a letter string and the gate is ``exp(-i theta/2 P)``.
    """

    name: str
    qubits: tuple = ()
    theta: float = 0.0
    word: str = ""

    def inverse(self) -> "Gate":
        if self.name in ("RZ", "PAULI_EXP"):
            return Gate(self.name, self.qubits, -self.theta, self.word)
        return Gate(_INVERSE[self.name], self.qubits)

    def support(self) -> tuple:
        if self.name == "PAULI_EXP":
            return tuple(j for j, ch in enumerate(self.word) if ch != "I")
        return self.qubits


@dataclass
class Circuit:
    n_qubits: int
    gates: list = field(default_factory=list)

    def _add(self, gate: Gate) -> "Circuit":
        for q in gate.qubits:
            if not 0 <= q < self.n_qubits:
                raise ValueError(f"gate {gate.name} targets qubit {q} outside {self.n_qubits}")
        if gate.word and len(gate.word) != self.n_qubits:
            raise ValueError("Pauli word length must equal the qubit count")
        self.gates.append(gate)
        return self

    def h(self, q): return self._add(Gate("H", (q,)))
    def s(self, q): return self._add(Gate("S", (q,)))
    def sdg(self, q): return self._add(Gate("SDG", (q,)))
    def x(self, q): return self._add(Gate("X", (q,)))
    def z(self, q): return self._add(Gate("Z", (q,)))
    def rz(self, q, theta): return self._add(Gate("RZ", (q,), float(theta)))

    def cnot(self, control, target):
        if control == target:
            raise ValueError("CNOT control and target must differ")
        return self._add(Gate("CNOT", (control, target)))

    def pauli_exp(self, word: str, theta: float):
        return self._add(Gate("PAULI_EXP", (), float(theta), word))

    def append(self, other: "Circuit") -> "Circuit":
        if other.n_qubits != self.n_qubits:
            raise ValueError("circuit widths differ")
        self.gates.extend(other.gates)
        return self

    def inverse(self) -> "Circuit":
        return Circuit(self.n_qubits, [g.inverse() for g in reversed(self.gates)])

    def decomposed(self) -> "Circuit":
        """Replace Pauli exponentials with basis changes, a CNOT ladder and RZ."""
        out = Circuit(self.n_qubits)
        for g in self.gates:
            if g.name != "PAULI_EXP":
                out.gates.append(g)
                continue
            support = g.support()
            if not support:
                continue  # global phase only
            pre = Circuit(self.n_qubits)
            for j in support:
                if g.word[j] == "X":
                    pre.h(j)
                elif g.word[j] == "Y":
                    pre.sdg(j).h(j)
            ladder = Circuit(self.n_qubits)
            for a, b in zip(support[:-1], support[1:]):
                ladder.cnot(a, b)
            out.append(pre).append(ladder)
            out.rz(support[-1], g.theta)
            out.append(ladder.inverse()).append(pre.inverse())
        return out

    def __len__(self) -> int:
        return len(self.gates)


def _apply_1q(psi: np.ndarray, mat: np.ndarray, q: int, n: int) -> np.ndarray:
    t = psi.reshape(1 << (n - q - 1), 2, 1 << q)
    return np.einsum("ab,ibj->iaj", mat, t).reshape(-1)


def _apply_cnot(psi: np.ndarray, c: int, t: int) -> np.ndarray:
    idx = np.arange(psi.size)
    src = np.where((idx >> c) & 1, idx ^ (1 << t), idx)
    return psi[src]


def apply_gate(gate: Gate, psi: np.ndarray, n: int) -> np.ndarray:
    name = gate.name
    if name in _SQ:
        return _apply_1q(psi, _SQ[name], gate.qubits[0], n)
    if name == "RZ":
        th = gate.theta / 2
        return _apply_1q(psi, np.diag([np.exp(-1j * th), np.exp(1j * th)]), gate.qubits[0], n)
    if name == "CNOT":
        return _apply_cnot(psi, *gate.qubits)
    if name == "PAULI_EXP":
        x, z = word_from_string(gate.word)
        return np.cos(gate.theta / 2) * psi - 1j * np.sin(gate.theta / 2) * apply_word(x, z, psi)
    raise ValueError(f"unknown gate {name}")


def apply(circuit: Circuit, state: StateVector, decompose: bool = False) -> StateVector:
    """Exact unitary action of a circuit; returns a new state."""
    if circuit.n_qubits != state.n_qubits:
        raise ValueError(f"circuit has {circuit.n_qubits} qubits, state has {state.n_qubits}")
    if decompose:
        circuit = circuit.decomposed()
    psi = state.amplitudes
    for g in circuit.gates:
        psi = apply_gate(g, psi, state.n_qubits)
    return StateVector(state.n_qubits, psi)


def expectation(state: StateVector, obs: PauliSum) -> float:
    """Exact ``<psi|O|psi>`` for a Hermitian Pauli sum."""
    if obs.n_qubits != state.n_qubits:
        raise ValueError("observable and state widths differ")
    if not len(obs):
        return 0.0
    words = obs.words()
    coeffs = np.array([obs.coefficient(w) for w in words])
    vals = word_expectations(state.amplitudes, words)
    return float(np.dot(coeffs.real, vals))


@dataclass(frozen=True)
class NoiseModel:
    """Depolarizing probability per gate and readout flip probability per qubit."""

    depolarizing: float = 0.0
    readout: float = 0.0

    def __post_init__(self):
        for name in ("depolarizing", "readout"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} probability must be in [0, 1], got {v}")

    @property
    def is_noiseless(self) -> bool:
        return self.depolarizing == 0.0 and self.readout == 0.0


@dataclass
class ShotTable:
    """Measured basis-state indices with multiplicities."""

    n_qubits: int
    outcomes: np.ndarray
    counts: np.ndarray

    @property
    def total_shots(self) -> int:
        return int(self.counts.sum())

    @classmethod
    def from_samples(cls, n_qubits: int, samples: np.ndarray) -> "ShotTable":
        outcomes, counts = np.unique(samples, return_counts=True)
        return cls(n_qubits, outcomes.astype(np.int64), counts.astype(np.int64))

    def as_dict(self) -> dict[str, int]:
        return {
            format(int(k), f"0{self.n_qubits}b")[::-1]: int(c)
            for k, c in zip(self.outcomes, self.counts)
        }

    def to_json(self) -> str:
        return json.dumps({"n_qubits": self.n_qubits, "total_shots": self.total_shots,
                           "counts": self.as_dict()}, sort_keys=True)

    def mean_parity(self, zmask: int) -> float:
        par = np.bitwise_count(self.outcomes.astype(np.uint64) & np.uint64(zmask)) & 1
        return float(np.dot(1.0 - 2.0 * par, self.counts) / self.total_shots)


def _depolarizing_patterns(circuit: Circuit, shots: int, p: float, rng: np.random.Generator):
    """Per-shot error labels, one row per gate: 0 = no error, k > 0 = Pauli index."""
    rows = []
    for g in circuit.gates:
        k = len(g.support())
        if k == 0:
            rows.append(np.zeros(shots, dtype=np.int64))
            continue
        hit = rng.random(shots) < p
        label = rng.integers(1, 4 ** k, size=shots)
        rows.append(np.where(hit, label, 0))
    if not rows:
        return np.zeros((0, shots), dtype=np.int64)
    return np.vstack(rows)


def _error_word(gate: Gate, label: int, n: int) -> str:
    letters = ["I"] * n
    for j, q in enumerate(gate.support()):
        letters[q] = "IXYZ"[(label >> (2 * j)) & 3]
    return "".join(letters)


def sample(state: StateVector, basis_change: Circuit | None, shots: int, rng: np.random.Generator,
           noise: NoiseModel | None = None) -> ShotTable:
    """Sample computational-basis outcomes after an optional basis change.

    Depolarizing noise inserts a random non-identity Pauli on the gate's
    support after each gate; identical error patterns are simulated once.
    """
    if shots <= 0:
        raise ValueError("shots must be positive")
    if not isinstance(rng, np.random.Generator):
        raise TypeError("an explicit numpy Generator is required")
    n = state.n_qubits
    circ = basis_change if basis_change is not None else Circuit(n)
    noise = noise or NoiseModel()
    if noise.depolarizing > 0 and len(circ):
        patterns = _depolarizing_patterns(circ, shots, noise.depolarizing, rng)
        uniq, inv = np.unique(patterns.T, axis=0, return_inverse=True)
        inv = np.asarray(inv).reshape(-1)
        samples = np.empty(shots, dtype=np.int64)
        for u, row in enumerate(uniq):
            sel = np.flatnonzero(inv == u)
            psi = state.amplitudes
            for g, lab in zip(circ.gates, row):
                psi = apply_gate(g, psi, n)
                if lab:
                    x, z = word_from_string(_error_word(g, int(lab), n))
                    psi = apply_word(x, z, psi)
            prob = np.abs(psi) ** 2
            samples[sel] = rng.choice(prob.size, size=sel.size, p=prob / prob.sum())
    else:
        prob = apply(circ, state).probabilities() if len(circ) else state.probabilities()
        samples = rng.choice(prob.size, size=shots, p=prob / prob.sum())
    if noise.readout > 0:
        flips = rng.random((shots, n)) < noise.readout
        mask = (flips * (1 << np.arange(n))).sum(axis=1)
        samples = samples ^ mask
    return ShotTable.from_samples(n, samples)


def random_circuit(n_qubits: int, depth: int, rng: np.random.Generator) -> Circuit:
    """Random mix of Clifford, RZ and Pauli-exponential gates, for testing."""
    c = Circuit(n_qubits)
    for _ in range(depth):
        kind = rng.integers(0, 5)
        q = int(rng.integers(0, n_qubits))
        if kind == 0:
            c.h(q)
        elif kind == 1:
            c.s(q) if rng.random() < 0.5 else c.sdg(q)
        elif kind == 2 and n_qubits > 1:
            t = int((q + 1 + rng.integers(0, n_qubits - 1)) % n_qubits)
            c.cnot(q, t)
        elif kind == 3:
            c.rz(q, rng.uniform(-np.pi, np.pi))
        else:
            word = "".join(rng.choice(list("IXYZ"), size=n_qubits))
            c.pauli_exp(word, rng.uniform(-np.pi, np.pi))
    return c


def words_to_strings(words: Iterable[tuple[int, int]], n: int) -> list[str]:
    return [word_to_string(x, z, n) for x, z in words]


def parities(outcomes: np.ndarray, zmasks: Sequence[int]) -> np.ndarray:
    """Matrix of +-1 parities, one row per mask, one column per outcome."""
    out = np.asarray(outcomes, dtype=np.uint64)
    return np.vstack([1.0 - 2.0 * (np.bitwise_count(out & np.uint64(z)) & 1) for z in zmasks]) \
        if len(zmasks) else np.zeros((0, out.size))
