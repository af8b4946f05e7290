"""UCCSD state preparation and VQE on the active-space qubit Hamiltonian."""

from __future__ import annotations

import csv
import itertools
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.optimize
import scipy.sparse as sp

from .fermion import FermionOperator, fermion_matrix, jordan_wigner, spin_orbital
from .pauli import PauliSum, word_to_string
from .simulator import Circuit, StateVector, apply, expectation

log = logging.getLogger(__name__)

GRADIENT_FLOOR = 1e-6


def hf_bits(n_alpha: int, n_beta: int) -> int:
    """Occupation bitstring of the lowest-orbital determinant (bit j = qubit j)."""
    bits = 0
    for p in range(n_alpha):
        bits |= 1 << spin_orbital(p, 0)
    for p in range(n_beta):
        bits |= 1 << spin_orbital(p, 1)
    return bits


def _excitation_string(creators, annihilators) -> tuple:
    return tuple((j, True) for j in creators) + tuple((j, False) for j in reversed(annihilators))


@dataclass(frozen=True)
class Excitation:
    """One variational parameter: a sum of spin-orbital excitations ``c (T - T^dagger)``."""

    label: str
    pieces: tuple  # ((coeff, ladder string), ...)

    def generator(self) -> FermionOperator:
        op = FermionOperator.from_terms([(c, s) for c, s in self.pieces])
        return op + op.adjoint() * -1.0


def _spin_adapted(n_active: int, n_occ: int) -> list[Excitation]:
    occ, vir = range(n_occ), range(n_occ, n_active)
    out = []
    for i, a in itertools.product(occ, vir):
        pieces = tuple((1.0, _excitation_string([spin_orbital(a, s)], [spin_orbital(i, s)])) for s in (0, 1))
        out.append(Excitation(f"S{i}->{a}", pieces))

    def pair(a, i, b, j):
        # E^a_i E^b_j over both spin labels; distinct occ/virt blocks make it a pure double
        ps = []
        for s, t in itertools.product((0, 1), repeat=2):
            ca, cb = spin_orbital(a, s), spin_orbital(b, t)
            ai, bj = spin_orbital(i, s), spin_orbital(j, t)
            if ca == cb or ai == bj:
                continue
            ps.append((1.0, _excitation_string([ca, cb], [ai, bj])))
        return tuple(ps)

    for i, j in itertools.combinations_with_replacement(occ, 2):
        for a, b in itertools.combinations_with_replacement(vir, 2):
            out.append(Excitation(f"D{i}{j}->{a}{b}", pair(a, i, b, j)))
            if i != j and a != b:
                out.append(Excitation(f"D{i}{j}->{b}{a}", pair(b, i, a, j)))
    return out


def _spin_orbital_excitations(n_active: int, n_alpha: int, n_beta: int) -> list[Excitation]:
    occ = [spin_orbital(p, 0) for p in range(n_alpha)] + [spin_orbital(p, 1) for p in range(n_beta)]
    vir = [j for j in range(2 * n_active) if j not in occ]
    occ, vir = sorted(occ), sorted(vir)
    out = []
    for i, a in itertools.product(occ, vir):
        if i % 2 == a % 2:
            out.append(Excitation(f"s{i}->{a}", ((1.0, _excitation_string([a], [i])),)))
    for (i, j), (a, b) in itertools.product(itertools.combinations(occ, 2), itertools.combinations(vir, 2)):
        if (i % 2) + (j % 2) == (a % 2) + (b % 2):
            out.append(Excitation(f"d{i}{j}->{a}{b}", ((1.0, _excitation_string([a, b], [i, j])),)))
    return out


@dataclass
class Ansatz:
    """First-order Trotterized UCCSD in lexicographic excitation order.

    Closed-shell references use spin-adapted generators (one parameter per
    spatial excitation); open-shell references fall back to S_z-conserving
    spin-orbital generators.
    """

    n_active: int
    n_alpha: int
    n_beta: int
    excitations: list = field(default_factory=list)

    @classmethod
    def uccsd(cls, n_active: int, n_alpha: int, n_beta: int) -> "Ansatz":
        if n_alpha == n_beta:
            ex = _spin_adapted(n_active, n_alpha)
        else:
            ex = _spin_orbital_excitations(n_active, n_alpha, n_beta)
        return cls(n_active, n_alpha, n_beta, ex)

    @property
    def n_qubits(self) -> int:
        return 2 * self.n_active

    @property
    def n_parameters(self) -> int:
        return len(self.excitations)

    @property
    def reference_bits(self) -> int:
        return hf_bits(self.n_alpha, self.n_beta)

    def _factors(self) -> list[tuple[int, float, sp.csr_matrix]]:
        """(parameter index, coefficient, real sparse T - T^dagger) per Trotter factor."""
        cached = getattr(self, "_factor_cache", None)
        if cached is None:
            cached = []
            for k, ex in enumerate(self.excitations):
                for c, s in ex.pieces:
                    op = FermionOperator.from_terms([(1.0, s)])
                    m = fermion_matrix(op, self.n_qubits)
                    kmat = (m - m.conj().T).real.tocsr()
                    kmat.eliminate_zeros()
                    cached.append((k, float(c), kmat))
            self._factor_cache = cached
        return cached

    def reference_state(self) -> np.ndarray:
        psi = np.zeros(1 << self.n_qubits)
        psi[self.reference_bits] = 1.0
        return psi

    def state(self, params) -> StateVector:
        """Exact ansatz state using ``exp(t K) = 1 + sin(t) K + (1 - cos t) K^2``."""
        return StateVector(self.n_qubits, self._state_array(np.asarray(params, dtype=float)))

    def _state_array(self, params: np.ndarray) -> np.ndarray:
        if params.size != self.n_parameters:
            raise ValueError(f"expected {self.n_parameters} parameters, got {params.size}")
        psi = self.reference_state()
        for k, c, kmat in self._factors():
            psi = _exp_apply(kmat, c * params[k], psi)
        return psi

    def circuit(self, params) -> Circuit:
        """Gate-level circuit: X gates for the reference, then Pauli exponentials."""
        params = np.asarray(params, dtype=float)
        circ = Circuit(self.n_qubits)
        for j in range(self.n_qubits):
            if (self.reference_bits >> j) & 1:
                circ.x(j)
        for k, c, word, d in self.rotations():
            circ.pauli_exp(word, -2.0 * c * d * params[k])
        return circ

    def rotations(self) -> list[tuple[int, float, str, float]]:
        """(parameter, coefficient, word, weight): factor ``exp(i c theta d P)``.

        Words from one spin-orbital excitation commute, so their product is exact.
        """
        out = []
        for k, ex in enumerate(self.excitations):
            for c, s in ex.pieces:
                op = FermionOperator.from_terms([(1.0, s)])
                gen = jordan_wigner(op + op.adjoint() * -1.0, self.n_qubits)
                for (x, z), coeff in sorted(gen, key=lambda t: t[0]):
                    # anti-Hermitian generator: coefficients are purely imaginary
                    out.append((k, float(c), word_to_string(x, z, self.n_qubits), float(coeff.imag)))
        return out


def _exp_apply(kmat: sp.csr_matrix, t: float, psi: np.ndarray) -> np.ndarray:
    if t == 0.0:
        return psi
    kp = kmat @ psi
    return psi + np.sin(t) * kp + (1.0 - np.cos(t)) * (kmat @ kp)


class EnergyFunction:
    """Exact energy and adjoint gradient of an ansatz under a qubit Hamiltonian."""

    def __init__(self, hamiltonian: PauliSum, ansatz: Ansatz):
        if hamiltonian.n_qubits != ansatz.n_qubits:
            raise ValueError("ansatz and Hamiltonian qubit counts differ")
        self.hamiltonian = hamiltonian
        self.ansatz = ansatz
        mat = hamiltonian.to_matrix(sparse=True)
        if abs(mat.imag).max() > 1e-12 if mat.nnz else False:
            raise ValueError("complex Hamiltonian matrices are not supported")
        self.matrix = mat.real.tocsr()
        self.n_evaluations = 0

    def energy(self, params) -> float:
        self.n_evaluations += 1
        psi = self.ansatz._state_array(np.asarray(params, dtype=float))
        return float(psi @ (self.matrix @ psi))

    def gradient(self, params) -> np.ndarray:
        """Reverse-mode (adjoint) gradient; one forward and one backward sweep."""
        params = np.asarray(params, dtype=float)
        factors = self.ansatz._factors()
        psi = self.ansatz._state_array(params)
        lam = self.matrix @ psi
        grad = np.zeros(params.size)
        for k, c, kmat in reversed(factors):
            grad[k] += 2.0 * c * (lam @ (kmat @ psi))
            psi = _exp_apply(kmat, -c * params[k], psi)
            lam = _exp_apply(kmat, -c * params[k], lam)
        return grad

    def energy_and_gradient(self, params):
        return self.energy(params), self.gradient(params)


def parameter_shift_gradient(hamiltonian: PauliSum, ansatz: Ansatz, params) -> np.ndarray:
    """Gradient from the two-term shift rule applied to every Pauli rotation."""
    params = np.asarray(params, dtype=float)
    base = ansatz.circuit(params)
    n_prep = sum(1 for g in base.gates if g.name == "X")
    rots = ansatz.rotations()
    grad = np.zeros(params.size)
    for g_idx, (k, c, _word, d) in enumerate(rots):
        pos = n_prep + g_idx
        vals = []
        for shift in (np.pi / 2, -np.pi / 2):
            circ = Circuit(base.n_qubits, list(base.gates))
            g = circ.gates[pos]
            circ.gates[pos] = type(g)(g.name, g.qubits, g.theta + shift, g.word)
            vals.append(expectation(apply(circ, StateVector.basis(base.n_qubits, 0)), hamiltonian))
        grad[k] += -2.0 * c * d * 0.5 * (vals[0] - vals[1])
    return grad


def finite_difference_gradient(fun, params, step: float = 1e-4) -> np.ndarray:
    params = np.asarray(params, dtype=float)
    grad = np.zeros(params.size)
    for i in range(params.size):
        e = np.zeros(params.size)
        e[i] = step
        grad[i] = (fun(params + e) - fun(params - e)) / (2 * step)
    return grad


@dataclass
class VQEResult:
    parameters: np.ndarray
    energy: float
    iterations: int
    converged: bool
    trace: list = field(default_factory=list)  # (iteration, energy)
    n_evaluations: int = 0
    mode: str = "exact"

    def write_trace(self, path: str | Path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "energy"])
            w.writerows(self.trace)
        return path


def vqe(hamiltonian: PauliSum, ansatz: Ansatz, max_iterations: int = 200, tolerance: float = 1e-8,
        initial=None, mode: str = "exact", shots: int = 10000, seed: int | None = None,
        measurement_plan=None) -> VQEResult:
    """Minimize the ansatz energy.

    Exact mode uses BFGS with adjoint gradients. Sampled mode estimates every
    energy from shots (one child seed per evaluation) and uses COBYLA.
    Non-convergence is reported through ``converged``, never raised.
    """
    x0 = np.zeros(ansatz.n_parameters) if initial is None else np.asarray(initial, dtype=float)
    fn = EnergyFunction(hamiltonian, ansatz)
    trace: list = [(0, fn.energy(x0))]
    if max_iterations <= 0 or ansatz.n_parameters == 0:
        return VQEResult(x0, trace[0][1], 0, ansatz.n_parameters == 0, trace, fn.n_evaluations, mode)

    if mode == "exact":
        def cb(xk):
            trace.append((len(trace), fn.energy(xk)))

        res = scipy.optimize.minimize(fn.energy_and_gradient, x0, jac=True, method="BFGS", callback=cb,
                                      options={"maxiter": max_iterations, "gtol": tolerance})
        energy = fn.energy(res.x)
        # BFGS stops with a precision-loss status once the gradient is at roundoff
        ok = bool(res.success) or (res.status == 2 and np.abs(res.jac).max() < GRADIENT_FLOOR)
        return VQEResult(res.x, energy, int(res.nit), ok, trace, fn.n_evaluations, mode)

    if mode != "sampled":
        raise ValueError("mode must be 'exact' or 'sampled'")
    if seed is None:
        raise ValueError("sampled mode needs an explicit seed")
    from .measurement import execute_plan, plan_measurements

    plan = measurement_plan or plan_measurements({"H": hamiltonian})
    counter = itertools.count()

    def noisy(x):
        # entropy (seed, evaluation index) keeps runs reproducible
        est = execute_plan(plan, ansatz.state(x), "shots", shots=shots, seed=[seed, next(counter)])
        val = est.values["H"]
        trace.append((len(trace), val))
        return val

    res = scipy.optimize.minimize(noisy, x0, method="COBYLA",
                                  options={"maxiter": max_iterations, "rhobeg": 0.1, "tol": tolerance})
    energy = fn.energy(res.x)
    return VQEResult(res.x, energy, int(res.nfev), bool(res.success), trace, fn.n_evaluations, mode)
