"""Spin-traced RDM containers, invariants and the direct statevector oracle.

Tensor layout puts all upper indices first: ``gamma2[p, r, q, s]`` is
``<E^{pr}_{qs}>`` and ``gamma4[p, r, t, v, q, s, u, w]`` is ``<E^{prtv}_{qsuw}>``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .fermion import ladder_matrix
from .simulator import StateVector


@dataclass
class RDMSet:
    """Spin-traced 1- to 4-RDMs (and optional 4-PDM) over the active orbitals."""

    n_active: int
    n_electrons: int
    gamma1: np.ndarray
    gamma2: np.ndarray
    gamma3: np.ndarray | None = None
    gamma4: np.ndarray | None = None
    pdm4: np.ndarray | None = None
    provenance: str = "oracle"
    meta: dict = field(default_factory=dict)

    def rank(self, k: int) -> np.ndarray | None:
        return {1: self.gamma1, 2: self.gamma2, 3: self.gamma3, 4: self.gamma4}[k]

    def with_gamma4(self, gamma4: np.ndarray, provenance: str | None = None) -> "RDMSet":
        return replace(self, gamma4=gamma4, pdm4=None,
                       provenance=provenance or self.provenance, meta=dict(self.meta))

    def invariant_errors(self) -> dict[str, float]:
        """Largest violation of each trace, partial-trace and symmetry identity."""
        n_el = self.n_electrons
        err = {"trace": abs(np.trace(self.gamma1) - n_el)}
        err["hermitian1"] = float(np.abs(self.gamma1 - self.gamma1.T.conj()).max())
        prev = self.gamma1
        for k in (2, 3, 4):
            g = self.rank(k)
            if g is None:
                break
            err[f"partial_trace{k}"] = float(np.abs(partial_trace(g) - (n_el - k + 1) * prev).max())
            err[f"permutation{k}"] = permutation_asymmetry(g)
            err[f"hermitian{k}"] = float(np.abs(g - hermitian_transpose(g)).max())
            prev = g
        if n_el <= 2 and self.gamma3 is not None:
            err["vanishing3"] = float(np.abs(self.gamma3).max())
        if n_el <= 3 and self.gamma4 is not None:
            err["vanishing4"] = float(np.abs(self.gamma4).max())
        return err

    def save(self, directory: str | Path, stem: str = "rdms") -> list[Path]:
        """Write each tensor as ``.npy`` plus a JSON sidecar."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = []
        names = {}
        for name in ("gamma1", "gamma2", "gamma3", "gamma4", "pdm4"):
            arr = getattr(self, name)
            if arr is None:
                continue
            p = directory / f"{stem}.{name}.npy"
            np.save(p, np.ascontiguousarray(arr))
            names[name] = p.name
            paths.append(p)
        side = {
            "n_active": self.n_active,
            "n_electrons": self.n_electrons,
            "provenance": self.provenance,
            "tensors": names,
            "meta": self.meta,
        }
        sp_path = directory / f"{stem}.json"
        sp_path.write_text(json.dumps(side, indent=2, sort_keys=True, default=str) + "\n")
        paths.append(sp_path)
        return paths

    @classmethod
    def load(cls, directory: str | Path, stem: str = "rdms") -> "RDMSet":
        directory = Path(directory)
        side = json.loads((directory / f"{stem}.json").read_text())
        arrays = {k: np.load(directory / v) for k, v in side["tensors"].items()}
        return cls(side["n_active"], side["n_electrons"], provenance=side["provenance"],
                   meta=side.get("meta", {}), **arrays)


def partial_trace(g: np.ndarray) -> np.ndarray:
    """Contract the last upper index with the last lower index."""
    k = g.ndim // 2
    n = g.shape[0]
    idx = np.arange(n)
    moved = np.moveaxis(g, (k - 1, 2 * k - 1), (0, 1))
    return moved[idx, idx].sum(axis=0)


def hermitian_transpose(g: np.ndarray) -> np.ndarray:
    k = g.ndim // 2
    return np.conj(g.transpose(tuple(range(k, 2 * k)) + tuple(range(k))))


def permutation_asymmetry(g: np.ndarray) -> float:
    """Max deviation under simultaneous permutation of upper and lower index pairs."""
    import itertools

    k = g.ndim // 2
    worst = 0.0
    for perm in itertools.permutations(range(k)):
        axes = tuple(perm) + tuple(k + p for p in perm)
        worst = max(worst, float(np.abs(g - g.transpose(axes)).max()))
    return worst


def _annihilate_stack(vecs: np.ndarray, j: int, n_qubits: int) -> np.ndarray:
    """Apply ``a_j`` to every row of ``vecs``."""
    dim = 1 << n_qubits
    k = np.arange(dim)
    occ = np.flatnonzero((k >> j) & 1)
    sign = 1.0 - 2.0 * (np.bitwise_count((occ & ((1 << j) - 1)).astype(np.uint64)) & 1)
    out = np.zeros_like(vecs)
    out[:, occ ^ (1 << j)] = vecs[:, occ] * sign
    return out


def _sector_columns(n_qubits: int, n_alpha: int, n_beta: int) -> np.ndarray:
    k = np.arange(1 << n_qubits, dtype=np.uint64)
    even = np.uint64(sum(1 << (2 * p) for p in range(n_qubits // 2)))
    na = np.bitwise_count(k & even)
    nb = np.bitwise_count(k & (even << np.uint64(1)))
    return np.flatnonzero((na == n_alpha) & (nb == n_beta))


def _state_counts(psi: np.ndarray, n_qubits: int) -> tuple[int, int]:
    k = int(np.argmax(np.abs(psi)))
    na = sum((k >> (2 * p)) & 1 for p in range(n_qubits // 2))
    nb = sum((k >> (2 * p + 1)) & 1 for p in range(n_qubits // 2))
    return na, nb


def _real_if_close(psi: np.ndarray) -> np.ndarray:
    return psi.real.copy() if np.abs(psi.imag).max(initial=0.0) < 1e-14 else psi


def statevector_rdm(state: StateVector, rank: int) -> np.ndarray:
    """Spin-traced ``rank``-RDM by explicit annihilation-operator overlaps.

    ``Gamma^{P}_{Q} = sum_sigma <a_{P,sigma} psi | a_{Q,sigma} psi>`` where
    ``a_{Q,sigma} = a_{q_k s_k} ... a_{q_1 s_1}``; the state must conserve
    alpha and beta electron numbers.
    """
    nq = state.n_qubits
    n = nq // 2
    psi = _real_if_close(state.amplitudes)
    na, nb = _state_counts(psi, nq)
    total = np.zeros((n ** rank, n ** rank), dtype=psi.dtype)

    def rec(stack: np.ndarray, depth: int, used_a: int, used_b: int):
        nonlocal total
        if depth == rank:
            if used_a > na or used_b > nb:
                return
            cols = _sector_columns(nq, na - used_a, nb - used_b)
            if cols.size == 0:
                return
            sub = stack[:, cols]
            total += np.conj(sub) @ sub.T
            return
        for spin in (0, 1):
            if (spin == 0 and used_a >= na) or (spin == 1 and used_b >= nb):
                continue
            new = np.concatenate([_annihilate_stack(stack, 2 * q + spin, nq)[:, None, :]
                                  for q in range(n)], axis=1)
            rec(new.reshape(-1, stack.shape[1]), depth + 1, used_a + (spin == 0), used_b + (spin == 1))

    rec(psi[None, :], 0, 0, 0)
    return total.reshape((n,) * (2 * rank))


def statevector_rdms(state: StateVector, ranks=(1, 2, 3, 4)) -> RDMSet:
    """Oracle RDMs of the requested ranks for a particle-conserving state."""
    nq = state.n_qubits
    n = nq // 2
    na, nb = _state_counts(state.amplitudes, nq)
    out = {k: statevector_rdm(state, k) for k in sorted(ranks)}
    g1 = out.get(1)
    g2 = out.get(2)
    return RDMSet(n, na + nb, g1, g2, out.get(3), out.get(4), provenance="oracle")


def excitation_matrices(n_qubits: int) -> dict[tuple[int, int], sp.csr_matrix]:
    """Sparse register matrices of the spin-summed ``E^p_q``."""
    n = n_qubits // 2
    lad = {(j, d): ladder_matrix(j, d, n_qubits) for j in range(n_qubits) for d in (True, False)}
    out = {}
    for p in range(n):
        for q in range(n):
            m = lad[(2 * p, True)] @ lad[(2 * q, False)] + lad[(2 * p + 1, True)] @ lad[(2 * q + 1, False)]
            out[(p, q)] = m.tocsr()
    return out


def statevector_pdm(state: StateVector, rank: int) -> np.ndarray:
    """Ordered-product expectation ``<E^p_q E^r_s ...>`` in upper-then-lower layout."""
    nq = state.n_qubits
    n = nq // 2
    psi = _real_if_close(state.amplitudes)
    na, nb = _state_counts(psi, nq)
    cols = _sector_columns(nq, na, nb)
    ops = excitation_matrices(nq)
    # restrict every operator to the fixed (N, Sz) sector
    sub = {k: m[cols][:, cols].tocsr() for k, m in ops.items()}
    v = psi[cols]
    left_n = rank // 2
    right_n = rank - left_n

    def chain(pairs_count: int, adjoint: bool) -> np.ndarray:
        stack = v[None, :]
        for _ in range(pairs_count):
            rows = []
            for p in range(n):
                for q in range(n):
                    m = sub[(q, p)] if adjoint else sub[(p, q)]
                    rows.append((m @ stack.T).T)
            # new leading pair index, previous indices follow
            stack = np.stack(rows, axis=0).reshape(n * n * stack.shape[0], -1)
        return stack

    # right stack rows: pair order (t,u), (v,w) for E_tu E_vw psi, outermost pair first
    right = chain(right_n, adjoint=False)
    # left rows: (E_pq E_rs)^dag psi = E_sr E_qp psi, outermost pair is (r,s)
    left = chain(left_n, adjoint=True)
    gram = np.conj(left) @ right.T
    shape = (n, n) * left_n + (n, n) * right_n
    g = gram.reshape(shape)
    # left axes come as (r,s) outer, (p,q) inner for left_n = 2; reverse pair order
    left_axes = list(range(2 * left_n))
    pairs = [left_axes[2 * i: 2 * i + 2] for i in range(left_n)][::-1]
    order = [a for pr in pairs for a in pr] + list(range(2 * left_n, 2 * rank))
    g = g.transpose(order)
    uppers = [2 * i for i in range(rank)]
    lowers = [2 * i + 1 for i in range(rank)]
    return g.transpose(uppers + lowers)
