"""Spin-traced cumulants, CU(4) reconstruction, PDM conversions and filtered 4-RDMs.

Terms are built from printed prototypes: every prototype is expanded into the
orbit of distinct index relabellings (the same permutation applied to the
upper and lower slots), and the orbit size is checked against the
multiplicity printed next to the term.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .rdm import RDMSet

FILTER_THRESHOLD = 1e-16

# factor kinds: "G" one-body RDM, "L2"/"L3" spin-traced cumulants
Factor = tuple  # (kind, uppers, lowers) with slot positions 0..k-1
_LETTERS_UP = "abcd"
_LETTERS_LO = "efgh"


@dataclass(frozen=True)
class Prototype:
    coeff: float
    factors: tuple
    multiplicity: int | None  # printed count; None when not printed


def _canon_factor(f: Factor) -> tuple:
    kind, up, lo = f
    return (kind, tuple(sorted(zip(up, lo))))


def _canon_term(factors) -> tuple:
    return tuple(sorted(_canon_factor(f) for f in factors))


def _relabel(factors, perm) -> tuple:
    return tuple((k, tuple(perm[i] for i in up), tuple(perm[i] for i in lo)) for k, up, lo in factors)


def expand_orbit(factors, rank: int) -> list[tuple]:
    """Distinct relabellings of a product term, deterministic order."""
    seen: dict[tuple, tuple] = {}
    for perm in itertools.permutations(range(rank)):
        new = _relabel(factors, perm)
        key = _canon_term(new)
        if key not in seen:
            seen[key] = tuple(sorted(new))
    return [seen[k] for k in sorted(seen)]


def _g(u, l):
    return ("G", (u,), (l,))


def _l2(u, l):
    return ("L2", tuple(u), tuple(l))


def _l3(u, l):
    return ("L3", tuple(u), tuple(l))


# Gamma4 = Lambda4 + sum of the terms below (slots: P1..P4 -> 0..3, Q1..Q4 -> 0..3)
GAMMA4_PROTOTYPES = (
    Prototype(1.0, (_g(0, 0), _l3((1, 2, 3), (1, 2, 3))), 4),
    Prototype(1.0, (_g(0, 0), _g(1, 1), _l2((2, 3), (2, 3))), 6),
    Prototype(1.0, (_l2((0, 1), (0, 1)), _l2((2, 3), (2, 3))), 3),
    # printed with Q1 repeated; the transposed lower index is the consistent reading
    Prototype(-0.5, (_g(0, 1), _l3((1, 2, 3), (0, 2, 3))), 12),
    Prototype(-0.5, (_g(0, 1), _g(1, 0), _l2((2, 3), (2, 3))), 6),
    Prototype(-0.5, (_g(0, 0), _g(1, 2), _l2((2, 3), (1, 3))), 24),
    Prototype(-0.5, (_l2((0, 1), (0, 2)), _l2((2, 3), (1, 3))), 12),
    Prototype(0.25, (_g(0, 1), _g(1, 2), _l2((2, 3), (0, 3))), 24),
    Prototype(0.25, (_g(0, 2), _g(1, 3), _l2((2, 3), (0, 1))), 12),
    Prototype(1.0, (_g(0, 0), _g(1, 1), _g(2, 2), _g(3, 3)), 1),
    Prototype(-0.5, (_g(0, 1), _g(1, 0), _g(2, 2), _g(3, 3)), 6),
    Prototype(0.25, (_g(0, 1), _g(1, 2), _g(2, 0), _g(3, 3)), 8),
    Prototype(0.25, (_g(0, 2), _g(1, 3), _g(2, 0), _g(3, 1)), 3),
    Prototype(-0.125, (_g(0, 1), _g(1, 2), _g(2, 3), _g(3, 0)), 6),
)

PRINTED_MULTIPLICITIES = (1, 4, 6, 3, 12, 6, 24, 12, 24, 12, 1, 6, 8, 3, 6)

GAMMA3_PROTOTYPES = (
    Prototype(1.0, (_g(0, 0), _l2((1, 2), (1, 2))), 3),
    Prototype(-0.5, (_g(0, 1), _l2((1, 2), (0, 2))), 6),
    Prototype(1.0, (_g(0, 0), _g(1, 1), _g(2, 2)), 1),
    Prototype(-0.5, (_g(0, 1), _g(1, 0), _g(2, 2)), 3),
    Prototype(0.25, (_g(0, 1), _g(1, 2), _g(2, 0)), 2),
)

GAMMA2_PROTOTYPES = (
    Prototype(1.0, (_g(0, 0), _g(1, 1)), 1),
    Prototype(-0.5, (_g(0, 1), _g(1, 0)), 1),
)


def _pair_partition_terms() -> list[tuple[float, tuple]]:
    """Fully crossed Lambda2 x Lambda2 bracket, one entry per upper-pair partition.

    (A - A')(B - B') + 3 (A + A')(B + B') over 12, with A = L^{ab}_{cd},
    A' = L^{ab}_{dc}, B = L^{cd}_{ab}, B' = L^{cd}_{ba}.
    """
    out = []
    for (a, b), (c, d) in (((0, 1), (2, 3)), ((0, 2), (1, 3)), ((0, 3), (1, 2))):
        for coeff, lo1, lo2 in (
            (4 / 12, (c, d), (a, b)),
            (2 / 12, (c, d), (b, a)),
            (2 / 12, (d, c), (a, b)),
            (4 / 12, (d, c), (b, a)),
        ):
            out.append((coeff, (_l2((a, b), lo1), _l2((c, d), lo2))))
    return out


def check_term_counts() -> list[int]:
    """Orbit sizes of the rank-4 prototypes, in printed order (Gamma4 itself first).

    Raises AssertionError on any mismatch with the printed multiplicities.
    """
    sizes = [1] + [len(expand_orbit(p.factors, 4)) for p in GAMMA4_PROTOTYPES]
    # printed order: Gamma4, 9 cumulant terms, then the five pure Gamma1 products
    if tuple(sizes) != PRINTED_MULTIPLICITIES:
        raise AssertionError(f"term multiplicities {sizes} differ from {PRINTED_MULTIPLICITIES}")
    for p in GAMMA3_PROTOTYPES + GAMMA4_PROTOTYPES:
        rank = 4 if p in GAMMA4_PROTOTYPES else 3
        if len(expand_orbit(p.factors, rank)) != p.multiplicity:
            raise AssertionError(f"orbit size mismatch for {p}")
    return sizes


def _term_list(prototypes, rank: int, extra=()) -> list[tuple[float, tuple]]:
    terms = []
    for p in prototypes:
        for t in expand_orbit(p.factors, rank):
            terms.append((p.coeff, t))
    terms.extend(extra)
    return terms


_TERMS_CACHE: dict[int, list] = {}


def product_terms(rank: int) -> list[tuple[float, tuple]]:
    """All explicit product terms of the rank-``rank`` decomposition (cumulant excluded)."""
    if rank not in _TERMS_CACHE:
        if rank == 2:
            _TERMS_CACHE[2] = _term_list(GAMMA2_PROTOTYPES, 2)
        elif rank == 3:
            _TERMS_CACHE[3] = _term_list(GAMMA3_PROTOTYPES, 3)
        elif rank == 4:
            check_term_counts()
            _TERMS_CACHE[4] = _term_list(GAMMA4_PROTOTYPES, 4, _pair_partition_terms())
        else:
            raise ValueError("rank must be 2, 3 or 4")
    return _TERMS_CACHE[rank]


def _evaluate(terms, rank: int, tensors: dict[str, np.ndarray]) -> np.ndarray:
    n = tensors["G"].shape[0]
    out = np.zeros((n,) * (2 * rank))
    target = _LETTERS_UP[:rank] + _LETTERS_LO[:rank]
    for coeff, factors in terms:
        subs, ops = [], []
        for kind, up, lo in factors:
            subs.append("".join(_LETTERS_UP[i] for i in up) + "".join(_LETTERS_LO[i] for i in lo))
            ops.append(tensors[kind])
        out += coeff * np.einsum(",".join(subs) + "->" + target, *ops, optimize=True)
    return out


@dataclass
class CumulantSet:
    lambda2: np.ndarray
    lambda3: np.ndarray | None = None


def lambda2_from(gamma1: np.ndarray, gamma2: np.ndarray) -> np.ndarray:
    return gamma2 - _evaluate(product_terms(2), 2, {"G": gamma1})


def cumulants_from_rdms(rdms: RDMSet) -> CumulantSet:
    """Spin-traced Lambda2 and Lambda3 from Gamma1..Gamma3."""
    g1 = np.real(rdms.gamma1)
    lam2 = lambda2_from(g1, np.real(rdms.gamma2))
    lam3 = None
    if rdms.gamma3 is not None:
        lam3 = np.real(rdms.gamma3) - _evaluate(product_terms(3), 3, {"G": g1, "L2": lam2})
    return CumulantSet(lam2, lam3)


def gamma2_from_cumulants(gamma1: np.ndarray, cum: CumulantSet) -> np.ndarray:
    return cum.lambda2 + _evaluate(product_terms(2), 2, {"G": gamma1})


def gamma3_from_cumulants(gamma1: np.ndarray, cum: CumulantSet) -> np.ndarray:
    return cum.lambda3 + _evaluate(product_terms(3), 3, {"G": gamma1, "L2": cum.lambda2})


def cu4_gamma4(rdms: RDMSet, cum: CumulantSet | None = None) -> np.ndarray:
    """Gamma4 reconstructed with a vanishing 4-body cumulant."""
    if rdms.gamma3 is None:
        raise ValueError("CU(4) needs gamma1..gamma3")
    cum = cum or cumulants_from_rdms(rdms)
    tensors = {"G": np.real(rdms.gamma1), "L2": cum.lambda2, "L3": cum.lambda3}
    return _evaluate(product_terms(4), 4, tensors)


def cu4_partial_trace_error(rdms: RDMSet, gamma4: np.ndarray | None = None) -> float:
    """Largest deviation of ``sum_v G4[p,r,t,v,q,s,u,v]`` from ``(N - 3) Gamma3``.

    A diagnostic only: CU(4) need not satisfy the contraction.
    """
    g4 = cu4_gamma4(rdms) if gamma4 is None else gamma4
    trace = np.einsum("prtvqsuv->prtqsu", g4)
    return float(np.abs(trace - (rdms.n_electrons - 3) * np.real(rdms.gamma3)).max())


def lambda4_from_rdms(rdms: RDMSet) -> np.ndarray:
    """Exact 4-body cumulant: Gamma4 minus every lower-order product term."""
    return np.real(rdms.gamma4) - cu4_gamma4(rdms)


# normal ordering of products of E^p_q

def _normal_order_terms(rank: int) -> list[tuple[tuple, tuple, tuple]]:
    """Expansion of E^{p1}_{q1} ... E^{pk}_{qk} into (deltas, uppers, lowers) terms.

    Symbols 0..k-1 are p1..pk, k..2k-1 are q1..qk. Uses
    E^p_q E^R_S = E^{pR}_{qS} + sum_k delta(q, r_k) E^{R[k <- p]}_S.
    """
    terms = [((), (rank - 1,), (2 * rank - 1,))]
    for i in range(rank - 2, -1, -1):
        p, q = i, rank + i
        new = []
        for deltas, up, lo in terms:
            new.append((deltas, (p,) + up, (q,) + lo))
            for k, r in enumerate(up):
                new.append((deltas + ((q, r),), up[:k] + (p,) + up[k + 1:], lo))
        terms = new
    return terms


def _pdm_terms(rank: int):
    """Lower-rank contributions of the ordered product, grouped per rank."""
    out = {}
    for deltas, up, lo in _normal_order_terms(rank):
        out.setdefault(len(up), []).append((deltas, up, lo))
    return out


def _delta_einsum(n: int, rank: int, deltas, up, lo, tensor: np.ndarray) -> np.ndarray:
    letters = "abcdefghijklmnop"
    target = letters[: 2 * rank]
    subs = ["".join(letters[s] for s in up) + "".join(letters[s] for s in lo)]
    ops = [tensor]
    eye = np.eye(n)
    for a, b in deltas:
        subs.append(letters[a] + letters[b])
        ops.append(eye)
    return np.einsum(",".join(subs) + "->" + target, *ops, optimize=True)


def pdm_from_rdms(gammas: dict[int, np.ndarray], rank: int) -> np.ndarray:
    """Ordered product ``<E^{p1}_{q1} ... E^{pk}_{qk}>`` from RDMs of rank <= k."""
    n = gammas[1].shape[0]
    out = np.zeros((n,) * (2 * rank))
    for r, terms in _pdm_terms(rank).items():
        for deltas, up, lo in terms:
            out += _delta_einsum(n, rank, deltas, up, lo, np.real(gammas[r]))
    return out


def pdm4_from_rdms(rdms: RDMSet, gamma4: np.ndarray | None = None) -> np.ndarray:
    """4-PDM from Gamma1..Gamma4 (``gamma4`` overrides the set's tensor)."""
    g4 = rdms.gamma4 if gamma4 is None else gamma4
    if g4 is None or rdms.gamma3 is None:
        raise ValueError("4-PDM needs gamma1..gamma4")
    return pdm_from_rdms({1: rdms.gamma1, 2: rdms.gamma2, 3: rdms.gamma3, 4: g4}, 4)


def rdm4_from_pdm4(pdm4: np.ndarray, rdms: RDMSet) -> np.ndarray:
    """Inverse of :func:`pdm4_from_rdms` for fixed lower-rank RDMs."""
    n = rdms.n_active
    gam = {1: rdms.gamma1, 2: rdms.gamma2, 3: rdms.gamma3}
    out = np.array(pdm4, dtype=float, copy=True)
    for r, terms in _pdm_terms(4).items():
        if r == 4:
            continue
        for deltas, up, lo in terms:
            out -= _delta_einsum(n, 4, deltas, up, lo, np.real(gam[r]))
    return out


# sparsity and filtered hybrids

@dataclass(frozen=True)
class SparsityReport:
    threshold: float
    density: float
    edges: np.ndarray
    counts: np.ndarray

    def to_csv_rows(self) -> list[list]:
        rows = [["threshold", self.threshold], ["density", self.density]]
        for lo, hi, c in zip(self.edges[:-1], self.edges[1:], self.counts):
            rows.append([f"{lo:.0e}..{hi:.0e}", int(c)])
        return rows


def sparsity_report(tensor: np.ndarray, threshold: float = FILTER_THRESHOLD) -> SparsityReport:
    """Fraction of elements above ``threshold`` and a log-scale magnitude histogram."""
    a = np.abs(np.asarray(tensor)).ravel()
    density = float(np.count_nonzero(a > threshold) / a.size) if a.size else 0.0
    edges = 10.0 ** np.arange(-16, 2)
    counts, _ = np.histogram(a[a > 0], bins=edges)
    return SparsityReport(threshold, density, edges, counts)


ExactSource = np.ndarray | Callable[[np.ndarray], np.ndarray]


def _take(source: ExactSource, mask: np.ndarray) -> np.ndarray:
    if callable(source):
        idx = np.argwhere(mask)
        vals = np.asarray(source(idx))
        if vals.shape != (idx.shape[0],):
            raise ValueError("element oracle returned the wrong number of values")
        return vals
    return np.asarray(source)[mask]


@dataclass(frozen=True)
class FilteredGamma4:
    gamma4: np.ndarray
    replaced_fraction: float
    variant: str


def filtered_gamma4(rdms: RDMSet, exact: ExactSource, variant: str = "pdm",
                    threshold: float = FILTER_THRESHOLD, mask_from: str = "approx",
                    cu4: np.ndarray | None = None) -> FilteredGamma4:
    """CU(4) Gamma4 with selected elements replaced by exact values.

    Args:
        rdms: Gamma1..Gamma3 (any Gamma4 in the set is ignored).
        exact: exact Gamma4 (``variant="rdm"``) or 4-PDM (``variant="pdm"``),
            either as a dense array or an element callback taking an index array.
        variant: "rdm" replaces in Gamma4, "pdm" replaces in the 4-PDM.
        mask_from: "approx" masks on the CU(4) tensor; "exact" masks on the
            exact tensor (only possible with a dense array).
    """
    if variant not in ("rdm", "pdm"):
        raise ValueError("variant must be 'rdm' or 'pdm'")
    approx4 = cu4_gamma4(rdms) if cu4 is None else cu4
    base = approx4 if variant == "rdm" else pdm4_from_rdms(rdms, approx4)
    if mask_from == "approx":
        mask = np.abs(base) > threshold
    elif mask_from == "exact":
        if callable(exact):
            raise ValueError("an exact-tensor mask needs a dense exact tensor")
        mask = np.abs(exact) > threshold
    else:
        raise ValueError("mask_from must be 'approx' or 'exact'")
    hybrid = base.copy()
    hybrid[mask] = _take(exact, mask)
    if variant == "pdm":
        hybrid = rdm4_from_pdm4(hybrid, rdms)
    return FilteredGamma4(hybrid, float(mask.mean()), f"cu4-{variant}-filtered")


def symmetrize_gamma4(g: np.ndarray) -> np.ndarray:
    """Average over simultaneous upper/lower slot permutations and Hermitian transpose."""
    acc = np.zeros_like(g)
    for perm in itertools.permutations(range(4)):
        acc += g.transpose(tuple(perm) + tuple(4 + p for p in perm))
    acc /= 24
    return 0.5 * (acc + acc.transpose(4, 5, 6, 7, 0, 1, 2, 3))
