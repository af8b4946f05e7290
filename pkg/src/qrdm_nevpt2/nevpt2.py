"""Strongly contracted NEVPT2 from spin-traced active-space RDMs.

The eight perturber classes are evaluated with the contracted intermediates
of the standard SC-NEVPT2 formulation; four-body terms are contracted with the
explicit 4-PDM ``<E_pq E_rs E_tu E_vw>`` so any approximate 4-RDM can be fed in.
Internally the ordered-product tensors use the pair layout
``dm3[p, q, r, s, t, u] = <E_pq E_rs E_tu>``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .chem_io import ContractViolation, MOIntegrals, OrbitalSpaces
from .cumulant import pdm4_from_rdms, pdm_from_rdms
from .rdm import RDMSet

log = logging.getLogger(__name__)

NORM_THRESHOLD = 1e-12
DENOMINATOR_WARN = 1e-8

CLASS_LABELS = ("0", "+1", "-1", "+2", "-2", "+1'", "-1'", "0'")
_SUBSPACE_NAMES = {
    "0": "Sijrs", "+1": "Sijr", "-1": "Srsi", "+2": "Sij",
    "-2": "Srs", "+1'": "Si", "-1'": "Sr", "0'": "Sir",
}


@dataclass
class ClassTerm:
    energy: float
    norm: float
    n_perturbers: int
    small_denominators: int = 0


@dataclass
class Nevpt2Result:
    """Second-order energy with the per-class breakdown."""

    e2: float
    classes: dict[str, ClassTerm]
    e_reference: float | None = None
    orbital_energies: np.ndarray | None = None
    rdm_provenance: str = "oracle"
    warnings: list[str] = field(default_factory=list)

    @property
    def e_total(self) -> float | None:
        return None if self.e_reference is None else self.e_reference + self.e2

    def class_energies(self) -> dict[str, float]:
        return {k: v.energy for k, v in self.classes.items()}

    def to_dict(self) -> dict:
        return {
            "e2": self.e2,
            "e_reference": self.e_reference,
            "e_total": self.e_total,
            "rdm_provenance": self.rdm_provenance,
            "classes": {k: vars(v) for k, v in self.classes.items()},
            "warnings": list(self.warnings),
        }


@dataclass(frozen=True)
class DyallContext:
    """Integrals in the (optionally canonicalized) orbital basis."""

    spaces: OrbitalSpaces
    h1eff: np.ndarray  # h + core Coulomb/exchange, all orbitals
    eri: np.ndarray  # chemist notation, all orbitals
    orbital_energies: np.ndarray
    rotation: np.ndarray

    @property
    def h2e_active(self) -> np.ndarray:
        a = self.spaces.active
        return self.eri[a, a, a, a].transpose(0, 2, 1, 3)


def generalized_fock(h1: np.ndarray, eri: np.ndarray, spaces: OrbitalSpaces, gamma1: np.ndarray) -> np.ndarray:
    """``F_pq = h_pq + sum_rs D_rs [(pq|rs) - 1/2 (ps|rq)]`` with the full 1-RDM ``D``."""
    n = spaces.n_orbitals
    d = np.zeros((n, n))
    c, a = spaces.core, spaces.active
    d[c, c] = 2.0 * np.eye(spaces.n_core)
    d[a, a] = np.real(gamma1)
    return h1 + np.einsum("rs,pqrs->pq", d, eri) - 0.5 * np.einsum("rs,psrq->pq", d, eri)


def _core_fock(h1: np.ndarray, eri: np.ndarray, spaces: OrbitalSpaces) -> np.ndarray:
    c = spaces.core
    return h1 + 2.0 * np.einsum("pqii->pq", eri[:, :, c, c]) - np.einsum("piiq->pq", eri[:, c, c, :])


def build_context(ints: MOIntegrals, spaces: OrbitalSpaces, gamma1: np.ndarray,
                  canonicalize: bool = True) -> DyallContext:
    """Rotate core and virtual orbitals to diagonalize the generalized Fock blocks.

    The active block is left untouched so the supplied RDMs stay valid; the
    energy is invariant to active rotations.
    """
    if ints.n_orbitals != spaces.n_orbitals:
        raise ContractViolation("integrals and orbital spaces disagree on the orbital count")
    h1 = np.asarray(ints.h1, dtype=float)
    eri = np.asarray(ints.eri, dtype=float)
    fock = generalized_fock(h1, eri, spaces, gamma1)
    u = np.eye(spaces.n_orbitals)
    if canonicalize:
        for blk in (spaces.core, spaces.virtual):
            sub = fock[blk, blk]
            if sub.size:
                _, vec = np.linalg.eigh(sub)
                u[blk, blk] = vec
        h1 = u.T @ h1 @ u
        eri = np.einsum("pqrs,pi,qj,rk,sl->ijkl", eri, u, u, u, u, optimize=True)
        fock = u.T @ fock @ u
    return DyallContext(spaces, _core_fock(h1, eri, spaces), eri, np.diag(fock).copy(), u)


def _to_pair_layout(pdm: np.ndarray) -> np.ndarray:
    k = pdm.ndim // 2
    order = [x for i in range(k) for x in (i, k + i)]
    return np.ascontiguousarray(pdm.transpose(order))


def _norm_to_energy(norm, h, diff, label: str, warnings: list) -> ClassTerm:
    norm = np.asarray(norm, dtype=float).ravel()
    h = np.asarray(h, dtype=float).ravel()
    diff = np.asarray(diff, dtype=float).ravel()
    idx = np.abs(norm) > NORM_THRESHOLD
    den = diff[idx] + h[idx] / norm[idx]
    small = int(np.count_nonzero(np.abs(den) < DENOMINATOR_WARN))
    if small:
        msg = f"class {label}: {small} near-zero denominators (|d| < {DENOMINATOR_WARN:g})"
        warnings.append(msg)
        log.warning(msg)
    energy = float(-(norm[idx] / den).sum())
    return ClassTerm(energy, float(norm.sum()), int(idx.sum()), small)


# contracted intermediates; dm tensors are in pair layout

def make_a16(h1e, h2e, dm3, dm4):
    a16 = -np.einsum("ib,rpqiac->pqrabc", h1e, dm3)
    a16 += np.einsum("ia,rpqbic->pqrabc", h1e, dm3)
    a16 -= np.einsum("ci,rpqbai->pqrabc", h1e, dm3)
    a16 -= np.einsum("kbij,rpqjkiac->pqrabc", h2e, dm4, optimize=True)
    a16 += np.einsum("ijka,rpqbjcik->pqrabc", h2e, dm4, optimize=True)
    a16 -= np.einsum("kcij,rpqbajki->pqrabc", h2e, dm4, optimize=True)
    a16 += np.einsum("jbij,rpqiac->pqrabc", h2e, dm3)
    a16 -= np.einsum("cjka,rpqbjk->pqrabc", h2e, dm3)
    a16 += np.einsum("jcij,rpqbai->pqrabc", h2e, dm3)
    return a16


def make_a22(h1e, h2e, dm2, dm3, dm4):
    n = h1e.shape[0]
    a22 = -np.einsum("pb,kipjac->ijkabc", h1e, dm3)
    a22 -= np.einsum("pa,kibjpc->ijkabc", h1e, dm3)
    a22 += np.einsum("cp,kibjap->ijkabc", h1e, dm3)
    a22 += np.einsum("cqra,kibjqr->ijkabc", h2e, dm3)
    a22 -= np.einsum("qcpq,kibjap->ijkabc", h2e, dm3)
    a22 -= np.einsum("pqrb,kiqjprac->ijkabc", h2e, dm4, optimize=True)
    a22 -= np.einsum("pqra,kibjqcpr->ijkabc", h2e, dm4, optimize=True)
    a22 += np.einsum("rcpq,kibjaqrp->ijkabc", h2e, dm4, optimize=True)
    a22 += 2.0 * np.einsum("jb,kiac->ijkabc", h1e, dm2)
    a22 += 2.0 * np.einsum("pjrb,kiprac->ijkabc", h2e, dm3)
    fdm2 = np.einsum("pa,kipc->ikac", h1e, dm2)
    fdm2 -= np.einsum("cp,kiap->ikac", h1e, dm2)
    fdm2 -= np.einsum("cqra,kiqr->ikac", h2e, dm2)
    fdm2 += np.einsum("qcpq,kiap->ikac", h2e, dm2)
    fdm2 += np.einsum("pqra,kiqcpr->ikac", h2e, dm3)
    fdm2 -= np.einsum("rcpq,kiaqrp->ikac", h2e, dm3)
    for i in range(n):
        a22[:, i, :, :, i, :] += 2.0 * fdm2
    return a22


def make_a17(h1e, h2e, dm2, dm3):
    h1e = h1e - np.einsum("mjjn->mn", h2e)
    return -np.einsum("pi,cabi->abcp", h1e, dm2) - np.einsum("kpij,cabjki->abcp", h2e, dm3)


def make_a19(h1e, h2e, dm1, dm2):
    h1e = h1e - np.einsum("mjjn->mn", h2e)
    return -np.einsum("pi,ai->ap", h1e, dm1) - np.einsum("kpij,ajki->ap", h2e, dm2)


def make_a23(h1e, h2e, dm1, dm2, dm3):
    return (-np.einsum("ip,caib->abcp", h1e, dm2)
            - np.einsum("pijk,cajbik->abcp", h2e, dm3)
            + 2.0 * np.einsum("bp,ca->abcp", h1e, dm1)
            + 2.0 * np.einsum("pibk,caik->abcp", h2e, dm2))


def make_a25(h1e, h2e, dm1, dm2):
    return (-np.einsum("pi,ai->ap", h1e, dm1)
            - np.einsum("pijk,jaik->ap", h2e, dm2)
            + 2.0 * h1e.T
            + 2.0 * np.einsum("piaj,ij->ap", h2e, dm1))


def make_hdm1(dm1):
    return 2.0 * np.eye(dm1.shape[0]) - dm1.T


def make_hdm2(dm1, dm2):
    d = np.eye(dm2.shape[0])
    rm2 = np.einsum("ikjl->ijkl", dm2) - np.einsum("jk,il->ijkl", d, dm1)
    return (np.einsum("klij->ijkl", rm2)
            + np.einsum("il,kj->ijkl", d, dm1)
            + np.einsum("jk,li->ijkl", d, dm1)
            - 2.0 * np.einsum("ik,lj->ijkl", d, dm1)
            - 2.0 * np.einsum("jl,ki->ijkl", d, dm1)
            - 2.0 * np.einsum("il,jk->ijkl", d, d)
            + 4.0 * np.einsum("ik,jl->ijkl", d, d))


def make_hdm3(dm1, dm2, dm3, hdm2):
    d = np.eye(dm3.shape[0])
    return (-np.einsum("pb,qrac->pqrabc", d, hdm2)
            - np.einsum("br,pqac->pqrabc", d, hdm2)
            + 2.0 * np.einsum("bq,prac->pqrabc", d, hdm2)
            + 2.0 * np.einsum("ap,bqcr->pqrabc", d, dm2)
            - 4.0 * np.einsum("ap,cr,bq->pqrabc", d, d, dm1)
            + 2.0 * np.einsum("cr,bqap->pqrabc", d, dm2)
            - np.einsum("bqapcr->pqrabc", dm3)
            + 2.0 * np.einsum("ar,pc,bq->pqrabc", d, d, dm1)
            - np.einsum("ar,bqcp->pqrabc", d, dm2))


def make_a3(h1e, h2e, dm1, dm2, hdm1):
    d = np.eye(dm1.shape[0])
    return (np.einsum("ia,ip->pa", h1e, hdm1)
            + 2.0 * np.einsum("ijka,pj,ik->pa", h2e, d, dm1)
            - np.einsum("ijka,jpik->pa", h2e, dm2))


def make_k27(h1e, h2e, dm1, dm2):
    return (-np.einsum("ai,pi->pa", h1e, dm1)
            - np.einsum("iajk,pkij->pa", h2e, dm2)
            + np.einsum("iaji,pj->pa", h2e, dm1))


def make_a7(h1e, h2e, dm1, dm2, dm3):
    d = np.eye(dm2.shape[0])
    rm2 = np.einsum("iljk->ijkl", dm2) - np.einsum("ik,jl->ijkl", dm1, d)
    rm3 = (np.einsum("injmkl->ijklmn", dm3)
           - np.einsum("jn,imkl->ijklmn", d, dm2)
           - np.einsum("km,ijln->ijklmn", d, rm2)
           - np.einsum("kn,ijml->ijklmn", d, rm2))
    a7 = (-np.einsum("bi,pqia->pqab", h1e, rm2)
          - np.einsum("ai,pqbi->pqab", h1e, rm2)
          - np.einsum("kbij,pqkija->pqab", h2e, rm3)
          - np.einsum("kaij,pqkibj->pqab", h2e, rm3)
          - np.einsum("baij,pqij->pqab", h2e, rm2))
    return rm2, a7


def make_a9(h1e, h2e, hdm2, hdm3):
    a9 = np.einsum("ib,pqai->pqab", h1e, hdm2)
    a9 += 2.0 * np.einsum("ijib,pqaj->pqab", h2e, hdm2)
    a9 -= np.einsum("ijjb,pqai->pqab", h2e, hdm2)
    a9 -= np.einsum("ijkb,pkqaij->pqab", h2e, hdm3)
    a9 += np.einsum("ia,pqib->pqab", h1e, hdm2)
    a9 -= np.einsum("ijja,pqib->pqab", h2e, hdm2)
    a9 -= np.einsum("ijba,pqji->pqab", h2e, hdm2)
    a9 += 2.0 * np.einsum("ijia,pqjb->pqab", h2e, hdm2)
    a9 -= np.einsum("ijka,pqkjbi->pqab", h2e, hdm3)
    return a9


def make_a12(h1e, h2e, dm2, dm3):
    return (np.einsum("ia,qpib->pqab", h1e, dm2)
            - np.einsum("bi,qpai->pqab", h1e, dm2)
            + np.einsum("ijka,qpjbik->pqab", h2e, dm3)
            - np.einsum("kbij,qpajki->pqab", h2e, dm3)
            - np.einsum("bjka,qpjk->pqab", h2e, dm2)
            + np.einsum("jbij,qpai->pqab", h2e, dm2))


def make_a13(h1e, h2e, dm1, dm2, dm3):
    d = np.eye(dm1.shape[0])
    a13 = -np.einsum("ia,qbip->pqab", h1e, dm2)
    a13 += 2.0 * np.einsum("pa,qb->pqab", h1e, dm1)
    a13 += np.einsum("bi,qiap->pqab", h1e, dm2)
    a13 -= 2.0 * np.einsum("pa,bi,qi->pqab", d, h1e, dm1)
    a13 -= np.einsum("ijka,qbjpik->pqab", h2e, dm3)
    a13 += np.einsum("kbij,qjapki->pqab", h2e, dm3)
    a13 += np.einsum("blma,qmlp->pqab", h2e, dm2)
    a13 += 2.0 * np.einsum("kpma,qbkm->pqab", h2e, dm2)
    a13 -= 2.0 * np.einsum("bpma,qm->pqab", h2e, dm1)
    a13 -= np.einsum("lbkl,qkap->pqab", h2e, dm2)
    a13 -= 2.0 * np.einsum("ap,mbkl,qlmk->pqab", d, h2e, dm2)
    a13 += 2.0 * np.einsum("ap,lbkl,qk->pqab", d, h2e, dm1)
    return a13


class _Kernel:
    """Class evaluators sharing integrals and RDM intermediates."""

    def __init__(self, ctx: DyallContext, dm1, dm2, dm3, dm4, warnings: list):
        sp_ = ctx.spaces
        self.c, self.a, self.v = sp_.core, sp_.active, sp_.virtual
        self.nc, self.nv = sp_.n_core, sp_.n_virtual
        self.ctx = ctx
        self.eri = ctx.eri
        self.h1eff = ctx.h1eff
        self.h1e = ctx.h1eff[self.a, self.a]
        self.h2e = ctx.h2e_active
        self.e = ctx.orbital_energies
        self.dm1, self.dm2, self.dm3, self.dm4 = dm1, dm2, dm3, dm4
        self.warnings = warnings

    def _term(self, norm, h, diff, label):
        return _norm_to_energy(norm, h, diff, label, self.warnings)

    def sr(self) -> ClassTerm:
        a, v = self.a, self.v
        if self.nv == 0:
            return ClassTerm(0.0, 0.0, 0)
        h2e_v = self.eri[v, a, a, a].transpose(0, 2, 1, 3)
        h1e_v = self.h1eff[v, a] - np.einsum("mbbn->mn", h2e_v)
        a16 = make_a16(self.h1e, self.h2e, self.dm3, self.dm4)
        a17 = make_a17(self.h1e, self.h2e, self.dm2, self.dm3)
        a19 = make_a19(self.h1e, self.h2e, self.dm1, self.dm2)
        ener = (np.einsum("ipqr,pqrabc,iabc->i", h2e_v, a16, h2e_v, optimize=True)
                + 2.0 * np.einsum("ipqr,pqra,ia->i", h2e_v, a17, h1e_v, optimize=True)
                + np.einsum("ip,pa,ia->i", h1e_v, a19, h1e_v))
        norm = (np.einsum("ipqr,rpqbac,iabc->i", h2e_v, self.dm3, h2e_v, optimize=True)
                + 2.0 * np.einsum("ipqr,rpqa,ia->i", h2e_v, self.dm2, h1e_v, optimize=True)
                + np.einsum("ip,pa,ia->i", h1e_v, self.dm1, h1e_v))
        return self._term(norm, ener, self.e[v], "-1'")

    def si(self) -> ClassTerm:
        a, c = self.a, self.c
        if self.nc == 0:
            return ClassTerm(0.0, 0.0, 0)
        h2e_v = self.eri[a, c, a, a].transpose(0, 2, 1, 3)
        h1e_v = self.h1eff[a, c]
        dm1, dm2, dm3 = self.dm1, self.dm2, self.dm3
        a22 = make_a22(self.h1e, self.h2e, dm2, dm3, self.dm4)
        a23 = make_a23(self.h1e, self.h2e, dm1, dm2, dm3)
        a25 = make_a25(self.h1e, self.h2e, dm1, dm2)
        d = np.eye(dm1.shape[0])
        dm3_h = 2.0 * np.einsum("abef,cd->abcdef", dm2, d) - dm3.transpose(0, 1, 3, 2, 4, 5)
        dm2_h = 2.0 * np.einsum("ab,cd->abcd", dm1, d) - dm2.transpose(0, 1, 3, 2)
        dm1_h = 2.0 * d - dm1.T
        ener = (np.einsum("qpir,pqrabc,baic->i", h2e_v, a22, h2e_v, optimize=True)
                + 2.0 * np.einsum("qpir,pqra,ai->i", h2e_v, a23, h1e_v, optimize=True)
                + np.einsum("pi,pa,ai->i", h1e_v, a25, h1e_v))
        norm = (np.einsum("qpir,rpqbac,baic->i", h2e_v, dm3_h, h2e_v, optimize=True)
                + 2.0 * np.einsum("qpir,rpqa,ai->i", h2e_v, dm2_h, h1e_v, optimize=True)
                + np.einsum("pi,pa,ai->i", h1e_v, dm1_h, h1e_v))
        return self._term(norm, ener, -self.e[self.c], "+1'")

    def sijrs(self) -> ClassTerm:
        c, v = self.c, self.v
        if self.nc == 0 or self.nv == 0:
            return ClassTerm(0.0, 0.0, 0)
        g = self.eri[c, v, c, v]  # (ia|jb)
        eia = self.e[c][:, None] - self.e[v][None, :]
        den = eia[:, :, None, None] + eia[None, None, :, :]
        theta = 2.0 * g - g.transpose(0, 3, 2, 1)
        norm = float(np.einsum("iajb,iajb", g, theta))
        energy = float(np.einsum("iajb,iajb", g / den, theta))
        return ClassTerm(energy, norm, int(g.size))

    def sijr(self) -> ClassTerm:
        a, c, v = self.a, self.c, self.v
        if self.nc == 0 or self.nv == 0:
            return ClassTerm(0.0, 0.0, 0)
        # h2e_v[r, p, j, i] = (r j | p i)
        h2e_v = self.eri[v, c, a, c].transpose(0, 2, 1, 3)
        hdm1 = make_hdm1(self.dm1)
        a3 = make_a3(self.h1e, self.h2e, self.dm1, self.dm2, hdm1)
        diag = np.diag_indices(self.nc)
        triu = np.triu_indices(self.nc)

        def fold(m):
            out = (2.0 * np.einsum("rpji,raji,pa->rji", h2e_v, h2e_v, m)
                   - np.einsum("rpji,raij,pa->rji", h2e_v, h2e_v, m))
            out = out + out.transpose(0, 2, 1)
            out[:, diag[0], diag[1]] *= 0.5
            return out[:, triu[0], triu[1]]

        e = self.e
        diff = e[v][:, None, None] - e[c][None, :, None] - e[c][None, None, :]
        return self._term(fold(hdm1), fold(a3), diff[:, triu[0], triu[1]], "+1")

    def srsi(self) -> ClassTerm:
        a, c, v = self.a, self.c, self.v
        if self.nc == 0 or self.nv == 0:
            return ClassTerm(0.0, 0.0, 0)
        # h2e_v[r, s, i, p] = (r i | s p)
        h2e_v = self.eri[v, c, v, a].transpose(0, 2, 1, 3)
        k27 = make_k27(self.h1e, self.h2e, self.dm1, self.dm2)
        diag = np.diag_indices(self.nv)
        triu = np.triu_indices(self.nv)

        def fold(m):
            out = (2.0 * np.einsum("rsip,rsia,pa->rsi", h2e_v, h2e_v, m)
                   - np.einsum("rsip,sria,pa->rsi", h2e_v, h2e_v, m))
            out = out + out.transpose(1, 0, 2)
            out[diag] *= 0.5
            return out[triu]

        e = self.e
        diff = e[v][:, None, None] + e[v][None, :, None] - e[c][None, None, :]
        return self._term(fold(self.dm1), fold(k27), diff[triu], "-1")

    def srs(self) -> ClassTerm:
        a, v = self.a, self.v
        if self.nv == 0:
            return ClassTerm(0.0, 0.0, 0)
        h2e_v = self.eri[v, a, v, a].transpose(0, 2, 1, 3)
        rm2, a7 = make_a7(self.h1e, self.h2e, self.dm1, self.dm2, self.dm3)
        norm = 0.5 * np.einsum("rsqp,rsba,pqba->rs", h2e_v, h2e_v, rm2, optimize=True)
        h = 0.5 * np.einsum("rsqp,rsba,pqab->rs", h2e_v, h2e_v, a7, optimize=True)
        diff = self.e[v][:, None] + self.e[v][None, :]
        return self._term(norm, h, diff, "-2")

    def sij(self) -> ClassTerm:
        a, c = self.a, self.c
        if self.nc == 0:
            return ClassTerm(0.0, 0.0, 0)
        h2e_v = self.eri[a, c, a, c].transpose(0, 2, 1, 3)
        hdm1 = make_hdm1(self.dm1)
        hdm2 = make_hdm2(self.dm1, self.dm2)
        hdm3 = make_hdm3(self.dm1, self.dm2, self.dm3, hdm2)
        a9 = make_a9(self.h1e, self.h2e, hdm2, hdm3)
        norm = 0.5 * np.einsum("qpij,baij,pqab->ij", h2e_v, h2e_v, hdm2, optimize=True)
        h = 0.5 * np.einsum("qpij,baij,pqab->ij", h2e_v, h2e_v, a9, optimize=True)
        diff = self.e[c][:, None] + self.e[c][None, :]
        return self._term(norm, h, -diff, "+2")

    def sir(self) -> ClassTerm:
        a, c, v = self.a, self.c, self.v
        if self.nc == 0 or self.nv == 0:
            return ClassTerm(0.0, 0.0, 0)
        dm1, dm2, dm3 = self.dm1, self.dm2, self.dm3
        h2e_v1 = self.eri[v, c, a, a].transpose(0, 2, 1, 3)
        h2e_v2 = self.eri[v, a, a, c].transpose(0, 2, 1, 3)
        h1e_v = self.h1eff[v, c]
        es = lambda s, *ops: np.einsum(s, *ops, optimize=True)  # noqa: E731
        norm = (2.0 * es("rpiq,raib,qpab->ir", h2e_v1, h2e_v1, dm2)
                - es("rpiq,rabi,qpab->ir", h2e_v1, h2e_v2, dm2)
                - es("rpqi,raib,qpab->ir", h2e_v2, h2e_v1, dm2)
                + 2.0 * es("raqi,rabi,qb->ir", h2e_v2, h2e_v2, dm1)
                - es("rpqi,rabi,qbap->ir", h2e_v2, h2e_v2, dm2)
                + es("rpqi,raai,qp->ir", h2e_v2, h2e_v2, dm1)
                + 4.0 * es("rpiq,ri,qp->ir", h2e_v1, h1e_v, dm1)
                - 2.0 * es("rpqi,ri,qp->ir", h2e_v2, h1e_v, dm1)
                + 2.0 * es("ri,ri->ir", h1e_v, h1e_v))
        a12 = make_a12(self.h1e, self.h2e, dm2, dm3)
        a13 = make_a13(self.h1e, self.h2e, dm1, dm2, dm3)
        h = (2.0 * es("rpiq,raib,pqab->ir", h2e_v1, h2e_v1, a12)
             - es("rpiq,rabi,pqab->ir", h2e_v1, h2e_v2, a12)
             - es("rpqi,raib,pqab->ir", h2e_v2, h2e_v1, a12)
             + es("rpqi,rabi,pqab->ir", h2e_v2, h2e_v2, a13))
        diff = self.e[c][:, None] - self.e[v][None, :]
        return self._term(norm, h, -diff, "0'")


def pair_layout_pdms(rdms: RDMSet) -> tuple[np.ndarray, ...]:
    """``dm1`` and the ordered products ``dm2..dm4`` in pair layout.

    Ranks above the electron count vanish and may be omitted.
    """
    n, ne = rdms.n_active, rdms.n_electrons
    g3 = rdms.gamma3
    if g3 is None:
        if ne > 2:
            raise ContractViolation("NEVPT2 needs gamma3 for more than two active electrons")
        g3 = np.zeros((n,) * 6)
    g = {1: np.real(rdms.gamma1), 2: np.real(rdms.gamma2), 3: np.real(g3)}
    if rdms.pdm4 is not None:
        pdm4 = np.real(rdms.pdm4)
    elif rdms.gamma4 is not None:
        pdm4 = pdm4_from_rdms(rdms)
    elif ne <= 3:
        pdm4 = pdm4_from_rdms(RDMSet(n, ne, g[1], g[2], g[3]), np.zeros((n,) * 8))
    else:
        raise ContractViolation(
            "NEVPT2 needs a 4-RDM or 4-PDM for more than three active electrons; "
            "use cumulant.cu4_gamma4 for the CU(4) reconstruction")
    return (g[1], _to_pair_layout(pdm_from_rdms(g, 2)), _to_pair_layout(pdm_from_rdms(g, 3)),
            _to_pair_layout(pdm4))


def sc_nevpt2(ints: MOIntegrals, spaces: OrbitalSpaces, rdms: RDMSet,
              e_reference: float | None = None, canonicalize: bool = True) -> Nevpt2Result:
    """Second-order SC-NEVPT2 correction for one CASCI state.

    Args:
        ints: molecular orbital integrals over all orbitals.
        spaces: core/active/virtual partition consistent with ``rdms``.
        rdms: spin-traced active RDMs (ranks 1-3 plus a 4-RDM or 4-PDM).
        e_reference: CASCI total energy, only used for ``e_total``.
        canonicalize: diagonalize the core and virtual generalized Fock blocks.
    """
    if rdms.n_active != spaces.n_active:
        raise ContractViolation("RDM size does not match the active space")
    if abs(np.trace(np.real(rdms.gamma1)) - spaces.n_active_electrons) > 1e-6:
        raise ContractViolation("1-RDM trace does not match the active electron count")
    ctx = build_context(ints, spaces, rdms.gamma1, canonicalize=canonicalize)
    dm1, dm2, dm3, dm4 = pair_layout_pdms(rdms)
    warnings: list[str] = []
    k = _Kernel(ctx, dm1, dm2, dm3, dm4, warnings)
    classes = {
        "-1'": k.sr(), "+1'": k.si(), "0": k.sijrs(), "+1": k.sijr(),
        "-1": k.srsi(), "-2": k.srs(), "+2": k.sij(), "0'": k.sir(),
    }
    classes = {lab: classes[lab] for lab in CLASS_LABELS}
    e2 = float(sum(t.energy for t in classes.values()))
    return Nevpt2Result(e2, classes, e_reference, ctx.orbital_energies, rdms.provenance, warnings)


sc_nevpt2_from_rdms = sc_nevpt2


def energy_error_report(results: dict, reference: str = "exact") -> list[dict]:
    """Per-point deviations of each 4-RDM variant from the reference variant.

    Args:
        results: variant name -> {point label: total energy or Nevpt2Result}.
        reference: variant the others are compared against.

    Returns:
        Rows ``{"label", "variant", "energy", "deviation", "abs_deviation"}``
        ordered by label, then by the variant order of ``results``.
    """
    if len(results) < 2:
        raise ValueError("at least two variants are needed for a comparison")
    if reference not in results:
        raise ValueError(f"reference variant {reference!r} missing")

    def value(v):
        if isinstance(v, Nevpt2Result):
            return v.e_total if v.e_total is not None else v.e2
        return float(v)

    ref = results[reference]
    rows = []
    for label in sorted(ref):
        e_ref = value(ref[label])
        for variant, pts in results.items():
            if label not in pts:
                continue
            e = value(pts[label])
            rows.append({"label": label, "variant": variant, "energy": e,
                         "deviation": e - e_ref, "abs_deviation": abs(e - e_ref)})
    return rows
