"""Determinant-space SC-NEVPT2 used as an independent reference.

Each strongly contracted perturber is the projection of ``H |Psi0>`` onto the
determinants sharing one pattern of core holes and virtual particles
(spatial orbitals, spin ignored). Its Dyall energy is the orbital-energy
shift plus the active Dyall expectation, so no RDM enters.
"""

from __future__ import annotations

import numpy as np

from .chem_io import ContractViolation, MOIntegrals, OrbitalSpaces
from .fci import CASCIResult, FCISpace
from .nevpt2 import CLASS_LABELS, ClassTerm, Nevpt2Result, build_context

# (number of core holes, number of virtual particles) -> class label
PATTERN_CLASSES = {
    (2, 2): "0", (2, 1): "+1", (1, 2): "-1", (2, 0): "+2",
    (0, 2): "-2", (1, 0): "+1'", (0, 1): "-1'", (1, 1): "0'",
}


def embed_cas_vector(casci: CASCIResult, spaces: OrbitalSpaces, full: FCISpace) -> np.ndarray:
    """Place a CAS vector in the full determinant space with the core doubly occupied."""
    core = (1 << spaces.n_core) - 1
    ia, ib = casci.space.occupations()
    out = np.zeros(full.dimension)
    shift = spaces.n_core
    ja = np.searchsorted(full.alpha_strings, (ia << shift) | core)
    jb = np.searchsorted(full.beta_strings, (ib << shift) | core)
    out[ja * len(full.beta_strings) + jb] = casci.civec
    return out


def _popcount(a: np.ndarray) -> np.ndarray:
    return np.bitwise_count(a.astype(np.uint64)).astype(np.int64)


def determinant_nevpt2(ints: MOIntegrals, spaces: OrbitalSpaces, casci: CASCIResult,
                       canonicalize: bool = True, gamma1: np.ndarray | None = None) -> Nevpt2Result:
    """SC-NEVPT2 by explicit perturbers in the full determinant space.

    ``gamma1`` (spin-traced active 1-RDM) defines the Fock operator used for
    orbital energies and canonicalization; it is computed from the CAS
    vector when omitted.
    """
    if casci.space.norb != spaces.n_active:
        raise ContractViolation("CAS vector does not match the active space")
    if gamma1 is None:
        ops = casci.space.e_ops
        n = spaces.n_active
        gamma1 = np.array([[casci.civec @ (ops[(p, q)] @ casci.civec) for q in range(n)] for p in range(n)])
    ctx = build_context(ints, spaces, gamma1, canonicalize=canonicalize)
    h1 = ctx.rotation.T @ np.asarray(ints.h1) @ ctx.rotation
    full = FCISpace(spaces.n_orbitals, spaces.n_core + spaces.n_alpha, spaces.n_core + spaces.n_beta)
    psi0 = embed_cas_vector(casci, spaces, full)
    w = full.sigma(h1, ctx.eri, psi0)

    # active Dyall operator: effective one-body plus bare two-body, active indices only
    a = spaces.active
    hv1 = np.zeros_like(h1)
    hv1[a, a] = ctx.h1eff[a, a]
    hv2 = np.zeros_like(ctx.eri)
    hv2[a, a, a, a] = ctx.eri[a, a, a, a]

    ia, ib = full.occupations()
    core = (1 << spaces.n_core) - 1
    virt = ((1 << spaces.n_orbitals) - 1) ^ ((1 << (spaces.n_core + spaces.n_active)) - 1)
    ha, hb = core & ~ia, core & ~ib
    pa, pb = ia & virt, ib & virt
    n_holes = _popcount(ha) + _popcount(hb)
    n_part = _popcount(pa) + _popcount(pb)
    external = (n_holes + n_part) > 0
    w = np.where(external, w, 0.0)
    hv_w = full.sigma(hv1, hv2, w)
    e_v0 = float(psi0 @ full.sigma(hv1, hv2, psi0))

    eps = ctx.orbital_energies
    bits = np.arange(spaces.n_orbitals)
    occ_eps = lambda s: ((s[:, None] >> bits) & 1) @ eps  # noqa: E731
    shift = occ_eps(pa) + occ_eps(pb) - occ_eps(ha) - occ_eps(hb)

    # spatial pattern key: union and intersection masks of holes and particles
    keys = np.stack([ha | hb, ha & hb, pa | pb, pa & pb], axis=1)[external]
    uniq, inv = np.unique(keys, axis=0, return_inverse=True)
    inv = inv.ravel()
    wx, hx, sx = w[external], (w * hv_w)[external], shift[external]
    norm = np.bincount(inv, weights=wx * wx, minlength=len(uniq))
    hexp = np.bincount(inv, weights=hx, minlength=len(uniq))
    orb_shift = np.zeros(len(uniq))
    orb_shift[inv] = sx
    nh = _popcount(uniq[:, 0]) + _popcount(uniq[:, 1])
    npart = _popcount(uniq[:, 2]) + _popcount(uniq[:, 3])

    classes = {lab: ClassTerm(0.0, 0.0, 0) for lab in CLASS_LABELS}
    keep = norm > 1e-14
    for g in np.flatnonzero(keep):
        lab = PATTERN_CLASSES.get((int(nh[g]), int(npart[g])))
        if lab is None:
            continue  # triples and beyond carry no first-order weight
        de = orb_shift[g] + hexp[g] / norm[g] - e_v0
        t = classes[lab]
        classes[lab] = ClassTerm(t.energy - norm[g] / de, t.norm + norm[g], t.n_perturbers + 1)
    e2 = float(sum(t.energy for t in classes.values()))
    return Nevpt2Result(e2, classes, casci.total_energy, ctx.orbital_energies, "determinant-oracle")


sc_nevpt2_oracle = determinant_nevpt2
