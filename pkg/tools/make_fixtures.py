"""Generate FCIDUMP fixtures and golden reference energies with PySCF.

Run once, offline, in an environment that has PySCF installed:

    python tools/make_fixtures.py tests/data

PySCF is not a dependency of the package; the files this script writes are
committed under tests/data and consumed by the test-suite.
"""

from __future__ import annotations

import io
import json
import re
import sys
from pathlib import Path

from pyscf import ao2mo, fci, gto, mcscf, mrpt, scf
from pyscf.tools import fcidump


def _linear(symbols, spacing):
    return [[s, (0.0, 0.0, i * spacing)] for i, s in enumerate(symbols)]


SYSTEMS = [
    # name, atoms, basis, spin, ncas, nelecas, keep (number of MOs kept or None)
    *[
        (f"h2_631g_r{r:.2f}", _linear("HH", r), "6-31g", 0, 2, 2, None)
        for r in (0.50, 0.74, 1.00, 1.50, 2.00, 2.50)
    ],
    ("lih_sto3g_r1.60", [["Li", (0, 0, 0)], ["H", (0, 0, 1.60)]], "sto-3g", 0, 2, 2, None),
    ("lih_sto3g_r3.00", [["Li", (0, 0, 0)], ["H", (0, 0, 3.00)]], "sto-3g", 0, 3, 2, None),
    ("beh2_sto3g_r1.33",
     [["Be", (0, 0, 0)], ["H", (0, 0, 1.33)], ["H", (0, 0, -1.33)]], "sto-3g", 0, 4, 4, None),
    *[
        (f"beh2_sto3g_r{r:.2f}", [["Be", (0, 0, 0)], ["H", (0, 0, r)], ["H", (0, 0, -r)]],
         "sto-3g", 0, 4, 4, None)
        for r in (1.80, 2.30, 2.80, 3.30)
    ],
    ("h4_631g_r0.90", _linear("HHHH", 0.90), "6-31g", 0, 4, 4, None),
    ("h4_631g_r2.00", _linear("HHHH", 2.00), "6-31g", 0, 4, 4, None),
    ("h4_sto3g_r2.50", _linear("HHHH", 2.50), "sto-3g", 0, 4, 4, None),
    ("h3_631g_r1.00", _linear("HHH", 1.00), "6-31g", 1, 3, 3, None),
    ("h2o_sto3g_eq",
     [["O", (0, 0, 0)], ["H", (0, 0.757, 0.587)], ["H", (0, -0.757, 0.587)]], "sto-3g", 0, 4, 6, None),
    ("ch2_sto3g_triplet",
     [["C", (0, 0, 0)], ["H", (0, 0.99, 0.60)], ["H", (0, -0.99, 0.60)]], "sto-3g", 2, 5, 6, None),
    ("h6_sto3g_r1.50", _linear("HHHHHH", 1.50), "sto-3g", 0, 4, 4, None),
    ("lih_631g_r2.00_trunc8", [["Li", (0, 0, 0)], ["H", (0, 0, 2.00)]], "6-31g", 0, 4, 2, 8),
    ("li2_sto3g_r6.68", _linear(["Li", "Li"], 6.68), "sto-3g", 0, 4, 4, None),
    ("n2_sto3g_r1.10", _linear("NN", 1.10), "sto-3g", 0, 6, 6, None),
    ("n2_sto3g_r2.00", _linear("NN", 2.00), "sto-3g", 0, 6, 6, None),
]


_CLASS_LINES = {
    "Sr": "-1'", "Si": "+1'", "Sijrs": "0", "Sijr": "+1",
    "Srsi": "-1", "Srs": "-2", "Sij": "+2", "Sir": "0'",
}


def _nevpt2_classes(mc):
    """Run PySCF SC-NEVPT2; return the total and the eight class energies."""
    nev = mrpt.NEVPT(mc)
    nev.stdout = io.StringIO()
    nev.verbose = 3
    total = nev.kernel()
    classes = {}
    for line in nev.stdout.getvalue().splitlines():
        m = re.match(r"\s*(S\w+)\s.*E = (\S+)", line)
        if m and m.group(1) in _CLASS_LINES:
            classes[_CLASS_LINES[m.group(1)]] = float(m.group(2))
    return float(total), classes


def build(name, atoms, basis, spin, ncas, nelecas, keep, outdir: Path):
    mol = gto.M(atom=atoms, basis=basis, spin=spin, unit="Angstrom", verbose=0,
                symmetry=False)
    mf = (scf.RHF(mol) if spin == 0 else scf.ROHF(mol))
    mf.conv_tol = 1e-12
    mf.kernel()
    mo = mf.mo_coeff
    nmo = mo.shape[1] if keep is None else keep
    mo = mo[:, :nmo]
    h1 = mo.T @ mf.get_hcore() @ mo
    eri = ao2mo.restore(1, ao2mo.full(mol, mo), nmo)
    path = outdir / f"{name}.FCIDUMP"
    fcidump.from_integrals(str(path), h1, eri, nmo, mol.nelectron,
                           nuc=mol.energy_nuc(), ms=spin)
    record = {
        "name": name,
        "basis": basis,
        "spin_2s": spin,
        "n_orbitals": nmo,
        "n_electrons": mol.nelectron,
        "n_active": ncas,
        "n_active_electrons": nelecas,
        "n_core": (mol.nelectron - nelecas) // 2,
        "e_scf": float(mf.e_tot),
    }
    # full-space FCI within the kept orbitals
    if nmo <= 10:
        cis = fci.direct_spin1.FCI()
        cis.conv_tol = 1e-14
        neleca = (mol.nelectron + spin) // 2
        e_fci, _ = cis.kernel(h1, eri, nmo, (neleca, mol.nelectron - neleca),
                              ecore=mol.energy_nuc())
        record["e_fci"] = float(e_fci)
    if keep is None:
        mc = mcscf.CASCI(mf, ncas, nelecas)
        mc.fcisolver.conv_tol = 1e-14
        mc.verbose = 0
        mc.kernel()
        record["e_casci"] = float(mc.e_tot)
        total, classes = _nevpt2_classes(mc)
        record["e_nevpt2_pyscf"] = total
        record["e_nevpt2_pyscf_classes"] = classes
    return record


def main(argv):
    outdir = Path(argv[1] if len(argv) > 1 else "tests/data")
    outdir.mkdir(parents=True, exist_ok=True)
    golden = {}
    for spec in SYSTEMS:
        rec = build(*spec, outdir)
        golden[rec["name"]] = rec
        print(json.dumps(rec))
    (outdir / "golden_pyscf.json").write_text(json.dumps(golden, indent=2, sort_keys=True) + "\n")


if __name__ == "__main__":
    main(sys.argv)
