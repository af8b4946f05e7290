"""SC-NEVPT2 on top of quantum-measured reduced density matrices."""

from __future__ import annotations

from .chem_io import MOIntegrals, OrbitalSpaces, build_active_hamiltonian, load_fcidump, parse_fcidump
from .config import RunConfig
from .cumulant import cu4_gamma4, cumulants_from_rdms, filtered_gamma4, pdm4_from_rdms, sparsity_report
from .estimators import QRDMNevpt2, RDMEstimator
from .fci import casci_solve
from .measurement import assemble_rdms, execute_plan, plan_measurements, rdm_observables
from .nevpt2 import Nevpt2Result, energy_error_report, sc_nevpt2_from_rdms
from .oracle import sc_nevpt2_oracle
from .pipeline import CurvePoint, report, run_pipeline
from .rdm import RDMSet, statevector_rdms
from .state_prep import Ansatz, vqe

__version__ = "0.1.0"

__all__ = [
    "MOIntegrals", "OrbitalSpaces", "build_active_hamiltonian", "load_fcidump", "parse_fcidump",
    "RunConfig", "cu4_gamma4", "cumulants_from_rdms", "filtered_gamma4", "pdm4_from_rdms",
    "sparsity_report", "QRDMNevpt2", "RDMEstimator", "casci_solve", "assemble_rdms", "execute_plan",
    "plan_measurements", "rdm_observables", "Nevpt2Result", "energy_error_report",
    "sc_nevpt2_from_rdms", "sc_nevpt2_oracle", "CurvePoint", "report", "run_pipeline", "RDMSet",
    "statevector_rdms", "Ansatz", "vqe",
]
