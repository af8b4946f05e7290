"""End-to-end driver: state preparation, RDM estimation, 4-RDM model, NEVPT2."""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .chem_io import OrbitalSpaces, build_active_hamiltonian
from .config import RunConfig
from .cumulant import cu4_gamma4, filtered_gamma4, pdm4_from_rdms, sparsity_report
from .fci import casci_solve
from .fermion import qubit_hamiltonian
from .measurement import (assemble_rdms, assemble_tensor, execute_plan, plan_cost_rows, plan_measurements,
                          rdm_observables)
from .nevpt2 import CLASS_LABELS, energy_error_report, sc_nevpt2_from_rdms
from .oracle import sc_nevpt2_oracle
from .rdm import RDMSet, statevector_rdms
from .simulator import NoiseModel
from .state_prep import Ansatz, vqe
from .symmetry import find_z2_symmetries
from .validation import as_integrals

log = logging.getLogger(__name__)

WORKERS_ENV = "QRDM_WORKERS"

# fixed orders keep every output byte-stable
DIAGNOSTIC_KEYS = (
    "vqe_energy", "vqe_iterations", "vqe_converged", "pmsv_retention", "n_measurement_sets",
    "gamma4_density", "pdm4_density", "replaced_fraction", "oracle_max_class_error", "error",
)
CSV_COLUMNS = ("label", "status", "e_reference", "e2", "e_total") \
    + tuple(f"e2[{c}]" for c in CLASS_LABELS) + DIAGNOSTIC_KEYS


@dataclass
class CurvePoint:
    """One geometry point of a scan."""

    label: float
    status: str = "ok"
    e_reference: float | None = None
    e2: float | None = None
    e_total: float | None = None
    classes: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    variants: dict = field(default_factory=dict)  # gamma4 mode -> total energy

    def to_dict(self) -> dict:
        diag = {k: self.diagnostics.get(k) for k in DIAGNOSTIC_KEYS}
        return {
            "label": self.label, "status": self.status, "e_reference": self.e_reference,
            "e2": self.e2, "e_total": self.e_total,
            "classes": {c: self.classes.get(c) for c in CLASS_LABELS},
            "diagnostics": diag, "variants": dict(sorted(self.variants.items())),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CurvePoint":
        return cls(d["label"], d["status"], d["e_reference"], d["e2"], d["e_total"], dict(d["classes"]),
                   dict(d["diagnostics"]), dict(d.get("variants", {})))


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    return max(1, n)


@dataclass
class PreparedState:
    state: object
    e_reference: float
    casci: object
    diagnostics: dict


def _setup(cfg: RunConfig, system):
    ints = as_integrals(system)
    spaces = OrbitalSpaces.from_counts(ints.n_orbitals, ints.n_electrons, cfg.n_active,
                                       cfg.n_active_electrons, ints.spin_2s)
    return ints, spaces, build_active_hamiltonian(ints, spaces)


def prepare_state(cfg: RunConfig, spaces: OrbitalSpaces, ah, hamiltonian) -> PreparedState:
    casci = casci_solve(ah, spaces)
    sp = cfg.state_prep
    if sp.mode == "casci":
        return PreparedState(casci.statevector(), casci.total_energy, casci, {})
    ansatz = Ansatz.uccsd(spaces.n_active, spaces.n_alpha, spaces.n_beta)
    res = vqe(hamiltonian, ansatz, max_iterations=sp.max_iterations, tolerance=sp.tolerance,
              mode="exact" if sp.mode == "vqe-exact" else "sampled", shots=sp.shots, seed=sp.seed)
    diag = {"vqe_energy": res.energy, "vqe_iterations": res.iterations, "vqe_converged": res.converged}
    return PreparedState(ansatz.state(res.parameters), res.energy, casci, diag)


class RDMSource:
    """Produces RDM tensors from one state in the configured measurement mode."""

    def __init__(self, cfg: RunConfig, state, n_electrons: int, symmetry):
        self.cfg = cfg
        self.state = state
        self.n_electrons = n_electrons
        self.symmetry = symmetry
        self.diagnostics: dict = {"n_measurement_sets": 0}
        self._calls = 0
        self._oracle = None

    @property
    def mode(self) -> str:
        return self.cfg.measurement.mode

    def _oracle_rdms(self) -> RDMSet:
        if self._oracle is None:
            ranks = (1, 2, 3, 4) if self.n_electrons >= 4 else (1, 2, 3)
            self._oracle = statevector_rdms(self.state, ranks)
        return self._oracle

    def _measure(self, obs):
        m = self.cfg.measurement
        sym = self.symmetry if (m.symmetry_reduce or m.pmsv) else None
        plan = plan_measurements(obs, m.strategy, symmetry=sym, pmsv=m.pmsv and self.mode == "shots")
        self.diagnostics["n_measurement_sets"] += plan.n_sets
        if self.mode == "exact-plan":
            est = execute_plan(plan, self.state)
        else:
            self._calls += 1
            est = execute_plan(plan, self.state, "shots", shots=m.shots, seed=[m.seed, self._calls],
                               noise=NoiseModel(m.depolarizing, m.readout), pmsv=m.pmsv)
            if m.pmsv:
                prev = self.diagnostics.get("pmsv_retention")
                cur = est.min_retained
                self.diagnostics["pmsv_retention"] = cur if prev is None else min(prev, cur)
        return est

    def lower(self) -> RDMSet:
        """Gamma1..Gamma3 (rank 3 only when it can be non-zero)."""
        if self.mode == "oracle":
            o = self._oracle_rdms()
            return RDMSet(o.n_active, o.n_electrons, o.gamma1, o.gamma2, o.gamma3, provenance="oracle")
        ranks = (1, 2, 3) if self.n_electrons > 2 else (1, 2)
        obs = rdm_observables(self.cfg.n_active, ranks, symmetry=self.symmetry)
        est = self._measure(obs)
        return assemble_rdms(est.values, obs, self.n_electrons, self.mode)

    def rank4(self, kind: str, mask: np.ndarray | None = None) -> np.ndarray:
        """Exact-source 4-RDM or 4-PDM, only the masked elements when measured."""
        if self.mode == "oracle":
            o = self._oracle_rdms()
            return o.gamma4 if kind == "rdm" else pdm4_from_rdms(o)
        obs = rdm_observables(self.cfg.n_active, (4,), kind, symmetry=self.symmetry, include=mask)
        est = self._measure(obs)
        return assemble_tensor(est.values, obs, kind, 4)


def build_rdms(source: RDMSource, lower: RDMSet, mode: str, threshold: float) -> tuple[RDMSet, dict]:
    """Attach the 4-RDM model named by ``mode`` to measured lower-rank RDMs."""
    n = lower.n_active
    diag: dict = {}
    if mode == "none" or lower.n_electrons < 4:
        return lower.with_gamma4(np.zeros((n,) * 8), "none"), diag
    if mode == "exact":
        g4 = source.rank4("rdm")
        return lower.with_gamma4(g4, "exact"), diag
    cu4 = cu4_gamma4(lower)
    if mode == "cu4":
        return lower.with_gamma4(cu4, "cu4"), diag
    variant = "rdm" if mode == "cu4-rdm-filtered" else "pdm"
    base = cu4 if variant == "rdm" else pdm4_from_rdms(lower, cu4)
    mask = np.abs(base) > threshold
    exact = source.rank4(variant, mask)
    res = filtered_gamma4(lower, exact, variant=variant, threshold=threshold, cu4=cu4)
    diag["replaced_fraction"] = res.replaced_fraction
    return lower.with_gamma4(res.gamma4, res.variant), diag


def run_point(cfg: RunConfig, label: float, system) -> CurvePoint:
    """Run every stage for one geometry; errors become a failed point.

    ``system`` is an FCIDUMP path or an :class:`MOIntegrals` instance.
    """
    point = CurvePoint(label)
    try:
        ints, spaces, ah = _setup(cfg, system)
        ham = qubit_hamiltonian(ah.h1_eff, ah.eri_act, ah.e_frozen)
        prep = prepare_state(cfg, spaces, ah, ham)
        point.diagnostics.update(prep.diagnostics)
        # the measured state's sector, which can differ from the reference determinant's
        symmetry = find_z2_symmetries(ham).for_state(prep.state.amplitudes)
        source = RDMSource(cfg, prep.state, spaces.n_active_electrons, symmetry)
        lower = source.lower()
        thr = cfg.gamma4.threshold
        rdms, diag = build_rdms(source, lower, cfg.gamma4.mode, thr)
        point.diagnostics.update(diag)
        if rdms.gamma4 is not None and spaces.n_active_electrons >= 4:
            point.diagnostics["gamma4_density"] = sparsity_report(rdms.gamma4, thr).density
            point.diagnostics["pdm4_density"] = sparsity_report(pdm4_from_rdms(rdms), thr).density
        res = sc_nevpt2_from_rdms(ints, spaces, rdms, prep.e_reference, canonicalize=cfg.canonicalize)
        point.e_reference, point.e2, point.e_total = prep.e_reference, res.e2, res.e_total
        point.classes = res.class_energies()
        for mode in cfg.gamma4.compare:
            alt, _ = build_rdms(source, lower, mode, thr)
            point.variants[mode] = sc_nevpt2_from_rdms(ints, spaces, alt, prep.e_reference,
                                                       canonicalize=cfg.canonicalize).e_total
        point.diagnostics.update({k: v for k, v in source.diagnostics.items() if v is not None})
        if cfg.oracle_check:
            ref = sc_nevpt2_oracle(ints, spaces, prep.casci, canonicalize=cfg.canonicalize)
            point.diagnostics["oracle_max_class_error"] = max(
                abs(ref.classes[c].energy - res.classes[c].energy) for c in CLASS_LABELS)
        if res.warnings:
            log.warning("point %s: %s", label, "; ".join(res.warnings))
    except Exception as exc:  # failure isolation: keep the rest of the scan
        log.exception("point %s failed", label)
        point.status = "failed"
        point.diagnostics["error"] = f"{type(exc).__name__}: {exc}"
    return point


def _run_point_args(args):
    return run_point(*args)


def atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def point_filename(label: float) -> str:
    return f"point_{label:.6f}.json"


def run_pipeline(cfg: RunConfig, workers: int | None = None) -> list[CurvePoint]:
    """Run all points, writing per-point JSON as each finishes, then aggregates."""
    workers = worker_count() if workers is None else workers
    jobs = [(cfg, p.label, p.fcidump) for p in cfg.points]
    out_dir = cfg.output_dir
    results: list[CurvePoint] = []
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for pt in pool.map(_run_point_args, jobs):
                atomic_write(out_dir / point_filename(pt.label), report([pt], "json"))
                results.append(pt)
    else:
        for job in jobs:
            pt = run_point(*job)
            atomic_write(out_dir / point_filename(pt.label), report([pt], "json"))
            results.append(pt)
    write_aggregates(results, out_dir, cfg.name)
    return results


def write_aggregates(results: list[CurvePoint], out_dir: Path, name: str) -> None:
    atomic_write(out_dir / f"{name}.csv", report(results, "csv"))
    atomic_write(out_dir / f"{name}.dat", report(results, "dat"))
    variants = {}
    for pt in results:
        for mode, e in pt.variants.items():
            variants.setdefault(mode, {})[pt.label] = e
    if len(variants) >= 2:
        ref = "exact" if "exact" in variants else next(iter(variants))
        rows = energy_error_report(variants, reference=ref)
        buf = io.StringIO()
        w = csv.DictWriter(buf, ["label", "variant", "energy", "deviation", "abs_deviation"], lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(v) for k, v in r.items()})
        atomic_write(out_dir / f"{name}_deviations.csv", buf.getvalue().encode())


def _fmt(v) -> str:
    if v is None:
        return "null"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def report(results: list[CurvePoint], mode: str = "csv") -> bytes:
    """Serialize points as csv, json, dat (gnuplot) or an aligned text table."""
    if not results:
        raise ValueError("no results to report")
    if mode == "json":
        data = [r.to_dict() for r in results]
        return (json.dumps(data[0] if len(data) == 1 else data, indent=2, sort_keys=False) + "\n").encode()
    rows = []
    for r in results:
        d = r.to_dict()
        row = {"label": r.label, "status": r.status, "e_reference": r.e_reference, "e2": r.e2,
               "e_total": r.e_total}
        row.update({f"e2[{c}]": d["classes"][c] for c in CLASS_LABELS})
        row.update(d["diagnostics"])
        rows.append(row)
    if mode == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
        return buf.getvalue().encode()
    if mode == "dat":
        lines = ["# label e_reference e2 e_total"]
        for r in results:
            body = f"{r.label!r} {_fmt(r.e_reference)} {_fmt(r.e2)} {_fmt(r.e_total)}"
            lines.append(body if r.status == "ok" else "# failed " + body)
        return ("\n".join(lines) + "\n").encode()
    if mode == "table":
        cols = ("label", "status", "e_reference", "e2", "e_total")
        cells = [[_fmt(row[c]) for c in cols] for row in rows]
        widths = [max(len(c), *(len(x[i]) for x in cells)) for i, c in enumerate(cols)]
        out = ["  ".join(c.ljust(w) for c, w in zip(cols, widths))]
        out += ["  ".join(x.ljust(w) for x, w in zip(cell, widths)) for cell in cells]
        return ("\n".join(out) + "\n").encode()
    raise ValueError(f"unsupported report mode {mode!r}; use csv, json, dat or table")


def load_results(directory: str | Path) -> list[CurvePoint]:
    files = sorted(Path(directory).glob("point_*.json"))
    pts = [CurvePoint.from_dict(json.loads(f.read_text())) for f in files]
    return sorted(pts, key=lambda p: p.label)


def plan_report(cfg: RunConfig, point_index: int = 0) -> bytes:
    """CSV of measurement-circuit counts per active space and 4-RDM approximation."""
    path = cfg.points[point_index].fcidump
    sizes = cfg.plan_active_spaces or (cfg.n_active,)
    buf = io.StringIO()
    w = None
    for n_act in sizes:
        sub = RunConfig(cfg.name, cfg.points, n_act, cfg.n_active_electrons, cfg.output_dir)
        ints, spaces, ah = _setup(sub, path)
        ham = qubit_hamiltonian(ah.h1_eff, ah.eri_act, ah.e_frozen)
        state = casci_solve(ah, spaces).statevector()
        sym = find_z2_symmetries(ham).for_state(state.amplitudes)
        lower = statevector_rdms(state, (1, 2, 3))
        mask = np.abs(pdm4_from_rdms(lower, cu4_gamma4(lower))) > cfg.gamma4.threshold
        rows = plan_cost_rows(n_act, spaces.n_active_electrons, ham, symmetry=sym, pdm_mask=mask,
                              strategy=cfg.measurement.strategy)
        for r in rows:
            d = r.as_dict()
            if w is None:
                w = csv.DictWriter(buf, list(d), lineterminator="\n")
                w.writeheader()
            w.writerow(d)
    return buf.getvalue().encode()


__all__ = ["CurvePoint", "run_pipeline", "run_point", "report", "load_results", "plan_report",
           "worker_count"]
