"""Estimator-style facade over the pipeline (``fit`` / ``predict`` / ``get_params``)."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator

from .config import (GAMMA4_MODES, MEASUREMENT_MODES, STATE_PREP_MODES, Gamma4Settings, MeasurementSettings,
                     PointSpec, RunConfig, StatePrepSettings)
from .measurement import assemble_rdms, execute_plan, plan_measurements, rdm_observables
from .pipeline import CurvePoint, run_point
from .simulator import NoiseModel, StateVector
from .validation import ConfigError, check_choice, check_positive_int, check_seed, check_systems


class QRDMNevpt2(BaseEstimator):
    """SC-NEVPT2 energies of one or more geometries.

    Parameters mirror the run configuration. ``fit`` takes a list of FCIDUMP
    paths or :class:`MOIntegrals` and optional point labels as ``y``.

    Attributes:
        results_: one :class:`CurvePoint` per fitted system.
        e_total_: total energies (NaN for failed points).
    """

    def __init__(self, n_active: int = 2, n_active_electrons: int = 2, state_prep: str = "casci",
                 measurement: str = "oracle", gamma4: str = "exact", shots: int = 10000,
                 seed: int | None = None, pmsv: bool = False, readout: float = 0.0,
                 canonicalize: bool = True, oracle_check: bool = False):
        self.n_active = n_active
        self.n_active_electrons = n_active_electrons
        self.state_prep = state_prep
        self.measurement = measurement
        self.gamma4 = gamma4
        self.shots = shots
        self.seed = seed
        self.pmsv = pmsv
        self.readout = readout
        self.canonicalize = canonicalize
        self.oracle_check = oracle_check

    def _config(self, n_points: int) -> RunConfig:
        check_positive_int("n_active", self.n_active)
        check_choice("state_prep", self.state_prep, STATE_PREP_MODES)
        check_choice("measurement", self.measurement, MEASUREMENT_MODES)
        check_choice("gamma4", self.gamma4, GAMMA4_MODES)
        sampled = self.measurement == "shots" or self.state_prep == "vqe-sampled"
        check_seed("seed", self.seed, sampled)
        cfg = RunConfig(
            name="estimator", points=(), n_active=self.n_active,
            n_active_electrons=self.n_active_electrons, output_dir=Path("."),
            state_prep=StatePrepSettings(mode=self.state_prep, seed=self.seed),
            measurement=MeasurementSettings(mode=self.measurement, shots=self.shots, seed=self.seed,
                                            readout=self.readout, pmsv=self.pmsv),
            gamma4=Gamma4Settings(mode=self.gamma4), canonicalize=self.canonicalize,
            oracle_check=self.oracle_check,
        )
        problems = [p for p in cfg.validate(check_files=False) if "geometry point" not in p]
        if problems:
            raise ConfigError("; ".join(problems))
        return cfg

    def fit(self, X, y=None) -> "QRDMNevpt2":
        systems = check_systems(X)
        labels = list(range(len(systems))) if y is None else [float(v) for v in y]
        if len(labels) != len(systems):
            raise ConfigError("labels and systems differ in length")
        cfg = self._config(len(systems))
        self.results_: list[CurvePoint] = [run_point(cfg, lab, s) for lab, s in zip(labels, systems)]
        self.e_total_ = np.array([np.nan if p.e_total is None else p.e_total for p in self.results_])
        return self

    def predict(self, X) -> np.ndarray:
        """Total energies of new systems (runs the pipeline)."""
        return self.fit(X).e_total_


class RDMEstimator(BaseEstimator):
    """Spin-traced RDMs of a prepared state through a measurement plan."""

    def __init__(self, ranks=(1, 2, 3), mode: str = "exact", shots: int = 10000, seed: int | None = None,
                 strategy: str = "general", readout: float = 0.0):
        self.ranks = ranks
        self.mode = mode
        self.shots = shots
        self.seed = seed
        self.strategy = strategy
        self.readout = readout

    def fit(self, state: StateVector, n_electrons: int) -> "RDMEstimator":
        check_choice("mode", self.mode, ("exact", "shots"))
        check_seed("seed", self.seed, self.mode == "shots")
        obs = rdm_observables(state.n_qubits // 2, tuple(self.ranks))
        self.plan_ = plan_measurements(obs, self.strategy)
        est = execute_plan(self.plan_, state, self.mode, shots=self.shots, seed=self.seed,
                           noise=NoiseModel(readout=self.readout))
        self.rdms_ = assemble_rdms(est.values, obs, n_electrons, self.mode)
        return self
