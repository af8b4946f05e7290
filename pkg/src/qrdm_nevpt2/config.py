"""Run configuration: YAML schema, defaults and validation."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import yaml

from .validation import ConfigError, check_choice, check_nonnegative, check_positive_int

STATE_PREP_MODES = ("casci", "vqe-exact", "vqe-sampled")
MEASUREMENT_MODES = ("oracle", "exact-plan", "shots")
GAMMA4_MODES = ("exact", "cu4", "cu4-rdm-filtered", "cu4-pdm-filtered", "none")
STRATEGIES = ("general", "qubitwise")


@dataclass(frozen=True)
class PointSpec:
    label: float
    fcidump: Path


@dataclass(frozen=True)
class StatePrepSettings:
    mode: str = "casci"
    max_iterations: int = 200
    tolerance: float = 1e-8
    shots: int = 10000
    seed: int | None = None


@dataclass(frozen=True)
class MeasurementSettings:
    mode: str = "oracle"
    shots: int = 10000
    seed: int | None = None
    readout: float = 0.0
    depolarizing: float = 0.0
    pmsv: bool = False
    strategy: str = "general"
    symmetry_reduce: bool = True


@dataclass(frozen=True)
class Gamma4Settings:
    mode: str = "exact"
    threshold: float = 1e-16
    compare: tuple = ()


@dataclass(frozen=True)
class RunConfig:
    """Everything needed to run one scan. Paths are absolute after loading."""

    name: str
    points: tuple
    n_active: int
    n_active_electrons: int
    output_dir: Path
    state_prep: StatePrepSettings = field(default_factory=StatePrepSettings)
    measurement: MeasurementSettings = field(default_factory=MeasurementSettings)
    gamma4: Gamma4Settings = field(default_factory=Gamma4Settings)
    canonicalize: bool = True
    oracle_check: bool = False
    plan_active_spaces: tuple = ()

    @classmethod
    def from_dict(cls, data: dict, base_dir: str | Path = ".") -> "RunConfig":
        base = Path(base_dir)
        if not isinstance(data, dict):
            raise ConfigError("configuration root must be a mapping")
        unknown = set(data) - {"name", "points", "active_space", "output_dir", "state_prep", "measurement",
                               "gamma4", "nevpt2", "plan"}
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        try:
            pts = tuple(
                PointSpec(float(p["label"]), _resolve(base, p["fcidump"])) for p in data["points"]
            )
            space = data["active_space"]
            nev = data.get("nevpt2", {}) or {}
            g4 = dict(data.get("gamma4", {}) or {})
            g4["compare"] = tuple(g4.get("compare", ()))
            plan = data.get("plan", {}) or {}
            return cls(
                name=str(data.get("name", "run")),
                points=pts,
                n_active=int(space["n_active"]),
                n_active_electrons=int(space["n_active_electrons"]),
                output_dir=_resolve(base, data.get("output_dir", "results")),
                state_prep=StatePrepSettings(**(data.get("state_prep", {}) or {})),
                measurement=MeasurementSettings(**(data.get("measurement", {}) or {})),
                gamma4=Gamma4Settings(**g4),
                canonicalize=bool(nev.get("canonicalize", True)),
                oracle_check=bool(nev.get("oracle_check", False)),
                plan_active_spaces=tuple(int(n) for n in plan.get("active_spaces", ())),
            )
        except KeyError as exc:
            raise ConfigError(f"missing configuration key {exc}") from None
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        with path.open() as fh:
            data = yaml.safe_load(fh)
        return cls.from_dict(data, path.parent)

    def with_overrides(self, **kw) -> "RunConfig":
        """Apply flat overrides such as ``gamma4="cu4"`` or ``shots=1000``."""
        cfg = self
        if kw.get("output_dir") is not None:
            cfg = replace(cfg, output_dir=Path(kw["output_dir"]).resolve())
        if kw.get("state_prep") is not None:
            cfg = replace(cfg, state_prep=replace(cfg.state_prep, mode=kw["state_prep"]))
        meas = {k: kw[k] for k in ("shots", "seed") if kw.get(k) is not None}
        if kw.get("measurement") is not None:
            meas["mode"] = kw["measurement"]
        if kw.get("pmsv") is not None:
            meas["pmsv"] = kw["pmsv"]
        if meas:
            cfg = replace(cfg, measurement=replace(cfg.measurement, **meas))
        if kw.get("gamma4") is not None:
            cfg = replace(cfg, gamma4=replace(cfg.gamma4, mode=kw["gamma4"]))
        return cfg

    def to_dict(self) -> dict:
        d = asdict(self)
        d["output_dir"] = str(self.output_dir)
        d["points"] = [{"label": p.label, "fcidump": str(p.fcidump)} for p in self.points]
        d["gamma4"]["compare"] = list(self.gamma4.compare)
        d["plan_active_spaces"] = list(self.plan_active_spaces)
        return d

    def validate(self, check_files: bool = True) -> list[str]:
        """Collect every problem instead of stopping at the first one."""
        problems: list[str] = []

        def guard(fn, *args):
            try:
                fn(*args)
            except ConfigError as exc:
                problems.append(str(exc))

        if not self.points:
            problems.append("at least one geometry point is required")
        labels = [p.label for p in self.points]
        if len(set(labels)) != len(labels):
            problems.append("point labels must be unique")
        guard(check_positive_int, "active_space.n_active", self.n_active)
        guard(check_nonnegative, "active_space.n_active_electrons", self.n_active_electrons)
        guard(check_choice, "state_prep.mode", self.state_prep.mode, STATE_PREP_MODES)
        guard(check_choice, "measurement.mode", self.measurement.mode, MEASUREMENT_MODES)
        guard(check_choice, "measurement.strategy", self.measurement.strategy, STRATEGIES)
        guard(check_choice, "gamma4.mode", self.gamma4.mode, GAMMA4_MODES)
        for v in self.gamma4.compare:
            guard(check_choice, "gamma4.compare", v, GAMMA4_MODES)
        for name in ("readout", "depolarizing"):
            p = getattr(self.measurement, name)
            if not 0.0 <= p <= 1.0:
                problems.append(f"measurement.{name} must lie in [0, 1]")
        if self.measurement.mode == "shots":
            guard(check_positive_int, "measurement.shots", self.measurement.shots)
            if self.measurement.seed is None:
                problems.append("measurement.seed is required in shots mode")
        if self.measurement.pmsv and self.measurement.mode != "shots":
            problems.append("measurement.pmsv only applies in shots mode")
        if self.state_prep.mode == "vqe-sampled" and self.state_prep.seed is None:
            problems.append("state_prep.seed is required for vqe-sampled")
        modes = (self.gamma4.mode,) + tuple(self.gamma4.compare)
        if "none" in modes and self.n_active_electrons > 3:
            problems.append("gamma4 mode 'none' needs at most 3 active electrons")
        if check_files:
            for p in self.points:
                if not p.fcidump.is_file():
                    problems.append(f"FCIDUMP not found: {p.fcidump}")
        return problems


def _resolve(base: Path, p: str | Path) -> Path:
    p = Path(p)
    return (p if p.is_absolute() else base / p).resolve()
