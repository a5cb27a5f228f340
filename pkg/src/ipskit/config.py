"""Experiment configuration: YAML schema, validation, and construction of
the model objects an experiment needs.

Configs are strict: unknown sections or keys are rejected so that a typo
cannot silently run a different experiment than intended.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .geometry import DecayFunction, Region, as_site, centered_window
from .rates import BoundaryRule, IndependentFlip, LongRangeGlauberIsing, RateFamily

EXPERIMENTS = (
    "constants",
    "gamma-flow",
    "restriction",
    "refined-restriction",
    "correlation",
    "stationary",
    "entropy",
    "attractor",
)


class ConfigError(ValueError):
    """Schema violation; maps to exit code 2."""


_FAMILY_KEYS = {"family", "q", "beta", "rho_kind", "alpha", "R_J", "L",
                "flip_rate"}
_GEOMETRY_KEYS = {"dim", "window_radius", "lam", "boundary", "initial",
                  "h_values", "k_values", "interior_radius", "h_max",
                  "f_site", "g_site", "schedule_k", "c_speed", "cases"}
_NUMERICS_KEYS = {"tol", "seed", "replicas", "threads", "t_values",
                  "tau_values"}
_OUTPUT_KEYS = {"dir"}


@dataclass
class ExperimentConfig:
    experiment: str
    family: dict
    geometry: dict
    numerics: dict
    output: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        try:
            raw = yaml.safe_load(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except yaml.YAMLError as exc:
            raise ConfigError(f"config is not valid YAML: {exc}")
        return cls.from_dict(raw)

    @classmethod
    def from_dict(cls, raw) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a mapping")
        unknown = set(raw) - {"experiment", "family", "geometry", "numerics",
                              "output"}
        if unknown:
            raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
        experiment = raw.get("experiment")
        if experiment not in EXPERIMENTS:
            raise ConfigError(
                f"experiment must be one of {EXPERIMENTS}, got {experiment!r}")
        cfg = cls(
            experiment=experiment,
            family=dict(raw.get("family") or {}),
            geometry=dict(raw.get("geometry") or {}),
            numerics=dict(raw.get("numerics") or {}),
            output=dict(raw.get("output") or {}),
        )
        cfg.validate()
        return cfg

    def validate(self):
        for name, section, allowed in (
            ("family", self.family, _FAMILY_KEYS),
            ("geometry", self.geometry, _GEOMETRY_KEYS),
            ("numerics", self.numerics, _NUMERICS_KEYS),
            ("output", self.output, _OUTPUT_KEYS),
        ):
            unknown = set(section) - allowed
            if unknown:
                raise ConfigError(
                    f"unknown keys in [{name}]: {sorted(unknown)}")
        kind = self.family.get("family", "glauber")
        if kind not in ("glauber", "independent_flip"):
            raise ConfigError(f"unknown family {kind!r}")
        dim = self.geometry.get("dim", 1)
        if dim not in (1, 2):
            raise ConfigError(f"dim must be 1 or 2, got {dim}")
        rho_kind = self.family.get("rho_kind", "exponential")
        alpha = float(self.family.get("alpha", 1.0))
        if rho_kind not in ("exponential", "power_law"):
            raise ConfigError(f"unknown rho_kind {rho_kind!r}")
        needs_tail = self.experiment in ("restriction", "refined-restriction",
                                         "stationary")
        if needs_tail and rho_kind == "power_law" and alpha <= dim:
            raise ConfigError(
                f"(R4) fails: power-law alpha={alpha} <= dim={dim}, "
                "tail sums diverge")
        bnd = self.geometry.get("boundary", "all_plus")
        if bnd not in ("all_plus", "all_minus", "alternating"):
            raise ConfigError(f"unknown boundary {bnd!r}")
        init = self.geometry.get("initial", "all_plus")
        if init not in ("all_plus", "all_minus", "alternating"):
            raise ConfigError(f"unknown initial pattern {init!r}")

    # -- constructors -------------------------------------------------------

    def decay(self) -> DecayFunction:
        return DecayFunction(self.family.get("rho_kind", "exponential"),
                             float(self.family.get("alpha", 1.0)))

    def rate_family(self) -> RateFamily:
        kind = self.family.get("family", "glauber")
        if kind == "independent_flip":
            return IndependentFlip(
                flip_rate=float(self.family.get("flip_rate", 1.0)),
                q=int(self.family.get("q", 2)),
                L=float(self.family.get("L", 1.0)))
        return LongRangeGlauberIsing(
            beta=float(self.family.get("beta", 0.5)),
            rho_j=self.decay(),
            r_j=int(self.family.get("R_J", 6)),
            q=int(self.family.get("q", 2)),
            L=float(self.family.get("L", 1.0)))

    @property
    def dim(self) -> int:
        return int(self.geometry.get("dim", 1))

    def window(self) -> Region:
        return centered_window(int(self.geometry.get("window_radius", 6)),
                               self.dim)

    def lam(self) -> Region:
        spec = self.geometry.get("lam", [0])
        return Region.of([as_site(s) for s in spec], dim=self.dim)

    def boundary(self) -> BoundaryRule:
        return BoundaryRule(self.geometry.get("boundary", "all_plus"))

    @property
    def initial_pattern(self) -> str:
        return self.geometry.get("initial", "all_plus")

    @property
    def tol(self) -> float:
        return float(self.numerics.get("tol", 1e-12))

    @property
    def seed(self) -> int:
        return int(self.numerics.get("seed", 0))

    @property
    def replicas(self) -> int:
        return int(self.numerics.get("replicas", 10000))

    @property
    def threads(self) -> int:
        return int(self.numerics.get("threads", 1))

    def t_values(self, default=(0.25, 0.5, 1.0)) -> list[float]:
        return [float(t) for t in self.numerics.get("t_values", list(default))]

    def tau_values(self, default=(0.25, 1.0)) -> list[float]:
        return [float(t) for t in
                self.numerics.get("tau_values", list(default))]

    def override(self, seed=None, threads=None, tol=None, out_dir=None):
        if seed is not None:
            self.numerics["seed"] = int(seed)
        if threads is not None:
            self.numerics["threads"] = int(threads)
        if tol is not None:
            self.numerics["tol"] = float(tol)
        if out_dir is not None:
            self.output["dir"] = str(out_dir)
