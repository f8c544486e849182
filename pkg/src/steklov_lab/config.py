"""
Experiment configuration.

A configuration is one JSON document.  Every section is a frozen dataclass;
unknown keys are rejected at every level and ``from_dict(to_dict(c)) == c``.
Missing keys take the defaults below, so ``{"experiment": "spectrum"}`` is a
complete config (Euclidean unit disk).
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

from .fields import (Metric, PerturbationDirection, ScalarField, direction_from_descriptor,
                     metric_from_descriptor)

EXPERIMENTS = ("spectrum", "variation-check", "split", "scan", "wucp")
DOMAIN_KINDS = ("disk", "annulus", "file")
MASS_KINDS = ("lumped", "consistent")
PERTURBATION_KINDS = ("random", "conformal", "general", "zero")
FIXTURES = ("constant-zero", "sin-squared", "cubic-flat", "cosine")


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


def _strict(cls, d: Any, where: str) -> dict:
    if d is None:
        return {}
    if not isinstance(d, Mapping):
        raise ConfigError(f"{where}: expected an object, got {type(d).__name__}")
    names = {f.name for f in fields(cls)}
    extra = sorted(set(d) - names)
    if extra:
        raise ConfigError(f"{where}: unknown keys {extra}")
    return dict(d)


def _num(v, where: str, positive: bool = False, integer: bool = False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {v!r}")
    if integer and int(v) != v:
        raise ConfigError(f"{where}: expected an integer, got {v!r}")
    if positive and not v > 0:
        raise ConfigError(f"{where}: must be positive, got {v!r}")
    return int(v) if integer else float(v)


@dataclass(frozen=True)
class DomainSpec:
    kind: str = "disk"
    radius: float = 1.0
    r_inner: float = 0.5
    r_outer: float = 1.0
    target_h: float = 0.1
    path: str | None = None        # native mesh file, or the .node file with ``ele``
    ele: str | None = None

    @classmethod
    def from_dict(cls, d) -> "DomainSpec":
        d = _strict(cls, d, "domain")
        out = cls(**d)
        if out.kind not in DOMAIN_KINDS:
            raise ConfigError(f"domain.kind must be one of {DOMAIN_KINDS}, got {out.kind!r}")
        for k in ("radius", "r_inner", "r_outer", "target_h"):
            _num(getattr(out, k), f"domain.{k}", positive=True)
        if out.kind == "annulus" and not out.r_inner < out.r_outer:
            raise ConfigError("domain: need r_inner < r_outer")
        if out.kind == "disk" and not out.target_h < out.radius:
            raise ConfigError("domain: need target_h < radius")
        if out.kind == "file" and not out.path:
            raise ConfigError("domain: kind 'file' needs a path")
        return replace(out, radius=float(out.radius), r_inner=float(out.r_inner),
                       r_outer=float(out.r_outer), target_h=float(out.target_h))


@dataclass(frozen=True)
class PerturbationSpec:
    kind: str = "random"
    seed: int = 0
    modes: int = 3
    amplitude: float = 0.1
    steps: tuple[float, ...] | None = None   # per-experiment default when None
    trials: int = 10
    conformal_samples: int = 10    # sigma fields in the conformal identity check
    fd_samples: int = 5            # general directions in the FD check
    density_pairs: int = 20        # (psi, sigma) pairs in the density identity
    cluster: int = 1               # index into the cluster list for split
    sigma: dict | None = None      # ScalarField descriptor for kind "conformal"
    components: tuple | None = None  # [{"i", "j", "field"}] for kind "general"

    @classmethod
    def from_dict(cls, d) -> "PerturbationSpec":
        d = _strict(cls, d, "perturbation")
        if d.get("steps") is not None:
            if not isinstance(d["steps"], (list, tuple)) or not d["steps"]:
                raise ConfigError("perturbation.steps must be a non-empty list")
            d["steps"] = tuple(_num(t, "perturbation.steps", positive=True) for t in d["steps"])
        if d.get("components") is not None:
            d["components"] = tuple(dict(c) for c in d["components"])
        out = cls(**d)
        if out.kind not in PERTURBATION_KINDS:
            raise ConfigError(f"perturbation.kind must be one of {PERTURBATION_KINDS}")
        _num(out.seed, "perturbation.seed", integer=True)
        for k in ("modes", "trials", "conformal_samples", "fd_samples", "density_pairs"):
            _num(getattr(out, k), f"perturbation.{k}", positive=True, integer=True)
        _num(out.cluster, "perturbation.cluster", integer=True)
        _num(out.amplitude, "perturbation.amplitude", positive=True)
        if out.kind == "conformal" and out.sigma is None:
            raise ConfigError("perturbation: kind 'conformal' needs sigma")
        if out.kind == "general" and not out.components:
            raise ConfigError("perturbation: kind 'general' needs components")
        try:
            out.direction()
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"perturbation: {exc}") from exc
        return replace(out, amplitude=float(out.amplitude))

    def direction(self) -> PerturbationDirection | None:
        """The explicit direction, or ``None`` for seeded random sampling."""
        if self.kind == "conformal":
            return PerturbationDirection.conformal(ScalarField.from_dict(self.sigma), "config")
        if self.kind == "general":
            return direction_from_descriptor({"kind": "general", "label": "config",
                                              "components": list(self.components)})
        if self.kind == "zero":
            return PerturbationDirection.zero()
        return None


@dataclass(frozen=True)
class Tolerances:
    gap_tol: float = 1e-6
    deriv_tol: float = 1e-3
    second_deriv_tol: float = 1e-3
    zero_tol: float = 1e-8
    vanish_tol: float = 1e-8
    arc_fraction: float = 0.05
    identity_tol: float = 1e-10    # relative, exact discrete identities
    fd_tol: float = 1e-6           # relative FD mismatch at the smallest step
    order: float = 2.0
    order_tol: float = 0.2
    eig_rel_tol: float = 0.01
    split_rel_tol: float = 0.02
    residual_tol: float = 1e-8     # pencil residual

    @classmethod
    def from_dict(cls, d) -> "Tolerances":
        d = _strict(cls, d, "tolerances")
        for k, v in d.items():
            d[k] = _num(v, f"tolerances.{k}", positive=True)
        return cls(**d)


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "spectrum"
    domain: DomainSpec = field(default_factory=DomainSpec)
    metric: dict | None = None
    refinements: int = 0
    eigen_count: int = 11
    perturbation: PerturbationSpec = field(default_factory=PerturbationSpec)
    tolerances: Tolerances = field(default_factory=Tolerances)
    mass: str = "lumped"
    quad_order: int = 2
    seed: int = 0
    fixtures: tuple[str, ...] = ()
    export_matrices: bool = False  # spectrum: write K and M_b as triplet text
    output_dir: str = "out"

    @classmethod
    def from_dict(cls, d) -> "ExperimentConfig":
        d = _strict(cls, d, "config")
        if "experiment" not in d:
            raise ConfigError("config: missing 'experiment'")
        d["domain"] = DomainSpec.from_dict(d.get("domain"))
        d["perturbation"] = PerturbationSpec.from_dict(d.get("perturbation"))
        d["tolerances"] = Tolerances.from_dict(d.get("tolerances"))
        if "fixtures" in d:
            d["fixtures"] = tuple(d["fixtures"])
        out = cls(**d)
        if out.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {out.experiment!r}")
        if out.mass not in MASS_KINDS:
            raise ConfigError(f"mass must be one of {MASS_KINDS}")
        if out.quad_order not in (1, 2, 3, 4):
            raise ConfigError("quad_order must be 1..4")
        _num(out.refinements, "refinements", integer=True)
        if out.refinements < 0:
            raise ConfigError("refinements must be >= 0")
        _num(out.eigen_count, "eigen_count", positive=True, integer=True)
        _num(out.seed, "seed", integer=True)
        if not isinstance(out.export_matrices, bool):
            raise ConfigError("export_matrices must be true or false")
        bad = [f for f in out.fixtures if f not in FIXTURES]
        if bad:
            raise ConfigError(f"unknown fixtures {bad}; choose from {FIXTURES}")
        try:
            out.build_metric()
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"metric: {exc}") from exc
        return out

    def to_dict(self) -> dict:
        d = asdict(self)
        if self.perturbation.steps is not None:
            d["perturbation"]["steps"] = list(self.perturbation.steps)
        if self.perturbation.components is not None:
            d["perturbation"]["components"] = list(self.perturbation.components)
        d["fixtures"] = list(self.fixtures)
        return d

    def build_metric(self) -> Metric:
        return metric_from_descriptor(self.metric)

    def with_overrides(self, seed: int | None = None, output_dir: str | None = None):
        out = self
        if seed is not None:
            out = replace(out, seed=int(seed),
                          perturbation=replace(out.perturbation, seed=int(seed)))
        if output_dir is not None:
            out = replace(out, output_dir=str(output_dir))
        return out


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    return ExperimentConfig.from_dict(data)


def dump_config(cfg: ExperimentConfig) -> str:
    return json.dumps(cfg.to_dict(), sort_keys=True, indent=2) + "\n"
