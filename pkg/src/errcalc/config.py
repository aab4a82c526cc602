"""Run configuration: a JSON document mapped onto nested dataclasses.

Unknown keys are rejected at every level, all violations are collected into
one :class:`ValidationError`, and JSON syntax errors carry line and column.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from typing import Any

from .errors import ArityError, ParseError, ValidationError

STRUCTURES = ("gaussian_product", "gaussian_aniso", "wiener_ou")
BASES = ("auto", "cells", "hermite", "haar")
ESTIMATORS = ("auto", "binning", "knn")


@dataclass
class StructureSpec:
    name: str = "gaussian_product"
    dim: int = 1
    matrix: list | None = None
    n_inc: int = 16


@dataclass
class NoiseSpec:
    basis: str = "auto"
    N: int | None = None
    K: int | None = None


@dataclass
class EstimatorSpec:
    kind: str = "auto"
    bins: int | None = None
    k: int | None = None


@dataclass
class SampleSpec:
    m_samples: int = 100_000
    realizations: int = 10_000


@dataclass
class TolerancePolicy:
    z: float = 3.0
    ks_level: float = 0.01
    truncation_budget: float = 0.01
    exact: float = 1e-10
    factorization: float = 1e-8


@dataclass
class WienerSpec:
    n_inc: int = 16
    degree: int = 3
    cap: int = 200


@dataclass
class RunConfig:
    seed: int
    structure: StructureSpec = field(default_factory=StructureSpec)
    functionals: dict[str, str] = field(default_factory=dict)
    inputs: list[str] = field(default_factory=list)
    white_noise: NoiseSpec = field(default_factory=NoiseSpec)
    estimator: EstimatorSpec = field(default_factory=EstimatorSpec)
    samples: SampleSpec = field(default_factory=SampleSpec)
    tolerance: TolerancePolicy = field(default_factory=TolerancePolicy)
    wiener: WienerSpec = field(default_factory=WienerSpec)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def build_structure(self):
        from .structures import gaussian_aniso, gaussian_product
        from .wiener import ou_structure

        s = self.structure
        if s.name == "wiener_ou":
            return ou_structure(s.n_inc)
        if s.name == "gaussian_aniso":
            return gaussian_aniso(s.dim, s.matrix)
        return gaussian_product(s.dim)


_NESTED = {"structure": StructureSpec, "white_noise": NoiseSpec, "estimator": EstimatorSpec,
           "samples": SampleSpec, "tolerance": TolerancePolicy, "wiener": WienerSpec}


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _build(cls, data: Any, path: str, errors: list[str]):
    if not isinstance(data, dict):
        errors.append(f"{path}: expected an object")
        return cls()
    names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            errors.append(f"{path}.{key}: unknown key")
    kwargs = {k: v for k, v in data.items() if k in names}
    return cls(**kwargs)


def parse_config(text: str) -> RunConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", exc.lineno, exc.colno, text) from None
    errors: list[str] = []
    if not isinstance(data, dict):
        raise ValidationError(["top level must be an object"])
    top = {f.name for f in dataclasses.fields(RunConfig)}
    for key in data:
        if key not in top:
            errors.append(f"{key}: unknown key")
    if "seed" not in data:
        errors.append("seed: required (no entropy default)")
    elif not _is_int(data["seed"]) or data["seed"] < 0:
        errors.append("seed: must be a non-negative integer")
    nested = {k: _build(cls, data.get(k, {}), k, errors) for k, cls in _NESTED.items()}
    functionals = data.get("functionals", {})
    if not isinstance(functionals, dict) or not all(isinstance(v, str) for v in functionals.values()):
        errors.append("functionals: expected an object of expression strings")
        functionals = {}
    inputs = data.get("inputs", [])
    if not isinstance(inputs, list) or not all(isinstance(v, str) for v in inputs):
        errors.append("inputs: expected a list of expression strings")
        inputs = []
    cfg = RunConfig(seed=data.get("seed", 0) if _is_int(data.get("seed")) else 0,
                    functionals=dict(functionals), inputs=list(inputs), **nested)
    errors.extend(validate(cfg))
    if errors:
        raise ValidationError(errors)
    # expressions are parsed last so syntax errors surface with their location
    S = cfg.build_structure()
    for name, text_ in list(cfg.functionals.items()) + [(f"inputs[{i}]", t) for i, t in enumerate(cfg.inputs)]:
        try:
            S.functional(text_)
        except ArityError as exc:
            raise ValidationError([f"functionals.{name}: {exc}"]) from None
    return cfg


def validate(cfg: RunConfig) -> list[str]:
    e = []
    s = cfg.structure
    if s.name not in STRUCTURES:
        e.append(f"structure.name: must be one of {', '.join(STRUCTURES)}")
    if not _is_int(s.dim) or s.dim < 1:
        e.append("structure.dim: must be a positive integer")
    if not _is_int(s.n_inc) or s.n_inc < 1:
        e.append("structure.n_inc: must be a positive integer")
    if s.name == "gaussian_aniso":
        m = s.matrix
        ok = isinstance(m, list) and len(m) == s.dim and all(
            isinstance(r, list) and len(r) == s.dim and all(_is_num(v) for v in r) for r in m)
        if not ok:
            e.append("structure.matrix: gaussian_aniso needs a dim x dim numeric matrix")
    if cfg.white_noise.basis not in BASES:
        e.append(f"white_noise.basis: must be one of {', '.join(BASES)}")
    for key in ("N", "K"):
        v = getattr(cfg.white_noise, key)
        if v is not None and (not _is_int(v) or v < 1):
            e.append(f"white_noise.{key}: must be a positive integer")
    if cfg.estimator.kind not in ESTIMATORS:
        e.append(f"estimator.kind: must be one of {', '.join(ESTIMATORS)}")
    for key in ("bins", "k"):
        v = getattr(cfg.estimator, key)
        if v is not None and (not _is_int(v) or v < 1):
            e.append(f"estimator.{key}: must be a positive integer")
    for key in ("m_samples", "realizations"):
        v = getattr(cfg.samples, key)
        if not _is_int(v) or v < 1:
            e.append(f"samples.{key}: must be a positive integer")
    if _is_int(cfg.samples.m_samples) and 0 < cfg.samples.m_samples < 1000:
        e.append("samples.m_samples: image structures need at least 1000")
    if _is_int(cfg.samples.realizations) and cfg.samples.realizations == 1:
        e.append("samples.realizations: variance estimates need at least 2")
    t = cfg.tolerance
    for key in ("z", "truncation_budget", "exact", "factorization"):
        v = getattr(t, key)
        if not _is_num(v) or v <= 0:
            e.append(f"tolerance.{key}: must be a positive number")
    if not _is_num(t.ks_level) or not 0 < t.ks_level < 1:
        e.append("tolerance.ks_level: must lie in (0, 1)")
    w = cfg.wiener
    for key in ("n_inc", "cap"):
        v = getattr(w, key)
        if not _is_int(v) or v < 1:
            e.append(f"wiener.{key}: must be a positive integer")
    if not _is_int(w.degree) or w.degree < 0:
        e.append("wiener.degree: must be a non-negative integer")
    return e


def load_config(path: str) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def default_config_text() -> str:
    from importlib.resources import files

    return files("errcalc").joinpath("configs/default.json").read_text(encoding="utf-8")
