"""JSON configuration schemas and builders for the command-line interface.

Configs are validated against the schemas below before anything is computed.
Every object rejects unknown keys.
"""

from __future__ import annotations

import copy
import json
import math
from typing import Any

import jsonschema

from .genbound import ConcentrationConfig, GaussianScenario, ProblemTemplate
from .oracle import OracleConfig
from .reform import Task
from .risk import (
    Absolute,
    AbsoluteValue,
    CVaR,
    CVaRDeviation,
    Distortion,
    DistortionDeviation,
    DistortionFunction,
    ExpectedLoss,
    ExpNeg,
    HingeNeg,
    HingePos,
    InfRepDev,
    InfRepRisk,
    Linear,
    Loss,
    Negated,
    PowerOf,
    Risk,
    ShiftedAbs,
    TwoSidedHinge,
    Variance,
    softplus,
)
from .solver import Annulus, Box, DecisionSet, FiniteSet, FixedFirstCoordinate, NormBall, SolverConfig
from .transport import BallSpec, Norm

__all__ = [
    "ConfigError",
    "SOLVE_SCHEMA",
    "VERIFY_SCHEMA",
    "COVERAGE_SCHEMA",
    "validate",
    "load_json",
    "build_loss",
    "build_risk",
    "build_ball",
    "build_norm",
    "build_decision_set",
    "build_solver_config",
    "build_oracle_config",
    "build_scenario",
    "build_template",
    "build_concentration",
]


class ConfigError(ValueError):
    """Configuration does not match its schema or describes an invalid object."""


def _obj(props: dict, required=(), **extra) -> dict:
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False, **extra}


def _kind(name: str, props: dict | None = None, required=()) -> dict:
    return _obj({"kind": {"const": name}, **(props or {})}, ["kind", *required])


_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_NONNEG = {"type": "number", "minimum": 0}
_ORDER = {"oneOf": [{"type": "number", "minimum": 1}, {"enum": ["inf", "∞"]}]}
_VEC = {"type": "array", "items": _NUM, "minItems": 1}

_DEFS = {
    "loss": {"oneOf": [
        _kind("Linear", {"slope": _NUM, "intercept": _NUM}),
        _kind("Absolute", {"center": _NUM, "scale": _POS, "intercept": _NUM}),
        _kind("HingePos", {"m": _NUM}),
        _kind("HingeNeg", {"m": _NUM}),
        _kind("TwoSidedHinge", {"m1": _NUM, "m2": _NONNEG}),
        _kind("ShiftedAbs", {"m": _NUM, "b": _POS}),
        _kind("PowerOf", {"base": {"$ref": "#/$defs/loss"}, "exponent": {"type": "number", "minimum": 1}},
              ["base", "exponent"]),
        _kind("ExpNeg", {"t": _POS}),
        _kind("softplus"),
    ]},
    "distortion": _obj({"knots": _VEC, "values": _VEC}, ["knots", "values"]),
    "risk": {"oneOf": [
        _kind("ExpectedLoss", {"loss": {"$ref": "#/$defs/loss"}}, ["loss"]),
        _kind("CVaR", {"alpha": {"type": "number", "minimum": 0, "exclusiveMaximum": 1}}, ["alpha"]),
        _kind("CVaRDeviation", {"alpha": {"type": "number", "minimum": 0, "exclusiveMaximum": 1}}, ["alpha"]),
        _kind("Distortion", {"h": {"$ref": "#/$defs/distortion"}}, ["h"]),
        _kind("DistortionDeviation", {"h": {"$ref": "#/$defs/distortion"}}, ["h"]),
        _kind("InfRepRisk", {"loss": {"$ref": "#/$defs/loss"}, "p": {"type": "number", "minimum": 1},
                             "c": {"type": "number", "minimum": 1}}, ["loss", "p"]),
        _kind("InfRepDev", {"loss": {"$ref": "#/$defs/loss"}, "p": {"type": "number", "minimum": 1}},
              ["loss", "p"]),
        _kind("Variance"),
        _kind("Negated", {"inner": {"$ref": "#/$defs/risk"}}, ["inner"]),
        _kind("AbsoluteValue", {"inner": {"$ref": "#/$defs/risk"}}, ["inner"]),
    ]},
    "norm": {"oneOf": [
        {"enum": ["L1", "L2", "Linf"]},
        _kind("WeightedL2", {"weights": {"type": "array", "items": _POS, "minItems": 1}}, ["weights"]),
    ]},
    "ball": _obj({"p": _ORDER, "epsilon": _NONNEG, "norm": {"$ref": "#/$defs/norm"}}, ["p", "epsilon"]),
    "ball_shape": _obj({"p": _ORDER, "norm": {"$ref": "#/$defs/norm"}}, ["p"]),
    "decision_set": {"oneOf": [
        _kind("NormBall", {"U": _POS}, ["U"]),
        _kind("Annulus", {"L": _POS, "U": _POS}, ["L", "U"]),
        _kind("Box", {"lo": _VEC, "hi": _VEC}, ["lo", "hi"]),
        _kind("FiniteSet", {"betas": {"type": "array", "items": _VEC, "minItems": 1}}, ["betas"]),
        _kind("FixedFirstCoordinate", {"inner": {"$ref": "#/$defs/decision_set"}}, ["inner"]),
    ]},
    "solver": _obj({
        "iters": {"type": "integer", "minimum": 1},
        "restarts": {"type": "integer", "minimum": 1},
        "step0": {"oneOf": [_POS, {"type": "null"}]},
        "grid": {"type": "integer", "minimum": 2},
    }),
    "oracle": _obj({
        "restarts": {"type": "integer", "minimum": 0},
        "iters": {"type": "integer", "minimum": 0},
        "n_max": {"type": "number", "minimum": 1},
        "tail_grid": {"type": "integer", "minimum": 2},
    }),
    "task": {"enum": ["classify", "regress", "riskmin"]},
    "seed": {"type": "integer", "minimum": 0},
}

SOLVE_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "$defs": _DEFS,
    **_obj({
        "task": {"$ref": "#/$defs/task"},
        "risk": {"$ref": "#/$defs/risk"},
        "ball": {"$ref": "#/$defs/ball"},
        "decision_set": {"$ref": "#/$defs/decision_set"},
        "solver": {"$ref": "#/$defs/solver"},
        "seed": {"$ref": "#/$defs/seed"},
    }, ["risk", "ball", "decision_set"]),
}

VERIFY_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "$defs": _DEFS,
    **_obj({
        "families": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "instances_per_family": {"type": "integer", "minimum": 1},
        "falsification": {"type": "boolean"},
        "falsification_instances": {"type": "integer", "minimum": 1},
        "oracle": {"$ref": "#/$defs/oracle"},
        "seed": {"$ref": "#/$defs/seed"},
    }),
}

COVERAGE_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "$defs": _DEFS,
    **_obj({
        "scenario": _obj({"kind": {"const": "gaussian"}, "n": {"type": "integer", "minimum": 1},
                          "labelled": {"type": "boolean"}, "noise": _NONNEG}, ["kind", "n"]),
        "task": {"$ref": "#/$defs/task"},
        "risk": {"$ref": "#/$defs/risk"},
        "ball": {"$ref": "#/$defs/ball_shape"},
        "decision_set": {"$ref": "#/$defs/decision_set"},
        "eps_grid": {"type": "array", "items": _NONNEG, "minItems": 1},
        "trials": {"type": "integer", "minimum": 1},
        "N": {"type": "integer", "minimum": 1},
        "holdout": {"type": "integer", "minimum": 1},
        "solver": {"$ref": "#/$defs/solver"},
        "seed": {"$ref": "#/$defs/seed"},
    }, ["scenario", "risk", "ball", "decision_set", "eps_grid", "trials"]),
}


def validate(cfg: Any, schema: dict) -> dict:
    """Validate ``cfg`` and return a deep copy; raises :class:`ConfigError`."""
    validator = jsonschema.Draft202012Validator(schema)
    err = jsonschema.exceptions.best_match(validator.iter_errors(cfg))
    if err is not None:
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise ConfigError(f"invalid config at {where}: {err.message}")
    return copy.deepcopy(cfg)


def load_json(path) -> Any:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None


def _order(p):
    return math.inf if p in ("inf", "∞") else float(p)


def build_loss(d: dict) -> Loss:
    kind = d["kind"]
    if kind == "Linear":
        return Linear(d.get("slope", 1.0), d.get("intercept", 0.0))
    if kind == "Absolute":
        return Absolute(d.get("center", 0.0), d.get("scale", 1.0), d.get("intercept", 0.0))
    if kind == "HingePos":
        return HingePos(d.get("m", 0.0))
    if kind == "HingeNeg":
        return HingeNeg(d.get("m", 0.0))
    if kind == "TwoSidedHinge":
        return TwoSidedHinge(d.get("m1", 0.0), d.get("m2", 0.0))
    if kind == "ShiftedAbs":
        return ShiftedAbs(d.get("m", 0.0), d.get("b", 1.0))
    if kind == "PowerOf":
        return PowerOf(build_loss(d["base"]), d["exponent"])
    if kind == "ExpNeg":
        return ExpNeg(d.get("t", 1.0))
    if kind == "softplus":
        return softplus()
    raise ConfigError(f"unknown loss kind {kind!r}")


def build_risk(d: dict) -> Risk:
    kind = d["kind"]
    try:
        if kind == "ExpectedLoss":
            return ExpectedLoss(build_loss(d["loss"]))
        if kind == "CVaR":
            return CVaR(d["alpha"])
        if kind == "CVaRDeviation":
            return CVaRDeviation(d["alpha"])
        if kind in ("Distortion", "DistortionDeviation"):
            h = DistortionFunction(d["h"]["knots"], d["h"]["values"])
            return Distortion(h) if kind == "Distortion" else DistortionDeviation(h)
        if kind == "InfRepRisk":
            return InfRepRisk(build_loss(d["loss"]), d["p"], d.get("c", 1.0))
        if kind == "InfRepDev":
            return InfRepDev(build_loss(d["loss"]), d["p"])
        if kind == "Variance":
            return Variance()
        if kind == "Negated":
            return Negated(build_risk(d["inner"]))
        if kind == "AbsoluteValue":
            return AbsoluteValue(build_risk(d["inner"]))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"invalid {kind} risk: {exc}") from None
    raise ConfigError(f"unknown risk kind {kind!r}")


def build_norm(d) -> Norm:
    if d is None:
        return Norm.l2()
    if isinstance(d, str):
        return Norm.from_name(d)
    return Norm.weighted_l2(d["weights"])


def build_ball(d: dict, epsilon: float | None = None) -> BallSpec:
    eps = d["epsilon"] if epsilon is None else epsilon
    return BallSpec(_order(d["p"]), float(eps), build_norm(d.get("norm")))


def build_decision_set(d: dict) -> DecisionSet:
    kind = d["kind"]
    try:
        if kind == "NormBall":
            return NormBall(d["U"])
        if kind == "Annulus":
            return Annulus(d["L"], d["U"])
        if kind == "Box":
            return Box(tuple(d["lo"]), tuple(d["hi"]))
        if kind == "FiniteSet":
            return FiniteSet(tuple(tuple(b) for b in d["betas"]))
        if kind == "FixedFirstCoordinate":
            return FixedFirstCoordinate(build_decision_set(d["inner"]))
    except ValueError as exc:
        raise ConfigError(f"invalid {kind} decision set: {exc}") from None
    raise ConfigError(f"unknown decision set kind {kind!r}")


def build_solver_config(d: dict | None, seed: int) -> SolverConfig:
    return SolverConfig(**{**(d or {}), "seed": seed})


def build_oracle_config(d: dict | None, seed: int) -> OracleConfig:
    d = dict(d or {})
    if "n_max" in d:
        d["n_max"] = float(d["n_max"])
    return OracleConfig(**{**d, "seed": seed})


def build_scenario(d: dict) -> GaussianScenario:
    return GaussianScenario(d["n"], d.get("labelled", False), d.get("noise", 0.5))


def build_template(cfg: dict) -> ProblemTemplate:
    task = Task.parse(cfg.get("task", "riskmin"))
    dset = build_decision_set(cfg["decision_set"])
    if task is Task.REGRESSION and not isinstance(dset, FixedFirstCoordinate):
        dset = FixedFirstCoordinate(dset)
    ball = cfg["ball"]
    return ProblemTemplate(build_risk(cfg["risk"]), _order(ball["p"]), build_norm(ball.get("norm")), dset, task)


def build_concentration(c1: float, c2: float, a: float, L_D: float) -> ConcentrationConfig:
    try:
        return ConcentrationConfig(c1=c1, c2=c2, a=a, U_D=max(L_D, 1.0), L_D=L_D)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
