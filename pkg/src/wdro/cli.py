"""Command-line interface: ``wdro solve | verify | coverage | radius``.

Seeds
-----
Every command takes ``--seed`` (overriding the config's ``seed``, default 0).
Streams are derived with :func:`wdro._seeding.derive_seed`:

* solve: restart ``r`` of the solver uses ``derive_seed(seed, r)``.
* verify: instance ``j`` of family number ``f`` is drawn from
  ``derive_seed(seed, f, j)``; the oracle for row ``i`` uses
  ``derive_seed(seed, i)``; falsification rows use ``derive_seed(seed, 100, k)``
  and ``derive_seed(seed, 200, k)``.
* coverage: hold-out ``derive_seed(seed, 0)``, training data of trial ``t``
  ``derive_seed(seed, 1, t)``, solver of trial ``t`` ``derive_seed(seed, 2, t)``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import asdict
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    COVERAGE_SCHEMA,
    SOLVE_SCHEMA,
    VERIFY_SCHEMA,
    ConfigError,
    build_ball,
    build_concentration,
    build_decision_set,
    build_oracle_config,
    build_risk,
    build_scenario,
    build_solver_config,
    build_template,
    load_json,
    validate,
)
from .genbound import coverage_experiment, radius_schedule, schedule_branch
from .reform import RobustProblem, Task
from .solver import FixedFirstCoordinate, solve
from .transport import LabelledDataset
from .verify import FAMILIES, build_suite, falsification_rows, run_suite

__all__ = ["main", "read_dataset", "cmd_solve", "cmd_verify", "cmd_coverage", "cmd_radius"]


class CLIError(Exception):
    """Input error reported on stderr with exit code 1."""


def fmt_float(x: float) -> str:
    """17 significant digits, enough to round-trip any double."""
    return format(float(x), ".17g")


def _default_config(name: str) -> dict:
    return json.loads(resources.files("wdro").joinpath("data", name).read_text(encoding="utf-8"))


def _write(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8", newline="")


def _finite(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return "nan" if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj


def _dump_json(obj) -> str:
    """Strict JSON; non-finite floats become the strings ``inf``, ``-inf`` and ``nan``."""
    return json.dumps(_finite(obj), indent=2, allow_nan=False) + "\n"


def read_dataset(path, header: bool = False, labels: bool = True) -> LabelledDataset:
    """Read a comma-separated dataset.

    The first column holds the labels in ``{-1, 1}`` unless ``labels`` is
    false, in which case every column is a feature and all labels are ``+1``.
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CLIError(f"cannot read {path}: {exc.strerror or exc}") from None
    rows, ys = [], []
    width = None
    for lineno, rec in enumerate(csv.reader(io.StringIO(text)), start=1):
        if header and lineno == 1:
            continue
        if not rec or all(not c.strip() for c in rec):
            continue
        try:
            vals = [float(c) for c in rec]
        except ValueError:
            raise CLIError(f"{path}: line {lineno}: non-numeric field") from None
        if not all(math.isfinite(v) for v in vals):
            raise CLIError(f"{path}: line {lineno}: non-finite value")
        if width is None:
            width = len(vals)
        elif len(vals) != width:
            raise CLIError(f"{path}: line {lineno}: expected {width} fields, found {len(vals)}")
        if labels:
            if len(vals) < 2:
                raise CLIError(f"{path}: line {lineno}: need a label and at least one feature")
            if vals[0] not in (-1.0, 1.0):
                raise CLIError(f"{path}: line {lineno}: label {rec[0].strip()!r} is not -1 or 1")
            ys.append(vals[0])
            rows.append(vals[1:])
        else:
            rows.append(vals)
    if not rows:
        raise CLIError(f"{path}: no data rows")
    X = np.asarray(rows, dtype=float)
    y = np.asarray(ys, dtype=float) if labels else np.ones(X.shape[0])
    return LabelledDataset(y, X)


def _seed(args, cfg) -> int:
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    if seed < 0:
        raise CLIError("seed must be nonnegative")
    return int(seed)


def cmd_solve(args) -> int:
    cfg = validate(load_json(args.config), SOLVE_SCHEMA)
    seed = _seed(args, cfg)
    task = Task.parse(args.task or cfg.get("task", "classify"))
    data = read_dataset(args.data, header=args.header, labels=not args.no_labels)
    risk = build_risk(cfg["risk"])
    ball = build_ball(cfg["ball"])
    dset = build_decision_set(cfg["decision_set"])
    if task is Task.REGRESSION and not isinstance(dset, FixedFirstCoordinate):
        dset = FixedFirstCoordinate(dset)
    solver_cfg = build_solver_config(cfg.get("solver"), seed)
    problem = RobustProblem(data, risk, ball, task)
    report = solve(problem, dset, solver_cfg)
    resolved = {
        "task": task.value,
        "risk": cfg["risk"],
        "ball": {"norm": "L2", **cfg["ball"]},
        "decision_set": dset.to_dict(),
        "solver": asdict(solver_cfg),
        "seed": seed,
    }
    out = {
        "command": "solve",
        "version": __version__,
        "config": resolved,
        "data": {"path": str(args.data), "rows": data.size, "features": data.dim,
                 "header": bool(args.header), "labels": not args.no_labels},
        "report": report.to_dict(),
    }
    _write(_dump_json(out), args.out)
    return 0


def cmd_verify(args) -> int:
    raw = load_json(args.config) if args.config else _default_config("verify_default.json")
    cfg = validate(raw, VERIFY_SCHEMA)
    seed = _seed(args, cfg)
    families = cfg.get("families", list(FAMILIES))
    unknown = [f for f in families if f not in FAMILIES]
    if unknown:
        raise ConfigError(f"unknown verification families {unknown}; known: {sorted(FAMILIES)}")
    per = cfg.get("instances_per_family", 10)
    ocfg = build_oracle_config(cfg.get("oracle"), seed)
    rows = run_suite(build_suite(families, per, seed), ocfg)
    if cfg.get("falsification", True):
        frows = falsification_rows(seed, cfg.get("falsification_instances", 20))
        for r in frows:
            r["index"] = len(rows)
            rows.append(r)
    failed = [r for r in rows if not r["pass"] and not r["expected_negative"]]
    resolved = {"families": families, "instances_per_family": per,
                "falsification": cfg.get("falsification", True),
                "falsification_instances": cfg.get("falsification_instances", 20),
                "oracle": {k: v for k, v in asdict(ocfg).items() if k != "seed"}, "seed": seed}
    out = {
        "command": "verify",
        "version": __version__,
        "config": resolved,
        "summary": {
            "total": len(rows),
            "passed": sum(r["pass"] for r in rows),
            "failed": len(failed),
            "expected_negative": sum(r["expected_negative"] for r in rows),
        },
        "rows": rows,
    }
    _write(_dump_json(out), args.out)
    for r in failed:
        print(f"FAIL row {r['index']} ({r['family']}): gap {fmt_float(r['abs_gap'])}", file=sys.stderr)
    return 1 if failed else 0


def cmd_coverage(args) -> int:
    raw = load_json(args.config) if args.config else _default_config("coverage_default.json")
    cfg = validate(raw, COVERAGE_SCHEMA)
    seed = _seed(args, cfg)
    template = build_template(cfg)
    gen = build_scenario(cfg["scenario"])
    solver_cfg = build_solver_config(cfg.get("solver", {"iters": 60, "restarts": 2}), seed)
    table = coverage_experiment(gen, template, cfg["eps_grid"], cfg["trials"], seed,
                                N=cfg.get("N", 50), holdout=cfg.get("holdout", 100_000),
                                solver_cfg=solver_cfg)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["eps", "trials", "coverage", "ci_lo", "ci_hi"])
    for r in table.rows:
        w.writerow([fmt_float(r.eps), r.trials, fmt_float(r.coverage), fmt_float(r.ci_lo), fmt_float(r.ci_hi)])
    _write(buf.getvalue(), args.out)
    if args.out is not None:
        resolved = {**cfg, "seed": seed, "solver": {k: v for k, v in asdict(solver_cfg).items() if k != "seed"},
                    "N": table.N, "holdout": table.holdout, "task": template.task.value}
        side = {"command": "coverage", "version": __version__, "config": resolved}
        Path(str(args.out) + ".config.json").write_text(_dump_json(side), encoding="utf-8")
    return 0


def cmd_radius(args, parser) -> int:
    if not 0 < args.eta < 1:
        parser.error("--eta must lie in (0, 1)")
    if args.N < 1:
        parser.error("--N must be a positive integer")
    try:
        ccfg = build_concentration(args.c1, args.c2, args.a, args.L_D)
        eps = radius_schedule(args.p, args.N, args.eta, ccfg)
        branch = schedule_branch(args.p, args.N, args.eta, ccfg)
    except ValueError as exc:
        parser.error(str(exc))
    print(f"epsilon={fmt_float(eps)} branch={branch}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wdro", description="Wasserstein robust risk minimization with affine rules.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=None, help="master seed (overrides the config)")
        p.add_argument("--out", default=None, help="output file (default: stdout)")

    p = sub.add_parser("solve", help="solve a robust problem on a CSV dataset")
    p.add_argument("data", help="CSV file: label first, then features")
    p.add_argument("config", help="JSON config with task, risk, ball, decision_set, solver, seed")
    p.add_argument("--header", action="store_true", help="skip the first CSV line")
    p.add_argument("--no-labels", action="store_true", help="all columns are features; labels are +1")
    p.add_argument("--task", choices=["classify", "regress", "riskmin", "classification", "regression"],
                   default=None)
    common(p)

    p = sub.add_parser("verify", help="compare closed forms with the numeric oracle")
    p.add_argument("config", nargs="?", default=None, help="JSON suite config (default: bundled suite)")
    common(p)

    p = sub.add_parser("coverage", help="Monte Carlo coverage of the in-sample certificate")
    p.add_argument("config", nargs="?", default=None, help="JSON experiment config (default: bundled)")
    common(p)

    p = sub.add_parser("radius", help="radius schedule for a confidence level")
    p.add_argument("--p", type=float, required=True, help="Wasserstein order")
    p.add_argument("--N", type=int, required=True, help="sample size")
    p.add_argument("--eta", type=float, required=True, help="failure probability in (0, 1)")
    p.add_argument("--c1", type=float, default=2.0)
    p.add_argument("--c2", type=float, default=1.0)
    p.add_argument("--a", type=float, default=4.0, help="tail exponent, must exceed p")
    p.add_argument("--L-D", dest="L_D", type=float, default=1.0, help="smallest dual norm over the decision set")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "radius":
            return cmd_radius(args, parser)
        handler = {"solve": cmd_solve, "verify": cmd_verify, "coverage": cmd_coverage}[args.command]
        return handler(args)
    except (CLIError, ConfigError, ValueError, ArithmeticError, OSError) as exc:
        print(f"wdro: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
