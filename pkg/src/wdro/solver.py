"""Minimization of the worst-case objective over a decision set.

The objective ``beta -> robust_value(problem, beta)`` is evaluated through the
closed form of :mod:`wdro.reform`, in batches.  The main method is projected
subgradient descent with central-difference subgradients and several
restarts.  When the set has at most two free coordinates a dense grid plus a
shrinking pattern search refines the answer, and finite sets are enumerated.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from ._seeding import derive_seed
from .reform import Reformulation, RobustProblem, Task, reformulate
from .transport import Norm

__all__ = [
    "DecisionSet",
    "NormBall",
    "Annulus",
    "FixedFirstCoordinate",
    "Box",
    "FiniteSet",
    "project_decision",
    "SolverConfig",
    "SolveReport",
    "solve",
    "grid_minimum",
]


def _l1_ball_projection(v: np.ndarray, radius: float) -> np.ndarray:
    """Euclidean projection onto ``{x : ||x||_1 <= radius}`` (sort-based)."""
    if np.sum(np.abs(v)) <= radius:
        return v.copy()
    u = np.sort(np.abs(v))[::-1]
    css = np.cumsum(u)
    k = np.arange(1, u.size + 1)
    rho = np.nonzero(u * k > css - radius)[0][-1]
    theta = (css[rho] - radius) / (rho + 1.0)
    return np.sign(v) * np.maximum(np.abs(v) - theta, 0.0)


def _dual_ball_projection(beta, radius, norm: Norm) -> np.ndarray:
    """Projection onto ``{||beta||_* <= radius}``; Euclidean except for weighted norms."""
    beta = np.asarray(beta, dtype=float)
    kind = norm.dual().kind
    if kind == "Linf":
        return np.clip(beta, -radius, radius)
    if kind == "L1":
        return _l1_ball_projection(beta, radius)
    dn = norm.dual()(beta)
    return beta if dn <= radius else beta * (radius / dn)


class DecisionSet:
    """Feasible set of decisions, with radii measured in the dual norm."""

    def project(self, beta, norm: Norm) -> np.ndarray:
        raise NotImplementedError

    def residual(self, beta, norm: Norm) -> float:
        raise NotImplementedError

    def box(self, n: int, norm: Norm) -> tuple[np.ndarray, np.ndarray]:
        """Axis-aligned box containing the set."""
        raise NotImplementedError

    def scale(self, n: int, norm: Norm) -> float:
        lo, hi = self.box(n, norm)
        return float(np.max(hi - lo) / 2)

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class NormBall(DecisionSet):
    """``||beta||_* <= U``."""

    U: float

    def __post_init__(self):
        if not self.U > 0:
            raise ValueError("NormBall radius must be positive")

    def project(self, beta, norm):
        return _dual_ball_projection(beta, self.U, norm)

    def residual(self, beta, norm):
        return max(0.0, norm.dual()(np.asarray(beta, float)) - self.U)

    def box(self, n, norm):
        h = self.U * norm.unit_norms(n)
        return -h, h

    def scale(self, n, norm):
        return self.U

    def to_dict(self):
        return {"kind": "NormBall", "U": self.U}


@dataclass(frozen=True)
class Annulus(DecisionSet):
    """``L <= ||beta||_* <= U``; ``L = U`` gives the unit sphere of the dual norm."""

    L: float
    U: float

    def __post_init__(self):
        if not (0 < self.L <= self.U):
            raise ValueError("Annulus needs 0 < L <= U")

    def project(self, beta, norm):
        beta = np.asarray(beta, dtype=float)
        dn = norm.dual()(beta)
        if dn == 0:
            e1 = np.zeros_like(beta)
            e1[0] = 1.0
            return e1 * (self.L / norm.dual()(e1))
        if dn < self.L:
            return beta * (self.L / dn)
        if dn > self.U:
            return beta * (self.U / dn)
        return beta.copy()

    def residual(self, beta, norm):
        dn = norm.dual()(np.asarray(beta, float))
        return max(0.0, self.L - dn, dn - self.U)

    def box(self, n, norm):
        h = self.U * norm.unit_norms(n)
        return -h, h

    def scale(self, n, norm):
        return self.U

    def to_dict(self):
        return {"kind": "Annulus", "L": self.L, "U": self.U}


def _tail_norm(norm: Norm) -> Norm:
    if norm.kind == "WeightedL2":
        return Norm.weighted_l2(norm.weights[1:])
    return norm


@dataclass(frozen=True)
class FixedFirstCoordinate(DecisionSet):
    """Regression decisions ``beta = (1, -beta_r)`` with ``beta_r`` in ``inner``."""

    inner: DecisionSet

    def project(self, beta, norm):
        beta = np.asarray(beta, dtype=float)
        out = np.empty_like(beta)
        out[0] = 1.0
        out[1:] = -self.inner.project(-beta[1:], _tail_norm(norm))
        return out

    def residual(self, beta, norm):
        beta = np.asarray(beta, dtype=float)
        return abs(beta[0] - 1.0) + self.inner.residual(-beta[1:], _tail_norm(norm))

    def box(self, n, norm):
        lo, hi = self.inner.box(n - 1, _tail_norm(norm))
        return np.concatenate(([1.0], -hi)), np.concatenate(([1.0], -lo))

    def scale(self, n, norm):
        return self.inner.scale(n - 1, _tail_norm(norm))

    def to_dict(self):
        return {"kind": "FixedFirstCoordinate", "inner": self.inner.to_dict()}


@dataclass(frozen=True)
class Box(DecisionSet):
    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo, hi = np.asarray(self.lo, float), np.asarray(self.hi, float)
        if lo.shape != hi.shape or np.any(lo > hi):
            raise ValueError("Box needs lo <= hi with matching shapes")
        object.__setattr__(self, "lo", tuple(lo.tolist()))
        object.__setattr__(self, "hi", tuple(hi.tolist()))

    def project(self, beta, norm):
        return np.clip(np.asarray(beta, float), self.lo, self.hi)

    def residual(self, beta, norm):
        beta = np.asarray(beta, float)
        return float(max(0.0, np.max(np.asarray(self.lo) - beta), np.max(beta - np.asarray(self.hi))))

    def box(self, n, norm):
        if len(self.lo) != n:
            raise ValueError(f"Box has {len(self.lo)} coordinates, problem has {n}")
        return np.asarray(self.lo), np.asarray(self.hi)

    def to_dict(self):
        return {"kind": "Box", "lo": list(self.lo), "hi": list(self.hi)}


@dataclass(frozen=True)
class FiniteSet(DecisionSet):
    betas: tuple

    def __post_init__(self):
        B = np.atleast_2d(np.asarray(self.betas, dtype=float))
        if B.size == 0:
            raise ValueError("FiniteSet is empty")
        object.__setattr__(self, "betas", tuple(tuple(r) for r in B.tolist()))

    @property
    def matrix(self) -> np.ndarray:
        return np.asarray(self.betas, dtype=float)

    def project(self, beta, norm):
        B = self.matrix
        d = np.sum((B - np.asarray(beta, float)) ** 2, axis=1)
        return B[int(np.argmin(d))].copy()

    def residual(self, beta, norm):
        return float(np.min(np.max(np.abs(self.matrix - np.asarray(beta, float)), axis=1)))

    def box(self, n, norm):
        B = self.matrix
        return B.min(axis=0), B.max(axis=0)

    def to_dict(self):
        return {"kind": "FiniteSet", "betas": [list(b) for b in self.betas]}


def project_decision(beta, dset: DecisionSet, norm: Norm) -> np.ndarray:
    """A feasible point of ``dset`` near ``beta``."""
    return dset.project(np.asarray(beta, dtype=float), norm)


@dataclass(frozen=True)
class SolverConfig:
    iters: int = 200
    restarts: int = 8
    seed: int = 0
    step0: float | None = None
    grid: int = 201


@dataclass
class SolveReport:
    beta_opt: np.ndarray
    value: float
    iterations: int
    trace: list
    feasibility_residual: float
    method: str
    clause: int
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "beta_opt": [float(b) for b in self.beta_opt],
            "value": float(self.value),
            "iterations": int(self.iterations),
            "trace": [[int(i), float(v)] for i, v in self.trace],
            "feasibility_residual": float(self.feasibility_residual),
            "method": self.method,
            "clause": int(self.clause),
            "config": self.config,
        }


class _Objective:
    """Batched objective over the free coordinates of a decision set."""

    def __init__(self, reform: Reformulation, dset: DecisionSet):
        self.reform = reform
        self.dset = dset
        self.norm = reform.problem.ball.norm
        self.n = reform.problem.dim
        self.fixed = isinstance(dset, FixedFirstCoordinate)
        self.free = self.n - 1 if self.fixed else self.n

    def embed(self, theta):
        theta = np.atleast_2d(theta)
        if not self.fixed:
            return theta
        return np.hstack([np.ones((theta.shape[0], 1)), theta])

    def project(self, theta):
        return self.dset.project(self.embed(theta)[0], self.norm)[-self.free:]

    def __call__(self, thetas) -> np.ndarray:
        return self.reform.values(self.embed(thetas))


def _subgradient_run(obj: _Objective, theta, iters, step0):
    f0 = obj(theta)[0]
    best_t, best_f = theta.copy(), f0
    trace = [best_f]
    d = theta.size
    for it in range(iters):
        h = 1e-6 * (1 + np.abs(theta))
        E = np.diag(h)
        vals = obj(np.vstack([theta + E, theta - E]))
        g = (vals[:d] - vals[d:]) / (2 * h)
        gn = np.linalg.norm(g)
        if not np.isfinite(gn) or gn == 0:
            trace.append(best_f)
            break
        theta = obj.project(theta - (step0 / math.sqrt(it + 1)) * g / gn)
        f = obj(theta)[0]
        if f < best_f:
            best_t, best_f = theta.copy(), f
        trace.append(best_f)
    return best_t, best_f, trace


def _pattern_search(obj: _Objective, theta, f, step, min_step):
    d = theta.size
    dirs = np.vstack([np.eye(d), -np.eye(d)])
    if d == 2:
        dirs = np.vstack([dirs, [[1, 1], [1, -1], [-1, 1], [-1, -1]]])
    while step > min_step:
        cand = np.array([obj.project(theta + step * u) for u in dirs])
        vals = obj(cand)
        j = int(np.argmin(vals))
        if vals[j] < f:
            theta, f = cand[j], vals[j]
        else:
            step /= 2
    return theta, f


def grid_minimum(problem: RobustProblem, dset: DecisionSet, points: int = 200):
    """Best feasible point of a ``points``-per-axis grid over the set's bounding box.

    Only available for at most two free coordinates.
    """
    reform = reformulate(problem)
    obj = _Objective(reform, dset)
    if obj.free > 2:
        raise ValueError("grid search is limited to two free coordinates")
    lo, hi = dset.box(obj.n, obj.norm)
    lo, hi = lo[-obj.free:], hi[-obj.free:]
    axes = [np.linspace(a, b, points) for a, b in zip(lo, hi)]
    T = np.stack([g.reshape(-1) for g in np.meshgrid(*axes, indexing="ij")], axis=1)
    betas = obj.embed(T)
    ok = np.array([dset.residual(b, obj.norm) <= 1e-12 for b in betas])
    if isinstance(dset, Annulus):
        # the grid rarely lands on a thin shell, so add its radial projections
        T = np.vstack([T[ok], np.array([obj.project(t) for t in T[~ok]])])
        ok = np.ones(T.shape[0], dtype=bool)
    T = T[ok]
    vals = np.concatenate([obj(T[i:i + 4096]) for i in range(0, T.shape[0], 4096)])
    j = int(np.argmin(vals))
    return obj.embed(T[j])[0], float(vals[j])


def solve(problem: RobustProblem, dset: DecisionSet, cfg: SolverConfig | None = None,
          initial=None) -> SolveReport:
    """Minimize the worst-case objective over ``dset``.

    Parameters
    ----------
    problem : RobustProblem
    dset : DecisionSet
        For regression problems this must be a :class:`FixedFirstCoordinate`.
    cfg : SolverConfig, optional
    initial : array_like, optional
        Warm start used by the first restart.

    Returns
    -------
    SolveReport
    """
    cfg = cfg or SolverConfig()
    if problem.task is Task.REGRESSION and not isinstance(dset, FixedFirstCoordinate):
        raise ValueError("regression problems need a FixedFirstCoordinate decision set")
    reform = reformulate(problem)
    obj = _Objective(reform, dset)
    norm, n = obj.norm, obj.n
    config = {k: v for k, v in asdict(cfg).items()}

    if isinstance(dset, FiniteSet):
        B = dset.matrix
        if B.shape[1] != n:
            raise ValueError("FiniteSet members have the wrong dimension")
        vals = reform.values(B)
        j = int(np.argmin(vals))
        trace = [[i, float(np.min(vals[:i + 1]))] for i in range(len(vals))]
        beta = B[j].copy()
        return SolveReport(beta, reform.value(beta), len(vals), trace,
                           dset.residual(beta, norm), "enumeration", reform.clause, config)

    step0 = cfg.step0 if cfg.step0 is not None else dset.scale(n, norm)
    lo, hi = dset.box(n, norm)
    lo, hi = lo[-obj.free:], hi[-obj.free:]
    best_t, best_f = None, math.inf
    trace: list = []
    total = 0
    for r in range(cfg.restarts):
        rng = np.random.default_rng(derive_seed(cfg.seed, r))
        if r == 0 and initial is not None:
            start = np.asarray(initial, dtype=float).reshape(-1)[-obj.free:]
        else:
            start = lo + (hi - lo) * rng.random(obj.free)
        theta = obj.project(start)
        t, f, tr = _subgradient_run(obj, theta, cfg.iters, step0)
        for v in tr:
            if v < best_f:
                best_f = v
            trace.append([total, float(best_f)])
            total += 1
        if f <= best_f:
            best_t, best_f = t, f
    method = "projected-subgradient"
    if obj.free <= 2:
        g_beta, g_f = grid_minimum(problem, dset, cfg.grid)
        cand_t = g_beta[-obj.free:]
        cells = float(np.max(hi - lo)) / max(cfg.grid - 1, 1)
        for t0, f0 in ((cand_t, g_f), (best_t, best_f)):
            t, f = _pattern_search(obj, t0, f0, cells, 1e-12 * (1 + float(np.max(np.abs(hi - lo)))))
            if f < best_f:
                best_t, best_f = t, f
        trace.append([total, float(best_f)])
        total += 1
        method = "projected-subgradient+grid"
    beta = obj.embed(best_t)[0]
    value = reform.value(beta)
    return SolveReport(beta, value, total, trace, dset.residual(beta, norm), method, reform.clause, config)
