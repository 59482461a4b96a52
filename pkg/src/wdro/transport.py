"""Optimal transport on the line and on labelled datasets.

The ground cost on labelled points is ``||x1 - x2|| + Theta(y1 - y2)`` with an
infinite charge for any label change, so transport decomposes into one
problem per label class.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment, linprog

from .risk import EmpiricalDistribution1D

__all__ = [
    "INF",
    "as_order",
    "conjugate",
    "Norm",
    "BallSpec",
    "LabelledDataset",
    "TransportResult",
    "wasserstein_1d",
    "composite_distance",
    "project_pushforward",
    "lift_to_ball",
    "MembershipReport",
    "projection_membership_check",
]

INF = math.inf
_GRID_MERGE_TOL = 1e-13
_EXACT_CLASS_LIMIT = 12
_MASS_TOL = 1e-12


def as_order(p) -> float:
    """Validate a Wasserstein order; ``inf``, ``"inf"`` and ``"∞"`` mean infinity."""
    if isinstance(p, str):
        key = p.strip().lower()
        if key in ("inf", "infinity", "∞"):
            return INF
        p = float(key)
    p = float(p)
    if math.isnan(p) or p < 1:
        raise ValueError(f"order must lie in [1, inf], got {p!r}")
    return p


def conjugate(p: float) -> float:
    """Hölder conjugate ``q`` with ``1/p + 1/q = 1``."""
    p = as_order(p)
    if p == 1:
        return INF
    if math.isinf(p):
        return 1.0
    return p / (p - 1.0)


# ---------------------------------------------------------------------------
# norms


@dataclass(frozen=True, eq=False)
class Norm:
    """Ground norm on the feature space.

    Use the constructors :meth:`l1`, :meth:`l2`, :meth:`linf` and
    :meth:`weighted_l2`.
    """

    kind: str
    weights: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("L1", "L2", "Linf", "WeightedL2"):
            raise ValueError(f"unknown norm kind {self.kind!r}")
        if self.kind == "WeightedL2":
            w = np.array(self.weights, dtype=float).reshape(-1)
            if w.size == 0 or not np.all(w > 0):
                raise ValueError("WeightedL2 needs positive weights")
            w.setflags(write=False)
            object.__setattr__(self, "weights", w)
        elif self.weights is not None:
            raise ValueError(f"{self.kind} takes no weights")

    @classmethod
    def l1(cls) -> "Norm":
        return cls("L1")

    @classmethod
    def l2(cls) -> "Norm":
        return cls("L2")

    @classmethod
    def linf(cls) -> "Norm":
        return cls("Linf")

    @classmethod
    def weighted_l2(cls, w) -> "Norm":
        return cls("WeightedL2", w)

    @classmethod
    def from_name(cls, name: str, weights=None) -> "Norm":
        key = name.strip().lower()
        table = {"l1": "L1", "l2": "L2", "linf": "Linf", "weightedl2": "WeightedL2",
                 "weighted_l2": "WeightedL2"}
        if key not in table:
            raise ValueError(f"unknown norm {name!r}")
        return cls(table[key], weights)

    def __eq__(self, other):
        if not isinstance(other, Norm) or other.kind != self.kind:
            return False
        if self.kind != "WeightedL2":
            return True
        return np.array_equal(self.weights, other.weights)

    def __hash__(self):
        w = None if self.weights is None else tuple(self.weights.tolist())
        return hash((self.kind, w))

    def __repr__(self):
        if self.kind == "WeightedL2":
            return f"Norm.weighted_l2({self.weights.tolist()})"
        return f"Norm.{self.kind.lower()}()"

    def __call__(self, x) -> np.ndarray | float:
        """Norm along the last axis."""
        x = np.asarray(x, dtype=float)
        if self.kind == "L1":
            out = np.sum(np.abs(x), axis=-1)
        elif self.kind == "L2":
            out = np.sqrt(np.sum(x * x, axis=-1))
        elif self.kind == "Linf":
            out = np.max(np.abs(x), axis=-1)
        else:
            self._check_dim(x.shape[-1])
            out = np.sqrt(np.sum(self.weights * x * x, axis=-1))
        return float(out) if np.ndim(out) == 0 else out

    def _check_dim(self, n):
        if self.weights is not None and self.weights.size != n:
            raise ValueError(f"norm has {self.weights.size} weights, vector has {n} entries")

    def dual(self) -> "Norm":
        if self.kind == "L1":
            return Norm.linf()
        if self.kind == "Linf":
            return Norm.l1()
        if self.kind == "L2":
            return Norm.l2()
        return Norm.weighted_l2(1.0 / self.weights)

    def dual_maximizer(self, beta) -> np.ndarray:
        """A unit vector ``b0`` of this norm with ``beta @ b0 = ||beta||_*``.

        Ties in the L1 case are broken toward the first maximal coordinate,
        and zero coordinates in the Linf case get sign ``+1``.
        """
        beta = np.asarray(beta, dtype=float).reshape(-1)
        if self.kind == "L1":
            j = int(np.argmax(np.abs(beta)))
            out = np.zeros_like(beta)
            out[j] = 1.0 if beta[j] >= 0 else -1.0
            return out
        if self.kind == "Linf":
            return np.where(beta >= 0, 1.0, -1.0)
        dn = self.dual()(beta)
        if dn == 0:
            out = np.zeros_like(beta)
            out[0] = 1.0
            return out / self(out)
        if self.kind == "L2":
            return beta / dn
        self._check_dim(beta.size)
        return (beta / self.weights) / dn

    def unit_norms(self, n: int) -> np.ndarray:
        """``||e_i||`` for every coordinate vector in ``R^n``."""
        if self.kind == "WeightedL2":
            self._check_dim(n)
            return np.sqrt(self.weights)
        return np.ones(n)


@dataclass(frozen=True)
class BallSpec:
    """Type-``p`` Wasserstein ball of radius ``epsilon`` under a ground norm."""

    p: float
    epsilon: float
    norm: Norm = field(default_factory=Norm.l2)

    def __post_init__(self):
        object.__setattr__(self, "p", as_order(self.p))
        if not (self.epsilon >= 0 and math.isfinite(self.epsilon)):
            raise ValueError("epsilon must be finite and nonnegative")
        object.__setattr__(self, "epsilon", float(self.epsilon))


# ---------------------------------------------------------------------------
# datasets


@dataclass(frozen=True, eq=False)
class LabelledDataset:
    """Weighted sample of pairs ``(y_i, x_i)`` with ``y_i`` in ``{-1, +1}``."""

    labels: np.ndarray
    points: np.ndarray
    weights: np.ndarray = None

    def __post_init__(self):
        y = np.array(self.labels, dtype=float).reshape(-1)
        X = np.array(self.points, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2 or X.shape[0] != y.size or y.size == 0:
            raise ValueError("labels and points must describe the same nonempty sample")
        if not np.all(np.isin(y, (-1.0, 1.0))):
            raise ValueError("labels must be -1 or +1")
        if not np.all(np.isfinite(X)):
            raise ValueError("points must be finite")
        if self.weights is None:
            w = np.full(y.size, 1.0 / y.size)
        else:
            w = np.array(self.weights, dtype=float).reshape(-1)
        if w.shape != y.shape or not np.all(w > 0):
            raise ValueError("weights must be positive, one per row")
        if abs(math.fsum(w) - 1.0) > _MASS_TOL:
            raise ValueError("weights must sum to 1")
        for a in (y, X, w):
            a.setflags(write=False)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "points", X)
        object.__setattr__(self, "weights", w)

    @classmethod
    def unlabelled(cls, points, weights=None) -> "LabelledDataset":
        X = np.asarray(points, dtype=float)
        return cls(np.ones(X.shape[0]), X, weights)

    @property
    def size(self) -> int:
        return int(self.labels.size)

    @property
    def dim(self) -> int:
        return int(self.points.shape[1])

    def signed_points(self) -> np.ndarray:
        """Rows ``y_i x_i``; the projection is this matrix times ``beta``."""
        return self.labels[:, None] * self.points


@dataclass(frozen=True)
class TransportResult:
    """Transport cost with a flag telling whether it is exact or an upper bound."""

    value: float
    exact: bool = True

    def __float__(self):
        return float(self.value)


# ---------------------------------------------------------------------------
# distances


def _merged_quantiles(F: EmpiricalDistribution1D, G: EmpiricalDistribution1D):
    zf, cf = F.cdf_levels()
    zg, cg = G.cdf_levels()
    u = np.unique(np.concatenate(([0.0], cf, cg)))
    keep = np.concatenate(([True], np.diff(u) > _GRID_MERGE_TOL))
    u = u[keep]
    u[-1] = 1.0
    mid = 0.5 * (u[1:] + u[:-1])
    qf = zf[np.minimum(np.searchsorted(cf, mid, side="left"), zf.size - 1)]
    qg = zg[np.minimum(np.searchsorted(cg, mid, side="left"), zg.size - 1)]
    return np.diff(u), qf, qg


def wasserstein_1d(F: EmpiricalDistribution1D, G: EmpiricalDistribution1D, p) -> float:
    """Type-``p`` Wasserstein distance by the monotone quantile coupling."""
    p = as_order(p)
    du, qf, qg = _merged_quantiles(F, G)
    gap = np.abs(qf - qg)
    if math.isinf(p):
        return float(np.max(gap))
    return float(np.sum(du * gap**p) ** (1.0 / p))


def _pairwise(A, B, norm):
    return np.asarray(norm(A[:, None, :] - B[None, :, :]))


def _bottleneck_equal(C):
    vals = np.unique(C)
    lo, hi = 0, vals.size - 1
    while lo < hi:
        mid = (lo + hi) // 2
        bad = (C > vals[mid]).astype(float)
        r, c = linear_sum_assignment(bad)
        if bad[r, c].sum() == 0:
            hi = mid
        else:
            lo = mid + 1
    return float(vals[lo])


def _transport_lp(C, a, b, allowed=None):
    m, k = C.shape
    A_eq = np.zeros((m + k, m * k))
    for i in range(m):
        A_eq[i, i * k:(i + 1) * k] = 1.0
    for j in range(k):
        A_eq[m + j, j::k] = 1.0
    b_eq = np.concatenate((a, b))
    cost = C.reshape(-1) if allowed is None else np.zeros(m * k)
    bounds = [(0, None)] * (m * k)
    if allowed is not None:
        bounds = [(0, None) if ok else (0, 0) for ok in allowed.reshape(-1)]
    res = linprog(cost, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs")
    return res


def _class_cost(X1, w1, X2, w2, p, norm) -> tuple[float, bool]:
    """``W_p^p`` (or ``W_inf``) between two normalized class-conditional samples."""
    if X1.shape[1] == 1:
        scale = float(norm.unit_norms(1)[0])
        d = scale * wasserstein_1d(EmpiricalDistribution1D(X1[:, 0], w1),
                                   EmpiricalDistribution1D(X2[:, 0], w2), p)
        return (d if math.isinf(p) else d**p), True
    C = _pairwise(X1, X2, norm)
    m, k = C.shape
    small = m <= _EXACT_CLASS_LIMIT and k <= _EXACT_CLASS_LIMIT
    equal = m == k and np.allclose(w1, w1[0], rtol=0, atol=1e-15) and np.allclose(w2, w1[0], rtol=0, atol=1e-15)
    if small and equal:
        if math.isinf(p):
            return _bottleneck_equal(C), True
        r, c = linear_sum_assignment(C**p)
        return float(np.mean(C[r, c] ** p)), True
    if small:
        if math.isinf(p):
            vals = np.unique(C)
            lo, hi = 0, vals.size - 1
            while lo < hi:
                mid = (lo + hi) // 2
                if _transport_lp(C, w1, w2, allowed=C <= vals[mid]).status == 0:
                    hi = mid
                else:
                    lo = mid + 1
            return float(vals[lo]), True
        res = _transport_lp(C**p, w1, w2)
        return float(res.fun), True
    if m == k and np.array_equal(w1, w2):
        diag = np.diag(C)
        return (float(np.max(diag)) if math.isinf(p) else float(np.dot(w1, diag**p))), False
    raise ValueError("class too large for exact transport and rows are not aligned")


def composite_distance(D1: LabelledDataset, D2: LabelledDataset, p, norm: Norm) -> TransportResult:
    """Wasserstein distance under ``||x1 - x2|| + Theta(y1 - y2)``.

    Returns ``inf`` when the label-class masses differ.  Within each class the
    transport is exact for up to 12 points per class (or any size when
    ``n = 1``); larger row-aligned classes use the identity coupling, which
    is an upper bound and is flagged as such.
    """
    p = as_order(p)
    if D1.dim != D2.dim:
        raise ValueError("datasets live in different dimensions")
    total = 0.0
    exact = True
    for label in (-1.0, 1.0):
        s1, s2 = D1.labels == label, D2.labels == label
        m1, m2 = math.fsum(D1.weights[s1]), math.fsum(D2.weights[s2])
        if abs(m1 - m2) > 1e-12:
            return TransportResult(INF, True)
        if not s1.any() and not s2.any():
            continue
        if not (s1.any() and s2.any()):
            return TransportResult(INF, True)
        w1 = D1.weights[s1] / m1
        w2 = D2.weights[s2] / m2
        cost, ok = _class_cost(D1.points[s1], w1, D2.points[s2], w2, p, norm)
        exact &= ok
        if math.isinf(p):
            total = max(total, cost)
        else:
            total += 0.5 * (m1 + m2) * cost
    value = total if math.isinf(p) else total ** (1.0 / p)
    return TransportResult(float(value), exact)


# ---------------------------------------------------------------------------
# projection and lift


def project_pushforward(D: LabelledDataset, beta) -> EmpiricalDistribution1D:
    """Distribution of ``Y * beta @ X`` under ``D``."""
    beta = np.asarray(beta, dtype=float).reshape(-1)
    if beta.size != D.dim:
        raise ValueError(f"beta has {beta.size} entries, data has {D.dim} features")
    return EmpiricalDistribution1D(D.signed_points() @ beta, D.weights)


def lift_to_ball(D0: LabelledDataset, beta, shifts, norm: Norm) -> LabelledDataset:
    """Move each row so that its projected atom moves by ``shifts[i]``.

    Row ``i`` becomes ``x_i + b0 * shifts[i] / (y_i ||beta||_*)`` where ``b0``
    is the unit vector that attains the dual norm of ``beta``.
    """
    beta = np.asarray(beta, dtype=float).reshape(-1)
    shifts = np.asarray(shifts, dtype=float).reshape(-1)
    if shifts.size != D0.size:
        raise ValueError("one shift per row is required")
    dn = norm.dual()(beta)
    if not dn > 0:
        raise ValueError("cannot lift through beta with zero dual norm")
    b0 = norm.dual_maximizer(beta)
    X = D0.points + (shifts / (D0.labels * dn))[:, None] * b0[None, :]
    return LabelledDataset(D0.labels, X, D0.weights)


@dataclass
class MembershipReport:
    trials: int
    pushforward_passes: int = 0
    lift_passes: int = 0
    failures: list = field(default_factory=list)

    @property
    def pass_pushforward(self) -> bool:
        return self.pushforward_passes == self.trials

    @property
    def pass_lift(self) -> bool:
        return self.lift_passes == self.trials


def _radii(rng, w, p, eps):
    """Nonnegative per-row magnitudes with weighted ``p``-norm at most ``eps``."""
    r = rng.exponential(size=w.size)
    if math.isinf(p):
        r = r / r.max()
    else:
        r = r / np.sum(w * r**p) ** (1.0 / p)
    # a third of the draws sit on the boundary, the rest inside
    return eps * r * (1.0 if rng.random() < 1 / 3 else rng.random())


def projection_membership_check(D0: LabelledDataset, beta, ball: BallSpec, trials: int = 100,
                                seed: int = 0, slack: float = 1e-9) -> MembershipReport:
    """Sample both directions of the ball-projection identity.

    Pushforward: random datasets within ``ball`` of ``D0`` must project into
    the 1-D ball of radius ``epsilon * ||beta||_*`` around the projection of
    ``D0``.  Lift: random 1-D targets in that small ball, with each row
    randomly split into pieces, must lift to datasets within ``ball`` of
    ``D0`` whose projection equals the target.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    beta = np.asarray(beta, dtype=float).reshape(-1)
    p, eps, norm = ball.p, ball.epsilon, ball.norm
    dn = norm.dual()(beta)
    proj0 = project_pushforward(D0, beta)
    report = MembershipReport(trials)
    b0 = norm.dual_maximizer(beta)
    for k in range(trials):
        r = _radii(rng, D0.weights, p, eps)
        if k % 2 == 0:
            u = rng.standard_normal(D0.points.shape)
            u /= np.maximum(np.asarray(norm(u)), 1e-300)[:, None]
        else:
            u = rng.choice([-1.0, 1.0], size=(D0.size, 1)) * b0[None, :]
        D = LabelledDataset(D0.labels, D0.points + r[:, None] * u, D0.weights)
        big = composite_distance(D, D0, p, norm).value
        small = wasserstein_1d(project_pushforward(D, beta), proj0, p)
        if big <= eps + slack and small <= eps * dn + slack:
            report.pushforward_passes += 1
        else:
            report.failures.append(("pushforward", k, big, small))

        if dn == 0:
            # every lift target is the point mass at zero, so D0 itself works
            report.lift_passes += 1
            continue
        pieces = rng.integers(1, 3, size=D0.size)
        rows = np.repeat(np.arange(D0.size), pieces)
        frac = rng.dirichlet(np.ones(2), size=D0.size)
        w = np.concatenate([D0.weights[i] * frac[i, :pieces[i]] / frac[i, :pieces[i]].sum()
                            for i in range(D0.size)])
        sgn = rng.choice([-1.0, 1.0], size=rows.size)
        T = sgn * _radii(rng, w, p, eps * dn)
        Dsplit = LabelledDataset(D0.labels[rows], D0.points[rows], w)
        lifted = lift_to_ball(Dsplit, beta, T, norm)
        target = proj0.atoms[rows] + T
        got = project_pushforward(lifted, beta).atoms
        proj_ok = np.allclose(got, target, rtol=1e-12, atol=1e-12 * (1 + np.max(np.abs(target))))
        dist = composite_distance(lifted, Dsplit, p, norm).value
        if proj_ok and dist <= eps + slack:
            report.lift_passes += 1
        else:
            report.failures.append(("lift", k, dist, proj_ok))
    return report
