"""Risk functionals on finitely supported one-dimensional distributions.

Every functional here is evaluated exactly on an :class:`EmpiricalDistribution1D`
(or, for speed, on a batch of distributions stored column-wise).  The only
non-closed-form evaluation is the scalar infimum over ``t`` in the
inf-representable family, which uses golden-section search followed by an
exact polish at the kinks of piecewise-linear losses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "EvaluationError",
    "EmpiricalDistribution1D",
    "Loss",
    "Linear",
    "Absolute",
    "HingePos",
    "HingeNeg",
    "TwoSidedHinge",
    "ShiftedAbs",
    "PowerOf",
    "ExpNeg",
    "Custom",
    "softplus",
    "DistortionFunction",
    "Risk",
    "ExpectedLoss",
    "CVaR",
    "CVaRDeviation",
    "Distortion",
    "DistortionDeviation",
    "InfRepRisk",
    "InfRepDev",
    "Variance",
    "Negated",
    "AbsoluteValue",
    "eval_expected_loss",
    "eval_cvar",
    "eval_distortion",
    "eval_inf_rep",
    "eval_risk",
]

WEIGHT_SUM_TOL = 1e-12


class EvaluationError(ArithmeticError):
    """Raised when a risk cannot be evaluated to a finite number."""


# ---------------------------------------------------------------------------
# distributions


@dataclass(frozen=True, eq=False)
class EmpiricalDistribution1D:
    """Finitely supported distribution on the real line.

    Parameters
    ----------
    atoms : array_like
        Support points, in any order.  Duplicates are allowed.
    weights : array_like, optional
        Strictly positive probabilities summing to one within ``1e-12``.
        Defaults to uniform weights.
    """

    atoms: np.ndarray
    weights: np.ndarray = None

    def __post_init__(self):
        atoms = np.array(self.atoms, dtype=float).reshape(-1)
        if atoms.size == 0:
            raise ValueError("distribution needs at least one atom")
        if not np.all(np.isfinite(atoms)):
            raise ValueError("atoms must be finite")
        if self.weights is None:
            weights = np.full(atoms.size, 1.0 / atoms.size)
        else:
            weights = np.array(self.weights, dtype=float).reshape(-1)
        if weights.shape != atoms.shape:
            raise ValueError("atoms and weights differ in length")
        if not np.all(weights > 0):
            raise ValueError("weights must be strictly positive")
        total = math.fsum(weights)
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError(f"weights sum to {total!r}, not 1")
        atoms.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def point_mass(cls, z: float) -> "EmpiricalDistribution1D":
        return cls([z], [1.0])

    @property
    def size(self) -> int:
        return int(self.atoms.size)

    def __len__(self) -> int:
        return self.size

    @cached_property
    def canonical(self) -> "EmpiricalDistribution1D":
        """Sorted view with equal atoms merged by summing their weights."""
        order = np.argsort(self.atoms, kind="stable")
        z = self.atoms[order]
        w = self.weights[order]
        starts = np.concatenate(([True], z[1:] != z[:-1]))
        idx = np.flatnonzero(starts)
        return EmpiricalDistribution1D(z[idx], np.add.reduceat(w, idx))

    def mean(self) -> float:
        return float(np.dot(self.weights, self.atoms))

    def cdf_levels(self) -> tuple[np.ndarray, np.ndarray]:
        """Sorted atoms and cumulative weights of the canonical view."""
        c = self.canonical
        F = np.cumsum(c.weights)
        F[-1] = 1.0
        return c.atoms, F

    def shifted(self, c: float) -> "EmpiricalDistribution1D":
        return EmpiricalDistribution1D(self.atoms + c, self.weights)

    def scaled(self, lam: float) -> "EmpiricalDistribution1D":
        return EmpiricalDistribution1D(self.atoms * lam, self.weights)

    def map(self, fn: Callable[[np.ndarray], np.ndarray]) -> "EmpiricalDistribution1D":
        return EmpiricalDistribution1D(fn(self.atoms), self.weights)

    def __repr__(self) -> str:
        return f"EmpiricalDistribution1D(atoms={self.atoms.tolist()}, weights={self.weights.tolist()})"


# ---------------------------------------------------------------------------
# losses


class Loss:
    """Pointwise loss ``x -> l(x)``, vectorized over numpy arrays."""

    convex: bool = True
    lipschitz: float = math.inf
    # +1 nondecreasing, -1 nonincreasing, 0 neither
    monotone: int = 0
    nonnegative: bool = True

    def __call__(self, x):
        raise NotImplementedError

    def kinks(self) -> tuple[float, ...]:
        """Points where a piecewise-linear loss changes slope."""
        return ()

    def reach(self) -> float:
        """Scale of the loss parameters, used to size search brackets."""
        return 0.0


@dataclass(frozen=True)
class Linear(Loss):
    """``C x + b``."""

    slope: float = 1.0
    intercept: float = 0.0

    def __call__(self, x):
        return self.slope * np.asarray(x, dtype=float) + self.intercept

    @property
    def lipschitz(self) -> float:
        return abs(self.slope)

    @property
    def monotone(self) -> int:
        return -1 if self.slope < 0 else 1

    @property
    def nonnegative(self) -> bool:
        return self.slope == 0 and self.intercept >= 0

    def reach(self) -> float:
        return abs(self.intercept)


@dataclass(frozen=True)
class Absolute(Loss):
    """``C |x - m| + b``."""

    center: float = 0.0
    scale: float = 1.0
    intercept: float = 0.0

    def __post_init__(self):
        if self.scale < 0:
            raise ValueError("Absolute scale must be nonnegative")

    def __call__(self, x):
        return self.scale * np.abs(np.asarray(x, dtype=float) - self.center) + self.intercept

    @property
    def lipschitz(self) -> float:
        return self.scale

    @property
    def nonnegative(self) -> bool:
        return self.intercept >= 0

    def kinks(self):
        return (self.center,)

    def reach(self) -> float:
        return abs(self.center) + abs(self.intercept)


@dataclass(frozen=True)
class HingePos(Loss):
    """``(x - m)_+``."""

    m: float = 0.0
    lipschitz = 1.0
    monotone = 1

    def __call__(self, x):
        return np.maximum(np.asarray(x, dtype=float) - self.m, 0.0)

    def kinks(self):
        return (self.m,)

    def reach(self) -> float:
        return abs(self.m)


@dataclass(frozen=True)
class HingeNeg(Loss):
    """``(x - m)_- = max(m - x, 0)``."""

    m: float = 0.0
    lipschitz = 1.0
    monotone = -1

    def __call__(self, x):
        return np.maximum(self.m - np.asarray(x, dtype=float), 0.0)

    def kinks(self):
        return (self.m,)

    def reach(self) -> float:
        return abs(self.m)


@dataclass(frozen=True)
class TwoSidedHinge(Loss):
    """``(|x - m1| - m2)_+`` with ``m2 >= 0``."""

    m1: float = 0.0
    m2: float = 0.0
    lipschitz = 1.0

    def __post_init__(self):
        if self.m2 < 0:
            raise ValueError("TwoSidedHinge needs m2 >= 0")

    def __call__(self, x):
        return np.maximum(np.abs(np.asarray(x, dtype=float) - self.m1) - self.m2, 0.0)

    def kinks(self):
        return (self.m1 - self.m2, self.m1, self.m1 + self.m2)

    def reach(self) -> float:
        return abs(self.m1) + self.m2


@dataclass(frozen=True)
class ShiftedAbs(Loss):
    """``|x - m| + b`` with ``b > 0``."""

    m: float = 0.0
    b: float = 1.0
    lipschitz = 1.0

    def __post_init__(self):
        if not self.b > 0:
            raise ValueError("ShiftedAbs needs b > 0")

    def __call__(self, x):
        return np.abs(np.asarray(x, dtype=float) - self.m) + self.b

    def kinks(self):
        return (self.m,)

    def reach(self) -> float:
        return abs(self.m) + self.b


@dataclass(frozen=True)
class PowerOf(Loss):
    """``base(x) ** s`` for a nonnegative base loss and ``s >= 1``."""

    base: Loss
    exponent: float = 2.0

    def __post_init__(self):
        if not self.exponent >= 1:
            raise ValueError("PowerOf exponent must be >= 1")
        if not self.base.nonnegative:
            raise ValueError("PowerOf needs a nonnegative base loss")

    def __call__(self, x):
        return np.power(self.base(x), self.exponent)

    @property
    def convex(self) -> bool:
        return self.base.convex

    @property
    def lipschitz(self) -> float:
        return self.base.lipschitz if self.exponent == 1 else math.inf

    @property
    def monotone(self) -> int:
        return self.base.monotone

    def kinks(self):
        return self.base.kinks() if self.exponent == 1 else ()

    def reach(self) -> float:
        return self.base.reach()


@dataclass(frozen=True)
class ExpNeg(Loss):
    """``exp(-t x) / t`` with ``t > 0``."""

    t: float = 1.0
    monotone = -1

    def __post_init__(self):
        if not self.t > 0:
            raise ValueError("ExpNeg needs t > 0")

    def __call__(self, x):
        with np.errstate(over="ignore"):
            out = np.exp(-self.t * np.asarray(x, dtype=float)) / self.t
        if not np.all(np.isfinite(out)):
            raise EvaluationError("ExpNeg overflow on extreme atoms")
        return out


@dataclass(frozen=True)
class Custom(Loss):
    """User-supplied pointwise loss.

    The declared Lipschitz constant is informational; closed-form
    reformulations never rely on it.
    """

    fn: Callable[[np.ndarray], np.ndarray]
    lipschitz: float = math.inf
    convex: bool = True
    monotone: int = 0
    nonnegative: bool = False
    name: str = "custom"

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.asarray(self.fn(x), dtype=float)
        if out.shape != x.shape:
            out = np.vectorize(self.fn, otypes=[float])(x)
        return out


def softplus() -> Custom:
    """The smoothed hinge ``log(1 + e^x)``."""
    return Custom(lambda x: np.logaddexp(0.0, x), lipschitz=1.0, convex=True,
                  monotone=1, nonnegative=True, name="softplus")


# ---------------------------------------------------------------------------
# distortion functions


@dataclass(frozen=True, eq=False)
class DistortionFunction:
    """Piecewise-linear distortion ``h`` on ``[0, 1]``.

    Parameters
    ----------
    knots : array_like
        Strictly increasing grid starting at 0 and ending at 1.
    values : array_like
        ``h`` at the knots.
    """

    knots: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        s = np.array(self.knots, dtype=float).reshape(-1)
        v = np.array(self.values, dtype=float).reshape(-1)
        if s.size < 2 or s.shape != v.shape:
            raise ValueError("need at least two knots with matching values")
        if s[0] != 0.0 or s[-1] != 1.0 or not np.all(np.diff(s) > 0):
            raise ValueError("knots must increase strictly from 0 to 1")
        if not np.all(np.isfinite(v)):
            raise ValueError("distortion values must be finite")
        s.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "knots", s)
        object.__setattr__(self, "values", v)

    @classmethod
    def identity(cls) -> "DistortionFunction":
        return cls([0.0, 1.0], [0.0, 1.0])

    @classmethod
    def cvar(cls, alpha: float) -> "DistortionFunction":
        """``h(s) = (s - alpha)_+ / (1 - alpha)``."""
        if not 0 <= alpha < 1:
            raise ValueError("alpha must lie in [0, 1)")
        if alpha == 0:
            return cls.identity()
        return cls([0.0, alpha, 1.0], [0.0, 0.0, 1.0])

    @classmethod
    def from_function(cls, fn: Callable[[np.ndarray], np.ndarray],
                      knots: int | Sequence[float] = 1001) -> "DistortionFunction":
        """Sample a smooth ``h`` on a knot grid."""
        s = np.linspace(0.0, 1.0, knots) if np.isscalar(knots) else np.asarray(knots, float)
        return cls(s, np.asarray(fn(s), dtype=float))

    def __call__(self, s):
        return np.interp(s, self.knots, self.values)

    @cached_property
    def slopes(self) -> np.ndarray:
        return np.diff(self.values) / np.diff(self.knots)

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.knots)

    def _slope_tol(self) -> float:
        return 1e-12 * max(1.0, float(np.max(np.abs(self.slopes))))

    @cached_property
    def convex(self) -> bool:
        return bool(np.all(np.diff(self.slopes) >= -self._slope_tol()))

    @cached_property
    def increasing(self) -> bool:
        return bool(np.all(self.slopes >= -self._slope_tol()))

    @cached_property
    def decreasing(self) -> bool:
        return bool(np.all(self.slopes <= self._slope_tol()))

    def slope_norm(self, q: float) -> float:
        """Exact ``L^q`` norm of the left-derivative on ``[0, 1]``."""
        a = np.abs(self.slopes)
        if math.isinf(q):
            return float(np.max(a))
        return float(np.sum(a**q * self.widths) ** (1.0 / q))

    def centered(self) -> "DistortionFunction":
        """``h + (h(0) - h(1)) s``, the distortion whose slopes integrate to zero."""
        gap = self.values[0] - self.values[-1]
        return DistortionFunction(self.knots, self.values + gap * self.knots)


# ---------------------------------------------------------------------------
# column helpers


def _columns(Z, W):
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    W = np.asarray(W, dtype=float)
    if W.ndim == 1:
        W = np.broadcast_to(W[:, None], Z.shape)
    if W.shape != Z.shape:
        raise ValueError("weights do not match atoms")
    return Z, W


def _sorted_levels(Z, W):
    order = np.argsort(Z, axis=0, kind="stable")
    Zs = np.take_along_axis(Z, order, axis=0)
    Ws = np.take_along_axis(W, order, axis=0)
    F = np.cumsum(Ws, axis=0)
    F[-1] = 1.0
    Fprev = np.vstack([np.zeros((1, Z.shape[1])), F[:-1]])
    return Zs, F, Fprev


def _cvar_columns(Z, W, alpha):
    Zs, F, Fprev = _sorted_levels(Z, W)
    dh = np.maximum(F, alpha) - np.maximum(Fprev, alpha)
    return np.sum(Zs * dh, axis=0) / (1.0 - alpha)


def _distortion_columns(Z, W, h: DistortionFunction):
    Zs, F, Fprev = _sorted_levels(Z, W)
    return np.sum(Zs * (h(F) - h(Fprev)), axis=0)


def _mean_columns(Z, W):
    return np.sum(Z * W, axis=0)


# ---------------------------------------------------------------------------
# risks


class Risk:
    """Law-invariant functional of a one-dimensional random variable."""

    # +1 nondecreasing, -1 nonincreasing, 0 neither
    monotone: int = 0

    def evaluate_columns(self, Z, W) -> np.ndarray:
        """Evaluate on the columns of ``Z`` with weights ``W``.

        ``W`` is either one weight vector shared by all columns or a matrix
        of the same shape as ``Z``.  Zero weights are allowed here so that
        distributions with different support sizes can be padded.
        """
        raise NotImplementedError

    def __call__(self, dist: EmpiricalDistribution1D) -> float:
        return float(self.evaluate_columns(dist.atoms, dist.weights)[0])


@dataclass(frozen=True)
class ExpectedLoss(Risk):
    loss: Loss

    @property
    def monotone(self) -> int:
        return self.loss.monotone

    def evaluate_columns(self, Z, W):
        Z, W = _columns(Z, W)
        return np.sum(W * self.loss(Z), axis=0)


@dataclass(frozen=True)
class CVaR(Risk):
    alpha: float
    monotone = 1

    def __post_init__(self):
        if not 0 <= self.alpha < 1:
            raise ValueError("alpha must lie in [0, 1)")

    def evaluate_columns(self, Z, W):
        Z, W = _columns(Z, W)
        return _cvar_columns(Z, W, self.alpha)


@dataclass(frozen=True)
class CVaRDeviation(Risk):
    """``CVaR_alpha(Z - E Z)``."""

    alpha: float

    def __post_init__(self):
        if not 0 <= self.alpha < 1:
            raise ValueError("alpha must lie in [0, 1)")

    def evaluate_columns(self, Z, W):
        Z, W = _columns(Z, W)
        return _cvar_columns(Z - _mean_columns(Z, W), W, self.alpha)


@dataclass(frozen=True)
class Distortion(Risk):
    h: DistortionFunction

    @property
    def monotone(self) -> int:
        if self.h.increasing:
            return 1
        return -1 if self.h.decreasing else 0

    def evaluate_columns(self, Z, W):
        Z, W = _columns(Z, W)
        return _distortion_columns(Z, W, self.h)


@dataclass(frozen=True)
class DistortionDeviation(Risk):
    """``rho_h(Z - E Z)``."""

    h: DistortionFunction

    def evaluate_columns(self, Z, W):
        Z, W = _columns(Z, W)
        return _distortion_columns(Z - _mean_columns(Z, W), W, self.h)


_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0
_MAX_EXPANSIONS = 60
_KINK_POLISH_LIMIT = 4096


def _golden(f, lo, hi, tol, max_iter=300):
    a, b = lo.copy(), hi.copy()
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if not np.any(b - a > tol):
            break
        # ties move right so flat stretches resolve to their upper end
        left = fc < fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        new_c = np.where(left, b - _INVPHI * (b - a), d)
        new_d = np.where(left, c, a + _INVPHI * (b - a))
        x = np.where(left, new_c, new_d)
        fx = f(x)
        fc, fd = np.where(left, fx, fd), np.where(left, fc, fx)
        c, d = new_c, new_d
    pick = fc < fd
    return np.where(pick, c, d), np.where(pick, fc, fd)


class _InfRepBase(Risk):
    loss: Loss
    p: float

    def _check(self):
        if not self.loss.convex:
            raise ValueError("inf-representation needs a convex loss")
        if not (1 <= self.p < math.inf):
            raise ValueError("inf-representation order must lie in [1, inf)")

    def _objective(self, Z, W, t):
        u = self.loss(Z - t[None, :])
        if self.p != 1:
            u = np.power(np.maximum(u, 0.0), self.p)
        return self._outer(t, np.sum(W * u, axis=0))

    def _outer(self, t, s):
        raise NotImplementedError

    def minimize_columns(self, Z, W) -> tuple[np.ndarray, np.ndarray]:
        """Minimizer ``t*`` and minimum for every column."""
        Z, W = _columns(Z, W)
        self._check()
        zmin, zmax = Z.min(axis=0), Z.max(axis=0)
        rng_ = zmax - zmin
        span = rng_ + self.loss.reach() + 1.0
        lo, hi = zmin - span, zmax + span
        tol = 1e-10 * (1.0 + rng_)
        f = lambda t: self._objective(Z, W, t)
        for _ in range(_MAX_EXPANSIONS):
            t, val = _golden(f, lo, hi, tol)
            width = hi - lo
            at_lo = t - lo <= 1e-6 * width
            at_hi = hi - t <= 1e-6 * width
            # expand only where the objective keeps decreasing past the bracket
            at_lo &= f(lo - width) < val
            at_hi &= f(hi + width) < val
            if not np.any(at_lo | at_hi):
                break
            lo = np.where(at_lo, lo - width, lo)
            hi = np.where(at_hi, hi + width, hi)
        else:
            raise EvaluationError("inf-representation objective is not coercive")
        kinks = self.loss.kinks()
        if kinks and Z.shape[0] * len(kinks) <= _KINK_POLISH_LIMIT:
            cand = np.concatenate([Z - k for k in kinks], axis=0)
            for row in cand:
                v = f(row)
                better = v < val
                t = np.where(better, row, t)
                val = np.where(better, v, val)
        if not np.all(np.isfinite(val)):
            raise EvaluationError("inf-representation produced a non-finite value")
        return t, val

    def evaluate_columns(self, Z, W):
        return self.minimize_columns(Z, W)[1]


@dataclass(frozen=True)
class InfRepRisk(_InfRepBase):
    """``inf_t { t + c (E[l(Z - t)^p])^(1/p) }``."""

    loss: Loss
    p: float = 1.0
    c: float = 1.0

    def __post_init__(self):
        if not self.c >= 1:
            raise ValueError("InfRepRisk scale c must be >= 1")
        self._check()

    @property
    def monotone(self) -> int:
        return 1 if self.loss.monotone == 1 else 0

    def _outer(self, t, s):
        return t + self.c * (s if self.p == 1 else np.power(s, 1.0 / self.p))


@dataclass(frozen=True)
class InfRepDev(_InfRepBase):
    """``inf_t E[l(Z - t)^p]``."""

    loss: Loss
    p: float = 2.0

    def __post_init__(self):
        self._check()

    def _outer(self, t, s):
        return s


@dataclass(frozen=True)
class Variance(Risk):
    """Population variance, computed with the two-pass formula."""

    def evaluate_columns(self, Z, W):
        Z, W = _columns(Z, W)
        return np.sum(W * (Z - _mean_columns(Z, W)) ** 2, axis=0)


@dataclass(frozen=True)
class Negated(Risk):
    """``rho(-Z)``; turns loss-of-margin objectives into risks of the margin."""

    inner: Risk

    @property
    def monotone(self) -> int:
        return -self.inner.monotone

    def evaluate_columns(self, Z, W):
        Z, W = _columns(Z, W)
        return self.inner.evaluate_columns(-Z, W)


@dataclass(frozen=True)
class AbsoluteValue(Risk):
    """``rho(|Z|)``."""

    inner: Risk

    def evaluate_columns(self, Z, W):
        Z, W = _columns(Z, W)
        return self.inner.evaluate_columns(np.abs(Z), W)


# ---------------------------------------------------------------------------
# functional interface


def eval_expected_loss(dist: EmpiricalDistribution1D, loss: Loss) -> float:
    """``sum_i w_i l(z_i)``."""
    return float(math.fsum(dist.weights * loss(dist.atoms)))


def eval_cvar(dist: EmpiricalDistribution1D, alpha: float) -> float:
    """Upper-tail average ``(1/(1-alpha)) int_alpha^1 F^{-1}(s) ds``."""
    return CVaR(alpha)(dist)


def eval_distortion(dist: EmpiricalDistribution1D, h: DistortionFunction) -> float:
    """Stieltjes sum ``sum_i z_(i) (h(F_i) - h(F_{i-1}))``."""
    return Distortion(h)(dist)


def eval_inf_rep(dist: EmpiricalDistribution1D, spec: InfRepRisk | InfRepDev) -> tuple[float, float]:
    """Value and minimizing ``t`` of an inf-representable functional."""
    t, v = spec.minimize_columns(dist.atoms, dist.weights)
    return float(v[0]), float(t[0])


def eval_risk(dist: EmpiricalDistribution1D, risk: Risk) -> float:
    if isinstance(risk, ExpectedLoss):
        return eval_expected_loss(dist, risk.loss)
    return risk(dist)
