"""Brute-force worst-case risk over a one-dimensional Wasserstein ball.

The oracle never looks at closed forms.  It maximizes ``rho(Z + V)`` over
perturbations with ``||V||_p <= eps`` by evaluating three candidate families
and returning the best feasible one:

(a) analytic directions built from the structure of the risk (hinge slopes,
    inf-representation minimizers, distortion slopes), scaled to the boundary;
(b) escaping tails, which move a quantile slice of mass ``mu`` by
    ``eps / mu^(1/p)``;
(c) multi-restart projected ascent with central-difference gradients, or a
    coordinate sign search when ``p = inf``.

Perturbations may split an atom into several pieces because the underlying
probability space is atomless; a split piece keeps its base atom and carries
part of the weight.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .risk import (
    Absolute,
    AbsoluteValue,
    CVaR,
    CVaRDeviation,
    Distortion,
    DistortionDeviation,
    DistortionFunction,
    EmpiricalDistribution1D,
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
    _InfRepBase,
)
from ._seeding import derive_seed
from .transport import as_order, conjugate

__all__ = [
    "OracleConfig",
    "Perturbation",
    "OracleResult",
    "sup_risk_numeric",
    "minimax_gap",
    "MinimaxResult",
    "FalsificationReport",
    "falsify_equivalence",
]

_PIECE_TOL = 1e-15


@dataclass(frozen=True)
class OracleConfig:
    """Search budget for :func:`sup_risk_numeric`.

    Attributes
    ----------
    restarts : int
        Ascent restarts; 0 disables family (c).
    iters : int
        Ascent iterations per restart.
    n_max : float
        Largest ``n`` in the escaping family, whose smallest tail mass is
        ``n_max ** -p``.
    tail_grid : int
        Number of geometrically spaced ``n`` values in the escaping family.
    seed : int
        Master seed; ascent restarts use derived seeds.
    """

    restarts: int = 16
    iters: int = 60
    n_max: float = 1e5
    tail_grid: int = 40
    seed: int = 0


@dataclass(frozen=True)
class Perturbation:
    """Shifts of (possibly split) atoms of the reference distribution."""

    atoms: np.ndarray
    weights: np.ndarray
    shifts: np.ndarray
    family: str = ""

    def norm(self, p: float) -> float:
        a = np.abs(self.shifts)
        if math.isinf(p):
            return float(a.max(initial=0.0))
        return float(np.sum(self.weights * a**p) ** (1.0 / p))

    def perturbed(self) -> EmpiricalDistribution1D:
        return EmpiricalDistribution1D(self.atoms + self.shifts, self.weights / self.weights.sum())


@dataclass(frozen=True)
class OracleResult:
    """Best value found.

    When ``attained`` is false the value is the extrapolated limit of an
    escaping sequence and ``argmax`` is its last computed member.
    """

    value: float
    argmax: Perturbation
    nominal: float
    attained: bool = True

    @property
    def family(self) -> str:
        return self.argmax.family

    def __iter__(self):
        yield self.value
        yield self.argmax


# ---------------------------------------------------------------------------
# views: the risk as a functional of a transformed variable


@dataclass(frozen=True)
class _View:
    """``rho(Z) = core(key(Z))``; a key-space shift ``d`` is a shift ``sign(Z) d`` of ``Z``."""

    core: Risk
    mode: str  # "id", "neg" or "abs"

    def key(self, z):
        if self.mode == "id":
            return z
        if self.mode == "neg":
            return -z
        return np.abs(z)

    def sign(self, z):
        if self.mode == "id":
            return np.ones_like(z)
        if self.mode == "neg":
            return -np.ones_like(z)
        return np.where(z >= 0, 1.0, -1.0)


def _view(risk: Risk) -> _View:
    mode = "id"
    while True:
        if isinstance(risk, Negated):
            mode = {"id": "neg", "neg": "id", "abs": "abs"}[mode]
            risk = risk.inner
        elif isinstance(risk, AbsoluteValue):
            mode = "abs"
            risk = risk.inner
        else:
            return _View(risk, mode)


# ---------------------------------------------------------------------------
# quantile pieces


@dataclass(frozen=True)
class _Pieces:
    z: np.ndarray      # base atom of each piece (original variable)
    key: np.ndarray    # key value of each piece
    w: np.ndarray      # piece weight
    u: np.ndarray      # midpoint of the piece's level interval


class _Splitter:
    """Cuts the key-sorted distribution at arbitrary levels."""

    def __init__(self, z, w, view: _View):
        k = view.key(z)
        order = np.lexsort((z, k))
        self.z = z[order]
        self.k = k[order]
        self.w = w[order]
        F = np.cumsum(self.w)
        F[-1] = 1.0
        self.F = F

    def pieces(self, levels: Sequence[float] = ()) -> _Pieces:
        lv = np.asarray(list(levels), dtype=float)
        lv = lv[(lv > 0) & (lv < 1)]
        b = np.unique(np.concatenate(([0.0], self.F, lv)))
        b = b[np.concatenate(([True], np.diff(b) > _PIECE_TOL))]
        b[-1] = 1.0
        mid = 0.5 * (b[1:] + b[:-1])
        idx = np.minimum(np.searchsorted(self.F, mid, side="left"), self.z.size - 1)
        return _Pieces(self.z[idx], self.k[idx], np.diff(b), mid)


def _scale_to_ball(d, w, p, eps):
    if math.isinf(p):
        m = np.max(np.abs(d))
        return None if m == 0 else eps * d / m
    nrm = np.sum(w * np.abs(d) ** p) ** (1.0 / p)
    return None if not nrm > 0 else eps * d / nrm


def _sgn(x, zero=1.0):
    return np.where(x > 0, 1.0, np.where(x < 0, -1.0, zero))


# ---------------------------------------------------------------------------
# candidate families


def _loss_directions(loss: Loss, k: np.ndarray, t: float = 0.0) -> list[np.ndarray]:
    """Directions from the proofs for ``l(k - t)``."""
    x = k - t
    while isinstance(loss, PowerOf):
        loss = loss.base
    out = []
    if isinstance(loss, Linear):
        out.append(np.full_like(x, 1.0 if loss.slope >= 0 else -1.0))
    elif isinstance(loss, HingePos):
        out += [np.maximum(x - loss.m, 0.0), _sgn(x - loss.m)]
    elif isinstance(loss, HingeNeg):
        out += [-np.maximum(loss.m - x, 0.0), _sgn(x - loss.m, -1.0)]
    elif isinstance(loss, TwoSidedHinge):
        s = x - loss.m1
        out += [np.maximum(np.abs(s) - loss.m2, 0.0) * _sgn(s), _sgn(s), _sgn(s, -1.0)]
    elif isinstance(loss, ShiftedAbs):
        s = x - loss.m
        out += [(np.abs(s) + loss.b) * _sgn(s), (np.abs(s) + loss.b) * _sgn(s, -1.0)]
    elif isinstance(loss, Absolute):
        s = x - loss.center
        out += [_sgn(s), _sgn(s, -1.0), (loss.scale * np.abs(s) + loss.intercept) * _sgn(s)]
    elif isinstance(loss, ExpNeg):
        out.append(-np.ones_like(x))
    else:
        # numeric slope of an opaque loss, and the loss weighted by its slope sign
        h = 1e-6 * (1 + np.abs(x))
        g = (loss(x + h) - loss(x - h)) / (2 * h)
        out += [g, _sgn(g) * np.abs(loss(x))]
    return out


def _one_sided_slopes(loss: Loss, x: np.ndarray):
    h = 1e-7 * (1 + np.abs(x))
    l0 = loss(x)
    return (l0 - loss(x - h)) / h, (loss(x + h) - l0) / h


def _kink_split_directions(core: "_InfRepBase", sp: _Splitter, t: float, p: float):
    """Directions for atoms tied at a kink of ``l(. - t)``.

    The tied mass is split between the left and right subgradient so that the
    first-order condition in ``t`` keeps holding once every loss value is
    scaled by a common factor.
    """
    out = []
    if p == 1:
        return out
    base = sp.pieces()
    for kink in core.loss.kinks():
        at = t + kink
        tie = np.abs(base.key - at) <= 1e-9 * (1 + abs(at))
        if not tie.any():
            continue
        x = base.key - t
        lv = core.loss(x)
        gl, gr = _one_sided_slopes(core.loss, x)
        wgt = np.maximum(lv, 0.0) ** (p - 1)
        S = float(np.sum(base.w[~tie] * wgt[~tie] * 0.5 * (gl + gr)[~tie]))
        if isinstance(core, InfRepRisk):
            T = float(np.sum(base.w * np.maximum(lv, 0.0) ** p)) ** (1 - 1 / p) / core.c
        else:
            T = 0.0
        w0 = float(base.w[tie].sum())
        a = w0 * float(wgt[tie][0])
        gl0, gr0 = float(gl[tie][0]), float(gr[tie][0])
        if a <= 0 or gr0 <= gl0:
            continue
        theta = float(np.clip((T - S - a * gl0) / (a * (gr0 - gl0)), 0.0, 1.0))
        F_hi = float(sp.F[np.searchsorted(sp.k, at + 1e-9 * (1 + abs(at)), side="right") - 1])
        cut = F_hi - theta * w0
        pc = sp.pieces([cut])
        xp = pc.key - t
        glp, grp = _one_sided_slopes(core.loss, xp)
        tied = np.abs(pc.key - at) <= 1e-9 * (1 + abs(at))
        g = np.where(tied, np.where(pc.u > cut, grp, glp), 0.5 * (glp + grp))
        # shifting by l * g scales every loss value by the same factor
        out.append((pc, np.maximum(core.loss(xp), 0.0) * g))
    return out


def _distortion_of(core: Risk) -> tuple[DistortionFunction | None, bool]:
    """Distortion behind a CVaR or distortion risk, and whether it is a deviation."""
    if isinstance(core, CVaR):
        return DistortionFunction.cvar(core.alpha), False
    if isinstance(core, CVaRDeviation):
        return DistortionFunction.cvar(core.alpha), True
    if isinstance(core, Distortion):
        return core.h, False
    if isinstance(core, DistortionDeviation):
        return core.h, True
    return None, False


def _distortion_direction(h: DistortionFunction, u: np.ndarray, p: float) -> np.ndarray:
    seg = np.minimum(np.searchsorted(h.knots, u, side="right") - 1, h.slopes.size - 1)
    g = h.slopes[seg]
    if math.isinf(p):
        return _sgn(g, 0.0)
    if p == 1:
        a = np.abs(g)
        return np.where(a >= a.max() * (1 - 1e-12), _sgn(g, 0.0), 0.0)
    return _sgn(g, 0.0) * np.abs(g) ** (1.0 / (p - 1.0))


def _special_levels(core: Risk, p: float) -> tuple[list, list]:
    """Extra tail masses and split levels suggested by the risk."""
    masses, levels = [0.5], [0.5]
    h, dev = _distortion_of(core)
    if h is not None:
        masses += list(h.widths)
        levels += list(h.knots[1:-1])
    if isinstance(core, CVaR) or isinstance(core, CVaRDeviation):
        masses.append(1 - core.alpha)
        levels.append(core.alpha)
    if isinstance(core, InfRepRisk) and not math.isinf(p):
        masses.append(core.c ** (-p))
    return masses, levels


def _candidates(view: _View, sp: _Splitter, p: float, eps: float, cfg: OracleConfig):
    core = view.core
    out: list[tuple[_Pieces, np.ndarray, str]] = []

    def add(pc: _Pieces, d, family):
        v = _scale_to_ball(d, pc.w, p, eps)
        if v is not None and np.all(np.isfinite(v)):
            out.append((pc, v, family))
            if math.isinf(p):
                out.append((pc, eps * _sgn(d, 0.0), family + "/sign"))

    base = sp.pieces()
    k = base.key
    dirs = [np.ones_like(k), -np.ones_like(k), k - np.dot(base.w, k)]
    med_pc = sp.pieces([0.5])
    add(med_pc, _sgn(med_pc.u - 0.5), "analytic/median-split")
    add(med_pc, -_sgn(med_pc.u - 0.5), "analytic/median-split")

    if isinstance(core, ExpectedLoss):
        dirs += _loss_directions(core.loss, k)
    elif isinstance(core, _InfRepBase):
        t_star = core.minimize_columns(k, base.w)[0][0]
        dirs += _loss_directions(core.loss, k, t_star)
        for pc, d in _kink_split_directions(core, sp, t_star, p):
            add(pc, d, "analytic/kink-split")
    elif isinstance(core, Variance):
        pass  # k - mean is already included
    h, dev = _distortion_of(core)
    if h is not None:
        hh = h.centered() if dev else h
        pc = sp.pieces(h.knots[1:-1])
        add(pc, _distortion_direction(hh, pc.u, p), "analytic/distortion")
    for d in dirs:
        add(base, d, "analytic")

    # escaping tails
    if not math.isinf(p):
        ns = np.unique(np.round(np.geomspace(1.0, cfg.n_max, cfg.tail_grid)))
        masses, levels = _special_levels(core, p)
        mus = np.unique(np.concatenate((ns ** (-p), np.asarray(masses, float))))
        mus = mus[(mus > 0) & (mus <= 1)]
        for mu in mus:
            # shift sizes use the realized slice mass so the norm is exactly eps
            top = sp.pieces([1 - mu])
            sel = top.u > 1 - mu
            if sel.any():
                m = top.w[sel].sum()
                out.append((top, np.where(sel, eps / m ** (1 / p), 0.0), "escape/top"))
            bot = sp.pieces([mu])
            sel = bot.u < mu
            if sel.any():
                m = bot.w[sel].sum()
                out.append((bot, np.where(sel, -eps / m ** (1 / p), 0.0), "escape/bottom"))
        for lv in levels:
            pc = sp.pieces([lv])
            add(pc, _sgn(pc.u - lv), "analytic/level-split")
            add(pc, -_sgn(pc.u - lv), "analytic/level-split")
    return out


def _evaluate_batch(risk: Risk, view: _View, cands):
    L = max(pc.z.size for pc, _, _ in cands)
    K = len(cands)
    Z = np.empty((L, K))
    W = np.zeros((L, K))
    for j, (pc, v, _) in enumerate(cands):
        n = pc.z.size
        Z[:n, j] = pc.z + view.sign(pc.z) * v
        Z[n:, j] = Z[0, j]
        W[:n, j] = pc.w
    return risk.evaluate_columns(Z, W)


def _ascent(risk: Risk, z, w, p, eps, cfg: OracleConfig):
    """Projected ascent (finite ``p``) or sign search (``p = inf``) on per-atom shifts."""
    n = z.size
    best_v, best_f = np.zeros(n), -np.inf

    def f(V):
        with np.errstate(all="ignore"):
            return risk.evaluate_columns(z[:, None] + V, w)

    def project(v):
        nrm = np.max(np.abs(v)) if math.isinf(p) else np.sum(w * np.abs(v) ** p) ** (1 / p)
        return v if nrm <= eps else v * (eps / nrm)

    failures = 0
    for r in range(cfg.restarts):
        rng = np.random.default_rng(derive_seed(cfg.seed, r))
        if math.isinf(p):
            if r == 0:
                v = np.full(n, eps)
            elif r == 1:
                v = np.full(n, -eps)
            else:
                v = eps * rng.choice([-1.0, 0.0, 1.0], size=n)
            fv = f(v[:, None])[0]
            for _ in range(4):
                improved = False
                for i in range(n):
                    trial = np.repeat(v[:, None], 3, axis=1)
                    trial[i] = (-eps, 0.0, eps)
                    vals = f(trial)
                    j = int(np.argmax(vals))
                    if vals[j] > fv + 1e-15:
                        v, fv, improved = trial[:, j].copy(), vals[j], True
                if not improved:
                    break
        else:
            v = project(rng.standard_normal(n) * eps * 4) * rng.uniform(0.5, 1.0)
            fv = f(v[:, None])[0]
            for it in range(1, cfg.iters + 1):
                hstep = 1e-6 * (1 + np.abs(v))
                E = np.diag(hstep)
                vals = f(np.hstack([v[:, None] + E, v[:, None] - E]))
                if not np.all(np.isfinite(vals)):
                    break
                g = (vals[:n] - vals[n:]) / (2 * hstep)
                d = g / w
                nd = np.sum(w * np.abs(d) ** p) ** (1 / p)
                if not nd > 0:
                    break
                v = project(v + (eps / math.sqrt(it)) * d / nd)
                fv = f(v[:, None])[0]
                if fv > best_f:
                    best_v, best_f = v.copy(), fv
        if not np.isfinite(fv):
            failures += 1
            continue
        if fv > best_f:
            best_v, best_f = v.copy(), fv
    if cfg.restarts and failures == cfg.restarts:
        raise ArithmeticError("every ascent restart produced a non-finite risk")
    return best_v, best_f


def sup_risk_numeric(proj: EmpiricalDistribution1D, ball_eff, risk: Risk,
                     cfg: OracleConfig | None = None) -> OracleResult:
    """Numeric ``sup`` of ``risk(Z + V)`` over ``||V||_p <= eps_eff``.

    Parameters
    ----------
    proj : EmpiricalDistribution1D
        Distribution of ``Z``.
    ball_eff : tuple
        ``(p, eps_eff)``.
    risk : Risk
    cfg : OracleConfig, optional

    Returns
    -------
    OracleResult
        Best value found, the perturbation attaining it, and the nominal risk.
    """
    cfg = cfg or OracleConfig()
    p, eps = as_order(ball_eff[0]), float(ball_eff[1])
    if eps < 0:
        raise ValueError("eps_eff must be nonnegative")
    c = proj.canonical
    z, w = c.atoms, c.weights
    nominal = float(risk.evaluate_columns(z, w)[0])
    best = OracleResult(nominal, Perturbation(z, w, np.zeros_like(z), "nominal"), nominal)
    if eps == 0:
        return best
    view = _view(risk)
    sp = _Splitter(z, w, view)
    cands = _candidates(view, sp, p, eps, cfg)
    with np.errstate(all="ignore"):
        try:
            vals = _evaluate_batch(risk, view, cands)
        except ArithmeticError:
            vals = np.array([_safe_eval(risk, view, cand) for cand in cands])
    vals = np.where(np.isfinite(vals), vals, -np.inf)
    j = int(np.argmax(vals)) if vals.size else -1
    if j >= 0 and vals[j] > best.value:
        pc, v, fam = cands[j]
        pert = Perturbation(pc.z, pc.w, view.sign(pc.z) * v, fam)
        best = OracleResult(float(vals[j]), pert, nominal)
    if cfg.restarts > 0:
        v, fv = _ascent(risk, z, w, p, eps, cfg)
        if fv > best.value:
            best = OracleResult(float(fv), Perturbation(z, w, v, "ascent"), nominal)
    if not math.isinf(p):
        for fam in ("escape/top", "escape/bottom"):
            lim = _escape_limit(cands, vals, fam, p)
            if lim is not None and lim[0] > best.value:
                pc, v, _ = cands[lim[1]]
                pert = Perturbation(pc.z, pc.w, view.sign(pc.z) * v, fam + "/limit")
                best = OracleResult(lim[0], pert, nominal, attained=False)
    tol = 1e-12 * max(1.0, eps)
    if best.argmax.norm(p) > eps + tol:
        raise AssertionError(f"oracle produced an infeasible perturbation ({best.family})")
    return best


def _escape_limit(cands, vals, family, p):
    """Extrapolated limit of an escaping sequence as its tail mass goes to zero.

    With ``h = mass^(1/p)`` the values behave like ``f0 + a h + b h^q`` with
    ``q`` the conjugate exponent (the ``h^q`` term comes from the inner
    minimizer of deviation-type risks drifting toward the escaped atom).  The
    model is fitted on the three smallest masses and checked against the fit
    on the next three; the estimate is used only when the values increase as
    ``h`` shrinks and both fits agree.
    """
    pts = []
    for i, (pc, v, fam) in enumerate(cands):
        if fam == family and np.isfinite(vals[i]):
            pts.append((float(pc.w[v != 0].sum()) ** (1.0 / p), float(vals[i]), i))
    pts.sort()
    k = 2 if p == 1 else 3
    if len(pts) < k + 1:
        return None
    h = np.array([q[0] for q in pts[:k + 1]])
    f = np.array([q[1] for q in pts[:k + 1]])
    if not (np.all(np.diff(h) > 0) and np.all(np.diff(f) < 0)):
        return None
    q = conjugate(p)

    def fit(sl):
        hs = h[sl] / h[0]
        cols = [np.ones_like(hs), hs] + ([hs**q] if k == 3 else [])
        return float(np.linalg.solve(np.column_stack(cols), f[sl])[0])

    e1, e2 = fit(slice(0, k)), fit(slice(1, k + 1))
    if abs(e1 - e2) > 0.1 * abs(e1 - f[0]) + 1e-14 * max(1.0, abs(f[0])):
        return None
    return e1, pts[0][2]


def _safe_eval(risk, view, cand):
    try:
        return _evaluate_batch(risk, view, [cand])[0]
    except ArithmeticError:
        return -np.inf


# ---------------------------------------------------------------------------
# min-max interchange


@dataclass(frozen=True)
class MinimaxResult:
    gap: float
    inf_sup: float
    sup_inf: float
    t_opt: float
    bracket: tuple[float, float]

    def __float__(self):
        return self.gap


def _lipschitz_of(loss: Loss) -> float:
    lip = loss.lipschitz
    if not math.isfinite(lip):
        raise ValueError("min-max bracket needs a Lipschitz loss")
    return lip


def minimax_gap(proj: EmpiricalDistribution1D, ball_eff, loss: Loss, p: float, c: float = 1.0,
                kind: str = "risk", cfg: OracleConfig | None = None, grid: int = 21) -> MinimaxResult:
    """``|inf_t sup_V - sup_V inf_t|`` for an inf-representable functional.

    ``kind="risk"`` uses ``t + c (E l(Z+V-t)^p)^(1/p)``; ``kind="dev"`` uses
    ``E l(Z+V-t)^p``.  The outer minimization runs on the compact bracket
    around the nominal minimizer outside of which the sup-side objective
    cannot be optimal.
    """
    cfg = cfg or OracleConfig()
    p = as_order(p)
    eps = float(ball_eff[1])
    if kind not in ("risk", "dev"):
        raise ValueError("kind must be 'risk' or 'dev'")
    functional = InfRepRisk(loss, p, c) if kind == "risk" else InfRepDev(loss, p)
    sup_inf = sup_risk_numeric(proj, (p, eps), functional, cfg).value

    inner_cfg = replace(cfg, restarts=0)
    inner_risk = ExpectedLoss(loss if p == 1 else PowerOf(loss, p))
    z, w = proj.atoms, proj.weights

    def nominal_pi(t):
        s = float(np.dot(w, np.power(loss(z - t), p)))
        return t + c * s ** (1 / p) if kind == "risk" else s ** (1 / p)

    def phi(t):
        s = sup_risk_numeric(proj.shifted(-t), (p, eps), inner_risk, inner_cfg).value
        return t + c * s ** (1 / p) if kind == "risk" else s

    t0 = float(functional.minimize_columns(z, w)[0][0])
    M = (c if kind == "risk" else 1.0) * _lipschitz_of(loss)
    level = nominal_pi(t0) + M * eps
    delta = max(1.0, float(np.ptp(z)))
    for _ in range(200):
        if nominal_pi(t0 - delta) > level and nominal_pi(t0 + delta) > level:
            break
        delta *= 2
    lo, hi = t0 - delta, t0 + delta
    ts = np.linspace(lo, hi, grid)
    vals = np.array([phi(t) for t in ts])
    i = int(np.argmin(vals))
    a, b = ts[max(i - 1, 0)], ts[min(i + 1, grid - 1)]
    res = minimize_scalar(phi, bounds=(a, b), method="bounded",
                          options={"xatol": 1e-11 * (1 + abs(t0) + delta)})
    cands = [(float(vals[i]), float(ts[i])), (float(res.fun), float(res.x)), (phi(t0), t0)]
    inf_sup, t_opt = min(cands)
    return MinimaxResult(abs(inf_sup - sup_inf), inf_sup, sup_inf, t_opt, (lo, hi))


# ---------------------------------------------------------------------------
# falsification


@dataclass
class FalsificationReport:
    floor: float
    best_C: float
    best_form: str
    floors: dict
    sups: np.ndarray
    nominals: np.ndarray
    radii: np.ndarray

    @property
    def falsified(self) -> bool:
        return self.floor > 1e-4


def _form_error(form, C, sups, nominals, radii, s):
    if form == "additive":
        pred = nominals + C * radii
    else:
        pred = (np.maximum(nominals, 0.0) ** (1 / s) + C * radii) ** s
    return float(np.max(np.abs(sups - pred)))


def falsify_equivalence(loss: Loss, p, instances, C_grid=None, forms: Sequence[str] | None = None,
                        cfg: OracleConfig | None = None) -> FalsificationReport:
    """Best uniform fit of regularized forms to numeric worst-case values.

    For each candidate form, ``nominal + C r`` (additive) or
    ``((E l^s)^(1/s)... )`` written as ``(N^(1/s) + C r)^s`` for a power loss
    ``l = b^s`` (power), computes ``min_C max_i |sup_i - form_i(C)|`` over the
    grid, then polishes the best grid point with a bounded scalar search (the
    objective is convex in ``C``).  The floor is the smallest error over all
    forms; a strictly positive floor means no constant ``C`` reproduces the
    worst case.

    Parameters
    ----------
    loss : Loss
    p : float
        Ball order.
    instances : sequence of (EmpiricalDistribution1D, float)
        Projected distributions and effective radii.
    C_grid : array_like, optional
        Defaults to 200 points spanning ``[0, 10]``.
    """
    p = as_order(p)
    cfg = cfg or OracleConfig()
    C_grid = np.linspace(0.0, 10.0, 200) if C_grid is None else np.asarray(C_grid, float)
    if forms is None:
        forms = ("additive", "power") if isinstance(loss, PowerOf) else ("additive",)
    risk = ExpectedLoss(loss)
    sups, radii, nominals = [], [], []
    s = loss.exponent if isinstance(loss, PowerOf) else 1.0
    for j, (dist, r) in enumerate(instances):
        res = sup_risk_numeric(dist, (p, r), risk, replace(cfg, seed=derive_seed(cfg.seed, j)))
        sups.append(res.value)
        nominals.append(res.nominal)
        radii.append(r)
    sups, radii, nominals = np.array(sups), np.array(radii), np.array(nominals)
    floors = {}
    best = (math.inf, 0.0, "")
    lo_C, hi_C = float(C_grid.min()), float(C_grid.max())
    for form in forms:
        errs = np.array([_form_error(form, C, sups, nominals, radii, s) for C in C_grid])
        i = int(np.argmin(errs))
        a, b = C_grid[max(i - 1, 0)], C_grid[min(i + 1, C_grid.size - 1)]
        res = minimize_scalar(lambda C: _form_error(form, C, sups, nominals, radii, s),
                              bounds=(max(a, lo_C), min(b, hi_C)), method="bounded",
                              options={"xatol": 1e-12})
        err, C = (float(res.fun), float(res.x)) if res.fun < errs[i] else (float(errs[i]), float(C_grid[i]))
        floors[form] = err
        if err < best[0]:
            best = (err, C, form)
    return FalsificationReport(best[0], best[1], best[2], floors, sups, nominals, radii)
