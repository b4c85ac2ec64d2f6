"""Weak conductance profiles, L1 weak Poincare inequalities and rate functions.

The conversions run in both directions:

* ``Phi -> alpha_1 -> alpha -> K*`` (conductance gives a rate), and
* ``K* -> Phi`` (a rate forces a conductance lower bound).

Every step returns a one-sided bound that stays valid when the continuous
suprema and infima are evaluated on grids: suprema that must be upper
bounds use a cellwise majorant, infima over ``theta`` are taken over a
subset (so they can only be too large), and ``K*`` keeps a subset of its
affine minorants.

Profiles ``Phi`` are increasing functions of the set mass on ``(0, 1/2]``,
typically the left-continuous staircases from
:func:`subgeo.finite_chain.weak_conductance_exact`.
"""
from __future__ import annotations

import math

import numpy as np
from scipy import integrate

from .functions import (
    DECREASING,
    INCREASING,
    CallableFn,
    Constant,
    MaxAffine,
    MonotoneFn,
    PowerLaw,
    RateFn,
    Staircase,
    log_grid,
)

__all__ = [
    "wcp_to_l1wpi",
    "l1wpi_to_wcp",
    "l1_to_l2_wpi",
    "wcp_to_kstar",
    "kstar_to_wcp",
    "kstar_closed_bound",
    "mixing_integral",
    "mixing_bound",
    "sharpness_ratio",
]

HALF = 0.5
QUARTER = 0.25
DEFAULT_GRID = 512


def _phi_pieces(phi: Staircase):
    """Right ends (capped at 1/2) and values of the finite pieces of a staircase."""
    ends = np.append(phi.breaks, math.inf)
    ends = np.minimum(ends, HALF)
    vals = phi.values
    starts = np.concatenate([[0.0], phi.breaks])
    keep = starts < HALF
    return ends[keep], vals[keep]


def _alpha1_staircase(phi: Staircase, r: np.ndarray) -> np.ndarray:
    # On a piece ending at m with value c, (s - r)/(s c) is largest at s = m.
    m, c = _phi_pieces(phi)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = (1.0 - r[:, None] / m[None, :]) / c[None, :]
    terms = np.where(np.isnan(terms), math.inf, terms)  # c = 0
    terms = np.where(m[None, :] >= r[:, None], terms, -math.inf)
    return np.maximum(terms.max(axis=1), 0.0)


def _alpha1_grid(phi: MonotoneFn, r: np.ndarray, num: int, chunk: int = 2048) -> np.ndarray:
    # Majorant on each cell [s_j, s_{j+1}]: (s_{j+1} - r) / (s_{j+1} Phi(s_j)).
    t = np.linspace(0.0, 1.0, num)
    out = np.empty_like(r)
    for start in range(0, r.size, chunk):
        rk = r[start:start + chunk, None]
        s = np.exp(np.log(rk) + t[None, :] * (math.log(HALF) - np.log(rk)))
        s[:, 0], s[:, -1] = rk[:, 0], HALF
        lo, hi = s[:, :-1], s[:, 1:]
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = (hi - rk) / (hi * phi(lo))
        vals = np.where(np.isnan(vals), math.inf, vals)
        out[start:start + chunk] = np.maximum(vals.max(axis=1), 0.0)
    return out


def wcp_to_l1wpi(phi: MonotoneFn, num: int = DEFAULT_GRID) -> CallableFn:
    """``alpha_1(r) = sup_{r <= s <= 1/2} (s - r) / (s Phi(s))``.

    Exact for staircases; for other profiles each grid cell contributes a
    majorant, so the result never undershoots the true supremum.  Where
    ``Phi`` vanishes the value is ``+inf``.
    """
    exact = isinstance(phi, Staircase)
    knots = _phi_pieces(phi)[0] if exact else np.zeros(0)

    def alpha1(r):
        r = np.asarray(r, float)
        flat = np.atleast_1d(r).ravel()
        res = np.zeros_like(flat)
        inside = (flat > 0) & (flat < HALF)
        res[flat <= 0] = math.inf
        if inside.any():
            res[inside] = (_alpha1_staircase(phi, flat[inside]) if exact
                           else _alpha1_grid(phi, flat[inside], num))
        return res.reshape(r.shape)

    return CallableFn(alpha1, DECREASING, domain=(0.0, HALF), label="alpha1", knots=knots,
                      limit=0.0)


def l1wpi_to_wcp(alpha1: MonotoneFn, num: int = DEFAULT_GRID) -> CallableFn:
    """``Phi(v) >= sup_{0 < r <= v} (v - r) / (alpha_1(r) v)`` on a log grid of ``r``.

    A grid sup is a valid lower bound, so the result is conservative.
    """
    extra = np.asarray(alpha1.knots(), float)

    def phi(v):
        v = np.asarray(v, float)
        flat = np.atleast_1d(v).ravel()
        out = np.zeros_like(flat)
        for k, vk in enumerate(flat):
            if vk <= 0:
                continue
            r = np.unique(np.concatenate([log_grid(vk * 1e-9, vk, num), extra[(extra > 0) & (extra <= vk)]]))
            a1 = alpha1(r)
            with np.errstate(divide="ignore", invalid="ignore"):
                vals = np.where(np.isfinite(a1) & (a1 > 0), (vk - r) / (a1 * vk), 0.0)
            vals = np.where(np.isfinite(a1) & (a1 == 0), math.inf, vals)
            out[k] = float(vals.max())
        return out.reshape(v.shape)

    return CallableFn(phi, INCREASING, domain=(0.0, HALF), label="phi_from_alpha1", knots=extra)


def _theta_grid(num: int) -> np.ndarray:
    t = np.concatenate([log_grid(1e-6, HALF, num // 2), 1 - log_grid(1e-6, HALF, num // 2), [HALF]])
    return np.unique(t[(t > 0) & (t < 1)])


def l1_to_l2_wpi(alpha1: MonotoneFn, num: int = DEFAULT_GRID) -> CallableFn:
    """``alpha(r) = inf_theta alpha_1((1 - theta) r)^2 / (2 theta (1 - theta))``.

    The ``theta`` grid always contains ``1/2``, so ``alpha(r) <= 2 alpha_1(r/2)^2``
    holds exactly.
    """
    theta = _theta_grid(num)

    def alpha(r):
        r = np.asarray(r, float)
        flat = np.atleast_1d(r).ravel()
        args = np.outer(flat, 1 - theta)
        a1 = alpha1(args.ravel()).reshape(args.shape)
        with np.errstate(over="ignore", invalid="ignore"):
            vals = a1 ** 2 / (2 * theta * (1 - theta))
        best = np.min(vals, axis=1)
        cap = 2 * alpha1(flat / 2) ** 2
        return np.minimum(best, cap).reshape(r.shape)

    return CallableFn(alpha, DECREASING, domain=(0.0, HALF), label="alpha",
                      knots=2 * np.asarray(alpha1.knots(), float), limit=0.0)


def kstar_closed_bound(phi: MonotoneFn, v) -> np.ndarray:
    """``v Phi(v / 4)^2 / 4``."""
    v = np.asarray(v, float)
    return 0.25 * v * phi(v / 4) ** 2


def wcp_to_kstar(phi: MonotoneFn, num: int = DEFAULT_GRID, v_check=None):
    """Rate function from a conductance profile.

    Builds ``K*(v) = sup_r (v - r) / alpha(r)`` over a finite set of ``r``,
    which is a max of affine functions of ``v`` and a valid (smaller)
    rate.  The ``r`` set includes ``v/2`` for each check point ``v`` and
    twice every profile knot, so the constructive rate dominates the
    closed bound ``v Phi(v/4)^2 / 4`` at the check points.

    Returns
    -------
    kstar : RateFn
        The constructive rate on ``[0, 1/4]``.
    report : dict
        ``v``, ``constructive`` and ``closed`` values at the check points and
        ``dominates``, whether the constructive value is at least the
        closed one everywhere there.
    """
    knots = np.asarray(phi.knots(), float)
    knots = knots[(knots > 0) & (knots <= HALF)]
    if v_check is None:
        v_check = np.unique(np.concatenate([log_grid(1e-6, QUARTER, 64), np.minimum(4 * knots, QUARTER)]))
    v_check = np.asarray(v_check, float)
    alpha = l1_to_l2_wpi(wcp_to_l1wpi(phi, num), num)
    r = np.unique(np.concatenate([log_grid(1e-9, QUARTER, num), v_check / 2, 2 * knots]))
    r = r[(r > 0) & (r <= QUARTER)]
    a = alpha(r)
    ok = np.isfinite(a) & (a > 0)
    if not ok.any():
        kstar = RateFn(MaxAffine([0.0], [0.0]), a_max=QUARTER, check=False)
    else:
        kstar = RateFn(MaxAffine(1 / a[ok], -r[ok] / a[ok], floor=0.0), a_max=QUARTER, check=False)
    closed = kstar_closed_bound(phi, v_check)
    cons = kstar(v_check)
    dominates = bool(np.all(cons >= closed * (1 - 1e-12) - 1e-300))
    return kstar, {"v": v_check, "constructive": cons, "closed": closed, "dominates": dominates}


def kstar_to_wcp(kstar: RateFn) -> CallableFn:
    """Conductance lower bound ``Phi(m) >= 2 K*(m (1 - m)) / (m (1 - m))``.

    This is the substitution ``v = m(1 - m)`` inverting
    ``m = (1 - sqrt(1 - 4v)) / 2`` for set masses ``m`` in ``(0, 1/2]``.
    """

    def phi(m):
        m = np.asarray(m, float)
        mm = np.clip(m, 0.0, HALF)
        v = mm * (1 - mm)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(v > 0, 2 * kstar(v) / np.where(v > 0, v, 1.0), 0.0)
        return out

    ks = np.asarray(kstar.knots(), float)
    ks = ks[(ks > 0) & (ks <= QUARTER)]
    knots = (1 - np.sqrt(1 - 4 * ks)) / 2
    return CallableFn(phi, INCREASING, domain=(0.0, HALF), label="phi_from_kstar", knots=knots)


# ---------------------------------------------------------------------------
# mixing integrals


def _log_integral(phi: MonotoneFn, scale, scale_inv, lo: float, hi: float) -> float:
    """``int_lo^hi dv / (v phi(scale(v))^2)`` for increasing ``scale``.

    Exact for staircases, whose composition with ``scale`` is piecewise
    constant; otherwise adaptive quadrature in ``log v`` split at the
    preimages of the profile knots.
    """
    if hi <= lo:
        return 0.0
    knots = np.asarray(phi.knots(), float)
    cuts = scale_inv(knots[knots > 0]) if knots.size else np.zeros(0)
    cuts = cuts[(cuts > lo) & (cuts < hi)]
    edges = np.unique(np.concatenate([[lo, hi], cuts]))
    if isinstance(phi, (Staircase, Constant)):
        total = 0.0
        for a, b in zip(edges[:-1], edges[1:]):
            mid = math.sqrt(a * b)
            val = float(phi(scale(mid)))
            if val == 0:
                return math.inf
            total += math.log(b / a) / val ** 2
        return total

    def integrand(t):
        val = float(phi(scale(math.exp(t))))
        return math.inf if val == 0 else 1.0 / val ** 2

    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        part, _ = integrate.quad(integrand, math.log(a), math.log(b), limit=200,
                                 epsabs=0.0, epsrel=1e-10)
        total += part
    return total


def mixing_bound(phi: MonotoneFn, eps: float) -> float:
    """``4 int_{eps/4}^{1/16} dv / (v Phi(v)^2)`` as a real number."""
    if eps >= QUARTER:
        return 0.0
    if eps <= 0:
        raise ValueError("eps must be positive")
    return 4 * _log_integral(phi, lambda v: v, lambda u: u, eps / 4, 1 / 16)


def mixing_integral(phi: MonotoneFn, eps: float) -> int:
    """Steps after which ``||P^n f||^2 <= eps ||f||_osc^2``.

    The bound holds for reversible positive kernels; checking that is the
    caller's job.
    """
    val = mixing_bound(phi, eps)
    if not math.isfinite(val):
        return math.inf
    return int(math.ceil(val - 1e-12 * max(1.0, val)))


def _old_argument(v):
    v = np.asarray(v, float)
    return (1 - np.sqrt(1 - v / 8)) / 2


def _old_argument_inv(m):
    m = np.asarray(m, float)
    return 8 * m * (1 - m)


def sharpness_ratio(phi: MonotoneFn, eps: float, convex: bool | None = None) -> dict:
    """Compare the conductance-based mixing bound with the older route.

    ``new = 4 int_eps^{1/4} dv / (v Phi(v/4)^2)`` and
    ``old = 32 int_eps^{1/4} dv / (v Phi((1 - sqrt(1 - v/8)) / 2)^2)``.
    Monotonicity of ``Phi`` gives ``old >= 8 new``; when ``Phi`` is convex
    with ``Phi(0) = 0`` the ratio is at least 32.

    ``convex`` defaults to ``True`` for power laws with exponent >= 1.
    """
    if not 0 < eps < QUARTER:
        raise ValueError("eps must lie in (0, 1/4)")
    new = 4 * _log_integral(phi, lambda v: np.asarray(v) / 4, lambda m: 4 * np.asarray(m), eps, QUARTER)
    old = 32 * _log_integral(phi, _old_argument, _old_argument_inv, eps, QUARTER)
    ratio = old / new if new > 0 else math.inf
    if convex is None:
        convex = isinstance(phi, PowerLaw) and phi.exponent >= 1
    out = {"eps": eps, "old": old, "new": new, "ratio": ratio,
           "at_least_8": bool(ratio >= 8 * (1 - 1e-10)), "convex": bool(convex)}
    if convex:
        out["at_least_32"] = bool(ratio >= 32 * (1 - 1e-10))
    return out
