"""Represented monotone functions on the positive half-line.

Every rate that shows up in the calculus (the WPI functions, decay rates,
conductance profiles and isoperimetric minorants) is an instance of
:class:`MonotoneFn`.  Closed forms are kept symbolic where possible so that
conversions can stay exact; everything else is a sampled grid with explicit
tail behaviour, a staircase, or a max of affine pieces.

Convex rate functions ``K*`` live in :class:`RateFn`, which adds the
constant ``a_max`` and the convex conjugate.
"""
from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np
from scipy import optimize

__all__ = [
    "MonotoneFn",
    "PowerLaw",
    "Exponential",
    "Constant",
    "LogLogGrid",
    "Staircase",
    "MaxAffine",
    "Capped",
    "CallableFn",
    "RateFn",
    "generalized_inverse",
    "function_from_dict",
    "rate_from_dict",
    "log_grid",
]

INCREASING = "increasing"
DECREASING = "decreasing"
_TAILS = ("flat", "power", "zero", "inf")


def log_grid(lo: float, hi: float, num: int = 512) -> np.ndarray:
    """Geometric grid from ``lo`` to ``hi`` inclusive."""
    return np.geomspace(lo, hi, num)


def _encode(value: float):
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    if math.isnan(value):
        return "nan"
    return float(value)


def _decode(value) -> float:
    if isinstance(value, str):
        return float(value)
    return float(value)


def _as_array(x) -> np.ndarray:
    return np.asarray(x, dtype=float)


class MonotoneFn:
    """Base class for a monotone function on a subset of ``(0, inf)``.

    Subclasses implement ``_eval`` on float arrays.  Calling the object on a
    scalar returns a float, on an array returns an array.
    """

    direction: str = DECREASING
    domain: tuple[float, float] = (0.0, math.inf)

    def __call__(self, x):
        arr = _as_array(x)
        out = self._eval(np.atleast_1d(arr))
        if arr.ndim == 0:
            return float(out[0])
        return out.reshape(arr.shape)

    def _eval(self, x: np.ndarray) -> np.ndarray:  # pragma: no cover - abstract
        raise NotImplementedError

    # structural queries -------------------------------------------------
    def knots(self) -> np.ndarray:
        """Abscissae where the representation changes character."""
        return np.array([], dtype=float)

    def tail_limit(self) -> float:
        """Limit of the function as its argument tends to infinity."""
        return float(self(1e300))

    def head_limit(self) -> float:
        """Limit of the function as its argument tends to zero."""
        return float(self(1e-300))

    def inverse(self) -> "MonotoneFn":
        """Generalised inverse ``x -> inf{y > 0 : f(y) <= x}``."""
        if self.direction != DECREASING:
            raise ValueError("generalised inverse is defined for decreasing functions")
        return _NumericInverse(self)

    def to_dict(self) -> dict:
        """Serialise by sampling on a log grid; subclasses override."""
        lo, hi = self.domain
        lo = max(lo, 1e-12)
        hi = min(hi, 1e12)
        xs = log_grid(lo, hi, 256)
        ys = self(xs)
        return LogLogGrid(xs, ys, direction=self.direction).to_dict()

    def sample(self, x) -> np.ndarray:
        return self(_as_array(x))

    def check_monotone(self, x: Sequence[float] | None = None, rtol: float = 1e-12) -> bool:
        """Check monotonicity on the knots plus a log grid."""
        pts = np.unique(np.concatenate([self.knots(), log_grid(1e-8, 1e8, 400)]
                                       if x is None else [np.asarray(x, float)]))
        pts = pts[(pts > self.domain[0]) & (pts <= min(self.domain[1], 1e300))]
        vals = self(pts)
        diffs = np.diff(vals)
        finite = np.isfinite(diffs)
        scale = rtol * np.maximum(1.0, np.abs(vals[:-1]))
        if self.direction == DECREASING:
            bad = finite & (diffs > scale)
        else:
            bad = finite & (diffs < -scale)
        return not bool(np.any(bad))

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.to_dict()!r})"


class PowerLaw(MonotoneFn):
    """``coef * x**exponent``; decreasing for negative exponents."""

    def __init__(self, coef: float, exponent: float):
        if coef < 0:
            raise ValueError("power-law coefficient must be nonnegative")
        self.coef = float(coef)
        self.exponent = float(exponent)
        self.direction = DECREASING if exponent <= 0 else INCREASING

    def _eval(self, x):
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            out = self.coef * np.power(x, self.exponent)
        if self.exponent > 0:
            out = np.where(x <= 0, 0.0, out)
        return out

    def tail_limit(self):
        if self.exponent < 0:
            return 0.0
        if self.exponent == 0:
            return self.coef
        return math.inf if self.coef > 0 else 0.0

    def inverse(self):
        if self.exponent >= 0:
            if self.exponent == 0:
                # inf{y : c <= x} is 0 for x >= c and +inf below
                return Staircase([self.coef], [math.inf, 0.0], side="right",
                                 direction=DECREASING)
            raise ValueError("generalised inverse is defined for decreasing functions")
        q = -self.exponent
        return PowerLaw(self.coef ** (1.0 / q), -1.0 / q)

    def to_dict(self):
        return {"form": "power", "coef": self.coef, "exponent": self.exponent}


class Exponential(MonotoneFn):
    """``coef * exp(-rate * x)`` with ``rate > 0``."""

    direction = DECREASING

    def __init__(self, coef: float, rate: float):
        if rate <= 0 or coef < 0:
            raise ValueError("exponential needs coef >= 0 and rate > 0")
        self.coef = float(coef)
        self.rate = float(rate)

    def _eval(self, x):
        return self.coef * np.exp(-self.rate * x)

    def tail_limit(self):
        return 0.0

    def inverse(self):
        coef, rate = self.coef, self.rate

        def inv(y):
            with np.errstate(divide="ignore"):
                return np.maximum(0.0, np.log(coef / y) / rate)

        return CallableFn(inv, DECREASING, label=f"log({coef}/x)/{rate}")

    def to_dict(self):
        return {"form": "exponential", "coef": self.coef, "rate": self.rate}


class Constant(MonotoneFn):
    """Constant function; treated as (weakly) decreasing unless told otherwise."""

    def __init__(self, value: float, direction: str = DECREASING):
        self.value = float(value)
        self.direction = direction

    def _eval(self, x):
        return np.full(x.shape, self.value)

    def tail_limit(self):
        return self.value

    def inverse(self):
        return PowerLaw(self.value, 0.0).inverse()

    def to_dict(self):
        return {"form": "constant", "value": _encode(self.value), "direction": self.direction}


class LogLogGrid(MonotoneFn):
    """Piecewise-linear interpolation in log-log coordinates.

    Parameters
    ----------
    x, y : array_like
        Knots; ``x`` strictly increasing and positive.  Values may be zero
        or infinite, in which case the adjacent segments fall back to linear
        interpolation in the original coordinates.
    direction : {"increasing", "decreasing"}
    left_tail, right_tail : {"flat", "power", "zero", "inf"}
        Extrapolation rules below the first and beyond the last knot.
        ``"power"`` continues the slope of the end segment in log-log space.
    """

    def __init__(self, x, y, direction: str = DECREASING, left_tail: str = "power",
                 right_tail: str = "power"):
        x = _as_array(x).ravel()
        y = _as_array(y).ravel()
        if x.shape != y.shape or x.size < 2:
            raise ValueError("grid needs at least two matching knots")
        if np.any(np.diff(x) <= 0) or x[0] <= 0:
            raise ValueError("grid abscissae must be positive and strictly increasing")
        if left_tail not in _TAILS or right_tail not in _TAILS:
            raise ValueError(f"tail tags must be among {_TAILS}")
        if np.any(y < 0):
            raise ValueError("grid values must be nonnegative")
        d = np.diff(y)
        d = d[np.isfinite(d)]
        tol = 1e-12 * max(1.0, float(np.max(np.abs(y[np.isfinite(y)]), initial=0.0)))
        if direction == DECREASING and np.any(d > tol):
            raise ValueError("grid values are not monotone decreasing")
        if direction == INCREASING and np.any(d < -tol):
            raise ValueError("grid values are not monotone increasing")
        self.x, self.y = x, y
        self.direction = direction
        self.left_tail, self.right_tail = left_tail, right_tail

    def knots(self):
        return self.x.copy()

    def _end_slope(self, i0, i1):
        x0, x1, y0, y1 = self.x[i0], self.x[i1], self.y[i0], self.y[i1]
        if y0 > 0 and y1 > 0 and np.isfinite(y0) and np.isfinite(y1):
            return math.log(y1 / y0) / math.log(x1 / x0)
        return 0.0

    def _eval(self, x):
        out = np.empty_like(x)
        xs, ys = self.x, self.y
        inside = (x >= xs[0]) & (x <= xs[-1])
        if np.any(inside):
            xi = x[inside]
            j = np.clip(np.searchsorted(xs, xi, side="right") - 1, 0, xs.size - 2)
            x0, x1, y0, y1 = xs[j], xs[j + 1], ys[j], ys[j + 1]
            t = np.log(xi / x0) / np.log(x1 / x0)
            pos = (y0 > 0) & (y1 > 0) & np.isfinite(y0) & np.isfinite(y1)
            with np.errstate(divide="ignore", invalid="ignore"):
                ll = np.exp(np.log(np.where(pos, y0, 1.0)) * (1 - t)
                            + np.log(np.where(pos, y1, 1.0)) * t)
                lin = y0 + (y1 - y0) * (xi - x0) / (x1 - x0)
            lin = np.where(np.isfinite(lin), lin, np.where(t < 1, y0, y1))
            out[inside] = np.where(pos, ll, lin)
        for mask, tail, i0, i1 in ((x < xs[0], self.left_tail, 0, 1),
                                   (x > xs[-1], self.right_tail, -2, -1)):
            if not np.any(mask):
                continue
            anchor_x, anchor_y = (xs[0], ys[0]) if i0 == 0 else (xs[-1], ys[-1])
            if tail == "flat":
                out[mask] = anchor_y
            elif tail == "zero":
                out[mask] = 0.0
            elif tail == "inf":
                out[mask] = math.inf
            else:
                slope = self._end_slope(i0, i1)
                out[mask] = anchor_y * np.power(x[mask] / anchor_x, slope)
        return out

    def tail_limit(self):
        if self.right_tail == "zero":
            return 0.0
        if self.right_tail == "inf":
            return math.inf
        if self.right_tail == "flat":
            return float(self.y[-1])
        slope = self._end_slope(-2, -1)
        if slope < 0:
            return 0.0
        if slope == 0:
            return float(self.y[-1])
        return math.inf

    def inverse(self):
        if self.direction != DECREASING:
            raise ValueError("generalised inverse is defined for decreasing functions")
        xs, ys = self.x, self.y
        # collapse flat runs onto their left endpoint (the infimum of the preimage)
        keep = np.concatenate([[True], ys[1:] < ys[:-1]])
        xs, ys = xs[keep], ys[keep]
        finite = np.isfinite(ys) & (ys > 0)
        xs, ys = xs[finite], ys[finite]
        if xs.size < 2:
            return _NumericInverse(self)
        inv_left = {"power": "power", "zero": "flat", "flat": "inf", "inf": "inf"}[self.right_tail]
        inv_right = {"power": "power", "flat": "zero", "inf": "zero", "zero": "zero"}[self.left_tail]
        if inv_left == "power" and self._end_slope(-2, -1) >= 0:
            inv_left = "inf"
        if inv_right == "power" and self._end_slope(0, 1) >= 0:
            inv_right = "zero"
        return LogLogGrid(ys[::-1], xs[::-1], direction=DECREASING,
                          left_tail=inv_left, right_tail=inv_right)

    def to_dict(self):
        return {
            "grid": [[_encode(a), _encode(b)] for a, b in zip(self.x, self.y)],
            "direction": self.direction,
            "left_tail": self.left_tail,
            "right_tail": self.right_tail,
        }


class Staircase(MonotoneFn):
    """Piecewise-constant monotone function.

    With breaks ``b_1 < ... < b_m`` and values ``v_0, ..., v_m`` the function
    equals ``v_i`` between ``b_i`` and ``b_{i+1}`` (``b_0 = 0``,
    ``b_{m+1} = inf``).  ``side="right"`` makes it right-continuous
    (``[b_i, b_{i+1})``); ``side="left"`` makes it left-continuous
    (``(b_i, b_{i+1}]``).

    ``annotations`` optionally carries per-piece metadata (for instance the
    minimising set of a conductance profile).
    """

    def __init__(self, breaks, values, side: str = "right", direction: str | None = None,
                 annotations: list | None = None):
        b = _as_array(breaks).ravel()
        v = _as_array(values).ravel()
        if v.size != b.size + 1:
            raise ValueError("staircase needs len(values) == len(breaks) + 1")
        if b.size and (np.any(np.diff(b) <= 0) or b[0] < 0):
            raise ValueError("staircase breaks must be nonnegative and strictly increasing")
        if side not in ("left", "right"):
            raise ValueError("side must be 'left' or 'right'")
        dv = np.diff(v)
        with np.errstate(invalid="ignore"):
            dec = np.all((dv <= 0) | np.isnan(dv))
            inc = np.all((dv >= 0) | np.isnan(dv))
        if direction is None:
            direction = DECREASING if dec else INCREASING
        if (direction == DECREASING and not dec) or (direction == INCREASING and not inc):
            raise ValueError("staircase values are not monotone in the declared direction")
        self.breaks, self.values = b, v
        self.side = side
        self.direction = direction
        self.annotations = annotations

    def knots(self):
        return self.breaks.copy()

    def _eval(self, x):
        idx = np.searchsorted(self.breaks, x, side="right" if self.side == "right" else "left")
        return self.values[idx]

    def tail_limit(self):
        return float(self.values[-1])

    def head_limit(self):
        return float(self.values[0])

    def inverse(self):
        if self.direction != DECREASING:
            raise ValueError("generalised inverse is defined for decreasing functions")
        # merge equal consecutive values so each level keeps its left endpoint
        starts = np.concatenate([[0.0], self.breaks])
        levels, left_ends = [self.values[0]], [0.0]
        for s, val in zip(starts[1:], self.values[1:]):
            if val < levels[-1]:
                levels.append(val)
                left_ends.append(s)
        asc = levels[::-1]
        ends = left_ends[::-1]
        # g(x) is the left end of the first level <= x, and +inf below every level
        if asc[0] > 0:
            new_breaks, new_vals = [asc[0]], [math.inf, ends[0]]
        else:
            new_breaks, new_vals = [], [ends[0]]
        for lev, e in zip(asc[1:], ends[1:]):
            if math.isfinite(lev):
                new_breaks.append(lev)
                new_vals.append(e)
        return Staircase(new_breaks, new_vals, side="right", direction=DECREASING)

    def to_dict(self):
        d = {
            "form": "staircase",
            "breaks": [_encode(a) for a in self.breaks],
            "values": [_encode(a) for a in self.values],
            "side": self.side,
            "direction": self.direction,
        }
        if self.annotations is not None:
            d["annotations"] = self.annotations
        return d


class MaxAffine(MonotoneFn):
    """``max(floor, max_j slopes[j] * x + intercepts[j])``.

    Used for piecewise-linear convex rate functions and for exact grid
    suprema that are affine in the outer variable.  Direction follows from
    the sign of the slopes.
    """

    def __init__(self, slopes, intercepts, floor: float = 0.0):
        s = _as_array(slopes).ravel()
        c = _as_array(intercepts).ravel()
        if s.shape != c.shape or s.size == 0:
            raise ValueError("slopes and intercepts must be nonempty and match")
        if np.all(s >= 0):
            self.direction = INCREASING
        elif np.all(s <= 0):
            self.direction = DECREASING
        else:
            raise ValueError("mixed-sign slopes do not give a monotone function")
        order = np.argsort(s, kind="stable")
        self.slopes, self.intercepts = s[order], c[order]
        self.floor = float(floor)

    def _eval(self, x):
        lines = np.outer(x, self.slopes) + self.intercepts
        return np.maximum(self.floor, lines.max(axis=1))

    def knots(self):
        # pairwise intersections of consecutive active lines
        s, c = self.slopes, self.intercepts
        with np.errstate(divide="ignore", invalid="ignore"):
            xs = -(c[1:] - c[:-1]) / (s[1:] - s[:-1])
            roots = -c / s
        pts = np.concatenate([xs, roots])
        pts = pts[np.isfinite(pts) & (pts > 0)]
        return np.unique(pts)

    def tail_limit(self):
        if self.direction == DECREASING:
            if np.all(self.slopes < 0):
                return self.floor
            flat = self.slopes == 0
            return max(self.floor, float(np.max(self.intercepts[flat])))
        return math.inf if np.any(self.slopes > 0) else max(self.floor, float(np.max(self.intercepts)))

    def to_dict(self):
        return {
            "form": "max_affine",
            "slopes": [float(a) for a in self.slopes],
            "intercepts": [float(a) for a in self.intercepts],
            "floor": self.floor,
        }


class Capped(MonotoneFn):
    """``min(inner(x), cap)`` on ``x < cutoff`` and ``0`` on ``x >= cutoff``.

    This realises the capping rules that keep alpha and beta inside the
    range allowed by the sieve constant.
    """

    def __init__(self, inner: MonotoneFn, cap: float = math.inf, cutoff: float = math.inf):
        if inner.direction != DECREASING:
            raise ValueError("capping applies to decreasing functions")
        self.inner = inner
        self.cap = float(cap)
        self.cutoff = float(cutoff)
        self.direction = DECREASING

    def _eval(self, x):
        out = np.minimum(self.inner(x), self.cap)
        return np.where(x >= self.cutoff, 0.0, out)

    def knots(self):
        k = list(self.inner.knots())
        if math.isfinite(self.cutoff):
            k.append(self.cutoff)
        return np.unique(np.asarray(k, float))

    def tail_limit(self):
        if math.isfinite(self.cutoff):
            return 0.0
        return min(self.inner.tail_limit(), self.cap)

    def inverse(self):
        # inf{y : min(f(y), c) <= x, y < t} is min(f^-(x), t) for x < c and 0 otherwise
        return Capped(self.inner.inverse(), cap=self.cutoff, cutoff=self.cap)

    def to_dict(self):
        return {"form": "capped", "cap": _encode(self.cap), "cutoff": _encode(self.cutoff),
                "inner": self.inner.to_dict()}


class CallableFn(MonotoneFn):
    """Monotone function given by a vectorised callable.

    Serialises by sampling onto a :class:`LogLogGrid`.
    """

    def __init__(self, func: Callable[[np.ndarray], np.ndarray], direction: str,
                 domain: tuple[float, float] = (0.0, math.inf), label: str = "",
                 knots=None, limit: float | None = None):
        self.func = func
        self.direction = direction
        self.domain = domain
        self.label = label
        self._knots = np.asarray([] if knots is None else knots, float)
        self._limit = limit

    def _eval(self, x):
        return np.asarray(self.func(x), dtype=float).reshape(x.shape)

    def knots(self):
        return self._knots.copy()

    def tail_limit(self):
        if self._limit is not None:
            return self._limit
        return super().tail_limit()


class _NumericInverse(MonotoneFn):
    """Generalised inverse by bisection in log space."""

    direction = DECREASING

    def __init__(self, fn: MonotoneFn, lo: float = 1e-300, hi: float = 1e300):
        self.fn = fn
        self.lo, self.hi = lo, hi

    def _eval(self, x):
        out = np.empty_like(x)
        f = self.fn
        for i, level in enumerate(x):
            if f(self.lo) <= level:
                out[i] = 0.0
                continue
            if f(self.hi) > level:
                out[i] = math.inf
                continue
            a, b = math.log(self.lo), math.log(self.hi)
            for _ in range(200):
                m = 0.5 * (a + b)
                if f(math.exp(m)) <= level:
                    b = m
                else:
                    a = m
                if b - a < 1e-13:
                    break
            out[i] = math.exp(b)
        return out


def generalized_inverse(f: MonotoneFn) -> MonotoneFn:
    """Return ``f^-(x) = inf{y > 0 : f(y) <= x}`` for decreasing ``f``.

    Closed forms, grids, staircases and capped functions are inverted
    exactly; anything else falls back to bisection.  On flat stretches the
    left endpoint of the preimage is returned.
    """
    if f.direction != DECREASING:
        raise ValueError("generalised inverse is defined for decreasing functions")
    if isinstance(f, LogLogGrid) and not f.check_monotone(f.x):
        raise ValueError("grid is not monotone")
    return f.inverse()


# ---------------------------------------------------------------------------
# convex rate functions


class RateFn:
    """Convex nondecreasing rate function ``K*`` on ``[0, a_max]`` with ``K*(0) = 0``.

    Parameters
    ----------
    fn : MonotoneFn
        Increasing representation.  Power laws with exponent >= 1 and
        :class:`MaxAffine` functions with zero floor are convex by
        construction; grids are checked on knot triples.
    a_max : float
        The sieve constant; ``K*`` is only meaningful on ``[0, a_max]``.
    """

    def __init__(self, fn: MonotoneFn, a_max: float = 0.25, check: bool = True):
        if fn.direction != INCREASING and not isinstance(fn, Constant):
            raise ValueError("rate functions must be increasing")
        if a_max <= 0:
            raise ValueError("a_max must be positive")
        self.fn = fn
        self.a_max = float(a_max)
        if check and not self.check_convex():
            raise ValueError("rate function fails the midpoint convexity test")

    def __call__(self, v):
        arr = _as_array(v)
        out = np.where(arr <= 0, 0.0, self.fn(np.maximum(arr, 1e-300)))
        if arr.ndim == 0:
            return float(out)
        return out

    def knots(self) -> np.ndarray:
        k = self.fn.knots()
        return k[(k > 0) & (k < self.a_max)]

    def check_convex(self, num: int = 257, rtol: float = 1e-9) -> bool:
        """Midpoint convexity test on knot triples and a uniform grid."""
        if abs(float(self(0.0))) > 0:
            return False
        v = np.unique(np.concatenate([np.linspace(0.0, self.a_max, num), self.knots()]))
        fv = self(v)
        if np.any(np.diff(fv) < -rtol * np.maximum(1.0, fv[1:])):
            return False
        left, right = v[:-2], v[2:]
        mid = 0.5 * (left + right)
        lhs = self(mid)
        rhs = 0.5 * (self(left) + self(right))
        return bool(np.all(lhs <= rhs + rtol * np.maximum(1.0, np.abs(rhs))))

    def breakpoints(self) -> np.ndarray:
        """Points in ``[0, a_max]`` where the sup of ``u v - K*(v)`` can sit."""
        v = [0.0, self.a_max]
        v.extend(self.knots())
        if isinstance(self.fn, LogLogGrid) or isinstance(self.fn, CallableFn):
            v.extend(log_grid(self.a_max * 1e-12, self.a_max, 2048))
        return np.unique(np.asarray(v, float))

    def conjugate(self, u):
        """Convex conjugate ``K(u) = sup_{0 <= v <= a_max} (u v - K*(v))``.

        Exact for power laws and for max-affine representations, otherwise a
        supremum over the knots plus a dense log grid.
        """
        u = _as_array(u)
        flat = np.atleast_1d(u)
        fn, a = self.fn, self.a_max
        if isinstance(fn, PowerLaw) and fn.exponent > 1:
            q, c = fn.exponent, fn.coef
            with np.errstate(divide="ignore", invalid="ignore"):
                vstar = np.power(np.maximum(flat, 0.0) / (c * q), 1.0 / (q - 1.0))
            vstar = np.clip(np.nan_to_num(vstar, posinf=a), 0.0, a)
            out = flat * vstar - c * np.power(vstar, q)
        else:
            v = self.breakpoints()
            out = (np.outer(flat, v) - self(v)).max(axis=1)
        out = np.maximum(out, 0.0)
        return float(out[0]) if u.ndim == 0 else out.reshape(u.shape)

    def to_dict(self) -> dict:
        return {"a_max": self.a_max, "fn": self.fn.to_dict()}

    def __repr__(self) -> str:
        return f"RateFn(a_max={self.a_max}, fn={self.fn!r})"


def function_from_dict(d: dict) -> MonotoneFn:
    """Inverse of ``MonotoneFn.to_dict``."""
    if "grid" in d:
        pts = np.array([[_decode(a), _decode(b)] for a, b in d["grid"]], float)
        return LogLogGrid(pts[:, 0], pts[:, 1], direction=d.get("direction", DECREASING),
                          left_tail=d.get("left_tail", "power"),
                          right_tail=d.get("right_tail", "power"))
    form = d.get("form")
    if form == "power":
        return PowerLaw(d["coef"], d["exponent"])
    if form == "exponential":
        return Exponential(d["coef"], d["rate"])
    if form == "constant":
        return Constant(_decode(d["value"]), d.get("direction", DECREASING))
    if form == "staircase":
        return Staircase([_decode(a) for a in d["breaks"]], [_decode(a) for a in d["values"]],
                         side=d.get("side", "right"), direction=d.get("direction"),
                         annotations=d.get("annotations"))
    if form == "max_affine":
        return MaxAffine(d["slopes"], d["intercepts"], d.get("floor", 0.0))
    if form == "capped":
        return Capped(function_from_dict(d["inner"]), _decode(d["cap"]), _decode(d["cutoff"]))
    raise ValueError(f"unknown function form {form!r}")


def rate_from_dict(d: dict) -> RateFn:
    return RateFn(function_from_dict(d["fn"]), a_max=d.get("a_max", 0.25))


def bisect_decreasing(f: Callable[[float], float], level: float, lo: float, hi: float) -> float:
    """Smallest ``y`` in ``[lo, hi]`` with ``f(y) <= level`` for decreasing ``f``."""
    if f(lo) <= level:
        return lo
    if f(hi) > level:
        return math.inf
    return optimize.brentq(lambda y: f(y) - level, lo, hi, xtol=1e-14 * max(1.0, lo), rtol=1e-13)
