"""Calculus on weak Poincaré inequality parametrisations.

A WPI for a Dirichlet form ``E`` and sieve ``Psi`` can be written three ways:

* alpha form: ``||f||^2 <= alpha(r) E(f) + r Psi(f)``
* beta form: ``||f||^2 <= s E(f) + beta(s) Psi(f)``
* rate form: ``E(f) / Psi(f) >= K*(||f||^2 / Psi(f))``

This module converts between them, integrates the rate form into a decay
profile ``gamma`` with mixing times, and transfers decay to Orlicz norms.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .functions import (
    DECREASING,
    INCREASING,
    CallableFn,
    Capped,
    Constant,
    LogLogGrid,
    MaxAffine,
    MonotoneFn,
    PowerLaw,
    RateFn,
    Staircase,
    function_from_dict,
    generalized_inverse,
    log_grid,
)
from ._io import atomic_write_text

__all__ = [
    "OSC2_A_MAX",
    "WpiCertificate",
    "convert_certificate",
    "DecayProfile",
    "decay_profile",
    "mixing_time",
    "orlicz_transfer",
    "clt_check",
    "order_certificates",
    "polynomial_kstar",
]

#: sieve constant for the squared oscillation
OSC2_A_MAX = 0.25
PARAMS = ("alpha", "beta", "kstar")


@dataclass(frozen=True)
class WpiCertificate:
    """A WPI in one of its three parametrisations.

    Parameters
    ----------
    param : {"alpha", "beta", "kstar"}
    fn : MonotoneFn or RateFn
        Decreasing function for ``alpha``/``beta``, a :class:`RateFn` for
        ``kstar``.
    sieve : str
        ``"osc2"``, ``"sup2"`` or ``"custom"``.
    a_max : float, optional
        Sieve constant.  Defaults to 1/4 for ``osc2`` and 1 for ``sup2``;
        required for custom sieves.
    subject : str
        Label of the Dirichlet form the inequality bounds (``"P"``,
        ``"P*P"``, ``"S"``, ...).
    """

    param: str
    fn: object
    sieve: str = "osc2"
    a_max: float | None = None
    subject: str = "P"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.param not in PARAMS:
            raise ValueError(f"param must be one of {PARAMS}")
        a = self.a_max
        if a is None:
            if self.sieve == "osc2":
                a = OSC2_A_MAX
            elif self.sieve == "sup2":
                a = 1.0
            else:
                raise ValueError("custom sieves must declare a_max")
            object.__setattr__(self, "a_max", a)
        if self.param == "kstar":
            if not isinstance(self.fn, RateFn):
                raise TypeError("kstar certificates carry a RateFn")
        else:
            if not isinstance(self.fn, MonotoneFn) or self.fn.direction != DECREASING:
                raise TypeError(f"{self.param} certificates carry a decreasing MonotoneFn")
            probe = np.concatenate([log_grid(1e-6 * a, a, 64)[:-1], self.fn.knots()])
            probe = probe[(probe > 0) & (probe < a)]
            vals = self.fn(probe)
            if self.param == "alpha" and np.any(vals <= 0):
                raise ValueError("alpha must be positive below a_max")
            if self.param == "beta":
                big = log_grid(1e-6, 1e6, 64)
                if np.any(self.fn(big) > a * (1 + 1e-12)):
                    raise ValueError("beta must not exceed a_max; cap it first")

    # serialisation -----------------------------------------------------
    def to_dict(self) -> dict:
        fn = self.fn.fn.to_dict() if isinstance(self.fn, RateFn) else self.fn.to_dict()
        return {"sieve": self.sieve, "a_max": self.a_max, "param": self.param,
                "fn": fn, "subject": self.subject}

    @classmethod
    def from_dict(cls, d: dict) -> "WpiCertificate":
        for key in ("param", "fn"):
            if key not in d:
                raise ValueError(f"certificate is missing {key!r}")
        sieve = d.get("sieve", "osc2")
        a = d.get("a_max")
        fn = function_from_dict(d["fn"])
        if d["param"] == "kstar":
            fn = RateFn(fn, a_max=a if a is not None else OSC2_A_MAX)
        return cls(d["param"], fn, sieve=sieve, a_max=a, subject=d.get("subject", "P"))

    def save(self, path) -> None:
        atomic_write_text(path, json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path) -> "WpiCertificate":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    @classmethod
    def beta(cls, fn: MonotoneFn, **kw) -> "WpiCertificate":
        """Build a beta certificate, applying the ``min(beta, a_max)`` cap."""
        a = kw.get("a_max") or (OSC2_A_MAX if kw.get("sieve", "osc2") == "osc2" else 1.0)
        return cls("beta", Capped(fn, cap=a), **kw)

    @classmethod
    def alpha(cls, fn: MonotoneFn, **kw) -> "WpiCertificate":
        """Build an alpha certificate, zeroing it from ``a_max`` on."""
        a = kw.get("a_max") or (OSC2_A_MAX if kw.get("sieve", "osc2") == "osc2" else 1.0)
        return cls("alpha", Capped(fn, cutoff=a), **kw)


def polynomial_kstar(c0: float, c1: float) -> PowerLaw:
    """Convex conjugate route for ``beta(s) = c0 s^{-c1}``.

    Returns ``K*(v) = c1/(1+c1) (c0 (1+c1))^{-1/c1} v^{1+1/c1}``.
    """
    coef = c1 / (1 + c1) * (c0 * (1 + c1)) ** (-1.0 / c1)
    return PowerLaw(coef, 1 + 1.0 / c1)


def _unwrap(fn: MonotoneFn) -> MonotoneFn:
    return fn.inner if isinstance(fn, Capped) else fn


def _beta_to_kstar(beta: MonotoneFn, a: float, num: int = 512) -> RateFn:
    if beta.tail_limit() > 0:
        raise ValueError("beta does not tend to 0; the rate-form certificate would be vacuous")
    inner = _unwrap(beta)
    if isinstance(inner, PowerLaw) and inner.exponent < 0:
        return RateFn(polynomial_kstar(inner.coef, -inner.exponent), a_max=a)
    # K*(v) = sup_s (v - beta(s)) / s, affine in v for each fixed s
    s = np.unique(np.concatenate([log_grid(1e-12, 1e12, num * 4), beta.knots()]))
    s = s[s > 0]
    b = beta(s)
    ok = np.isfinite(b)
    s, b = s[ok], b[ok]
    return RateFn(MaxAffine(1.0 / s, -b / s, floor=0.0), a_max=a)


def _kstar_to_beta(kstar: RateFn) -> MonotoneFn:
    a = kstar.a_max
    fn = kstar.fn
    if isinstance(fn, PowerLaw) and fn.exponent > 1:
        q, c = fn.exponent, fn.coef
        # unconstrained sup of v - s c v^q; capping at a gives a valid (weaker) bound
        coef = (1 - 1 / q) * (c * q) ** (-1 / (q - 1))
        return Capped(PowerLaw(coef, -1 / (q - 1)), cap=a)
    # beta(s) = sup_{0<=v<=a} (v - s K*(v)) is a max of affine functions of s
    v = kstar.breakpoints()
    kv = kstar(v)
    return MaxAffine(-kv, v, floor=0.0)


def convert_certificate(cert: WpiCertificate, target_param: str) -> WpiCertificate:
    """Convert a certificate to another parametrisation.

    ``alpha <-> beta`` goes through the generalised inverse with the
    capping rules ``alpha 1[0, a)`` and ``min(beta, a)``.  ``beta -> kstar``
    takes the convex conjugate of ``K(u) = u beta(1/u)``; ``kstar -> beta``
    uses ``beta(s) = s K(1/s)`` with ``K`` the conjugate over ``[0, a]``.
    """
    if target_param not in PARAMS:
        raise ValueError(f"target must be one of {PARAMS}")
    if cert.param == target_param:
        return cert
    a = cert.a_max
    kw = dict(sieve=cert.sieve, a_max=a, subject=cert.subject)
    if cert.param == "alpha":
        capped = cert.fn if isinstance(cert.fn, Capped) else Capped(cert.fn, cutoff=a)
        beta = Capped(generalized_inverse(capped), cap=a)
        out = WpiCertificate("beta", _simplify(beta), **kw)
        return out if target_param == "beta" else convert_certificate(out, target_param)
    if cert.param == "beta":
        if target_param == "alpha":
            capped = cert.fn if isinstance(cert.fn, Capped) else Capped(cert.fn, cap=a)
            alpha = Capped(generalized_inverse(capped), cutoff=a)
            return WpiCertificate("alpha", _simplify(alpha), **kw)
        return WpiCertificate("kstar", _beta_to_kstar(cert.fn, a), **kw)
    beta = _kstar_to_beta(cert.fn)
    out = WpiCertificate("beta", beta, **kw)
    return out if target_param == "beta" else convert_certificate(out, target_param)


def _simplify(fn: Capped) -> Capped:
    # collapse nested caps produced by repeated inversion
    inner = fn.inner
    while isinstance(inner, Capped):
        fn = Capped(inner.inner, cap=min(fn.cap, inner.cap), cutoff=min(fn.cutoff, inner.cutoff))
        inner = fn.inner
    return fn


# ---------------------------------------------------------------------------
# decay profile

_GL10 = np.polynomial.legendre.leggauss(10)
_GL20 = np.polynomial.legendre.leggauss(20)


def _gl(func, lo, hi, rule):
    """Vectorised Gauss-Legendre over many intervals ``[lo_i, hi_i]``."""
    nodes, weights = rule
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    pts = mid[:, None] + half[:, None] * nodes[None, :]
    return half * (func(pts.ravel()).reshape(pts.shape) @ weights)


class DecayProfile:
    """``F(x) = int_x^a dv / K*(v)`` and its inverse ``gamma``.

    ``F`` is integrated in log coordinates ``t = log v`` by adaptive
    composite Gauss-Legendre (10 vs 20 nodes per panel, panels split until
    the two agree to ``rtol``).  The table stops once ``F`` exceeds
    ``f_cap`` or ``v`` underflows; below that point ``gamma`` returns the
    smallest tabulated ``v``, which is still an upper bound.
    """

    def __init__(self, kstar: RateFn, rtol: float = 1e-8, step: float = 0.5,
                 f_cap: float = 1e15):
        self.kstar = kstar
        self.a = a = kstar.a_max
        self.rtol = rtol
        probe = log_grid(a * 1e-9, a, 200)[:-1]
        if np.any(kstar(probe) <= 0):
            raise ValueError("K* vanishes inside (0, a_max); no convergence statement is possible")
        self._integrand = lambda t: np.exp(t) / np.maximum(kstar(np.exp(t)), 1e-300)
        edges = [math.log(a)]
        totals = [0.0]
        t_hi = math.log(a)
        t_floor = math.log(a) - 690.0
        chunk = 64
        while totals[-1] < f_cap and t_hi > t_floor:
            his = t_hi - step * np.arange(chunk)
            los = his - step
            vals = self._panels(los, his)
            cum = totals[-1] + np.cumsum(vals)
            edges.extend(los.tolist())
            totals.extend(cum.tolist())
            t_hi = los[-1]
        self.t_edges = np.array(edges)          # decreasing in t
        self.F_edges = np.array(totals)         # increasing
        self.v_min = math.exp(self.t_edges[-1])

    def _panels(self, lo, hi, depth=0):
        coarse = _gl(self._integrand, lo, hi, _GL10)
        fine = _gl(self._integrand, lo, hi, _GL20)
        bad = np.abs(fine - coarse) > self.rtol * np.maximum(np.abs(fine), 1e-300)
        if depth < 30 and np.any(bad):
            mid = 0.5 * (lo[bad] + hi[bad])
            left = self._panels(lo[bad], mid, depth + 1)
            right = self._panels(mid, hi[bad], depth + 1)
            fine = fine.copy()
            fine[bad] = left + right
        return fine

    def F(self, x):
        """Decay functional; ``inf`` below the tabulated range."""
        x = np.atleast_1d(np.asarray(x, float))
        out = np.zeros_like(x)
        t = np.log(np.maximum(x, 1e-320))
        inside = (x < self.a) & (t >= self.t_edges[-1])
        out[t < self.t_edges[-1]] = math.inf
        if np.any(inside):
            ti = t[inside]
            # panel j spans [t_edges[j+1], t_edges[j]]
            j = np.searchsorted(-self.t_edges, -ti, side="left") - 1
            j = np.clip(j, 0, self.t_edges.size - 2)
            top = self.t_edges[j]
            partial = self._panels(ti, top)
            out[inside] = self.F_edges[j] + partial
        return out

    def gamma(self, n):
        """``gamma(n) = F^{-1}(n)``, the squared L2 decay rate per unit sieve."""
        n = np.atleast_1d(np.asarray(n, float))
        out = np.empty_like(n)
        for i, level in enumerate(n):
            if level <= 0:
                out[i] = self.a
                continue
            if level >= self.F_edges[-1]:
                out[i] = self.v_min
                continue
            j = int(np.searchsorted(self.F_edges, level))
            t_lo, t_hi = self.t_edges[j], self.t_edges[j - 1]
            g = lambda t: float(self.F(math.exp(t))[0]) - level
            out[i] = math.exp(optimize.brentq(g, t_lo, t_hi, xtol=1e-14, rtol=1e-14))
        return out

    @property
    def F_fn(self) -> MonotoneFn:
        return CallableFn(self.F, DECREASING, domain=(0.0, self.a), label="F")

    @property
    def gamma_fn(self) -> MonotoneFn:
        return CallableFn(self.gamma, DECREASING, label="gamma", limit=0.0)

    def closed_form_F(self):
        """Analytic ``F`` when ``K*`` is a power law, else ``None``."""
        fn = self.kstar.fn
        if not isinstance(fn, PowerLaw):
            return None
        c, q, a = fn.coef, fn.exponent, self.a
        if q == 1:
            return lambda x: np.log(a / np.asarray(x, float)) / c
        return lambda x: (np.power(np.asarray(x, float), 1 - q) - a ** (1 - q)) / (c * (q - 1))


def decay_profile(cert: WpiCertificate, rtol: float = 1e-8):
    """Return ``(F, gamma, profile)`` for a certificate.

    Non-rate certificates are converted first.  ``gamma(n)`` bounds
    ``||P^n f||^2 / Psi(f)``.
    """
    if cert.param != "kstar":
        cert = convert_certificate(cert, "kstar")
    prof = DecayProfile(cert.fn, rtol=rtol)
    return prof.F_fn, prof.gamma_fn, prof


def mixing_time(cert: WpiCertificate, eps: float, profile: DecayProfile | None = None) -> int:
    """``ceil(F(eps))``: beyond it ``||P^n f||^2 <= eps Psi(f)``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    if eps >= cert.a_max:
        return 0
    if profile is None:
        _, _, profile = decay_profile(cert)
    val = float(profile.F(eps)[0])
    if not math.isfinite(val):
        raise ArithmeticError("F(eps) is infinite at this tolerance")
    return int(math.ceil(val - 1e-9 * max(1.0, val)))


# ---------------------------------------------------------------------------
# Orlicz transfer and CLT summability


def _parse_orlicz(N) -> tuple[str, float]:
    if isinstance(N, str):
        kind, _, val = N.partition(":")
        N = (kind, float(val))
    kind, val = N
    if kind == "power":
        if val <= 2:
            raise ValueError("power Orlicz functions need p > 2")
    elif kind == "exp":
        if val < 1:
            raise ValueError("exponential Orlicz functions need r >= 1")
    else:
        raise ValueError(f"unsupported Orlicz tag {kind!r}")
    return kind, float(val)


def orlicz_transfer(gamma: MonotoneFn, N) -> MonotoneFn:
    """Transfer an oscillation-sieve decay rate to an Orlicz sieve.

    Parameters
    ----------
    gamma : MonotoneFn
        Decreasing rate for the squared oscillation sieve.
    N : tuple or str
        ``("power", p)`` with ``p > 2`` for ``N(x) = x^p`` or ``("exp", r)``
        with ``r >= 1`` for ``N(x) = exp(x^r) - 1``.  Strings such as
        ``"power:4"`` are accepted.

    Returns
    -------
    MonotoneFn
        ``16 gamma(n) N^{-1}(1/gamma(n))^2``.
    """
    kind, val = _parse_orlicz(N)
    if kind == "power":
        if isinstance(gamma, PowerLaw):
            return PowerLaw(16 * gamma.coef ** (1 - 2 / val), gamma.exponent * (1 - 2 / val))
        return CallableFn(lambda n: 16 * np.power(gamma(n), 1 - 2 / val), DECREASING,
                          label=f"orlicz power {val}", limit=0.0)

    def fn(n):
        g = gamma(n)
        with np.errstate(divide="ignore"):
            return 16 * g * np.power(np.log1p(1 / g), 2 / val)

    return CallableFn(fn, DECREASING, label=f"orlicz exp {val}", limit=0.0)


def clt_check(gamma_N: MonotoneFn, horizon: int = 10**6) -> dict:
    """Summability of ``sum_k k^{-1/2} gamma_N(k)^{1/2}``.

    Power laws get the exact verdict (term exponent below -1).  Other
    inputs get partial sums and a local log-log slope over the last decade,
    reported as a heuristic verdict.
    """
    ks = np.unique(np.round(log_grid(1, horizon, 400)).astype(np.int64))
    all_k = np.arange(1, horizon + 1, dtype=float)
    terms = all_k ** -0.5 * np.sqrt(gamma_N(all_k))
    partial = np.cumsum(terms)
    report = {"horizon": int(horizon), "partial_sums": {int(k): float(partial[k - 1]) for k in ks}}
    if isinstance(gamma_N, PowerLaw):
        exponent = -0.5 + 0.5 * gamma_N.exponent
        report.update(term_exponent=exponent, converged=bool(exponent < -1), exact=True)
        return report
    k0 = max(1, horizon // 10)
    slope = math.log(terms[-1] / terms[k0 - 1]) / math.log(horizon / k0)
    tail = terms[-1] * horizon / (-1 - slope) if slope < -1 else math.inf
    report.update(term_exponent=slope, converged=bool(slope < -1), exact=False,
                  tail_estimate=tail)
    return report


# ---------------------------------------------------------------------------
# ordering


def order_certificates(c1: WpiCertificate, c2: WpiCertificate, grid=None,
                       n_grid=(1, 10, 100, 1000)) -> dict:
    """Compare two certificates pointwise in the beta parametrisation.

    Returns a dict with ``verdict`` in ``{"equal", "c2>=c1", "c1>=c2",
    "incomparable"}``.  Incomparable results carry the first crossing point.
    When one dominates, both decay profiles are computed and the induced
    ordering of ``gamma`` is checked on ``n_grid``.
    """
    if c1.sieve != c2.sieve or c1.a_max != c2.a_max:
        raise ValueError("certificates must share the sieve")
    b1 = _unwrap(convert_certificate(c1, "beta").fn)
    b2 = _unwrap(convert_certificate(c2, "beta").fn)
    s = np.unique(np.concatenate([log_grid(1e-4, 1e4, 801) if grid is None else np.asarray(grid, float),
                                  b1.knots(), b2.knots()]))
    s = s[s > 0]
    d = b2(s) - b1(s)
    tol = 1e-12 * np.maximum(1.0, np.abs(b1(s)))
    ge = d >= -tol
    le = d <= tol
    out: dict = {"grid_size": int(s.size)}
    if np.all(ge & le):
        out["verdict"] = "equal"
        return out
    if np.all(ge) or np.all(le):
        out["verdict"] = "c2>=c1" if np.all(ge) else "c1>=c2"
        big, small = (c2, c1) if np.all(ge) else (c1, c2)
        n = np.asarray(n_grid, float)
        g_big = decay_profile(big)[2].gamma(n)
        g_small = decay_profile(small)[2].gamma(n)
        out["gamma_ordered"] = bool(np.all(g_big >= g_small * (1 - 1e-9)))
        return out
    sign = np.sign(np.where(np.abs(d) <= tol, 0.0, d))
    nz = np.nonzero(sign)[0]
    flip = nz[np.nonzero(np.diff(sign[nz]))[0]]
    i = int(flip[0])
    lo, hi = s[i], s[nz[np.searchsorted(nz, i) + 1]]
    try:
        cross = optimize.brentq(lambda x: float(b2(x) - b1(x)), lo, hi, xtol=1e-14)
    except ValueError:
        cross = float(lo)
    out.update(verdict="incomparable", crossing=float(cross))
    return out
