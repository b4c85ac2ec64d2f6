"""Bound calculators for random walk Metropolis on heavy-tailed targets.

The chain of reasoning is: an isoperimetric minorant of the target plus a
smoothness constant for its potential give a close-coupling statement for
RWM, which gives a weak conductance lower bound, which gives a rate
function and a mixing time.  Each step is a closed-form calculator here.

Constants that come from external results and are not given explicitly
(``c(tau)``, ``c(eta)``, ``c(eta, tau)``) default to 1 and are flagged as
unresolved in every report that uses them.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, optimize

from ._io import rows_to_csv
from .functions import DECREASING, INCREASING, CallableFn, PowerLaw, RateFn, log_grid

__all__ = [
    "TargetSpec",
    "MixingReport",
    "iso_minorant",
    "smoothness_constant",
    "hessian_norm_profile",
    "close_coupling",
    "rwm_wcp_bound",
    "rwm_kstar_bound",
    "rwm_mixing_time",
    "asym_variance_bound",
    "three_set_from_minorant",
    "conductance_from_coupling",
    "pareto_psi_inverse",
    "pareto_weight_cdf",
    "one_dim_profile",
    "product_profile_bounds",
    "FAMILIES",
]

FAMILIES = ("student_t", "product_student", "subexp_product", "subexp_radial", "cauchy_type", "custom")

# tensorisation constants for product measures
TENSOR_C1 = 2 * math.sqrt(6)
TENSOR_C2 = 2 * (1 + TENSOR_C1)


@dataclass
class TargetSpec:
    """Heavy-tailed target family with its parameters.

    Parameters
    ----------
    family : str
        One of ``student_t`` (``tau``), ``product_student`` (``eta``),
        ``subexp_product`` (``eta``, ``tau``), ``subexp_radial`` (``eta``,
        ``tau``), ``cauchy_type`` (``eta``) or ``custom``.
    d : int
        Dimension.
    constant : float, optional
        The family constant ``c``.  Left as ``None`` it is taken to be 1
        and reported as unresolved.
    use_xi_lemma : bool
        Student-t only.  If true the minorant carries the explicit factor
        ``((1 - xi)/(1 + xi))^{1/2}`` with ``xi = sqrt(2/min(d, tau))``,
        which requires ``min(d, tau) > 2``.  Otherwise the generic
        ``c(d, tau) d^{-1/2} p^{1+1/tau}`` form is used.
    dimension_power : float
        Student-t only: exponent of ``d^{-1}`` in the minorant, 1/2 for the
        proven bound.
    minorant, L : callable, float
        Required for ``custom``.
    """

    family: str
    d: int
    tau: float | None = None
    eta: float | None = None
    constant: float | None = None
    use_xi_lemma: bool = True
    xi: float | None = None
    dimension_power: float = 0.5
    minorant: Callable | None = field(default=None, repr=False)
    L: float | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if int(self.d) != self.d or self.d < 1:
            raise ValueError("d must be a positive integer")
        self.d = int(self.d)
        fam = self.family
        if fam in ("student_t", "subexp_product", "subexp_radial") and not (self.tau and self.tau > 0):
            raise ValueError(f"{fam} needs tau > 0")
        if fam in ("product_student", "cauchy_type") and not (self.eta and self.eta > 0):
            raise ValueError(f"{fam} needs eta > 0")
        if fam in ("subexp_product", "subexp_radial") and not (self.eta and 0 < self.eta < 1):
            raise ValueError(f"{fam} needs eta in (0, 1)")
        if fam == "custom" and (self.minorant is None or self.L is None):
            raise ValueError("custom targets need both a minorant and L")
        if self.constant is not None and not self.constant > 0:
            raise ValueError("the family constant must be positive")

    @property
    def constant_value(self) -> float:
        return 1.0 if self.constant is None else float(self.constant)

    @property
    def constant_unresolved(self) -> bool:
        return self.constant is None and self.family != "custom"

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("minorant")
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TargetSpec":
        d = dict(d)
        if d.get("family") == "custom":
            raise ValueError("custom targets cannot be loaded from JSON")
        d.pop("minorant", None)
        return cls(**d)

    @classmethod
    def load(cls, path) -> "TargetSpec":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# minorants and smoothness


def _student_prefactor(spec: TargetSpec) -> float:
    d, tau = spec.d, spec.tau
    if not spec.use_xi_lemma:
        return spec.constant_value
    xi_min = math.sqrt(2 / min(d, tau))
    xi = xi_min if spec.xi is None else spec.xi
    if xi < xi_min:
        raise ValueError(f"xi = {xi} is below sqrt(2/min(d, tau)) = {xi_min}")
    if xi >= 1:
        raise ValueError(
            f"need sqrt(2/min(d, tau)) <= xi < 1, but sqrt(2/min(d, tau)) = {xi_min:.4g}; "
            "use use_xi_lemma=False for the generic c(d, tau) form")
    return spec.constant_value * math.sqrt((1 - xi) / (1 + xi))


def iso_minorant(spec: TargetSpec) -> CallableFn:
    """Isoperimetric minorant ``I(p)`` on ``(0, 1/2]``.

    * student_t: ``c d^{-1/2} p^{1 + 1/tau}``, with the explicit
      ``((1 - xi)/(1 + xi))^{1/2}`` factor when the xi lemma is used;
    * product_student: ``c d^{-1/eta} p^{1 + 1/eta}``;
    * subexp_product: ``c p log(d/p)^{-(1/eta - 1)}``;
    * subexp_radial: ``c p log(1/p)^{-(1/eta - 1)}``;
    * cauchy_type: ``c p^{1 + 1/eta}``.
    """
    fam, d = spec.family, spec.d
    c = spec.constant_value
    if fam == "student_t":
        coef = _student_prefactor(spec) * d ** (-spec.dimension_power)
        return _power_minorant(coef, 1 + 1 / spec.tau, "student_t")
    if fam == "product_student":
        return _power_minorant(c * d ** (-1 / spec.eta), 1 + 1 / spec.eta, "product_student")
    if fam == "cauchy_type":
        return _power_minorant(c, 1 + 1 / spec.eta, "cauchy_type")
    if fam in ("subexp_product", "subexp_radial"):
        k = 1 / spec.eta - 1
        scale = d if fam == "subexp_product" else 1.0

        def f(p):
            p = np.asarray(p, float)
            with np.errstate(divide="ignore", invalid="ignore"):
                out = c * p * np.log(scale / p) ** (-k)
            return np.where(p > 0, out, 0.0)

        return CallableFn(f, INCREASING, domain=(0.0, 0.5), label=fam)
    return CallableFn(lambda p: np.asarray(spec.minorant(np.asarray(p, float)), float),
                      INCREASING, domain=(0.0, 0.5), label="custom")


def _power_minorant(coef: float, exponent: float, label: str) -> CallableFn:
    fn = PowerLaw(coef, exponent)
    return CallableFn(fn, INCREASING, domain=(0.0, 0.5), label=label)


def _radial_derivatives(spec: TargetSpec):
    """``(A', A'')`` for radial potentials ``U(x) = A(|x|)``."""
    d, tau = spec.d, spec.tau
    if spec.family == "student_t":
        def a1(r):
            return (d + tau) * r / (tau + r ** 2)

        def a2(r):
            return (d + tau) * (tau - r ** 2) / (tau + r ** 2) ** 2
        return a1, a2
    if spec.family == "subexp_radial":
        al = spec.eta

        def a1(r):
            return al * r * (tau + r ** 2) ** (al / 2 - 1)

        def a2(r):
            return al * (tau + r ** 2) ** (al / 2 - 2) * (tau - (1 - al) * r ** 2)
        return a1, a2
    raise ValueError(f"{spec.family} is not a radial family")


def _coordinate_second_derivative(spec: TargetSpec):
    if spec.family == "product_student":
        eta = spec.eta
        return lambda x: (1 + eta) * (1 - x ** 2) / (1 + x ** 2) ** 2
    if spec.family == "subexp_product":
        eta, tau = spec.eta, spec.tau
        return lambda x: eta * (tau + x ** 2) ** (eta / 2 - 2) * (tau - (1 - eta) * x ** 2)
    raise ValueError(f"{spec.family} is not a product family")


def hessian_norm_profile(spec: TargetSpec) -> Callable[[np.ndarray], np.ndarray]:
    """Spectral norm of the Hessian of the potential along a ray or coordinate.

    For radial families this is ``r -> max(|A''(r)|, |A'(r)/r|)``
    (``d >= 2``; for ``d = 1`` only ``|A''|`` is used).  For product
    families the Hessian is diagonal and this is ``x -> |u''(x)|`` for the
    one-dimensional factor ``u``.
    """
    if spec.family in ("student_t", "subexp_radial"):
        a1, a2 = _radial_derivatives(spec)

        def norm(r):
            r = np.abs(np.asarray(r, float))
            second = np.abs(a2(r))
            if spec.d == 1:
                return second
            with np.errstate(divide="ignore", invalid="ignore"):
                first = np.where(r > 0, np.abs(a1(r) / np.where(r > 0, r, 1.0)), second)
            return np.maximum(second, first)

        return norm
    u2 = _coordinate_second_derivative(spec)
    return lambda x: np.abs(u2(np.asarray(x, float)))


def smoothness_constant(spec: TargetSpec) -> float:
    """Closed-form ``L`` with ``U`` ``L``-smooth.

    student_t ``1 + d/tau``; product_student ``1 + eta``;
    subexp_radial and subexp_product ``eta tau^{-(1 - eta/2)}``.
    An explicit ``spec.L`` overrides these; ``cauchy_type`` needs one since
    its potential is not smooth at the origin.
    """
    fam = spec.family
    if spec.L is not None:
        return float(spec.L)
    if fam == "student_t":
        if spec.d == 1:
            # |A''| alone peaks at r = 0 with the same value
            return (1 + spec.tau) / spec.tau
        return 1 + spec.d / spec.tau
    if fam == "product_student":
        return 1 + spec.eta
    if fam in ("subexp_product", "subexp_radial"):
        return spec.eta * spec.tau ** (-(1 - spec.eta / 2))
    raise ValueError(f"no smoothness constant is available for {fam}; set L explicitly")


# ---------------------------------------------------------------------------
# close coupling and conductance


def close_coupling(spec: TargetSpec | float, varsigma: float) -> dict:
    """Close-coupling constants of RWM with step ``sigma = varsigma (L d)^{-1/2}``.

    ``spec`` may also be the product ``L d`` directly.  Uses the lower bound
    ``alpha0 >= exp(-varsigma^2 / 2) / 2`` on the minimal acceptance rate.
    """
    if varsigma <= 0:
        raise ValueError("varsigma must be positive")
    Ld = spec if isinstance(spec, (int, float)) else smoothness_constant(spec) * spec.d
    sigma = varsigma / math.sqrt(Ld)
    alpha0 = 0.5 * math.exp(-0.5 * varsigma ** 2)
    return {"delta": alpha0 * sigma, "epsilon": alpha0 / 2, "alpha0_lb": alpha0, "sigma": sigma}


def three_set_from_minorant(minorant):
    """A regular minorant serves directly as the three-set function on ``(0, 1/2]``."""
    return minorant


def conductance_from_coupling(F, delta: float, epsilon: float, v, num: int = 2049) -> dict:
    """``sup_theta min{(1 - theta) eps / 2, eps delta theta F(theta v) / (4 theta v)}``.

    ``theta`` runs over a uniform grid containing 1/2, so the supremum
    always dominates the closed form ``eps/4 min{1, delta F(v/2) / v}``.
    """
    v = np.atleast_1d(np.asarray(v, float))
    theta = np.unique(np.concatenate([np.linspace(0, 1, num), [0.5]]))[1:]
    args = np.outer(v, theta)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(args > 0, F(args.ravel()).reshape(args.shape) / args, 0.0)
    first = 0.5 * (1 - theta) * epsilon
    second = 0.25 * epsilon * delta * theta * ratio
    sup = np.max(np.minimum(first, second), axis=1)
    closed = 0.25 * epsilon * np.minimum(1.0, 0.5 * delta * F(v / 2) / (v / 2))
    return {"v": v, "sup": sup, "closed": closed,
            "dominates": bool(np.all(sup >= closed * (1 - 1e-12)))}


def _check_precondition(spec: TargetSpec, varsigma: float, minorant) -> dict:
    L = smoothness_constant(spec)
    lhs = 2 * varsigma * L ** -0.5 * float(minorant(0.25))
    rhs = math.sqrt(spec.d)
    return {"lhs": lhs, "rhs": rhs, "holds": lhs <= rhs}


def rwm_wcp_bound(spec: TargetSpec, varsigma: float) -> CallableFn:
    """``Phi(v) >= 2^-6 varsigma e^{-varsigma^2} (L d)^{-1/2} I(v/2) / (v/2)``.

    Raises
    ------
    ValueError
        If ``2 varsigma L^{-1/2} I(1/4) <= d^{1/2}`` fails.
    """
    minorant = iso_minorant(spec)
    pre = _check_precondition(spec, varsigma, minorant)
    if not pre["holds"]:
        raise ValueError(
            "precondition 2*varsigma*L^(-1/2)*I(1/4) <= d^(1/2) fails: "
            f"{pre['lhs']:.6g} > {pre['rhs']:.6g}")
    Ld = smoothness_constant(spec) * spec.d
    pref = 2.0 ** -6 * varsigma * math.exp(-varsigma ** 2) / math.sqrt(Ld)

    def phi(v):
        v = np.asarray(v, float)
        h = np.minimum(v, 0.5) / 2
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(h > 0, pref * minorant(h) / np.where(h > 0, h, 1.0), 0.0)

    return CallableFn(phi, INCREASING, domain=(0.0, 0.5), label="rwm_wcp")


def rwm_kstar_bound(spec: TargetSpec, varsigma: float) -> CallableFn:
    """``K*(v) >= 2^-11 varsigma^2 e^{-2 varsigma^2} (L d)^{-1} I(v/8)^2 / (v/8)``."""
    minorant = iso_minorant(spec)
    Ld = smoothness_constant(spec) * spec.d
    pref = 2.0 ** -11 * varsigma ** 2 * math.exp(-2 * varsigma ** 2) / Ld

    def kstar(v):
        v = np.asarray(v, float)
        e = v / 8
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(e > 0, pref * minorant(e) ** 2 / np.where(e > 0, e, 1.0), 0.0)

    return CallableFn(kstar, INCREASING, domain=(0.0, 0.25), label="rwm_kstar")


# ---------------------------------------------------------------------------
# mixing times


@dataclass
class MixingReport:
    """Mixing-time bound for RWM with the constants that produced it.

    ``n_bound`` is the smallest integer at least ``1 + prefactor * integral``.
    ``closed_form`` is the family's final simplified upper bound;
    ``closed_form_exact`` evaluates the same integral through its exact
    antiderivative.  Both are ``None`` for families without them.
    """

    family: str
    d: int
    n_bound: int
    n_value: float
    integral: float
    prefactor: float
    lower: float
    upper: float
    L: float
    delta: float
    epsilon: float
    alpha0_lb: float
    sigma: float
    varsigma: float
    eps_mix: float
    u: float
    constant: float
    constant_unresolved: bool
    closed_form: float | None = None
    closed_form_exact: float | None = None
    precondition_holds: bool = True

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_csv(self) -> str:
        d = self.to_dict()
        return rows_to_csv(list(d), [list(d.values())])


def _integral_v_over_minorant_sq(minorant, lo: float, hi: float) -> float:
    """``int_lo^hi v dv / I(v)^2`` by adaptive quadrature in ``log v``."""

    def integrand(t):
        v = math.exp(t)
        iv = float(minorant(v))
        return v * v / (iv * iv)

    val, _ = integrate.quad(integrand, math.log(lo), math.log(hi), limit=400, epsabs=0.0, epsrel=1e-11)
    return val


def _closed_forms(spec: TargetSpec, lo: float, hi: float, c: float, coef_pref: float):
    """Final display and exact antiderivative of the integral, per family.

    Both are returned already multiplied by the prefactor of the bound and
    shifted by 1.
    """
    fam, d = spec.family, spec.d
    if fam == "student_t":
        k = 2 / spec.tau
        scale = (_student_prefactor(spec) * d ** (-spec.dimension_power)) ** 2  # I(v)^2 = scale v^{2+k}
        exact = (lo ** -k - hi ** -k) / (k * scale)
        final = 1 + coef_pref * (1 / scale) * (spec.tau / 2) * lo ** -k
        return final, 1 + coef_pref * exact
    if fam in ("product_student", "cauchy_type"):
        k = 2 / spec.eta
        dim = d ** (-1 / spec.eta) if fam == "product_student" else 1.0
        scale = (c * dim) ** 2
        exact = (lo ** -k - hi ** -k) / (k * scale)
        final = 1 + coef_pref * (1 / scale) * (spec.eta / 2) * lo ** -k
        return final, 1 + coef_pref * exact
    if fam in ("subexp_product", "subexp_radial"):
        m = 2 / spec.eta - 1
        scale = d if fam == "subexp_product" else 1.0
        t_hi, t_lo = math.log(scale / lo), math.log(scale / hi)
        if t_lo <= 0:
            return None, None
        exact = (t_hi ** m - t_lo ** m) / (m * c ** 2)
        final = 1 + coef_pref * (spec.eta / (2 - spec.eta)) * t_hi ** m / c ** 2
        return final, 1 + coef_pref * exact
    return None, None


def rwm_mixing_time(spec: TargetSpec, varsigma: float, eps_mix: float, u: float = 1.0) -> MixingReport:
    """Steps for ``chi2(nu P^n, pi) <= eps_mix`` from a start with ``||d nu/d pi||_osc^2 = u``.

    ``n >= 1 + 2^14 varsigma^-2 e^{2 varsigma^2} L d int_{eps/(8u)}^{1/32} v dv / I(v)^2``.
    An empty integration range gives ``n = 1``.
    """
    if eps_mix <= 0:
        raise ValueError("eps_mix must be positive")
    if u < 1:
        raise ValueError("u must be at least 1")
    minorant = iso_minorant(spec)
    L = smoothness_constant(spec)
    cc = close_coupling(L * spec.d, varsigma)
    pre = _check_precondition(spec, varsigma, minorant)
    pref = 2.0 ** 14 * varsigma ** -2 * math.exp(2 * varsigma ** 2) * L * spec.d
    lo, hi = 2.0 ** -3 * eps_mix / u, 2.0 ** -5
    if lo >= hi:
        integral = 0.0
        final = exact = 1.0
    else:
        integral = _integral_v_over_minorant_sq(minorant, lo, hi)
        final, exact = _closed_forms(spec, lo, hi, spec.constant_value, pref)
    n_value = 1 + pref * integral
    n_bound = int(math.ceil(n_value - 1e-12 * n_value))
    return MixingReport(
        family=spec.family, d=spec.d, n_bound=n_bound, n_value=n_value, integral=integral,
        prefactor=pref, lower=lo, upper=hi, L=L, delta=cc["delta"], epsilon=cc["epsilon"],
        alpha0_lb=cc["alpha0_lb"], sigma=cc["sigma"], varsigma=varsigma, eps_mix=eps_mix, u=u,
        constant=spec.constant_value, constant_unresolved=spec.constant_unresolved,
        closed_form=final, closed_form_exact=exact, precondition_holds=pre["holds"])


# ---------------------------------------------------------------------------
# asymptotic variance


def _power_part(kstar):
    fn = kstar if isinstance(kstar, PowerLaw) else getattr(kstar, "fn", None)
    return fn if isinstance(fn, PowerLaw) else None


def _tail_exponent(kstar, w0: float = 1e-10) -> float:
    fn = _power_part(kstar)
    if fn is not None:
        return fn.exponent
    w = np.array([w0, w0 * 10])
    k = kstar(w)
    if np.any(k <= 0):
        return math.inf
    return float(np.log(k[1] / k[0]) / math.log(10.0))


def asym_variance_bound(kstar, psi_f: float, l2_f: float, tail_split: float = 1e-8):
    """``4 Psi(f) B(||f||^2 / Psi(f))`` with ``B(v) = int_0^v w / K*(w) dw``.

    The exponent ``q`` of ``K*`` at 0 is read first: ``w / K*(w)`` behaves
    like ``w^{1-q}`` and is integrable iff ``q < 2``; otherwise the string
    ``"divergent"`` is returned.  Power laws are integrated in closed
    form.  Otherwise the part below ``tail_split`` extrapolates
    ``K*(w) = K*(tail_split) (w / tail_split)^q`` and the rest is done by
    quadrature.

    ``l2_f`` is ``||f - pi(f)||_2``, not its square.
    """
    if psi_f <= 0:
        raise ValueError("Psi(f) must be positive")
    v = l2_f ** 2 / psi_f
    if v <= 0:
        return 0.0
    q = _tail_exponent(kstar)
    if not q < 2 - 1e-9:
        return "divergent"
    fn = _power_part(kstar)
    if fn is not None:
        B = v ** (2 - q) / (fn.coef * (2 - q))
        return 4 * psi_f * B
    split = min(tail_split, v)
    k_split = float(kstar(split))
    if k_split <= 0:
        return "divergent"
    tail = split ** 2 / (k_split * (2 - q))
    body = 0.0
    if v > split:
        body, _ = integrate.quad(lambda t: math.exp(2 * t) / float(kstar(math.exp(t))),
                                 math.log(split), math.log(v), limit=200, epsrel=1e-10)
    return 4 * psi_f * (tail + body)


# ---------------------------------------------------------------------------
# pseudo-marginal Pareto weights


def pareto_psi_inverse(alpha: float) -> PowerLaw:
    """``psi^-(v) = x_m v^{-1/(alpha - 1)}`` with ``x_m = 1 - 1/alpha``."""
    if not alpha > 1:
        raise ValueError("need alpha > 1")
    xm = 1 - 1 / alpha
    return PowerLaw(xm, -1 / (alpha - 1))


def pareto_weight_cdf(alpha: float, s):
    """Size-biased weight law ``P(W <= s) = 1 - (x_m / s)^{alpha - 1}`` for ``s >= x_m``."""
    if not alpha > 1:
        raise ValueError("need alpha > 1")
    xm = 1 - 1 / alpha
    s = np.asarray(s, float)
    with np.errstate(divide="ignore"):
        return np.where(s <= xm, 0.0, 1 - (xm / s) ** (alpha - 1))


# ---------------------------------------------------------------------------
# one-dimensional profiles


def one_dim_profile(potential: Callable[[np.ndarray], np.ndarray], p, x_max: float = 1e6):
    """``min{J(p), 2 J(p/2)}`` with ``J = pi o G^{-1}`` for ``pi ∝ exp(-U(|x|))`` on the line.

    Intended for sanity plots; normalisation and the cdf are computed by
    quadrature on ``[-x_max, x_max]``.
    """
    def dens(x):
        return math.exp(-float(potential(abs(x))))

    Z = 2 * integrate.quad(dens, 0, x_max, limit=400)[0]

    def tail(x):
        # P(X > x) for x >= 0
        return integrate.quad(dens, x, x_max, limit=400)[0] / Z

    def J(q):
        if q <= 0 or q >= 1:
            return 0.0
        if q >= 0.5:
            return J(1 - q)
        x = optimize.brentq(lambda t: tail(t) - q, 0.0, x_max, xtol=1e-12)
        return dens(x) / Z

    p = np.atleast_1d(np.asarray(p, float))
    return np.array([min(J(q), 2 * J(q / 2)) for q in p])


def product_profile_bounds(J: Callable[[float], float], d: int, p):
    """Lower and upper profile bounds for ``pi^{(x) d}`` from the one-dimensional ``J``.

    ``d c1/c2 J(p / (2 c1 d)) <= I(p) <= d c1/c2 J(p / (c1 d))`` with
    ``c1 = 2 sqrt 6`` and ``c2 = 2 (1 + c1)``.
    """
    p = np.atleast_1d(np.asarray(p, float))
    k = d * TENSOR_C1 / TENSOR_C2
    lower = np.array([k * J(q / (2 * TENSOR_C1 * d)) for q in p])
    upper = np.array([k * J(q / (TENSOR_C1 * d)) for q in p])
    return lower, upper
