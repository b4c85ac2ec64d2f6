"""Exact analysis of finite-state Markov chains.

Everything here works with dense matrices and, where the quantity is a
supremum or infimum over sets, with full subset enumeration.  That caps the
state count (22 by default) but makes every number a certified value rather
than an estimate.

Conventions: ``mu`` is the invariant law, ``P`` is row-stochastic, and
kernel products compose left to right, so ``A @ B`` moves by ``A`` first.
Inner products and norms are taken in ``L^2(mu)``.
"""
from __future__ import annotations

import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg

from ._io import atomic_write_text, rows_to_csv, thread_cap
from .functions import DECREASING, INCREASING, MaxAffine, Staircase

__all__ = [
    "FiniteChain",
    "DecayCurve",
    "StateCapError",
    "adjoint",
    "reversibilize",
    "lazy",
    "multiplicative",
    "dirichlet_form",
    "set_flow",
    "exact_decay",
    "weak_conductance_exact",
    "weak_conductance_sampled",
    "beta_lower_indicator",
    "beta_lower_sticky",
    "exact_beta_two_state",
    "dirichlet_comparison_check",
    "rupi_check",
    "counterexample_chain",
    "check_product_reducibility",
    "circle_walk",
    "two_state_chain",
    "independent_chain",
    "identity_chain",
    "random_reversible_chain",
    "jump_chain",
    "jump_drift_check",
    "pm_lift",
    "pm_conductance_bound",
    "pareto_weight_atoms",
    "duality_check",
    "compare_measures_bound",
    "fit_decay_exponent",
]

SUBSET_CAP = 22
INVARIANCE_TOL = 1e-10
ROW_TOL = 1e-12


class StateCapError(ValueError):
    """Raised when an exact enumeration would exceed the state cap."""


@dataclass(frozen=True)
class FiniteChain:
    """Finite-state Markov kernel with its invariant law.

    Parameters
    ----------
    states : sequence
        State labels.
    mu : array_like
        Invariant probability vector.  Zero entries require
        ``support_restricted=True``.
    P : array_like
        Row-stochastic transition matrix.
    reversible : bool, optional
        If ``True`` detailed balance is verified on construction.
    support_restricted : bool
        Allow states with zero invariant mass.
    """

    states: tuple
    mu: np.ndarray
    P: np.ndarray
    reversible: bool | None = None
    support_restricted: bool = False
    info: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        P = np.array(self.P, dtype=float)
        mu = np.array(self.mu, dtype=float).ravel()
        n = mu.size
        if P.shape != (n, n):
            raise ValueError(f"P has shape {P.shape}, expected {(n, n)}")
        if len(self.states) != n:
            raise ValueError("states and mu have different lengths")
        if np.any(P < -ROW_TOL) or np.any(mu < 0):
            raise ValueError("negative probabilities")
        if np.any(np.abs(P.sum(axis=1) - 1) > ROW_TOL * max(1, n)):
            raise ValueError("rows of P must sum to 1")
        if abs(mu.sum() - 1) > 1e-12 * max(1, n):
            raise ValueError("mu must sum to 1")
        if np.any(mu == 0) and not self.support_restricted:
            raise ValueError("zero-mass state without the support_restricted flag")
        if np.max(np.abs(mu @ P - mu)) > INVARIANCE_TOL:
            raise ValueError("mu is not invariant for P")
        if self.reversible:
            flow = mu[:, None] * P
            if np.max(np.abs(flow - flow.T)) > INVARIANCE_TOL:
                raise ValueError("chain flagged reversible but detailed balance fails")
        P.setflags(write=False)
        mu.setflags(write=False)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "states", tuple(self.states))

    @property
    def n(self) -> int:
        return self.mu.size

    def is_reversible(self, tol: float = INVARIANCE_TOL) -> bool:
        flow = self.mu[:, None] * self.P
        return bool(np.max(np.abs(flow - flow.T)) <= tol)

    def index(self, state) -> int:
        return self.states.index(state)

    # construction helpers ------------------------------------------------
    @classmethod
    def from_matrix(cls, P, states=None, **kw) -> "FiniteChain":
        """Build a chain from ``P`` alone, solving for its invariant law."""
        P = np.asarray(P, float)
        mu = stationary_distribution(P)
        if states is None:
            states = tuple(range(P.shape[0]))
        return cls(states, mu, P, **kw)

    def to_dict(self) -> dict:
        return {
            "states": [list(s) if isinstance(s, tuple) else s for s in self.states],
            "mu": self.mu.tolist(),
            "P": self.P.tolist(),
            "flags": {"reversible": bool(self.is_reversible()),
                      "support_restricted": bool(self.support_restricted)},
            "info": _portable_info(self.info),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FiniteChain":
        for key in ("states", "mu", "P"):
            if key not in d:
                raise ValueError(f"chain JSON is missing {key!r}")
        flags = d.get("flags", {}) or {}
        states = [tuple(s) if isinstance(s, list) else s for s in d["states"]]
        mu = np.asarray(d["mu"], float)
        return cls(states, mu / mu.sum(), d["P"], reversible=flags.get("reversible"),
                   support_restricted=bool(flags.get("support_restricted", False)),
                   info=dict(d.get("info") or {}))

    def save(self, path) -> None:
        atomic_write_text(path, json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "FiniteChain":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _portable_info(info: dict) -> dict:
    """JSON-safe subset of ``info``; entries that do not serialise are dropped."""
    out = {}
    for key, value in info.items():
        if isinstance(value, np.ndarray):
            value = value.tolist()
        try:
            json.dumps(value, allow_nan=False)
        except (TypeError, ValueError):
            continue
        out[str(key)] = value
    return out


def stationary_distribution(P: np.ndarray) -> np.ndarray:
    """Invariant law of an irreducible ``P`` by a least-squares solve."""
    n = P.shape[0]
    A = np.vstack([P.T - np.eye(n), np.ones((1, n))])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    mu, *_ = np.linalg.lstsq(A, b, rcond=None)
    mu = np.clip(mu, 0.0, None)
    return mu / mu.sum()


# ---------------------------------------------------------------------------
# kernel operations


def _adjoint_matrix(chain: FiniteChain) -> np.ndarray:
    mu = chain.mu
    with np.errstate(divide="ignore", invalid="ignore"):
        Ps = (chain.P.T * mu[None, :]) / mu[:, None]
    Ps[mu == 0] = 0.0
    Ps[mu == 0, np.nonzero(mu == 0)[0]] = 1.0
    return Ps


def adjoint(chain: FiniteChain) -> FiniteChain:
    """``P*(i, j) = mu_j P(j, i) / mu_i``."""
    return FiniteChain(chain.states, chain.mu, _adjoint_matrix(chain),
                       support_restricted=chain.support_restricted)


def reversibilize(chain: FiniteChain) -> FiniteChain:
    """Additive reversibilisation ``S = (P + P*) / 2``."""
    S = 0.5 * (chain.P + _adjoint_matrix(chain))
    return FiniteChain(chain.states, chain.mu, S, reversible=True,
                       support_restricted=chain.support_restricted)


def lazy(chain: FiniteChain, eps: float) -> FiniteChain:
    """``eps Id + (1 - eps) P``."""
    if not 0 <= eps <= 1:
        raise ValueError("laziness must lie in [0, 1]")
    P = eps * np.eye(chain.n) + (1 - eps) * chain.P
    return FiniteChain(chain.states, chain.mu, P, support_restricted=chain.support_restricted)


def multiplicative(chain: FiniteChain) -> FiniteChain:
    """``P* P``: one step of ``P*`` followed by one step of ``P``."""
    T = _adjoint_matrix(chain) @ chain.P
    return FiniteChain(chain.states, chain.mu, T, reversible=True,
                       support_restricted=chain.support_restricted)


def dirichlet_form(chain: FiniteChain, f, p: int = 2) -> float:
    """``E_p(P, f) = 1/2 sum_ij mu_i P_ij |f_j - f_i|^p``."""
    if p not in (1, 2):
        raise ValueError("p must be 1 or 2")
    f = np.asarray(f, float)
    diff = np.abs(f[None, :] - f[:, None]) ** p
    return 0.5 * float(np.sum(chain.mu[:, None] * chain.P * diff))


def set_flow(chain: FiniteChain, A) -> float:
    """``mu x P (A x A^c)`` for a boolean mask or index list ``A``."""
    mask = _mask(chain, A)
    return float(chain.mu[mask] @ chain.P[np.ix_(mask, ~mask)].sum(axis=1))


def _mask(chain: FiniteChain, A) -> np.ndarray:
    A = np.asarray(A)
    if A.dtype == bool:
        return A
    mask = np.zeros(chain.n, bool)
    mask[A.astype(int)] = True
    return mask


def _var(mu: np.ndarray, f: np.ndarray) -> float:
    m = mu @ f
    return float(mu @ (f - m) ** 2)


# ---------------------------------------------------------------------------
# decay


@dataclass
class DecayCurve:
    """``||P^n f - mu(f)||^2`` for ``n = 0, 1, ...``.

    ``lower`` and ``upper`` hold confidence bands for Monte Carlo
    estimates and are ``None`` for exact curves.
    """

    n: np.ndarray
    values: np.ndarray
    f: np.ndarray | None = None
    osc: float = 1.0
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    note: str = ""

    def normalized(self) -> np.ndarray:
        """Values divided by the squared oscillation of ``f``."""
        return self.values / self.osc ** 2

    def to_csv(self) -> str:
        rows = [(int(k), float(v)) for k, v in zip(self.n, self.values)]
        return rows_to_csv(["n", "value"], rows)

    def fitted_exponent(self) -> float:
        """Decay exponent by least squares on the last half of the horizon."""
        return fit_decay_exponent(self.n, self.values)


def fit_decay_exponent(n, values) -> float:
    """Minus the log-log slope of ``values`` over the last half of ``n``."""
    n = np.asarray(n, float)
    v = np.asarray(values, float)
    keep = (n >= max(1.0, 0.5 * n.max())) & (v > 0)
    if keep.sum() < 2:
        raise ValueError("not enough positive points to fit an exponent")
    slope = np.polyfit(np.log(n[keep]), np.log(v[keep]), 1)[0]
    return float(-slope)


def exact_decay(chain: FiniteChain, f, n_max: int) -> DecayCurve:
    """Exact ``||P^n f - mu(f)||^2`` for ``n = 0..n_max`` by repeated products."""
    f = np.asarray(f, float)
    g = f - chain.mu @ f
    vals = np.empty(n_max + 1)
    for k in range(n_max + 1):
        if k:
            g = chain.P @ g
            g = g - chain.mu @ g
        vals[k] = chain.mu @ g ** 2
    osc = float(np.ptp(f[chain.mu > 0])) if f.size else 0.0
    return DecayCurve(np.arange(n_max + 1), vals, f=f, osc=osc)


# ---------------------------------------------------------------------------
# subset enumeration


def _subset_block(args):
    P, mu, n, start, stop = args
    codes = np.arange(start, stop, dtype=np.int64)
    X = ((codes[:, None] >> np.arange(n)) & 1).astype(float)
    mass = X @ mu
    flow = np.einsum("ij,ij->i", (X * mu) @ P, 1.0 - X)
    return codes, mass, flow


def _enumerate_subsets(chain: FiniteChain, max_states: int = SUBSET_CAP, block: int = 1 << 15,
                       keep=None):
    """Yield ``(codes, mass, flow)`` over all nonempty proper subsets."""
    n = chain.n
    if n > max_states:
        raise StateCapError(
            f"{n} states exceeds the exact-enumeration cap of {max_states}; "
            "use weak_conductance_sampled for a non-certified indicator-sampling estimate")
    total = 1 << n
    jobs = [(chain.P, chain.mu, n, s, min(s + block, total - 1)) for s in range(1, total - 1, block)]
    workers = min(thread_cap(), max(1, len(jobs)))
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(_subset_block, jobs))
    else:
        results = [_subset_block(j) for j in jobs]
    codes = np.concatenate([r[0] for r in results]) if results else np.zeros(0, np.int64)
    mass = np.concatenate([r[1] for r in results]) if results else np.zeros(0)
    flow = np.concatenate([r[2] for r in results]) if results else np.zeros(0)
    return codes, mass, flow


def _decode_set(code: int, n: int) -> list[int]:
    return [i for i in range(n) if (code >> i) & 1]


def _profile_from_sets(mass, flow, codes, n, labels=None, tol=1e-13) -> Staircase:
    """Exact weak conductance staircase from set masses and flows."""
    mass = np.where(np.abs(mass - 0.5) <= tol, 0.5, mass)
    keep = (mass > tol) & (mass <= 0.5)
    mass, flow, codes = mass[keep], flow[keep], codes[keep]
    if mass.size == 0:
        return Staircase([], [math.inf], side="left", direction=INCREASING)
    ratio = flow / mass
    order = np.lexsort((ratio, mass))
    mass, ratio, codes = mass[order], ratio[order], codes[order]
    # group masses equal up to rounding
    new_group = np.concatenate([[True], np.diff(mass) > tol])
    gid = np.cumsum(new_group) - 1
    first = np.nonzero(new_group)[0]
    m_u = mass[first]
    r_u = ratio[first]          # lexsort puts the smallest ratio first in each group
    c_u = codes[first]
    # Phi(v) = min over groups with mass >= v, a suffix minimum
    suff = np.minimum.accumulate(r_u[::-1])[::-1]
    arg = np.empty(m_u.size, int)
    best = m_u.size - 1
    for k in range(m_u.size - 1, -1, -1):
        if r_u[k] <= r_u[best]:
            best = k
        arg[k] = best
    del gid
    # merge pieces with equal value, keeping the right endpoint of each run
    breaks, values, notes = [], [], []
    for k in range(m_u.size):
        if k + 1 < m_u.size and suff[k + 1] == suff[k]:
            continue
        breaks.append(float(m_u[k]))
        values.append(float(suff[k]))
        members = _decode_set(int(c_u[arg[k]]), n)
        notes.append({"set": [labels[i] if labels else i for i in members],
                      "mass": float(m_u[arg[k]])})
    values.append(math.inf)
    return Staircase(breaks, values, side="left", direction=INCREASING, annotations=notes)


def weak_conductance_exact(chain: FiniteChain, max_states: int = SUBSET_CAP) -> Staircase:
    """Weak conductance profile by full subset enumeration.

    ``Phi(v) = min {mu x P(A x A^c) / mu(A) : v <= mu(A) <= 1/2}`` as a
    left-continuous staircase in ``v``; ``+inf`` beyond the largest
    admissible mass.  ``annotations`` records a minimising set per piece.
    """
    codes, mass, flow = _enumerate_subsets(chain, max_states)
    labels = [s if not isinstance(s, tuple) else list(s) for s in chain.states]
    return _profile_from_sets(mass, flow, codes, chain.n, labels)


def weak_conductance_sampled(chain: FiniteChain, n_sets: int = 20000, rng=None) -> Staircase:
    """Indicator-sampling estimate of the profile for large chains.

    Random sets only witness upper bounds on the true profile, so the
    result is flagged non-certified in its annotations.
    """
    rng = np.random.default_rng(rng)
    n = chain.n
    sizes = rng.integers(1, n, size=n_sets)
    masks = np.zeros((n_sets, n), bool)
    for k, sz in enumerate(sizes):
        masks[k, rng.choice(n, sz, replace=False)] = True
    X = masks.astype(float)
    mass = X @ chain.mu
    flow = np.einsum("ij,ij->i", (X * chain.mu) @ chain.P, 1 - X)
    codes = np.arange(n_sets)
    prof = _profile_from_sets(mass, flow, codes, 0)
    prof.annotations = [{"certified": False}] * len(prof.breaks)
    return prof


def _upper_envelope(slopes: np.ndarray, intercepts: np.ndarray):
    """Lines on the upper envelope of ``max_j slopes_j x + intercepts_j`` for x >= 0."""
    order = np.lexsort((-intercepts, slopes))
    s, c = slopes[order], intercepts[order]
    keep = np.concatenate([[True], np.diff(s) > 0])
    # among equal slopes keep the largest intercept (first after sorting)
    s, c = s[keep], c[keep]
    hull_s, hull_c = [], []
    for si, ci in zip(s, c):
        while len(hull_s) >= 2:
            s1, c1, s2, c2 = hull_s[-2], hull_c[-2], hull_s[-1], hull_c[-1]
            # line 2 is useless if line 1 and the new line meet above it
            if (c1 - ci) * (s2 - s1) <= (c1 - c2) * (si - s1):
                hull_s.pop()
                hull_c.pop()
            else:
                break
        hull_s.append(si)
        hull_c.append(ci)
    return np.array(hull_s), np.array(hull_c)


def beta_lower_indicator(chain: FiniteChain, s_grid=None, max_states: int = SUBSET_CAP) -> MaxAffine:
    """Certified lower bound on the optimal beta from indicator functions.

    For each set ``A``, ``1_A`` has unit oscillation, so
    ``beta*(s) >= max_A mu(A) mu(A^c) - s E(P, 1_A)``.  The result is the
    exact upper envelope of these affine functions of ``s``, floored at 0.
    ``s_grid`` is accepted for interface symmetry and ignored.
    """
    _, mass, flow = _enumerate_subsets(chain, max_states)
    var = mass * (1 - mass)
    hs, hc = _upper_envelope(-flow, var)
    return MaxAffine(hs, hc, floor=0.0)


def beta_lower_sticky(chain: FiniteChain, s_grid=None) -> MaxAffine:
    """Sticky-set lower bound ``sup_eps mu(A_eps)(1 - s eps - mu(A_eps))``.

    ``A_eps = {x : P(x, x) >= 1 - eps}``.  Only the distinct diagonal
    values matter, and for each induced set the smallest admissible
    ``eps`` is best, so the bound is an exact max of affine functions.
    """
    diag = np.clip(np.diag(chain.P), 0.0, 1.0)
    levels = np.unique(diag)[::-1]
    slopes, intercepts = [], []
    for d in levels:
        eps = 1.0 - d
        if eps >= 1.0:
            continue
        m = float(chain.mu[diag >= d].sum())
        slopes.append(-m * eps)
        intercepts.append(m * (1 - m))
    if not slopes:
        return MaxAffine([-1.0], [0.0], floor=0.0)
    hs, hc = _upper_envelope(np.array(slopes), np.array(intercepts))
    return MaxAffine(hs, hc, floor=0.0)


def exact_beta_two_state(chain: FiniteChain) -> MaxAffine:
    """Optimal beta for a two-state chain under the oscillation sieve.

    Every unit-oscillation function is a shifted, possibly negated,
    indicator, so the indicator bound is exact here.
    """
    if chain.n != 2:
        raise ValueError("exact beta is only available for two states")
    return beta_lower_indicator(chain)


# ---------------------------------------------------------------------------
# Dirichlet form comparisons


def dirichlet_comparison_check(chain: FiniteChain, basis=None, rtol: float = 1e-10) -> dict:
    """Check ``2 eps E(P, f) <= E(P*P, f) <= 2 E(P, f)`` on a basis.

    ``eps`` is the smallest holding probability; the lower inequality is
    only checked when it is positive.  Also returns the chained beta
    ``mu x S(A(s)^c, X != Y)`` as a staircase in ``s``.
    """
    n = chain.n
    if basis is None:
        basis = [np.eye(n)[i] for i in range(n)]
        if n <= 12:
            basis += [np.array([(c >> i) & 1 for i in range(n)], float) for c in range(1, (1 << n) - 1)]
    T = multiplicative(chain)
    eps = float(np.min(np.diag(chain.P)))
    upper_ok, lower_ok = True, True
    worst_upper, worst_lower = -math.inf, -math.inf
    for f in basis:
        e1 = dirichlet_form(chain, f)
        e2 = dirichlet_form(T, f)
        tol = rtol * max(1.0, e1)
        worst_upper = max(worst_upper, e2 - 2 * e1)
        if e2 > 2 * e1 + tol:
            upper_ok = False
        if eps > 0:
            worst_lower = max(worst_lower, 2 * eps * e1 - e2)
            if e2 < 2 * eps * e1 - tol:
                lower_ok = False
    return {
        "upper_holds": upper_ok,
        "lower_checked": eps > 0,
        "lower_holds": lower_ok,
        "min_holding": eps,
        "worst_upper_gap": float(worst_upper),
        "worst_lower_gap": float(worst_lower) if eps > 0 else None,
        "chained_beta": chained_beta(chain),
    }


def chained_beta(chain: FiniteChain) -> Staircase:
    """``beta(s) = mu x S({s delta(x, y) <= 1}, x != y)`` with ``delta = 2 min(eps_x, eps_y)``.

    Decreasing, left-continuous staircase in ``s``.
    """
    S = reversibilize(chain).P
    eps = np.diag(chain.P)
    delta = 2 * np.minimum(eps[:, None], eps[None, :])
    w = chain.mu[:, None] * S
    off = ~np.eye(chain.n, dtype=bool)
    dvals = delta[off]
    wvals = w[off]
    pos = dvals > 0
    never = float(wvals[~pos].sum())            # delta = 0: always counted
    thresholds = 1.0 / dvals[pos]
    weights = wvals[pos]
    order = np.argsort(thresholds)
    th, wt = thresholds[order], weights[order]
    uniq, idx = np.unique(th, return_index=True)
    grouped = np.add.reduceat(wt, idx) if wt.size else np.zeros(0)
    # for s in (uniq[k-1], uniq[k]] the pairs with threshold >= s remain
    remaining = never + np.concatenate([np.cumsum(grouped[::-1])[::-1], [0.0]])
    return Staircase(uniq, remaining, side="left", direction=DECREASING)


# ---------------------------------------------------------------------------
# RUPI and the counterexample


def rupi_check(chain: FiniteChain, m_max: int = 64, kernel=None) -> dict:
    """Finite-state RUPI check.

    RUPI holds iff ``sum_{n<=m} K^n`` is entrywise positive on the support
    of ``mu`` for some ``m``.  ``kernel`` overrides the matrix examined
    (for instance a product such as ``(P*)^k P^k``).
    """
    K = chain.P if kernel is None else np.asarray(kernel, float)
    supp = np.nonzero(chain.mu > 0)[0]
    K = K[np.ix_(supp, supp)]
    reach = np.eye(supp.size, dtype=bool)
    step = K > 0
    power = np.eye(supp.size, dtype=bool)
    for m in range(0, m_max + 1):
        if m:
            power = (power.astype(np.int64) @ step.astype(np.int64)) > 0
            reach |= power
        if reach.all():
            return {"is_rupi": True, "m": m}
    # witness from the row reaching the fewest states
    row = int(np.argmin(reach.sum(axis=1)))
    col = int(np.argmin(reach[row]))
    absorbing = [chain.states[supp[i]] for i in range(supp.size) if reach[i].sum() == 1]
    return {"is_rupi": False, "m": None,
            "witness": {"from": chain.states[supp[row]], "to": chain.states[supp[col]]},
            "absorbing": absorbing}


def counterexample_chain(nu: Sequence[float]) -> FiniteChain:
    """Level chain on ``{(i, j) : 1 <= j <= i <= K}``.

    Along level ``i`` the chain moves right deterministically; from the end
    ``(i, i)`` it jumps to the start ``(i', 1)`` of a level drawn from
    ``nu``.  The invariant law is ``nu(i) / sum_k k nu(k)`` on each state.
    """
    nu = np.asarray(nu, float)
    if nu.ndim != 1 or np.any(nu < 0) or abs(nu.sum() - 1) > 1e-12:
        raise ValueError("nu must be a probability vector on {1..K}")
    if not 0 < nu[0] < 1:
        raise ValueError("nu(1) must lie in (0, 1)")
    K = nu.size
    states = [(i, j) for i in range(1, K + 1) for j in range(1, i + 1)]
    index = {s: k for k, s in enumerate(states)}
    P = np.zeros((len(states), len(states)))
    for (i, j), k in index.items():
        if j < i:
            P[k, index[(i, j + 1)]] = 1.0
        else:
            for i2 in range(1, K + 1):
                P[k, index[(i2, 1)]] += nu[i2 - 1]
    Z = float(np.sum(nu * np.arange(1, K + 1)))
    mu = np.array([nu[i - 1] / Z for (i, _) in states])
    keep = mu > 0
    if not keep.all():
        raise ValueError("nu must charge every level so that mu is positive")
    return FiniteChain(states, mu, P, info={"nu": nu.tolist()})


def check_product_reducibility(chain: FiniteChain, k: int) -> dict:
    """Check that ``(P*)^k P^k`` traps each ``(i, i)`` with ``i > k``.

    Returns the diagonal entries at those states, the Dirichlet form of
    ``f_k = 1_{A_k} - mu(A_k)`` with ``A_k = {(i, i) : i > k}``, and
    ``||f_k||``.
    """
    Ps = _adjoint_matrix(chain)
    T = np.linalg.matrix_power(Ps, k) @ np.linalg.matrix_power(chain.P, k)
    trapped = [s for s in chain.states if s[0] == s[1] and s[0] > k]
    diag = {s: float(T[chain.index(s), chain.index(s)]) for s in trapped}
    mask = np.array([s in trapped for s in chain.states])
    f = mask.astype(float) - chain.mu[mask].sum()
    Tchain = FiniteChain(chain.states, chain.mu, T)
    energy = dirichlet_form(Tchain, f)
    return {
        "k": k,
        "trapped_states": trapped,
        "diagonal": diag,
        "all_trapped": bool(all(v == 1.0 for v in diag.values())),
        "dirichlet_form": energy,
        "f_norm": float(math.sqrt(chain.mu @ f ** 2)),
        "rupi": rupi_check(chain, m_max=chain.n, kernel=T),
    }


# ---------------------------------------------------------------------------
# small reference chains


def identity_chain(mu) -> FiniteChain:
    mu = np.asarray(mu, float)
    return FiniteChain(tuple(range(mu.size)), mu, np.eye(mu.size), reversible=True)


def independent_chain(mu) -> FiniteChain:
    mu = np.asarray(mu, float)
    return FiniteChain(tuple(range(mu.size)), mu, np.tile(mu, (mu.size, 1)), reversible=True)


def two_state_chain(p: float, q: float) -> FiniteChain:
    """``P = [[1-p, p], [q, 1-q]]`` with invariant law ``(q, p) / (p + q)``."""
    if not (0 < p <= 1 and 0 < q <= 1):
        raise ValueError("p and q must lie in (0, 1]")
    P = np.array([[1 - p, p], [q, 1 - q]])
    mu = np.array([q, p]) / (p + q)
    return FiniteChain((0, 1), mu, P, reversible=True)


def circle_walk(m: int) -> FiniteChain:
    """Deterministic rotation ``x -> x + 1 mod m`` with uniform law."""
    if m < 2:
        raise ValueError("need at least two states")
    P = np.roll(np.eye(m), 1, axis=1)
    return FiniteChain(tuple(range(m)), np.full(m, 1.0 / m), P)


def random_reversible_chain(n: int, rng=None, laziness: float | None = None,
                            density: float = 1.0) -> FiniteChain:
    """Random reversible chain from a symmetric conductance matrix.

    ``P_ij = W_ij / sum_k W_ik`` with ``mu_i`` proportional to the row sum.
    The off-diagonal pattern keeps a Hamiltonian cycle so the chain is
    irreducible whatever ``density`` is.
    """
    rng = np.random.default_rng(rng)
    W = rng.exponential(size=(n, n))
    if density < 1:
        W *= rng.random((n, n)) < density
        perm = rng.permutation(n)
        for a, b in zip(perm, np.roll(perm, 1)):
            W[a, b] = W[a, b] or rng.exponential()
    W = np.triu(W) + np.triu(W, 1).T
    rows = W.sum(axis=1)
    P = W / rows[:, None]
    mu = rows / rows.sum()
    chain = FiniteChain(tuple(range(n)), mu, P, reversible=True)
    if laziness is not None:
        chain = lazy(chain, laziness)
        chain = FiniteChain(chain.states, chain.mu, chain.P, reversible=True)
    return chain


# ---------------------------------------------------------------------------
# the polynomial jump chain


def jump_chain(a: float, b: float, grid_max: float = 1e6, grid_step: float = 1.05) -> FiniteChain:
    """Grid version of the chain ``P(x, .) = w(x) nu + (1 - w(x)) delta_x``.

    ``nu`` has density ``(a - 1) x^{-a}`` on ``[1, inf)`` and ``w(x) = x^{-b}``.
    The grid is geometric with ratio ``grid_step`` up to ``grid_max``;
    each grid point carries the ``nu``-mass of its cell, renormalised.  The
    discrete invariant law is ``nu_i / w(x_i)`` normalised, and the
    discarded tail masses are stored in ``info``.
    """
    if not a > 1:
        raise ValueError("need a > 1")
    if not 0 < b < a - 1:
        raise ValueError("need 0 < b < a - 1")
    if grid_step <= 1 or grid_max <= 1:
        raise ValueError("need grid_step > 1 and grid_max > 1")
    m = int(math.floor(math.log(grid_max) / math.log(grid_step)))
    x = grid_step ** np.arange(m + 1)
    edges = np.append(x, grid_max) if x[-1] < grid_max else np.append(x[:-1], grid_max)
    x = edges[:-1]
    tail = edges ** (-(a - 1))
    nu = tail[:-1] - tail[1:]
    nu_total = nu.sum()
    nu = nu / nu_total
    w = x ** (-b)
    mu = nu / w
    mu = mu / mu.sum()
    n = x.size
    P = w[:, None] * nu[None, :]
    P[np.diag_indices(n)] += 1 - w
    chain = FiniteChain(tuple(x.tolist()), mu, P, reversible=True)
    chain.info.update(a=a, b=b, x=x, nu=nu, w=w,
                      nu_tail_discarded=float(grid_max ** (-(a - 1))),
                      mu_tail_discarded=float(grid_max ** (-(a - b - 1))))
    return chain


def jump_drift_check(chain: FiniteChain, k: float) -> dict:
    """Check ``PV <= V - V^alpha / 2 + nu(V) 1_C`` with ``V = x^k``.

    ``alpha = 1 - b/k`` and ``C = [1, x0]`` with
    ``x0 = (2 nu(V))^{1/(alpha k)}``.  Uses the grid's own ``nu(V)`` and
    also reports the continuous value ``(a - 1)/(a - k - 1)``.
    """
    info = chain.info
    a, b, x, nu = info["a"], info["b"], info["x"], info["nu"]
    if not b < k < a - 1:
        raise ValueError("need b < k < a - 1")
    alpha = 1 - b / k
    V = x ** k
    nuV = float(nu @ V)
    x0 = (2 * nuV) ** (1 / (alpha * k))
    PV = chain.P @ V
    rhs = V - 0.5 * V ** alpha + nuV * (x <= x0)
    slack = rhs - PV
    return {"holds": bool(np.all(slack >= -1e-9 * np.maximum(1, V))), "alpha": alpha,
            "nu_V_grid": nuV, "nu_V_continuous": (a - 1) / (a - k - 1), "x0": x0,
            "min_slack": float(slack.min())}


# ---------------------------------------------------------------------------
# pseudo-marginal lift


def pm_lift(marginal: FiniteChain, varpi, weights) -> FiniteChain:
    """Pseudo-marginal chain on ``X x W``.

    Parameters
    ----------
    marginal : FiniteChain
        Its kernel is the ``nu``-reversible proposal ``q`` and its ``mu`` is ``nu``.
    varpi : array_like
        Density ``d pi / d nu`` up to a constant.
    weights : sequence of (atoms, probs)
        Per-state weight law ``Q_x``; each must have unit mean.

    From ``(x, w)`` propose ``y ~ q(x, .)``, ``u ~ Q_y`` and accept with
    probability ``min(1, varpi(y) u / (varpi(x) w))``.  The invariant law
    is ``pi(x) Q_x(w) w``.
    """
    q, nu = marginal.P, marginal.mu
    if not marginal.is_reversible():
        raise ValueError("the proposal must be reversible with respect to nu")
    varpi = np.asarray(varpi, float)
    varpi = varpi / float(nu @ varpi)
    if len(weights) != marginal.n:
        raise ValueError("one weight law per marginal state")
    laws = []
    for atoms, probs in weights:
        atoms, probs = np.asarray(atoms, float), np.asarray(probs, float)
        if abs(probs.sum() - 1) > 1e-10 or np.any(probs < 0) or np.any(atoms < 0):
            raise ValueError("weight laws must be probability vectors on [0, inf)")
        if abs(atoms @ probs - 1) > 1e-10:
            raise ValueError("weights must have unit mean")
        laws.append((atoms, probs))
    states, xs, ws, qs = [], [], [], []
    for i, (atoms, probs) in enumerate(laws):
        for w, p in zip(atoms, probs):
            states.append((marginal.states[i], float(w)))
            xs.append(i)
            ws.append(w)
            qs.append(p)
    xs, ws, qs = np.array(xs), np.array(ws), np.array(qs)
    pi = varpi * nu
    N = len(states)
    P = np.zeros((N, N))
    for s in range(N):
        x, w = xs[s], ws[s]
        for t in range(N):
            y, u = xs[t], ws[t]
            if q[x, y] == 0 or qs[t] == 0:
                continue
            if w == 0:
                acc = 1.0
            else:
                acc = min(1.0, varpi[y] * u / (varpi[x] * w))
            P[s, t] += q[x, y] * qs[t] * acc
        P[s, s] += 1 - P[s].sum()
    mu = pi[xs] * qs * ws
    support_restricted = bool(np.any(mu == 0))
    chain = FiniteChain(states, mu / mu.sum(), P, support_restricted=support_restricted)
    chain.info.update(varpi=varpi, x_index=xs, w=ws, level=varpi[xs] * ws)
    return chain


def pareto_weight_atoms(alpha: float, k: int = 8):
    """``k`` equal-probability atoms of a unit-mean Pareto law.

    The scale is ``x_m = 1 - 1/alpha``; each atom is the conditional mean
    of its quantile bin, so the discrete law keeps the unit mean exactly.
    """
    if not alpha > 1:
        raise ValueError("need alpha > 1 for a finite mean")
    xm = 1 - 1 / alpha
    p = np.linspace(0.0, 1.0, k + 1)
    with np.errstate(divide="ignore"):
        edges = xm * (1 - p) ** (-1 / alpha)
    # E[X; l < X < h] = alpha xm^alpha (l^{1-alpha} - h^{1-alpha}) / (alpha - 1)
    upper = np.where(np.isinf(edges), 0.0, edges ** (1 - alpha))
    partial = alpha * xm ** alpha * (upper[:-1] - upper[1:]) / (alpha - 1)
    atoms = partial * k
    return atoms, np.full(k, 1.0 / k)


def pm_conductance_bound(lifted: FiniteChain, v_grid, max_states: int = SUBSET_CAP) -> dict:
    """Exact profile of a lifted chain against ``sup(varpi) / psi^-(v)``.

    ``psi^-(v) = sup{s : mu(varpi(x) w >= s) >= v}``.  Returns both
    functions on ``v_grid`` and whether the exact profile stays below the
    bound everywhere.
    """
    v_grid = np.asarray(v_grid, float)
    level = lifted.info["level"]
    wbar = float(np.max(lifted.info["varpi"]))
    levels = np.unique(level)[::-1]
    mass_at = np.array([lifted.mu[level >= s].sum() for s in levels])
    psi_inv = np.empty_like(v_grid)
    for k, v in enumerate(v_grid):
        ok = mass_at >= v * (1 - 1e-12)
        psi_inv[k] = levels[np.argmax(ok)] if ok.any() else 0.0
    with np.errstate(divide="ignore"):
        bound = np.where(psi_inv > 0, wbar / psi_inv, math.inf)
    phi = weak_conductance_exact(lifted, max_states=max_states)
    exact = phi(v_grid)
    return {"v": v_grid, "exact": exact, "bound": bound, "psi_inverse": psi_inv,
            "wbar": wbar, "holds": bool(np.all(exact <= bound * (1 + 1e-12))), "profile": phi}


# ---------------------------------------------------------------------------
# duality


def duality_check(chain: FiniteChain, n: int, rng=None, n_laws: int = 20,
                  max_states: int = 15) -> dict:
    """Both sides of the oscillation/L1 duality at time ``n``.

    Left side: ``max_{f in {0,1}^S} ||P^n f - mu(f)||``, which is the sup
    over the unit oscillation ball because the objective is convex and
    shift invariant.  Right side: half the sup over the unit L2 ball of
    ``||(P*)^n g - mu(g)||_1``, computed per sign pattern ``s`` as the
    closed-form maximum of the linear functional ``g -> <s, B g>`` with
    ``B = (P*)^n - 1 mu``.  Also checks the total-variation bound
    ``||nu P^n - mu||_TV <= lhs * chi2(nu, mu)^{1/2}`` on random laws.
    """
    S = chain.n
    if S > max_states:
        raise StateCapError(f"duality enumeration is capped at {max_states} states")
    mu = chain.mu
    Pn = np.linalg.matrix_power(chain.P, n)
    Bstar = np.linalg.matrix_power(_adjoint_matrix(chain), n) - np.outer(np.ones(S), mu)
    verts = np.array(list(itertools.product((0.0, 1.0), repeat=S)))
    G = verts @ Pn.T
    G = G - (G @ mu)[:, None]
    lhs = float(np.sqrt(np.max((G ** 2) @ mu)))
    signs = 2 * verts - 1
    c = (signs * mu) @ Bstar                 # c_j = sum_i mu_i s_i B_ij
    rhs = 0.5 * float(np.sqrt(np.max((c ** 2 / mu).sum(axis=1))))
    rng = np.random.default_rng(rng)
    tv_ok = True
    worst = -math.inf
    for _ in range(n_laws):
        law = rng.dirichlet(np.ones(S))
        tv = 0.5 * float(np.abs(law @ Pn - mu).sum())
        chi2 = float(np.sum(law ** 2 / mu) - 1)
        gap = tv - lhs * math.sqrt(max(chi2, 0.0))
        worst = max(worst, gap)
        if gap > 1e-12:
            tv_ok = False
    return {"n": n, "lhs": lhs, "rhs": rhs, "abs_diff": abs(lhs - rhs),
            "agree": abs(lhs - rhs) <= 1e-9, "tv_bound_holds": tv_ok, "worst_tv_gap": worst}


def compare_measures_bound(mu, nu, f, s: float) -> float:
    """``s var_nu(f) + mu(w > s) osc(f)^2`` with ``w = d mu / d nu``."""
    mu, nu, f = (np.asarray(a, float) for a in (mu, nu, f))
    if np.any((nu == 0) & (mu > 0)):
        raise ValueError("mu must be absolutely continuous with respect to nu")
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(nu > 0, mu / nu, 0.0)
    osc = float(np.ptp(f))
    tail = float(mu[w > s].sum())
    if math.isinf(s):
        return math.inf if _var(nu, f) > 0 else 0.0
    return s * _var(nu, f) + tail * osc ** 2
