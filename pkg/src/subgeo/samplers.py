"""Seeded Monte Carlo for the chains analysed elsewhere in the package.

Every replica owns a Philox stream keyed by ``(seed, stream, replica)``,
so results do not depend on chunking or scheduling.  Within a replica the
draws for all steps are taken in one block; kernels are then advanced in
lockstep across a chunk of replicas.

Kernels
-------
``rwm``       Gaussian random walk Metropolis on a :class:`TargetSpec`.
``jump``      ``P(x, .) = x^{-b} nu + (1 - x^{-b}) delta_x`` on ``[1, inf)``,
              stored in log coordinates, simulated without truncation.
``pm_rwm``    pseudo-marginal RWM with i.i.d. positive unit-mean weights.
``imh``       independent Metropolis-Hastings.
``finite``    a :class:`~subgeo.finite_chain.FiniteChain`.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy import stats

from ._io import rows_to_csv
from .finite_chain import DecayCurve, FiniteChain, fit_decay_exponent
from .heavytail_rwm import TargetSpec, smoothness_constant

__all__ = [
    "SimConfig",
    "Ensemble",
    "replica_generator",
    "potential",
    "sample_target",
    "run_rwm",
    "run_jump_chain",
    "run_pm",
    "run_imh",
    "run_finite",
    "simulate",
    "empirical_decay",
    "jump_decay_coupled",
    "jump_tv_proxy",
    "batch_means_asvar",
    "rejection_streaks",
]

CHUNK = 2048
N_BOOT = 400
STREAM_MAIN, STREAM_OUTER, STREAM_INNER, STREAM_BOOT, STREAM_INIT = 0, 1, 2, 3, 4


def replica_generator(seed: int, stream: int, *index: int) -> np.random.Generator:
    """Independent Philox generator for one replica."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(stream), *map(int, index)])))


# ---------------------------------------------------------------------------
# configuration


@dataclass
class SimConfig:
    """Simulation settings.

    ``target`` is a :class:`TargetSpec` dict, ``{"family": "jump", "a": .., "b": ..}``
    or ``{"family": "finite", "chain": <chain JSON>}``.  ``kernel`` is one of
    ``{"type": "rwm", "sigma": s}`` (or ``"varsigma"``),
    ``{"type": "pm_rwm", "sigma": s, "weights": {"law": "pareto", "alpha": a}}``,
    ``{"type": "imh", "proposal": {"family": "gaussian", "scale": s}}``,
    ``{"type": "jump"}`` or ``{"type": "finite"}``.  ``init`` is
    ``{"type": "warm"}``, ``{"type": "point", "x": ...}`` or
    ``{"type": "offset", "x": ...}`` (a warm draw shifted by ``x``).
    """

    target: dict
    kernel: dict
    n_steps: int = 1000
    n_replicas: int = 1
    seed: int = 0
    init: dict = field(default_factory=lambda: {"type": "warm"})
    record_states: bool = True

    def __post_init__(self):
        if self.n_steps < 0 or self.n_replicas < 1:
            raise ValueError("need n_steps >= 0 and n_replicas >= 1")
        if "type" not in self.kernel:
            raise ValueError("kernel needs a type")
        if self.kernel["type"] not in ("rwm", "pm_rwm", "imh", "jump", "finite"):
            raise ValueError(f"unknown kernel type {self.kernel['type']!r}")
        if self.init.get("type", "warm") not in ("warm", "point", "offset"):
            raise ValueError("init type must be warm, point or offset")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        known = {"target", "kernel", "n_steps", "n_replicas", "seed", "init", "record_states"}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config keys {sorted(extra)}")
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "SimConfig":
        return cls.from_dict(json.loads(text))


@dataclass
class Ensemble:
    """Trajectories of a replica ensemble.

    ``states`` has shape ``(replicas, steps + 1, dim)`` (``None`` if not
    recorded) and ``accepted`` has shape ``(replicas, steps)``; for the
    jump chain ``accepted`` marks jump events.  ``extra`` holds kernel
    specific records such as pseudo-marginal weights.
    """

    states: np.ndarray | None
    accepted: np.ndarray
    final: np.ndarray
    config: SimConfig | None = None
    extra: dict = field(default_factory=dict)

    @property
    def acceptance_rate(self) -> float:
        return float(self.accepted.mean()) if self.accepted.size else float("nan")

    def to_csv(self) -> str:
        if self.states is None:
            raise ValueError("states were not recorded")
        R, S1, dim = self.states.shape
        header = ["replica", "step"] + [f"x{k}" for k in range(dim)] + ["accepted"]
        rows = []
        for r in range(R):
            for s in range(S1):
                acc = "" if s == 0 else int(self.accepted[r, s - 1])
                rows.append([r, s, *(float(v) for v in self.states[r, s]), acc])
        return rows_to_csv(header, rows)


# ---------------------------------------------------------------------------
# targets


def potential(spec: TargetSpec) -> Callable[[np.ndarray], np.ndarray]:
    """Potential ``U`` (up to a constant) acting on arrays of shape ``(n, d)``."""
    fam = spec.family
    if fam == "student_t":
        k = (spec.d + spec.tau) / 2
        return lambda x: k * np.log(spec.tau + np.sum(x * x, axis=-1))
    if fam == "product_student":
        k = (1 + spec.eta) / 2
        return lambda x: k * np.sum(np.log1p(x * x), axis=-1)
    if fam == "subexp_product":
        return lambda x: np.sum((spec.tau + x * x) ** (spec.eta / 2), axis=-1)
    if fam == "subexp_radial":
        return lambda x: (spec.tau + np.sum(x * x, axis=-1)) ** (spec.eta / 2)
    if fam == "cauchy_type":
        return lambda x: (spec.d + spec.eta) * np.log1p(np.sqrt(np.sum(x * x, axis=-1)))
    raise ValueError(f"no potential for family {fam}")


def _tabulated_sampler(logdens: Callable[[np.ndarray], np.ndarray], hi: float = 1e4, num: int = 20001):
    """Inverse-cdf sampler for a density on ``[0, hi]`` tabulated on a log grid."""
    grid = np.concatenate([[0.0], np.geomspace(1e-8, hi, num)])
    ld = logdens(grid)
    dens = np.exp(ld - np.max(ld))
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(grid))])
    cdf /= cdf[-1]
    return lambda u: np.interp(u, cdf, grid)


def sample_target(spec: TargetSpec, rng: np.random.Generator, size: int) -> np.ndarray:
    """Draws from the target, shape ``(size, d)``.

    Exact for student_t, product_student and cauchy_type; the
    sub-exponential families use a tabulated inverse cdf.
    """
    d = spec.d
    fam = spec.family
    if fam == "student_t":
        z = rng.standard_normal((size, d))
        g = rng.chisquare(spec.tau, size)
        return z / np.sqrt(g / spec.tau)[:, None]
    if fam == "product_student":
        return rng.standard_t(spec.eta, (size, d)) / math.sqrt(spec.eta)
    if fam == "cauchy_type":
        bta = rng.beta(d, spec.eta, size)
        radius = bta / (1 - bta)
        return _random_direction(rng, size, d) * radius[:, None]
    if fam == "subexp_product":
        inv = _tabulated_sampler(lambda x: -(spec.tau + x * x) ** (spec.eta / 2))
        mag = inv(rng.random((size, d)))
        sign = np.where(rng.random((size, d)) < 0.5, -1.0, 1.0)
        return mag * sign
    if fam == "subexp_radial":
        inv = _tabulated_sampler(
            lambda r: (d - 1) * np.log(np.maximum(r, 1e-300)) - (spec.tau + r * r) ** (spec.eta / 2))
        radius = inv(rng.random(size))
        return _random_direction(rng, size, d) * radius[:, None]
    raise ValueError(f"cannot sample family {fam}")


def _random_direction(rng, size, d):
    z = rng.standard_normal((size, d))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def _target_spec(config: SimConfig) -> TargetSpec:
    t = dict(config.target)
    return TargetSpec.from_dict(t)


def _rwm_sigma(kernel: dict, spec: TargetSpec) -> float:
    if "sigma" in kernel:
        sigma = float(kernel["sigma"])
    elif "varsigma" in kernel:
        sigma = float(kernel["varsigma"]) / math.sqrt(smoothness_constant(spec) * spec.d)
    else:
        raise ValueError("rwm kernels need sigma or varsigma")
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    return sigma


def _initial_states(config: SimConfig, sampler, dim: int) -> np.ndarray:
    init = config.init
    kind = init.get("type", "warm")
    out = np.empty((config.n_replicas, dim))
    for r in range(config.n_replicas):
        rng = replica_generator(config.seed, STREAM_INIT, r)
        if kind == "point":
            out[r] = np.broadcast_to(np.asarray(init["x"], float), (dim,))
        else:
            out[r] = sampler(rng, 1)[0]
            if kind == "offset":
                out[r] += np.asarray(init["x"], float)
    return out


# ---------------------------------------------------------------------------
# lockstep driver


def _drive(config: SimConfig, x0: np.ndarray, draw, step, extra_init=None):
    """Run all replicas; ``draw(rng, S)`` returns one replica's step inputs
    as a tuple of arrays with leading dimension ``S``, and
    ``step(x, aux, inputs_t)`` advances a chunk by one step, returning
    ``(x, aux, accepted)``."""
    R, S = config.n_replicas, config.n_steps
    dim = x0.shape[1]
    states = np.empty((R, S + 1, dim)) if config.record_states else None
    accepted = np.zeros((R, S), bool)
    final = np.empty_like(x0)
    aux_all = []
    for lo in range(0, R, CHUNK):
        hi = min(lo + CHUNK, R)
        per = [draw(replica_generator(config.seed, STREAM_MAIN, r), S) for r in range(lo, hi)]
        inputs = [np.stack([p[k] for p in per]) for k in range(len(per[0]))] if per else []
        x = x0[lo:hi].copy()
        aux = None if extra_init is None else extra_init(lo, hi)
        if states is not None:
            states[lo:hi, 0] = x
        trace = []
        for t in range(S):
            x, aux, acc = step(x, aux, [a[:, t] for a in inputs])
            accepted[lo:hi, t] = acc
            if states is not None:
                states[lo:hi, t + 1] = x
            if aux is not None:
                trace.append(np.copy(aux))
        final[lo:hi] = x
        aux_all.append(np.stack(trace, axis=1) if trace else None)
    return states, accepted, final, aux_all


def run_rwm(config: SimConfig) -> Ensemble:
    """Random walk Metropolis with proposal ``N(x, sigma^2 I)``.

    Acceptance is ``min(1, exp(U(x) - U(y)))`` evaluated in log space.
    """
    spec = _target_spec(config)
    U = potential(spec)
    sigma = _rwm_sigma(config.kernel, spec)
    d = spec.d
    x0 = _initial_states(config, lambda rng, n: sample_target(spec, rng, n), d)

    def draw(rng, S):
        return rng.standard_normal((S, d)), rng.random(S)

    def step(x, aux, inp):
        z, u = inp
        y = x + sigma * z
        ux, uy = U(x), U(y)
        if not np.all(np.isfinite(uy)) or not np.all(np.isfinite(ux)):
            raise FloatingPointError("non-finite potential at a visited point")
        acc = np.log(np.maximum(u, 1e-300)) < np.minimum(0.0, ux - uy)
        x = np.where(acc[:, None], y, x)
        return x, aux, acc

    states, accepted, final, _ = _drive(config, x0, draw, step)
    return Ensemble(states, accepted, final, config, {"sigma": sigma})


def run_jump_chain(a: float, b: float, config: SimConfig) -> Ensemble:
    """Exact simulation of the jump chain on ``[1, inf)``.

    States are ``log x``.  From ``x`` the chain jumps with probability
    ``x^{-b}`` to a fresh draw ``x' = (1 - U)^{-1/(a-1)}`` from ``nu``.
    ``accepted`` records the jump events.
    """
    if not a > 1 or not 0 < b < a - 1:
        raise ValueError("need a > 1 and 0 < b < a - 1")
    k_mu = a - b - 1

    def sample_mu(rng, n):
        return (-np.log1p(-rng.random(n)) / k_mu)[:, None]

    if config.init.get("type") == "point":
        x = np.asarray(config.init["x"], float)
        if np.any(x < 1):
            raise ValueError("jump chain states must be >= 1")
        cfg_init = {"type": "point", "x": np.log(x).tolist()}
        config_log = SimConfig(config.target, config.kernel, config.n_steps, config.n_replicas,
                               config.seed, cfg_init, config.record_states)
    else:
        config_log = config
    y0 = _initial_states(config_log, sample_mu, 1)

    def draw(rng, S):
        return rng.random(S), rng.random(S)

    def step(y, aux, inp):
        u1, u2 = inp
        jump = u1 < np.exp(-b * y[:, 0])
        fresh = -np.log1p(-u2) / (a - 1)
        y = np.where(jump[:, None], fresh[:, None], y)
        return y, aux, jump

    states, accepted, final, _ = _drive(config, y0, draw, step)
    return Ensemble(states, accepted, final, config, {"log_coordinates": True, "a": a, "b": b})


def _weight_law(spec: dict):
    """Sampler ``u -> w`` by inverse cdf, its mean, and the size-biased sampler."""
    law = spec.get("law", "pareto")
    if law == "pareto":
        alpha = float(spec["alpha"])
        if not alpha > 1:
            raise ValueError("Pareto weights need alpha > 1")
        xm = float(spec.get("x_m", 1 - 1 / alpha))
        mean = xm * alpha / (alpha - 1)
        return (lambda u: xm * (1 - u) ** (-1 / alpha), mean,
                lambda u: xm * (1 - u) ** (-1 / (alpha - 1)))
    if law == "const":
        return (lambda u: np.ones_like(u), 1.0, lambda u: np.ones_like(u))
    if law == "two_point":
        lo, hi = float(spec.get("low", 0.5)), float(spec.get("high", 1.5))
        p = float(spec.get("p_low", 0.5))
        mean = p * lo + (1 - p) * hi
        q_lo = p * lo / mean
        return (lambda u: np.where(u < p, lo, hi), mean, lambda u: np.where(u < q_lo, lo, hi))
    raise ValueError(f"unknown weight law {law!r}")


def run_pm(config: SimConfig) -> Ensemble:
    """Pseudo-marginal RWM on ``(x, w)``.

    Weights are i.i.d. draws ``u ~ Q`` with unit mean; a move to ``(y, u)``
    is accepted with probability ``min(1, pi(y) u / (pi(x) w))``.  The warm
    start draws ``x`` from the target and ``w`` from the size-biased law.
    ``extra["weights"]`` holds the weight trajectory.

    The first two draw blocks (proposal normals, accept uniforms) are laid
    out as in :func:`run_rwm`, so the two samplers share proposals for a
    common seed.
    """
    spec = _target_spec(config)
    U = potential(spec)
    sigma = _rwm_sigma(config.kernel, spec)
    sample_w, mean, sample_biased = _weight_law(config.kernel.get("weights", {"law": "const"}))
    if abs(mean - 1) > 1e-10:
        raise ValueError(f"weights must have unit mean, got {mean}")
    d = spec.d
    x0 = _initial_states(config, lambda rng, n: sample_target(spec, rng, n), d)
    w0 = np.empty(config.n_replicas)
    for r in range(config.n_replicas):
        w0[r] = float(sample_biased(replica_generator(config.seed, STREAM_INIT, r, 1).random()))

    def draw(rng, S):
        return rng.standard_normal((S, d)), rng.random(S), rng.random(S)

    def step(x, w, inp):
        z, u, uw = inp
        y = x + sigma * z
        wy = sample_w(uw)
        with np.errstate(divide="ignore"):
            log_r = U(x) - U(y) + np.log(wy) - np.log(w)
        acc = np.log(np.maximum(u, 1e-300)) < np.minimum(0.0, log_r)
        x = np.where(acc[:, None], y, x)
        w = np.where(acc, wy, w)
        return x, w, acc

    states, accepted, final, aux = _drive(config, x0, draw, step, extra_init=lambda lo, hi: w0[lo:hi].copy())
    weights = np.concatenate([w0[:, None], np.concatenate(aux, axis=0)], axis=1) if config.n_steps else w0[:, None]
    return Ensemble(states, accepted, final, config,
                    {"sigma": sigma, "weights": weights, "streaks": rejection_streaks(accepted)})


def rejection_streaks(accepted: np.ndarray) -> list[np.ndarray]:
    """Lengths of maximal runs of rejections, per replica."""
    out = []
    for row in np.atleast_2d(accepted):
        padded = np.concatenate([[True], row, [True]])
        idx = np.nonzero(padded)[0]
        runs = np.diff(idx) - 1
        out.append(runs[runs > 0])
    return out


def _proposal(spec: dict, d: int):
    fam = spec.get("family", "gaussian")
    scale = float(spec.get("scale", 1.0))
    if fam == "gaussian":
        return (lambda rng, n: scale * rng.standard_normal((n, d)),
                lambda x: stats.norm.logpdf(x, scale=scale).sum(axis=-1))
    if fam == "student_t":
        df = float(spec["tau"])
        dist = stats.multivariate_t(loc=np.zeros(d), shape=scale ** 2 * np.eye(d), df=df)
        return (lambda rng, n: dist.rvs(size=n, random_state=rng).reshape(n, d),
                lambda x: np.atleast_1d(dist.logpdf(x)))
    raise ValueError(f"unknown proposal family {fam!r}")


def target_logpdf(spec: TargetSpec) -> Callable[[np.ndarray], np.ndarray]:
    """Normalised log density for targets with a known normaliser."""
    d = spec.d
    if spec.family == "student_t":
        dist = stats.multivariate_t(loc=np.zeros(d), shape=np.eye(d), df=spec.tau)
        return lambda x: np.atleast_1d(dist.logpdf(x))
    if spec.family == "product_student":
        eta = spec.eta
        return lambda x: (stats.t.logpdf(x * math.sqrt(eta), eta) + 0.5 * math.log(eta)).sum(axis=-1)
    raise ValueError(f"no normalised density for {spec.family}")


def run_imh(config: SimConfig) -> Ensemble:
    """Independent Metropolis-Hastings with importance weight ``w = pi / nu``.

    Acceptance ``min(1, w(y) / w(x))``.  ``extra["log_w"]`` records
    ``log w`` along each trajectory (normalised when the target has a
    known normaliser) so holding frequencies can be compared with
    ``1 - 1/w(x)``.
    """
    spec = _target_spec(config)
    d = spec.d
    prop_sample, prop_logpdf = _proposal(config.kernel.get("proposal", {}), d)
    try:
        logpi = target_logpdf(spec)
        normalised = True
    except ValueError:
        U = potential(spec)
        logpi = lambda x: -U(x)  # noqa: E731
        normalised = False

    def logw(x):
        return logpi(x) - prop_logpdf(x)

    x0 = _initial_states(config, lambda rng, n: sample_target(spec, rng, n), d)

    def draw(rng, S):
        return prop_sample(rng, S), rng.random(S)

    def step(x, aux, inp):
        y, u = inp
        acc = np.log(np.maximum(u, 1e-300)) < np.minimum(0.0, logw(y) - logw(x))
        return np.where(acc[:, None], y, x), aux, acc

    states, accepted, final, _ = _drive(config, x0, draw, step)
    extra = {"normalised": normalised}
    if states is not None:
        extra["log_w"] = logw(states.reshape(-1, d)).reshape(states.shape[:2])
    return Ensemble(states, accepted, final, config, extra)


def _chain_from_target(target: dict) -> FiniteChain:
    if "chain" not in target:
        raise ValueError("finite targets need a 'chain' entry")
    return FiniteChain.from_dict(target["chain"])


def run_finite(config: SimConfig, chain: FiniteChain | None = None) -> Ensemble:
    """Simulate a finite chain; states are integer indices stored as floats."""
    chain = chain or _chain_from_target(config.target)
    cum = np.cumsum(chain.P, axis=1)
    cum[:, -1] = 1.0

    def sample_mu(rng, n):
        return rng.choice(chain.n, size=n, p=chain.mu)[:, None].astype(float)

    x0 = _initial_states(config, sample_mu, 1)

    def draw(rng, S):
        return (rng.random(S),)

    def step(x, aux, inp):
        (u,) = inp
        i = x[:, 0].astype(int)
        j = (cum[i] <= u[:, None]).sum(axis=1)
        return j[:, None].astype(float), aux, j != i

    states, accepted, final, _ = _drive(config, x0, draw, step)
    return Ensemble(states, accepted, final, config)


def simulate(config: SimConfig) -> Ensemble:
    """Dispatch on the kernel type."""
    kind = config.kernel["type"]
    if kind == "rwm":
        return run_rwm(config)
    if kind == "pm_rwm":
        return run_pm(config)
    if kind == "imh":
        return run_imh(config)
    if kind == "jump":
        return run_jump_chain(float(config.target["a"]), float(config.target["b"]), config)
    return run_finite(config)


# ---------------------------------------------------------------------------
# decay estimation


def _bootstrap_ci(contrib: np.ndarray, seed: int, level: float = 0.95):
    """Percentile bootstrap over outer draws; ``contrib`` is ``(outer, n)``."""
    rng = replica_generator(seed, STREAM_BOOT, 0)
    N = contrib.shape[0]
    boots = np.empty((N_BOOT, contrib.shape[1]))
    batch = max(1, min(N_BOOT, 2 ** 24 // max(N, 1)))
    for k in range(0, N_BOOT, batch):
        counts = rng.multinomial(N, np.full(N, 1.0 / N), size=min(batch, N_BOOT - k))
        boots[k:k + counts.shape[0]] = counts @ contrib / N
    lo, hi = np.quantile(boots, [(1 - level) / 2, 1 - (1 - level) / 2], axis=0)
    return lo, hi


def empirical_decay(config: SimConfig, f: Callable[[np.ndarray], np.ndarray], n_grid,
                    n_outer: int = 256, n_inner: int = 256, mu_f: float | None = None) -> DecayCurve:
    """Nested Monte Carlo estimate of ``||P^n f - mu(f)||^2``.

    Outer draws ``X_0 ~ mu``; for each, ``n_inner`` independent runs give
    the conditional mean ``g`` and variance ``s^2`` of ``f(X_n)``.  The
    estimate averages ``(g - m)^2 - s^2 / n_inner``, which is unbiased when
    ``m = mu(f)`` is supplied; otherwise ``m`` is the grand mean and the
    estimate carries an ``O(1 / n_outer)`` bias noted in the result.
    Confidence bands come from an outer bootstrap.

    For the jump chain use :func:`jump_decay_coupled`, whose coupled
    differences resolve far smaller values.
    """
    n_grid = np.unique(np.asarray(n_grid, int))
    if n_outer < 20 or n_inner < 2:
        raise ValueError("need at least 20 outer and 2 inner replicas for a confidence band")
    kind = config.kernel["type"]
    n_max = int(n_grid.max())
    g = np.empty((n_outer, n_grid.size))
    s2 = np.empty((n_outer, n_grid.size))
    runner = {"rwm": run_rwm, "pm_rwm": run_pm, "imh": run_imh, "finite": run_finite}.get(kind)
    if runner is None:
        raise ValueError("use jump_decay_coupled for the jump chain")
    # outer starting points from the stationary law
    warm = SimConfig(config.target, config.kernel, 0, n_outer, config.seed, {"type": "warm"}, False)
    x0 = simulate(warm).final
    for i in range(n_outer):
        inner = SimConfig(config.target, config.kernel, n_max, n_inner,
                          config.seed * 1_000_003 + i + 1, {"type": "point", "x": x0[i].tolist()}, True)
        ens = runner(inner)
        vals = f(ens.states[:, n_grid, :])
        g[i] = vals.mean(axis=0)
        s2[i] = vals.var(axis=0, ddof=1)
    m = g.mean(axis=0) if mu_f is None else mu_f
    contrib = (g - m) ** 2 - s2 / n_inner
    lo, hi = _bootstrap_ci(contrib, config.seed)
    note = "unbiased (known mu(f))" if mu_f is not None else "plug-in mean; O(1/n_outer) bias"
    return DecayCurve(n_grid, contrib.mean(axis=0), lower=lo, upper=hi, note=note)


def _pareto_log(u, shape):
    return -np.log1p(-u) / shape


def jump_decay_coupled(a: float, b: float, f_log: Callable[[np.ndarray], np.ndarray], n_max: int,
                       n_outer: int = 256, n_inner: int = 256, seed: int = 0,
                       kappa: float | None = None) -> DecayCurve:
    """Nested Monte Carlo for the jump chain with coupled inner differences.

    Outer draws ``X_0`` come from a Pareto(``kappa``) proposal on
    ``[1, inf)``, heavier than ``mu`` and reweighted by the bounded ratio
    ``mu / q``.  Each inner replica runs the chain from ``X_0`` together
    with a copy started at ``X_0' ~ mu``, both driven by the same
    uniforms; once one jump moves both they coincide.  The inner mean of
    ``D_n = f(X_n) - f(X_n')`` is unbiased for ``P^n f(X_0) - mu(f)``, so
    ``mean_j(D)^2 - var_j(D) / n_inner`` is unbiased for its square.

    ``f_log`` acts on log coordinates.  Returns values for ``n = 0..n_max``
    with outer-bootstrap bands.
    """
    if not a > 1 or not 0 < b < a - 1:
        raise ValueError("need a > 1 and 0 < b < a - 1")
    if n_outer < 20 or n_inner < 2:
        raise ValueError("need at least 20 outer and 2 inner replicas for a confidence band")
    k_mu = a - b - 1
    kappa = min(0.5, k_mu / 2) if kappa is None else kappa
    if not 0 < kappa <= k_mu:
        raise ValueError("kappa must lie in (0, a - b - 1] for bounded weights")
    contrib = np.empty((n_outer, n_max + 1))
    weights = np.empty(n_outer)
    for i in range(n_outer):
        y0 = float(_pareto_log(replica_generator(seed, STREAM_OUTER, i).random(), kappa))
        weights[i] = (k_mu / kappa) * math.exp(-(k_mu - kappa) * y0)
        # inner replicas, vectorised over j with one stream per (i, j)
        u = np.empty((n_inner, n_max, 2))
        y1 = np.empty(n_inner)
        for j in range(n_inner):
            rng = replica_generator(seed, STREAM_INNER, i, j)
            y1[j] = _pareto_log(rng.random(), k_mu)
            u[j] = rng.random((n_max, 2))
        ya = np.full(n_inner, y0)
        yb = y1.copy()
        D = np.empty((n_inner, n_max + 1))
        D[:, 0] = f_log(ya) - f_log(yb)
        for t in range(n_max):
            fresh = -np.log1p(-u[:, t, 1]) / (a - 1)
            ua = u[:, t, 0]
            ya = np.where(ua < np.exp(-b * ya), fresh, ya)
            yb = np.where(ua < np.exp(-b * yb), fresh, yb)
            D[:, t + 1] = f_log(ya) - f_log(yb)
        mean = D.mean(axis=0)
        var = D.var(axis=0, ddof=1)
        contrib[i] = weights[i] * (mean ** 2 - var / n_inner)
    lo, hi = _bootstrap_ci(contrib, seed)
    return DecayCurve(np.arange(n_max + 1), contrib.mean(axis=0), lower=lo, upper=hi,
                      note=f"coupled nested MC, Pareto({kappa}) outer proposal")


def jump_tv_proxy(a: float, b: float, n_max: int, x0: float = 1.0, n_replicas: int = 65536,
                  seed: int = 0, kappa: float | None = None) -> DecayCurve:
    """Coupling bound on ``||delta_x0 P^n - mu||_TV``: ``P(T > n)``.

    The chain from ``x0`` and a copy from ``X' ~ mu`` share uniforms; ``T``
    is the first step at which both jump.  ``X'`` is drawn from a
    Pareto(``kappa``) proposal with weights ``mu / q``.  This is an
    estimator of an upper bound, not of the distance itself.
    """
    k_mu = a - b - 1
    kappa = min(0.5, k_mu / 2) if kappa is None else kappa
    if x0 < 1:
        raise ValueError("x0 must be >= 1")
    y_a0 = math.log(x0)
    alive = np.empty((n_replicas, n_max + 1), bool)
    w = np.empty(n_replicas)
    for lo in range(0, n_replicas, CHUNK):
        hi = min(lo + CHUNK, n_replicas)
        u0 = np.empty(hi - lo)
        u = np.empty((hi - lo, n_max))
        for r in range(lo, hi):
            rng = replica_generator(seed, STREAM_MAIN, r)
            u0[r - lo] = rng.random()
            u[r - lo] = rng.random(n_max)
        yb = _pareto_log(u0, kappa)
        w[lo:hi] = (k_mu / kappa) * np.exp(-(k_mu - kappa) * yb)
        ya = np.full(hi - lo, y_a0)
        coupled = ya == yb
        alive[lo:hi, 0] = ~coupled
        for t in range(n_max):
            ja = u[:, t] < np.exp(-b * ya)
            jb = u[:, t] < np.exp(-b * yb)
            coupled |= ja & jb
            # a lone jump changes one position; the next common jump still merges them
            alive[lo:hi, t + 1] = ~coupled
    contrib = w[:, None] * alive
    lo_ci, hi_ci = _bootstrap_ci(contrib, seed)
    return DecayCurve(np.arange(n_max + 1), contrib.mean(axis=0), lower=lo_ci, upper=hi_ci,
                      note="coupling-time tail P(T > n), importance weighted")


# ---------------------------------------------------------------------------
# asymptotic variance


def batch_means_asvar(trajectory, f: Callable | None = None, level: float = 0.95) -> dict:
    """Batch-means estimate of ``lim n var(mean of f(X_k))`` with ``floor(sqrt(n))`` batches.

    Raises if the trajectory has fewer than 1000 points (100 batches of 10).
    """
    x = np.asarray(trajectory)
    vals = np.asarray(f(x) if f is not None else x, float).ravel()
    n = vals.size
    if n < 1000:
        raise ValueError("trajectory too short: need at least 100 batches of 10")
    n_batches = int(math.isqrt(n))
    size = n // n_batches
    used = vals[: n_batches * size].reshape(n_batches, size)
    means = used.mean(axis=1)
    est = size * means.var(ddof=1)
    dof = n_batches - 1
    lo = est * dof / stats.chi2.ppf(1 - (1 - level) / 2, dof)
    hi = est * dof / stats.chi2.ppf((1 - level) / 2, dof)
    return {"estimate": float(est), "lower": float(lo), "upper": float(hi),
            "batches": n_batches, "batch_size": size}


def fitted_exponent(curve: DecayCurve) -> float:
    """Decay exponent of a curve by least squares over the last half of its points."""
    return fit_decay_exponent(curve.n, curve.values)
