import json
import math
import warnings

import numpy as np
import pytest
from scipy import integrate, stats

from renewal_oracle import exact_decay_indicator
from subgeo import finite_chain as fc
from subgeo.heavytail_rwm import TargetSpec
from subgeo.samplers import (
    Ensemble,
    SimConfig,
    batch_means_asvar,
    empirical_decay,
    fitted_exponent,
    jump_decay_coupled,
    jump_tv_proxy,
    rejection_streaks,
    replica_generator,
    run_imh,
    run_jump_chain,
    run_pm,
    run_rwm,
    sample_target,
    simulate,
)

T1 = {"family": "student_t", "d": 1, "tau": 3.0, "use_xi_lemma": False}


def cfg(target=T1, kernel=None, **kw):
    return SimConfig(target, kernel or {"type": "rwm", "sigma": 2.0}, **kw)


def test_config_json_round_trip_and_validation():
    c = cfg(n_steps=5, n_replicas=3, seed=9, init={"type": "point", "x": [0.5]})
    assert SimConfig.from_json(c.to_json()) == c
    with pytest.raises(ValueError, match="unknown config keys"):
        SimConfig.from_dict({**json.loads(c.to_json()), "bogus": 1})
    with pytest.raises(ValueError):
        cfg(kernel={"type": "hmc"})
    with pytest.raises(ValueError):
        cfg(init={"type": "everywhere"})
    with pytest.raises(ValueError):
        cfg(n_replicas=0)


def test_replica_streams_independent_of_order():
    a = replica_generator(3, 0, 7).random(4)
    replica_generator(3, 0, 6).random(100)
    np.testing.assert_array_equal(a, replica_generator(3, 0, 7).random(4))
    assert not np.array_equal(a, replica_generator(3, 1, 7).random(4))


# ---------------------------------------------------------------------------
# target samplers


def test_student_and_product_samplers():
    rng = np.random.default_rng(0)
    x = sample_target(TargetSpec("student_t", d=1, tau=3.0, use_xi_lemma=False), rng, 20000)
    assert stats.kstest(x[:, 0], stats.t(3.0).cdf).pvalue > 1e-3
    eta = 2.5
    y = sample_target(TargetSpec("product_student", d=3, eta=eta), rng, 20000)
    # each coordinate is t_eta / sqrt(eta)
    for k in range(3):
        assert stats.kstest(y[:, k] * math.sqrt(eta), stats.t(eta).cdf).pvalue > 1e-3


def test_cauchy_type_radius():
    rng = np.random.default_rng(1)
    eta = 1.5
    x = sample_target(TargetSpec("cauchy_type", d=1, eta=eta, L=1.0), rng, 20000)
    # density (1 + |x|)^{-(1 + eta)} gives P(|X| > r) = (1 + r)^{-eta}
    assert stats.kstest(np.abs(x[:, 0]), lambda r: 1 - (1 + r) ** -eta).pvalue > 1e-3


def test_subexp_radial_tabulated_sampler():
    rng = np.random.default_rng(2)
    eta, tau = 0.5, 1.0
    x = np.abs(sample_target(TargetSpec("subexp_radial", d=1, eta=eta, tau=tau), rng, 20000)[:, 0])

    def dens(r):
        return math.exp(-(tau + r * r) ** (eta / 2))

    Z = integrate.quad(dens, 0, np.inf)[0]
    for q in (0.5, 2.0, 10.0, 50.0):
        expected = integrate.quad(dens, 0, q)[0] / Z
        assert abs(np.mean(x <= q) - expected) < 4 * math.sqrt(expected * (1 - expected) / x.size) + 1e-3


# ---------------------------------------------------------------------------
# RWM


def test_zero_step_is_constant():
    ens = run_rwm(cfg(kernel={"type": "rwm", "sigma": 0.0}, n_steps=20, n_replicas=3))
    assert np.all(ens.states == ens.states[:, :1])


def test_rwm_converges_to_student_t():
    ens = run_rwm(cfg(n_steps=300, n_replicas=4000, seed=4, init={"type": "offset", "x": [6.0]},
                      record_states=False))
    assert stats.kstest(ens.final[:, 0], stats.t(3.0).cdf).pvalue > 1e-3


def test_rwm_acceptance_lower_bound():
    target = {"family": "student_t", "d": 10, "tau": 5.0}
    ens = run_rwm(SimConfig(target, {"type": "rwm", "varsigma": 1.0}, 500, 40, 2, record_states=False))
    rates = ens.accepted.mean(axis=1)
    se = rates.std(ddof=1) / math.sqrt(rates.size)
    assert rates.mean() >= 0.5 * math.exp(-0.5) - 3 * se
    assert ens.extra["sigma"] == pytest.approx(1 / math.sqrt(3 * 10))


def test_rwm_determinism_and_chunk_independence():
    a = run_rwm(cfg(n_steps=30, n_replicas=5, seed=11))
    b = run_rwm(cfg(n_steps=30, n_replicas=5, seed=11))
    assert a.to_csv() == b.to_csv()
    c = run_rwm(cfg(n_steps=30, n_replicas=9, seed=11))
    np.testing.assert_array_equal(a.states, c.states[:5])
    assert a.to_csv().splitlines()[0] == "replica,step,x0,accepted"


def test_rwm_huge_potential_no_overflow():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        ens = run_rwm(cfg(n_steps=50, n_replicas=4, init={"type": "point", "x": [1e150]}))
    assert np.all(np.isfinite(ens.states))


def test_rwm_nonfinite_potential_raises():
    target = {"family": "subexp_radial", "d": 1, "eta": 0.5, "tau": 1.0}
    with pytest.raises(FloatingPointError):
        with np.errstate(over="ignore"):
            run_rwm(SimConfig(target, {"type": "rwm", "sigma": 1.0}, 3, 1, init={"type": "point", "x": [math.inf]}))


def _flow_balance(states, left=-1.0, right=1.0):
    x0, x1 = states[:, :-1, 0].ravel(), states[:, 1:, 0].ravel()
    ab = np.sum((x0 < left) & (x1 > right))
    ba = np.sum((x0 > right) & (x1 < left))
    return ab, ba


@pytest.mark.parametrize("kernel", [
    {"type": "rwm", "sigma": 3.0},
    {"type": "pm_rwm", "sigma": 3.0, "weights": {"law": "pareto", "alpha": 3.0}},
    {"type": "imh", "proposal": {"family": "gaussian", "scale": 2.0}},
])
def test_detailed_balance_smoke(kernel):
    ens = simulate(cfg(kernel=kernel, n_steps=50, n_replicas=2000, seed=5))
    ab, ba = _flow_balance(ens.states)
    assert ab > 500
    assert abs(ab - ba) < 4 * math.sqrt(ab + ba)


def test_finite_chain_detailed_balance_and_marginal():
    chain = fc.random_reversible_chain(4, 3, laziness=0.5)
    ens = simulate(SimConfig({"family": "finite", "chain": chain.to_dict()}, {"type": "finite"}, 40, 2000, 1))
    x0, x1 = ens.states[:, :-1, 0].astype(int).ravel(), ens.states[:, 1:, 0].astype(int).ravel()
    counts = np.zeros((4, 4))
    np.add.at(counts, (x0, x1), 1)
    assert np.all(np.abs(counts - counts.T) <= 4 * np.sqrt(counts + counts.T) + 5)
    freq = np.bincount(x1, minlength=4) / x1.size
    np.testing.assert_allclose(freq, chain.mu, atol=0.01)


# ---------------------------------------------------------------------------
# jump chain

JUMP = {"family": "jump", "a": 4.0, "b": 1.0}


def jump_cfg(**kw):
    return SimConfig(JUMP, {"type": "jump"}, **kw)


def test_jump_parameter_checks():
    with pytest.raises(ValueError):
        run_jump_chain(2.0, 1.5, jump_cfg())
    with pytest.raises(ValueError):
        run_jump_chain(4.0, 1.0, jump_cfg(init={"type": "point", "x": [0.5]}))


def test_jump_stationary_marginal():
    ens = run_jump_chain(4.0, 1.0, jump_cfg(n_steps=50, n_replicas=20000, seed=3, record_states=False))
    # log x under mu is exponential with rate a - b - 1
    assert stats.kstest(ens.final[:, 0], stats.expon(scale=1 / 2.0).cdf).pvalue > 1e-3


def test_jump_holding_frequency():
    ens = run_jump_chain(4.0, 1.0, jump_cfg(n_steps=1, n_replicas=40000, seed=8,
                                            init={"type": "point", "x": [2.0]}))
    hold = 1 - ens.accepted.mean()
    assert abs(hold - 0.5) < 4 * math.sqrt(0.25 / 40000)
    assert np.all(ens.states[:, 0, 0] == pytest.approx(math.log(2.0)))


@pytest.mark.parametrize("eps", [0.5, 0.2, 0.05])
def test_jump_sticky_set_mass(eps):
    a, b = 5.0, 1.0
    ens = run_jump_chain(a, b, SimConfig({"family": "jump", "a": a, "b": b}, {"type": "jump"}, 0, 50000, 1,
                                         record_states=False))
    # A_eps = {x^{-b} <= eps}
    frac = np.mean(np.exp(-b * ens.final[:, 0]) <= eps)
    expected = eps ** ((a - b - 1) / b)
    assert abs(frac - expected) < 4 * math.sqrt(expected * (1 - expected) / 50000)


def test_jump_coupled_decay_matches_renewal_oracle():
    a, b, n_max = 5.0, 1.0, 24
    exact, _ = exact_decay_indicator(a, b, n_max)
    curve = jump_decay_coupled(a, b, lambda y: (y <= math.log(2.0)).astype(float), n_max,
                               n_outer=256, n_inner=64, seed=3)
    width = curve.upper - curve.lower
    assert np.all(np.abs(curve.values - exact) <= 1.5 * width + 1e-12)
    covered = np.mean((curve.lower <= exact) & (exact <= curve.upper))
    assert covered >= 0.7


def test_jump_tv_proxy_exact_tail():
    # (5, 1) from x0 = 1: P(T > n) = 6 / ((n + 1)(n + 2)(n + 3))
    curve = jump_tv_proxy(5.0, 1.0, 30, n_replicas=32768, seed=2)
    n = np.arange(31)
    exact = 6 / ((n + 1) * (n + 2) * (n + 3))
    assert np.all((curve.lower <= exact * 1.02) & (exact * 0.98 <= curve.upper))
    exact_fit = fc.fit_decay_exponent(n, exact)
    # the slope over one octave carries the pointwise Monte Carlo noise
    assert fitted_exponent(curve) == pytest.approx(exact_fit, abs=0.25)


def test_decay_estimators_reject_small_ensembles():
    with pytest.raises(ValueError):
        jump_decay_coupled(4.0, 1.0, np.sign, 5, n_outer=5)
    with pytest.raises(ValueError):
        empirical_decay(cfg(), lambda x: x[..., 0], [1], n_outer=10)
    with pytest.raises(ValueError, match="jump_decay_coupled"):
        empirical_decay(jump_cfg(), lambda x: x[..., 0], [1], n_outer=20)


# ---------------------------------------------------------------------------
# pseudo-marginal


def pm_kernel(alpha, sigma=2.0):
    return {"type": "pm_rwm", "sigma": sigma, "weights": {"law": "pareto", "alpha": alpha}}


def test_pm_rejects_biased_weights():
    with pytest.raises(ValueError, match="unit mean"):
        run_pm(cfg(kernel={"type": "pm_rwm", "sigma": 1.0,
                           "weights": {"law": "pareto", "alpha": 3.0, "x_m": 1.0}}))
    with pytest.raises(ValueError):
        run_pm(cfg(kernel=pm_kernel(1.0)))


def test_pm_light_weights_approach_rwm():
    base = dict(n_steps=400, n_replicas=200, seed=6, record_states=False)
    rwm = run_rwm(cfg(**base)).acceptance_rate
    pm_heavy = run_pm(cfg(kernel=pm_kernel(1.5), **base)).acceptance_rate
    pm_light = run_pm(cfg(kernel=pm_kernel(200.0), **base)).acceptance_rate
    const = run_pm(cfg(kernel={"type": "pm_rwm", "sigma": 2.0}, **base)).acceptance_rate
    assert const == rwm
    assert pm_heavy < pm_light
    assert abs(pm_light - rwm) < 0.02


def test_pm_x_marginal():
    ens = run_pm(cfg(kernel=pm_kernel(3.0), n_steps=400, n_replicas=4000, seed=12,
                     init={"type": "offset", "x": [4.0]}, record_states=False))
    assert stats.kstest(ens.final[:, 0], stats.t(3.0).cdf).pvalue > 1e-3


def test_pm_weight_tail_slope():
    alpha = 2.5
    ens = run_pm(cfg(kernel=pm_kernel(alpha), n_steps=50, n_replicas=4000, seed=13, record_states=False))
    w = ens.extra["weights"].ravel()
    s = np.geomspace(2, 20, 8)
    tail = np.array([np.mean(w >= t) for t in s])
    slope = np.polyfit(np.log(s), np.log(tail), 1)[0]
    assert slope == pytest.approx(-(alpha - 1), abs=0.15)


def test_rejection_streaks():
    acc = np.array([[True, False, False, True, False], [False, True, True, True, True]])
    got = rejection_streaks(acc)
    assert got[0].tolist() == [2, 1] and got[1].tolist() == [1]


# ---------------------------------------------------------------------------
# IMH


def test_imh_exact_proposal_never_rejects():
    target = {"family": "student_t", "d": 2, "tau": 4.0, "use_xi_lemma": False}
    ens = run_imh(SimConfig(target, {"type": "imh", "proposal": {"family": "student_t", "tau": 4.0}}, 50, 20, 1))
    assert ens.accepted.all()
    assert ens.extra["normalised"]
    np.testing.assert_allclose(ens.extra["log_w"], 0.0, atol=1e-10)


def test_imh_holding_at_least_one_minus_inverse_weight():
    ens = run_imh(cfg(kernel={"type": "imh", "proposal": {"family": "gaussian", "scale": 1.0}},
                      n_steps=200, n_replicas=2000, seed=7))
    w = np.exp(ens.extra["log_w"][:, :-1]).ravel()
    held = ~ens.accepted.ravel()
    for lo, hi in [(2, 4), (4, 16), (16, np.inf)]:
        sel = (w >= lo) & (w < hi)
        freq = held[sel].mean()
        assert sel.sum() > 200
        assert freq >= 1 - 1 / lo - 4 * math.sqrt(0.25 / sel.sum())


# ---------------------------------------------------------------------------
# nested decay estimator


def test_independent_kernel_decays_immediately():
    target = {"family": "student_t", "d": 1, "tau": 4.0, "use_xi_lemma": False}
    c = SimConfig(target, {"type": "imh", "proposal": {"family": "student_t", "tau": 4.0}}, seed=3)
    curve = empirical_decay(c, lambda x: (x[..., 0] < 0).astype(float), [0, 1, 2],
                            n_outer=64, n_inner=32, mu_f=0.5)
    assert curve.lower[1] <= 0 <= curve.upper[1]
    assert curve.values[0] == pytest.approx(0.25, abs=0.02)


def test_finite_chain_decay_matches_exact():
    chain = fc.random_reversible_chain(5, 21, laziness=0.5)
    f = np.array([1.0, 0.0, 2.0, -1.0, 0.5])
    n_grid = [0, 1, 2, 4, 8]
    c = SimConfig({"family": "finite", "chain": chain.to_dict()}, {"type": "finite"}, seed=4)
    curve = empirical_decay(c, lambda x: f[x[..., 0].astype(int)], n_grid, n_outer=400, n_inner=64,
                            mu_f=float(chain.mu @ f))
    exact = fc.exact_decay(chain, f, 8).values[n_grid]
    width = curve.upper - curve.lower
    assert np.all(np.abs(curve.values - exact) <= 1.5 * width + 1e-9)


# ---------------------------------------------------------------------------
# asymptotic variance


def test_batch_means_iid():
    x = np.random.default_rng(0).normal(size=40000) * 2
    rep = batch_means_asvar(x)
    assert rep["lower"] <= 4.0 <= rep["upper"]
    assert rep["batches"] == 200
    with pytest.raises(ValueError):
        batch_means_asvar(np.zeros(999))


def test_batch_means_two_state_spectral():
    p, q = 0.1, 0.2
    chain = fc.FiniteChain.from_matrix(np.array([[1 - p, p], [q, 1 - q]]))
    ens = simulate(SimConfig({"family": "finite", "chain": chain.to_dict()}, {"type": "finite"}, 200000, 1, 5))
    lam = 1 - p - q
    pi1 = p / (p + q)
    exact = pi1 * (1 - pi1) * (1 + lam) / (1 - lam)
    rep = batch_means_asvar(ens.states[0, :, 0])
    assert rep["lower"] * 0.95 <= exact <= rep["upper"] * 1.05


def test_ensemble_without_states():
    e = Ensemble(None, np.zeros((1, 2), bool), np.zeros((1, 1)))
    with pytest.raises(ValueError):
        e.to_csv()
    assert e.acceptance_rate == 0.0
