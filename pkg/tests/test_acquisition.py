"""Acquisition functions against closed forms and Monte-Carlo oracles."""

import math

import numpy as np
import pytest

from matloop.acquisition import (
    AcquisitionSpec,
    CostModel,
    _lockstep_nelder_mead,
    cost_weighted,
    ehvi_exact,
    ehvi_exact_many,
    expected_improvement,
    hv_improvement_2d,
    lower_confidence_bound,
    optimize_acquisition,
    probability_of_improvement,
    qehvi_mc,
    qehvi_single_many,
)
from matloop.errors import NonFiniteInputError, UnknownFidelityError
from matloop.gp import fit_gp, predict

PHI0 = 1.0 / math.sqrt(2.0 * math.pi)


# -- analytic single-objective forms ------------------------------------------------

def test_ei_at_incumbent():
    assert expected_improvement(0.0, 1.0, 0.0) == pytest.approx(PHI0, rel=1e-12)


def test_ei_degenerate_limits():
    assert expected_improvement(-1.0, 0.0, 0.0) == 0.0
    assert expected_improvement(1.0, 0.0, 0.0) == 1.0


def test_ei_rejects_non_finite():
    with pytest.raises(NonFiniteInputError):
        expected_improvement(float("nan"), 1.0, 0.0)


def test_pi_values():
    assert probability_of_improvement(0.0, 1.0, 0.0) == pytest.approx(0.5)
    assert probability_of_improvement(1.96, 1.0, 0.0) == pytest.approx(0.975, abs=1e-3)
    assert probability_of_improvement(0.0, 0.0, 0.0) == 0.0


def test_lcb_formula():
    assert lower_confidence_bound(1.0, 2.0, 2.0) == -3.0
    assert lower_confidence_bound(1.0, 2.0, 0.0) == 1.0


def test_lcb_selection_crosses_analytic_beta_threshold():
    # two candidates, minimizing: mu1 < mu2, sd1 < sd2; selection switches at
    # beta* = (mu2 - mu1) / (sd2 - sd1)
    mu1, sd1 = 1.0, 0.5
    mu2, sd2 = 2.0, 1.5
    beta_star = (mu2 - mu1) / (sd2 - sd1)
    for beta in (0.0, 0.5 * beta_star, 0.99 * beta_star):
        scores = [lower_confidence_bound(mu1, sd1, beta),
                  lower_confidence_bound(mu2, sd2, beta)]
        assert int(np.argmin(scores)) == 0
    for beta in (1.01 * beta_star, 2 * beta_star, 10.0):
        scores = [lower_confidence_bound(mu1, sd1, beta),
                  lower_confidence_bound(mu2, sd2, beta)]
        assert int(np.argmin(scores)) == 1


def test_ei_pi_match_monte_carlo():
    rng = np.random.default_rng(31)
    n = 1_000_000
    for _ in range(20):
        mu = float(rng.uniform(-2, 2))
        sd = float(rng.uniform(0.1, 2.0))
        f_star = float(rng.uniform(-2, 2))
        z = rng.standard_normal(n) * sd + mu
        imp = np.maximum(z - f_star, 0.0)
        ei = expected_improvement(mu, sd, f_star)
        se_ei = imp.std() / math.sqrt(n)
        assert abs(ei - imp.mean()) <= 3 * se_ei + 1e-12
        pi = probability_of_improvement(mu, sd, f_star)
        frac = (z > f_star).mean()
        se_pi = math.sqrt(max(frac * (1 - frac), 1e-12) / n)
        assert abs(pi - frac) <= 3 * se_pi + 1e-6


# -- exact EHVI ---------------------------------------------------------------------

FRONT = np.array([[0.8, 0.1], [0.5, 0.5], [0.1, 0.9]])
REF = np.array([-0.2, -0.2])


def test_ehvi_degenerate_point_mass():
    got = ehvi_exact([1.0, 1.0], [0.0, 0.0], [[0.0, 0.0]], [-1.0, -1.0])
    assert got == pytest.approx(3.0, rel=1e-12)   # box 4 minus dominated 1


def test_ehvi_fully_dominated_mass():
    got = ehvi_exact([-5.0, -5.0], [0.01, 0.01], [[0.0, 0.0]], [-1.0, -1.0])
    assert got <= 1e-9


def test_ehvi_empty_front_is_product_of_exceedances():
    got = ehvi_exact([0.0, 0.0], [1.0, 1.0], np.empty((0, 2)), [0.0, 0.0])
    assert got == pytest.approx(PHI0 * PHI0, rel=1e-9)


def test_ehvi_matches_monte_carlo():
    rng = np.random.default_rng(32)
    S = 2 ** 16
    for _ in range(20):
        mu = rng.uniform(-0.3, 1.2, 2)
        sd = rng.uniform(0.05, 0.6, 2)
        exact = ehvi_exact(mu, sd, FRONT, REF)
        z = rng.standard_normal((S, 2)) * sd + mu
        imp = hv_improvement_2d(z, FRONT, REF)
        se = imp.std() / math.sqrt(S)
        assert abs(exact - imp.mean()) <= 3 * se + 1e-12


def test_ehvi_many_matches_scalar():
    rng = np.random.default_rng(33)
    means = rng.uniform(-0.3, 1.2, (40, 2))
    sds = rng.uniform(0.01, 0.6, (40, 2))
    batch = ehvi_exact_many(means, sds, FRONT, REF)
    for i in range(40):
        assert batch[i] == pytest.approx(
            ehvi_exact(means[i], sds[i], FRONT, REF), rel=1e-10, abs=1e-14)


def test_hv_improvement_matches_hypervolume_delta():
    from matloop.pareto import hypervolume

    rng = np.random.default_rng(34)
    pts = rng.uniform(-0.1, 1.2, (100, 2))
    base = hypervolume(FRONT, REF)
    imp = hv_improvement_2d(pts, FRONT, REF)
    for p, gain in zip(pts, imp):
        want = hypervolume(np.vstack([FRONT, p]), REF) - base
        assert gain == pytest.approx(want, abs=1e-12)


# -- qEHVI --------------------------------------------------------------------------

@pytest.fixture(scope="module")
def mo_models():
    rng = np.random.default_rng(35)
    X = rng.uniform(0, 1, (12, 2))
    y1 = np.sin(3 * X[:, 0]) + X[:, 1]
    y2 = np.cos(2 * X[:, 1]) - X[:, 0]
    return (fit_gp(X, y1, seed=3, n_restarts=2),
            fit_gp(X, y2, seed=4, n_restarts=2))


def test_qehvi_q1_matches_exact(mo_models):
    rng = np.random.default_rng(36)
    spec = AcquisitionSpec(kind="qEHVI", q=1, beta=1.0, mc_samples=2 ** 16, seed=9)
    for _ in range(10):
        x = rng.uniform(0, 1, (1, 2))
        p1 = predict(mo_models[0], x)
        p2 = predict(mo_models[1], x)
        mu = [p1.mean[0], p2.mean[0]]
        sd = [math.sqrt(p1.variance[0]), math.sqrt(p2.variance[0])]
        exact = ehvi_exact(mu, sd, FRONT, REF)
        mc = qehvi_mc(mo_models, x, FRONT, REF, spec)
        # the MC standard error of the improvement estimate
        z = np.random.default_rng(0).standard_normal((2 ** 14, 2)) * sd + mu
        se = hv_improvement_2d(z, FRONT, REF).std() / math.sqrt(spec.mc_samples)
        assert abs(mc - exact) <= 3 * se + 1e-9


def test_qehvi_determinism(mo_models):
    spec = AcquisitionSpec(kind="qEHVI", q=2, beta=1.0, mc_samples=512, seed=21)
    X = np.array([[0.2, 0.8], [0.7, 0.3]])
    a = qehvi_mc(mo_models, X, FRONT, REF, spec)
    b = qehvi_mc(mo_models, X, FRONT, REF, spec)
    assert a == b


def test_qehvi_duplicate_point_adds_nothing(mo_models):
    x = np.array([[0.3, 0.7]])
    spec1 = AcquisitionSpec(kind="qEHVI", q=1, beta=1.0, mc_samples=2 ** 13, seed=5)
    spec2 = AcquisitionSpec(kind="qEHVI", q=2, beta=1.0, mc_samples=2 ** 13, seed=5)
    single = qehvi_mc(mo_models, x, FRONT, REF, spec1)
    dup = qehvi_mc(mo_models, np.vstack([x, x]), FRONT, REF, spec2)
    assert dup == pytest.approx(single, rel=0.1, abs=5e-3)


def test_qehvi_dominated_zero_variance_batch(mo_models):
    # a batch whose outcomes are dominated with probability ~1 scores ~0
    spec = AcquisitionSpec(kind="qEHVI", q=1, beta=1e-9, mc_samples=512, seed=5)
    X = np.array([[0.55, 0.01]])
    p1 = predict(mo_models[0], X)
    p2 = predict(mo_models[1], X)
    if hv_improvement_2d(np.array([[p1.mean[0], p2.mean[0]]]), FRONT, REF)[0] == 0:
        assert qehvi_mc(mo_models, X, FRONT, REF, spec) <= 1e-9


def test_qehvi_single_many_deterministic_and_near_exact(mo_models):
    rng = np.random.default_rng(37)
    X = rng.uniform(0, 1, (8, 2))
    spec = AcquisitionSpec(kind="qEHVI", q=1, beta=1.0, mc_samples=2 ** 14, seed=11)
    batch = qehvi_single_many(mo_models, X, FRONT, REF, spec)
    again = qehvi_single_many(mo_models, X, FRONT, REF, spec)
    assert np.array_equal(batch, again)
    for i in range(8):
        p1 = predict(mo_models[0], X[i:i + 1])
        p2 = predict(mo_models[1], X[i:i + 1])
        mu = [p1.mean[0], p2.mean[0]]
        sd = [math.sqrt(p1.variance[0]), math.sqrt(p2.variance[0])]
        exact = ehvi_exact(mu, sd, FRONT, REF)
        z = np.random.default_rng(1).standard_normal((2 ** 14, 2)) * sd + mu
        se = hv_improvement_2d(z, FRONT, REF).std() / math.sqrt(spec.mc_samples)
        assert abs(batch[i] - exact) <= 4 * se + 1e-9


def test_qehvi_requires_minimum_samples(mo_models):
    spec = AcquisitionSpec(kind="qEHVI", mc_samples=64, seed=0)
    with pytest.raises(ValueError):
        qehvi_mc(mo_models, np.array([[0.5, 0.5]]), FRONT, REF, spec)


def test_spec_validation():
    with pytest.raises(ValueError):
        AcquisitionSpec(kind="EI", q=2)
    with pytest.raises(ValueError):
        AcquisitionSpec(kind="nope")
    with pytest.raises(ValueError):
        AcquisitionSpec(kind="EI", beta=-1)


# -- cost weighting -----------------------------------------------------------------

def test_cost_weighted_discrete():
    cm = CostModel(mode="discrete", levels=(0.5, 1.0), ratios=(1.0, 10.0))
    assert cost_weighted(2.0, 0.5, cm) == 2.0
    assert cost_weighted(2.0, 1.0, cm) == pytest.approx(0.2)
    with pytest.raises(UnknownFidelityError):
        cost_weighted(2.0, 0.75, cm)


def test_cost_weighted_continuous():
    cm = CostModel(mode="continuous", c0=1.0, exponent=2.0)
    assert cost_weighted(1.0, 0.5, cm) == pytest.approx(1.0 / 1.25)


def test_cost_model_invariants():
    with pytest.raises(ValueError):
        CostModel(mode="discrete", levels=(0.5, 1.0), ratios=(1.0,))
    with pytest.raises(ValueError):
        CostModel(mode="discrete", levels=(1.0, 0.5), ratios=(1.0, 2.0))
    with pytest.raises(ValueError):
        CostModel(mode="discrete", levels=(0.5, 0.9), ratios=(1.0, 2.0))
    with pytest.raises(ValueError):
        CostModel(mode="discrete", levels=(0.5, 1.0), ratios=(1.0, -2.0))


def test_cost_scaling_leaves_argmax_unchanged():
    spec = AcquisitionSpec(kind="EHVI", seed=3)

    def joint(X, s_vec):
        x = np.atleast_2d(X)[-1:]
        s = float(np.asarray(s_vec).ravel()[-1])
        peak = {0.5: 0.6, 1.0: 1.0}[s]
        return float(peak * math.exp(-10 * np.sum((x - 0.4) ** 2)))

    def many(X, s):
        X = np.atleast_2d(X)
        peak = {0.5: 0.6, 1.0: 1.0}[s]
        return peak * np.exp(-10 * np.sum((X - 0.4) ** 2, axis=1))

    results = []
    for scale in (1.0, 7.5):
        cm = CostModel(mode="discrete", levels=(0.5, 1.0),
                       ratios=(1.0 * scale, 4.0 * scale))
        out = optimize_acquisition(joint, [[0, 1], [0, 1]], 1, cm, spec,
                                   score_many=many)
        results.append((out[0].fidelity, tuple(np.round(out[0].x, 6))))
    assert results[0] == results[1]


# -- maximization -------------------------------------------------------------------

def test_lockstep_nelder_mead_quadratic():
    rng = np.random.default_rng(38)
    target = np.array([0.3, 0.7])

    def f(V):
        return -np.sum((np.atleast_2d(V) - target) ** 2, axis=1)

    starts = rng.uniform(0, 1, (16, 2))
    xs, vals = _lockstep_nelder_mead(f, starts, np.array([[0.0, 1.0]] * 2), 60)
    best = xs[int(np.argmax(vals))]
    assert np.abs(best - target).max() <= 1e-4


def test_lockstep_nelder_mead_respects_bounds():
    def f(V):
        return np.sum(np.atleast_2d(V), axis=1)   # max at the corner

    starts = np.array([[0.1, 0.1], [0.8, 0.2]])
    xs, vals = _lockstep_nelder_mead(f, starts, np.array([[0.0, 1.0]] * 2), 80)
    assert np.all(xs <= 1.0) and np.all(xs >= 0.0)
    assert np.abs(xs[int(np.argmax(vals))] - 1.0).max() <= 1e-3


def test_optimizer_unimodal_sanity():
    spec = AcquisitionSpec(kind="EI", seed=42)

    def joint(X, s):
        return float(-np.sum((np.atleast_2d(X)[-1:] - 0.3) ** 2))

    def many(X, s):
        return -np.sum((np.atleast_2d(X) - 0.3) ** 2, axis=1)

    out = optimize_acquisition(joint, [[0, 1], [0, 1]], 1, None, spec,
                               score_many=many)
    assert np.abs(out[0].x - 0.3).max() <= 1e-2


def test_optimizer_determinism():
    spec = AcquisitionSpec(kind="EI", seed=17)

    def joint(X, s):
        x = np.atleast_2d(X)[-1:]
        return float(np.sin(5 * x[0, 0]) + np.cos(3 * x[0, 1]))

    a = optimize_acquisition(joint, [[0, 1], [0, 1]], 1, None, spec)
    b = optimize_acquisition(joint, [[0, 1], [0, 1]], 1, None, spec)
    assert np.array_equal(a[0].x, b[0].x)
    assert a[0].raw == b[0].raw


def test_optimizer_discrete_fidelity_grid():
    # piecewise score with a known (x, s) maximizer, verified by enumerating
    # the fidelity grid against a dense lattice
    spec = AcquisitionSpec(kind="EHVI", seed=7)
    peaks = {0.25: (0.2, 1.0), 0.5: (0.5, 2.0), 1.0: (0.8, 2.5)}
    cm = CostModel(mode="discrete", levels=(0.25, 0.5, 1.0),
                   ratios=(1.0, 1.25, 5.0))

    def value(x, s):
        cx, height = peaks[s]
        return height * math.exp(-30 * (x - cx) ** 2)

    def joint(X, s_vec):
        x = float(np.atleast_2d(X)[-1, 0])
        s = float(np.asarray(s_vec).ravel()[-1])
        return value(x, s)

    def many(X, s):
        X = np.atleast_2d(X)
        return np.array([value(float(x[0]), s) for x in X])

    # oracle: dense x lattice x fidelity grid on the weighted criterion
    lattice = np.linspace(0, 1, 4001)
    best = max(((value(x, s) / cm.cost(s), x, s)
                for s in cm.levels for x in lattice))
    out = optimize_acquisition(joint, [[0.0, 1.0]], 1, cm, spec, score_many=many)
    assert out[0].fidelity == best[2]
    assert out[0].x[0] == pytest.approx(best[1], abs=1e-3)


def test_optimizer_greedy_batch_is_sorted_and_sized():
    spec = AcquisitionSpec(kind="qEHVI", q=3, seed=5, mc_samples=256)
    counted = {"n": 0}

    def joint(X, s):
        X = np.atleast_2d(X)
        counted["n"] += 1
        # diminishing-returns set function: union of gaussian bumps on a grid
        grid = np.linspace(0, 1, 201)
        cover = np.zeros_like(grid)
        for x in X:
            cover = np.maximum(cover, np.exp(-200 * (grid - x[0]) ** 2))
        return float(cover.mean())

    out = optimize_acquisition(joint, [[0.0, 1.0]], 3, None, spec)
    assert len(out) == 3
    assert all(out[i].raw >= out[i + 1].raw - 1e-12 for i in range(2))
    xs = sorted(p.x[0] for p in out)
    assert xs[1] - xs[0] > 0.05 and xs[2] - xs[1] > 0.05   # spread out
