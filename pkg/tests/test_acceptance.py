"""Acceptance gate: one test per release criterion, at stated tolerances.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
PASS lines. The two campaign reproductions parallelize across seeds to stay
inside their wall-clock budgets on small machines.
"""

import itertools
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from matloop import benchmarks, pareto
from matloop.acquisition import (
    AcquisitionSpec,
    CostModel,
    ehvi_exact,
    expected_improvement,
    hv_improvement_2d,
    probability_of_improvement,
    qehvi_mc,
)
from matloop.campaign import Campaign, CampaignConfig
from matloop.gp import KernelConfig, GpModel, _mll_value, fit_gp, \
    log_marginal_likelihood, predict

SEEDS = list(range(20))


def _report(name: str, ok: bool, detail: str):
    print(f"{'PASS' if ok else 'FAIL'}: {name} - {detail}")
    assert ok, f"{name}: {detail}"


# -- criterion 1: Goldstein-Price reproduction ------------------------------------

def _run_goldstein(seed: int) -> float:
    camp = Campaign(CampaignConfig(
        mode="benchmark", benchmark="goldstein_price", iterations=35,
        init_n=5, seed=seed, acquisition="EI")).run()
    return min(y[0] for y in camp.Y_obs)


def test_goldstein_price_reproduction():
    start = time.perf_counter()
    with ProcessPoolExecutor(max_workers=2) as pool:
        bo_bests = list(pool.map(_run_goldstein, SEEDS))

    random_bests = []
    for seed in SEEDS:
        rng = np.random.default_rng(seed)
        X = rng.uniform([-2.0, -2.0], [2.0, 2.0], (40, 2))
        random_bests.append(float(benchmarks.eval_single(
            "goldstein_price", X).min()))

    elapsed = time.perf_counter() - start
    bo_median = float(np.median(bo_bests))
    rnd_median = float(np.median(random_bests))
    ok = bo_median <= rnd_median and bo_median <= 30.0 and elapsed <= 120.0
    _report(
        "Goldstein-Price reproduction (EI, init 5, 35 iterations, 20 seeds)",
        ok,
        f"BO median {bo_median:.2f} vs random median {rnd_median:.2f} "
        f"(threshold 30, random 10th pct "
        f"{float(np.percentile(random_bests, 10)):.2f}); {elapsed:.0f}s <= 120s",
    )


# -- criterion 2: hypervolume oracle suite ------------------------------------------

def _inclusion_exclusion_hv(Y, r):
    pts = [y for y in Y if np.all(y > r)]
    total = 0.0
    for k in range(1, len(pts) + 1):
        for subset in itertools.combinations(pts, k):
            corner = np.min(np.asarray(subset), axis=0)
            total += (-1) ** (k + 1) * np.prod(corner - r)
    return total


def test_hypervolume_oracle_suite():
    start = time.perf_counter()
    rng = np.random.default_rng(101)
    worst_rel = 0.0
    for _ in range(50):
        n = int(rng.integers(1, 13))
        Y = rng.uniform(0.05, 1.0, size=(n, 2))
        r = np.zeros(2)
        got = pareto.hypervolume(Y, r)
        want = _inclusion_exclusion_hv(Y, r)
        worst_rel = max(worst_rel, abs(got - want) / max(abs(want), 1e-300))
    assert worst_rel <= 1e-10

    worst_z = 0.0
    for _ in range(20):
        n = int(rng.integers(1, 9))
        Y = rng.uniform(0.05, 1.0, size=(n, 3))
        r = np.zeros(3)
        got = pareto.hypervolume(Y, r)
        hi = Y.max(axis=0)
        pts = rng.uniform(r, hi, size=(1_000_000, 3))
        dominated = np.zeros(len(pts), dtype=bool)
        for y in Y:
            dominated |= np.all(pts <= y, axis=1)
        frac = dominated.mean()
        box = float(np.prod(hi - r))
        est = frac * box
        se = math.sqrt(max(frac * (1 - frac), 1e-12) / len(pts)) * box
        worst_z = max(worst_z, abs(got - est) / se)
    elapsed = time.perf_counter() - start
    ok = worst_z <= 3.0 and elapsed <= 60.0
    _report(
        "Hypervolume oracle suite (sweep vs inclusion-exclusion, WFG vs MC)",
        ok,
        f"2-obj worst rel err {worst_rel:.1e} <= 1e-10; 3-obj worst z "
        f"{worst_z:.2f} <= 3; {elapsed:.0f}s <= 60s",
    )


# -- criterion 3: acquisition equivalence --------------------------------------------

def test_acquisition_equivalence():
    rng = np.random.default_rng(202)
    X = rng.uniform(0, 1, (12, 2))
    models = (fit_gp(X, np.sin(3 * X[:, 0]) + X[:, 1], seed=1, n_restarts=2),
              fit_gp(X, np.cos(2 * X[:, 1]) - X[:, 0], seed=2, n_restarts=2))
    front = np.array([[0.8, 0.1], [0.5, 0.5], [0.1, 0.9]])
    r = np.array([-0.2, -0.2])

    worst_z_ehvi = 0.0
    for i in range(20):
        x = rng.uniform(0, 1, (1, 2))
        p = [predict(m, x) for m in models]
        mu = [p[0].mean[0], p[1].mean[0]]
        sd = [math.sqrt(p[0].variance[0]), math.sqrt(p[1].variance[0])]
        exact = ehvi_exact(mu, sd, front, r)
        spec = AcquisitionSpec(kind="qEHVI", q=1, beta=1.0,
                               mc_samples=2 ** 16, seed=300 + i)
        mc = qehvi_mc(models, x, front, r, spec)
        z = rng.standard_normal((2 ** 15, 2)) * sd + mu
        imp_std = hv_improvement_2d(z, front, r).std()
        se = imp_std / math.sqrt(2 ** 16)
        if se > 0:
            worst_z_ehvi = max(worst_z_ehvi, abs(mc - exact) / se)
        else:
            assert abs(mc - exact) <= 1e-12

    worst_z_ei = 0.0
    worst_z_pi = 0.0
    n = 1_000_000
    for _ in range(50):
        sd = float(rng.uniform(0.05, 2.0))
        f_star = float(rng.uniform(-2, 2))
        # keep the improvement probability in MC-resolvable territory
        mu = f_star + sd * float(rng.uniform(-4, 4))
        z = rng.standard_normal(n) * sd + mu
        imp = np.maximum(z - f_star, 0.0)
        # analytic moments of the improvement give the true standard error
        d = mu - f_star
        zed = d / sd
        phi = math.exp(-0.5 * zed * zed) / math.sqrt(2 * math.pi)
        cdf = 0.5 * math.erfc(-zed / math.sqrt(2))
        ei = expected_improvement(mu, sd, f_star)
        second = (sd * sd + d * d) * cdf + sd * d * phi
        se_ei = math.sqrt(max(second - ei * ei, 1e-300) / n)
        worst_z_ei = max(worst_z_ei, abs(ei - imp.mean()) / se_ei)
        p = probability_of_improvement(mu, sd, f_star)
        frac = float((z > f_star).mean())
        se_pi = math.sqrt(max(p * (1 - p), 1e-12) / n)
        worst_z_pi = max(worst_z_pi, abs(p - frac) / se_pi)

    ok = worst_z_ehvi <= 3.0 and worst_z_ei <= 3.0 and worst_z_pi <= 3.0
    _report(
        "Acquisition equivalence (qEHVI vs exact EHVI; EI/PI vs MC)",
        ok,
        f"qEHVI worst z {worst_z_ehvi:.2f}; EI worst z {worst_z_ei:.2f}; "
        f"PI worst z {worst_z_pi:.2f}",
    )


# -- criterion 4: GP correctness ------------------------------------------------------

def test_gp_correctness():
    rng = np.random.default_rng(404)
    worst_rel = 0.0
    for _ in range(20):
        d = int(rng.integers(1, 5))
        n = int(rng.integers(4, 13))
        X = rng.uniform(0, 1, size=(n, d))
        y = rng.standard_normal(n)
        config = KernelConfig(
            family=str(rng.choice(["matern52", "rbf"])),
            lengthscales=tuple(np.exp(rng.uniform(-1.5, 0.5, d))),
            signal_variance=float(np.exp(rng.uniform(-1, 1))),
            noise_variance=float(np.exp(rng.uniform(-6, -2))),
        )
        model = GpModel(config, X, y, np.array([[0.0, 1.0]] * d), 0.0, 1.0)
        _, grad = log_marginal_likelihood(model, config)
        theta = config.log_params()
        for j in range(len(theta)):
            tp, tm = theta.copy(), theta.copy()
            tp[j] += 1e-5
            tm[j] -= 1e-5
            fd = (_mll_value(KernelConfig.from_log_params(config.family, tp), X, y)
                  - _mll_value(KernelConfig.from_log_params(config.family, tm),
                               X, y)) / 2e-5
            denom = max(abs(fd), 1e-6)
            worst_rel = max(worst_rel, abs(grad[j] - fd) / denom)

    X = np.linspace(0, 1, 8)[:, None]
    y = np.sin(np.pi * X[:, 0])
    model = fit_gp(X, y, seed=7, fix_noise=1e-6)
    interp_err = float(np.abs(predict(model, X).mean - y).max())

    ok = worst_rel <= 1e-4 and interp_err <= 1e-5
    _report(
        "GP correctness (MLL gradient FD check; noiseless interpolation)",
        ok,
        f"worst gradient rel err {worst_rel:.2e} <= 1e-4; interpolation err "
        f"{interp_err:.2e} <= 1e-5",
    )


# -- criterion 5: multi-fidelity budget campaign ----------------------------------------

MF_COST = CostModel(mode="discrete", levels=(0.5, 1.0), ratios=(1.0, 5.0))
HF_COST = CostModel(mode="discrete", levels=(1.0,), ratios=(5.0,))


def _run_budget_pair(seed: int) -> dict:
    out = {}
    for arm, cost in (("mf", MF_COST), ("hf", HF_COST)):
        camp = Campaign(CampaignConfig(
            mode="benchmark", benchmark="branin_currin", iterations=1000,
            init_n=5, seed=seed, acquisition="EHVI", budget=60.0,
            fidelity=cost)).run()
        hv_series = [r.hv for r in camp.records]
        out[arm] = {
            "X": [list(x) for x in camp.X_obs],
            "cum_cost": camp.cum_cost,
            "monotone": all(b >= a - 1e-12
                            for a, b in zip(hv_series, hv_series[1:])),
        }
    return out


def test_multi_fidelity_budget_campaign():
    start = time.perf_counter()
    with ProcessPoolExecutor(max_workers=2) as pool:
        results = list(pool.map(_run_budget_pair, SEEDS))
    elapsed = time.perf_counter() - start

    wins = 0
    for res in results:
        assert res["mf"]["cum_cost"] <= 60.0 + 1e-9
        assert res["hf"]["cum_cost"] <= 60.0 + 1e-9
        assert res["mf"]["monotone"] and res["hf"]["monotone"]
        # final hypervolume at target fidelity, common reference per seed
        target = {}
        for arm in ("mf", "hf"):
            X = np.asarray(res[arm]["X"])
            Y = benchmarks.eval_multi("branin_currin", X)
            target[arm] = pareto.to_internal(Y, ("minimize", "minimize"))
        ref = pareto.default_reference_point(np.vstack(list(target.values())))
        hv = {arm: pareto.hypervolume(vals, ref) for arm, vals in target.items()}
        wins += hv["mf"] >= hv["hf"]

    ok = wins >= 12 and elapsed <= 600.0
    _report(
        "Multi-fidelity budget campaign (fidelity-augmented Branin-Currin, budget 60)",
        ok,
        f"cost cap and HV monotonicity held on all seeds; multi-fidelity arm won {wins}/20 "
        f"(need >= 12); {elapsed:.0f}s <= 600s",
    )


# -- criterion 6: determinism ----------------------------------------------------------

def test_campaign_determinism():
    cfg = CampaignConfig(mode="benchmark", benchmark="branin_currin",
                         iterations=5, init_n=4, seed=2024,
                         acquisition="qEHVI", q=2, mc_samples=256)
    bundles = []
    for _ in range(2):
        camp = Campaign(cfg).run()
        bundles.append({w: camp.export_csv(w) for w in
                        ("observations", "iterations", "proposals", "front")})
    ok = bundles[0] == bundles[1]
    _report("Determinism (identical config+seed, byte-identical CSV bundles)",
            ok, "all four exports byte-identical across two runs")


# -- criterion 7: filter oracle equivalence ---------------------------------------------

def test_filter_oracle_equivalence():
    from tests.test_filters import interpret, random_filter, random_table

    rng = np.random.default_rng(700)
    store, rows = random_table(rng, n=200)
    mismatches = 0
    for _ in range(500):
        doc = random_filter(rng)
        rs = store.query_rows("t", ["a", "b", "n", "s", "flag"], doc)
        expected = [tuple(r[c] for c in ("a", "b", "n", "s", "flag"))
                    for r in rows if interpret(doc, r)]
        mismatches += rs.rows != expected
    ok = mismatches == 0
    _report("Filter-oracle equivalence (500 random trees, 200-row table)",
            ok, f"{mismatches} mismatching trees")


# -- criterion 8: API lifecycle ----------------------------------------------------------

def test_api_lifecycle_fuzzing():
    from fastapi.testclient import TestClient

    from matloop.api import ApiToken, create_app
    from tests.test_api import seeded_store

    tokens = {"t-admin": ApiToken("t-admin", "admin", "o"),
              "t-editor": ApiToken("t-editor", "editor", "o"),
              "t-viewer": ApiToken("t-viewer", "viewer", "o")}
    client = TestClient(create_app(store=seeded_store(), tokens=tokens),
                        raise_server_exceptions=False)

    rng = np.random.default_rng(808)
    routes = [
        ("GET", "/v1/tables"),
        ("GET", "/v1/tables/iqr_dataframe/metadata"),
        ("GET", "/v1/tables/missing/metadata"),
        ("POST", "/v1/tables"),
        ("POST", "/v1/tables/iqr_dataframe/query"),
        ("POST", "/v1/tables/iqr_dataframe/records"),
        ("GET", "/v1/benchmarks"),
        ("GET", "/v1/campaigns"),
        ("POST", "/v1/campaigns"),
        ("GET", "/v1/campaigns/missing"),
        ("POST", "/v1/campaigns/missing/step"),
        ("GET", "/v1/campaigns/missing/export?which=front"),
    ]
    bodies = [None, b"", b"{", b"[1,2]", b'{"unknown_field": true}',
              json.dumps({"numRows": 0}).encode(),
              json.dumps({"filter": {"frob": ["Nb", 1]}}).encode(),
              json.dumps({"records": []}).encode(),
              json.dumps({"template": {"name": "x"}}).encode()]
    headers_pool = [{}, {"Authorization": "Bearer zzz"},
                    {"Authorization": "Bearer t-viewer"},
                    {"Authorization": "Bearer t-editor"},
                    {"Authorization": "Bearer t-admin"}]

    allowed = {200, 201, 400, 401, 403, 404, 500}
    seen = set()
    violations = []
    for _ in range(500):
        method, path = routes[int(rng.integers(len(routes)))]
        body = bodies[int(rng.integers(len(bodies)))]
        headers = dict(headers_pool[int(rng.integers(len(headers_pool)))])
        r = client.request(method, path, content=body, headers=headers)
        seen.add(r.status_code)
        if r.status_code not in allowed:
            violations.append((method, path, r.status_code))
        # 401 is decided before payload validation
        authed = headers.get("Authorization") in {
            "Bearer t-viewer", "Bearer t-editor", "Bearer t-admin"}
        if not authed and r.status_code == 400:
            violations.append(("400-before-401", method, path))
    ok = not violations
    _report("API lifecycle (fuzzing: status contract, 401 before 400)",
            ok, f"statuses seen {sorted(seen)}; violations {violations[:3]}")


# -- criterion 9: benchmark optima ---------------------------------------------------------

def test_benchmark_optima():
    worst = []
    for defn in benchmarks.list_benchmarks():
        for value, at in defn.optima:
            got = benchmarks.eval_single(defn.name, np.asarray(at, dtype=float))
            err = abs(got - value)
            worst.append((defn.name, err, defn.tolerance))
            assert err <= defn.tolerance, (defn.name, err)
    detail = "; ".join(f"{name} err {err:.1e} <= {tol:g}"
                       for name, err, tol in worst)
    _report("Benchmark optima reproduced at stated tolerances", True, detail)
