"""Acceptance criteria 1-13; each test prints one PASS/FAIL line before asserting.

The statistical criteria (5, 6, 7, 11) run the benchmark harness and take
minutes on one core.
"""

import json
import math
import time

import numpy as np
import pytest
from scipy.optimize import minimize

from infsource.cli import main as cli_main
from infsource.diffusion import DiffusionParams, Observations, simulate
from infsource.evaluation import delta_metric, matching_cost, run_benchmark
from infsource.graph import Graph
from infsource.gromov import DIAG, SCALED_IDENTITY, gromov_matrix, reconstruct_base, target_matrix
from infsource.multi import ssse, ssse_split
from infsource.single import mle_tree, score_tree_candidate, shrinkage_objective, shrinkage_objective_fd

from oracles import (
    EXAMPLE_LEFT,
    EXAMPLE_RIGHT,
    bfs_dist,
    gaussian_loglik,
    injection_cost,
    random_tree,
    tree_lca_depth_cov,
)
from test_gromov import _gromov_instance, check_gromov_laws
from test_multi import check_multi_clauses, multi_instance


@pytest.fixture
def verdict(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\nACCEPTANCE {number:>2} {'PASS' if ok else 'FAIL'}: {detail}")
        return ok
    return emit


def test_criterion_01_gromov_laws(verdict):
    t = time.perf_counter()
    failures = 0
    for seed in range(1000):
        try:
            check_gromov_laws(*_gromov_instance(seed))
        except (AssertionError, np.linalg.LinAlgError):
            failures += 1
    elapsed = time.perf_counter() - t
    ok = failures == 0 and elapsed < 30
    assert verdict(1, ok, f"1000 trees, {failures} failures, {elapsed:.1f}s (limit 30s)")


def test_criterion_02_reconstruction_round_trip(verdict):
    bases = []
    for seed in range(500):
        g, s, observed = _gromov_instance(10_000 + seed)
        bases.append(gromov_matrix(g, observed, base=s))
    t = time.perf_counter()
    exact = sum(np.array_equal(gromov_matrix(reconstruct_base(m)), m) for m in bases)
    elapsed = time.perf_counter() - t
    ok = exact == 500 and elapsed < 10
    assert verdict(2, ok, f"{exact}/500 exact, {elapsed:.2f}s (limit 10s)")


# -- criterion 3: exhaustive likelihood oracle ------------------------------------------

_T0_GRID = np.linspace(-20, 20, 81)
_MU_GRID = np.linspace(-10, 10, 81)
_LOG_S2_GRID = np.linspace(math.log(1e-3), math.log(1e3), 61)


def _oracle_max_loglik(T, d, cov):
    """Grid over (t0, mu, sigma2) then Nelder-Mead polish; returns (loglik, params)."""
    n = len(T)
    P = np.linalg.inv(cov)
    _, logdet = np.linalg.slogdet(cov)
    r = T[None, None, :] - _T0_GRID[:, None, None] - _MU_GRID[None, :, None] * d[None, None, :]
    Q = np.einsum("abi,ij,abj->ab", r, P, r)
    s2 = np.exp(_LOG_S2_GRID)
    ll = -0.5 * (n * np.log(2 * np.pi * s2)[None, None, :] + logdet + Q[:, :, None] / s2[None, None, :])
    a, b, c = np.unravel_index(np.argmax(ll), ll.shape)
    D = np.column_stack([np.ones(n), d])

    def neg(x):
        return -gaussian_loglik(T, D, cov, x[0], x[1], math.exp(x[2]))

    res = minimize(neg, [_T0_GRID[a], _MU_GRID[b], _LOG_S2_GRID[c]], method="Nelder-Mead",
                   options={"xatol": 1e-9, "fatol": 1e-12, "maxiter": 20000, "maxfev": 20000})
    return -res.fun, res.x


def _mle_instance(seed):
    rng = np.random.default_rng(seed)
    N = int(rng.integers(10, 16))
    g = random_tree(N, rng)
    s = int(rng.integers(N))
    out = simulate(g, [s], DiffusionParams(2.0, 1.0), rng)
    k = int(rng.integers(5, 9))
    nodes = sorted(int(v) for v in rng.choice([v for v in range(N) if v != s], size=k, replace=False))
    return g, Observations(nodes, out.infection_time[nodes])


def test_criterion_03_mle_matches_likelihood_oracle(verdict):
    t = time.perf_counter()
    matches, worst_gap = 0, 0.0
    for seed in range(50):
        g, obs = _mle_instance(seed)
        T, nodes = obs.times, obs.nodes.tolist()
        best = (-math.inf, None)
        for cand in range(g.node_count):
            if cand in nodes:
                continue
            d = np.array([bfs_dist(g, cand)[v] for v in nodes], dtype=float)
            ll, _ = _oracle_max_loglik(T, d, tree_lca_depth_cov(g, cand, nodes))
            if ll > best[0]:
                best = (ll, cand)
        est = mle_tree(g, obs)
        matches += est.source == best[1]
        D = np.column_stack([np.ones(len(nodes)), [bfs_dist(g, est.source)[v] for v in nodes]])
        ll_mle = gaussian_loglik(T, D, tree_lca_depth_cov(g, est.source, nodes), est.t0, est.mu, est.sigma2)
        worst_gap = max(worst_gap, abs(best[0] - ll_mle) / abs(best[0]))
    elapsed = time.perf_counter() - t
    ok = matches >= 48 and worst_gap <= 0.01 and elapsed < 120
    assert verdict(3, ok, f"argmax agrees {matches}/50 (need 48), worst log-lik gap {worst_gap:.2e} "
                          f"(limit 1e-2), {elapsed:.1f}s (limit 120s)")


def test_criterion_04_zero_noise_exactness(verdict):
    rng = np.random.default_rng(4)
    worst = {"R": 0.0, "t0": 0.0, "mu": 0.0, "sigma2": 0.0}
    done = skipped = 0
    while done < 100:
        N = int(rng.integers(10, 61))
        g = random_tree(N, rng)
        s = int(rng.integers(N))
        t0, mu = float(rng.uniform(-3, 3)), float(rng.uniform(0.5, 4))
        out = simulate(g, [s], DiffusionParams(mu, 0.0, (t0,)), rng)
        k = max(3, N // 3)
        nodes = sorted(int(v) for v in rng.choice([v for v in range(N) if v != s], size=k, replace=False))
        dist = bfs_dist(g, s)
        if len({dist[v] for v in nodes}) < 2:
            skipped += 1  # (t0, mu) not identifiable when every observed node is equidistant
            continue
        fit = score_tree_candidate(g, s, Observations(nodes, out.infection_time[nodes])).fit
        worst["R"] = max(worst["R"], fit.residual)
        worst["t0"] = max(worst["t0"], abs(fit.t0 - t0))
        worst["mu"] = max(worst["mu"], abs(fit.mu - mu))
        worst["sigma2"] = max(worst["sigma2"], fit.residual / k)
        done += 1
    ok = worst["R"] <= 1e-9 and worst["t0"] <= 1e-6 and worst["mu"] <= 1e-6 and worst["sigma2"] <= 1e-9
    assert verdict(4, ok, f"100 trees ({skipped} equidistant draws redrawn), max R {worst['R']:.1e}, "
                          f"max |dt0| {worst['t0']:.1e}, max |dmu| {worst['mu']:.1e}, max sigma2 {worst['sigma2']:.1e}")


def _by_trial(rows, algorithm, key):
    return {r["trial"]: r[key] for r in rows if r["algorithm"] == algorithm}


@pytest.mark.slow
def test_criterion_05_gssi_agrees_with_mle_on_trees(verdict):
    t = time.perf_counter()
    spec = {"name": "c5", "seed": 5, "trials": 100, "graph": {"family": "er-tree", "nodes": 200},
            "diffusion": {"mu": 2.0, "sigma2": 1.0}, "fractions": [0.3], "algorithms": ["gssi", "mle-tree"]}
    rows = run_benchmark(spec).rows
    a, b = _by_trial(rows, "gssi", "estimates"), _by_trial(rows, "mle-tree", "estimates")
    same = sum(a[i] == b[i] for i in a) / len(a)
    alpha = float(np.mean(list(_by_trial(rows, "gssi", "alpha").values())))
    elapsed = time.perf_counter() - t
    ok = same >= 0.70 and alpha <= 0.15 and elapsed < 600
    assert verdict(5, ok, f"same estimate {same:.0%} (need 70%), mean alpha {alpha:.3f} (limit 0.15), "
                          f"{elapsed:.0f}s (limit 600s)")


@pytest.mark.slow
def test_criterion_06_single_source_accuracy(verdict):
    t = time.perf_counter()
    spec = {"name": "c6", "seed": 6, "trials": 100, "graph": {"family": "er-tree", "nodes": 500},
            "diffusion": {"mu": 2.0, "sigma2": 1.0}, "fractions": [0.3], "algorithms": ["gssi", "bfs-mle"]}
    agg = run_benchmark(spec).aggregate()
    err = {g["algorithm"]: g["error"] for g in agg["groups"]}
    gssi, bfs = err["gssi"]["mean"], err["bfs-mle"]["mean"]
    elapsed = time.perf_counter() - t
    ok = gssi <= 2.5 and gssi <= bfs and elapsed < 2700
    assert verdict(6, ok, f"GSSI mean error {gssi:.2f} +/- {err['gssi']['se']:.2f} hops (limit 2.5), "
                          f"BFS-MLE {bfs:.2f} +/- {err['bfs-mle']['se']:.2f} (GSSI must not exceed), "
                          f"{elapsed:.0f}s (limit 2700s)")


@pytest.mark.slow
def test_criterion_07_alpha_grows_with_density(verdict):
    means = {}
    for label, graph in [("BA(500,16)", {"family": "ba", "nodes": 500, "mean_degree": 16}),
                         ("BA(500,4)", {"family": "ba", "nodes": 500, "mean_degree": 4}),
                         ("BA tree", {"family": "ba-tree", "nodes": 500})]:
        spec = {"name": "c7", "seed": 7, "trials": 50, "graph": graph,
                "diffusion": {"mu": 2.0, "sigma2": 1.0}, "fractions": [0.3], "algorithms": ["gssi"]}
        a = run_benchmark(spec).aggregate()["groups"][0]["alpha"]
        means[label] = a
    dense, sparse, tree = (means[k]["mean"] for k in ("BA(500,16)", "BA(500,4)", "BA tree"))
    ok = dense > sparse > tree
    detail = ", ".join(f"{k} {v['mean']:.3f} +/- {v['se']:.3f}" for k, v in means.items())
    assert verdict(7, ok, f"mean alpha {detail} (need strictly decreasing)")


def test_criterion_08_multi_source_clauses(verdict):
    t = time.perf_counter()
    failures, counts = 0, []
    for seed in range(500):
        g, sources, out, obs = multi_instance(seed)
        counts.append(len(sources))
        try:
            check_multi_clauses(g, sources, out, obs)
        except AssertionError:
            failures += 1
    elapsed = time.perf_counter() - t
    ok = failures == 0 and elapsed < 300
    assert verdict(8, ok, f"500 instances (|S| mean {np.mean(counts):.2f}), {failures} failures, "
                          f"{elapsed:.1f}s (limit 300s)")


def test_criterion_09_ssse_worked_example(verdict):
    results = []
    for edges in (EXAMPLE_LEFT, EXAMPLE_RIGHT):
        g = Graph(24, edges)
        nodes = sorted({v for e in edges for v in e})
        cut = ssse_split(g, nodes)
        pieces = ssse(g, nodes)
        results.append(cut is not None and set(cut) == {9, 10} and len(pieces) == 2)
    ok = all(results)
    assert verdict(9, ok, f"edge 9-10 cut in left subtree: {results[0]}, right subtree: {results[1]}")


def test_criterion_10_delta_matching(verdict):
    rng = np.random.default_rng(10)
    bad = 0
    for _ in range(1000):
        k, m = (int(x) for x in rng.integers(1, 6, size=2))
        cost = rng.integers(0, 12, size=(k, m))
        bad += matching_cost(cost) != injection_cost(cost)
    path = Graph(5, [(0, 1), (1, 2), (2, 3), (3, 4)])
    hand = [
        delta_metric(path, [0, 4], [4, 0], 0.0) == 0.0,
        delta_metric(path, [0, 4], [0, 4], 3.0) == 0.0,
        delta_metric(path, [0, 4], [1], 0.0) == 1.0,
        delta_metric(path, [0, 4], [1], 3.0) == 2.0,
    ]
    ok = bad == 0 and all(hand)
    assert verdict(10, ok, f"{1000 - bad}/1000 matchings equal the injection oracle, "
                           f"hand examples {sum(hand)}/{len(hand)}")


@pytest.mark.slow
def test_criterion_11_scce_desk_scale(verdict):
    t = time.perf_counter()
    spec = {"name": "c11", "seed": 11, "trials": 50, "graph": {"family": "ba", "nodes": 200, "mean_degree": 8},
            "diffusion": {"mu": 3.0, "sigma2": 1.0}, "fractions": [0.3], "algorithms": ["scce"],
            "sources": {"counts": [2, 3], "min_distance": "avg-pairwise"}}
    g = run_benchmark(spec).aggregate()["groups"][0]
    delta, L = g["delta_zero"], g["L"]
    elapsed = time.perf_counter() - t
    ok = delta["mean"] <= 3.0 and 1.5 <= L["mean"] <= 4.5 and elapsed < 1800
    assert verdict(11, ok, f"mean Delta(eta=0) {delta['mean']:.2f} +/- {delta['se']:.2f} (limit 3.0), "
                           f"mean L {L['mean']:.2f} (need [1.5, 4.5]), {elapsed:.0f}s (limit 1800s)")


def _shrinkage_case(seed, kind):
    rng = np.random.default_rng(seed)
    N = int(rng.integers(10, 41))
    g = random_tree(N, rng)
    s = int(rng.integers(N))
    out = simulate(g, [s], DiffusionParams(2.0, 1.0), rng)
    k = int(rng.integers(3, N))
    nodes = sorted(int(v) for v in rng.choice([v for v in range(N) if v != s], size=k, replace=False))
    lam = gromov_matrix(g, nodes, base=s)
    D = np.column_stack([np.ones(k), np.diag(lam)])
    U = out.infection_time[nodes] - D @ [0.0, 2.0]
    return rng, lam, target_matrix(lam, kind), U


def test_criterion_12_shrinkage_objective(verdict):
    worst = {"df1": 0.0, "df2": 0.0, "d2f1": -math.inf, "d2f2": math.inf, "df1_at_1": 0.0}
    cases = []
    for i in range(200):
        kind = SCALED_IDENTITY if i % 2 == 0 else DIAG
        rng, lam, H, U = _shrinkage_case(12_000 + i, kind)
        cases.append((lam, H))
        for alpha in rng.uniform(0.02, 0.98, size=3):
            t = shrinkage_objective(alpha, lam, H, U, 1.0)
            fd1, fd2 = shrinkage_objective_fd(alpha, lam, H, U)
            worst["df1"] = max(worst["df1"], abs(t.df1 - fd1))
            worst["df2"] = max(worst["df2"], abs(t.df2 - fd2))
            worst["d2f1"] = max(worst["d2f1"], t.d2f1)
            worst["d2f2"] = min(worst["d2f2"], t.d2f2)
        worst["df1_at_1"] = max(worst["df1_at_1"], abs(shrinkage_objective(1.0, lam, H, U, 1.0).df1))
    # residuals drawn from the model, cycling through the instances
    rng = np.random.default_rng(12)
    draws = []
    for j in range(2000):
        lam, H = cases[j % len(cases)]
        u = np.linalg.cholesky(lam) @ rng.standard_normal(lam.shape[0])
        draws.append(shrinkage_objective(0.0, lam, H, u, 1.0).df)
    draws = np.array(draws)
    mc_mean, mc_se = draws.mean(), draws.std(ddof=1) / math.sqrt(draws.size)
    ok = (worst["df1"] <= 1e-6 and worst["df2"] <= 1e-6 and worst["d2f1"] <= 1e-8 and worst["d2f2"] >= -1e-8
          and worst["df1_at_1"] <= 1e-8 and abs(mc_mean) <= 3 * mc_se)
    assert verdict(12, ok, f"max |f1'-fd| {worst['df1']:.1e}, max |f2'-fd| {worst['df2']:.1e}, "
                           f"max f1'' {worst['d2f1']:.1e}, min f2'' {worst['d2f2']:.1e}, "
                           f"max |f1'(1)| {worst['df1_at_1']:.1e}, mean f'(0) {mc_mean:.3f} (3 SE = {3 * mc_se:.3f})")


def test_criterion_13_benchmark_determinism(verdict, tmp_path, capsys):
    specs = {
        "single": {"seed": 13, "trials": 6, "graph": {"family": "er", "nodes": 80, "mean_degree": 4},
                   "diffusion": {"mu": 2.0, "sigma2": 1.0}, "fractions": [0.2, 0.4],
                   "algorithms": ["gssi", "bfs-mle", "naive-gssi"]},
        "multi": {"seed": 13, "trials": 6, "graph": {"family": "ba", "nodes": 80, "mean_degree": 4},
                  "diffusion": {"mu": 3.0, "sigma2": 1.0}, "fractions": [0.3], "algorithms": ["scce"],
                  "sources": {"counts": [2, 3], "min_distance": "avg-pairwise"}},
    }
    identical = []
    for name, spec in specs.items():
        path = tmp_path / f"{name}.json"
        path.write_text(json.dumps(spec))
        outs = []
        for run, workers in enumerate((1, 1, 8)):
            out = tmp_path / f"{name}-{run}"
            assert cli_main(["benchmark", "--spec", str(path), "--workers", str(workers), "--out-dir", str(out)]) == 0
            outs.append(((out / "trials.csv").read_bytes(), (out / "aggregate.json").read_bytes()))
        capsys.readouterr()
        identical.append(outs[0] == outs[1] == outs[2])
    ok = all(identical)
    assert verdict(13, ok, f"trials.csv and aggregate.json identical across runs and workers 1/8: "
                           f"single-source {identical[0]}, multi-source {identical[1]}")
