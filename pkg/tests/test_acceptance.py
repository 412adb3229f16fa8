"""Acceptance criteria, one test each, at the stated tolerances.

Run with ``pytest tests/test_acceptance.py`` for a PASS/FAIL line per
criterion at the end of the report, or ``python tests/test_acceptance.py``.
"""
from __future__ import annotations

import math
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.special import ndtri

from dpgc import bundled_path
from dpgc.cli import main as cli_main
from dpgc.copula import (
    QuasiInverse,
    build_copula,
    ensure_positive_definite,
    expected_product,
    lower_factor,
    nearest_correlation_matrix,
    orthant_probability,
    rho_from_r,
    sample_synthetic,
)
from dpgc.dataset import AttributeSchema, encode_csv, pairwise_counts_fast
from dpgc.evaluate import ErrorReport, answer_queries, artificial_order_demo, query_table, run_baselines
from dpgc.privacy import (
    DEFAULT_DELTA,
    NoiseSource,
    PrivacyPlan,
    compose_epsilon,
    exact_statistics,
    mechanism_count,
    sensitivity_closed_form,
    sensitivity_demo,
    solve_per_mechanism_epsilon,
)
from helpers import direct_pearson, naive_pair_counts, planted_toy, random_tabular

REFERENCE_EPS = [(0.014782, 105), (0.007791, 378), (0.022579, 45)]


def test_c01_budget_math():
    for eps_prime, k in REFERENCE_EPS:
        eps = compose_epsilon(eps_prime, k, DEFAULT_DELTA)
        assert 0.999 < eps < 1.0001, (eps_prime, k, eps)
        solved = solve_per_mechanism_epsilon(1.0, k, DEFAULT_DELTA)
        assert abs(solved - eps_prime) <= 2e-5, (k, solved)


def test_c02_order_reversal_formula():
    for n in range(4, 201):
        for k in range(1, n + 1):
            pred, meas = artificial_order_demo(n, k / n)
            assert abs(pred - meas) <= 1e-12, (n, k, pred, meas)
        assert artificial_order_demo(n, 1.0)[0] == 2.0
    pred, meas = artificial_order_demo(5, 0.6)
    assert abs(pred - 0.4) <= 1e-12 and abs(meas - 0.4) <= 1e-12


def test_c03_pearson_sensitivity():
    _, _, gap = sensitivity_demo(10 ** 6)
    assert abs(gap - (1 - 1 / math.sqrt(2))) <= 1e-3
    for n in range(3, 51):
        x1 = np.zeros(n)
        y = np.zeros(n)
        x1[0] = y[0] = 1
        x2 = x1.copy()
        x2[1] = 1
        c1, c2 = sensitivity_closed_form(n)
        assert abs(c1 - direct_pearson(x1, y)) <= 1e-12
        assert abs(c2 - direct_pearson(x2, y)) <= 1e-12


def test_c04_copula_mapping_oracle():
    q = QuasiInverse(0.5)
    for r in (0.0, 0.2, -0.2, 0.5, -0.5, 0.8, -0.8):
        rho = rho_from_r(r, q, q, method="quadrature")
        assert abs(rho - math.sin(math.pi * r / 2)) <= 1e-2, (r, rho)
    for rho in np.linspace(-0.95, 0.95, 39):
        e = expected_product(rho, q, q, method="quadrature")
        assert abs(e - (0.25 + math.asin(rho) / (2 * math.pi))) <= 1e-3, (rho, e)


def test_c05_fast_pairwise_counts_exact():
    rng = np.random.default_rng(5)
    for _ in range(100):
        m = int(rng.integers(2, 5))
        n = int(rng.integers(1, 201))
        tab, bds = random_tabular(rng, m, 6, n)
        fast = pairwise_counts_fast(tab, bds)
        for i, j in fast.pairs():
            assert fast[i, j].as_tuple() == naive_pair_counts(bds.columns, i, j)


def test_c06_matrix_pipeline_properties():
    rng = np.random.default_rng(6)
    for _ in range(50):
        B = rng.standard_normal((30, 8))
        C = np.corrcoef(B @ rng.standard_normal((8, 40)) + 0.7 * rng.standard_normal((30, 40)))
        E = rng.normal(0, 0.15, (30, 30))
        P = np.clip(C + (E + E.T) / 2, -1, 1)
        np.fill_diagonal(P, 1.0)
        N = nearest_correlation_matrix(P)
        assert np.array_equal(N, N.T)
        assert np.max(np.abs(np.diag(N) - 1)) <= 1e-8
        assert np.linalg.eigvalsh(N).min() >= -1e-8
        P2 = ensure_positive_definite(N)
        L = lower_factor(P2)
        assert np.allclose(L, np.tril(L))
        assert np.max(np.abs(L.T @ L - P2)) <= 1e-8


def test_c07_zero_noise_end_to_end(toy):
    _, bds = toy
    stats = exact_statistics(bds)
    model = build_copula(stats)
    syn = sample_synthetic(model, bds.n, NoiseSource(7))
    n = bds.n

    true1 = answer_queries(bds, 1)
    got1 = answer_queries(syn, 1)
    p1 = true1 / n
    band1 = 4 * np.sqrt(n * p1 * (1 - p1))
    assert np.all(np.abs(got1 - true1) <= band1)

    cols, _ = query_table(bds.groups, 2)
    h = ndtri(model.f0)
    p2 = orthant_probability(h[cols[:, 0]], h[cols[:, 1]], model.correlation[cols[:, 0], cols[:, 1]])
    got2 = answer_queries(syn, 2)
    band2 = 4 * np.sqrt(n * p2 * (1 - p2))
    assert np.all(np.abs(got2 - n * p2) <= band2)


def test_c08_adult_dpc_at_desk_scale():
    schema = AttributeSchema.load(bundled_path("adult.yaml"))
    start = time.perf_counter()
    _, bds = encode_csv(bundled_path("adult.csv"), schema)
    assert (bds.n, bds.d) == (32_560, 194)
    plan = PrivacyPlan.solve(1.0, mechanism_count(schema.m), DEFAULT_DELTA)
    dpc = run_baselines(bds, "dpc", (1, 2), plan=plan, noise=NoiseSource(2024))
    elapsed = time.perf_counter() - start
    assert elapsed < 15 * 60

    eps = plan.per_mechanism_epsilon
    lap = run_baselines(bds, "Lap", (1, 2), noise=NoiseSource(2024), lap_eps={1: eps, 2: eps})
    reports = {}
    for o in (1, 2):
        true = answer_queries(bds, o)
        reports["dpc", o] = ErrorReport.from_answers("dpc", f"Q{o}", true, dpc.answers[o])
        reports["Lap", o] = ErrorReport.from_answers("Lap", f"Q{o}", true, lap.answers[o])
    assert reports["dpc", 1].summary(0.01)[1] <= 1000
    assert reports["dpc", 2].summary(0.01)[1] <= 1200
    for beta in (0.05, 0.01):
        assert reports["dpc", 2].summary(beta)[0] < reports["Lap", 2].summary(beta)[0]


def test_c09_synth_is_deterministic(tmp_path):
    outs = []
    for workers in (1, 4):
        out = tmp_path / f"w{workers}"
        code = cli_main(["synth", "--seed", "99", "--out", str(out), "--workers", str(workers),
                         "--dump-model", "--decode", "repair"])
        assert code == 0
        outs.append(out)
    names = sorted(p.name for p in outs[0].iterdir())
    assert names == sorted(p.name for p in outs[1].iterdir())
    assert {"synthetic.csv", "plan.json", "config.json", "seed.txt", "versions.json"} <= set(names)
    for name in names:
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), name


def test_c10_epsilon_sweep_monotone(toy):
    _, bds = toy
    true = answer_queries(bds, 1)
    pooled = {}
    for eps in (0.25, 5.0):
        plan_errors = []
        for seed in range(10):
            plan = PrivacyPlan.solve(eps, mechanism_count(bds.groups.m))
            res = run_baselines(bds, "dpc", (1,), plan=plan, noise=NoiseSource(seed))
            plan_errors.append(np.abs(res.answers[1] - true))
        pooled[eps] = np.median(np.concatenate(plan_errors))
    assert pooled[0.25] > pooled[5.0], pooled


if __name__ == "__main__":
    import sys

    sys.path.insert(0, str(Path(__file__).parent))
    sys.exit(pytest.main([__file__, "-q"]))
