"""Acceptance criteria, one test each; every test records a PASS/FAIL line.

Run directly (``python tests/test_acceptance.py``) for the default profile,
or with ``--all`` to include the long semi-supervised rate run.
"""

import json
import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

import conftest
from conftest import gram_of
from oracles import krylov_oracle, random_psd, weighted_objective
from kernelcg import (
    CGConfig,
    FilterSpec,
    StoppingConfig,
    cg_run,
    filter_fit,
    filter_function,
    poly_apply,
    residual_vector,
)
from kernelcg.config import load_config
from kernelcg.stopping import rule_a_threshold, threshold_rule_B
from kernelcg.experiment import run_experiment

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def record(number, name, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {name}: {detail}"
    conftest.ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def run_config(name, tmp_path):
    cfg = load_config(CONFIGS / name)
    out = Path(tmp_path) / Path(name).stem
    status = run_experiment(cfg, out_dir=out, quiet=True)
    summary = json.loads((out / "summary.json").read_text())
    return status, summary, out


def test_criterion_1_cg_matches_krylov_oracle():
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(8, 41))
        m = int(rng.integers(1, 7))
        cond = float(10 ** rng.uniform(0, 4))
        l = int(rng.integers(0, 3))
        K = random_psd(rng, n, cond)
        y = rng.normal(size=n)
        fit = cg_run(gram_of(K, y), CGConfig(l=l, max_iters=m))
        for j in range(1, fit.stop_index + 1):
            _, obj = krylov_oracle(K, y, j, l)
            got = weighted_objective(K, y, fit.alpha(j), l)
            worst = max(worst, abs(got - obj) / obj)
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-8 and elapsed < 60
    record(1, "CG oracle equivalence", ok,
           f"max relative objective gap {worst:.2e} (tol 1e-8), {elapsed:.1f}s (limit 60s)")
    assert ok


def test_criterion_2_residual_polynomial_algebra():
    rng = np.random.default_rng(2)
    orth = recon = 0.0
    p0_ok = q_ok = True
    # conditioning >= 10 keeps six-step residuals well above roundoff
    for _ in range(100):
        n = int(rng.integers(15, 41))
        K = random_psd(rng, n, float(10 ** rng.uniform(1, 4)))
        y = rng.normal(size=n)
        G = gram_of(K, y)
        fit = cg_run(G, CGConfig(l=1, max_iters=6))
        R = np.array([residual_vector(G, fit, m) for m in range(fit.stop_index + 1)])
        gram = R @ K @ K @ R.T
        d = np.sqrt(np.diag(gram))
        normalized = gram / np.outer(d, d)
        orth = max(orth, np.abs(normalized - np.diag(np.diag(normalized))).max())
        q_ok &= bool(np.all(np.diff(fit.q_at_zero) >= 0))
        for m in range(1, fit.stop_index + 1):
            p0_ok &= fit.residual_poly(m)[0] == 1.0
            alpha = poly_apply(G, fit.poly_coeffs[m], y)
            recon = max(recon, np.linalg.norm(alpha - fit.alpha(m)) / np.linalg.norm(fit.alpha(m)))
    ok = orth <= 1e-8 and recon <= 1e-8 and p0_ok and q_ok
    record(2, "residual polynomial algebra", ok,
           f"K^2-orthogonality {orth:.1e}, reconstruction {recon:.1e} (tol 1e-8), "
           f"p_m(0)=1 {p0_ok}, q_m(0) non-decreasing {q_ok}")
    assert ok


def test_criterion_3_threshold_hand_values():
    a = rule_a_threshold(0.0, 100, StoppingConfig(rule="A_adaptive", tau=2.0, gamma=0.1, M=1.0), kappa=1.0)
    b = threshold_rule_B(
        StoppingConfig(rule="B_fixed", tau_prime=2.0, M=1.0, D=1.0, gamma=0.06, r=0.5, s=1.0), 10_000, kappa=1.0
    )
    gap_a = abs(a - 0.8 * math.log(20))
    gap_b = abs(b - 0.08 * math.log(100))
    ok = gap_a <= 1e-10 and gap_b <= 1e-10
    record(3, "threshold hand values", ok,
           f"rule A {a:.10f} (gap {gap_a:.1e}), rule B {b:.10f} (gap {gap_b:.1e}), tol 1e-10")
    assert ok


def test_criterion_4_inner_rate(tmp_path):
    status, summary, _ = run_config("rates_inner.json", tmp_path)
    report = summary["methods"]["cg_rule_b"]
    slope = report["slope"]
    ok = status == 0 and slope is not None and abs(slope - (-0.8)) <= 0.20
    record(4, "inner-case rate, rule B", ok,
           f"slope {slope:.3f} +/- {report['slope_se']:.3f}, target -0.80 +/- 0.20")
    assert ok


def test_criterion_5_rule_a_adaptivity(tmp_path):
    slopes = {}
    for r, name in ((0.5, "adaptive_r050.json"), (1.0, "adaptive_r100.json")):
        status, summary, _ = run_config(name, tmp_path)
        assert status == 0
        slopes[r] = summary["methods"]["cg_rule_a"]["slope"]
    bound = {r: -2 * r / (2 * r + 1) + 0.25 for r in slopes}
    ok = all(slopes[r] <= bound[r] for r in slopes) and slopes[1.0] < slopes[0.5]
    record(5, "rule A adaptivity", ok,
           f"r=0.5 slope {slopes[0.5]:.3f} (need <= {bound[0.5]:.3f}), "
           f"r=1 slope {slopes[1.0]:.3f} (need <= {bound[1.0]:.3f} and < r=0.5 slope)")
    assert ok


@pytest.mark.slow
def test_criterion_6_semi_supervised_outer_rate(tmp_path):
    status, summary, _ = run_config("semi_supervised.json", tmp_path)
    slope = summary["methods"]["cg_rule_b_semi"]["slope"]
    ok = status == 0 and slope is not None and slope <= -0.25
    record(6, "semi-supervised outer rate", ok, f"slope {slope:.3f}, need <= -0.25")
    assert ok


def test_criterion_7_concentration_audits(tmp_path):
    start = time.perf_counter()
    cfg = load_config(CONFIGS / "audit.json")
    assert run_experiment(cfg, out_dir=tmp_path / "audit", quiet=True) == 0
    result = json.loads((tmp_path / "audit" / "audit.json").read_text())
    elapsed = time.perf_counter() - start
    op = result["operator"]["violation_fraction"]
    wp = result["warped"]["violation_fraction"]
    ok = op <= 0.15 and wp <= 0.15 and elapsed < 120
    record(7, "concentration audits", ok,
           f"operator {op:.3f}, warped {wp:.3f} (limit 0.15), {elapsed:.1f}s (limit 120s)")
    assert ok


def test_criterion_8_baselines():
    rng = np.random.default_rng(8)
    y = rng.normal(size=6)
    tik_gap = np.abs(filter_fit(gram_of(np.eye(6), y), FilterSpec("tikhonov", 1.0)) - y / 2).max()

    x = np.linspace(0.0, 1.0, 201)
    monotone = True
    families = {
        "tikhonov": [1.0, 0.1, 0.01, 0.001],
        "spectral_cutoff": [1.0, 0.1, 0.01, 0.001],
        "landweber": [1, 10, 100, 1000],
    }
    for family, grid in families.items():
        prev = None
        for v in grid:
            spec = FilterSpec(family, v, step=0.5) if family == "landweber" else FilterSpec(family, v)
            h = x * filter_function(spec, x, kappa=1.0)
            monotone &= bool(np.all(np.diff(h) >= -1e-12)) and bool(np.all((h >= -1e-12) & (h <= 1 + 1e-12)))
            if prev is not None:
                monotone &= bool(np.all(h >= prev - 1e-12))
            prev = h

    K = random_psd(rng, 5, cond=5)
    y = rng.normal(size=5)
    G = gram_of(K, y, kappa=1.0)
    alpha = filter_fit(G, FilterSpec("landweber", 10_000, step=0.5))
    exact = np.linalg.solve(K, y)
    lw_gap = np.linalg.norm(alpha - exact) / np.linalg.norm(exact)

    ok = tik_gap <= 1e-12 and monotone and lw_gap <= 1e-4
    record(8, "baseline sanity", ok,
           f"Tikhonov identity gap {tik_gap:.1e}, filter monotonicity {monotone}, "
           f"Landweber-vs-inverse gap {lw_gap:.1e} (tol 1e-4)")
    assert ok


def test_criterion_9_determinism(tmp_path):
    cfg = load_config(CONFIGS / "baselines.json")
    blobs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        assert run_experiment(cfg, out_dir=out, quiet=True) == 0
        blobs.append((out / "results.csv").read_bytes())
    ok = blobs[0] == blobs[1]
    n_rows = blobs[0].count(b"\n") - 1
    record(9, "harness determinism", ok, f"two runs, {n_rows} rows each, byte-identical {ok}")
    assert ok


if __name__ == "__main__":
    args = ["-q", "-s", __file__]
    if "--all" in sys.argv:
        args += ["-m", ""]
    sys.exit(pytest.main(args))
