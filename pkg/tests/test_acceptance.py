"""Acceptance criteria 1-7.

Each test records one PASS/FAIL line, printed in the terminal summary. The
simulation studies (criteria 2-5) take several minutes on one core; their
results are computed once per session.
"""

import math
import os
import time
import warnings

import numpy as np
import pytest
from scipy import stats

from idmauc.auc import DomainError, auc_cd, auc_id, mc_auc_cd, mc_auc_id, truth_curve
from idmauc.fit import RecordArrays, gradient_check, loglik_function, weibull_loglik_grad
from idmauc.hazards import PiecewiseConstantHazard, StepCumulativeHazard, WeibullHazard
from idmauc.simulate import TRUTH, generate_dataset, scenario, simulate_paths
from idmauc.study import CD_TARGET, HR_TARGET, ID_TARGET, TRUE_HR, Target, run_scenario
from idmauc.transprob import IllnessDeathModel, pwc_transition_matrix, quad_p01, transition_matrix

LINES = []
TOL = 0.012
THREADS = os.cpu_count() or 1


def report(criterion, ok, detail):
    LINES.append(f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}")


def _by(results):
    return {(r.estimator, r.target): r for r in results}


@pytest.fixture(scope="module")
def study_a():
    return _by(run_scenario("A", ("cox-prob", "pwc", "weibull"), (ID_TARGET,), 200,
                            base_seed=1, threads=THREADS))


@pytest.fixture(scope="module")
def study_c():
    return _by(run_scenario("C", ("cox-prob", "pwc", "weibull"), (ID_TARGET, CD_TARGET), 200,
                            base_seed=1, threads=THREADS))


@pytest.fixture(scope="module")
def study_b():
    return _by(run_scenario("B", ("cox-prob", "pwc"), (HR_TARGET,), 100, base_seed=1,
                            threads=THREADS))


def _within(res, target, tol=TOL):
    return res.bias is not None and abs(res.bias - target) <= tol


def test_criterion_1_true_auc():
    t0 = time.perf_counter()
    ids = truth_curve("id", [12, 36, 60]).values
    cds = truth_curve("cd", [12, 36, 60], 60).values
    elapsed = time.perf_counter() - t0
    ok = (np.allclose(ids, [0.71, 0.72, 0.72], atol=0.005)
          and np.allclose(cds, [0.59, 0.62, 0.64], atol=0.005) and elapsed < 10)
    report(1, ok, f"I/D {np.round(ids, 4).tolist()} C/D {np.round(cds, 4).tolist()} "
                  f"({elapsed:.2f} s)")
    assert ok


def test_criterion_2_scenario_a(study_a):
    checks = [(("weibull", f"I/D t={t}"), 0.0) for t in (12, 36, 60)]
    checks += [(("cox-prob", "I/D t=12"), -0.04), (("pwc", "I/D t=12"), -0.05)]
    parts, ok = [], True
    for key, target in checks:
        r = study_a[key]
        ok &= _within(r, target)
        parts.append(f"{key[0]} {key[1]} bias {r.bias:+.4f} (ref {target:+.2f})")
    report(2, ok, "; ".join(parts))
    assert ok


def test_criterion_3_scenario_c(study_c):
    cox = study_c[("cox-prob", "I/D t=12")]
    pwc = study_c[("pwc", "C/D (12,72)")]
    ok = _within(cox, -0.21) and _within(pwc, -0.05)
    report(3, ok, f"cox I/D t=12 bias {cox.bias:+.4f} (ref -0.21); "
                  f"pwc C/D (12,72) bias {pwc.bias:+.4f} (ref -0.05)")
    assert ok


def test_criterion_4_scenario_c_cd(study_c):
    parts, ok = [], True
    for est in ("cox-prob", "weibull"):
        for lab in CD_TARGET.labels():
            r = study_c[(est, lab)]
            ok &= _within(r, 0.0)
            parts.append(f"{est} {lab} {r.bias:+.4f}")
    report(4, ok, "; ".join(parts))
    assert ok


def test_criterion_5_hazard_ratio(study_b):
    cox = study_b[("cox-prob", "HR")]
    pwc = study_b[("pwc", "HR")]
    m_cox = float(np.nanmean(cox.estimates))
    m_pwc = float(np.nanmean(pwc.estimates))
    ok = abs(m_pwc - TRUE_HR) < abs(m_cox - TRUE_HR) and m_cox < TRUE_HR
    report(5, ok, f"mean exp(beta): pwc {m_pwc:.3f}, cox {m_cox:.3f}, truth {TRUE_HR:.1f} "
                  f"(n valid {pwc.n_valid}/{cox.n_valid})")
    assert ok


def _const(l01, l02, l12):
    return IllnessDeathModel(PiecewiseConstantHazard([], [l01]), PiecewiseConstantHazard([], [l02]),
                             PiecewiseConstantHazard([], [l12]))


def test_criterion_6_property_suite(data_a):
    rng = np.random.default_rng(2024)
    weib = TRUTH.model()
    pwc = IllnessDeathModel(
        PiecewiseConstantHazard([6, 30, 60, 90], [0.02, 0.008, 0.005, 0.004, 0.003]),
        PiecewiseConstantHazard([6, 30, 60, 90], [0.025, 0.007, 0.004, 0.003, 0.003]),
        PiecewiseConstantHazard([10, 50], [0.2, 0.06, 0.03]))
    step = IllnessDeathModel(StepCumulativeHazard([2.0, 5.0, 9.0], [0.05, 0.03, 0.02]),
                             StepCumulativeHazard([1.0, 5.0, 12.0], [0.02, 0.04, 0.03]),
                             StepCumulativeHazard([3.0, 8.0, 15.0], [0.1, 0.2, 0.15]))
    results = {}

    rows, ck = 0.0, 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for _ in range(100):
            m = (weib, pwc, step, _const(0.2, 0.3, 1.0))[rng.integers(4)]
            s, u, t = np.sort(rng.uniform(0, 130, 3))
            P = transition_matrix(m, s, t).P
            rows = max(rows, np.max(np.abs(P.sum(axis=1) - 1)))
            ck = max(ck, np.max(np.abs(transition_matrix(m, s, u).P @ transition_matrix(m, u, t).P - P)))
    results["row sums"] = (rows, rows <= 1e-9)
    results["Chapman-Kolmogorov"] = (ck, ck <= 1e-6)

    dq = max(abs(pwc_transition_matrix(pwc, s, t)[0, 1] - quad_p01(pwc, s, t))
             for s, t in ((0, 5), (0, 12), (3, 45), (0, 120), (31, 95), (6, 30)))
    results["quadrature vs expm"] = (dq, dq <= 1e-7)

    dc = 0.0
    for _ in range(50):
        l01, l02, l12 = rng.uniform(0.001, 0.5, 3)
        t = rng.uniform(0.1, 30)
        if abs(l12 - l01 - l02) < 1e-3:
            continue
        l0 = l01 + l02
        closed = l01 * (math.exp(-l0 * t) - math.exp(-l12 * t)) / (l12 - l0)
        dc = max(dc, abs(pwc_transition_matrix(_const(l01, l02, l12), 0, t)[0, 1] - closed))
    results["constant closed form"] = (dc, dc <= 1e-10)

    d = RecordArrays.from_records([r for _, r in generate_dataset(scenario("B").with_seed(5))][:100])
    theta = np.log([TRUTH.alpha01, TRUTH.k, TRUTH.alpha02, TRUTH.k, TRUTH.alpha12, TRUTH.k])
    chk = gradient_check(loglik_function("weibull", d), theta,
                         lambda th: weibull_loglik_grad(th, d)[1])
    results["gradient"] = (chk.max_rel_dev, chk.max_rel_dev <= 1e-4)

    half = IllnessDeathModel(WeibullHazard(0.05, 0.5), WeibullHazard(0.05, 0.5), WeibullHazard(0.05, 0.5))
    g1 = all(auc_id(m, t) == 0.5 for m in (half, _const(0.02, 0.03, 0.03))
             for t in (0.5, 12, 36, 60, 100))
    results["gamma = 1 gives 0.5"] = (0.0, g1)

    lo, hi = 1.0, 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for m in (weib, pwc, _const(0.2, 0.3, 1.0)):
            for _ in range(40):
                s, w = rng.uniform(0.1, 110), rng.uniform(0.5, 60)
                try:
                    vals = (auc_id(m, s), auc_cd(m, s, s + w))
                except DomainError:
                    continue
                lo, hi = min(lo, *vals), max(hi, *vals)
    results["AUC in [0,1]"] = (hi, 0.0 <= lo and hi <= 1.0)

    p = simulate_paths(TRUTH, 10 ** 5, seed=21)
    a0 = TRUTH.alpha01 + TRUTH.alpha02
    pv = stats.kstest(p.t1, lambda t: -np.expm1(-a0 * np.asarray(t) ** TRUTH.k)).pvalue
    results["KS"] = (pv, pv > 0.001)

    ok = all(v[1] for v in results.values())
    report(6, ok, "; ".join(f"{k} {'ok' if v[1] else 'FAIL'} ({v[0]:.2g})" for k, v in results.items()))
    assert ok


def test_criterion_7_monte_carlo_oracle():
    paths = simulate_paths(TRUTH, 10 ** 6, seed=7)
    weib = TRUTH.model()
    parts, ok = [], True
    for t in (12.0, 36.0, 60.0):
        mc = mc_auc_id(paths, t, half_width=1.0)
        z = (mc.auc - auc_id(weib, t)) / mc.se
        ok &= abs(z) <= 3
        parts.append(f"I/D t={t:g} z={z:+.2f}")
    for s in (12.0, 36.0, 60.0):
        mc = mc_auc_cd(paths, s, s + 60)
        z = (mc.auc - auc_cd(weib, s, s + 60)) / mc.se
        ok &= abs(z) <= 3
        parts.append(f"C/D ({s:g},{s + 60:g}) z={z:+.2f}")
    report(7, ok, "; ".join(parts))
    assert ok
