import math
import warnings
from dataclasses import replace

import numpy as np
import pytest
from scipy import optimize

from idmauc.core import ObservedRecord
from idmauc.fit import (FitError, LikelihoodWarning, RecordArrays, fit_cox_td, fit_pwc_ic,
                        fit_weibull_ic, gradient_check, ic_loglik, ic_terms, loglik_function,
                        nelson_aalen_01, weibull_loglik_grad)
from idmauc.hazards import PiecewiseConstantHazard, WeibullHazard
from idmauc.simulate import (TRUTH, Administrative, ScenarioConfig, WeibullParams, generate_dataset,
                             scenario, simulate_paths)
from idmauc.transprob import IllnessDeathModel

from conftest import dataset

TRUE_THETA = np.log([0.05, 0.5, 0.05, 0.5, 0.56, 0.5])


def const(l01, l02, l12):
    return IllnessDeathModel(PiecewiseConstantHazard([], [l01]), PiecewiseConstantHazard([], [l02]),
                             PiecewiseConstantHazard([], [l12]))


def rec(visits, marker, T, dead):
    return ObservedRecord(tuple(visits), tuple(marker), T, dead)


# -- likelihood ---------------------------------------------------------------------

def test_loglik_examples():
    m = const(0.2, 0.3, 1.0)
    assert ic_loglik(m, [rec([0, 2], [0, 0], 2.0, 0)]) == pytest.approx(-0.5 * 2.0, abs=1e-12)
    expected = math.log(math.exp(-0.5) * 0.3 + 0.4 * (math.exp(-0.5) - math.exp(-1.0)))
    assert ic_loglik(m, [rec([0], [0], 1.0, 1)]) == pytest.approx(expected, abs=1e-10)
    assert math.exp(expected) == pytest.approx(0.2775, abs=1e-4)


def test_pattern_b_with_l_equal_t():
    m = const(0.2, 0.3, 1.0)
    # last negative visit at the death time: direct-death term only
    assert ic_loglik(m, [rec([0, 2], [0, 0], 2.0, 1)]) == pytest.approx(-1.0 + math.log(0.3), abs=1e-12)


def test_impossible_path_is_penalized():
    m = IllnessDeathModel(PiecewiseConstantHazard([], [0.0]), PiecewiseConstantHazard([], [0.3]),
                          PiecewiseConstantHazard([], [1.0]))
    data = [rec([0, 3], [0, 0], 3.0, 0), rec([0, 3, 6], [0, 0, 1], 7.0, 1)]
    with pytest.warns(LikelihoodWarning, match=r"subjects \[1\]"):
        assert ic_loglik(m, data) == -math.inf


def test_loglik_depends_only_on_summary(data_a):
    _, recs, _ = data_a
    m = TRUTH.model()
    sub = recs[:200]
    perm = [sub[i] for i in np.random.default_rng(0).permutation(len(sub))]
    assert ic_loglik(m, perm) == pytest.approx(ic_loglik(m, sub), rel=1e-13)
    # extra negative visits before L do not change (L, R, T, delta)
    r = rec([0, 3, 6, 9], [0, 0, 1, 1], 10.0, 1)
    r2 = rec([0, 1, 2, 3, 6, 9], [0, 0, 0, 0, 1, 1], 10.0, 1)
    assert ic_terms(m, [r])[0] == ic_terms(m, [r2])[0]


def test_loglik_backends_match_quadrature(small_records):
    # generic quadrature for a mixed-family model vs specialised paths
    w = TRUTH.model()
    mixed = IllnessDeathModel(w.h01, w.h02, WeibullHazard(0.56, 0.5))
    assert ic_loglik(mixed, small_records) == pytest.approx(ic_loglik(w, small_records), abs=1e-7)


# -- gradients ----------------------------------------------------------------------

def test_gradient_check_quadratic():
    A = np.array([[3.0, 1.0], [1.0, 2.0]])
    f = lambda x: -0.5 * x @ A @ x + x[0]
    g = lambda x: -A @ x + np.array([1.0, 0.0])
    assert gradient_check(f, [0.3, -1.2], g).max_rel_dev < 1e-8
    assert gradient_check(f, [0.3, -1.2]).max_rel_dev < 1e-8


def test_weibull_gradient_at_truth(small_records):
    d = RecordArrays.from_records(small_records)
    f = loglik_function("weibull", d)
    chk = gradient_check(f, TRUE_THETA, lambda th: weibull_loglik_grad(th, d)[1])
    assert chk.max_rel_dev < 1e-4
    assert chk.informative.all()
    assert weibull_loglik_grad(TRUE_THETA, d)[0] == pytest.approx(f(TRUE_THETA), rel=1e-12)


def test_gradient_plateau_flagged(small_records):
    f = loglik_function("pwc", small_records, cutpoints=(6, 30, 500))
    theta = np.log(np.r_[[0.01] * 4, [0.005] * 4, [0.05] * 4])
    chk = gradient_check(f, theta)
    # the segment beyond all follow-up carries no information
    assert not chk.informative[3] and not chk.informative[7] and not chk.informative[11]
    assert chk.deviations[3] == 0.0
    assert chk.informative[:3].all()


# -- Cox --------------------------------------------------------------------------

def test_cox_hand_oracle():
    # death at 5: risk set {A(1), B(0), C(0), D(0)}; death at 8: {B(0), D(1)}
    # score 3/(w+3) = w/(1+w)  =>  w = sqrt(3)
    data = [rec([0, 3], [0, 1], 5.0, 1), rec([0, 3, 6], [0, 0, 0], 8.0, 1),
            rec([0, 3], [0, 0], 6.0, 0), rec([0, 3, 6], [0, 0, 1], 10.0, 0)]
    f = fit_cox_td(data)
    assert f.beta == pytest.approx(0.5 * math.log(3.0), abs=1e-8)
    w = math.sqrt(3.0)
    assert f.baseline02.jump_times.tolist() == [5.0, 8.0]
    assert np.allclose(f.baseline02.increments, [1 / (w + 3), 1 / (1 + w)])
    assert np.allclose(f.cumhaz12.increments, w * f.baseline02.increments)
    assert f.cumhaz01.jump_times.tolist() == [3.0, 6.0]
    assert np.allclose(f.cumhaz01.increments, [1 / 4, 1 / 3])


def test_cox_errors():
    with pytest.raises(FitError, match="no data"):
        fit_cox_td([])
    with pytest.raises(FitError, match="no deaths"):
        fit_cox_td([rec([0, 3], [0, 0], 4.0, 0), rec([0, 3], [0, 1], 5.0, 0)])
    with pytest.raises(FitError, match="marker constant"):
        fit_cox_td([rec([0, 3], [0, 0], 4.0, 1), rec([0, 3], [0, 0], 5.0, 0)])


def test_cox_scenario_g():
    d = [r for _, r in generate_dataset(scenario("G").with_seed(2))]
    f = fit_cox_td(d)
    assert 9.5 <= f.hazard_ratio <= 12.5
    assert f.stderr > 0


def test_nelson_aalen_01_risk_set():
    data = [rec([0, 3], [0, 1], 5.0, 1), rec([0, 3, 6], [0, 0, 1], 8.0, 0), rec([0, 3], [0, 0], 4.0, 0)]
    na = nelson_aalen_01(data)
    assert na.jump_times.tolist() == [3.0, 6.0]
    assert np.allclose(na.increments, [1 / 3, 1.0])


# -- Weibull MLE --------------------------------------------------------------------

@pytest.fixture(scope="module")
def weibull_g():
    d = [r for _, r in generate_dataset(scenario("G").with_seed(4))]
    return d, fit_weibull_ic(d)


def test_weibull_recovers_truth(weibull_g):
    _, f = weibull_g
    truth = dict(alpha01=0.05, k01=0.5, alpha02=0.05, k02=0.5, alpha12=0.56, k12=0.5)
    assert f.converged and f.grad_norm < 1e-6
    for name, v in truth.items():
        assert abs(f.params[name] - v) < 3 * f.stderr[name], name
    assert all(v > 0 for v in f.params.values())


def test_weibull_optimizer_improves_and_numeric_agrees(weibull_g):
    d, f = weibull_g
    from idmauc.fit import weibull_initial
    th0 = weibull_initial(d)
    assert f.loglik >= ic_loglik(f.model, d) - 1e-9
    assert f.loglik > loglik_function("weibull", d)(th0)
    g = fit_weibull_ic(d, gradient="numeric", with_se=False)
    assert g.loglik == pytest.approx(f.loglik, abs=1e-5)


def _exact_oracle(paths, cens):
    t1, ill, death = paths.t1, paths.illness, paths.death
    x0 = np.minimum(t1, cens)
    ev01 = ill & (t1 <= cens)
    ev02 = ~ill & (t1 <= cens)
    tt = np.minimum(death, cens)
    ev12 = ev01 & (death <= cens)

    def competing(mask, exit_, entry=None):
        def nll(th):
            a, k = np.exp(th)
            e = 0.0 if entry is None else a * entry ** k
            return -(np.sum(np.log(a * k * exit_[mask] ** (k - 1))) - np.sum(a * exit_ ** k - e))
        return np.exp(optimize.minimize(nll, [np.log(0.05), np.log(0.5)], method="BFGS",
                                        options={"gtol": 1e-9}).x)

    a01, k01 = competing(ev01, x0)
    a02, k02 = competing(ev02, x0)
    a12, k12 = competing(ev12[ev01], tt[ev01], t1[ev01])
    return dict(alpha01=a01, k01=k01, alpha02=a02, k02=k02, alpha12=a12, k12=k12)


def test_weibull_exact_information_limit():
    paths = simulate_paths(TRUTH, 2000, seed=8)
    cens = 120.0
    recs = []
    for t1, ill, death in zip(paths.t1, paths.illness, paths.death):
        T = min(death, cens)
        dead = int(death <= cens)
        if ill and t1 <= cens:
            L = t1 * (1 - 1e-6)
            recs.append(rec([0.0, L, t1], [0, 0, 1], T, dead))
        else:
            recs.append(rec([0.0, T], [0, 0], T, dead))
    f = fit_weibull_ic(recs, with_se=False)
    oracle = _exact_oracle(paths, cens)
    for k, v in oracle.items():
        assert f.params[k] == pytest.approx(v, rel=1e-3), k


def test_weibull_errors():
    with pytest.raises(FitError, match="no data"):
        fit_weibull_ic([])
    with pytest.raises(FitError):
        fit_weibull_ic([rec([0, 3], [0, 0], 4.0, 1)])


def test_weibull_nonconvergence_flagged(small_records):
    f = fit_weibull_ic(small_records, max_iter=2, with_se=False)
    assert not f.converged


# -- piecewise-constant MLE ----------------------------------------------------------

def test_pwc_constant_consistency():
    w = WeibullParams(k=1.0, alpha01=0.01, alpha02=0.005, alpha12=0.05)
    cfg = ScenarioConfig(2000, Administrative(120), 6.0, weibull=w, seed=3)
    d = [r for _, r in generate_dataset(cfg)]
    f = fit_pwc_ic(d, cutpoints=())
    for name, v in (("rate01_0", 0.01), ("rate02_0", 0.005), ("rate12_0", 0.05)):
        assert abs(f.params[name] - v) < 3 * f.stderr[name], name


def test_pwc_proportional_beta_zero_equals_constrained(small_records):
    cuts = (6, 30, 60, 90)
    fp = loglik_function("pwc", small_records, cuts, proportional=True)
    fu = loglik_function("pwc", small_records, cuts)
    th = np.log(np.r_[[0.01, 0.006, 0.004, 0.003, 0.003], [0.02, 0.007, 0.004, 0.003, 0.003]])
    assert fp(np.r_[th, 0.0]) == pytest.approx(fu(np.r_[th, th[5:]]), abs=1e-8)


def test_pwc_fit_matches_generic_loglik(data_a):
    _, recs, d = data_a
    f = fit_pwc_ic(d, proportional=True)
    assert f.converged
    assert f.loglik == pytest.approx(ic_loglik(f.model, recs), abs=1e-8)
    assert f.hazard_ratio == pytest.approx(math.exp(f.params["beta"]))
    assert set(f.stderr) == set(f.params)


def test_singular_information_drops_stderr(small_records):
    # no illness is observed after 90 months: that rate runs to the boundary
    f = fit_pwc_ic(small_records, proportional=True)
    assert f.converged
    assert f.params["rate01_4"] < 1e-6
    assert f.stderr is None


def test_pwc_empty_segment_dropped(small_records):
    with pytest.warns(RuntimeWarning, match="no risk time"):
        f = fit_pwc_ic(small_records, cutpoints=(6, 30, 400), with_se=False)
    assert f.cutpoints["01"] == (6.0, 30.0)
    assert "rate01_3" not in f.params


def test_pwc_observed_marker_option(small_records):
    f = fit_pwc_ic(small_records, proportional=True, marker="observed", with_se=False)
    assert f.converged and f.proportional
    with pytest.raises(ValueError):
        fit_pwc_ic(small_records, marker="observed")
    with pytest.raises(ValueError):
        fit_pwc_ic(small_records, marker="other")


def test_pwc_cutpoint_validation(small_records):
    with pytest.raises(ValueError):
        fit_pwc_ic(small_records, cutpoints=(30, 6))
    f = fit_pwc_ic(small_records, cutpoints={"01": (12,), "02": (6, 30), "12": ()}, with_se=False)
    assert f.cutpoints == {"01": (12.0,), "02": (6.0, 30.0), "12": ()}
