"""Monte-Carlo simulation study: replicate, fit, evaluate, summarize."""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .auc import CUMULATIVE, INCIDENT, auc_cd, auc_id, auc_id_riskset, normalize_definition, truth_curve
from .fit import FitError, RecordArrays, fit_cox_td, fit_pwc_ic, fit_weibull_ic
from .simulate import TRUTH, ScenarioConfig, scenario

ESTIMATORS = ("cox-prob", "cox-riskset", "pwc", "weibull")
HAZARD_RATIO = "hr"
TRUE_HR = TRUTH.alpha12 / TRUTH.alpha02
# the piecewise estimator of the study follows panel-data software conventions
PWC_STUDY_OPTIONS = {"proportional": True, "marker": "observed"}


@dataclass(frozen=True)
class Target:
    """Evaluation target: I/D or C/D AUC at ``times``, or the disease hazard ratio."""

    definition: str
    times: Tuple[float, ...] = ()
    window: Optional[float] = None

    def __post_init__(self):
        if self.definition != HAZARD_RATIO:
            object.__setattr__(self, "definition", normalize_definition(self.definition))
        object.__setattr__(self, "times", tuple(float(t) for t in self.times))
        if self.definition == CUMULATIVE and not self.window:
            raise ValueError("C/D target needs a window")

    def labels(self) -> List[str]:
        if self.definition == HAZARD_RATIO:
            return ["HR"]
        if self.definition == INCIDENT:
            return [f"I/D t={_fmt(t)}" for t in self.times]
        return [f"C/D ({_fmt(s)},{_fmt(s + self.window)})" for s in self.times]


def _fmt(x: float) -> str:
    return f"{x:g}"


ID_TARGET = Target(INCIDENT, (12.0, 36.0, 60.0))
CD_TARGET = Target(CUMULATIVE, (12.0, 36.0, 60.0), 60.0)
HR_TARGET = Target(HAZARD_RATIO)


@dataclass(frozen=True)
class StudyResult:
    scenario: str
    estimator: str
    target: str
    estimates: Tuple[float, ...]
    truth: float
    bias: Optional[float]
    emp_se: Optional[float]
    rmse: Optional[float]
    n_valid: int
    n_replications: int


def performance(estimates: Sequence[float], truth: float):
    """``(bias, emp_se, rmse)``; ``emp_se`` uses the ``n - 1`` denominator."""
    x = np.asarray(estimates, dtype=float)
    if x.size < 2:
        raise ValueError("insufficient replications")
    err = x - truth
    return float(err.mean()), float(x.std(ddof=1)), float(math.sqrt(np.mean(err ** 2)))


# -- one replication ---------------------------------------------------------------

def _evaluate(estimator, fitted, data, target: Target) -> List[float]:
    if target.definition == HAZARD_RATIO:
        if estimator in ("cox-prob", "cox-riskset"):
            return [fitted.hazard_ratio]
        if estimator == "pwc" and fitted.proportional:
            return [fitted.hazard_ratio]
        return [math.nan]
    out = []
    for s in target.times:
        if estimator == "cox-riskset":
            if target.definition != INCIDENT:
                out.append(math.nan)
                continue
            out.append(auc_id_riskset(fitted, data, s))
        elif target.definition == INCIDENT:
            out.append(auc_id(fitted, s))
        else:
            out.append(auc_cd(fitted, s, s + target.window))
    return out


def _fit(estimator: str, data: RecordArrays, pwc_options: dict):
    if estimator in ("cox-prob", "cox-riskset"):
        return fit_cox_td(data)
    if estimator == "pwc":
        return fit_pwc_ic(data, with_se=False, **pwc_options)
    if estimator == "weibull":
        return fit_weibull_ic(data, with_se=False)
    raise ValueError(f"unknown estimator {estimator!r}; valid: {', '.join(ESTIMATORS)}")


def run_replication(config: ScenarioConfig, seed: int, estimators: Sequence[str],
                    targets: Sequence[Target], pwc_options: Optional[dict] = None):
    """Estimates of every (estimator, target label) for one simulated dataset.

    Invalid fits (errors, non-convergence, non-finite targets) yield NaN.
    """
    from .simulate import generate_dataset

    pwc_options = dict(PWC_STUDY_OPTIONS) if pwc_options is None else pwc_options
    data = RecordArrays.from_records([rec for _, rec in generate_dataset(config.with_seed(seed))])
    out: Dict[Tuple[str, str], float] = {}
    cache = {}
    for est in estimators:
        key = "cox" if est.startswith("cox") else est
        labels = [lab for t in targets for lab in t.labels()]
        try:
            if key not in cache:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", RuntimeWarning)
                    cache[key] = _fit(est, data, pwc_options)
            fitted = cache[key]
            if getattr(fitted, "converged", True) is False:
                raise FitError("not converged")
            values = [v for t in targets for v in _evaluate(est, fitted, data, t)]
        except (FitError, ValueError, ArithmeticError):
            values = [math.nan] * len(labels)
        for lab, v in zip(labels, values):
            out[(est, lab)] = v if np.isfinite(v) else math.nan
    return out


def _run_one(args):
    return run_replication(*args)


# -- scenario loop -----------------------------------------------------------------

def _truths(targets: Sequence[Target]) -> Dict[str, float]:
    out = {}
    for t in targets:
        if t.definition == HAZARD_RATIO:
            out["HR"] = TRUE_HR
            continue
        curve = truth_curve(t.definition, t.times, t.window)
        out.update(zip(t.labels(), curve.values))
    return out


def run_scenario(scenario_: ScenarioConfig | str, estimators: Sequence[str] = ESTIMATORS,
                 targets: Sequence[Target] = (ID_TARGET, CD_TARGET),
                 n_replications: int = 200, base_seed: int = 1, threads: int = 1,
                 pwc_options: Optional[dict] = None) -> List[StudyResult]:
    """Replicate a scenario; replication ``r`` uses seed ``base_seed + r``.

    Results are reduced in replication order, so the output does not depend
    on ``threads``.
    """
    cfg = scenario(scenario_) if isinstance(scenario_, str) else scenario_
    for e in estimators:
        if e not in ESTIMATORS:
            raise ValueError(f"unknown estimator {e!r}; valid: {', '.join(ESTIMATORS)}")
    jobs = [(cfg, base_seed + r, tuple(estimators), tuple(targets), pwc_options)
            for r in range(n_replications)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            reps = list(pool.map(_run_one, jobs, chunksize=max(1, n_replications // (4 * threads))))
    else:
        reps = [_run_one(j) for j in jobs]
    truths = _truths(targets)
    results = []
    for est in estimators:
        for t in targets:
            for lab in t.labels():
                vals = np.array([rep[(est, lab)] for rep in reps])
                if np.all(np.isnan(vals)) and _undefined(est, t):
                    continue
                valid = vals[np.isfinite(vals)]
                if valid.size >= 2:
                    bias, se, rmse = performance(valid, truths[lab])
                else:
                    bias = se = rmse = None
                results.append(StudyResult(cfg.name or "custom", est, lab, tuple(vals.tolist()),
                                           truths[lab], bias, se, rmse, int(valid.size),
                                           n_replications))
    return results


def _undefined(estimator: str, target: Target) -> bool:
    # combinations with no estimate by construction are not reported
    if target.definition == HAZARD_RATIO:
        return estimator == "weibull"
    return estimator == "cox-riskset" and target.definition == CUMULATIVE


# -- report --------------------------------------------------------------------------

REPORT_HEADER = ("scenario", "estimator", "target", "truth", "bias", "emp_se", "rmse",
                 "n_valid", "n_replications")
_EST_ORDER = {e: i for i, e in enumerate(ESTIMATORS)}


def _target_key(label: str):
    kind = {"I": 0, "C": 1, "H": 2}[label[0]]
    nums = [float(x) for x in label.replace("(", " ").replace(")", " ").replace(",", " ")
            .replace("=", " ").split() if _isnum(x)]
    return kind, nums


def _isnum(x):
    try:
        float(x)
        return True
    except ValueError:
        return False


def study_report(results: Sequence[StudyResult]) -> List[tuple]:
    """Header plus one row per result, ordered by scenario, AUC type, estimator, time."""
    rows = sorted(results, key=lambda r: (r.scenario, _target_key(r.target)[0],
                                          _EST_ORDER.get(r.estimator, 99),
                                          _target_key(r.target)[1]))
    return [REPORT_HEADER] + [
        (r.scenario, r.estimator, r.target, r.truth, r.bias, r.emp_se, r.rmse, r.n_valid,
         r.n_replications) for r in rows]
