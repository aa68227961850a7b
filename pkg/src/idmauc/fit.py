"""Model fitting from interval-censored illness-death records.

* :func:`fit_cox_td` -- Cox model for death with the observed disease marker
  as a binary time-dependent covariate (diagnosis time taken as exact).
* :func:`fit_weibull_ic`, :func:`fit_pwc_ic` -- maximum likelihood under the
  interval-censored illness-death likelihood :func:`ic_loglik`.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np
from scipy import optimize

from . import kernels
from .core import ObservedRecord
from .hazards import PiecewiseConstantHazard, StepCumulativeHazard, WeibullHazard
from .transprob import (
    IllnessDeathModel,
    _occupancy_integral,
    pwc_p01_many,
    quad_p01,
    weibull_p01_many,
)

DEFAULT_CUTPOINTS = (6.0, 30.0, 60.0, 90.0)
GTOL = 1e-6
FTOL = 1e-10
HESS_STEP = 1e-4


class FitError(RuntimeError):
    pass


class LikelihoodWarning(RuntimeWarning):
    pass


# -- data -----------------------------------------------------------------------

@dataclass(frozen=True)
class RecordArrays:
    """Columnar ``(L, R, T, delta)``; ``R`` is NaN for never-diagnosed subjects."""

    L: np.ndarray
    R: np.ndarray
    T: np.ndarray
    delta: np.ndarray

    @property
    def diagnosed(self) -> np.ndarray:
        return ~np.isnan(self.R)

    def __len__(self):
        return self.T.size

    @classmethod
    def from_records(cls, records: Sequence[ObservedRecord]) -> "RecordArrays":
        L = np.array([r.last_negative if r.last_negative is not None else 0.0 for r in records],
                     dtype=float)
        R = np.array([np.nan if r.first_positive is None else r.first_positive for r in records],
                     dtype=float)
        T = np.array([r.survival_time for r in records], dtype=float)
        d = np.array([r.death_indicator for r in records], dtype=int)
        return cls(L, R, T, d)


Data = Union[RecordArrays, Sequence[ObservedRecord]]


def as_arrays(data: Data) -> RecordArrays:
    return data if isinstance(data, RecordArrays) else RecordArrays.from_records(list(data))


# -- likelihood -----------------------------------------------------------------

def _p01_many(model: IllnessDeathModel, s, t):
    fam = model.family
    if fam == "weibull":
        return weibull_p01_many(model, s, t)
    if fam == "pwc":
        return pwc_p01_many(model, s, t)
    return np.array([quad_p01(model, a, b) for a, b in zip(s, t)])


def ic_terms(model: IllnessDeathModel, data: Data) -> np.ndarray:
    """Per-subject log-likelihood contributions (``-inf`` where impossible).

    With ``X = R`` for diagnosed and ``X = T`` otherwise, every pattern is
    built from ``P00(0,L)``, ``P01(L,X)``, ``P11(X,T)``, ``P00(L,T)`` and the
    death hazards at ``T``.
    """
    d = as_arrays(data)
    h01, h02, h12 = model.h01, model.h02, model.h12
    diag = d.diagnosed
    X = np.where(diag, d.R, d.T)
    H0L = h01.cumulative(d.L) + h02.cumulative(d.L)
    p01 = _p01_many(model, d.L, X)
    p11 = np.exp(-(h12.cumulative(d.T) - h12.cumulative(X)))
    p00 = np.exp(-(h01.cumulative(d.T) + h02.cumulative(d.T) - H0L))
    died = d.delta == 1
    r02 = np.where(died, h02.rate(np.where(died, d.T, 1.0)), 1.0)
    r12 = np.where(died, h12.rate(np.where(died, d.T, 1.0)), 1.0)
    inner = np.where(diag, p01 * p11 * r12, p00 * r02 + p01 * r12)
    with np.errstate(divide="ignore"):
        return -H0L + np.log(inner)


def _dlogcum(a, k, x):
    # derivatives of alpha * x**k with respect to (log alpha, log k)
    lam = a * x ** k
    with np.errstate(divide="ignore", invalid="ignore"):
        xl = np.where(x > 0, lam * k * np.log(np.where(x > 0, x, 1.0)), 0.0)
    return lam, xl


def weibull_loglik_grad(theta, data: Data):
    """Weibull ``ic_loglik`` and its gradient in log-parameters.

    The gradient of ``P01`` is integrated alongside ``P01`` on the same
    quadrature panels; everything else is closed form.
    """
    d = as_arrays(data)
    a01, k01, a02, k02, a12, k12 = np.exp(theta)
    diag = d.diagnosed
    died = d.delta == 1
    L, T = d.L, d.T
    X = np.where(diag, d.R, T)
    p01, dp01 = kernels.weibull_p01(np.ascontiguousarray(L), np.ascontiguousarray(X),
                                    a01, k01, a02, k02, a12, k12, grad=True)
    n = L.size
    z = np.zeros(n)
    c01L, c01Lk = _dlogcum(a01, k01, L)
    c02L, c02Lk = _dlogcum(a02, k02, L)
    c01T, c01Tk = _dlogcum(a01, k01, T)
    c02T, c02Tk = _dlogcum(a02, k02, T)
    c12T, c12Tk = _dlogcum(a12, k12, T)
    c12X, c12Xk = _dlogcum(a12, k12, X)
    lT = np.log(T)
    # d log(-H0L) part
    g_base = -np.stack([c01L, c01Lk, c02L, c02Lk, z, z], axis=1)
    # log p11(X, T) and log p00(L, T)
    dlogp11 = -np.stack([z, z, z, z, c12T - c12X, c12Tk - c12Xk], axis=1)
    dlogp00 = -np.stack([c01T - c01L, c01Tk - c01Lk, c02T - c02L, c02Tk - c02Lk, z, z], axis=1)
    r02 = np.where(died, a02 * k02 * T ** (k02 - 1.0), 1.0)
    r12 = np.where(died, a12 * k12 * T ** (k12 - 1.0), 1.0)
    one = died.astype(float)
    dlogr02 = np.stack([z, z, one, one * (1.0 + k02 * lT), z, z], axis=1)
    dlogr12 = np.stack([z, z, z, z, one, one * (1.0 + k12 * lT)], axis=1)
    p11 = np.exp(-(c12T - c12X))
    p00 = np.exp(-(c01T + c02T - c01L - c02L))
    inner = np.where(diag, p01 * p11 * r12, p00 * r02 + p01 * r12)
    with np.errstate(divide="ignore", invalid="ignore"):
        g_diag = dp01 / p01[:, None] + dlogp11 + dlogr12
        g_und = ((p00 * r02)[:, None] * (dlogp00 + dlogr02)
                 + r12[:, None] * (dp01 + p01[:, None] * dlogr12)) / inner[:, None]
        terms = -(c01L + c02L) + np.log(inner)
    grad = g_base + np.where(diag[:, None], g_diag, g_und)
    if not np.all(np.isfinite(terms)):
        return -math.inf, np.full(6, np.nan)
    return float(terms.sum()), grad.sum(axis=0)


def ic_loglik(model: IllnessDeathModel, data: Data, warn: bool = True) -> float:
    """Interval-censored log-likelihood, conditional on state 0 at time 0.

    Death times are exact; a subject whose last negative visit coincides with
    death (``L == T``) contributes through the direct-death term only.
    """
    terms = ic_terms(model, data)
    bad = ~np.isfinite(terms)
    if bad.any():
        if warn:
            idx = np.flatnonzero(bad)
            warnings.warn(f"zero-probability contribution for subjects {idx[:10].tolist()}"
                          f"{' ...' if idx.size > 10 else ''}", LikelihoodWarning, stacklevel=2)
        return -math.inf
    return float(terms.sum())


# -- exposures under the diagnosis-time convention ---------------------------------

def _segment_exposure(start, stop, edges):
    lo = np.clip(edges[:-1], start[:, None], stop[:, None])
    hi = np.clip(edges[1:], start[:, None], stop[:, None])
    return (hi - lo).sum(axis=0)


def _segment_events(times, edges):
    idx = np.searchsorted(edges, times, side="right") - 1
    return np.bincount(idx, minlength=edges.size - 1)[: edges.size - 1]


def _occurrence_exposure(d: RecordArrays, cuts01, cuts02, cuts12):
    diag = d.diagnosed
    exit0 = np.where(diag, d.R, d.T)
    out = {}
    e = np.concatenate([[0.0], cuts01, [np.inf]])
    out["01"] = (_segment_events(d.R[diag], e), _segment_exposure(np.zeros_like(exit0), exit0, e))
    e = np.concatenate([[0.0], cuts02, [np.inf]])
    out["02"] = (_segment_events(d.T[~diag & (d.delta == 1)], e),
                 _segment_exposure(np.zeros_like(exit0), exit0, e))
    e = np.concatenate([[0.0], cuts12, [np.inf]])
    out["12"] = (_segment_events(d.T[diag & (d.delta == 1)], e),
                 _segment_exposure(d.R[diag], d.T[diag], e))
    return out


# -- optimizer --------------------------------------------------------------------

@dataclass(frozen=True)
class MleFit:
    family: str
    params: Dict[str, float]
    loglik: float
    stderr: Optional[Dict[str, float]]
    converged: bool
    iterations: int
    theta: np.ndarray = field(repr=False)
    cov: Optional[np.ndarray] = field(default=None, repr=False)
    cutpoints: Dict[str, tuple] = field(default_factory=dict)
    proportional: bool = False
    grad_norm: float = float("nan")

    @property
    def model(self) -> IllnessDeathModel:
        if self.family == "weibull":
            return _weibull_model(self.theta)
        return _pwc_model(self.theta, self.cutpoints, self.proportional)

    @property
    def hazard_ratio(self) -> Optional[float]:
        return math.exp(self.params["beta"]) if self.proportional else None


def central_gradient(f: Callable, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h * max(1.0, abs(x[i]))
        g[i] = (f(x + e) - f(x - e)) / (2 * e[i])
    return g


def central_hessian(f: Callable, x: np.ndarray, h: float = HESS_STEP) -> np.ndarray:
    n = x.size
    H = np.empty((n, n))
    f0 = f(x)
    E = np.eye(n) * h
    for i in range(n):
        H[i, i] = (f(x + E[i]) - 2 * f0 + f(x - E[i])) / h ** 2
        for j in range(i):
            H[i, j] = H[j, i] = (f(x + E[i] + E[j]) - f(x + E[i] - E[j])
                                 - f(x - E[i] + E[j]) + f(x - E[i] - E[j])) / (4 * h * h)
    return H


def _maximize(loglik: Callable, theta0: np.ndarray, n: int, max_iter: int, with_se: bool,
              loglik_grad: Optional[Callable] = None):
    """BFGS on the mean negative log-likelihood.

    ``loglik_grad`` returns ``(loglik, gradient)``; without it the gradient
    is a central difference of the objective.
    """
    cache = {}

    def evaluate(th):
        key = th.tobytes()
        if key not in cache:
            cache.clear()
            v, g = loglik_grad(th)
            cache[key] = (v, g)
        return cache[key]

    if loglik_grad is None:
        def objective(th):
            v = loglik(th)
            return -v / n if np.isfinite(v) else 1e100

        def grad(th):
            return central_gradient(objective, th)
    else:
        def objective(th):
            v, _ = evaluate(th)
            return -v / n if np.isfinite(v) else 1e100

        def grad(th):
            v, g = evaluate(th)
            return -g / n if np.isfinite(v) else np.zeros_like(th)

    start = loglik(theta0)
    if not np.isfinite(start):
        raise FitError("log-likelihood is -inf at the initial values")
    prev = [objective(theta0)]
    stalled = []

    def callback(xk):
        fk = objective(xk)
        if abs(prev[0] - fk) <= FTOL * max(abs(fk), 1.0):
            stalled.append(True)
        prev[0] = fk

    theta, nit = np.asarray(theta0, dtype=float), 0
    # a failed line search resets the inverse-Hessian approximation
    for _ in range(4):
        stalled.clear()
        res = optimize.minimize(objective, theta, jac=grad, method="BFGS", callback=callback,
                                options={"gtol": GTOL, "maxiter": max_iter - nit})
        theta, nit = res.x, nit + int(res.nit)
        gnorm = float(np.max(np.abs(grad(theta))))
        # a stalled objective near the gradient tolerance is at the noise floor
        converged = gnorm < GTOL or (bool(stalled) and gnorm < 10 * GTOL)
        if converged or nit >= max_iter or res.nit == 0:
            break
    ll = loglik(theta)
    if ll < start:
        theta, ll = np.asarray(theta0, dtype=float), start
    cov = None
    if with_se:
        H = central_hessian(loglik, theta)
        try:
            cov = np.linalg.inv(-H)
            if not np.all(np.isfinite(cov)) or np.any(np.diag(cov) <= 0):
                cov = None
        except np.linalg.LinAlgError:
            cov = None
    return theta, ll, converged, nit, cov, gnorm


def _require_events(d: RecordArrays):
    if len(d) == 0:
        raise FitError("no data")
    if not d.diagnosed.any():
        raise FitError("no observed illness; 0->1 hazard not identified")
    if not (d.delta == 1).any():
        raise FitError("no deaths; death hazards not identified")


# -- Weibull ------------------------------------------------------------------------

WEIBULL_NAMES = ("alpha01", "k01", "alpha02", "k02", "alpha12", "k12")


def _weibull_model(theta) -> IllnessDeathModel:
    a01, k01, a02, k02, a12, k12 = np.exp(theta)
    return IllnessDeathModel(WeibullHazard(a01, k01), WeibullHazard(a02, k02),
                             WeibullHazard(a12, k12))


def weibull_initial(data: Data) -> np.ndarray:
    """Exponential occurrence/exposure rates with unit shapes (log scale)."""
    d = as_arrays(data)
    oe = _occurrence_exposure(d, [], [], [])
    th = []
    for key in ("01", "02", "12"):
        ev, ex = oe[key]
        th += [math.log(max(ev[0], 0.5) / max(ex[0], 1e-12)), 0.0]
    return np.array(th)


def fit_weibull_ic(data: Data, init: Optional[Sequence[float]] = None, max_iter: int = 500,
                   with_se: bool = True, gradient: str = "analytic") -> MleFit:
    """Weibull illness-death MLE over log rates and log shapes.

    ``init`` is given on the natural scale in the order of ``WEIBULL_NAMES``.
    ``gradient="numeric"`` replaces the quadrature gradient by central
    differences (slower, same optimum).
    """
    if gradient not in ("analytic", "numeric"):
        raise ValueError("gradient must be 'analytic' or 'numeric'")
    d = as_arrays(data)
    _require_events(d)
    theta0 = weibull_initial(d) if init is None else np.log(np.asarray(init, dtype=float))

    def ll(th):
        return ic_loglik(_weibull_model(th), d, warn=False)

    llg = (lambda th: weibull_loglik_grad(th, d)) if gradient == "analytic" else None
    theta, val, conv, nit, cov, gnorm = _maximize(ll, theta0, len(d), max_iter, with_se, llg)
    values = np.exp(theta)
    se = None if cov is None else dict(zip(WEIBULL_NAMES, values * np.sqrt(np.diag(cov))))
    return MleFit("weibull", dict(zip(WEIBULL_NAMES, values)), val, se, conv, nit, theta, cov,
                  grad_norm=gnorm)


# -- piecewise-constant -------------------------------------------------------------

def _pwc_model(theta, cutpoints, proportional) -> IllnessDeathModel:
    c01, c02, c12 = cutpoints["01"], cutpoints["02"], cutpoints["12"]
    n01, n02 = len(c01) + 1, len(c02) + 1
    r01 = np.exp(theta[:n01])
    r02 = np.exp(theta[n01:n01 + n02])
    r12 = r02 * math.exp(theta[-1]) if proportional else np.exp(theta[n01 + n02:])
    return IllnessDeathModel(PiecewiseConstantHazard(c01, r01), PiecewiseConstantHazard(c02, r02),
                             PiecewiseConstantHazard(c12, r12))


def _drop_empty(cuts, exposure, label):
    # merge every zero-exposure segment into its left neighbour (first: right)
    cuts = list(cuts)
    keep = [True] * len(cuts)
    for j, ex in enumerate(exposure):
        if ex <= 0:
            warnings.warn(f"transition {label}: segment {j} has no risk time; rate dropped",
                          RuntimeWarning, stacklevel=3)
            if j > 0:
                keep[j - 1] = False
            elif cuts:
                keep[0] = False
    return tuple(c for c, k in zip(cuts, keep) if k)


def fit_pwc_ic(data: Data, cutpoints=DEFAULT_CUTPOINTS, proportional: bool = False,
               max_iter: int = 500, with_se: bool = True, marker: str = "latent") -> MleFit:
    """Piecewise-constant illness-death MLE.

    ``cutpoints`` is one sequence shared by all transitions or a mapping with
    keys ``"01"``, ``"02"``, ``"12"``. With ``proportional=True`` the 1->2
    rates are the 0->2 rates times ``exp(beta)``.

    ``marker="observed"`` applies ``exp(beta)`` only once disease has been
    diagnosed, the way panel-data software treats a time-dependent covariate
    held at its last observed value; between onset and diagnosis the death
    rate stays at the 0->2 rate. It requires ``proportional=True``. The
    fitted model keeps ``lambda12 = lambda02 exp(beta)``.
    """
    if marker not in ("latent", "observed"):
        raise ValueError("marker must be 'latent' or 'observed'")
    if marker == "observed" and not proportional:
        raise ValueError("marker='observed' needs proportional=True")
    observed = marker == "observed"
    d = as_arrays(data)
    _require_events(d)
    if isinstance(cutpoints, dict):
        cuts = {k: tuple(float(c) for c in cutpoints[k]) for k in ("01", "02", "12")}
    else:
        cuts = {k: tuple(float(c) for c in cutpoints) for k in ("01", "02", "12")}
    for c in cuts.values():
        if any(b <= a for a, b in zip(c, c[1:])):
            raise ValueError("cutpoints must be strictly ascending")
    if proportional:
        cuts["12"] = cuts["02"]
    oe = _occurrence_exposure(d, cuts["01"], cuts["02"], cuts["12"])
    for key in ("01", "02") + (() if proportional else ("12",)):
        cuts[key] = _drop_empty(cuts[key], oe[key][1], key)
    if proportional:
        cuts["12"] = cuts["02"]
    oe = _occurrence_exposure(d, cuts["01"], cuts["02"], cuts["12"])

    def init(key):
        ev, ex = oe[key]
        return np.log(np.maximum(ev, 0.5) / np.maximum(ex, 1e-12))

    theta0 = np.concatenate([init("01"), init("02")])
    if proportional:
        ev02, ex02 = oe["02"]
        ev12, ex12 = oe["12"]
        beta0 = math.log(max(ev12.sum(), 0.5) / max(ex12.sum(), 1e-12)) - math.log(
            max(ev02.sum(), 0.5) / max(ex02.sum(), 1e-12))
        theta0 = np.concatenate([theta0, [beta0]])
    else:
        theta0 = np.concatenate([theta0, init("12")])

    design = _PwcDesign(d, cuts)
    n01, n02 = len(cuts["01"]) + 1, len(cuts["02"]) + 1

    def ll(th):
        r01 = np.exp(th[:n01])
        r02 = np.exp(th[n01:n01 + n02])
        r12 = r02 * math.exp(th[-1]) if proportional else np.exp(th[n01 + n02:])
        t = design.terms(r01, r02, r12, observed)
        return float(t.sum()) if np.all(np.isfinite(t)) else -math.inf

    theta, val, conv, nit, cov, gnorm = _maximize(ll, theta0, len(d), max_iter, with_se)
    names, natural, jac = _pwc_names(theta, cuts, proportional)
    se = None if cov is None else dict(zip(names, jac * np.sqrt(np.diag(cov))))
    return MleFit("pwc", dict(zip(names, natural)), val, se, conv, nit, theta, cov, cuts,
                  proportional, gnorm)


class _PwcDesign:
    """Rate-independent exposures of every subject on the merged segment grid.

    With all hazards piecewise constant, the likelihood depends on the rates
    only through these exposures, so a likelihood evaluation reduces to a few
    small matrix products.
    """

    def __init__(self, d: RecordArrays, cuts):
        merged = np.unique(np.concatenate([np.asarray(cuts[k], dtype=float)
                                           for k in ("01", "02", "12")]))
        edges = np.concatenate([[0.0], merged, [np.inf]])
        lo, hi = edges[:-1], edges[1:]
        self.maps = {k: np.searchsorted(np.asarray(cuts[k], dtype=float), lo, side="right")
                     for k in ("01", "02", "12")}
        self.diag = d.diagnosed
        self.died = d.delta == 1
        X = np.where(self.diag, d.R, d.T)

        def overlap(a, b):
            return np.clip(np.minimum(hi, b[:, None]) - np.maximum(lo, a[:, None]), 0.0, None)

        zero = np.zeros_like(d.L)
        self.eL = overlap(zero, d.L)
        self.eLT = overlap(d.L, d.T)
        self.eXT = overlap(X, d.T)
        self.dt = overlap(d.L, X)
        self.segT = np.searchsorted(merged, d.T, side="right")

    def terms(self, r01, r02, r12, observed: bool = False) -> np.ndarray:
        m = self.maps
        q01, q02, q12 = r01[m["01"]], r02[m["02"]], r12[m["12"]]
        q0 = q01 + q02
        # observed-marker semantics: undiagnosed illness dies at the 0->2 rate
        q12u = q02 if observed else q12
        h0 = q0 * self.dt
        h12 = q12u * self.dt
        H0 = np.cumsum(h0, axis=1) - h0
        H12 = np.cumsum(h12[:, ::-1], axis=1)[:, ::-1] - h12
        seg = _occupancy_integral(q01, q0, q12u, self.dt)
        p01 = np.sum(np.where(self.dt > 0, np.exp(-H0 - H12) * seg, 0.0), axis=1)
        p00 = np.exp(-(self.eLT @ q0))
        p11 = np.exp(-(self.eXT @ q12))
        r02T = np.where(self.died, q02[self.segT], 1.0)
        r12T = np.where(self.died, q12[self.segT], 1.0)
        r12u = r02T if observed else r12T
        inner = np.where(self.diag, p01 * p11 * r12T, p00 * r02T + p01 * r12u)
        with np.errstate(divide="ignore"):
            return -(self.eL @ q0) + np.log(inner)


def _pwc_names(theta, cuts, proportional):
    names = [f"rate01_{j}" for j in range(len(cuts["01"]) + 1)]
    names += [f"rate02_{j}" for j in range(len(cuts["02"]) + 1)]
    if proportional:
        names.append("beta")
        natural = np.concatenate([np.exp(theta[:-1]), theta[-1:]])
        jac = np.concatenate([natural[:-1], [1.0]])
    else:
        names += [f"rate12_{j}" for j in range(len(cuts["12"]) + 1)]
        natural = np.exp(theta)
        jac = natural
    return names, natural, jac


# -- Cox model with the observed marker ------------------------------------------

@dataclass(frozen=True)
class CoxTdFit:
    beta: float
    baseline02: StepCumulativeHazard
    cumhaz01: StepCumulativeHazard
    stderr: float
    iterations: int
    loglik: float

    @property
    def hazard_ratio(self) -> float:
        return math.exp(self.beta)

    @property
    def cumhaz12(self) -> StepCumulativeHazard:
        return self.baseline02.scaled(math.exp(self.beta))

    @property
    def last_time(self) -> float:
        return float(self.baseline02.jump_times[-1])


@dataclass(frozen=True)
class _RiskTable:
    times: np.ndarray  # distinct death times
    d: np.ndarray      # deaths
    d1: np.ndarray     # deaths with marker 1
    n0: np.ndarray     # at risk with marker 0
    n1: np.ndarray     # at risk with marker 1


def risk_table(data: Data) -> _RiskTable:
    """Risk-set counts at each distinct death time (marker = diagnosed by t)."""
    d = as_arrays(data)
    died = d.delta == 1
    times = np.unique(d.T[died])
    Ts = np.sort(d.T)
    at_risk = Ts.size - np.searchsorted(Ts, times, side="left")
    Rd = d.R[d.diagnosed]
    Td = d.T[d.diagnosed]
    # diagnosed by t and still at risk: R <= t <= T
    n1 = (np.searchsorted(np.sort(Rd), times, side="right")
          - np.searchsorted(np.sort(Td), times, side="left"))
    n0 = at_risk - n1
    idx = np.searchsorted(times, d.T[died])
    dd = np.bincount(idx, minlength=times.size)
    x_at_death = d.diagnosed[died] & (d.R[died] <= d.T[died])
    d1 = np.bincount(idx, weights=x_at_death, minlength=times.size)
    return _RiskTable(times, dd.astype(float), d1, n0.astype(float), n1.astype(float))


def _partial(beta, rt: _RiskTable):
    e = math.exp(beta)
    den = rt.n0 + rt.n1 * e
    ll = float(np.sum(rt.d1 * beta - rt.d * np.log(den)))
    score = float(np.sum(rt.d1 - rt.d * rt.n1 * e / den))
    info = float(np.sum(rt.d * rt.n0 * rt.n1 * e / den ** 2))
    return ll, score, info


def fit_cox_td(data: Data, max_iter: int = 100, tol: float = 1e-10) -> CoxTdFit:
    """Cox partial likelihood (Breslow ties) with Breslow and Nelson-Aalen baselines."""
    d = as_arrays(data)
    if len(d) == 0:
        raise FitError("no data")
    if not (d.delta == 1).any():
        raise FitError("no deaths")
    rt = risk_table(d)
    if not np.any((rt.n0 > 0) & (rt.n1 > 0)):
        raise FitError("marker constant in every risk set")
    beta = 0.0
    ll, score, info = _partial(beta, rt)
    for it in range(1, max_iter + 1):
        if info <= 0:
            raise FitError(f"singular information at beta={beta:.4g}")
        step = score / info
        new = beta + step
        nll, nscore, ninfo = _partial(new, rt)
        halvings = 0
        while nll < ll - 1e-12 and halvings < 30:
            step /= 2
            new = beta + step
            nll, nscore, ninfo = _partial(new, rt)
            halvings += 1
        beta, ll, score, info = new, nll, nscore, ninfo
        if abs(score) < tol or abs(step) < tol * 1e-2:
            break
    else:
        raise FitError(f"Newton iterations did not converge; |score| = {abs(score):.3g}")
    e = math.exp(beta)
    base = StepCumulativeHazard(rt.times, rt.d / (rt.n0 + rt.n1 * e))
    return CoxTdFit(beta, base, nelson_aalen_01(d), 1.0 / math.sqrt(info), it, ll)


def nelson_aalen_01(data: Data) -> StepCumulativeHazard:
    """0->1 cumulative hazard treating the first positive visit as exact onset."""
    d = as_arrays(data)
    diag = d.diagnosed
    times, counts = np.unique(d.R[diag], return_counts=True)
    # at risk at t: alive (T >= t) and not yet diagnosed (R >= t or never)
    exit0 = np.sort(np.where(diag, np.minimum(d.R, d.T), d.T))
    n = exit0.size - np.searchsorted(exit0, times, side="left")
    return StepCumulativeHazard(times, counts / n)


def nelson_aalen(event_times, entry, exit_) -> StepCumulativeHazard:
    """Nelson-Aalen with delayed entry: at risk on ``entry < t <= exit``."""
    times, counts = np.unique(np.asarray(event_times, dtype=float), return_counts=True)
    entry = np.sort(np.asarray(entry, dtype=float))
    exit_ = np.sort(np.asarray(exit_, dtype=float))
    n = np.searchsorted(entry, times, side="left") - np.searchsorted(exit_, times, side="left")
    return StepCumulativeHazard(times, counts / n)


# -- gradient diagnostics -----------------------------------------------------------

@dataclass(frozen=True)
class GradientCheck:
    max_rel_dev: float
    deviations: np.ndarray
    informative: np.ndarray


def gradient_check(f: Callable, x, grad: Optional[Callable] = None, h: float = 1e-5,
                   floor: float = 1e-10) -> GradientCheck:
    """Compare a gradient with central differences of step ``h``.

    ``grad`` defaults to the optimizer's internal difference gradient.
    Coordinates where both gradients vanish (plateaus) are flagged
    non-informative and excluded from the maximum.
    """
    x = np.asarray(x, dtype=float)
    g = (grad or (lambda z: central_gradient(f, z)))(x)
    ref = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        ref[i] = (f(x + e) - f(x - e)) / (2 * h)
    scale = np.maximum(np.abs(ref), np.abs(g))
    informative = scale > floor
    dev = np.where(informative, np.abs(g - ref) / np.where(informative, scale, 1.0), 0.0)
    return GradientCheck(float(dev.max(initial=0.0)), dev, informative)


def loglik_function(family: str, data: Data, cutpoints=DEFAULT_CUTPOINTS,
                    proportional: bool = False) -> Callable:
    """``theta -> ic_loglik`` on the optimizer's log-parameter scale."""
    d = as_arrays(data)
    if family == "weibull":
        return lambda th: ic_loglik(_weibull_model(th), d, warn=False)
    cuts = {k: tuple(cutpoints) for k in ("01", "02", "12")}
    return lambda th: ic_loglik(_pwc_model(th, cuts, proportional), d, warn=False)
