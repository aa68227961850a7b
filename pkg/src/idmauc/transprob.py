"""Transition probabilities of the Markov illness-death process.

Three backends:

* smooth hazards: ``P01`` by adaptive Gauss-Kronrod quadrature of the
  Chapman-Kolmogorov convolution (compiled kernel for all-Weibull models);
* piecewise-constant hazards: product of closed-form 3x3 matrix exponentials;
* step hazards: Aalen-Johansen product-integral.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import kernels
from ._fallback import WG, WGK, XGK
from .hazards import (
    Hazard,
    PiecewiseConstantHazard,
    StepCumulativeHazard,
    WeibullHazard,
    cumulative_hazard,
    hazard_at,
)

QUAD_TOL = 1e-8


@dataclass(frozen=True)
class IllnessDeathModel:
    h01: Hazard
    h02: Hazard
    h12: Hazard

    @property
    def family(self) -> str:
        kinds = {type(h) for h in (self.h01, self.h02, self.h12)}
        if kinds == {WeibullHazard}:
            return "weibull"
        if kinds == {PiecewiseConstantHazard}:
            return "pwc"
        if kinds == {StepCumulativeHazard}:
            return "step"
        return "mixed"

    def cutpoints(self) -> np.ndarray:
        cuts = [h.cutpoints for h in (self.h01, self.h02, self.h12)
                if isinstance(h, PiecewiseConstantHazard)]
        return np.unique(np.concatenate([[]] + [np.asarray(c) for c in cuts]))


@dataclass(frozen=True)
class TransitionMatrix:
    """``P[h, l] = Pr(V(t) = l | V(s) = h)``."""

    P: np.ndarray
    s: float
    t: float

    def __getitem__(self, idx):
        return self.P[idx]

    @property
    def row_sums(self) -> np.ndarray:
        return self.P.sum(axis=1)


def _check_interval(s, t):
    if s < 0 or t < 0:
        raise ValueError("times must be nonnegative")
    if s > t:
        raise ValueError(f"require s <= t, got s={s}, t={t}")


def _assemble(p00, p01, p11, s, t) -> TransitionMatrix:
    P = np.array([
        [p00, p01, max(0.0, 1.0 - p00 - p01)],
        [0.0, p11, 1.0 - p11],
        [0.0, 0.0, 1.0],
    ])
    return TransitionMatrix(P, float(s), float(t))


def p00(model: IllnessDeathModel, s: float, t: float) -> float:
    _check_interval(s, t)
    if isinstance(model.h01, StepCumulativeHazard):
        return float(aalen_johansen(model.h01, model.h02, model.h12, s, t)[0, 0])
    return math.exp(-(cumulative_hazard(model.h01, s, t) + cumulative_hazard(model.h02, s, t)))


def p11(model: IllnessDeathModel, s: float, t: float) -> float:
    _check_interval(s, t)
    if isinstance(model.h12, StepCumulativeHazard):
        return float(aalen_johansen(model.h01, model.h02, model.h12, s, t)[1, 1])
    return math.exp(-cumulative_hazard(model.h12, s, t))


# -- adaptive quadrature -----------------------------------------------------

_X15 = np.concatenate([-XGK[:7], XGK[7:], XGK[:7][::-1]])
_WK15 = np.concatenate([WGK[:7], WGK[7:], WGK[:7][::-1]])
_WG15 = np.zeros(15)
_WG15[[1, 3, 5, 7, 9, 11, 13]] = np.concatenate([WG, WG[:3][::-1]])


class QuadratureError(ArithmeticError):
    pass


def adaptive_gk15(f, a: float, b: float, tol: float = QUAD_TOL, max_panels: int = 20000):
    """Integrate vectorized ``f`` over ``[a, b]`` to absolute tolerance ``tol``.

    Returns ``(value, error_estimate)``; raises :class:`QuadratureError` when
    the panel budget is exhausted before the tolerance is met.
    """
    if b == a:
        return 0.0, 0.0
    width = b - a
    stack = [(a, b)]
    total = err_total = 0.0
    used = 0
    while stack:
        lo, hi = stack.pop()
        c, h = 0.5 * (lo + hi), 0.5 * (hi - lo)
        fx = f(c + h * _X15)
        rk = h * fx @ _WK15
        err = abs(rk - h * fx @ _WG15)
        used += 1
        if err <= tol * (hi - lo) / width or hi - lo < 1e-12 * width:
            total += rk
            err_total += err
        elif used > max_panels:
            raise QuadratureError(
                f"quadrature did not converge: achieved error {err_total + err:.3g} > {tol:.3g}")
        else:
            m = 0.5 * (lo + hi)
            stack.append((m, hi))
            stack.append((lo, m))
    return total, err_total


def _cum(h: Hazard, s, t):
    return h.cumulative(t) - h.cumulative(s)


def quad_p01(model: IllnessDeathModel, s: float, t: float, tol: float = QUAD_TOL) -> float:
    """``int_s^t P00(s,u) lambda01(u) P11(u,t) du`` by adaptive quadrature.

    Panels are split at hazard cutpoints. On a panel starting at the origin
    with a Weibull 0->1 hazard of shape < 1 the variable ``u = x**q`` is used,
    which makes the integrand regular at 0.
    """
    _check_interval(s, t)
    if s == t:
        return 0.0
    h01, h02, h12 = model.h01, model.h02, model.h12
    edges = np.concatenate([[s], [c for c in model.cutpoints() if s < c < t], [t]])
    total = 0.0
    panel_tol = tol / (len(edges) - 1)

    def integrand(u):
        return (h01.rate(u) * np.exp(-(_cum(h01, s, u) + _cum(h02, s, u)))
                * np.exp(-_cum(h12, u, t)))

    for lo, hi in zip(edges[:-1], edges[1:]):
        if lo == 0.0 and isinstance(h01, WeibullHazard) and h01.k < 1:
            q = 3.0 / h01.k

            def fx(x, q=q):
                return integrand(x ** q) * q * x ** (q - 1.0)

            val, _ = adaptive_gk15(fx, 0.0, hi ** (1.0 / q), panel_tol)
        else:
            val, _ = adaptive_gk15(integrand, lo, hi, panel_tol)
        total += val
    return total


def p01(model: IllnessDeathModel, s: float, t: float, method: str = "auto") -> float:
    """Probability of being diseased at ``t`` given disease-free at ``s``.

    ``method`` is ``"auto"`` (closed form / kernel / product-integral as the
    family allows) or ``"quad"`` (generic adaptive quadrature).
    """
    _check_interval(s, t)
    if s == t:
        return 0.0
    fam = model.family
    if method == "quad":
        return quad_p01(model, s, t)
    if fam == "weibull":
        return float(weibull_p01_many(model, np.array([s]), np.array([t]))[0])
    if fam == "pwc":
        return float(pwc_p01_many(model, np.array([s]), np.array([t]))[0])
    if fam == "step":
        return float(aalen_johansen(model.h01, model.h02, model.h12, s, t)[0, 1])
    return quad_p01(model, s, t)


def transition_matrix(model: IllnessDeathModel, s: float, t: float,
                      method: str = "auto") -> TransitionMatrix:
    _check_interval(s, t)
    if model.family == "step":
        return aalen_johansen(model.h01, model.h02, model.h12, s, t)
    if method == "expm" or (method == "auto" and model.family == "pwc"):
        return pwc_transition_matrix(model, s, t)
    return _assemble(p00(model, s, t), p01(model, s, t, method=method), p11(model, s, t), s, t)


# -- vectorized occupancy used by the likelihood ------------------------------

def weibull_p01_many(model: IllnessDeathModel, s, t) -> np.ndarray:
    h01, h02, h12 = model.h01, model.h02, model.h12
    return kernels.weibull_p01(np.ascontiguousarray(s, dtype=float),
                               np.ascontiguousarray(t, dtype=float),
                               h01.alpha, h01.k, h02.alpha, h02.k, h12.alpha, h12.k)


def _segment_grid(model: IllnessDeathModel):
    edges = np.concatenate([[0.0], model.cutpoints(), [np.inf]])
    mids = np.where(np.isfinite(edges[1:]), 0.5 * (edges[:-1] + edges[1:]), edges[:-1] + 1.0)
    return edges, model.h01.rate(mids), model.h02.rate(mids), model.h12.rate(mids)


def _occupancy_integral(l01, l0, l12, dt):
    # (exp(-l0 dt) - exp(-l12 dt)) / (l12 - l0), evaluated without cancellation
    lo = np.minimum(l0, l12)
    d = np.abs(l12 - l0) * dt
    with np.errstate(invalid="ignore", divide="ignore"):
        phi = np.where(d > 1e-300, -np.expm1(-d) / np.where(d > 0, d, 1.0), 1.0)
    return l01 * dt * np.exp(-lo * dt) * phi


def pwc_p01_many(model: IllnessDeathModel, s, t) -> np.ndarray:
    """Closed-form ``P01(s_i, t_i)`` for piecewise-constant hazards."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    edges, r01, r02, r12 = _segment_grid(model)
    a = np.clip(edges[:-1], s[:, None], t[:, None])
    b = np.clip(edges[1:], s[:, None], t[:, None])
    dt = b - a
    # segments inside [s, t] are consecutive: exposures are prefix/suffix sums
    h0 = (r01 + r02) * dt
    h12 = r12 * dt
    H0 = np.cumsum(h0, axis=1) - h0
    H12 = np.cumsum(h12[:, ::-1], axis=1)[:, ::-1] - h12
    seg = _occupancy_integral(r01, r01 + r02, r12, dt)
    return np.sum(np.where(dt > 0, np.exp(-H0 - H12) * seg, 0.0), axis=1)


# -- piecewise-constant: matrix exponentials -----------------------------------

def generator_exp(l01: float, l02: float, l12: float, dt: float) -> np.ndarray:
    """``expm(Q dt)`` for the upper-triangular illness-death generator."""
    l0 = l01 + l02
    e0 = math.exp(-l0 * dt)
    e1 = math.exp(-l12 * dt)
    scale = max(l01, l02, l12, 1e-300)
    if abs(l0 - l12) < 1e-10 * scale:
        q01 = l01 * dt * e0
    else:
        q01 = l01 * (e0 - e1) / (l12 - l0)
    return np.array([
        [e0, q01, 1.0 - e0 - q01],
        [0.0, e1, 1.0 - e1],
        [0.0, 0.0, 1.0],
    ])


def pwc_transition_matrix(model: IllnessDeathModel, s: float, t: float) -> TransitionMatrix:
    _check_interval(s, t)
    if model.family != "pwc":
        raise TypeError("pwc_transition_matrix needs piecewise-constant hazards on all transitions")
    edges = np.concatenate([[s], [c for c in model.cutpoints() if s < c < t], [t]])
    P = np.eye(3)
    for lo, hi in zip(edges[:-1], edges[1:]):
        if hi <= lo:
            continue
        r = [float(hazard_at(h, lo)) for h in (model.h01, model.h02, model.h12)]
        P = P @ generator_exp(*r, hi - lo)
    return TransitionMatrix(P, float(s), float(t))


# -- step hazards: product-integral --------------------------------------------

def _aligned_increments(h01, h02, h12):
    times = np.unique(np.concatenate([h01.jump_times, h02.jump_times, h12.jump_times]))
    out = []
    for h in (h01, h02, h12):
        inc = np.zeros(times.size)
        inc[np.searchsorted(times, h.jump_times)] = h.increments
        out.append(inc)
    return times, out


def _clip_increments(d01, d02, d12):
    tot = d01 + d02
    bad = tot > 1.0
    if np.any(bad) or np.any(d12 > 1.0):
        warnings.warn("hazard increment exceeds remaining mass; truncated", RuntimeWarning,
                      stacklevel=3)
        d01 = np.where(bad, d01 / tot, d01)
        d02 = np.where(bad, d02 / tot, d02)
        d12 = np.minimum(d12, 1.0)
    return d01, d02, d12


class AalenJohansenPath:
    """Precomputed product-integral over all jump times of three step hazards.

    ``row0(t)`` gives ``(P00(0,t), P01(0,t))``; ``left=True`` gives the left
    limit at ``t``.
    """

    def __init__(self, h01: StepCumulativeHazard, h02: StepCumulativeHazard,
                 h12: StepCumulativeHazard):
        self.times, (d01, d02, d12) = _aligned_increments(h01, h02, h12)
        self.d01, self.d02, self.d12 = _clip_increments(d01, d02, d12)
        self.P00, self.P01 = kernels.aj_forward(self.d01, self.d02, self.d12, 1.0, 0.0)
        self.S12 = np.cumprod(1.0 - self.d12)

    def _index(self, t, left):
        return np.searchsorted(self.times, t, side="left" if left else "right") - 1

    def row0(self, t, left: bool = False):
        j = self._index(t, left)
        if j < 0:
            return 1.0, 0.0
        return float(self.P00[j]), float(self.P01[j])

    def matrix(self, s: float, t: float) -> TransitionMatrix:
        _check_interval(s, t)
        i0 = np.searchsorted(self.times, s, side="right")
        i1 = np.searchsorted(self.times, t, side="right")
        if i1 <= i0:
            return TransitionMatrix(np.eye(3), float(s), float(t))
        sl = slice(i0, i1)
        q00, q01 = kernels.aj_forward(self.d01[sl], self.d02[sl], self.d12[sl], 1.0, 0.0)
        q11 = float(np.prod(1.0 - self.d12[sl]))
        return _assemble(float(q00[-1]), float(q01[-1]), q11, s, t)


def aalen_johansen(h01: StepCumulativeHazard, h02: StepCumulativeHazard,
                   h12: StepCumulativeHazard, s: float, t: float) -> TransitionMatrix:
    """Product-integral ``prod_{u in (s,t]} (I + dA(u))``."""
    return AalenJohansenPath(h01, h02, h12).matrix(s, t)
