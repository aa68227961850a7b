"""Hazard families: Weibull, piecewise-constant and nonparametric step hazards.

All families expose ``cumulative(t)`` (vectorized, :math:`\\Lambda(t)` from 0)
and are consumed through :func:`hazard_at` / :func:`cumulative_hazard`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np


@dataclass(frozen=True)
class WeibullHazard:
    """``lambda(t) = alpha * k * t**(k - 1)``, ``Lambda(t) = alpha * t**k``."""

    alpha: float
    k: float

    def __post_init__(self):
        if not (self.alpha > 0 and self.k > 0):
            raise ValueError(f"Weibull parameters must be positive, got alpha={self.alpha}, k={self.k}")

    def rate(self, t):
        t = np.asarray(t, dtype=float)
        if self.k < 1 and np.any(t == 0):
            raise ValueError("hazard singular at origin")
        return self.alpha * self.k * t ** (self.k - 1.0)

    def cumulative(self, t):
        return self.alpha * np.asarray(t, dtype=float) ** self.k


@dataclass(frozen=True)
class PiecewiseConstantHazard:
    """Constant rate on each segment ``[c_{j-1}, c_j)``, with ``c_0 = 0`` and ``c_{K+1} = inf``."""

    cutpoints: tuple
    rates: tuple

    def __init__(self, cutpoints: Sequence[float], rates: Sequence[float]):
        cuts = tuple(float(c) for c in cutpoints)
        rts = tuple(float(r) for r in rates)
        if len(rts) != len(cuts) + 1:
            raise ValueError("need exactly one more rate than cutpoints")
        if any(b <= a for a, b in zip(cuts, cuts[1:])) or (cuts and cuts[0] <= 0):
            raise ValueError("cutpoints must be positive and strictly ascending")
        if any(r < 0 or not np.isfinite(r) for r in rts):
            raise ValueError("rates must be finite and nonnegative")
        object.__setattr__(self, "cutpoints", cuts)
        object.__setattr__(self, "rates", rts)

    @property
    def edges(self) -> np.ndarray:
        return np.concatenate([[0.0], self.cutpoints, [np.inf]])

    def rate(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.cutpoints, t, side="right")
        return np.asarray(self.rates)[idx]

    def cumulative(self, t):
        t = np.asarray(t, dtype=float)
        rates = np.asarray(self.rates)
        lo = self.edges[:-1]
        width = np.clip(t[..., None] - lo, 0.0, None)
        width = np.minimum(width, np.diff(self.edges))
        return np.sum(np.where(width > 0, width * rates, 0.0), axis=-1)


@dataclass(frozen=True)
class StepCumulativeHazard:
    """Right-continuous step cumulative hazard (Nelson-Aalen / Breslow type)."""

    jump_times: np.ndarray
    increments: np.ndarray

    def __init__(self, jump_times, increments):
        jt = np.asarray(jump_times, dtype=float)
        inc = np.asarray(increments, dtype=float)
        if jt.shape != inc.shape or jt.ndim != 1:
            raise ValueError("jump_times and increments must be 1-d and equally long")
        if np.any(np.diff(jt) <= 0):
            raise ValueError("jump_times must be strictly ascending")
        if np.any(inc < 0):
            raise ValueError("increments must be nonnegative")
        object.__setattr__(self, "jump_times", jt)
        object.__setattr__(self, "increments", inc)

    def rate(self, t):
        raise TypeError("step hazards have no density; use the cumulative form")

    def cumulative(self, t):
        csum = np.concatenate([[0.0], np.cumsum(self.increments)])
        return csum[np.searchsorted(self.jump_times, np.asarray(t, dtype=float), side="right")]

    def scaled(self, factor: float) -> "StepCumulativeHazard":
        return StepCumulativeHazard(self.jump_times, self.increments * factor)


Hazard = Union[WeibullHazard, PiecewiseConstantHazard, StepCumulativeHazard]


def hazard_at(h: Hazard, t):
    """Instantaneous rate of ``h`` at ``t``; segments are left-closed."""
    if np.any(np.asarray(t) < 0):
        raise ValueError("t must be nonnegative")
    r = h.rate(t)
    return float(r) if np.ndim(r) == 0 else r


def cumulative_hazard(h: Hazard, s, t):
    """``Lambda(t) - Lambda(s)`` for ``0 <= s <= t``."""
    s_ = np.asarray(s, dtype=float)
    t_ = np.asarray(t, dtype=float)
    if np.any(s_ > t_):
        raise ValueError("cumulative_hazard requires s <= t")
    if np.any(s_ < 0):
        raise ValueError("times must be nonnegative")
    out = np.where(s_ == t_, 0.0, h.cumulative(t_) - h.cumulative(s_))
    return float(out) if out.ndim == 0 else out
