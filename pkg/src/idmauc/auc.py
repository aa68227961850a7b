"""Time-specific AUC of the disease marker for predicting death.

Both definitions reduce to ``AUC = 0.5 + 0.5 * (p - pi1)`` where ``p`` is the
probability that a case has a history of disease and ``pi1`` that a control
does:

* incident/dynamic (I/D) at ``t``: cases die at ``t``, controls survive ``t``;
* cumulative/dynamic (C/D) over ``(s, t]``: cases die in the window, controls
  survive ``t``, and the marker is read at ``s``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .fit import CoxTdFit, Data, MleFit, as_arrays, risk_table
from .hazards import hazard_at
from .transprob import AalenJohansenPath, IllnessDeathModel, TransitionMatrix, p01, transition_matrix

INCIDENT = "incident-dynamic"
CUMULATIVE = "cumulative-dynamic"
_DEFS = {"id": INCIDENT, "i/d": INCIDENT, INCIDENT: INCIDENT,
         "cd": CUMULATIVE, "c/d": CUMULATIVE, CUMULATIVE: CUMULATIVE}
_EPS = 1e-12


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class AucCurve:
    definition: str
    points: Tuple[Tuple[float, float], ...]
    estimator: str
    window: Optional[float] = None
    skipped: Tuple[Tuple[float, str], ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "definition", normalize_definition(self.definition))
        pts = tuple((float(t), float(v)) for t, v in self.points)
        object.__setattr__(self, "points", pts)
        if any(b[0] <= a[0] for a, b in zip(pts, pts[1:])):
            raise ValueError("curve times must be strictly increasing")
        if any(not 0.0 <= v <= 1.0 for _, v in pts):
            raise ValueError("AUC values must lie in [0, 1]")

    @property
    def times(self) -> np.ndarray:
        return np.array([t for t, _ in self.points])

    @property
    def values(self) -> np.ndarray:
        return np.array([v for _, v in self.points])

    def __len__(self):
        return len(self.points)


def normalize_definition(definition: str) -> str:
    try:
        return _DEFS[definition.lower()]
    except KeyError:
        raise ValueError(f"unknown AUC definition {definition!r}") from None


# -- model adapters ---------------------------------------------------------------

class _Smooth:
    """Continuous-hazard model: hazards exist pointwise, t- equals t."""

    def __init__(self, model: IllnessDeathModel):
        self.model = model

    def row0(self, t, left=False):
        P = transition_matrix(self.model, 0.0, t)
        return P[0, 0], P[0, 1]

    def matrix(self, s, t) -> TransitionMatrix:
        return transition_matrix(self.model, s, t)

    def death_hazards(self, t):
        return hazard_at(self.model.h02, t), hazard_at(self.model.h12, t)


class _Step:
    """Cox fit: product-integral probabilities and ratio exp(beta)."""

    def __init__(self, fit: CoxTdFit):
        self.fit = fit
        self.path = AalenJohansenPath(fit.cumhaz01, fit.baseline02, fit.cumhaz12)

    def row0(self, t, left=False):
        return self.path.row0(t, left=left)

    def matrix(self, s, t) -> TransitionMatrix:
        return self.path.matrix(s, t)

    def death_hazards(self, t):
        # only the ratio enters p(t)
        return 1.0, math.exp(self.fit.beta)


Model = Union[IllnessDeathModel, MleFit, CoxTdFit]


def _adapt(model: Model):
    if isinstance(model, (_Smooth, _Step)):
        return model
    if isinstance(model, CoxTdFit):
        return _Step(model)
    if isinstance(model, MleFit):
        return _Smooth(model.model)
    if isinstance(model, IllnessDeathModel):
        if model.family == "step":
            raise TypeError("pass the CoxTdFit for step-hazard models")
        return _Smooth(model)
    raise TypeError(f"cannot compute AUC from {type(model).__name__}")


# -- incident/dynamic ----------------------------------------------------------------

def prevalence_id(model: Model, t: float) -> float:
    """``pi1(t) = P01(0,t) / (P00(0,t) + P01(0,t))`` (left limit for step fits)."""
    if t <= 0:
        raise DomainError("t must be positive")
    a = _adapt(model)
    q00, q01 = a.row0(t, left=True)
    den = q00 + q01
    if den < _EPS:
        raise DomainError(f"no survivors at t={t}")
    return q01 / den


def case_prob_id(model: Model, t: float) -> float:
    """``p(t) = P01 l12 / (P00 l02 + P01 l12)`` with probabilities at ``t-``.

    Written through ``gamma = l12 / l02`` so that ``gamma == 1`` reproduces
    :func:`prevalence_id` bit for bit.
    """
    if t <= 0:
        raise DomainError("t must be positive")
    a = _adapt(model)
    q00, q01 = a.row0(t, left=True)
    l02, l12 = a.death_hazards(t)
    if l02 <= 0 and l12 <= 0:
        raise DomainError(f"no deaths possible at t={t}")
    if q00 + q01 < _EPS:
        raise DomainError(f"no survivors at t={t}")
    if l02 <= 0:
        return 1.0 if q01 > 0 else 0.0
    g = l12 / l02
    return q01 * g / (q00 + q01 * g)


def auc_id(model: Model, t: float) -> float:
    a = _adapt(model)
    return _clip01(0.5 + 0.5 * (case_prob_id(a, t) - prevalence_id(a, t)))


# -- cumulative/dynamic ---------------------------------------------------------------

def _cd_parts(a, s, t):
    q00s, q01s = a.row0(s)
    q00t, q01t = a.row0(t)
    P = a.matrix(s, t)
    return q00s, q01s, q00t, q01t, P


def prevalence_cd(model: Model, s: float, t: float) -> float:
    """``pi1(s,t) = P01(0,s) P11(s,t) / (P00(0,t) + P01(0,t))``."""
    if not 0 < s <= t:
        raise DomainError("need 0 < s <= t")
    a = _adapt(model)
    _, q01s, q00t, q01t, P = _cd_parts(a, s, t)
    den = q00t + q01t
    if den < _EPS:
        raise DomainError(f"no survivors at t={t}")
    return q01s * P[1, 1] / den


def case_prob_cd(model: Model, s: float, t: float) -> float:
    """``p(s,t) = P01(0,s) P12(s,t) / (P00(0,s) P02(s,t) + P01(0,s) P12(s,t))``."""
    if not 0 < s < t:
        raise DomainError("need 0 < s < t")
    a = _adapt(model)
    q00s, q01s, _, _, P = _cd_parts(a, s, t)
    num = q01s * P[1, 2]
    den = q00s * P[0, 2] + num
    if den < _EPS:
        raise DomainError(f"no deaths in window ({s}, {t}]")
    return num / den


def auc_cd(model: Model, s: float, t: float) -> float:
    a = _adapt(model)
    return _clip01(0.5 + 0.5 * (case_prob_cd(a, s, t) - prevalence_cd(a, s, t)))


def _clip01(x):
    # guards roundoff only; identities keep the value in [0, 1]
    return min(1.0, max(0.0, x))


# -- Cox risk-set estimator ----------------------------------------------------------

def riskset_auc(n0: float, n1: float, beta: float) -> float:
    """I/D AUC of a binary marker in a risk set with ``n0`` negatives and ``n1`` positives."""
    if n0 + n1 <= 0:
        raise DomainError("empty risk set")
    if n1 == 0 or n0 == 0:
        return 0.5
    w = math.exp(beta)
    p = n1 * w / (n0 + n1 * w)
    pi = n1 / (n0 + n1)
    return 0.5 + 0.5 * (p - pi)


def auc_id_riskset(cox_fit: CoxTdFit, records: Data, t: float) -> float:
    """Risk-set I/D AUC at the most recent death time at or before ``t``."""
    d = as_arrays(records)
    rt = risk_table(d)
    j = np.searchsorted(rt.times, t, side="right") - 1
    if j >= 0:
        return riskset_auc(rt.n0[j], rt.n1[j], cox_fit.beta)
    # before the first death: risk set at t itself
    at_risk = d.T >= t
    n1 = int(np.sum(at_risk & d.diagnosed & (np.nan_to_num(d.R, nan=np.inf) <= t)))
    return riskset_auc(int(at_risk.sum()) - n1, n1, cox_fit.beta)


# -- curves ------------------------------------------------------------------------

def _estimator_label(model) -> str:
    if isinstance(model, CoxTdFit):
        return "cox-prob"
    if isinstance(model, MleFit):
        return model.family
    return "model"


def auc_model_based(model: Model, definition: str, grid: Sequence[float],
                    window: Optional[float] = None, estimator: Optional[str] = None,
                    truncate_at: Optional[float] = None) -> AucCurve:
    """Evaluate I/D at each grid time, or C/D over ``(s, s + window]``.

    Grid points where a probability is degenerate are skipped and listed in
    ``AucCurve.skipped``. ``truncate_at`` drops C/D points whose window ends
    after that time (for fits without support there).
    """
    definition = normalize_definition(definition)
    if definition == CUMULATIVE and (window is None or window <= 0):
        raise ValueError("cumulative/dynamic AUC needs a positive window")
    a = _adapt(model)
    points, skipped = [], []
    for s in sorted(set(float(g) for g in grid)):
        try:
            if definition == INCIDENT:
                v = auc_id(a, s)
            else:
                if truncate_at is not None and s + window > truncate_at:
                    skipped.append((s, "beyond support"))
                    continue
                v = auc_cd(a, s, s + window)
        except DomainError as exc:
            skipped.append((s, str(exc)))
            continue
        if not math.isfinite(v):
            skipped.append((s, "non-finite"))
            continue
        points.append((s, v))
    return AucCurve(definition, tuple(points), estimator or _estimator_label(model),
                    window if definition == CUMULATIVE else None, tuple(skipped))


def riskset_curve(cox_fit: CoxTdFit, records: Data, grid: Sequence[float]) -> AucCurve:
    d = as_arrays(records)
    pts = [(t, auc_id_riskset(cox_fit, d, t)) for t in sorted(set(float(g) for g in grid))]
    return AucCurve(INCIDENT, tuple(pts), "cox-riskset")


def truth_curve(definition: str, grid: Sequence[float], window: Optional[float] = None,
                weibull=None) -> AucCurve:
    """AUC of the data-generating Weibull model (defaults to the study truth)."""
    from .simulate import TRUTH

    w = weibull or TRUTH
    return auc_model_based(w.model(), definition, grid, window, estimator="truth")


# -- Monte-Carlo concordance on true paths ---------------------------------------------

@dataclass(frozen=True)
class ConcordanceEstimate:
    auc: float
    se: float
    n_cases: int
    n_controls: int


def binary_concordance(case_marker, control_marker) -> ConcordanceEstimate:
    """``Pr(X_case > X_control) + 0.5 Pr(tie)`` over all case/control pairs."""
    x = np.asarray(case_marker, dtype=bool)
    y = np.asarray(control_marker, dtype=bool)
    if x.size == 0 or y.size == 0:
        raise DomainError("need at least one case and one control")
    p, pi = x.mean(), y.mean()
    gt = p * (1 - pi)
    ties = p * pi + (1 - p) * (1 - pi)
    auc = gt + 0.5 * ties
    se = 0.5 * math.sqrt(p * (1 - p) / x.size + pi * (1 - pi) / y.size)
    return ConcordanceEstimate(float(auc), se, int(x.size), int(y.size))


def mc_auc_id(paths, t: float, half_width: float = 0.5) -> ConcordanceEstimate:
    """Cases die in ``[t - h, t + h]`` (marker: ill before death); controls survive ``t``."""
    ill_before = paths.illness
    cases = np.abs(paths.death - t) <= half_width
    controls = paths.death > t
    ill_by_t = paths.illness & (paths.t1 <= t)
    return binary_concordance(ill_before[cases], ill_by_t[controls])


def mc_auc_cd(paths, s: float, t: float) -> ConcordanceEstimate:
    """Cases die in ``(s, t]``, controls survive ``t``; marker is illness by ``s``."""
    ill_by_s = paths.illness & (paths.t1 <= s)
    cases = (paths.death > s) & (paths.death <= t)
    controls = paths.death > t
    return binary_concordance(ill_by_s[cases], ill_by_s[controls])
