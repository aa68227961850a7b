"""Simulation of illness-death trajectories observed at scheduled visits.

Subject ``i`` of a dataset with seed ``s`` consumes exactly one Philox
counter block, i.e. four uniforms ``(U1, U_exit, U2, U_C)`` from
``Philox(key=s, counter=i)``. A subject is therefore reproducible on its own,
and whole datasets can be drawn in one vectorized call.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from .core import ObservedRecord, SubjectPath
from .hazards import WeibullHazard
from .transprob import IllnessDeathModel

_TINY = 2.0 ** -54  # shifts [0, 1) draws into (0, 1)


@dataclass(frozen=True)
class WeibullParams:
    k: float = 0.5
    alpha01: float = 0.05
    alpha02: float = 0.05
    alpha12: float = 0.56

    def __post_init__(self):
        if min(self.k, self.alpha01, self.alpha02, self.alpha12) <= 0:
            raise ValueError("Weibull parameters must be positive")

    def model(self) -> IllnessDeathModel:
        return IllnessDeathModel(WeibullHazard(self.alpha01, self.k),
                                 WeibullHazard(self.alpha02, self.k),
                                 WeibullHazard(self.alpha12, self.k))


TRUTH = WeibullParams()


@dataclass(frozen=True)
class Administrative:
    y: float = 120.0


@dataclass(frozen=True)
class UniformRandom:
    a: float = 60.0
    y: float = 120.0

    def __post_init__(self):
        if not 0 <= self.a < self.y:
            raise ValueError("uniform censoring needs 0 <= a < y")


Censoring = Union[Administrative, UniformRandom]


@dataclass(frozen=True)
class ScenarioConfig:
    n_subjects: int
    censoring: Censoring
    visit_interval: float
    followup_length: float = 120.0
    weibull: WeibullParams = field(default_factory=WeibullParams)
    seed: int = 0
    name: str = ""

    def __post_init__(self):
        if self.n_subjects <= 0:
            raise ValueError("n_subjects must be positive")
        if not 0 < self.visit_interval <= self.followup_length:
            raise ValueError("need 0 < visit_interval <= followup_length")
        if self.censoring.y != self.followup_length:
            raise ValueError("censoring horizon must equal followup_length")

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return ScenarioConfig(self.n_subjects, self.censoring, self.visit_interval,
                              self.followup_length, self.weibull, seed, self.name)

    def visit_grid(self) -> np.ndarray:
        n = int(math.floor(self.followup_length / self.visit_interval + 1e-9))
        return self.visit_interval * np.arange(n + 1)


@dataclass
class PathArrays:
    """Columnar true paths: ``illness`` flags first exit to state 1."""

    t1: np.ndarray
    illness: np.ndarray
    death: np.ndarray


def subject_uniforms(seed: int, index: int) -> np.ndarray:
    """The four uniforms of subject ``index`` (one Philox block)."""
    gen = np.random.Generator(np.random.Philox(key=seed, counter=index))
    return gen.random(4) + _TINY


def _uniform_block(seed: int, n: int) -> np.ndarray:
    gen = np.random.Generator(np.random.Philox(key=seed))
    return gen.random((n, 4)) + _TINY


def _paths_from_uniforms(w: WeibullParams, u: np.ndarray) -> PathArrays:
    a0 = w.alpha01 + w.alpha02
    t1 = (-np.log(u[:, 0]) / a0) ** (1.0 / w.k)
    illness = u[:, 1] < w.alpha01 / a0
    td = np.where(illness, (t1 ** w.k - np.log(u[:, 2]) / w.alpha12) ** (1.0 / w.k), t1)
    return PathArrays(t1, illness, td)


def simulate_paths(weibull: WeibullParams, n: int, seed: int) -> PathArrays:
    """True trajectories only (no censoring or visits), vectorized."""
    return _paths_from_uniforms(weibull, _uniform_block(seed, n))


def _censor(config: ScenarioConfig, td, uc):
    c = config.censoring
    cens = np.full_like(td, c.y) if isinstance(c, Administrative) else c.a + (c.y - c.a) * uc
    return np.minimum(td, cens), (td <= cens).astype(int)


def _observe(config: ScenarioConfig, t1, illness, tstar) -> Tuple[int, Optional[int]]:
    # number of attended visits and index of the first positive one
    tau = config.visit_interval
    grid_n = int(math.floor(config.followup_length / tau + 1e-9))
    n_visits = min(grid_n, int(math.floor(tstar / tau + 1e-9))) + 1
    if illness and t1 <= tstar:
        j = int(math.ceil(t1 / tau - 1e-12))
        if j * tau < t1:
            j += 1
        if j < n_visits:
            return n_visits, j
    return n_visits, None


def _build(config: ScenarioConfig, t1, ill, td, tstar, delta):
    path = SubjectPath(death_time=float(td), illness_time=float(t1) if ill else None,
                       exit_direct=not ill)
    n_visits, j = _observe(config, t1, ill, tstar)
    grid = config.visit_grid()[:n_visits]
    marker = [0] * n_visits if j is None else [0] * j + [1] * (n_visits - j)
    rec = ObservedRecord(tuple(grid), tuple(marker), float(tstar), int(delta))
    return path, rec


def draw_subject(config: ScenarioConfig, uniforms) -> Tuple[SubjectPath, ObservedRecord]:
    """Simulate one subject from its four uniforms ``(U1, U_exit, U2, U_C)``."""
    u = np.asarray(uniforms, dtype=float).reshape(1, 4)
    p = _paths_from_uniforms(config.weibull, u)
    tstar, delta = _censor(config, p.death, u[:, 3])
    return _build(config, p.t1[0], bool(p.illness[0]), p.death[0], tstar[0], delta[0])


def generate_dataset(config: ScenarioConfig) -> List[Tuple[SubjectPath, ObservedRecord]]:
    u = _uniform_block(config.seed, config.n_subjects)
    p = _paths_from_uniforms(config.weibull, u)
    tstar, delta = _censor(config, p.death, u[:, 3])
    return [_build(config, p.t1[i], bool(p.illness[i]), p.death[i], tstar[i], delta[i])
            for i in range(config.n_subjects)]


def scenario_table() -> Dict[str, ScenarioConfig]:
    """Scenarios A-R: N x censoring x visit interval, Weibull truth fixed."""
    out = {}
    names = iter("ABCDEFGHIJKLMNOPQR")
    for n in (1000, 2000, 400):
        for cens in (UniformRandom(60.0, 120.0), Administrative(120.0)):
            for tau in (3.0, 6.0, 12.0):
                name = next(names)
                out[name] = ScenarioConfig(n, cens, tau, 120.0, TRUTH, 0, name)
    return out


def scenario(name: str) -> ScenarioConfig:
    table = scenario_table()
    try:
        return table[name.upper()]
    except KeyError:
        raise KeyError(f"unknown scenario {name!r}; valid: {', '.join(table)}") from None
