"""Shared domain types: states, true subject paths and interval-censored records."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple


class State(enum.IntEnum):
    DISEASE_FREE = 0
    DISEASED = 1
    DEAD = 2


@dataclass(frozen=True)
class SubjectPath:
    """True continuous-time trajectory of one subject (times in months)."""

    death_time: float
    illness_time: Optional[float] = None
    exit_direct: bool = False

    def __post_init__(self):
        if self.exit_direct and self.illness_time is not None:
            raise ValueError("direct exit cannot carry an illness time")
        if not (math.isfinite(self.death_time) and self.death_time > 0):
            raise ValueError(f"death_time must be positive and finite, got {self.death_time}")
        if self.illness_time is not None:
            if not (math.isfinite(self.illness_time) and self.illness_time > 0):
                raise ValueError("illness_time must be positive and finite")
            if not self.illness_time < self.death_time:
                raise ValueError("illness_time must precede death_time")


@dataclass(frozen=True)
class ObservedRecord:
    """Interval-censored observation of one subject.

    ``last_negative`` and ``first_positive`` are derived from the visit grid
    and marker sequence when not given explicitly.
    """

    visit_times: Tuple[float, ...]
    marker: Tuple[int, ...]
    survival_time: float
    death_indicator: int
    last_negative: Optional[float] = field(default=None)
    first_positive: Optional[float] = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "visit_times", tuple(float(v) for v in self.visit_times))
        object.__setattr__(self, "marker", tuple(int(m) for m in self.marker))
        object.__setattr__(self, "survival_time", float(self.survival_time))
        object.__setattr__(self, "death_indicator", int(self.death_indicator))
        if self.last_negative is None and self.first_positive is None:
            lneg, fpos = _censoring_interval(self.visit_times, self.marker)
            object.__setattr__(self, "last_negative", lneg)
            object.__setattr__(self, "first_positive", fpos)

    @property
    def diagnosed(self) -> bool:
        return self.first_positive is not None

    @property
    def pattern(self) -> str:
        """Likelihood pattern: 'a'..'d' (see :func:`idmauc.fit.ic_loglik`)."""
        if self.diagnosed:
            return "d" if self.death_indicator else "c"
        return "b" if self.death_indicator else "a"


def _censoring_interval(visits: Sequence[float], marker: Sequence[int]):
    lneg = None
    for v, m in zip(visits, marker):
        if m:
            return lneg, v
        lneg = v
    return lneg, None


def marker_at(record: ObservedRecord, t: float) -> int:
    """Observed disease marker at time ``t`` (diagnosis-time convention)."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    fp = record.first_positive
    return int(fp is not None and fp <= t)


def validate_record(record: ObservedRecord) -> List[str]:
    """Return the list of invariant violations of ``record`` (empty when valid)."""
    out = []
    v = record.visit_times
    m = record.marker
    if len(v) != len(m):
        out.append(f"visit/marker length mismatch ({len(v)} vs {len(m)})")
    if len(v) == 0:
        out.append("no visits")
    if any(b <= a for a, b in zip(v, v[1:])):
        out.append("visit times not strictly ascending")
    if any(x not in (0, 1) for x in m):
        out.append("marker values must be 0 or 1")
    if any(b < a for a, b in zip(m, m[1:])):
        out.append("marker not monotone")
    if not (math.isfinite(record.survival_time) and record.survival_time > 0):
        out.append("survival_time must be positive and finite")
    if any(t > record.survival_time for t in v):
        out.append("visit after exit")
    if record.death_indicator not in (0, 1):
        out.append("death_indicator must be 0 or 1")
    if m and m[0] == 1:
        out.append("marker positive at baseline visit")

    fp, ln = record.first_positive, record.last_negative
    any_pos = any(x == 1 for x in m)
    if any_pos != (fp is not None):
        out.append("first_positive inconsistent with markers")
    if fp is not None:
        if ln is None or not ln < fp:
            out.append("last_negative must precede first_positive")
        if fp > record.survival_time:
            out.append("first_positive after exit")
    elif v and ln != v[-1]:
        out.append("last_negative must equal final visit when never diagnosed")
    return out
