"""Comma-separated input/output, screening reconstruction and fit diagnostics.

All files are UTF-8 CSV with a mandatory header. Floats are written with
``repr`` (shortest round-trip representation).
"""

from __future__ import annotations

import csv
import math
from collections import OrderedDict
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, TextIO, Tuple

import numpy as np

from .auc import AucCurve
from .core import ObservedRecord, SubjectPath, validate_record
from .fit import CoxTdFit, MleFit, RecordArrays, as_arrays, nelson_aalen, nelson_aalen_01
from .hazards import StepCumulativeHazard

RECORD_COLUMNS = ("id", "visit_time", "marker", "survival_time", "death_indicator")
PATH_COLUMNS = ("id", "illness_time", "death_time", "exit_direct")
CURVE_COLUMNS = ("definition", "estimator", "window", "time", "value")
FIT_COLUMNS = ("section", "name", "value", "stderr")


class ParseError(ValueError):
    pass


class ValidationError(ValueError):
    def __init__(self, problems: Dict[str, List[str]]):
        self.problems = problems
        lines = [f"subject {sid}: {'; '.join(msgs)}" for sid, msgs in problems.items()]
        super().__init__("invalid records:\n  " + "\n  ".join(lines))


def _num(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _float(text: str, line: int, column: str) -> float:
    try:
        return float(text)
    except (TypeError, ValueError):
        raise ParseError(f"line {line}: column {column!r}: not a number: {text!r}") from None


def _int(text: str, line: int, column: str) -> int:
    v = _float(text, line, column)
    if v != int(v):
        raise ParseError(f"line {line}: column {column!r}: not an integer: {text!r}")
    return int(v)


def _reader(stream: TextIO, required: Sequence[str]):
    reader = csv.DictReader(stream)
    if reader.fieldnames is None:
        raise ParseError("line 1: missing header")
    missing = [c for c in required if c not in reader.fieldnames]
    if missing:
        raise ParseError(f"line 1: missing columns {', '.join(missing)}")
    return reader


# -- records ------------------------------------------------------------------------

def read_records(stream: TextIO, with_ids: bool = False):
    """Long-format records (one row per visit) grouped by ``id``.

    Raises :class:`ParseError` with the line number for malformed fields and
    :class:`ValidationError` naming every invalid subject.
    """
    reader = _reader(stream, RECORD_COLUMNS)
    rows: "OrderedDict[str, list]" = OrderedDict()
    for row in reader:
        line = reader.line_num
        sid = (row["id"] or "").strip()
        if not sid:
            raise ParseError(f"line {line}: empty id")
        rows.setdefault(sid, []).append((
            _float(row["visit_time"], line, "visit_time"),
            _int(row["marker"], line, "marker"),
            _float(row["survival_time"], line, "survival_time"),
            _int(row["death_indicator"], line, "death_indicator"),
        ))
    records, ids, problems = [], [], {}
    for sid, visits in rows.items():
        visits.sort(key=lambda v: v[0])
        surv = {v[2] for v in visits}
        dead = {v[3] for v in visits}
        msgs = []
        if len(surv) > 1 or len(dead) > 1:
            msgs.append("survival_time/death_indicator differ between rows")
        rec = ObservedRecord(tuple(v[0] for v in visits), tuple(v[1] for v in visits),
                             visits[0][2], visits[0][3])
        msgs += validate_record(rec)
        if msgs:
            problems[sid] = msgs
        records.append(rec)
        ids.append(sid)
    if problems:
        raise ValidationError(problems)
    return (ids, records) if with_ids else records


def write_records(records: Sequence[ObservedRecord], stream: TextIO,
                  ids: Optional[Sequence] = None) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(RECORD_COLUMNS)
    for i, rec in enumerate(records):
        sid = ids[i] if ids is not None else i + 1
        for v, m in zip(rec.visit_times, rec.marker):
            w.writerow((sid, _num(v), m, _num(rec.survival_time), rec.death_indicator))


def write_paths(paths: Sequence[SubjectPath], stream: TextIO,
                ids: Optional[Sequence] = None) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(PATH_COLUMNS)
    for i, p in enumerate(paths):
        sid = ids[i] if ids is not None else i + 1
        w.writerow((sid, _num(p.illness_time), _num(p.death_time), int(p.exit_direct)))


def read_paths(stream: TextIO) -> List[SubjectPath]:
    reader = _reader(stream, PATH_COLUMNS)
    out = []
    for row in reader:
        line = reader.line_num
        ill = row["illness_time"]
        out.append(SubjectPath(_float(row["death_time"], line, "death_time"),
                               _float(ill, line, "illness_time") if ill else None,
                               bool(_int(row["exit_direct"], line, "exit_direct"))))
    return out


# -- screening reconstruction -----------------------------------------------------

@dataclass(frozen=True)
class VisitScheme:
    """Visit every ``interval`` months until ``until`` (inclusive), phase by phase."""

    phases: Tuple[Tuple[float, float], ...]

    def __post_init__(self):
        ph = tuple((float(u), float(i)) for u, i in self.phases)
        if not ph:
            raise ValueError("a visit scheme needs at least one phase")
        if any(b[0] <= a[0] for a, b in zip(ph, ph[1:])):
            raise ValueError("phase limits must be ascending")
        if any(i <= 0 for _, i in ph):
            raise ValueError("visit intervals must be positive")
        object.__setattr__(self, "phases", ph)

    def interval_at(self, t: float) -> float:
        for until, interval in self.phases:
            if t <= until:
                return interval
        return self.phases[-1][1]

    def grid(self, until: float) -> np.ndarray:
        """Scheduled visits in ``[0, until]``."""
        visits, t, start = [0.0], 0.0, 0.0
        for limit, interval in self.phases:
            end = min(limit, until)
            n = int(math.floor((end - start) / interval + 1e-9))
            visits += [start + interval * j for j in range(1, n + 1)]
            t = start + interval * n
            if end >= until:
                break
            start = t
        return np.array(sorted(set(v for v in visits if v <= until + 1e-9)))


SARCOMA_SCHEME = VisitScheme(((36.0, 3.0), (60.0, 6.0), (math.inf, 12.0)))


def reconstruct_screening(diagnosis_time: float, scheme: VisitScheme = SARCOMA_SCHEME) -> float:
    """Last negative screen implied by the visit interval in force at diagnosis."""
    if not diagnosis_time > 0:
        raise ValueError("diagnosis_time must be positive")
    return max(0.0, diagnosis_time - scheme.interval_at(diagnosis_time))


def reconstruct_record(survival_time: float, death_indicator: int,
                       diagnosis_time: Optional[float] = None,
                       scheme: VisitScheme = SARCOMA_SCHEME) -> Tuple[ObservedRecord, bool]:
    """Observed record for a diagnosis-only subject, and whether it was reconciled.

    Never-diagnosed subjects get the scheme's grid up to ``survival_time``.
    For diagnosed subjects the last negative is the later of the
    reconstructed screen and the last grid visit before diagnosis; the flag is
    set when the two differ.
    """
    if diagnosis_time is None:
        grid = scheme.grid(survival_time)
        return ObservedRecord(tuple(grid), (0,) * grid.size, survival_time, death_indicator), False
    recon = reconstruct_screening(diagnosis_time, scheme)
    grid = scheme.grid(diagnosis_time)
    before = grid[grid < diagnosis_time]
    last_grid = float(before[-1]) if before.size else 0.0
    L = max(recon, last_grid)
    visits = tuple(float(v) for v in before[before < L]) + (L, float(diagnosis_time))
    marker = (0,) * (len(visits) - 1) + (1,)
    return ObservedRecord(visits, marker, survival_time, death_indicator), not math.isclose(
        recon, last_grid)


# -- Weibull diagnostic ------------------------------------------------------------

@dataclass(frozen=True)
class LogLogFit:
    log_time: np.ndarray
    log_cumhaz: np.ndarray
    slope: float
    intercept: float
    r2: float
    note: str = ""


def _loglog(times, values) -> LogLogFit:
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    keep = (t > 0) & (v > 0)
    x, y = np.log(t[keep]), np.log(v[keep])
    if x.size < 2 or np.ptp(x) == 0:
        return LogLogFit(x, y, math.nan, math.nan, math.nan, "fewer than two points; slope undefined")
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    sst = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / sst if sst > 0 else 1.0
    return LogLogFit(x, y, float(slope), float(intercept), r2)


def weibull_diagnostic(curves: Mapping[str, object]) -> Dict[str, LogLogFit]:
    """Least-squares line through ``(log t, log Lambda(t))`` per transition.

    Values are step hazards (evaluated at their jump times) or ``(times,
    cumulative)`` pairs. A Weibull hazard gives slope ``k`` and intercept
    ``log alpha``.
    """
    out = {}
    for name, c in curves.items():
        if isinstance(c, StepCumulativeHazard):
            out[name] = _loglog(c.jump_times, c.cumulative(c.jump_times))
        else:
            times, values = c
            out[name] = _loglog(times, values)
    return out


def nelson_aalen_transitions(data) -> Dict[str, StepCumulativeHazard]:
    """Nelson-Aalen per transition with diagnosis taken as exact; empty ones omitted."""
    d = as_arrays(data)
    diag = d.diagnosed
    died = d.delta == 1
    exit0 = np.where(diag, d.R, d.T)
    out = {}
    if diag.any():
        out["01"] = nelson_aalen_01(d)
    ev02 = d.T[~diag & died]
    if ev02.size:
        out["02"] = nelson_aalen(ev02, np.zeros(len(d)), exit0)
    ev12 = d.T[diag & died]
    if ev12.size:
        out["12"] = nelson_aalen(ev12, d.R[diag], d.T[diag])
    return out


def write_diagnostic(diag: Mapping[str, LogLogFit], stream: TextIO) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(("transition", "log_time", "log_cumhaz", "slope", "intercept", "r2"))
    for name, f in diag.items():
        for x, y in zip(f.log_time, f.log_cumhaz):
            w.writerow((name, _num(x), _num(y), _num(f.slope), _num(f.intercept), _num(f.r2)))


# -- curves ------------------------------------------------------------------------

def write_curve(curve: AucCurve, stream: TextIO, header: bool = True) -> None:
    w = csv.writer(stream, lineterminator="\n")
    if header:
        w.writerow(CURVE_COLUMNS)
    for t, v in curve.points:
        w.writerow((curve.definition, curve.estimator, _num(curve.window), _num(t), _num(v)))


def read_curves(stream: TextIO) -> List[AucCurve]:
    reader = _reader(stream, CURVE_COLUMNS)
    groups: "OrderedDict[tuple, list]" = OrderedDict()
    for row in reader:
        line = reader.line_num
        win = row["window"]
        key = (row["definition"], row["estimator"], _float(win, line, "window") if win else None)
        groups.setdefault(key, []).append((_float(row["time"], line, "time"),
                                           _float(row["value"], line, "value")))
    return [AucCurve(d, tuple(pts), e, w) for (d, e, w), pts in groups.items()]


def read_curve(stream: TextIO) -> Optional[AucCurve]:
    """Single curve from ``stream``; ``None`` for a header-only file."""
    curves = read_curves(stream)
    if len(curves) > 1:
        raise ParseError(f"expected one curve, found {len(curves)}")
    return curves[0] if curves else None


# -- study report --------------------------------------------------------------------

def write_report(rows: Sequence[Sequence], stream: TextIO) -> None:
    """Rows from :func:`idmauc.study.study_report` (first row is the header)."""
    w = csv.writer(stream, lineterminator="\n")
    for row in rows:
        w.writerow(tuple(_num(x) for x in row))


def read_report(stream: TextIO) -> List[tuple]:
    reader = csv.reader(stream)
    rows = list(reader)
    if not rows:
        raise ParseError("line 1: missing header")
    out = [tuple(rows[0])]
    for row in rows[1:]:
        out.append(tuple(_cell(x) for x in row))
    return out


def _cell(x: str):
    if x == "":
        return None
    try:
        return int(x)
    except ValueError:
        pass
    try:
        return float(x)
    except ValueError:
        return x


# -- fitted models ---------------------------------------------------------------------

def write_fit(fit, stream: TextIO) -> None:
    """Parameters, standard errors and enough structure to rebuild the model."""
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(FIT_COLUMNS)
    if isinstance(fit, CoxTdFit):
        w.writerow(("meta", "family", "cox", ""))
        w.writerow(("meta", "loglik", _num(fit.loglik), ""))
        w.writerow(("meta", "iterations", fit.iterations, ""))
        w.writerow(("param", "beta", _num(fit.beta), _num(fit.stderr)))
        w.writerow(("param", "hazard_ratio", _num(fit.hazard_ratio), ""))
        for key, h in (("jump01", fit.cumhaz01), ("jump02", fit.baseline02)):
            for t, inc in zip(h.jump_times, h.increments):
                w.writerow((key, _num(t), _num(inc), ""))
        return
    w.writerow(("meta", "family", fit.family, ""))
    w.writerow(("meta", "loglik", _num(fit.loglik), ""))
    w.writerow(("meta", "converged", int(fit.converged), ""))
    w.writerow(("meta", "iterations", fit.iterations, ""))
    w.writerow(("meta", "proportional", int(fit.proportional), ""))
    for name, v in fit.params.items():
        se = fit.stderr.get(name) if fit.stderr else None
        w.writerow(("param", name, _num(v), _num(se)))
    if fit.proportional:
        w.writerow(("param", "hazard_ratio", _num(fit.hazard_ratio), ""))
    for key, cuts in fit.cutpoints.items():
        for c in cuts:
            w.writerow(("cut" + key, _num(c), "", ""))


def read_fit(stream: TextIO):
    """Inverse of :func:`write_fit`: a :class:`CoxTdFit` or :class:`MleFit`."""
    reader = _reader(stream, FIT_COLUMNS)
    meta, params, ses, jumps, cuts = {}, OrderedDict(), {}, {"jump01": [], "jump02": []}, {}
    for row in reader:
        line = reader.line_num
        sec = row["section"]
        if sec == "meta":
            meta[row["name"]] = row["value"]
        elif sec == "param":
            params[row["name"]] = _float(row["value"], line, "value")
            if row["stderr"]:
                ses[row["name"]] = _float(row["stderr"], line, "stderr")
        elif sec in jumps:
            jumps[sec].append((_float(row["name"], line, "name"), _float(row["value"], line, "value")))
        elif sec.startswith("cut"):
            cuts.setdefault(sec[3:], []).append(_float(row["name"], line, "name"))
        else:
            raise ParseError(f"line {line}: unknown section {sec!r}")
    family = meta.get("family")
    if family == "cox":
        j01 = np.array(jumps["jump01"]).reshape(-1, 2)
        j02 = np.array(jumps["jump02"]).reshape(-1, 2)
        return CoxTdFit(params["beta"], StepCumulativeHazard(j02[:, 0], j02[:, 1]),
                        StepCumulativeHazard(j01[:, 0], j01[:, 1]), ses.get("beta", math.nan),
                        int(meta.get("iterations", 0)), float(meta.get("loglik", "nan")))
    if family not in ("weibull", "pwc"):
        raise ParseError(f"unknown model family {family!r}")
    params.pop("hazard_ratio", None)
    proportional = bool(int(meta.get("proportional", "0")))
    if family == "weibull":
        theta = np.log([params[k] for k in ("alpha01", "k01", "alpha02", "k02", "alpha12", "k12")])
        cutpoints = {}
    else:
        cutpoints = {k: tuple(cuts.get(k, ())) for k in ("01", "02", "12")}
        vals = [v for k, v in params.items() if k != "beta"]
        theta = np.log(vals)
        if proportional:
            theta = np.concatenate([theta, [params["beta"]]])
    return MleFit(family, dict(params), float(meta.get("loglik", "nan")), ses or None,
                  bool(int(meta.get("converged", "1"))), int(meta.get("iterations", 0)),
                  theta, None, cutpoints, proportional)
