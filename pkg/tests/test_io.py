import io
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from idmauc import io as idmio
from idmauc.auc import AucCurve, auc_cd, auc_id, truth_curve
from idmauc.core import ObservedRecord, SubjectPath
from idmauc.fit import fit_cox_td, fit_pwc_ic, fit_weibull_ic, nelson_aalen
from idmauc.simulate import TRUTH, simulate_paths
from idmauc.study import study_report, StudyResult


def _roundtrip(write, read, obj, **kw):
    buf = io.StringIO()
    write(obj, buf, **kw)
    buf.seek(0)
    return read(buf)


def test_records_roundtrip(small_records):
    back = _roundtrip(idmio.write_records, idmio.read_records, small_records)
    assert back == small_records


def test_records_with_ids_grouping():
    text = ("id,visit_time,marker,survival_time,death_indicator\n"
            "b,0,0,10,1\na,0,0,5,0\nb,3,1,10,1\na,3,0,5,0\n")
    ids, recs = idmio.read_records(io.StringIO(text), with_ids=True)
    assert ids == ["b", "a"]
    assert recs[0].first_positive == 3.0 and recs[0].pattern == "d"
    assert recs[1].pattern == "a"


def test_records_empty_file():
    assert idmio.read_records(io.StringIO("id,visit_time,marker,survival_time,death_indicator\n")) == []


def test_records_parse_error_line():
    text = ("id,visit_time,marker,survival_time,death_indicator\n"
            "1,0,0,10,1\n1,x,0,10,1\n")
    with pytest.raises(idmio.ParseError, match="line 3"):
        idmio.read_records(io.StringIO(text))
    with pytest.raises(idmio.ParseError, match="missing columns"):
        idmio.read_records(io.StringIO("id,visit_time\n1,0\n"))


def test_records_validation_names_subjects():
    text = ("id,visit_time,marker,survival_time,death_indicator\n"
            "ok,0,0,10,1\n"
            "s7,0,1,10,1\n"          # positive at baseline
            "s9,0,0,10,1\ns9,3,0,11,1\n")  # survival times disagree
    with pytest.raises(idmio.ValidationError) as exc:
        idmio.read_records(io.StringIO(text))
    assert set(exc.value.problems) == {"s7", "s9"}
    assert "s7" in str(exc.value)


def test_paths_roundtrip(data_a):
    paths = data_a[0][:200]
    assert _roundtrip(idmio.write_paths, idmio.read_paths, paths) == paths


def test_curve_roundtrip():
    c = truth_curve("cd", [12.0, 36.0], 60.0)
    assert _roundtrip(idmio.write_curve, idmio.read_curve, c) == c
    assert _roundtrip(idmio.write_curve, idmio.read_curve, AucCurve("id", (), "truth")) is None
    buf = io.StringIO()
    idmio.write_curve(AucCurve("id", (), "truth"), buf)
    assert buf.getvalue().strip() == ",".join(idmio.CURVE_COLUMNS)


def test_report_roundtrip():
    res = [StudyResult("A", "weibull", "I/D t=12", (0.7, 0.71), 0.706340628761341, -0.001,
                       0.007, 0.005, 2, 2),
           StudyResult("A", "cox-prob", "HR", (math.nan, math.nan), 11.2, None, None, None, 0, 2)]
    rows = study_report(res)
    back = _roundtrip(idmio.write_report, idmio.read_report, rows)
    assert back == rows


@pytest.mark.parametrize("family", ["cox", "weibull", "pwc"])
def test_fit_roundtrip(family, data_a):
    d = data_a[2]
    if family == "cox":
        f = fit_cox_td(d)
    elif family == "weibull":
        f = fit_weibull_ic(d, with_se=False)
    else:
        f = fit_pwc_ic(d, proportional=True, marker="observed", with_se=False)
    back = _roundtrip(idmio.write_fit, idmio.read_fit, f)
    for s in (12.0, 36.0):
        assert auc_id(back, s) == auc_id(f, s)
        assert auc_cd(back, s, s + 60) == auc_cd(f, s, s + 60)
    if family != "weibull":
        assert back.hazard_ratio == pytest.approx(f.hazard_ratio, rel=1e-15)


def test_fit_unknown_section():
    text = "section,name,value,stderr\nmeta,family,weibull,\nbogus,x,1,\n"
    with pytest.raises(idmio.ParseError, match="line 3"):
        idmio.read_fit(io.StringIO(text))


# -- screening reconstruction --------------------------------------------------------

@pytest.mark.parametrize("diag,expected", [(24, 21), (48, 42), (72, 60), (36, 33), (2, 0)])
def test_reconstruct_screening(diag, expected):
    assert idmio.reconstruct_screening(diag) == expected


@pytest.mark.parametrize("bad", [0.0, -1.0])
def test_reconstruct_rejects_nonpositive(bad):
    with pytest.raises(ValueError):
        idmio.reconstruct_screening(bad)


def test_sarcoma_grid():
    g = idmio.SARCOMA_SCHEME.grid(84)
    assert g[:3].tolist() == [0, 3, 6]
    assert 36 in g and 42 in g and 72 in g and 84 in g
    assert 39 not in g and 66 not in g


def test_reconstruct_record():
    rec, flag = idmio.reconstruct_record(100, 1, 24)
    assert (rec.last_negative, rec.first_positive) == (21.0, 24.0) and not flag
    # off-grid diagnosis: grid visit at 36 is later than 38.5 - 6
    rec, flag = idmio.reconstruct_record(100, 0, 38.5)
    assert rec.last_negative == 36.0 and flag
    rec, flag = idmio.reconstruct_record(50, 0)
    assert not rec.diagnosed and rec.visit_times[-1] == 48.0 and not flag


@given(st.floats(0.5, 150))
def test_reconstruct_record_valid(diag):
    rec, _ = idmio.reconstruct_record(diag + 10, 1, diag)
    assert rec.last_negative < rec.first_positive == diag
    assert rec.last_negative >= idmio.reconstruct_screening(diag)


# -- Weibull diagnostic --------------------------------------------------------------

def test_loglog_exact_weibull():
    t = np.linspace(1, 120, 50)
    diag = idmio.weibull_diagnostic({"02": (t, 0.05 * t ** 0.5)})["02"]
    assert diag.slope == pytest.approx(0.5, abs=1e-9)
    assert diag.intercept == pytest.approx(math.log(0.05), abs=1e-9)
    assert diag.r2 == pytest.approx(1.0, abs=1e-9)


def test_loglog_single_jump():
    d = idmio.weibull_diagnostic({"12": ([5.0], [0.1])})["12"]
    assert math.isnan(d.slope) and d.note


def test_nelson_aalen_02_slope():
    p = simulate_paths(TRUTH, 10_000, seed=11)
    direct = ~p.illness
    curve = nelson_aalen(p.death[direct], np.zeros(p.t1.size), p.t1)
    d = idmio.weibull_diagnostic({"02": curve})["02"]
    assert 0.45 <= d.slope <= 0.55


def test_nelson_aalen_transitions(small_records):
    na = idmio.nelson_aalen_transitions(small_records)
    assert set(na) <= {"01", "02", "12"} and "01" in na
    never_ill = [ObservedRecord((0.0, 3.0), (0, 0), 5.0, 1)]
    assert set(idmio.nelson_aalen_transitions(never_ill)) == {"02"}
    buf = io.StringIO()
    idmio.write_diagnostic(idmio.weibull_diagnostic(na), buf)
    assert buf.getvalue().startswith("transition,log_time")
