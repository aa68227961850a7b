"""Command-line interface: ``idmauc simulate|fit|auc|study|diagnose``.

Exit codes: 0 success, 1 usage error, 2 data or fit error. Data goes to
files or standard output, progress to standard error.
"""

from __future__ import annotations

import math
import os
import re
import sys
import time
import warnings
from pathlib import Path
from typing import List, Optional

import click

from . import io as idmio
from .auc import CUMULATIVE, INCIDENT, auc_model_based, normalize_definition, riskset_curve, truth_curve
from .fit import DEFAULT_CUTPOINTS, CoxTdFit, FitError, fit_cox_td, fit_pwc_ic, fit_weibull_ic
from .simulate import Administrative, ScenarioConfig, UniformRandom, generate_dataset, scenario, scenario_table
from .study import CD_TARGET, ESTIMATORS, HAZARD_RATIO, Target, run_scenario, study_report


class DataError(click.ClickException):
    exit_code = 2


class _Cli(click.Group):
    """Group that maps usage errors to exit code 1 instead of click's 2."""

    def main(self, args=None, prog_name=None, complete_var=None, standalone_mode=True, **extra):
        if not standalone_mode:
            return super().main(args, prog_name, complete_var, standalone_mode, **extra)
        try:
            rv = super().main(args, prog_name, complete_var, standalone_mode=False, **extra)
        except click.UsageError as exc:
            exc.show()
            sys.exit(1)
        except click.ClickException as exc:
            exc.show()
            sys.exit(exc.exit_code)
        except click.Abort:
            click.echo("Aborted!", err=True)
            sys.exit(1)
        sys.exit(rv if isinstance(rv, int) else 0)


# -- option parsing -------------------------------------------------------------------

_RANGE = re.compile(r"^\s*([-+0-9.eE]+)\s*\.\.\s*([-+0-9.eE]+)\s*:\s*([-+0-9.eE]+)\s*$")


def parse_grid(text: str) -> List[float]:
    """Comma list of numbers and ``a..b:step`` ranges (inclusive of ``b``)."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        m = _RANGE.match(part)
        if m:
            a, b, step = (float(x) for x in m.groups())
            if step <= 0 or b < a:
                raise ValueError(f"bad range {part!r}")
            n = int(math.floor((b - a) / step + 1e-9))
            out += [a + step * j for j in range(n + 1)]
        else:
            out.append(float(part))
    if not out:
        raise ValueError("empty grid")
    return sorted(set(out))


def parse_scenarios(text: str) -> List[str]:
    """Comma list of scenario letters and ``A..F`` ranges."""
    valid = list(scenario_table())
    out = []
    for part in text.split(","):
        part = part.strip().upper()
        if ".." in part:
            a, b = (x.strip() for x in part.split(".."))
            if a not in valid or b not in valid or valid.index(b) < valid.index(a):
                raise ValueError(f"bad scenario range {part!r}; valid names: {', '.join(valid)}")
            out += valid[valid.index(a):valid.index(b) + 1]
        elif part in valid:
            out.append(part)
        else:
            raise ValueError(f"unknown scenario {part!r}; valid names: {', '.join(valid)}")
    return out


def _grid_option(ctx, param, value):
    if value is None:
        return None
    try:
        return parse_grid(value)
    except ValueError as exc:
        raise click.BadParameter(str(exc)) from None


def _definition_option(ctx, param, value):
    if value is None:
        return None
    try:
        return normalize_definition(value)
    except ValueError as exc:
        raise click.BadParameter(str(exc)) from None


def _open_out(path: Optional[str]):
    return open(path, "w", newline="", encoding="utf-8") if path else click.get_text_stream("stdout")


def _read_records(path: str):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            return idmio.read_records(fh)
    except (idmio.ParseError, idmio.ValidationError, UnicodeDecodeError) as exc:
        raise DataError(f"{path}: {exc}") from None


def _progress(msg: str):
    click.echo(msg, err=True)


@click.group(cls=_Cli, context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(package_name="idmauc")
def main():
    """Illness-death models and time-dependent AUC of a binary disease marker."""


# -- simulate ------------------------------------------------------------------------

def sibling_paths_file(output: str) -> Path:
    p = Path(output)
    return p.with_name(p.stem + ".paths" + (p.suffix or ".csv"))


@main.command()
@click.option("--scenario", "scenario_name", help="Scenario name A..R.")
@click.option("--n-subjects", type=click.IntRange(min=1), help="Sample size (explicit config).")
@click.option("--visit-interval", type=click.FloatRange(min=0, min_open=True),
              help="Months between visits (explicit config).")
@click.option("--censoring", type=click.Choice(["uniform", "admin"]), default="uniform",
              show_default=True, help="Censoring scheme (explicit config).")
@click.option("--followup", type=click.FloatRange(min=0, min_open=True), default=120.0,
              show_default=True, help="Follow-up length in months (explicit config).")
@click.option("--seed", type=int, required=True, help="Random seed (mandatory).")
@click.option("-o", "--output", type=click.Path(dir_okay=False), required=True,
              help="Record file; true paths go to <stem>.paths<suffix>.")
def simulate(scenario_name, n_subjects, visit_interval, censoring, followup, seed, output):
    """Simulate a dataset from a named scenario or an explicit configuration."""
    if scenario_name is not None:
        try:
            cfg = scenario(scenario_name.upper())
        except KeyError as exc:
            raise click.BadParameter(exc.args[0], param_hint="--scenario") from None
    else:
        if n_subjects is None or visit_interval is None:
            raise click.UsageError("give --scenario or both --n-subjects and --visit-interval")
        cens = UniformRandom(a=followup / 2, y=followup) if censoring == "uniform" else \
            Administrative(y=followup)
        try:
            cfg = ScenarioConfig(n_subjects, cens, visit_interval, followup)
        except ValueError as exc:
            raise click.UsageError(str(exc)) from None
    ds = generate_dataset(cfg.with_seed(seed))
    paths_file = sibling_paths_file(output)
    with open(output, "w", newline="", encoding="utf-8") as fh:
        idmio.write_records([r for _, r in ds], fh)
    with open(paths_file, "w", newline="", encoding="utf-8") as fh:
        idmio.write_paths([p for p, _ in ds], fh)
    _progress(f"wrote {len(ds)} subjects to {output} and true paths to {paths_file}")


# -- fit -----------------------------------------------------------------------------

@main.command()
@click.argument("input_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--model", type=click.Choice(["cox", "pwc", "weibull"]), required=True)
@click.option("--cutpoints", default=",".join(f"{c:g}" for c in DEFAULT_CUTPOINTS),
              show_default=True, help="Piecewise change points (pwc).")
@click.option("--proportional", is_flag=True, help="pwc: lambda12 = lambda02 exp(beta).")
@click.option("--marker", type=click.Choice(["latent", "observed"]), default="latent",
              show_default=True, help="pwc: apply exp(beta) from onset or from diagnosis.")
@click.option("-o", "--output", type=click.Path(dir_okay=False), help="Fit file (default stdout).")
def fit(input_file, model, cutpoints, proportional, marker, output):
    """Fit a Cox, piecewise-constant or Weibull model to a record file."""
    try:
        cuts = [] if not cutpoints.strip() else parse_grid(cutpoints)
    except ValueError as exc:
        raise click.BadParameter(str(exc), param_hint="--cutpoints") from None
    if marker == "observed" and not proportional:
        raise click.UsageError("--marker observed needs --proportional")
    records = _read_records(input_file)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            if model == "cox":
                result = fit_cox_td(records)
            elif model == "pwc":
                result = fit_pwc_ic(records, cuts, proportional=proportional, marker=marker)
            else:
                result = fit_weibull_ic(records)
    except (FitError, ValueError, ArithmeticError) as exc:
        raise DataError(f"fit failed: {exc}") from None
    out = _open_out(output)
    try:
        idmio.write_fit(result, out)
    finally:
        if output:
            out.close()
    if getattr(result, "converged", True) is False:
        raise DataError("fit did not converge; estimates written for inspection")


# -- auc -----------------------------------------------------------------------------

@main.command()
@click.argument("fit_file", required=False, type=click.Path(exists=True, dir_okay=False))
@click.option("--truth", is_flag=True, help="Use the data-generating Weibull model.")
@click.option("--definition", required=True, callback=_definition_option,
              help="id (incident/dynamic) or cd (cumulative/dynamic).")
@click.option("--grid", required=True, callback=_grid_option,
              help="Times in months: comma list and/or a..b:step ranges.")
@click.option("--window", type=click.FloatRange(min=0, min_open=True), help="C/D window (months).")
@click.option("--riskset", "riskset_records", type=click.Path(exists=True, dir_okay=False),
              help="Cox fits: risk-set I/D estimator on this record file.")
@click.option("-o", "--output", type=click.Path(dir_okay=False), help="Curve file (default stdout).")
def auc(fit_file, truth, definition, grid, window, riskset_records, output):
    """Evaluate an AUC curve from a fit file or the true model."""
    if definition == CUMULATIVE and window is None:
        raise click.UsageError("cumulative/dynamic AUC needs --window")
    if truth == (fit_file is not None):
        raise click.UsageError("give exactly one of FIT_FILE or --truth")
    if riskset_records and definition != INCIDENT:
        raise click.UsageError("--riskset applies to incident/dynamic AUC only")
    if truth:
        curve = truth_curve(definition, grid, window)
    else:
        try:
            with open(fit_file, newline="", encoding="utf-8") as fh:
                fitted = idmio.read_fit(fh)
        except (idmio.ParseError, KeyError, ValueError) as exc:
            raise DataError(f"{fit_file}: cannot read fit: {exc}") from None
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            if riskset_records:
                if not isinstance(fitted, CoxTdFit):
                    raise click.UsageError("--riskset needs a Cox fit")
                curve = riskset_curve(fitted, _read_records(riskset_records), grid)
            else:
                curve = auc_model_based(fitted, definition, grid, window)
    for s, why in curve.skipped:
        _progress(f"skipped t={s:g}: {why}")
    out = _open_out(output)
    try:
        idmio.write_curve(curve, out)
    finally:
        if output:
            out.close()


# -- study ---------------------------------------------------------------------------

@main.command()
@click.option("--scenarios", required=True, help="Scenario letters, e.g. A,C or A..F.")
@click.option("--estimators", default=",".join(ESTIMATORS), show_default=True)
@click.option("--targets", default="id,cd,hr", show_default=True, help="Any of id, cd, hr.")
@click.option("--times", default="12,36,60", callback=_grid_option, show_default=True,
              help="Evaluation times (months).")
@click.option("--window", type=click.FloatRange(min=0, min_open=True), default=CD_TARGET.window,
              show_default=True, help="C/D window (months).")
@click.option("--reps", type=click.IntRange(min=2), default=200, show_default=True)
@click.option("--seed", type=int, required=True, help="Base seed; replication r uses seed + r.")
@click.option("--threads", type=click.IntRange(min=1), default=None,
              help="Worker processes (default: all cores).")
@click.option("-o", "--output", type=click.Path(dir_okay=False), help="Report file (default stdout).")
def study(scenarios, estimators, targets, times, window, reps, seed, threads, output):
    """Run the simulation study and write the bias / empirical SE / RMSE report."""
    try:
        names = parse_scenarios(scenarios)
    except ValueError as exc:
        raise click.BadParameter(str(exc), param_hint="--scenarios") from None
    ests = [e.strip() for e in estimators.split(",") if e.strip()]
    bad = [e for e in ests if e not in ESTIMATORS]
    if bad or not ests:
        raise click.BadParameter(f"unknown estimator(s) {', '.join(bad) or '(none)'}; "
                                 f"valid: {', '.join(ESTIMATORS)}", param_hint="--estimators")
    tlist = []
    for t in (x.strip().lower() for x in targets.split(",") if x.strip()):
        if t == "hr":
            tlist.append(Target(HAZARD_RATIO))
        elif t in ("id", "cd"):
            tlist.append(Target(t, tuple(times), window if t == "cd" else None))
        else:
            raise click.BadParameter(f"unknown target {t!r}; valid: id, cd, hr", param_hint="--targets")
    threads = threads or os.cpu_count() or 1
    results = []
    for name in names:
        t0 = time.perf_counter()
        results += run_scenario(name, ests, tlist, reps, base_seed=seed, threads=threads)
        _progress(f"scenario {name}: {time.perf_counter() - t0:.1f} s")
    out = _open_out(output)
    try:
        idmio.write_report(study_report(results), out)
    finally:
        if output:
            out.close()


# -- diagnose ------------------------------------------------------------------------

@main.command()
@click.argument("input_file", type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "--output", type=click.Path(dir_okay=False), help="Diagnostic file (default stdout).")
def diagnose(input_file, output):
    """Log cumulative hazard against log time per transition (Weibull check)."""
    records = _read_records(input_file)
    na = idmio.nelson_aalen_transitions(records)
    for key in ("01", "02", "12"):
        if key not in na:
            _progress(f"transition {key}: no events; omitted")
    diag = idmio.weibull_diagnostic(na)
    for key, d in diag.items():
        if d.note:
            _progress(f"transition {key}: {d.note}")
        else:
            _progress(f"transition {key}: slope {d.slope:.4f}, intercept {d.intercept:.4f}, "
                      f"R2 {d.r2:.4f}")
    out = _open_out(output)
    try:
        idmio.write_diagnostic(diag, out)
    finally:
        if output:
            out.close()


if __name__ == "__main__":  # pragma: no cover
    main()
