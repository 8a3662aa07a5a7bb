"""Instrumented estimation of the population-average hazard ratio.

The instrumented score puts the instrument in the bracket term while the
treatment keeps its place in the exponent, so its root estimates the
treatment's log hazard ratio without modelling how treatment was assigned.
The variance is the scalar M-estimator sandwich: the squared-bracket sum over
events divided by the squared score derivative, both taken at the root.
"""

from __future__ import annotations

import math
import warnings

import numpy as np

from .cox import ScoreKernel, fit_cox, score_tolerance, solve_kernel
from .dataset import SurvivalDataset
from .errors import (
    IdentificationError,
    MultipleRootsWarning,
    NoSolutionError,
    ValidationError,
    WeakInstrumentError,
    WeakInstrumentWarning,
)
from .results import FitResult
from .rootfind import grid_roots

__all__ = ["fit_iv", "sandwich_variance", "fit_pooled_iv", "first_stage_f"]

WEAK_F_THRESHOLD = 10.0
_DERIV_FLOOR = 1e-12


def _instrument_column(d, instrument):
    if not 0 <= instrument < d.n_instruments:
        raise ValidationError(f"instrument column {instrument} out of range")
    w = d.instruments[:, instrument]
    if np.all(w == w[0]):
        raise IdentificationError(
            f"instrument column {instrument} is constant; beta is not identified"
        )
    return w


def _iv_kernel(d, instrument):
    w = _instrument_column(d, instrument)
    return ScoreKernel(d, covariate=w, linpred=d.treatment)


def sandwich_variance(d: SurvivalDataset, instrument: int, beta: float) -> float:
    """Sandwich variance of the instrumented estimator at the converged root.

    Var = [dU/dbeta]^-2 * sum over events of {w_i - S1/S0}^2, all sums
    unnormalized so the sample-size scaling is built in.
    """
    kernel = _iv_kernel(d, instrument)
    slope = kernel.derivative(beta)
    if not np.isfinite(slope) or abs(slope) < _DERIV_FLOOR:
        raise WeakInstrumentError(
            f"score derivative {slope:.3g} at beta={beta:.6g} is numerically zero; "
            "the instrument is too weak for a variance estimate"
        )
    meat = float(np.sum(kernel.event_terms(beta) ** 2))
    return meat / slope ** 2


def first_stage_f(d: SurvivalDataset, instrument: int = 0) -> float:
    """F-statistic of the least-squares regression of treatment on one instrument.

    Instrument-strength diagnostic; +inf when the instrument reproduces the
    treatment exactly.
    """
    if d.n <= 2:
        raise ValidationError("first-stage F needs more than 2 subjects")
    w = _instrument_column(d, instrument)
    x = d.treatment
    if np.all(x == x[0]):
        raise IdentificationError("treatment column is constant")
    r = np.corrcoef(x, w)[0, 1]
    r2 = r * r
    if r2 >= 1.0 - 1e-12:  # perfect fit up to rounding
        return float("inf")
    return float(r2 * (d.n - 2) / (1.0 - r2))


def fit_iv(d: SurvivalDataset, instrument: int = 0, ci_level=0.95) -> FitResult:
    """Instrumented hazard-ratio fit with sandwich standard error.

    Solves the instrumented score for beta, reports the sandwich SE and Wald
    interval, and attaches the first-stage F statistic. If the score changes
    sign more than once on a 64-point scan of the bracket, the root closest
    to the unadjusted treatment fit is reported with a warning; uniqueness is
    a large-sample property only.
    """
    kernel = _iv_kernel(d, instrument)
    notes = []
    f_stat = first_stage_f(d, instrument)
    if f_stat < WEAK_F_THRESHOLD:
        msg = f"first-stage F {f_stat:.2f} < {WEAK_F_THRESHOLD:g}: weak instrument"
        warnings.warn(msg, WeakInstrumentWarning, stacklevel=2)
        notes.append(msg)

    res = solve_kernel(kernel, d.n)
    beta = res.root

    roots = grid_roots(kernel.value, res.bracket,
                       accept_tol=math.sqrt(score_tolerance(d.n)))
    distinct = [r for r in roots if abs(r - beta) > 1e-6]
    if distinct:
        candidates = [beta] + distinct
        try:
            ref = fit_cox(d, ci_level=ci_level).beta_hat
        except Exception:
            ref = beta
        beta = min(candidates, key=lambda r: abs(r - ref))
        msg = (f"score has {len(candidates)} roots on "
               f"[{res.bracket[0]:g}, {res.bracket[1]:g}]; "
               "reporting the one closest to the unadjusted fit")
        warnings.warn(msg, MultipleRootsWarning, stacklevel=2)
        notes.append(msg)

    var = sandwich_variance(d, instrument, beta)
    return FitResult(
        method="iv", beta_hat=beta, se=math.sqrt(var), ci_level=ci_level,
        converged=res.converged, iterations=res.iterations,
        score_at_solution=kernel.value(beta), se_kind="sandwich",
        first_stage_f=f_stat, warnings=notes,
    )


def pool_estimates(betas, ses) -> float:
    """Inverse-standard-error weighted mean of per-instrument estimates."""
    betas = np.asarray(betas, dtype=float)
    inv = 1.0 / np.asarray(ses, dtype=float)
    return float(np.sum(inv * betas) / np.sum(inv))


def fit_pooled_iv(d: SurvivalDataset, instruments=None, ci_level=0.95,
                  boot_reps: int = 0, seed: int = 0) -> FitResult:
    """Pool per-instrument fits with inverse-standard-error weights.

    pooled beta = sum(s_m^-1 * beta_m) / sum(s_m^-1) over the instruments
    whose individual fits converged; instruments that fail are excluded and
    recorded. No analytic SE is attached to the pooled point estimate; pass
    ``boot_reps >= 2`` for a bootstrap SE (otherwise se/ci are NaN).
    """
    if instruments is None:
        instruments = list(range(d.n_instruments))
    if not instruments:
        raise ValidationError("at least one instrument column is required")

    fits, notes = [], []
    for m in instruments:
        try:
            fits.append(fit_iv(d, m, ci_level=ci_level))
        except Exception as exc:  # noqa: BLE001 - per-instrument failure is data
            notes.append(f"instrument {m} excluded: {exc}")
    if not fits:
        raise NoSolutionError(
            "no instrument yielded a converged fit: " + "; ".join(notes)
        )

    beta = pool_estimates([f.beta_hat for f in fits], [f.se for f in fits])

    se = float("nan")
    boot_frac = None
    if boot_reps >= 2:
        from .weighting import bootstrap_se

        def pooled_point(ds):
            return fit_pooled_iv(ds, instruments, ci_level=ci_level).beta_hat

        se, failures = bootstrap_se(pooled_point, d, reps=boot_reps, seed=seed)
        boot_frac = failures / boot_reps

    iters = max(f.iterations for f in fits)
    return FitResult(
        method="pooled_iv", beta_hat=beta, se=se, ci_level=ci_level,
        converged=True, iterations=iters,
        score_at_solution=float("nan"), se_kind="bootstrap",
        warnings=notes, components=fits, boot_failure_fraction=boot_frac,
    )
