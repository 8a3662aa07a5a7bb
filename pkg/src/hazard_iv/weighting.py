"""Propensity weighting and the binary-instrument reweighting estimator.

Two weighting schemes live here. Inverse-probability weights balance measured
confounders across treatment arms before a weighted treatment-score fit. The
signed reweighting estimator ("wang" method tag) handles a binary instrument
directly: each subject gets the signed weight

    h(x_i) * (2 w_i - 1) / { f(w_i | q_i) * deltaX(q_i) }

where f is the fitted instrument propensity, deltaX(q) is the fitted
treated-fraction contrast between instrument arms, and h(x) = 2x - 1 by
default. That h gives the weights the usual compliance sign structure
(positive where treatment agrees with its instrument-encouraged value), which
keeps the weighted risk sums positive over most of the time axis; with h
constant the weighted score never crosses zero and the equation is not
well-defined. Weighted risk sums still flip sign where few
instrument-concordant subjects remain at risk, so the event integral stops at
the 95th percentile of observed time, and equations without a root on the
search bracket are reported as failures, not masked.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import qr
from scipy.optimize import brentq
from scipy.special import expit

from .cox import ScoreKernel, score_tolerance
from .dataset import SurvivalDataset
from .errors import (
    BootstrapUnreliableError,
    HazardIVError,
    IdentificationError,
    NoSolutionError,
    SeparationWarning,
    UnsupportedError,
    ValidationError,
)
from .results import FitResult
from .rootfind import DEFAULT_BRACKET

__all__ = [
    "WeightVector", "PropensityModel", "fit_propensity", "ipw_weights",
    "fit_wang", "bootstrap_se", "dichotomize",
]

PROB_CLIP = 1e-6
_COEF_DIVERGENCE = 30.0

# events later than this quantile of observed time are left out of the
# reweighted estimating equation: beyond it too few instrument-concordant
# subjects remain at risk and the signed risk sums degenerate
WANG_EVENT_HORIZON_QUANTILE = 0.95


@dataclass(frozen=True)
class WeightVector:
    """Per-subject weights with their provenance tag.

    ``ipw`` weights must be non-negative; ``wang`` weights are signed by
    construction. ``truncation`` records the quantile bounds applied, if any.
    """

    values: np.ndarray
    kind: str = "unit"
    truncation: tuple = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(values)):
            raise ValidationError("weights must be finite")
        if self.kind in ("unit", "ipw") and np.any(values < 0):
            raise ValidationError(f"{self.kind} weights must be non-negative")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class PropensityModel:
    """Logistic model of a binary target on the measured covariates."""

    coefficients: np.ndarray
    fitted_probabilities: np.ndarray
    target: str


def _require_binary(values, what):
    if not np.all(np.isin(values, (0.0, 1.0))):
        raise UnsupportedError(f"{what} must be binary in {{0, 1}}")


def _check_full_rank(design, names):
    _, r_mat, piv = qr(design, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r_mat))
    tol = diag.max() * max(design.shape) * np.finfo(float).eps if diag.size else 0.0
    rank = int(np.sum(diag > tol))
    if rank < design.shape[1]:
        bad = [names[j] for j in piv[rank:]]
        raise IdentificationError(f"design matrix is rank deficient; columns {bad}")


def _logistic_irls(design, y, max_iter=50, grad_tol=1e-8):
    """Maximum-likelihood logistic fit; returns (coef, probs, converged, separated)."""
    beta = np.zeros(design.shape[1])
    p = np.full(y.shape[0], 0.5)
    dev = np.inf
    converged = False
    for _ in range(max_iter):
        grad = design.T @ (y - p)
        if np.max(np.abs(grad)) <= grad_tol:
            converged = True
            break
        wls = np.clip(p * (1.0 - p), 1e-10, None)
        hess = design.T @ (design * wls[:, None])
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            break
        # halve the step until the deviance does not increase
        scale = 1.0
        for _ in range(30):
            cand = beta + scale * step
            pc = np.clip(expit(design @ cand), 1e-12, 1.0 - 1e-12)
            cand_dev = -2.0 * float(np.sum(y * np.log(pc) + (1 - y) * np.log1p(-pc)))
            if cand_dev <= dev + 1e-12:
                break
            scale *= 0.5
        beta, dev = cand, cand_dev
        p = expit(design @ beta)
    at_bound = np.any(p <= PROB_CLIP) or np.any(p >= 1.0 - PROB_CLIP)
    separated = at_bound and (not converged or np.max(np.abs(beta)) > _COEF_DIVERGENCE)
    return beta, np.clip(p, PROB_CLIP, 1.0 - PROB_CLIP), converged, separated


def _design(d):
    return np.column_stack([np.ones(d.n), d.covariates])


def _design_names(d):
    cov_names = d.column_names.get("covariates") or [
        f"covariate_{j}" for j in range(d.covariates.shape[1])
    ]
    return ["intercept"] + list(cov_names)


def fit_propensity(d: SurvivalDataset, target="treatment_given_q",
                   instrument: int = 0) -> PropensityModel:
    """Logistic regression of a binary column on the covariates plus intercept.

    ``target`` selects the response: ``treatment_given_q`` or
    ``instrument_given_q`` (with ``instrument`` picking the column). Raises on
    a rank-deficient design; warns (and returns the last stable iterate) when
    the data are separated.
    """
    if target == "treatment_given_q":
        y = d.treatment
    elif target == "instrument_given_q":
        if not 0 <= instrument < d.n_instruments:
            raise ValidationError(f"instrument column {instrument} out of range")
        y = d.instruments[:, instrument]
    else:
        raise ValidationError(f"unknown propensity target {target!r}")
    _require_binary(y, f"propensity target {target!r}")
    design = _design(d)
    _check_full_rank(design, _design_names(d))
    coef, probs, converged, separated = _logistic_irls(design, y)
    if separated:
        warnings.warn(
            "logistic fit detected separation; coefficients from last stable iterate",
            SeparationWarning, stacklevel=2,
        )
    elif not converged:
        warnings.warn(
            "logistic fit did not reach gradient tolerance within 50 iterations",
            SeparationWarning, stacklevel=2,
        )
    return PropensityModel(coefficients=coef, fitted_probabilities=probs, target=target)


def ipw_weights(model: PropensityModel, d: SurvivalDataset, stabilized=False,
                truncation=None) -> WeightVector:
    """Inverse-probability-of-treatment weights from a fitted propensity model.

    Treated subjects get 1/p, controls 1/(1-p); ``stabilized`` multiplies by
    the marginal arm probabilities. ``truncation=(low, high)`` clamps the
    weights at those quantiles of their own distribution.
    """
    if model.target != "treatment_given_q":
        raise ValidationError("ipw_weights needs a treatment_given_q propensity model")
    x = d.treatment
    _require_binary(x, "treatment (for inverse-probability weighting)")
    p = model.fitted_probabilities
    w = np.where(x == 1.0, 1.0 / p, 1.0 / (1.0 - p))
    if stabilized:
        rate = float(np.mean(x))
        w = w * np.where(x == 1.0, rate, 1.0 - rate)
    if truncation is not None:
        lo_q, hi_q = truncation
        if not 0.0 <= lo_q < hi_q <= 1.0:
            raise ValidationError("truncation quantiles must satisfy 0 <= low < high <= 1")
        lo, hi = np.quantile(w, [lo_q, hi_q])
        w = np.clip(w, lo, hi)
    return WeightVector(values=w, kind="ipw",
                        truncation=tuple(truncation) if truncation else None)


def dichotomize(values, cut=None) -> np.ndarray:
    """Binary version of a continuous instrument: 1 above the cut (default mean).

    The mean cut keeps the two instrument-arm propensities off exactly 0.5,
    which a median split would force; exact 0.5 makes the signed reweighting
    estimator's risk sums cancel to zero identically on small risk sets.
    """
    values = np.asarray(values, dtype=float)
    cut = float(np.mean(values)) if cut is None else float(cut)
    return (values > cut).astype(float)


def _wang_weights(d, instrument, h_scale):
    """Signed compliance weights from instrument propensity and arm contrasts."""
    w = d.instruments[:, instrument]
    x = d.treatment
    design = _design(d)
    f_model = fit_propensity(d, "instrument_given_q", instrument=instrument)
    pw = f_model.fitted_probabilities
    f_w = np.where(w == 1.0, pw, 1.0 - pw)

    p_by_arm = {}
    for arm in (0.0, 1.0):
        mask = w == arm
        if not np.any(mask):
            raise IdentificationError(f"instrument stratum w={arm:g} is empty")
        coef, _, _, _ = _logistic_irls(design[mask], x[mask])
        p_by_arm[arm] = np.clip(expit(design @ coef), PROB_CLIP, 1.0 - PROB_CLIP)
    delta = p_by_arm[1.0] - p_by_arm[0.0]
    with np.errstate(divide="ignore", invalid="ignore"):
        omega = h_scale * (2.0 * x - 1.0) * (2.0 * w - 1.0) / (f_w * delta)
    if not np.all(np.isfinite(omega)):
        raise NoSolutionError(
            "reweighting failed: treated-fraction contrast between instrument "
            "arms is zero for some subjects"
        )
    return omega


def _wang_point(d, instrument, h_scale):
    """Point estimate of the signed-weight estimating equation, or raise."""
    _require_binary(d.instruments[:, instrument], "instrument (for this estimator)")
    _require_binary(d.treatment, "treatment (for this estimator)")
    omega = _wang_weights(d, instrument, h_scale)
    horizon = np.quantile(d.time, WANG_EVENT_HORIZON_QUANTILE)
    event_w = omega * (d.time <= horizon)
    kernel = ScoreKernel(
        d, covariate=d.treatment, linpred=d.treatment,
        weights=omega, event_weights=event_w, signed_weights=True,
    )
    used = (d.status == 1) & (d.time <= horizon)
    tol = max(1e-6 * float(np.sum(np.abs(omega[used]) * 2.0)), score_tolerance(d.n))
    lo, hi = DEFAULT_BRACKET
    f_lo, f_hi = kernel.value(lo), kernel.value(hi)
    if not (np.isfinite(f_lo) and np.isfinite(f_hi)) or f_lo * f_hi > 0:
        raise NoSolutionError(
            f"signed-weight score has no sign change on [{lo:g}, {hi:g}]",
            bracket=(lo, hi), scores=(f_lo, f_hi),
        )
    root = float(brentq(kernel.value, lo, hi, xtol=1e-10))
    f_root = kernel.value(root)
    if not np.isfinite(f_root) or abs(f_root) > tol:
        raise NoSolutionError(
            f"signed-weight score crosses zero only at a singularity "
            f"(|score| = {abs(f_root):.3g} at beta = {root:.4g})",
            bracket=(lo, hi), scores=(f_lo, f_hi),
        )
    return root, kernel


def fit_wang(d: SurvivalDataset, instrument: int = 0, h_choice="balanced",
             boot_reps: int = 500, seed: int = 0, ci_level=0.95) -> FitResult:
    """Binary-instrument reweighting fit with bootstrap standard error.

    ``h_choice`` selects the free factor h(x) in the weights: ``"balanced"``
    is h(x) = 2x - 1 (the only form whose estimating equation admits a root;
    see the module docstring), and a positive constant c rescales it to
    c * (2x - 1), which leaves the root unchanged. The SE resamples rows with
    replacement and refits the whole pipeline per replicate; replicates that
    fail are dropped and their fraction recorded. ``boot_reps`` below 2 skips
    the SE (NaN), since a standard deviation needs at least two replicates.
    """
    if boot_reps < 1:
        raise ValidationError("boot_reps must be at least 1")
    if h_choice == "balanced":
        h_scale = 1.0
    else:
        h_scale = float(h_choice)
        if h_scale <= 0:
            raise ValidationError("constant h factor must be positive")
    if not 0 <= instrument < d.n_instruments:
        raise ValidationError(f"instrument column {instrument} out of range")

    beta, kernel = _wang_point(d, instrument, h_scale)

    notes = []
    se = float("nan")
    boot_frac = None
    if boot_reps >= 2:
        def point(ds):
            return _wang_point(ds, instrument, h_scale)[0]

        try:
            se, failures = bootstrap_se(point, d, reps=boot_reps, seed=seed)
            boot_frac = failures / boot_reps
        except BootstrapUnreliableError as exc:
            notes.append(str(exc))
    else:
        notes.append("boot_reps < 2: bootstrap SE unavailable")

    return FitResult(
        method="wang", beta_hat=beta, se=se, ci_level=ci_level,
        converged=True, iterations=0,
        score_at_solution=kernel.value(beta), se_kind="bootstrap",
        warnings=notes, boot_failure_fraction=boot_frac,
    )


def bootstrap_se(fit_fn, d: SurvivalDataset, reps: int, seed: int = 0):
    """Naive nonparametric bootstrap standard error of a point estimator.

    Each replicate resamples the n rows jointly with replacement using a
    counter-based generator keyed by (seed, replicate), so the result is
    deterministic and independent of execution order. Returns
    ``(se, failures)`` where failures counts replicates whose refit raised;
    more than 50% failures is an error.
    """
    if reps < 2:
        raise ValidationError("bootstrap needs at least 2 replicates")
    estimates = []
    failures = 0
    for rep in range(reps):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, 2, rep))))
        rows = rng.integers(0, d.n, d.n)
        try:
            est = fit_fn(d.subset(rows))
        except (HazardIVError, np.linalg.LinAlgError):
            failures += 1
            continue
        estimates.append(float(est))
    if failures > 0.5 * reps:
        raise BootstrapUnreliableError(
            f"{failures} of {reps} bootstrap replicates failed"
        )
    if len(estimates) < 2:
        raise BootstrapUnreliableError("fewer than 2 usable bootstrap replicates")
    spread = float(np.std(np.asarray(estimates), ddof=1))
    return spread, failures
