"""Counting-process kernels: partial scores, their derivatives, and baselines.

The central object is ScoreKernel, a configured estimating function

    U(beta) = sum over events i of  e_i * { c_i - S1(z_i) / S0(z_i) }

where c is the bracket covariate, S1(s) and S0(s) are weighted risk-set sums
of c_j * r_j and r_j with r_j = w_j * exp(offset_j + beta * a_j), and e_i is
an optional per-event weight (defaults to one, in which case U is the plain
partial score). Choosing c, a, offset and the weights yields the standard
treatment score, the instrumented score, the covariate-adjusted score, and
the reweighted scores, all evaluated by one O(n) backward sweep over a
descending-time index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataset import RiskSetIndex, SurvivalDataset, build_risk_index
from .errors import IdentificationError, UndefinedScoreError, ValidationError
from .results import FitResult
from .rootfind import safeguarded_newton

__all__ = [
    "ScoreKernel", "SurvivalCurve", "score_value", "score_derivative",
    "fit_cox", "fit_adjusted_covariate", "breslow_baseline", "kaplan_meier",
    "score_tolerance",
]


def score_tolerance(n):
    """Convergence tolerance on |U(beta)| used by every root solve."""
    return 1e-10 * (1.0 + n)


def _weight_values(weights):
    if weights is None:
        return None
    return np.asarray(getattr(weights, "values", weights), dtype=float)


class ScoreKernel:
    """Partial-score evaluator over a risk-set index.

    Args:
        dataset: source of times/statuses (risk sets come from its index).
        covariate: bracket-term vector c, also the moment vector in S1.
        linpred: vector multiplied by beta inside exp{.}.
        offset: fixed addition inside exp{.} (for fits with a frozen
            coefficient on another column).
        weights: non-negative risk-set weights; default all ones.
        event_weights: per-event multipliers of the bracket term; default
            all ones, which gives the plain (unweighted-event) score.
        signed_weights: permit negative weights and skip the positive-risk-set
            check; score evaluations may then return inf/nan, which the root
            scan treats as "no root here". Used by the signed reweighting
            estimator only.
    """

    def __init__(self, dataset, covariate, linpred, offset=None, weights=None,
                 event_weights=None, index=None, signed_weights=False):
        n = dataset.n
        covariate = np.asarray(covariate, dtype=float)
        linpred = np.asarray(linpred, dtype=float)
        if covariate.shape != (n,) or linpred.shape != (n,):
            raise ValidationError("covariate and linpred must be vectors of length n")
        if not (np.all(np.isfinite(covariate)) and np.all(np.isfinite(linpred))):
            raise ValidationError("covariate and linpred must be finite")
        weights = _weight_values(weights)
        if weights is None:
            weights = np.ones(n)
        if weights.shape != (n,) or not np.all(np.isfinite(weights)):
            raise ValidationError("weights must be a finite vector of length n")
        if not signed_weights and np.any(weights < 0):
            raise ValidationError("risk-set weights must be non-negative")
        event_weights = _weight_values(event_weights)
        if event_weights is not None and (
                event_weights.shape != (n,) or not np.all(np.isfinite(event_weights))):
            raise ValidationError("event weights must be a finite vector of length n")
        if offset is not None:
            offset = np.asarray(offset, dtype=float)
            if offset.shape != (n,) or not np.all(np.isfinite(offset)):
                raise ValidationError("offset must be a finite vector of length n")

        self.index = build_risk_index(dataset) if index is None else index
        self.covariate = covariate
        self.linpred = linpred
        self.offset = offset
        self.weights = weights
        self.signed = signed_weights
        order = self.index.order
        self._c = covariate[order]
        self._a = linpred[order]
        self._o = offset[order] if offset is not None else None
        self._w = weights[order]
        ev = self.index.event_positions
        self._ev_end = self.index.run_last_index()[ev]
        self._ev_c = self._c[ev]
        if event_weights is None:
            self._ev_w = np.ones(ev.shape[0])
        else:
            self._ev_w = event_weights[order][ev]

    @property
    def n_events(self):
        return int(self.index.event_positions.shape[0])

    def _risk_terms(self, beta):
        eta = beta * self._a
        if self._o is not None:
            eta = eta + self._o
        # shift by the max exponent: every downstream quantity is a ratio of
        # S-sums, so the common factor cancels exactly and exp cannot overflow
        eta -= eta.max()
        return self._w * np.exp(eta)

    def _sums(self, r, extra=()):
        """Cumulative risk-set sums of r and of each extra*r, as longdouble."""
        rl = r.astype(np.longdouble)
        out = [np.cumsum(rl)[self._ev_end]]
        for v in extra:
            out.append(np.cumsum(v * rl)[self._ev_end])
        return out

    def _check_s0(self, s0):
        if self.signed:
            return
        if np.any(s0 <= 0.0):
            raise UndefinedScoreError(
                "risk set has zero total weight at an event time"
            )

    def value(self, beta) -> float:
        r = self._risk_terms(beta)
        s0, sc = self._sums(r, (self._c,))
        self._check_s0(s0)
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = self._ev_w * (self._ev_c - np.asarray(sc / s0, dtype=float))
        return float(np.sum(terms))

    def derivative(self, beta) -> float:
        r = self._risk_terms(beta)
        s0, sc, sa, sca = self._sums(r, (self._c, self._a, self._c * self._a))
        self._check_s0(s0)
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = self._ev_w * np.asarray(sc * sa / s0 ** 2 - sca / s0, dtype=float)
        return float(np.sum(terms))

    def event_terms(self, beta) -> np.ndarray:
        """Per-event contributions e_i * (c_i - S1/S0), in index order."""
        r = self._risk_terms(beta)
        s0, sc = self._sums(r, (self._c,))
        self._check_s0(s0)
        with np.errstate(divide="ignore", invalid="ignore"):
            return self._ev_w * (self._ev_c - np.asarray(sc / s0, dtype=float))


def score_value(kernel: ScoreKernel, beta: float) -> float:
    """Value of the configured partial score at beta."""
    return kernel.value(beta)


def score_derivative(kernel: ScoreKernel, beta: float) -> float:
    """Analytic d/d(beta) of the configured partial score."""
    return kernel.derivative(beta)


def solve_kernel(kernel: ScoreKernel, n: int, x0: float = 0.0):
    """Root of the kernel score with the package-wide solver settings."""
    return safeguarded_newton(
        kernel.value, kernel.derivative, x0=x0, score_tol=score_tolerance(n)
    )


def fit_cox(d: SurvivalDataset, weights=None, ci_level=0.95) -> FitResult:
    """Hazard-ratio fit from the treatment partial score.

    With ``weights`` (a WeightVector or array of non-negative per-subject
    weights) both the risk-set sums and the event terms are weighted, which is
    the reweighted score used for inverse-probability-weighted fits. The
    standard error is model-based: the inverse negated score derivative at the
    root.
    """
    x = d.treatment
    if np.all(x == x[0]):
        raise IdentificationError("treatment column is constant; beta is not identified")
    w = _weight_values(weights)
    kernel = ScoreKernel(d, covariate=x, linpred=x, weights=w, event_weights=w)
    res = solve_kernel(kernel, d.n)
    info = -kernel.derivative(res.root)
    se = math.sqrt(1.0 / info) if info > 0 else float("nan")
    kind = getattr(weights, "kind", None)
    method = "ipw_cox" if kind == "ipw" else "cox"
    return FitResult(
        method=method, beta_hat=res.root, se=se, ci_level=ci_level,
        converged=res.converged, iterations=res.iterations,
        score_at_solution=res.score, se_kind="model",
    )


def fit_adjusted_covariate(d: SurvivalDataset, beta_x_fixed: float,
                           q_column: int = 0, ci_level=0.95) -> FitResult:
    """Coefficient of a measured covariate with the treatment effect held fixed.

    Solves the covariate score whose linear predictor is
    beta_x_fixed * x_i + beta * q_i. The reported model-based SE is
    conditional on the supplied treatment coefficient: uncertainty in
    ``beta_x_fixed`` is not propagated.
    """
    if not 0 <= q_column < d.covariates.shape[1]:
        raise ValidationError(f"q_column {q_column} out of range")
    q = d.covariates[:, q_column]
    if np.all(q == q[0]):
        raise IdentificationError("covariate column is constant; beta is not identified")
    kernel = ScoreKernel(d, covariate=q, linpred=q, offset=beta_x_fixed * d.treatment)
    res = solve_kernel(kernel, d.n)
    info = -kernel.derivative(res.root)
    se = math.sqrt(1.0 / info) if info > 0 else float("nan")
    return FitResult(
        method="adjusted", beta_hat=res.root, se=se, ci_level=ci_level,
        converged=res.converged, iterations=res.iterations,
        score_at_solution=res.score, se_kind="model",
    )


@dataclass
class SurvivalCurve:
    """Step-function survival estimate on ascending event times."""

    times: np.ndarray
    survival: np.ndarray
    at_risk: np.ndarray
    events: np.ndarray
    cumulative_hazard: np.ndarray = None

    def survival_at(self, t):
        """Step-function value at time t (1 before the first event)."""
        idx = np.searchsorted(self.times, t, side="right") - 1
        return 1.0 if idx < 0 else float(self.survival[idx])


def _event_table(time, status):
    event_times = np.unique(time[status == 1])
    at_risk = np.array([np.sum(time >= t) for t in event_times], dtype=np.int64)
    events = np.array(
        [np.sum((time == t) & (status == 1)) for t in event_times], dtype=np.int64
    )
    return event_times, at_risk, events


def breslow_baseline(d: SurvivalDataset, beta: float) -> SurvivalCurve:
    """Cumulative baseline hazard at the supplied treatment coefficient.

    Each distinct event time contributes (number of events) divided by the
    risk-set sum of exp(beta * x); tied events share the denominator.
    """
    times, at_risk, events = _event_table(d.time, d.status)
    denom = np.array([
        np.sum(np.exp(beta * d.treatment[d.time >= t])) for t in times
    ])
    if np.any(denom <= 0):
        raise UndefinedScoreError("empty risk set at an event time")
    cumhaz = np.cumsum(events / denom)
    return SurvivalCurve(
        times=times, survival=np.exp(-cumhaz), at_risk=at_risk,
        events=events, cumulative_hazard=cumhaz,
    )


def _km_one(time, status):
    times, at_risk, events = _event_table(time, status)
    survival = np.cumprod(1.0 - events / at_risk)
    return SurvivalCurve(times=times, survival=survival, at_risk=at_risk, events=events)


def kaplan_meier(d: SurvivalDataset, group=None, levels=None) -> dict:
    """Product-limit survival curves, optionally stratified by treatment.

    Returns a dict keyed by group label. With ``group=None`` the single curve
    is keyed ``"all"``; with ``group="treatment"`` one curve per distinct
    treatment value (or per requested level). A requested level with no rows
    is an error.
    """
    if group is None:
        return {"all": _km_one(d.time, d.status)}
    if group != "treatment":
        raise ValidationError(f"unsupported grouping {group!r}")
    values = np.unique(d.treatment) if levels is None else list(levels)
    if levels is None and len(values) > 10:
        raise ValidationError(
            "treatment takes more than 10 distinct values; pass explicit levels"
        )
    curves = {}
    for v in values:
        mask = d.treatment == v
        if not np.any(mask):
            raise ValidationError(f"group {v!r} is empty")
        label = f"{v:g}" if isinstance(v, (int, float, np.floating)) else str(v)
        curves[label] = _km_one(d.time[mask], d.status[mask])
    return curves


def number_at_risk(d: SurvivalDataset, times) -> np.ndarray:
    """At-risk counts at each requested report time."""
    times = np.asarray(times, dtype=float)
    return np.array([np.sum(d.time >= t) for t in times], dtype=np.int64)
