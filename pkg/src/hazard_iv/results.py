"""Fit result container shared by every estimator."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from scipy.stats import norm


@dataclass
class FitResult:
    """Point estimate of a log hazard ratio with its uncertainty summary.

    ``beta_hat`` is on the log hazard-ratio scale; ``hr_hat`` is its exponent.
    ``ci_low``/``ci_high`` bound ``beta_hat`` at ``ci_level`` (Wald). ``se_kind``
    records where the standard error came from: ``model`` (inverse negated
    score derivative), ``sandwich``, or ``bootstrap``.
    """

    method: str
    beta_hat: float
    se: float
    hr_hat: float = None
    ci_low: float = None
    ci_high: float = None
    ci_level: float = 0.95
    converged: bool = True
    iterations: int = 0
    score_at_solution: float = float("nan")
    se_kind: str = "model"
    first_stage_f: float = None
    warnings: list = field(default_factory=list)
    components: list = None
    boot_failure_fraction: float = None

    def __post_init__(self):
        if self.hr_hat is None:
            self.hr_hat = math.exp(self.beta_hat)
        if self.ci_low is None or self.ci_high is None:
            half = norm.ppf(0.5 + self.ci_level / 2.0) * self.se
            self.ci_low = self.beta_hat - half
            self.ci_high = self.beta_hat + half

    @property
    def hr_ci_low(self):
        return math.exp(self.ci_low)

    @property
    def hr_ci_high(self):
        return math.exp(self.ci_high)

    def to_dict(self) -> dict:
        """JSON-ready mapping; field names are part of the CLI contract."""
        out = {
            "method": self.method,
            "beta_hat": self.beta_hat,
            "hr_hat": self.hr_hat,
            "se": self.se,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "hr_ci_low": self.hr_ci_low,
            "hr_ci_high": self.hr_ci_high,
            "ci_level": self.ci_level,
            "converged": self.converged,
            "iterations": self.iterations,
            "score_at_solution": self.score_at_solution,
            "se_kind": self.se_kind,
        }
        if self.first_stage_f is not None:
            out["first_stage_f"] = self.first_stage_f
        if self.boot_failure_fraction is not None:
            out["boot_failure_fraction"] = self.boot_failure_fraction
        if self.warnings:
            out["warnings"] = list(self.warnings)
        if self.components is not None:
            out["components"] = [c.to_dict() for c in self.components]
        return out
