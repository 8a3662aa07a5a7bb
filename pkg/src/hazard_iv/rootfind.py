"""Safeguarded scalar root finding for estimating equations.

The partial-score equations solved here are smooth in beta but not always
monotone (the instrumented score in particular), so Newton steps are kept
inside a sign-change bracket and fall back to bisection whenever they leave
it or the derivative degenerates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import ConvergenceError, NoSolutionError

DEFAULT_BRACKET = (-10.0, 10.0)
MAX_BRACKET = (-40.0, 40.0)
DERIV_FLOOR = 1e-12
STEP_TOL = 1e-9
MAX_ITER = 100


@dataclass
class RootResult:
    root: float
    score: float
    iterations: int
    converged: bool
    bracket: tuple


def expand_bracket(score, bracket=DEFAULT_BRACKET, limit=MAX_BRACKET):
    """Grow the bracket by doubling until the score changes sign.

    Raises NoSolutionError (with the endpoints and score values attached) if
    no sign change appears inside ``limit``.
    """
    lo, hi = bracket
    f_lo, f_hi = score(lo), score(hi)
    while True:
        if np.isfinite(f_lo) and np.isfinite(f_hi) and f_lo * f_hi <= 0.0:
            return (lo, hi), (f_lo, f_hi)
        if lo <= limit[0] and hi >= limit[1]:
            raise NoSolutionError(
                f"score has no sign change on [{lo:g}, {hi:g}] "
                f"(score values {f_lo:.6g}, {f_hi:.6g})",
                bracket=(lo, hi), scores=(f_lo, f_hi),
            )
        lo, hi = max(2.0 * lo, limit[0]), min(2.0 * hi, limit[1])
        f_lo, f_hi = score(lo), score(hi)


def safeguarded_newton(score, derivative, *, x0=0.0, score_tol,
                       bracket=DEFAULT_BRACKET, limit=MAX_BRACKET,
                       step_tol=STEP_TOL, max_iter=MAX_ITER) -> RootResult:
    """Newton iteration from ``x0`` safeguarded by a bisection bracket.

    Convergence means |score| <= score_tol. A Newton step that exits the
    current sign-change bracket, or a derivative below DERIV_FLOOR, triggers a
    bisection step instead; the bracket is updated from the sign of every
    evaluation, so the iteration cannot escape or stall outside it.
    """
    f0 = score(x0)
    if abs(f0) <= score_tol:
        return RootResult(x0, f0, 0, True, bracket)

    (lo, hi), (f_lo, f_hi) = expand_bracket(score, bracket, limit)
    if abs(f_lo) <= score_tol:
        return RootResult(lo, f_lo, 0, True, (lo, hi))
    if abs(f_hi) <= score_tol:
        return RootResult(hi, f_hi, 0, True, (lo, hi))

    x, f = (x0, f0) if lo < x0 < hi else (0.5 * (lo + hi), None)
    if f is None:
        f = score(x)
    for it in range(1, max_iter + 1):
        if abs(f) <= score_tol:
            return RootResult(x, f, it - 1, True, (lo, hi))
        # shrink the bracket around the current point
        if (f < 0.0) == (f_lo < 0.0):
            lo, f_lo = x, f
        else:
            hi, f_hi = x, f
        df = derivative(x)
        x_new = x - f / df if np.isfinite(df) and abs(df) > DERIV_FLOOR else None
        if x_new is None or not (lo < x_new < hi):
            x_new = 0.5 * (lo + hi)
        dx = abs(x_new - x)
        x = x_new
        f = score(x)
        if dx <= step_tol and abs(f) <= score_tol:
            return RootResult(x, f, it, True, (lo, hi))
        if hi - lo <= 1e-14 * max(1.0, abs(x)):
            break
    if abs(f) <= score_tol:
        return RootResult(x, f, max_iter, True, (lo, hi))
    raise ConvergenceError(
        f"root search did not converge: last beta {x:.8g}, score {f:.6g}, "
        f"bracket [{lo:.8g}, {hi:.8g}]",
        bracket=(lo, hi), last_beta=x, last_score=f,
    )


def grid_roots(score, bracket, n_points=64, accept_tol=None, refine_xtol=1e-12):
    """All roots located by a sign-change scan over an even grid.

    Non-finite score values are skipped. Each sign-change interval is refined
    with Brent's method; when ``accept_tol`` is given, refined points whose
    |score| exceeds it are discarded (this rejects sign changes caused by
    poles rather than roots, which matters for signed-weight equations).
    """
    lo, hi = bracket
    xs = np.linspace(lo, hi, n_points)
    fs = np.array([score(x) for x in xs])
    roots = []
    for i in range(n_points - 1):
        f_a, f_b = fs[i], fs[i + 1]
        if not (np.isfinite(f_a) and np.isfinite(f_b)):
            continue
        if f_a == 0.0:
            if accept_tol is None or abs(f_a) <= accept_tol:
                roots.append(xs[i])
            continue
        if f_a * f_b < 0.0:
            r = brentq(score, xs[i], xs[i + 1], xtol=refine_xtol)
            f_r = score(r)
            if accept_tol is None or (np.isfinite(f_r) and abs(f_r) <= accept_tol):
                roots.append(float(r))
    if len(fs) and np.isfinite(fs[-1]) and fs[-1] == 0.0:
        roots.append(xs[-1])
    # dedupe near-identical roots from adjacent intervals
    out = []
    for r in roots:
        if not any(abs(r - o) < 1e-8 for o in out):
            out.append(r)
    return out
