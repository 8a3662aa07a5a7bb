"""Independent brute-force reference implementations used only by tests.

Everything here is written from the defining formulas with O(n^2) loops and
no shared code with the package, so the fast sweep implementations can be
checked against a genuinely independent computation.
"""

import numpy as np


def brute_score(time, status, covariate, linpred, beta, offset=None,
                weights=None, event_weights=None):
    """Partial score by direct double summation over events and risk sets.

    For each event i the risk set is {j: time_j >= time_i}; the bracket term
    is c_i - S1/S0 with S1 = sum_j c_j w_j exp(off_j + beta a_j) and
    S0 = sum_j w_j exp(off_j + beta a_j), scaled by the event weight.
    """
    n = len(time)
    offset = np.zeros(n) if offset is None else np.asarray(offset, float)
    weights = np.ones(n) if weights is None else np.asarray(weights, float)
    event_weights = np.ones(n) if event_weights is None else np.asarray(event_weights, float)
    total = 0.0
    for i in range(n):
        if status[i] != 1:
            continue
        at_risk = time >= time[i]
        r = weights[at_risk] * np.exp(offset[at_risk] + beta * linpred[at_risk])
        s0 = np.sum(r)
        s1 = np.sum(covariate[at_risk] * r)
        total += event_weights[i] * (covariate[i] - s1 / s0)
    return total


def brute_score_derivative(time, status, covariate, linpred, beta, offset=None,
                           weights=None, event_weights=None):
    """d(score)/d(beta) by direct differentiation of the risk-set ratios."""
    n = len(time)
    offset = np.zeros(n) if offset is None else np.asarray(offset, float)
    weights = np.ones(n) if weights is None else np.asarray(weights, float)
    event_weights = np.ones(n) if event_weights is None else np.asarray(event_weights, float)
    total = 0.0
    for i in range(n):
        if status[i] != 1:
            continue
        at_risk = time >= time[i]
        r = weights[at_risk] * np.exp(offset[at_risk] + beta * linpred[at_risk])
        c = covariate[at_risk]
        a = linpred[at_risk]
        s0 = np.sum(r)
        sc = np.sum(c * r)
        sa = np.sum(a * r)
        sca = np.sum(c * a * r)
        total += event_weights[i] * (sc * sa / s0 ** 2 - sca / s0)
    return total


def brute_kaplan_meier(time, status):
    """Product-limit curve by explicit risk-set counting at each event time."""
    event_times = np.unique(time[status == 1])
    surv = 1.0
    out = []
    for t in event_times:
        at_risk = int(np.sum(time >= t))
        d = int(np.sum((time == t) & (status == 1)))
        surv *= 1.0 - d / at_risk
        out.append((t, surv, at_risk, d))
    return out


def brute_breslow_cumhaz(time, status, treatment, beta):
    """Cumulative baseline hazard by direct risk-set sums at each event time."""
    event_times = np.unique(time[status == 1])
    cum = 0.0
    out = []
    for t in event_times:
        at_risk = time >= t
        denom = np.sum(np.exp(beta * treatment[at_risk]))
        d = int(np.sum((time == t) & (status == 1)))
        cum += d / denom
        out.append((t, cum))
    return out


def random_survival_data(rng, n, *, binary_treatment=False, with_weights=False,
                         n_instruments=1, censor_frac=0.3):
    """Random small dataset for oracle comparisons (not a model simulation)."""
    time = rng.exponential(1.0, n)
    status = (rng.random(n) > censor_frac).astype(int)
    if status.sum() == 0:
        status[int(rng.integers(0, n))] = 1
    if binary_treatment:
        treatment = (rng.random(n) < 0.5).astype(float)
        if np.all(treatment == treatment[0]):
            treatment[0] = 1.0 - treatment[0]
    else:
        treatment = rng.standard_normal(n)
    instruments = 0.8 * treatment[:, None] + rng.standard_normal((n, n_instruments))
    weights = rng.uniform(0.2, 3.0, n) if with_weights else None
    return time, status, treatment, instruments, weights
