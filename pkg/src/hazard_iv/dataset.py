"""Right-censored survival data: loading, validation, and risk-set indexing.

A dataset row is (time, status, treatment, instruments..., covariates...).
Times are observed follow-up (min of failure and censoring time), status is 1
for an observed event and 0 for censoring. Datasets are immutable after
construction and safe to share across concurrent estimator runs.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, IdentificationWarning, ValidationError

_NA_TOKENS = {"", "na", "nan", "n/a", "null", "none"}


def _as_matrix(values, n, name):
    if values is None:
        return np.zeros((n, 0), dtype=float)
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(n, 1)
    if arr.shape[0] != n:
        raise ValidationError(f"{name} has {arr.shape[0]} rows, expected {n}")
    return arr


def _is_constant(col):
    return col.size > 0 and np.all(col == col[0])


@dataclass(frozen=True)
class SurvivalDataset:
    """Immutable table of right-censored survival data.

    Attributes:
        time: observed times, non-negative, one per subject.
        status: event indicators in {0, 1}.
        treatment: treatment values (binary or continuous).
        instruments: n x M matrix of instrument values (M >= 0).
        covariates: n x p matrix of measured covariates (p >= 0).
        column_names: labels used in reports, keyed by role.
        n_dropped: rows removed by the loader under the "drop" NA policy.
    """

    time: np.ndarray
    status: np.ndarray
    treatment: np.ndarray
    instruments: np.ndarray = None
    covariates: np.ndarray = None
    column_names: dict = field(default_factory=dict)
    n_dropped: int = 0

    def __post_init__(self):
        time = np.asarray(self.time, dtype=float)
        status = np.asarray(self.status, dtype=float)
        treatment = np.asarray(self.treatment, dtype=float)
        n = time.shape[0]
        if status.shape[0] != n or treatment.shape[0] != n:
            raise ValidationError("time, status and treatment must have equal length")
        if n == 0:
            raise ValidationError("dataset is empty")
        if not np.all(np.isfinite(time)) or np.any(time < 0):
            raise ValidationError("all times must be finite and non-negative")
        bad = ~np.isin(status, (0.0, 1.0))
        if np.any(bad):
            raise ValidationError(
                f"status must be 0 or 1; offending row {int(np.flatnonzero(bad)[0]) + 1}"
            )
        if not np.all(np.isfinite(treatment)):
            raise ValidationError("treatment contains missing or non-finite values")
        instruments = _as_matrix(self.instruments, n, "instruments")
        covariates = _as_matrix(self.covariates, n, "covariates")
        if not np.all(np.isfinite(instruments)):
            raise ValidationError("instruments contain missing or non-finite values")
        if not np.all(np.isfinite(covariates)):
            raise ValidationError("covariates contain missing or non-finite values")
        status = status.astype(np.int64)
        if status.sum() < 1:
            raise ValidationError("dataset has no events; scores would be identically zero")
        if n > 1 and _is_constant(treatment):
            warnings.warn("treatment column is constant; fits on it will fail",
                          IdentificationWarning, stacklevel=2)
        for m in range(instruments.shape[1]):
            if n > 1 and _is_constant(instruments[:, m]):
                warnings.warn(f"instrument column {m} is constant; IV fits on it will fail",
                              IdentificationWarning, stacklevel=2)
        for arr in (time, status, treatment, instruments, covariates):
            arr.setflags(write=False)
        object.__setattr__(self, "time", time)
        object.__setattr__(self, "status", status)
        object.__setattr__(self, "treatment", treatment)
        object.__setattr__(self, "instruments", instruments)
        object.__setattr__(self, "covariates", covariates)

    @property
    def n(self):
        return int(self.time.shape[0])

    @property
    def n_events(self):
        return int(self.status.sum())

    @property
    def n_instruments(self):
        return int(self.instruments.shape[1])

    def subset(self, rows) -> "SurvivalDataset":
        """New dataset from the given row indices (used by bootstrap resampling)."""
        rows = np.asarray(rows, dtype=np.int64)
        return SurvivalDataset(
            time=self.time[rows],
            status=self.status[rows],
            treatment=self.treatment[rows],
            instruments=self.instruments[rows],
            covariates=self.covariates[rows],
            column_names=dict(self.column_names),
        )

    def with_instruments(self, instruments) -> "SurvivalDataset":
        """Copy of the dataset with the instrument matrix replaced."""
        return SurvivalDataset(
            time=self.time,
            status=self.status,
            treatment=self.treatment,
            instruments=instruments,
            covariates=self.covariates,
            column_names=dict(self.column_names),
            n_dropped=self.n_dropped,
        )


@dataclass(frozen=True)
class RiskSetIndex:
    """Permutation of a dataset into descending-time order.

    ``order`` sorts rows by time descending, breaking ties with events before
    censorings and then original row order, so the index is deterministic up
    to that rule regardless of input row order. ``tie_group_starts`` marks the
    start offset (in sorted order) of each run of equal times; rows in a run
    share their risk set, which is how tied event times get the shared
    denominator of the Breslow convention. ``event_positions`` are offsets in
    sorted order whose rows are events.
    """

    order: np.ndarray
    event_positions: np.ndarray
    tie_group_starts: np.ndarray

    @property
    def n(self):
        return int(self.order.shape[0])

    def run_last_index(self) -> np.ndarray:
        """For each sorted position, the last sorted position of its tie run."""
        starts = self.tie_group_starts
        stops = np.r_[starts[1:], self.n]
        return np.repeat(stops - 1, stops - starts)


def build_risk_index(d: SurvivalDataset) -> RiskSetIndex:
    """Index a dataset for O(n) cumulative risk-set sweeps."""
    # lexsort: last key is primary. Negated keys give descending order.
    order = np.lexsort((np.arange(d.n), -d.status, -d.time))
    t_sorted = d.time[order]
    starts = np.flatnonzero(np.r_[True, t_sorted[1:] != t_sorted[:-1]])
    events = np.flatnonzero(d.status[order] == 1)
    return RiskSetIndex(order=order, event_positions=events, tie_group_starts=starts)


def _parse_cell(raw, row_num, col_name):
    text = raw.strip() if raw is not None else ""
    if text.lower() in _NA_TOKENS:
        return None
    try:
        return float(text)
    except ValueError:
        raise ValidationError(
            f"value {raw!r} in column {col_name!r}, data row {row_num} is not numeric"
        ) from None


def load_csv(path, column_map, na_policy="reject", delimiter=",") -> SurvivalDataset:
    """Load and validate a survival dataset from a delimited text file.

    Args:
        path: file with a header row.
        column_map: mapping with keys ``time``, ``status``, ``treatment``
            (column names, required) and optionally ``instruments`` and
            ``covariates`` (lists of column names).
        na_policy: ``reject`` fails on any missing value; ``drop`` removes
            incomplete rows and records the count on the returned dataset.
        delimiter: field separator (decimal point only, no locale handling).
    """
    if na_policy not in ("reject", "drop"):
        raise ConfigurationError(f"unknown na_policy {na_policy!r}")
    for key in ("time", "status", "treatment"):
        if not column_map.get(key):
            raise ConfigurationError(f"column binding for {key!r} is required")
    instruments = list(column_map.get("instruments") or [])
    covariates = list(column_map.get("covariates") or [])
    wanted = [column_map["time"], column_map["status"], column_map["treatment"]]
    wanted += instruments + covariates

    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise ConfigurationError(f"cannot open {path}: {exc}") from None
    with fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path} is empty") from None
        header = [h.strip() for h in header]
        missing = [c for c in wanted if c not in header]
        if missing:
            raise ConfigurationError(
                f"column(s) {missing} not found in {path}; header is {header}"
            )
        pos = [header.index(c) for c in wanted]
        rows = []
        dropped = 0
        for row_num, raw in enumerate(reader, start=1):
            if not raw or all(not c.strip() for c in raw):
                continue
            if max(pos) >= len(raw):
                raise ValidationError(f"data row {row_num} has too few fields")
            values = [_parse_cell(raw[p], row_num, header[p]) for p in pos]
            if any(v is None for v in values):
                if na_policy == "drop":
                    dropped += 1
                    continue
                col = header[pos[values.index(None)]]
                raise ValidationError(
                    f"missing value in column {col!r}, data row {row_num} "
                    "(na_policy=reject)"
                )
            if values[1] not in (0.0, 1.0):
                raise ValidationError(
                    f"status value {values[1]!r} outside {{0, 1}} in data row {row_num}"
                )
            rows.append(values)

    if not rows:
        raise ValidationError(f"{path} contains no usable data rows")
    table = np.asarray(rows, dtype=float)
    k = 3 + len(instruments)
    names = {
        "time": column_map["time"],
        "status": column_map["status"],
        "treatment": column_map["treatment"],
        "instruments": instruments,
        "covariates": covariates,
    }
    return SurvivalDataset(
        time=table[:, 0],
        status=table[:, 1],
        treatment=table[:, 2],
        instruments=table[:, 3:k],
        covariates=table[:, k:],
        column_names=names,
        n_dropped=dropped,
    )
