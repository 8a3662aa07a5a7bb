import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from hazard_iv import SurvivalDataset


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)


@pytest.fixture
def four_row():
    """Times (2, 1, 3, 0.5), status (1, 1, 0, 1): three events, one censored."""
    return SurvivalDataset(
        time=[2.0, 1.0, 3.0, 0.5],
        status=[1, 1, 0, 1],
        treatment=[1.0, 0.0, 1.0, 0.0],
    )


@pytest.fixture
def two_subject():
    """Two events at distinct times; score at beta=0 is -0.5 by hand."""
    return SurvivalDataset(time=[2.0, 1.0], status=[1, 1], treatment=[1.0, 0.0])


@pytest.fixture
def tied_toy():
    """Both events tied at t=1: the treatment score has its root at beta=0."""
    return SurvivalDataset(time=[1.0, 1.0], status=[1, 1], treatment=[1.0, 0.0])


def write_csv(path, text):
    path.write_text(text)
    return str(path)
