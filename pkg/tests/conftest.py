"""
Pytest configuration and fixtures.
"""

import os
import sys

import numpy as np
import pytest

# Add the parent directory to the path so we can import modules
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from bell_data import BellDataset, CountTable, load_embedded  # noqa: E402


def dataset_from_blocks(blocks, name="synthetic", canonical=True):
    """Build a dataset from four [pp, pm, mp, mm] lists in the order 11, 12, 21, 22."""
    pairs = [(1, 1), (1, 2), (2, 1), (2, 2)]
    tables = {
        pair: CountTable(((int(b[0]), int(b[1])), (int(b[2]), int(b[3])))) for pair, b in zip(pairs, blocks)
    }
    return BellDataset(name=name, tables=tables, canonical=canonical)


def random_dataset(rng, low=1, high=40, name="random"):
    return dataset_from_blocks(rng.integers(low, high, size=(4, 4)), name=name, canonical=False)


@pytest.fixture
def delft():
    """Delft counts as embedded."""
    return load_embedded("delft")


@pytest.fixture
def nist():
    return load_embedded("nist")


@pytest.fixture
def zhang():
    return load_embedded("zhang")


@pytest.fixture
def rng():
    """Seeded generator so property sweeps are repeatable."""
    return np.random.default_rng(20151021)


@pytest.fixture
def sample_json():
    """A user dataset in the JSON input format."""
    return """{
  "name": "lab-run",
  "outcome_labels": {"alice": ["H", "V"], "bob": ["H", "V"]},
  "tables": {
    "11": [[23, 3], [4, 23]],
    "12": [[33, 11], [5, 30]],
    "21": [[22, 10], [6, 24]],
    "22": [[4, 20], [21, 6]]
  }
}"""


@pytest.fixture
def sample_csv():
    """The same counts in the CSV input format."""
    return (
        "setting_a,setting_b,n_pp,n_pm,n_mp,n_mm\n"
        "1,1,23,3,4,23\n"
        "1,2,33,11,5,30\n"
        "2,1,22,10,6,24\n"
        "2,2,4,20,21,6\n"
    )
