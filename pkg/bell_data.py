"""
Count data for 2x2x2 Bell experiments: the embedded experiments, ingestion of
user datasets in JSON or CSV, and recoding of outcome labels and settings so the
violated CHSH inequality is rho11 + rho12 + rho21 - rho22 <= 2.
"""

from __future__ import annotations

import io
import itertools
import json
import sys
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from config import (
    BLOCK_SUM_TOL,
    CANONICAL_SIGNS,
    EMBEDDED_DATASETS,
    SETTING_PAIRS,
)

CSV_COLUMNS = ["setting_a", "setting_b", "n_pp", "n_pm", "n_mp", "n_mm"]

# All sign vectors with an odd number of -1 entries, lexicographic with -1 before +1
SIGN_VECTORS = [s for s in itertools.product((-1, 1), repeat=4) if s.count(-1) % 2 == 1]


class DatasetError(ValueError):
    """Base class for problems with count data."""


class DatasetNotFoundError(DatasetError):
    pass


class DatasetFormatError(DatasetError):
    """Malformed dataset input; `location` names the offending row or field."""

    def __init__(self, message, location=None):
        self.location = location
        if location is not None:
            message = f"{location}: {message}"
        super().__init__(message)


class DegenerateDataError(DatasetError):
    pass


@dataclass(frozen=True)
class CountTable:
    """Counts N(x, y | a, b) for one setting pair; rows are Alice's outcome (+ first)."""

    counts: tuple

    def __post_init__(self):
        cells = np.asarray(self.counts)
        if cells.shape != (2, 2):
            raise DatasetFormatError(f"count table must be 2x2, got shape {cells.shape}")
        if np.any(cells < 0):
            raise DatasetFormatError("negative count in table")
        object.__setattr__(self, "counts", tuple(tuple(int(c) for c in row) for row in self.counts))

    @property
    def n(self):
        return sum(sum(row) for row in self.counts)

    def as_array(self):
        return np.array(self.counts, dtype=float)


@dataclass(frozen=True)
class BellDataset:
    name: str
    tables: dict
    outcome_labels: dict = field(default_factory=lambda: {"alice": ("+", "-"), "bob": ("+", "-")})
    canonical: bool = False
    source: str = ""

    def __post_init__(self):
        missing = [pair for pair in SETTING_PAIRS if pair not in self.tables]
        if missing:
            a, b = missing[0]
            raise DatasetFormatError(f"missing setting pair ({a},{b})")
        extra = [pair for pair in self.tables if pair not in SETTING_PAIRS]
        if extra:
            raise DatasetFormatError(f"unexpected setting pair {extra[0]}")

    def table(self, a, b):
        return self.tables[(a, b)]

    @property
    def trials(self):
        return [self.tables[pair].n for pair in SETTING_PAIRS]


@dataclass(frozen=True)
class FlatView:
    """Relative frequencies in the order 4(i-1)+j: setting pair i, outcome pair j."""

    phat: np.ndarray
    n: np.ndarray
    counts: np.ndarray

    def block(self, i):
        return self.phat[4 * i : 4 * i + 4]


@dataclass(frozen=True)
class Correlations:
    rho: np.ndarray
    alice_marginals: np.ndarray
    bob_marginals: np.ndarray


@dataclass(frozen=True)
class CanonicalTransform:
    """
    Outcome flips are indexed by the original settings and applied first; setting
    swaps are applied after them.
    """

    alice_flip: tuple = (1, 1)
    bob_flip: tuple = (1, 1)
    alice_setting_swap: bool = False
    bob_setting_swap: bool = False
    tie: bool = False

    @property
    def is_identity(self):
        return (
            self.alice_flip == (1, 1)
            and self.bob_flip == (1, 1)
            and not self.alice_setting_swap
            and not self.bob_setting_swap
        )

    def source_signs(self):
        """The sign vector of the original data that this recoding moves onto CANONICAL_SIGNS."""
        canonical = dict(zip(SETTING_PAIRS, CANONICAL_SIGNS))
        signs = []
        for a, b in SETTING_PAIRS:
            moved = (3 - a if self.alice_setting_swap else a, 3 - b if self.bob_setting_swap else b)
            signs.append(canonical[moved] * self.alice_flip[a - 1] * self.bob_flip[b - 1])
        return tuple(signs)

    def _flipped(self, tables):
        for a in (1, 2):
            if self.alice_flip[a - 1] == -1:
                tables = _flip_alice_outcomes(tables, a)
        for b in (1, 2):
            if self.bob_flip[b - 1] == -1:
                tables = _flip_bob_outcomes(tables, b)
        return tables

    def _swapped(self, tables):
        if self.alice_setting_swap:
            tables = {(3 - a, b): t for (a, b), t in tables.items()}
        if self.bob_setting_swap:
            tables = {(a, 3 - b): t for (a, b), t in tables.items()}
        return tables

    def apply(self, ds):
        return replace(ds, tables=self._swapped(self._flipped(dict(ds.tables))))

    def revert(self, ds):
        return replace(ds, tables=self._flipped(self._swapped(dict(ds.tables))))


@dataclass(frozen=True)
class Canonicalization:
    dataset: BellDataset
    transform: CanonicalTransform


def _flip_alice_outcomes(tables, a):
    tables = dict(tables)
    for b in (1, 2):
        (pp, pm), (mp, mm) = tables[(a, b)].counts
        tables[(a, b)] = CountTable(((mp, mm), (pp, pm)))
    return tables


def _flip_bob_outcomes(tables, b):
    tables = dict(tables)
    for a in (1, 2):
        (pp, pm), (mp, mm) = tables[(a, b)].counts
        tables[(a, b)] = CountTable(((pm, pp), (mm, mp)))
    return tables


# Appendix tables of the six experiments. Outcome "d" (detection) is coded +.
EMBEDDED_COUNTS = {
    "delft": {
        "source": "Hensen et al. (2015), Delft",
        "labels": ("+", "-"),
        "tables": {
            (1, 1): [[23, 3], [4, 23]],
            (1, 2): [[33, 11], [5, 30]],
            (2, 1): [[22, 10], [6, 24]],
            (2, 2): [[4, 20], [21, 6]],
        },
    },
    "munich": {
        "source": "Rosenfeld et al. (2017), Munich",
        "labels": ("+", "-"),
        "tables": {
            (1, 1): [[16, 4], [3, 13]],
            (1, 2): [[11, 4], [2, 17]],
            (2, 1): [[19, 4], [3, 16]],
            (2, 2): [[4, 22], [10, 2]],
        },
    },
    "nist": {
        "source": "Shalm et al. (2015), NIST Boulder",
        "labels": ("d", "n"),
        "tables": {
            (1, 1): [[6378, 3282], [3189, 43897356]],
            (1, 2): [[6794, 2821], [23243, 43276943]],
            (2, 1): [[6486, 21334], [2843, 43338281]],
            (2, 2): [[106, 27539], [30040, 42502788]],
        },
    },
    "vienna": {
        "source": "Giustina et al. (2015), Vienna",
        "labels": ("d", "n"),
        "tables": {
            (1, 1): [[141439, 73391], [76224, 875392736]],
            (1, 2): [[146831, 67941], [326768, 874976534]],
            (2, 1): [[158338, 425067], [58742, 875239860]],
            (2, 2): [[8392, 576445], [463985, 874651457]],
        },
    },
    "weihs": {
        "source": "Weihs et al. (1998), Innsbruck",
        "labels": ("+", "-"),
        "tables": {
            (1, 1): [[1683, 418], [361, 1578]],
            (1, 2): [[1100, 269], [156, 1386]],
            (2, 1): [[1728, 313], [351, 1978]],
            (2, 2): [[179, 1636], [1143, 294]],
        },
    },
    "zhang": {
        "source": "Zhang et al. (2022), Munich",
        "labels": ("+", "-"),
        "tables": {
            (1, 1): [[178, 44], [29, 183]],
            (1, 2): [[199, 36], [28, 160]],
            # printed as "15 1" in the source table; 151 reproduces 1357 wins of 1649
            (2, 1): [[160, 47], [31, 151]],
            (2, 2): [[38, 160], [166, 39]],
        },
    },
}


def load_embedded(name):
    """Return one of the embedded experiments, already in canonical form."""
    key = name.lower()
    if key not in EMBEDDED_COUNTS:
        raise DatasetNotFoundError(
            f"unknown dataset '{name}'; valid names: {', '.join(EMBEDDED_DATASETS)}"
        )
    entry = EMBEDDED_COUNTS[key]
    labels = tuple(entry["labels"])
    return BellDataset(
        name=key,
        tables={pair: CountTable(counts) for pair, counts in entry["tables"].items()},
        outcome_labels={"alice": labels, "bob": labels},
        canonical=True,
        source=entry["source"],
    )


def _as_count(value, location):
    if isinstance(value, bool) or not isinstance(value, (int, np.integer, float)):
        raise DatasetFormatError(f"count must be an integer, got {value!r}", location)
    if isinstance(value, float) and not value.is_integer():
        raise DatasetFormatError(f"count must be an integer, got {value!r}", location)
    if value < 0:
        raise DatasetFormatError(f"negative count {int(value)}", location)
    return int(value)


def _parse_json(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise DatasetFormatError(f"malformed JSON: {e.msg}", f"line {e.lineno}") from e
    if not isinstance(doc, dict):
        raise DatasetFormatError("top level must be an object", "$")

    name = doc.get("name", "custom")
    if not isinstance(name, str):
        raise DatasetFormatError("name must be a string", "name")

    labels = {"alice": ("+", "-"), "bob": ("+", "-")}
    raw_labels = doc.get("outcome_labels", {})
    if not isinstance(raw_labels, dict):
        raise DatasetFormatError("outcome_labels must be an object", "outcome_labels")
    for side in ("alice", "bob"):
        if side in raw_labels:
            pair = raw_labels[side]
            if not (isinstance(pair, list) and len(pair) == 2 and all(isinstance(s, str) for s in pair)):
                raise DatasetFormatError("expected two strings", f"outcome_labels.{side}")
            labels[side] = tuple(pair)

    raw_tables = doc.get("tables")
    if not isinstance(raw_tables, dict):
        raise DatasetFormatError("missing or malformed 'tables' object", "tables")

    tables = {}
    for key, cells in raw_tables.items():
        if key not in ("11", "12", "21", "22"):
            raise DatasetFormatError(f"unknown setting pair key '{key}'", f"tables.{key}")
        pair = (int(key[0]), int(key[1]))
        if not (isinstance(cells, list) and len(cells) == 2):
            raise DatasetFormatError("expected a 2x2 array", f"tables.{key}")
        rows = []
        for r, row in enumerate(cells):
            if not (isinstance(row, list) and len(row) == 2):
                raise DatasetFormatError("expected a 2x2 array", f"tables.{key}[{r}]")
            rows.append(tuple(_as_count(v, f"tables.{key}[{r}][{c}]") for c, v in enumerate(row)))
        tables[pair] = CountTable(tuple(rows))

    for a, b in SETTING_PAIRS:
        if (a, b) not in tables:
            raise DatasetFormatError(f"missing setting pair ({a},{b})", "tables")
    return BellDataset(name=name, tables=tables, outcome_labels=labels)


def _parse_csv(text, name):
    try:
        frame = pd.read_csv(io.StringIO(text), dtype=str, skipinitialspace=True)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DatasetFormatError(f"malformed CSV: {e}", "line 1") from e

    columns = [c.strip() for c in frame.columns]
    if columns != CSV_COLUMNS:
        raise DatasetFormatError(f"header must be {','.join(CSV_COLUMNS)}", "line 1")
    frame.columns = columns

    tables = {}
    for index, row in frame.iterrows():
        # header is line 1
        location = f"row {index + 2}"
        values = []
        for column in CSV_COLUMNS:
            raw = row[column]
            if pd.isna(raw):
                raise DatasetFormatError(f"missing value for {column}", location)
            try:
                values.append(int(str(raw).strip()))
            except ValueError:
                raise DatasetFormatError(f"{column} must be an integer, got {raw!r}", location) from None
        a, b = values[0], values[1]
        if a not in (1, 2) or b not in (1, 2):
            raise DatasetFormatError(f"settings must be 1 or 2, got ({a},{b})", location)
        if (a, b) in tables:
            raise DatasetFormatError(f"duplicate setting pair ({a},{b})", location)
        for column, value in zip(CSV_COLUMNS[2:], values[2:]):
            if value < 0:
                raise DatasetFormatError(f"negative count {value} in {column}", location)
        pp, pm, mp, mm = values[2:]
        tables[(a, b)] = CountTable(((pp, pm), (mp, mm)))

    for a, b in SETTING_PAIRS:
        if (a, b) not in tables:
            raise DatasetFormatError(f"missing setting pair ({a},{b})")
    return BellDataset(name=name, tables=tables)


def parse_dataset(data, fmt, name=None):
    """Parse a JSON or CSV dataset from bytes or text. The result is never marked canonical."""
    text = data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data
    if fmt == "json":
        ds = _parse_json(text)
        if name is not None:
            ds = replace(ds, name=name)
    elif fmt == "csv":
        ds = _parse_csv(text, name or "custom")
    else:
        raise DatasetFormatError(f"unsupported format '{fmt}'; use json or csv")
    print(f"Parsed dataset {ds.name} with {sum(ds.trials)} trials", file=sys.stderr)
    return ds


def serialize_dataset(ds, fmt):
    """Inverse of parse_dataset."""
    if fmt == "json":
        doc = {
            "name": ds.name,
            "outcome_labels": {side: list(ds.outcome_labels[side]) for side in ("alice", "bob")},
            "tables": {
                f"{a}{b}": [list(row) for row in ds.table(a, b).counts] for a, b in SETTING_PAIRS
            },
        }
        return json.dumps(doc, indent=2)
    if fmt == "csv":
        rows = [
            [a, b, *ds.table(a, b).counts[0], *ds.table(a, b).counts[1]] for a, b in SETTING_PAIRS
        ]
        return pd.DataFrame(rows, columns=CSV_COLUMNS).to_csv(index=False)
    raise DatasetFormatError(f"unsupported format '{fmt}'; use json or csv")


def _check_nonempty(ds):
    for (a, b), table in ds.tables.items():
        if table.n == 0:
            raise DegenerateDataError(f"{ds.name}: setting pair ({a},{b}) has no trials")


def correlations(ds):
    """Correlations per setting pair and pooled one-sided marginals P(+)."""
    _check_nonempty(ds)
    rho = np.empty(4)
    for i, pair in enumerate(SETTING_PAIRS):
        (pp, pm), (mp, mm) = ds.tables[pair].counts
        rho[i] = (pp + mm - pm - mp) / ds.tables[pair].n

    alice = np.empty(2)
    bob = np.empty(2)
    for s in (1, 2):
        plus = sum(sum(ds.table(s, b).counts[0]) for b in (1, 2))
        alice[s - 1] = plus / sum(ds.table(s, b).n for b in (1, 2))
        plus = sum(ds.table(a, s).counts[0][0] + ds.table(a, s).counts[1][0] for a in (1, 2))
        bob[s - 1] = plus / sum(ds.table(a, s).n for a in (1, 2))
    return Correlations(rho=rho, alice_marginals=alice, bob_marginals=bob)


def chsh_values(rho):
    """One-sided CHSH values sum_i s_i rho_i for every sign vector in SIGN_VECTORS."""
    return np.array(SIGN_VECTORS, dtype=float) @ np.asarray(rho, dtype=float)


def chsh_all_signs(ds):
    return chsh_values(correlations(ds).rho)


def _recodings(t):
    return t.alice_flip.count(-1) + t.bob_flip.count(-1) + t.alice_setting_swap + t.bob_setting_swap


def _candidate_transforms():
    candidates = []
    for af in itertools.product((1, -1), repeat=2):
        for bf in itertools.product((1, -1), repeat=2):
            for swaps in itertools.product((False, True), repeat=2):
                candidates.append(CanonicalTransform(af, bf, *swaps))
    # fewest recodings first so an already-canonical dataset maps to the identity
    return sorted(candidates, key=_recodings)


def canonicalize(ds):
    """
    Recode outcomes and settings so the largest one-sided S is rho11 + rho12 + rho21 - rho22.

    Among tied maxima the canonical sign vector is kept when it is one of them, otherwise
    the first in SIGN_VECTORS order is used, realized by the recoding with fewest changes.
    """
    values = chsh_all_signs(ds)
    best = values.max()
    tol = 1e-12 * max(1.0, abs(best))
    tied = [i for i, v in enumerate(values) if v >= best - tol]
    canonical_index = SIGN_VECTORS.index(CANONICAL_SIGNS)
    chosen = SIGN_VECTORS[canonical_index if canonical_index in tied else tied[0]]

    for transform in _candidate_transforms():
        if transform.source_signs() == chosen:
            break
    else:
        raise AssertionError(f"no recoding moves {chosen} onto the canonical CHSH form")

    if len(tied) > 1:
        print(f"{ds.name}: several CHSH sign patterns share the maximum {best:.7g}", file=sys.stderr)
        transform = replace(transform, tie=True)
    return Canonicalization(dataset=replace(transform.apply(ds), canonical=True), transform=transform)


def flatten(ds):
    _check_nonempty(ds)
    counts = np.array([ds.tables[pair].as_array().ravel() for pair in SETTING_PAIRS])
    n = counts.sum(axis=1)
    phat = counts / n[:, None]
    if np.max(np.abs(phat.sum(axis=1) - 1.0)) > BLOCK_SUM_TOL:
        raise DegenerateDataError(f"{ds.name}: relative frequencies do not sum to one")
    return FlatView(phat=phat.ravel(), n=n, counts=counts.ravel())
