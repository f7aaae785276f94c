"""Grant corpus ingestion, productivity labeling, balancing, and fold assignment."""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from .seeds import SplitMix64, derive_seed

GRANT_ID_PATTERN = re.compile(r"^\d+/\d+-\d$")

REQUIRED_FIELDS = ("grant_id", "title_pt", "abstract_pt", "area", "year", "publication_count")
OPTIONAL_FIELDS = ("title_en", "abstract_en", "subject")

HISTOGRAM_THRESHOLDS = tuple(range(2, 9))


class Area(Enum):
    MED = "MED"
    DENT = "DENT"
    VET = "VET"
    OTHER = "OTHER"


class Label(Enum):
    ZERO_PUBLICATIONS = 0
    PRODUCTIVE = 1


class CorpusError(Exception):
    """Base class for corpus ingestion and protocol failures."""


class MalformedRowError(CorpusError):
    def __init__(self, row_number: int, field: str, reason: str):
        self.row_number = row_number
        self.field = field
        self.reason = reason
        super().__init__(f"row {row_number}, field '{field}': {reason}")


class DuplicateGrantIdError(CorpusError):
    def __init__(self, grant_id: str, row_number: int):
        self.grant_id = grant_id
        self.row_number = row_number
        super().__init__(f"duplicate grant_id '{grant_id}' at row {row_number}; file rejected")


class MissingColumnError(CorpusError):
    def __init__(self, columns: Sequence[str]):
        self.columns = tuple(columns)
        super().__init__(f"missing required column(s): {', '.join(columns)}")


class EmptyCorpusError(CorpusError):
    pass


class EmptyClassError(CorpusError):
    pass


@dataclass(frozen=True)
class GrantRecord:
    """One funded grant: identifiers, bilingual text fields, and output count."""

    grant_id: str
    title_pt: str
    abstract_pt: str
    area: Area
    year: int
    publication_count: int
    title_en: str | None = None
    abstract_en: str | None = None
    subject: tuple[str, ...] = ()

    def __post_init__(self):
        if not GRANT_ID_PATTERN.match(self.grant_id):
            raise ValueError(f"grant_id '{self.grant_id}' does not match year/number-digit format")
        if self.publication_count < 0:
            raise ValueError("publication_count must be >= 0")


@dataclass(frozen=True)
class BalancedDataset:
    """Equal-class undersample of a labeled corpus, reproducible from its seed."""

    instances: tuple[tuple[GrantRecord, Label], ...]
    source_indices: tuple[int, ...]
    resample_seed: int
    source_count_pos: int
    source_count_neg: int

    def labels(self) -> list[Label]:
        return [label for _, label in self.instances]

    def __len__(self) -> int:
        return len(self.instances)


@dataclass(frozen=True)
class FoldAssignment:
    """Stratified partition: instance index -> fold index in [0, k)."""

    k: int
    assignment: tuple[int, ...]

    def fold_indices(self, fold: int) -> list[int]:
        return [i for i, f in enumerate(self.assignment) if f == fold]


def derive_label(publication_count: int) -> Label:
    """Zero publications vs at least one."""
    if publication_count < 0:
        raise ValueError("publication_count must be >= 0")
    return Label.PRODUCTIVE if publication_count >= 1 else Label.ZERO_PUBLICATIONS


def label_records(records: Iterable[GrantRecord]) -> list[tuple[GrantRecord, Label]]:
    return [(r, derive_label(r.publication_count)) for r in records]


# ---------------------------------------------------------------------------
# Ingestion
# ---------------------------------------------------------------------------

def _parse_subject(value, fmt: str) -> tuple[str, ...]:
    if value is None:
        return ()
    if fmt == "csv":
        parts = [p.strip() for p in str(value).split(";")]
        return tuple(p for p in parts if p)
    if not isinstance(value, list):
        raise ValueError("subject must be an array")
    return tuple(str(p) for p in value)


def _record_from_mapping(mapping: dict, row_number: int, fmt: str) -> GrantRecord:
    for field in REQUIRED_FIELDS:
        if field not in mapping or mapping[field] is None or str(mapping[field]).strip() == "":
            raise MalformedRowError(row_number, field, "missing or empty value")

    grant_id = str(mapping["grant_id"]).strip()
    if not GRANT_ID_PATTERN.match(grant_id):
        raise MalformedRowError(row_number, "grant_id", f"'{grant_id}' does not match year/number-digit format")

    try:
        area = Area(str(mapping["area"]).strip())
    except ValueError:
        raise MalformedRowError(row_number, "area", f"unknown area '{mapping['area']}'") from None

    try:
        year = int(mapping["year"])
    except (TypeError, ValueError):
        raise MalformedRowError(row_number, "year", f"'{mapping['year']}' is not an integer") from None

    try:
        publication_count = int(mapping["publication_count"])
    except (TypeError, ValueError):
        raise MalformedRowError(
            row_number, "publication_count", f"'{mapping['publication_count']}' is not an integer"
        ) from None
    if publication_count < 0:
        raise MalformedRowError(row_number, "publication_count", "must be >= 0")

    try:
        subject = _parse_subject(mapping.get("subject"), fmt)
    except ValueError as exc:
        raise MalformedRowError(row_number, "subject", str(exc)) from None

    def optional_text(key):
        value = mapping.get(key)
        if value is None:
            return None
        text = str(value).strip()
        return text or None

    return GrantRecord(
        grant_id=grant_id,
        title_pt=str(mapping["title_pt"]).strip(),
        abstract_pt=str(mapping["abstract_pt"]).strip(),
        area=area,
        year=year,
        publication_count=publication_count,
        title_en=optional_text("title_en"),
        abstract_en=optional_text("abstract_en"),
        subject=subject,
    )


def _iter_rows(path: Path, fmt: str):
    """Yield (row_number, mapping) pairs; row numbers are 1-based data rows."""
    if fmt == "csv":
        with open(path, newline="", encoding="utf-8") as handle:
            reader = csv.DictReader(handle)
            header = reader.fieldnames or []
            missing = [c for c in REQUIRED_FIELDS if c not in header]
            if missing:
                raise MissingColumnError(missing)
            for row_number, row in enumerate(reader, start=1):
                yield row_number, row
    elif fmt == "jsonl":
        with open(path, encoding="utf-8") as handle:
            for row_number, line in enumerate(handle, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    mapping = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise MalformedRowError(row_number, "<line>", f"invalid JSON: {exc}") from None
                if not isinstance(mapping, dict):
                    raise MalformedRowError(row_number, "<line>", "line is not a JSON object")
                yield row_number, mapping
    else:
        raise ValueError(f"unknown corpus format '{fmt}' (expected 'csv' or 'jsonl')")


@dataclass
class ValidationReport:
    """Outcome of a lenient scan: accepted records plus rejected rows with reasons."""

    records: list[GrantRecord]
    rejected: list[tuple[int, str, str]]  # (row number, field, reason)


def scan_corpus_file(path: str | Path, fmt: str) -> ValidationReport:
    """Lenient ingestion: collect well-formed records, list malformed rows.

    Duplicate grant ids still reject the whole file (duplicated instances
    would bias cross-validation).
    """
    path = Path(path)
    records: list[GrantRecord] = []
    rejected: list[tuple[int, str, str]] = []
    seen: dict[str, int] = {}
    for row_number, mapping in _iter_rows(path, fmt):
        try:
            record = _record_from_mapping(mapping, row_number, fmt)
        except MalformedRowError as exc:
            rejected.append((exc.row_number, exc.field, exc.reason))
            continue
        if record.grant_id in seen:
            raise DuplicateGrantIdError(record.grant_id, row_number)
        seen[record.grant_id] = row_number
        records.append(record)
    return ValidationReport(records=records, rejected=rejected)


def load_corpus(path: str | Path, fmt: str) -> list[GrantRecord]:
    """Strict ingestion: any malformed row raises, naming the row and field."""
    path = Path(path)
    records: list[GrantRecord] = []
    seen: dict[str, int] = {}
    for row_number, mapping in _iter_rows(path, fmt):
        record = _record_from_mapping(mapping, row_number, fmt)
        if record.grant_id in seen:
            raise DuplicateGrantIdError(record.grant_id, row_number)
        seen[record.grant_id] = row_number
        records.append(record)
    return records


def record_to_dict(record: GrantRecord) -> dict:
    return {
        "grant_id": record.grant_id,
        "title_pt": record.title_pt,
        "abstract_pt": record.abstract_pt,
        "title_en": record.title_en,
        "abstract_en": record.abstract_en,
        "subject": list(record.subject),
        "area": record.area.value,
        "year": record.year,
        "publication_count": record.publication_count,
    }


def write_canonical(records: Iterable[GrantRecord], path: str | Path) -> None:
    """Write records as canonical JSONL (one object per line, fixed key order)."""
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record_to_dict(record), ensure_ascii=False))
            handle.write("\n")


# ---------------------------------------------------------------------------
# Dataset statistics
# ---------------------------------------------------------------------------

def productivity_histogram(records: Sequence[GrantRecord]) -> tuple[tuple[int, float], ...]:
    """Fraction of grants with at least n publications, for n in 2..8."""
    if not records:
        raise EmptyCorpusError("productivity histogram of an empty corpus")
    total = len(records)
    return tuple(
        (n, sum(1 for r in records if r.publication_count >= n) / total)
        for n in HISTOGRAM_THRESHOLDS
    )


# ---------------------------------------------------------------------------
# Balancing and folds
# ---------------------------------------------------------------------------

def balanced_resample(labeled: Sequence[tuple[GrantRecord, Label]], seed: int) -> BalancedDataset:
    """Undersample the majority class to equal counts, keeping source order.

    Every minority instance is kept; a seeded subset of the majority class of
    the same size is drawn without replacement.  Normally the minority class
    is the productive one; if positives outnumber negatives the roles swap.
    """
    pos = [i for i, (_, label) in enumerate(labeled) if label is Label.PRODUCTIVE]
    neg = [i for i, (_, label) in enumerate(labeled) if label is Label.ZERO_PUBLICATIONS]
    if not pos or not neg:
        raise EmptyClassError("balanced resample requires at least one instance of each class")

    minority, majority = (pos, neg) if len(pos) <= len(neg) else (neg, pos)
    rng = SplitMix64(seed)
    chosen = rng.sample_indices(len(majority), len(minority))
    kept = sorted(minority + [majority[j] for j in chosen])
    return BalancedDataset(
        instances=tuple(labeled[i] for i in kept),
        source_indices=tuple(kept),
        resample_seed=seed,
        source_count_pos=len(pos),
        source_count_neg=len(neg),
    )


def repeat_resamples(
    labeled: Sequence[tuple[GrantRecord, Label]],
    n_repeats: int = 10,
    base_seed: int = 0,
) -> list[BalancedDataset]:
    """n_repeats balanced datasets with seeds derived from base_seed."""
    return [balanced_resample(labeled, derive_seed(base_seed, i)) for i in range(n_repeats)]


def stratified_fold_indices(labels: Sequence[int], k: int, seed: int) -> list[int]:
    """Core stratified assignment over integer labels; returns fold per instance.

    Per class, members are shuffled and dealt into folds so that class counts
    per fold differ by at most one; leftover instances go to the folds with
    the smallest running totals, which bounds overall fold-size skew at one.
    """
    n = len(labels)
    if k < 2:
        raise ValueError("k must be at least 2")
    if n < k:
        raise ValueError(f"dataset of size {n} is smaller than k={k}")

    assignment = [0] * n
    totals = [0] * k
    rng = SplitMix64(seed)
    for cls in sorted(set(labels)):
        members = [i for i, lab in enumerate(labels) if lab == cls]
        rng.shuffle(members)
        base, extra = divmod(len(members), k)
        per_fold = [base] * k
        for fold in sorted(range(k), key=lambda f: (totals[f], f))[:extra]:
            per_fold[fold] += 1
        cursor = 0
        for fold in range(k):
            for i in members[cursor:cursor + per_fold[fold]]:
                assignment[i] = fold
            cursor += per_fold[fold]
            totals[fold] += per_fold[fold]
    return assignment


def stratified_kfold(
    dataset: BalancedDataset | Sequence[tuple[GrantRecord, Label]],
    k: int = 10,
    seed: int = 0,
) -> FoldAssignment:
    """Deterministic stratified k-fold assignment for a labeled dataset."""
    if isinstance(dataset, BalancedDataset):
        labels = [label.value for _, label in dataset.instances]
    else:
        labels = [label.value for _, label in dataset]
    return FoldAssignment(k=k, assignment=tuple(stratified_fold_indices(labels, k, seed)))
