"""Frequency and tf-idf document vectors over a truncated vocabulary.

The weighting uses the ratio-of-logs form (f/n_d) * (log N / log N_w).  The
ratio makes the logarithm base immaterial.  Two degenerate points need care:
a word occurring in every document collapses the ratio to exactly 1, and a
word occurring in a single document would divide by log(1) = 0, so the inner
logarithm is smoothed to log(N_w + 1) in that one case only.  The
conventional log(N / N_w) inverse-document-frequency is available behind the
``idf_variant`` switch for comparison.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Sequence

from .corpus import GrantRecord
from .textproc import TokenKind, tokenize


class FieldSelector(Enum):
    TITLE = "title"
    SUBJECT = "subject"
    TITLE_PLUS_SUBJECT = "title_plus_subject"
    ABSTRACT = "abstract"


class VectorMode(Enum):
    RAW_FREQUENCY = "raw_frequency"
    TFIDF = "tfidf"


class IdfVariant(Enum):
    LOG_RATIO = "log_ratio"        # (log N) / (log N_w)
    LOG_QUOTIENT = "log_quotient"  # log(N / N_w)


class OutOfVocabularyError(KeyError):
    pass


class MissingFieldError(ValueError):
    pass


@dataclass(frozen=True)
class Vocabulary:
    """Fitted top-X vocabulary with document frequencies."""

    entries: dict[str, int]      # word -> dense index
    doc_freq: dict[str, int]     # word -> number of documents containing it
    corpus_size: int
    top_x: int

    def __post_init__(self):
        if len(self.entries) > self.top_x:
            raise ValueError("vocabulary exceeds its top_x bound")
        if sorted(self.entries.values()) != list(range(len(self.entries))):
            raise ValueError("vocabulary indices must be dense in [0, size)")
        for word in self.entries:
            n_w = self.doc_freq.get(word, 0)
            if not 1 <= n_w <= self.corpus_size:
                raise ValueError(f"doc_freq for '{word}' outside [1, N]")

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class SparseVector:
    """(index, weight) pairs with strictly increasing indices."""

    pairs: tuple[tuple[int, float], ...]

    def __post_init__(self):
        last = -1
        for index, weight in self.pairs:
            if index <= last:
                raise ValueError("indices must be strictly increasing")
            if not math.isfinite(weight):
                raise ValueError("weights must be finite")
            last = index

    def to_dense(self, size: int) -> list[float]:
        dense = [0.0] * size
        for index, weight in self.pairs:
            dense[index] = weight
        return dense


def field_text(record: GrantRecord, selector: FieldSelector, language: str = "pt") -> str:
    """Raw text of the selected field; subject keywords are space-joined."""
    if selector is FieldSelector.SUBJECT:
        return " ".join(record.subject)
    if language == "pt":
        title, abstract = record.title_pt, record.abstract_pt
    else:
        title, abstract = record.title_en, record.abstract_en
    if selector is FieldSelector.TITLE:
        if title is None:
            raise MissingFieldError(f"record {record.grant_id} has no {language} title")
        return title
    if selector is FieldSelector.TITLE_PLUS_SUBJECT:
        if title is None:
            raise MissingFieldError(f"record {record.grant_id} has no {language} title")
        return " ".join([title] + list(record.subject))
    if abstract is None:
        raise MissingFieldError(f"record {record.grant_id} has no {language} abstract")
    return abstract


def field_tokens(record: GrantRecord, selector: FieldSelector, language: str = "pt") -> list[str]:
    """Normalized word tokens of the selected field."""
    return text_tokens(field_text(record, selector, language))


def text_tokens(text: str) -> list[str]:
    return [t.normalized for t in tokenize(text) if t.kind is TokenKind.WORD]


def fit_vocabulary_from_tokens(token_lists: Sequence[Sequence[str]], top_x: int) -> Vocabulary:
    """Retain the top_x words by total corpus frequency; ties break lexicographically."""
    if not token_lists:
        raise ValueError("cannot fit a vocabulary on an empty corpus")
    if top_x < 1:
        raise ValueError("top_x must be >= 1")
    totals: Counter[str] = Counter()
    documents: Counter[str] = Counter()
    for tokens in token_lists:
        totals.update(tokens)
        documents.update(set(tokens))
    retained = sorted(totals.items(), key=lambda item: (-item[1], item[0]))[:top_x]
    entries = {word: index for index, (word, _) in enumerate(retained)}
    return Vocabulary(
        entries=entries,
        doc_freq={word: documents[word] for word in entries},
        corpus_size=len(token_lists),
        top_x=top_x,
    )


def fit_vocabulary(
    corpus: Sequence[GrantRecord],
    selector: FieldSelector,
    top_x: int,
    language: str = "pt",
) -> Vocabulary:
    if not corpus:
        raise ValueError("cannot fit a vocabulary on an empty corpus")
    return fit_vocabulary_from_tokens(
        [field_tokens(record, selector, language) for record in corpus], top_x
    )


def tfidf_weight(
    f_wd: int,
    n_d: int,
    corpus_size: int,
    doc_freq: int,
    idf_variant: IdfVariant = IdfVariant.LOG_RATIO,
) -> float:
    """Weight of a word with in-document frequency f_wd in a document of n_d words."""
    if n_d < 1 or corpus_size < 1:
        raise ValueError("n_d and corpus size must be >= 1")
    if doc_freq == 0:
        raise OutOfVocabularyError("word unseen at fit time")
    if not doc_freq <= corpus_size:
        raise ValueError("doc_freq cannot exceed corpus size")
    if f_wd == 0:
        return 0.0
    tf = f_wd / n_d
    if idf_variant is IdfVariant.LOG_QUOTIENT:
        return tf * math.log(corpus_size / doc_freq)
    if doc_freq == corpus_size:
        return tf  # log N / log N == 1 regardless of base
    inner = math.log(2.0) if doc_freq == 1 else math.log(doc_freq)
    return tf * (math.log(corpus_size) / inner)


def vectorize(
    tokens: Sequence[str],
    vocabulary: Vocabulary,
    mode: VectorMode = VectorMode.TFIDF,
    idf_variant: IdfVariant = IdfVariant.LOG_RATIO,
) -> SparseVector:
    """One entry per in-vocabulary word; n_d counts every word token, in or out."""
    counts = Counter(tokens)
    n_d = len(tokens)
    pairs = []
    for word, count in counts.items():
        index = vocabulary.entries.get(word)
        if index is None:
            continue
        if mode is VectorMode.RAW_FREQUENCY:
            weight = float(count)
        else:
            weight = tfidf_weight(
                count, n_d, vocabulary.corpus_size, vocabulary.doc_freq[word], idf_variant
            )
        pairs.append((index, weight))
    pairs.sort()
    return SparseVector(pairs=tuple(pairs))


# ---------------------------------------------------------------------------
# Persistence (UTF-8 TSV: header with N and top_x, then word/index/doc_freq)
# ---------------------------------------------------------------------------

def save_vocabulary(vocabulary: Vocabulary, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(f"N={vocabulary.corpus_size}\ttop_x={vocabulary.top_x}\n")
        for word, index in sorted(vocabulary.entries.items(), key=lambda item: item[1]):
            handle.write(f"{word}\t{index}\t{vocabulary.doc_freq[word]}\n")


def load_vocabulary(path: str | Path) -> Vocabulary:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ValueError(f"{path}: empty vocabulary file")
    header = dict(part.split("=", 1) for part in lines[0].split("\t"))
    entries: dict[str, int] = {}
    doc_freq: dict[str, int] = {}
    for line in lines[1:]:
        if not line.strip():
            continue
        word, index, n_w = line.split("\t")
        entries[word] = int(index)
        doc_freq[word] = int(n_w)
    return Vocabulary(
        entries=entries,
        doc_freq=doc_freq,
        corpus_size=int(header["N"]),
        top_x=int(header["top_x"]),
    )
