"""Lexical-complexity metrics over a tagged document, assembled in a fixed schema.

Degenerate metrics (e.g. concreteness dispersion with fewer than two scored
tokens) are returned as ``None`` rather than imputed here; the evaluation
layer substitutes training-split medians so that no information leaks across
folds.  Standard deviations are population SDs throughout: a document is the
complete population of its own sentences.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, fields
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from .textproc import (
    LexiconSet,
    PosTag,
    TaggedDocument,
    TaggedToken,
    TokenKind,
    analyze,
    builtin_lexicons,
)

BRUNET_EXPONENT = -0.165


class EmptyDocumentError(ValueError):
    def __init__(self, doc_id: str | None = None):
        name = f" '{doc_id}'" if doc_id else ""
        super().__init__(f"document{name} is empty after normalization")


class DiversityClass(Enum):
    FUNCTION_WORD = "function_word"
    PREPOSITION = "preposition"
    PUNCTUATION = "punctuation"


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered feature names with descriptions; column identity for the ML stage."""

    fields: tuple[tuple[str, str, str], ...]  # (name, description, value kind)

    def __post_init__(self):
        names = [name for name, _, _ in self.fields]
        if len(names) != len(set(names)):
            raise ValueError("feature names must be unique")

    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _, _ in self.fields)

    def __len__(self) -> int:
        return len(self.fields)


@dataclass(frozen=True)
class ComplexityVector:
    sentence_count: int
    word_count: int
    vocabulary_size: int
    adjective_count: int
    adverb_count: int
    verb_count: int
    noun_count: int
    noun_ratio: float
    words_per_sentence: float
    logical_operator_count: int
    function_word_diversity: float | None
    preposition_diversity: float | None
    punctuation_diversity: float | None
    noun_sd: float | None
    brunet_index: float | None
    mean_noun_phrase: float | None
    concreteness_sd: float | None
    ne_ratio: float | None

    def as_row(self) -> tuple:
        return tuple(getattr(self, f.name) for f in fields(self))


COMPLEXITY_SCHEMA = FeatureSchema(
    (
        ("sentence_count", "total number of sentences", "int"),
        ("word_count", "total number of word tokens", "int"),
        ("vocabulary_size", "number of distinct word types", "int"),
        ("adjective_count", "word tokens tagged adjective", "int"),
        ("adverb_count", "word tokens tagged adverb", "int"),
        ("verb_count", "word tokens tagged verb", "int"),
        ("noun_count", "word tokens tagged noun", "int"),
        ("noun_ratio", "nouns over word tokens", "float"),
        ("words_per_sentence", "mean word tokens per sentence", "float"),
        ("logical_operator_count", "tokens in the logical-operator lexicon", "int"),
        ("function_word_diversity", "function-word types over vocabulary size", "float"),
        ("preposition_diversity", "preposition types over vocabulary size", "float"),
        ("punctuation_diversity", "punctuation types over vocabulary size", "float"),
        ("noun_sd", "population SD of nouns per sentence", "float"),
        ("brunet_index", "v ** (n ** -0.165)", "float"),
        ("mean_noun_phrase", "noun-phrase chunks per sentence", "float"),
        ("concreteness_sd", "population SD of concreteness scores", "float"),
        ("ne_ratio", "named-entity spans over word tokens", "float"),
    )
)


@dataclass(frozen=True)
class BasicCounts:
    sentence_count: int
    word_count: int
    vocabulary_size: int
    adjective_count: int
    adverb_count: int
    verb_count: int
    noun_count: int
    noun_ratio: float
    words_per_sentence: float


def _population_sd(values: Sequence[float]) -> float:
    n = len(values)
    mean = sum(values) / n
    return math.sqrt(sum((v - mean) ** 2 for v in values) / n)


def _word_tokens(doc: TaggedDocument) -> list[TaggedToken]:
    return [t for t in doc.tokens if t.token.kind is TokenKind.WORD]


def basic_counts(doc: TaggedDocument) -> BasicCounts:
    """Sentence/word/word-class counts; punctuation is excluded from word_count."""
    words = _word_tokens(doc)
    word_count = len(words)
    noun_count = sum(1 for t in words if t.tag is PosTag.NOUN)
    return BasicCounts(
        sentence_count=doc.sentence_count,
        word_count=word_count,
        vocabulary_size=len({t.token.normalized for t in words}),
        adjective_count=sum(1 for t in words if t.tag is PosTag.ADJECTIVE),
        adverb_count=sum(1 for t in words if t.tag is PosTag.ADVERB),
        verb_count=sum(1 for t in words if t.tag is PosTag.VERB),
        noun_count=noun_count,
        noun_ratio=noun_count / word_count if word_count else 0.0,
        words_per_sentence=word_count / doc.sentence_count if doc.sentence_count else 0.0,
    )


def logical_operator_count(doc: TaggedDocument, lexicons: LexiconSet) -> int:
    """Token count (not type count) of logical-operator lexicon hits."""
    return sum(1 for t in _word_tokens(doc) if t.token.normalized in lexicons.logical_operators)


def type_diversity(doc: TaggedDocument, selector: DiversityClass) -> float | None:
    """Distinct types of the selected class over the word-type vocabulary size.

    The denominator is the same for all three selectors.  Punctuation types
    are not a subset of the word vocabulary, so that ratio is clamped at 1.0
    to keep the declared [0, 1] range on degenerate inputs.
    """
    words = _word_tokens(doc)
    vocabulary_size = len({t.token.normalized for t in words})
    if vocabulary_size == 0:
        return None
    if selector is DiversityClass.FUNCTION_WORD:
        numerator = len({t.token.normalized for t in words if t.is_function_word})
    elif selector is DiversityClass.PREPOSITION:
        numerator = len({t.token.normalized for t in words if t.tag is PosTag.PREPOSITION})
    else:
        numerator = len(
            {t.token.normalized for t in doc.tokens if t.token.kind is TokenKind.PUNCTUATION}
        )
    return min(1.0, numerator / vocabulary_size)


def _per_sentence_counts(doc: TaggedDocument, predicate) -> list[int]:
    counts = [0] * doc.sentence_count
    for t in doc.tokens:
        if predicate(t):
            counts[t.token.sentence_index] += 1
    return counts


def noun_sd(doc: TaggedDocument) -> float | None:
    """Population SD of per-sentence noun counts."""
    if doc.sentence_count == 0:
        return None
    counts = _per_sentence_counts(
        doc, lambda t: t.token.kind is TokenKind.WORD and t.tag is PosTag.NOUN
    )
    return _population_sd(counts)


def brunet_index(word_count: int, vocabulary_size: int) -> float | None:
    """Lexical diversity: v ** (n ** -0.165)."""
    if word_count == 0:
        return None
    if not 1 <= vocabulary_size <= word_count:
        raise ValueError("vocabulary_size must satisfy 1 <= v <= word_count")
    return vocabulary_size ** (word_count ** BRUNET_EXPONENT)


def _sentence_word_runs(doc: TaggedDocument) -> Iterable[list[TaggedToken]]:
    by_sentence: dict[int, list[TaggedToken]] = {}
    for t in doc.tokens:
        by_sentence.setdefault(t.token.sentence_index, []).append(t)
    for index in sorted(by_sentence):
        yield by_sentence[index]


def _chunk_count(tokens: Sequence[TaggedToken], postnominal_adjectives: bool) -> int:
    count = 0
    i = 0
    n = len(tokens)
    while i < n:
        j = i
        if tokens[j].tag is PosTag.DETERMINER:
            j += 1
        while j < n and tokens[j].tag is PosTag.ADJECTIVE:
            j += 1
        k = j
        while k < n and tokens[k].tag is PosTag.NOUN:
            k += 1
        if k > j:
            if postnominal_adjectives:
                while k < n and tokens[k].tag is PosTag.ADJECTIVE:
                    k += 1
            count += 1
            i = k
        else:
            i += 1
    return count


def mean_noun_phrase(doc: TaggedDocument) -> float | None:
    """Noun-phrase chunks per sentence.

    Chunk pattern: determiner? adjective* noun+, with post-nominal adjectives
    also absorbed for Portuguese, where modifiers typically follow the head.
    """
    if doc.sentence_count == 0:
        return None
    postnominal = doc.language == "pt"
    total = sum(_chunk_count(sentence, postnominal) for sentence in _sentence_word_runs(doc))
    return total / doc.sentence_count


def concreteness_sd(doc: TaggedDocument, lexicons: LexiconSet) -> float | None:
    """Population SD of per-token concreteness scores; None below two scored tokens.

    Tokens absent from the norms are skipped, not imputed: a made-up score
    would manufacture signal.
    """
    scores = [
        lexicons.concreteness[t.token.normalized]
        for t in _word_tokens(doc)
        if t.token.normalized in lexicons.concreteness
    ]
    if len(scores) < 2:
        return None
    return _population_sd(scores)


def ne_ratio(doc: TaggedDocument) -> float | None:
    """Named-entity spans over word-token count."""
    words = _word_tokens(doc)
    if not words:
        return None
    return doc.entity_span_count / len(words)


def extract_complexity_vector(
    text: str,
    language: str = "pt",
    lexicons: LexiconSet | None = None,
    doc_id: str | None = None,
) -> ComplexityVector:
    """Run the text pipeline and compute all metrics in schema order."""
    if lexicons is None:
        lexicons = builtin_lexicons(language)
    if not text or not text.strip():
        raise EmptyDocumentError(doc_id)
    doc = analyze(text, lexicons)
    counts = basic_counts(doc)
    return ComplexityVector(
        sentence_count=counts.sentence_count,
        word_count=counts.word_count,
        vocabulary_size=counts.vocabulary_size,
        adjective_count=counts.adjective_count,
        adverb_count=counts.adverb_count,
        verb_count=counts.verb_count,
        noun_count=counts.noun_count,
        noun_ratio=counts.noun_ratio,
        words_per_sentence=counts.words_per_sentence,
        logical_operator_count=logical_operator_count(doc, lexicons),
        function_word_diversity=type_diversity(doc, DiversityClass.FUNCTION_WORD),
        preposition_diversity=type_diversity(doc, DiversityClass.PREPOSITION),
        punctuation_diversity=type_diversity(doc, DiversityClass.PUNCTUATION),
        noun_sd=noun_sd(doc),
        brunet_index=brunet_index(counts.word_count, counts.vocabulary_size)
        if counts.word_count
        else None,
        mean_noun_phrase=mean_noun_phrase(doc),
        concreteness_sd=concreteness_sd(doc, lexicons),
        ne_ratio=ne_ratio(doc),
    )


def write_feature_csv(
    path: str | Path,
    grant_ids: Sequence[str],
    vectors: Sequence[ComplexityVector],
    header_comment: str | None = None,
) -> None:
    """Feature matrix CSV: grant_id column, schema columns, empty cell = missing."""
    if len(grant_ids) != len(vectors):
        raise ValueError("grant_ids and vectors must align")
    with open(path, "w", newline="", encoding="utf-8") as handle:
        if header_comment:
            handle.write(f"# {header_comment}\n")
        writer = csv.writer(handle)
        writer.writerow(("grant_id",) + COMPLEXITY_SCHEMA.names())
        for grant_id, vector in zip(grant_ids, vectors):
            row: list = [grant_id]
            for value in vector.as_row():
                row.append("" if value is None else repr(value) if isinstance(value, float) else value)
            writer.writerow(row)
