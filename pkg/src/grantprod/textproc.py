"""Lexicon-driven text processing: sentences, tokens, coarse POS tags, NE marks.

Everything here is rule-based and deterministic on purpose: the downstream
metrics only need coarse word-class counts, and a statistical tagger would
make runs irreproducible across environments.  Closed-class lexicons carry
most of the weight; unknown words fall back to suffix rules and finally to
the content-word default (noun).
"""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass, replace
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Sequence


class TokenKind(Enum):
    WORD = "word"
    PUNCTUATION = "punctuation"
    NUMBER = "number"


class PosTag(Enum):
    NOUN = "noun"
    VERB = "verb"
    ADJECTIVE = "adjective"
    ADVERB = "adverb"
    PREPOSITION = "preposition"
    PRONOUN = "pronoun"
    DETERMINER = "determiner"
    CONJUNCTION = "conjunction"
    INTERJECTION = "interjection"
    PUNCTUATION = "punctuation"
    NUMBER = "number"
    OTHER = "other"


CLOSED_CLASS_TAGS = frozenset(
    {PosTag.PREPOSITION, PosTag.PRONOUN, PosTag.DETERMINER, PosTag.CONJUNCTION}
)

SUPPORTED_LANGUAGES = ("pt", "en")

# Trailing abbreviations that must not terminate a sentence.  Matched
# case-insensitively against the text ending at the period.
ABBREVIATIONS = (
    "dr.", "dra.", "sr.", "sra.", "prof.", "profa.", "et al.", "al.",
    "e.g.", "i.e.", "etc.", "cf.", "vs.", "no.", "fig.", "eq.", "ca.", "approx.",
)


@dataclass(frozen=True)
class Token:
    surface: str
    normalized: str
    kind: TokenKind
    sentence_index: int
    position_in_sentence: int


@dataclass(frozen=True)
class TaggedToken:
    token: Token
    tag: PosTag
    is_function_word: bool
    is_named_entity: bool = False


@dataclass(frozen=True)
class LexiconSet:
    """Closed-class word lists, POS lexicon, suffix rules, concreteness norms.

    Invariants: prepositions are a subset of the function words, the logical
    operator list is non-empty, all keys are lowercase, and concreteness
    scores live on the 100-700 norm scale.
    """

    language: str
    function_words: frozenset[str]
    prepositions: frozenset[str]
    logical_operators: frozenset[str]
    pos_lexicon: dict[str, PosTag]
    suffix_rules: tuple[tuple[str, PosTag], ...]
    concreteness: dict[str, float]

    def __post_init__(self):
        if self.language not in SUPPORTED_LANGUAGES:
            raise ValueError(f"unsupported language '{self.language}'")
        if not self.prepositions <= self.function_words:
            raise ValueError("prepositions must be a subset of function_words")
        if not self.logical_operators:
            raise ValueError("logical_operators must be non-empty")
        for group in (self.function_words, self.prepositions, self.logical_operators):
            for word in group:
                if word != word.lower():
                    raise ValueError(f"lexicon entry '{word}' is not lowercase")
        for word in self.pos_lexicon:
            if word != word.lower():
                raise ValueError(f"pos lexicon entry '{word}' is not lowercase")
        for word, score in self.concreteness.items():
            if word != word.lower():
                raise ValueError(f"concreteness entry '{word}' is not lowercase")
            if not 100.0 <= score <= 700.0:
                raise ValueError(f"concreteness score for '{word}' outside [100, 700]")


# ---------------------------------------------------------------------------
# Sentence splitting
# ---------------------------------------------------------------------------

_OPENERS = "\"'«(¿¡["


def _abbreviation_before(text: str, period_index: int) -> bool:
    prefix = text[: period_index + 1].lower()
    for abbrev in ABBREVIATIONS:
        if prefix.endswith(abbrev):
            start = len(prefix) - len(abbrev)
            if start == 0 or prefix[start - 1].isspace() or prefix[start - 1] in _OPENERS:
                return True
    return False


def split_sentences(text: str) -> list[str]:
    """Split NFC-normalized text into sentences.

    '!' and '?' always terminate.  A '.' terminates only when it does not
    close a known abbreviation and the next non-space character looks like a
    sentence opener (uppercase letter, digit, or opening quote/bracket).
    """
    text = unicodedata.normalize("NFC", text).strip()
    if not text:
        return []

    sentences: list[str] = []
    start = 0
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch not in ".!?":
            i += 1
            continue
        j = i + 1
        while j < n and text[j] in ".!?":
            j += 1
        k = j
        while k < n and text[k].isspace():
            k += 1
        at_end = k >= n
        followed_by_space = k > j or at_end

        split_here = False
        if followed_by_space:
            if ch in "!?":
                split_here = True
            elif not _abbreviation_before(text, j - 1):
                split_here = at_end or text[k].isupper() or text[k].isdigit() or text[k] in _OPENERS

        if split_here:
            sentence = text[start:j].strip()
            if sentence:
                sentences.append(sentence)
            start = k
        i = j

    tail = text[start:].strip()
    if tail:
        sentences.append(tail)
    return sentences


# ---------------------------------------------------------------------------
# Tokenization
# ---------------------------------------------------------------------------

# Numbers first (so "3.5" stays whole), then words with internal hyphens,
# then any remaining non-space character as punctuation.
_TOKEN_RE = re.compile(r"\d+(?:[.,]\d+)*|[^\W\d_]+(?:-[^\W\d_]+)*|\S", re.UNICODE)


def tokenize(sentence: str, sentence_index: int = 0) -> list[Token]:
    """Split one sentence into word/number/punctuation tokens."""
    tokens: list[Token] = []
    for position, match in enumerate(_TOKEN_RE.finditer(sentence)):
        surface = match.group(0)
        first = surface[0]
        if first.isdigit():
            kind = TokenKind.NUMBER
        elif first.isalpha():
            kind = TokenKind.WORD
        else:
            kind = TokenKind.PUNCTUATION
        tokens.append(
            Token(
                surface=surface,
                normalized=surface.lower(),
                kind=kind,
                sentence_index=sentence_index,
                position_in_sentence=position,
            )
        )
    return tokens


# ---------------------------------------------------------------------------
# POS tagging
# ---------------------------------------------------------------------------

def _suffix_tag(word: str, rules: Sequence[tuple[str, PosTag]]) -> PosTag | None:
    for suffix, tag in rules:
        if len(word) > len(suffix) and word.endswith(suffix):
            return tag
    return None


def tag_pos(tokens: Sequence[Token], lexicons: LexiconSet) -> list[TaggedToken]:
    """Assign exactly one tag per token: lexicon, then suffix rules, then noun."""
    tagged: list[TaggedToken] = []
    for token in tokens:
        if token.kind is TokenKind.PUNCTUATION:
            tag = PosTag.PUNCTUATION
        elif token.kind is TokenKind.NUMBER:
            tag = PosTag.NUMBER
        else:
            tag = lexicons.pos_lexicon.get(token.normalized)
            if tag is None:
                tag = _suffix_tag(token.normalized, lexicons.suffix_rules)
            if tag is None:
                tag = PosTag.NOUN
        is_function = token.kind is TokenKind.WORD and (
            tag in CLOSED_CLASS_TAGS or token.normalized in lexicons.function_words
        )
        tagged.append(TaggedToken(token=token, tag=tag, is_function_word=is_function))
    return tagged


# ---------------------------------------------------------------------------
# Named entities
# ---------------------------------------------------------------------------

def _is_acronym(surface: str) -> bool:
    return len(surface) >= 2 and surface.isalpha() and surface.isupper()


def _is_capitalized(surface: str) -> bool:
    return surface[0].isalpha() and surface[0].isupper()


def detect_named_entities(tagged: Sequence[TaggedToken]) -> tuple[list[TaggedToken], int]:
    """Mark NE word tokens and count contiguous marked spans.

    A word token is marked iff it is an all-caps acronym (length >= 2), or it
    is capitalized and not the first word token of its sentence.  Contiguous
    marked tokens (adjacent positions in one sentence) form a single span;
    any unmarked token in between, including lowercase connectives, splits
    the span.
    """
    first_word_position: dict[int, int] = {}
    for item in tagged:
        tok = item.token
        if tok.kind is TokenKind.WORD and tok.sentence_index not in first_word_position:
            first_word_position[tok.sentence_index] = tok.position_in_sentence

    marked: list[TaggedToken] = []
    for item in tagged:
        tok = item.token
        flag = False
        if tok.kind is TokenKind.WORD:
            sentence_initial = first_word_position.get(tok.sentence_index) == tok.position_in_sentence
            if _is_acronym(tok.surface):
                flag = True
            elif _is_capitalized(tok.surface) and not sentence_initial:
                flag = True
        marked.append(replace(item, is_named_entity=flag))

    spans = 0
    previous: Token | None = None
    for item in marked:
        tok = item.token
        if item.is_named_entity:
            contiguous = (
                previous is not None
                and previous.sentence_index == tok.sentence_index
                and previous.position_in_sentence == tok.position_in_sentence - 1
            )
            if not contiguous:
                spans += 1
            previous = tok
        else:
            previous = None
    return marked, spans


# ---------------------------------------------------------------------------
# Document pipeline
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TaggedDocument:
    """Output of the full pipeline over one text."""

    language: str
    sentence_count: int
    tokens: tuple[TaggedToken, ...]
    entity_span_count: int

    def word_tokens(self) -> list[TaggedToken]:
        return [t for t in self.tokens if t.token.kind is TokenKind.WORD]


def analyze(text: str, lexicons: LexiconSet) -> TaggedDocument:
    """Run split -> tokenize -> tag -> NE detection over one document."""
    sentences = split_sentences(text)
    tokens: list[Token] = []
    for index, sentence in enumerate(sentences):
        tokens.extend(tokenize(sentence, index))
    tagged = tag_pos(tokens, lexicons)
    tagged, spans = detect_named_entities(tagged)
    return TaggedDocument(
        language=lexicons.language,
        sentence_count=len(sentences),
        tokens=tuple(tagged),
        entity_span_count=spans,
    )


# ---------------------------------------------------------------------------
# Lexicon files
# ---------------------------------------------------------------------------
#
# Plain-text formats, one entry per line, UTF-8:
#   word lists            word
#   pos lexicon           word<TAB>tag
#   suffix rules          suffix<TAB>tag     (tried in file order)
#   concreteness norms    word<TAB>score     (score on the 100-700 scale)

def _read_lines(path: Path) -> list[str]:
    lines = []
    for raw in path.read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if line and not line.startswith("#"):
            lines.append(line)
    return lines


def load_wordlist(path: str | Path) -> frozenset[str]:
    return frozenset(unicodedata.normalize("NFC", line.lower()) for line in _read_lines(Path(path)))


def _split_tab(line: str, path: Path) -> tuple[str, str]:
    parts = line.split("\t")
    if len(parts) != 2:
        raise ValueError(f"{path}: expected 'entry<TAB>value', got '{line}'")
    return parts[0], parts[1]


def load_pos_lexicon(path: str | Path) -> dict[str, PosTag]:
    path = Path(path)
    lexicon: dict[str, PosTag] = {}
    for line in _read_lines(path):
        word, tag = _split_tab(line, path)
        lexicon[unicodedata.normalize("NFC", word.lower())] = PosTag(tag)
    return lexicon


def load_suffix_rules(path: str | Path) -> tuple[tuple[str, PosTag], ...]:
    path = Path(path)
    rules = []
    for line in _read_lines(path):
        suffix, tag = _split_tab(line, path)
        rules.append((unicodedata.normalize("NFC", suffix.lower()), PosTag(tag)))
    return tuple(rules)


def load_concreteness(path: str | Path) -> dict[str, float]:
    path = Path(path)
    scores: dict[str, float] = {}
    for line in _read_lines(path):
        word, value = _split_tab(line, path)
        scores[unicodedata.normalize("NFC", word.lower())] = float(value)
    return scores


_LEXICON_FILES = {
    "function_words": "function_words.txt",
    "prepositions": "prepositions.txt",
    "logical_operators": "logical_operators.txt",
    "pos_lexicon": "pos_lexicon.tsv",
    "suffix_rules": "suffix_rules.tsv",
    "concreteness": "concreteness.tsv",
}


def load_lexicons(directory: str | Path, language: str) -> LexiconSet:
    """Load a LexiconSet from a directory holding the six fixed-name files."""
    directory = Path(directory)
    prepositions = load_wordlist(directory / _LEXICON_FILES["prepositions"])
    function_words = load_wordlist(directory / _LEXICON_FILES["function_words"]) | prepositions
    return LexiconSet(
        language=language,
        function_words=frozenset(function_words),
        prepositions=prepositions,
        logical_operators=load_wordlist(directory / _LEXICON_FILES["logical_operators"]),
        pos_lexicon=load_pos_lexicon(directory / _LEXICON_FILES["pos_lexicon"]),
        suffix_rules=load_suffix_rules(directory / _LEXICON_FILES["suffix_rules"]),
        concreteness=load_concreteness(directory / _LEXICON_FILES["concreteness"]),
    )


def builtin_lexicons(language: str) -> LexiconSet:
    """The lexicons bundled with the package (pt and en)."""
    if language not in SUPPORTED_LANGUAGES:
        raise ValueError(f"no builtin lexicons for language '{language}'")
    root = resources.files("grantprod").joinpath("data", language)
    with resources.as_file(root) as directory:
        return load_lexicons(directory, language)
