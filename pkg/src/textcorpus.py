"""
Text corpus ingestion
Character dictionaries, corpus splitting, CoNLL-U and labeled-text readers,
static word-vector tables
"""

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np

from .exceptions import DataError, IngestionError, ParseError, SplitError
from .numcore import FLOAT

logger = logging.getLogger(__name__)

UNK = 0
BOUNDARY = 1
SPECIALS = ('<unk>', '\n')


def _strip_eol(line: str) -> str:
    return line.rstrip('\r\n')


def read_lines(path: str) -> List[str]:
    """Read a UTF-8 text file as a list of non-empty lines"""
    with open(path, 'r', encoding='utf-8') as f:
        lines = [_strip_eol(line) for line in f]
    return [line for line in lines if line.strip()]


def write_lines(lines: Iterable[str], path: str):
    with open(path, 'w', encoding='utf-8') as f:
        for line in lines:
            f.write(line + '\n')


# --- character dictionary ---------------------------------------------------

class CharDictionary:
    """
    Bijection between Unicode scalar values and integer ids.
    Id 0 is UNK, id 1 the sentence boundary; corpus characters start at 2.
    """

    def __init__(self, chars: Sequence[str] = ()):
        self.char_of: List[str] = list(SPECIALS)
        self.id_of: Dict[str, int] = {}
        for ch in chars:
            if len(ch) != 1:
                raise DataError(f"Dictionary entries must be single characters, got {ch!r}")
            if ch in self.id_of or ch == '\n':
                raise DataError(f"Character {ch!r} cannot be added to the dictionary")
            self.id_of[ch] = len(self.char_of)
            self.char_of.append(ch)

    def __len__(self) -> int:
        return len(self.char_of)

    def __eq__(self, other) -> bool:
        return isinstance(other, CharDictionary) and self.char_of == other.char_of

    def __repr__(self):
        return f"<CharDictionary: {len(self)} ids>"

    @property
    def chars(self) -> List[str]:
        """Corpus characters in id order (specials excluded)"""
        return self.char_of[len(SPECIALS):]

    def lookup(self, ch: str) -> int:
        if ch == '\n':
            return BOUNDARY
        return self.id_of.get(ch, UNK)

    def encode(self, text: str) -> List[int]:
        return [self.lookup(ch) for ch in text]


def build_char_dictionary(corpus: Iterable[str], max_chars: int = 2000) -> CharDictionary:
    """
    Build a character dictionary from a line stream

    Args:
        corpus: Lines of text
        max_chars: Number of most frequent characters to keep

    Returns:
        CharDictionary with the kept characters at ids 2...
    """
    counts: Counter = Counter()
    first_seen: Dict[str, int] = {}
    n_lines = 0
    for line in corpus:
        line = _strip_eol(line)
        n_lines += 1
        for ch in line:
            if ch not in first_seen:
                first_seen[ch] = len(first_seen)
            counts[ch] += 1

    if n_lines == 0 or not counts:
        raise IngestionError("Cannot build a character dictionary from an empty corpus")

    ranked = sorted(first_seen, key=lambda ch: (-counts[ch], first_seen[ch]))
    kept = ranked[:max_chars]
    if len(ranked) > len(kept):
        logger.info(f"Character dictionary pruned {len(ranked) - len(kept)} rare characters")
    logger.info(f"Character dictionary: {len(kept)} characters from {n_lines} lines")
    return CharDictionary(kept)


# --- splitting --------------------------------------------------------------

def split_corpus(lines: Sequence[str], ratios: Tuple[float, float, float] = (0.8, 0.1, 0.1),
                 seed: int = 42) -> Tuple[List[str], List[str], List[str]]:
    """
    Seeded partition of lines into train / valid / test

    Valid and test receive max(1, floor(n * r)) lines, train the remainder.
    Each part keeps the input order of its lines.

    Returns:
        (train, valid, test)
    """
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise SplitError(f"Split ratios must be three positive numbers, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise SplitError(f"Split ratios must sum to 1, got {sum(ratios)}")
    n = len(lines)
    if n < 3:
        raise SplitError(f"Need at least 3 lines to split, got {n}")

    n_valid = max(1, math.floor(n * ratios[1]))
    n_test = max(1, math.floor(n * ratios[2]))
    n_train = n - n_valid - n_test
    if n_train < 1:
        raise SplitError(f"Ratios {ratios} leave no training lines out of {n}")

    order = np.random.default_rng(seed).permutation(n)
    parts = (order[:n_train], order[n_train:n_train + n_valid], order[n_train + n_valid:])
    train, valid, test = ([lines[i] for i in np.sort(idx)] for idx in parts)
    logger.info(f"Split {n} lines into {len(train)}/{len(valid)}/{len(test)}")
    return train, valid, test


# --- sentences --------------------------------------------------------------

@dataclass
class Sentence:
    """Whitespace-free tokens of one sentence"""
    tokens: List[str]

    def __post_init__(self):
        if not self.tokens:
            raise DataError("A sentence needs at least one token")
        for token in self.tokens:
            if not token or any(ch.isspace() for ch in token):
                raise DataError(f"Invalid token {token!r}")

    @classmethod
    def from_text(cls, text: str) -> 'Sentence':
        return cls(text.split())

    @property
    def text(self) -> str:
        """Character sequence with single-space joins"""
        return ' '.join(self.tokens)

    def spans(self) -> List[Tuple[int, int]]:
        """(start, end) character offsets of every token in `text`"""
        spans = []
        pos = 0
        for token in self.tokens:
            spans.append((pos, pos + len(token)))
            pos += len(token) + 1
        return spans

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass
class TaggedSentence:
    """Tokens with one tag per token"""
    tokens: List[str]
    tags: List[str]

    def __post_init__(self):
        if len(self.tokens) != len(self.tags):
            raise DataError(f"{len(self.tokens)} tokens but {len(self.tags)} tags")
        self.sentence = Sentence(self.tokens)

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass
class LabeledText:
    label: str
    text: Sentence

    def __post_init__(self):
        if not self.label:
            raise DataError("Empty label")


# --- CoNLL-U ----------------------------------------------------------------

def read_conllu(path: str, form_col: int = 1, tag_col: int = 4) -> List[TaggedSentence]:
    """
    Read a CoNLL-U file into tagged sentences

    Args:
        path: File path
        form_col: Zero-indexed column of the word form
        tag_col: Zero-indexed column of the tag (4 = XPOS, 3 = UPOS)

    Returns:
        List of TaggedSentence
    """
    needed = max(form_col, tag_col) + 1
    sentences: List[TaggedSentence] = []
    tokens: List[str] = []
    tags: List[str] = []

    def flush():
        if tokens:
            sentences.append(TaggedSentence(list(tokens), list(tags)))
            tokens.clear()
            tags.clear()

    with open(path, 'r', encoding='utf-8') as f:
        for line_no, raw in enumerate(f, start=1):
            line = _strip_eol(raw)
            if not line.strip():
                flush()
                continue
            if line.startswith('#'):
                continue
            cols = line.split('\t')
            # Multiword ranges (1-2) and empty nodes (3.1)
            if '-' in cols[0] or '.' in cols[0]:
                continue
            if len(cols) < needed:
                raise ParseError(f"Expected at least {needed} columns, found {len(cols)}", path, line_no)
            form, tag = cols[form_col], cols[tag_col]
            if not form or any(ch.isspace() for ch in form):
                raise ParseError(f"Invalid word form {form!r}", path, line_no)
            tokens.append(form)
            tags.append(tag)
    flush()

    logger.info(f"Read {len(sentences)} sentences from {path}")
    return sentences


def write_conllu(sentences: Iterable[TaggedSentence], path: str, form_col: int = 1, tag_col: int = 4):
    """Write forms and tags as a 10-column CoNLL-U file, other columns '_'"""
    with open(path, 'w', encoding='utf-8') as f:
        for sent in sentences:
            for idx, (form, tag) in enumerate(zip(sent.tokens, sent.tags), start=1):
                cols = ['_'] * 10
                cols[0] = str(idx)
                cols[form_col] = form
                cols[tag_col] = tag
                f.write('\t'.join(cols) + '\n')
            f.write('\n')


# --- labeled text -----------------------------------------------------------

LABEL_PREFIX = '__label__'


def read_labeled(path: str) -> List[LabeledText]:
    """
    Read '__label__<name> <text>' lines

    Args:
        path: File path

    Returns:
        Records in file order; blank lines are skipped
    """
    records: List[LabeledText] = []
    with open(path, 'r', encoding='utf-8') as f:
        for line_no, raw in enumerate(f, start=1):
            line = _strip_eol(raw)
            if not line.strip():
                continue
            if not line.startswith(LABEL_PREFIX):
                raise ParseError(f"Line does not start with '{LABEL_PREFIX}'", path, line_no)
            body = line[len(LABEL_PREFIX):]
            if not body or body[0].isspace():
                raise ParseError("Empty label", path, line_no)
            # label ends at the first whitespace run, tab included
            head, *rest = body.split(None, 1)
            tokens = rest[0].split() if rest else []
            if not tokens:
                raise ParseError(f"No text after label '{head}'", path, line_no)
            records.append(LabeledText(head, Sentence(tokens)))

    logger.info(f"Read {len(records)} labeled texts from {path}")
    return records


# --- static word vectors ----------------------------------------------------

@dataclass
class StaticWordTable:
    """Pre-trained word vectors of a fixed width"""
    dim: int
    vectors: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        for word, vec in self.vectors.items():
            if vec.shape != (self.dim,):
                raise DataError(f"Vector for {word!r} has shape {vec.shape}, expected ({self.dim},)")

    def __len__(self) -> int:
        return len(self.vectors)

    def __contains__(self, word: str) -> bool:
        return word in self.vectors

    def get(self, word: str) -> np.ndarray:
        """Stored vector, or zeros for an out-of-vocabulary word"""
        vec = self.vectors.get(word)
        if vec is None:
            return np.zeros(self.dim, dtype=FLOAT)
        return vec


def load_vec_table(path: str) -> StaticWordTable:
    """
    Load a fastText-style text .vec file

    The first line is 'count dim', each following line 'word v1 ... v_dim'.

    Args:
        path: File path

    Returns:
        StaticWordTable
    """
    with open(path, 'r', encoding='utf-8') as f:
        header = f.readline()
        parts = header.split()
        if len(parts) != 2:
            raise ParseError("Header must be 'count dim'", path, 1)
        try:
            count, dim = int(parts[0]), int(parts[1])
        except ValueError:
            raise ParseError(f"Header must hold two integers, got {header.strip()!r}", path, 1)
        if count < 0 or dim < 1:
            raise ParseError(f"Invalid header counts {count} {dim}", path, 1)

        vectors: Dict[str, np.ndarray] = {}
        rows = 0
        for line_no, raw in enumerate(f, start=2):
            line = raw.rstrip()
            if not line:
                continue
            fields = line.split(' ')
            word, values = fields[0], fields[1:]
            if len(values) != dim:
                raise ParseError(f"Row for {word!r} has {len(values)} values, expected {dim}", path, line_no)
            try:
                vec = np.array(values, dtype=FLOAT)
            except ValueError:
                raise ParseError(f"Non-numeric value in row for {word!r}", path, line_no)
            if word in vectors:
                logger.warning(f"{path}:{line_no}: duplicate word {word!r}, keeping the last vector")
            vectors[word] = vec
            rows += 1

    if rows != count:
        raise ParseError(f"Header announces {count} rows, file holds {rows}", path)
    logger.info(f"Loaded {len(vectors)} vectors of dim {dim} from {path}")
    return StaticWordTable(dim, vectors)


# --- statistics -------------------------------------------------------------

def corpus_stats(lines: Sequence[str]) -> Dict[str, int]:
    """Sentence, token and character counts of a monolingual corpus"""
    chars = set()
    n_tokens = n_chars = 0
    for line in lines:
        n_tokens += len(line.split())
        n_chars += len(line)
        chars.update(line)
    return {
        'sentences': len(lines),
        'tokens': n_tokens,
        'characters': n_chars,
        'distinct_characters': len(chars),
    }


def dataset_stats(train: Sequence, test: Sequence) -> Dict[str, int]:
    """Classes (or tags), train and test sizes of a downstream dataset"""
    labels = set()
    for record in list(train) + list(test):
        if isinstance(record, TaggedSentence):
            labels.update(record.tags)
        else:
            labels.add(record.label)
    return {'classes': len(labels), 'train': len(train), 'test': len(test)}
