"""
Word embedders
Contextual string embeddings read from character LM states at word
boundaries, static table lookup, and stacking by concatenation
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .charlm import CharLM
from .exceptions import DataError
from .numcore import FLOAT
from .textcorpus import Sentence, StaticWordTable

logger = logging.getLogger(__name__)


@dataclass
class WordVectors:
    """One row vector per token"""
    tokens: List[str]
    matrix: np.ndarray  # [n x dim]

    def __post_init__(self):
        if self.matrix.shape[0] != len(self.tokens):
            raise DataError(f"{self.matrix.shape[0]} vectors for {len(self.tokens)} tokens")

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]


class ContextualEmbedder:
    """Forward (and optionally backward) character LM read at word boundaries"""

    kind = 'contextual'

    def __init__(self, forward_lm: CharLM, backward_lm: Optional[CharLM] = None):
        if forward_lm.direction != 'forward':
            raise DataError("The first language model of a contextual embedder must be a forward model")
        if backward_lm is not None:
            if backward_lm.direction != 'backward':
                raise DataError("The second language model of a contextual embedder must be a backward model")
            if backward_lm.dictionary != forward_lm.dictionary:
                raise DataError("Forward and backward language models use different character dictionaries")
        self.forward_lm = forward_lm
        self.backward_lm = backward_lm

    def __repr__(self):
        return f"<ContextualEmbedder: dim={self.dim}>"

    @property
    def dim(self) -> int:
        dim = self.forward_lm.hidden
        if self.backward_lm is not None:
            dim += self.backward_lm.hidden
        return dim

    def embed(self, sentence: Sentence) -> WordVectors:
        return embed_contextual(self, sentence)


class StaticEmbedder:
    """Exact-match lookup in a static word table"""

    kind = 'static'

    def __init__(self, table: StaticWordTable):
        self.table = table

    def __repr__(self):
        return f"<StaticEmbedder: dim={self.dim}, words={len(self.table)}>"

    @property
    def dim(self) -> int:
        return self.table.dim

    def embed(self, sentence: Sentence) -> WordVectors:
        return embed_static(self.table, sentence)


class StackedEmbedder:
    """Ordered list of embedders whose per-word vectors are concatenated"""

    def __init__(self, parts: Sequence):
        if not parts:
            raise DataError("A stacked embedder needs at least one part")
        self.parts = list(parts)

    def __repr__(self):
        return f"<StackedEmbedder: {' + '.join(str(p.dim) for p in self.parts)}>"

    @property
    def dim(self) -> int:
        return sum(part.dim for part in self.parts)

    def embed(self, sentence: Sentence) -> WordVectors:
        return embed_stacked(self, sentence)


def embed_contextual(embedder: ContextualEmbedder, sentence: Sentence) -> WordVectors:
    """
    Contextual string embeddings of a sentence

    The forward LM consumes the boundary id and the space-joined sentence; a
    word's forward vector is the top-layer hidden state after its last
    character (the following space is not consumed). The backward LM consumes
    the reversed stream; its vector is the state after the word's first
    character.

    Args:
        embedder: Contextual embedder
        sentence: Sentence to embed

    Returns:
        WordVectors of width embedder.dim
    """
    text = sentence.text
    spans = sentence.spans()

    fwd_states = embedder.forward_lm.top_states(embedder.forward_lm.encode_document(text))
    # Stream index = 1 + character offset; read after the last character
    parts = [fwd_states[[end for _, end in spans]]]

    if embedder.backward_lm is not None:
        bwd_states = embedder.backward_lm.top_states(embedder.backward_lm.encode_document(text))
        # Reversed offset of the first character is len - 1 - start, stream index one more
        parts.append(bwd_states[[len(text) - start for start, _ in spans]])

    return WordVectors(list(sentence.tokens), np.concatenate(parts, axis=1))


def embed_static(table: StaticWordTable, sentence: Sentence) -> WordVectors:
    """Table vector per token; zeros for out-of-vocabulary tokens"""
    rows = [table.get(token) for token in sentence.tokens]
    return WordVectors(list(sentence.tokens), np.stack(rows).astype(FLOAT, copy=False))


def embed_stacked(stacked: StackedEmbedder, sentence: Sentence) -> WordVectors:
    """Concatenate every part's vectors in declared order"""
    blocks = [part.embed(sentence).matrix for part in stacked.parts]
    matrix = np.concatenate(blocks, axis=1) if len(blocks) > 1 else blocks[0]
    return WordVectors(list(sentence.tokens), matrix)
