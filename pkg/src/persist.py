"""
Model file serialization

Layout (little-endian): magic 'CSEM', u32 format version, u8 model kind,
payload, u32 CRC-32 of every preceding byte. Strings are u32-length-prefixed
UTF-8; tensors are u32 rank, u32 dims, row-major float32 data.
"""

import json
import logging
import os
import struct
import zlib
from typing import Any, List, Optional

import numpy as np

from .charlm import CharLM, CharLMConfig
from .classifier import GruClassifier
from .embed import ContextualEmbedder, StackedEmbedder, StaticEmbedder
from .exceptions import ConfigError, CorruptionError, DataError, FormatError, KindError, PersistError, VersionError
from .numcore import EmbeddingParams, GruParams, LinearParams, LstmParams
from .tagger import CrfParams, CrfTagger, TagSet
from .textcorpus import SPECIALS, CharDictionary, StaticWordTable
from .training import HeadConfig

logger = logging.getLogger(__name__)

MAGIC = b'CSEM'
FORMAT_VERSION = 1

KIND_DICT = 1
KIND_CHARLM = 2
KIND_TAGGER = 3
KIND_CLASSIFIER = 4
KIND_STATIC = 5

KIND_NAMES = {
    KIND_DICT: 'dictionary',
    KIND_CHARLM: 'charlm',
    KIND_TAGGER: 'tagger',
    KIND_CLASSIFIER: 'classifier',
    KIND_STATIC: 'static-table',
}

PART_CONTEXTUAL = 1
PART_STATIC = 2


class ModelWriter:
    """Append-only byte builder for the payload"""

    def __init__(self):
        self.chunks: List[bytes] = []

    def u8(self, value: int):
        self.chunks.append(struct.pack('<B', value))

    def u32(self, value: int):
        self.chunks.append(struct.pack('<I', value))

    def string(self, value: str):
        data = value.encode('utf-8')
        self.u32(len(data))
        self.chunks.append(data)

    def tensor(self, arr: np.ndarray):
        self.u32(arr.ndim)
        for dim in arr.shape:
            self.u32(dim)
        self.chunks.append(np.ascontiguousarray(arr, dtype='<f4').tobytes())

    def getvalue(self) -> bytes:
        return b''.join(self.chunks)


class ModelReader:
    """Bounds-checked cursor over a payload"""

    def __init__(self, data: bytes, path: str):
        self.data = data
        self.pos = 0
        self.path = path

    def _take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CorruptionError(f"{self.path}: unexpected end of data")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u8(self) -> int:
        return struct.unpack('<B', self._take(1))[0]

    def u32(self) -> int:
        return struct.unpack('<I', self._take(4))[0]

    def string(self) -> str:
        raw = self._take(self.u32())
        try:
            return raw.decode('utf-8')
        except UnicodeDecodeError:
            raise CorruptionError(f"{self.path}: invalid UTF-8 string")

    def tensor(self) -> np.ndarray:
        rank = self.u32()
        if rank > 8:
            raise CorruptionError(f"{self.path}: implausible tensor rank {rank}")
        shape = tuple(self.u32() for _ in range(rank))
        count = int(np.prod(shape)) if shape else 1
        raw = self._take(4 * count)
        return np.frombuffer(raw, dtype='<f4').astype(np.float32).reshape(shape)

    def json(self) -> Any:
        try:
            return json.loads(self.string())
        except json.JSONDecodeError:
            raise CorruptionError(f"{self.path}: invalid configuration block")

    def done(self):
        if self.pos != len(self.data):
            raise CorruptionError(f"{self.path}: {len(self.data) - self.pos} trailing bytes")


# --- bodies -----------------------------------------------------------------

def _write_dictionary(w: ModelWriter, dictionary: CharDictionary):
    w.u32(len(dictionary))
    for ch in dictionary.char_of:
        w.string(ch)


def _read_dictionary(r: ModelReader) -> CharDictionary:
    entries = [r.string() for _ in range(r.u32())]
    if tuple(entries[:len(SPECIALS)]) != SPECIALS:
        raise CorruptionError(f"{r.path}: dictionary specials are damaged")
    try:
        return CharDictionary(entries[len(SPECIALS):])
    except DataError as e:
        raise CorruptionError(f"{r.path}: invalid dictionary: {e}")


def _write_charlm(w: ModelWriter, model: CharLM):
    w.string(json.dumps(model.config.to_dict(), sort_keys=True))
    _write_dictionary(w, model.dictionary)
    w.tensor(model.embedding.E)
    w.u32(len(model.layers))
    for layer in model.layers:
        for arr in layer:
            w.tensor(arr)
    for arr in model.decoder:
        w.tensor(arr)


def _read_charlm(r: ModelReader) -> CharLM:
    values = r.json()
    try:
        config = CharLMConfig.from_dict(values)
    except (ConfigError, TypeError) as e:
        raise CorruptionError(f"{r.path}: invalid language model configuration: {e}")
    dictionary = _read_dictionary(r)
    embedding = EmbeddingParams(E=r.tensor())
    layers = [LstmParams(W_ih=r.tensor(), W_hh=r.tensor(), b=r.tensor()) for _ in range(r.u32())]
    decoder = LinearParams(W=r.tensor(), b=r.tensor())
    if embedding.E.shape[0] != len(dictionary) or decoder.W.shape[0] != len(dictionary):
        raise CorruptionError(f"{r.path}: tensor shapes disagree with the dictionary")
    return CharLM(config, dictionary, embedding, layers, decoder)


def _write_static(w: ModelWriter, table: StaticWordTable):
    w.u32(table.dim)
    words = list(table.vectors)
    w.u32(len(words))
    for word in words:
        w.string(word)
    matrix = np.stack([table.vectors[word] for word in words]) if words else np.zeros((0, table.dim))
    w.tensor(matrix)


def _read_static(r: ModelReader) -> StaticWordTable:
    dim = r.u32()
    words = [r.string() for _ in range(r.u32())]
    matrix = r.tensor()
    if matrix.shape != (len(words), dim):
        raise CorruptionError(f"{r.path}: static table shape {matrix.shape} disagrees with header")
    return StaticWordTable(dim, {word: matrix[k] for k, word in enumerate(words)})


def _write_stack(w: ModelWriter, stacked: StackedEmbedder):
    w.u32(len(stacked.parts))
    for part in stacked.parts:
        if isinstance(part, ContextualEmbedder):
            w.u8(PART_CONTEXTUAL)
            w.u8(1 if part.backward_lm is not None else 0)
            _write_charlm(w, part.forward_lm)
            if part.backward_lm is not None:
                _write_charlm(w, part.backward_lm)
        elif isinstance(part, StaticEmbedder):
            w.u8(PART_STATIC)
            _write_static(w, part.table)
        else:
            raise PersistError(f"Cannot serialize embedder part {part!r}")


def _read_stack(r: ModelReader) -> StackedEmbedder:
    parts = []
    for _ in range(r.u32()):
        kind = r.u8()
        if kind == PART_CONTEXTUAL:
            has_backward = r.u8()
            forward_lm = _read_charlm(r)
            backward_lm = _read_charlm(r) if has_backward else None
            parts.append(ContextualEmbedder(forward_lm, backward_lm))
        elif kind == PART_STATIC:
            parts.append(StaticEmbedder(_read_static(r)))
        else:
            raise CorruptionError(f"{r.path}: unknown embedder part {kind}")
    return StackedEmbedder(parts)


def _write_labels(w: ModelWriter, labels: List[str]):
    w.u32(len(labels))
    for label in labels:
        w.string(label)


def _read_labels(r: ModelReader) -> List[str]:
    return [r.string() for _ in range(r.u32())]


def _write_tagger(w: ModelWriter, tagger: CrfTagger):
    w.string(json.dumps(tagger.config.to_dict(), sort_keys=True))
    _write_stack(w, tagger.embedder)
    _write_labels(w, tagger.tagset.tags)
    for group in (tagger.fwd, tagger.bwd, tagger.proj, tagger.crf):
        for arr in group:
            w.tensor(arr)


def _read_tagger(r: ModelReader) -> CrfTagger:
    config = HeadConfig.from_dict(r.json())
    embedder = _read_stack(r)
    tagset = TagSet(_read_labels(r))
    fwd = LstmParams(W_ih=r.tensor(), W_hh=r.tensor(), b=r.tensor())
    bwd = LstmParams(W_ih=r.tensor(), W_hh=r.tensor(), b=r.tensor())
    proj = LinearParams(W=r.tensor(), b=r.tensor())
    crf = CrfParams(T=r.tensor())
    return CrfTagger(embedder, tagset, config, fwd, bwd, proj, crf)


def _write_classifier(w: ModelWriter, model: GruClassifier):
    w.string(json.dumps(model.config.to_dict(), sort_keys=True))
    _write_stack(w, model.embedder)
    _write_labels(w, model.labels)
    for group in (model.gru, model.out):
        for arr in group:
            w.tensor(arr)


def _read_classifier(r: ModelReader) -> GruClassifier:
    config = HeadConfig.from_dict(r.json())
    embedder = _read_stack(r)
    labels = _read_labels(r)
    gru = GruParams(W_ih=r.tensor(), W_hh=r.tensor(), b_ih=r.tensor(), b_hh=r.tensor())
    out = LinearParams(W=r.tensor(), b=r.tensor())
    return GruClassifier(embedder, labels, config, gru, out)


_WRITERS = {
    CharDictionary: (KIND_DICT, _write_dictionary),
    CharLM: (KIND_CHARLM, _write_charlm),
    CrfTagger: (KIND_TAGGER, _write_tagger),
    GruClassifier: (KIND_CLASSIFIER, _write_classifier),
    StaticWordTable: (KIND_STATIC, _write_static),
}

_READERS = {
    KIND_DICT: _read_dictionary,
    KIND_CHARLM: _read_charlm,
    KIND_TAGGER: _read_tagger,
    KIND_CLASSIFIER: _read_classifier,
    KIND_STATIC: _read_static,
}


def dumps(model) -> bytes:
    """Serialize a model to bytes"""
    entry = _WRITERS.get(type(model))
    if entry is None:
        raise PersistError(f"Cannot serialize {type(model).__name__}")
    kind, writer = entry
    w = ModelWriter()
    w.chunks.append(MAGIC)
    w.u32(FORMAT_VERSION)
    w.u8(kind)
    writer(w, model)
    body = w.getvalue()
    return body + struct.pack('<I', zlib.crc32(body) & 0xFFFFFFFF)


def loads(data: bytes, expected_kind: Optional[int] = None, path: str = '<bytes>'):
    """
    Deserialize a model

    Args:
        data: File contents
        expected_kind: Kind tag the caller requires, or None for any
        path: Name used in error messages

    Returns:
        The reconstructed model
    """
    if len(data) < len(MAGIC) or data[:len(MAGIC)] != MAGIC:
        raise FormatError(f"{path}: not a model file (bad magic)")
    if len(data) < len(MAGIC) + 4 + 1 + 4:
        raise CorruptionError(f"{path}: file is truncated")

    body, trailer = data[:-4], data[-4:]
    if struct.unpack('<I', trailer)[0] != (zlib.crc32(body) & 0xFFFFFFFF):
        raise CorruptionError(f"{path}: checksum mismatch")

    r = ModelReader(body, path)
    r._take(len(MAGIC))
    version = r.u32()
    if version != FORMAT_VERSION:
        raise VersionError(f"{path}: unsupported format version {version}")
    kind = r.u8()
    if kind not in _READERS:
        raise CorruptionError(f"{path}: unknown model kind {kind}")
    if expected_kind is not None and kind != expected_kind:
        raise KindError(f"{path}: holds a {KIND_NAMES[kind]}, expected a {KIND_NAMES[expected_kind]}")

    model = _READERS[kind](r)
    r.done()
    return model


def save(model, path: str):
    """Write a model file and fsync it"""
    data = dumps(model)
    with open(path, 'wb') as f:
        f.write(data)
        f.flush()
        os.fsync(f.fileno())
    logger.info(f"Saved {type(model).__name__} to {path} ({len(data)} bytes)")


def load(path: str, expected_kind: Optional[int] = None):
    """Read a model file, optionally requiring a kind"""
    with open(path, 'rb') as f:
        data = f.read()
    model = loads(data, expected_kind, path)
    logger.info(f"Loaded {type(model).__name__} from {path}")
    return model
