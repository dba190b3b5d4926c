"""
Shared fixtures: bundled data files and tiny deterministic models
"""

import os

import numpy as np
import pytest

from src.charlm import CharLM, CharLMConfig, train_lm
from src.textcorpus import CharDictionary, StaticWordTable, read_lines, split_corpus

DATA_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'data')


@pytest.fixture
def data_dir():
    return DATA_DIR


@pytest.fixture
def tiny_dictionary():
    return CharDictionary(list('abc '))


def make_lm(dictionary, direction='forward', hidden=6, seed=3, dtype=np.float32, **overrides):
    config = CharLMConfig(char_embed_dim=4, hidden=hidden, seq_len=8, batch=2,
                          direction=direction, **overrides)
    return CharLM.initialize(config, dictionary, seed=seed, dtype=dtype)


@pytest.fixture
def tiny_lm(tiny_dictionary):
    return make_lm(tiny_dictionary)


def one_hot_table(words):
    """Static table giving every word its own dimension"""
    words = sorted(set(words))
    eye = np.eye(len(words), dtype=np.float32)
    return StaticWordTable(len(words), {word: eye[k] for k, word in enumerate(words)})


@pytest.fixture(scope='session')
def trained_lm():
    """Forward LM trained on the bundled corpus split, with its log and validation lines"""
    train, valid, _ = split_corpus(read_lines(os.path.join(DATA_DIR, 'corpus.txt')), seed=42)
    config = CharLMConfig(hidden=32, seq_len=30, epochs=12, patience=2, shard_lines=40)
    model, log = train_lm(config, train, valid, seed=42)
    return model, log, valid
