"""
Character language model: step loss, schedule, perplexity and training
"""

import math

import numpy as np
import pytest

from conftest import make_lm
from src.charlm import (
    AnnealState,
    CharLM,
    CharLMConfig,
    LMState,
    batchify,
    lm_step,
    lr_schedule,
    perplexity,
    train_lm,
    windows,
)
from src.exceptions import ConfigError, IngestionError, InputError
from src.numcore import DOUBLE, GradTape, grad_check, sgd_step
from src.textcorpus import BOUNDARY, CharDictionary, build_char_dictionary, read_lines, split_corpus


def _zero_decoder(model):
    model.decoder.W[...] = 0.0
    model.decoder.b[...] = 0.0
    return model


# - lm_step -

def test_lm_step_uniform_loss(tiny_lm):
    _zero_decoder(tiny_lm)
    ids = np.array([[1, 2, 3, 4, 5], [5, 4, 3, 2, 1]])
    loss, state = lm_step(tiny_lm, ids, tiny_lm.initial_state(2))
    assert loss == pytest.approx(math.log(tiny_lm.vocab_size), rel=1e-6)
    assert state.h[0].shape == (2, tiny_lm.hidden)


def test_lm_step_rejects_bad_ids(tiny_lm):
    with pytest.raises(InputError):
        lm_step(tiny_lm, np.array([[1, tiny_lm.vocab_size]]), tiny_lm.initial_state(1))
    with pytest.raises(InputError):
        lm_step(tiny_lm, np.array([[1]]), tiny_lm.initial_state(1))


def test_lm_step_carry_matches_full_window(tiny_dictionary):
    model = make_lm(tiny_dictionary, dtype=DOUBLE)
    rng = np.random.default_rng(0)
    ids = rng.integers(0, model.vocab_size, size=(2, 9))
    full, _ = lm_step(model, ids, model.initial_state(2))
    # Windows share one column: the first window's last target is the second's first input
    first, carry = lm_step(model, ids[:, :4], model.initial_state(2))
    second, _ = lm_step(model, ids[:, 3:], carry)
    assert (3 * first + 5 * second) / 8 == pytest.approx(full, rel=1e-12)


@pytest.mark.parametrize('seed', range(3))
def test_lm_step_gradients(tiny_dictionary, seed):
    model = make_lm(tiny_dictionary, hidden=3, seed=seed, dtype=DOUBLE, layers=2)
    ids = np.random.default_rng(seed).integers(0, model.vocab_size, size=(2, 5))
    state = LMState([0.1 * np.ones((2, 3))] * 2, [0.2 * np.ones((2, 3))] * 2)

    def loss_fn(tape):
        loss, _ = lm_step(model, ids, state, tape)
        return loss

    assert grad_check(loss_fn, model.param_groups()) < 1e-4


def test_lm_step_overfits_single_character():
    dictionary = CharDictionary(['a'])
    model = make_lm(dictionary, hidden=8, seed=1)
    ids = np.full((1, 21), dictionary.lookup('a'))
    groups = model.param_groups()
    tape = GradTape(groups)
    for _ in range(500):
        lm_step(model, ids, model.initial_state(1), tape)
        sgd_step(groups, tape, lr=2.0)
    loss, _ = lm_step(model, ids, model.initial_state(1))
    assert loss < 0.01


# - streams -

def test_encode_lines_boundaries(tiny_dictionary):
    fwd = make_lm(tiny_dictionary)
    bwd = make_lm(tiny_dictionary, direction='backward')
    a, b = tiny_dictionary.lookup('a'), tiny_dictionary.lookup('b')
    assert fwd.encode_lines(['ab', 'b']).tolist() == [BOUNDARY, a, b, BOUNDARY, b, BOUNDARY]
    assert bwd.encode_lines(['ab', 'b']).tolist() == [BOUNDARY, b, BOUNDARY, b, a, BOUNDARY]
    assert bwd.encode_document('ab').tolist() == [BOUNDARY, b, a]


def test_windows_overlap_by_one_column():
    data = batchify(np.arange(22), 2)
    assert data.shape == (2, 11)
    cuts = list(windows(data, 4))
    assert [w.shape[1] for w in cuts] == [5, 5, 3]
    assert cuts[0][0, -1] == cuts[1][0, 0]


# - learning rate schedule -

def _stall(state, value, times, **kwargs):
    for _ in range(times):
        state = lr_schedule(state, value, **kwargs)
    return state


def test_lr_schedule_patience_boundary():
    state = lr_schedule(AnnealState.initial(20.0), 10.0, patience=25, anneal_factor=4.0)
    assert state.best == 10.0
    assert _stall(state, 11.0, 24, patience=25, anneal_factor=4.0).lr == 20.0
    assert _stall(state, 11.0, 25, patience=25, anneal_factor=4.0).lr == 5.0


def test_lr_schedule_anneals_twice():
    state = lr_schedule(AnnealState.initial(20.0), 10.0, patience=25, anneal_factor=4.0)
    lrs = []
    for _ in range(50):
        state = lr_schedule(state, 10.0, patience=25, anneal_factor=4.0)
        lrs.append(state.lr)
    assert sorted(set(lrs), reverse=True) == [20.0, 5.0, 1.25]


def test_lr_schedule_threshold_counts_tiny_gains_as_stalls():
    state = lr_schedule(AnnealState.initial(1.0), 3.0, patience=1, anneal_factor=2.0)
    state = lr_schedule(state, 3.0 - 5e-5, patience=1, anneal_factor=2.0)
    assert state.lr == 0.5 and state.best == 3.0


def test_lr_schedule_max_mode():
    state = AnnealState.initial(0.1, mode='max')
    state = lr_schedule(state, 0.8, patience=2, anneal_factor=2.0, mode='max')
    state = lr_schedule(state, 0.7, patience=2, anneal_factor=2.0, mode='max')
    assert state.lr == 0.1 and state.bad_count == 1
    state = lr_schedule(state, 0.7, patience=2, anneal_factor=2.0, mode='max')
    assert state.lr == 0.05 and state.best == 0.8


# - perplexity -

def test_perplexity_uniform_model(tiny_lm):
    _zero_decoder(tiny_lm)
    assert perplexity(tiny_lm, ['abc', 'a b']) == pytest.approx(tiny_lm.vocab_size, rel=1e-9)


def test_perplexity_hand_built_model():
    model = _zero_decoder(make_lm(CharDictionary(['a'])))
    model.decoder.b[...] = np.log(np.array([0.05, 0.05, 0.9])).astype(np.float32)
    assert perplexity(model, ['aaa']) == pytest.approx(1 / 0.9, abs=1e-6)


def test_perplexity_independent_of_workers(data_dir):
    lines = read_lines(f"{data_dir}/corpus.txt")[:100]
    model = make_lm(build_char_dictionary(lines), hidden=8)
    single = perplexity(model, lines, workers=1)
    assert perplexity(model, lines, workers=4) == single
    assert single >= 1.0


def test_perplexity_empty_text(tiny_lm):
    with pytest.raises(IngestionError):
        perplexity(tiny_lm, [])


# - training -

def _desk_config(**overrides):
    values = dict(char_embed_dim=16, hidden=32, seq_len=30, batch=16, epochs=2, patience=1)
    values.update(overrides)
    return CharLMConfig(**values)


def test_train_lm_improves_on_bundled_corpus(data_dir, tmp_path):
    train, valid, _ = split_corpus(read_lines(f"{data_dir}/corpus.txt"), seed=42)
    config = _desk_config(epochs=4)
    untrained = CharLM.initialize(config, build_char_dictionary(train), seed=42)
    initial = perplexity(untrained, valid)

    log_path = str(tmp_path / 'lm.tsv')
    model, log = train_lm(config, train, valid, seed=42, log_path=log_path)

    assert len(log.checkpoints) == 4
    assert min(cp.valid_ppl for cp in log.checkpoints) < initial
    assert perplexity(model, valid) == pytest.approx(min(cp.valid_ppl for cp in log.checkpoints), rel=1e-4)
    for prev, nxt in zip(log.lrs, log.lrs[1:]):
        assert nxt / prev in (1.0, 1.0 / config.anneal_factor)

    with open(log_path, encoding='utf-8') as f:
        rows = f.read().splitlines()
    assert rows[0] == 'step\tloss\tppl\tlr'
    assert len(rows) == 5


# word choices per position of the bundled corpus grammar:
# det noun verb det noun [adp det noun]
GRAMMAR_CHOICES = (4, 6, 5, 4, 6, 4, 4, 6)


def _grammar_floor(lines):
    """Per-character perplexity a model pays for the word choices alone"""
    nats = sum(math.log(GRAMMAR_CHOICES[k]) for line in lines for k in range(len(line.split())))
    return math.exp(nats / sum(len(line) for line in lines))


def test_train_lm_anneals_and_approaches_floor(trained_lm):
    model, log, valid = trained_lm
    factor = model.config.anneal_factor
    ratios = [nxt / prev for prev, nxt in zip(log.lrs, log.lrs[1:])]
    assert all(r in (1.0, 1.0 / factor) for r in ratios)
    assert 1.0 / factor in ratios
    assert log.lrs[0] == model.config.lr0

    best = min(cp.valid_ppl for cp in log.checkpoints)
    assert best < log.checkpoints[0].valid_ppl
    assert best < 1.5 * _grammar_floor(valid)
    assert perplexity(model, valid) == pytest.approx(best, rel=1e-4)


def test_train_lm_is_deterministic():
    lines = ['the cat sat', 'a dog ran', 'the dog sat', 'a cat ran'] * 3
    config = _desk_config(hidden=8, epochs=1, seq_len=10, batch=2)
    first, _ = train_lm(config, lines, lines[:2], seed=9)
    second, _ = train_lm(config, lines, lines[:2], seed=9)
    for (name, a), (_, b) in zip(first.param_groups().items(), second.param_groups().items()):
        for x, y in zip(a, b):
            assert np.array_equal(x, y), name


def test_train_lm_needs_text():
    with pytest.raises(IngestionError):
        train_lm(_desk_config(), [], ['x'])


def test_config_validation():
    with pytest.raises(ConfigError):
        CharLMConfig(direction='sideways')
    with pytest.raises(ConfigError):
        CharLMConfig.from_dict({'hidden': 8, 'bogus': 1})
    published = CharLMConfig.published()
    assert (published.hidden, published.seq_len, published.batch, published.lr0) == (1024, 250, 100, 20.0)
