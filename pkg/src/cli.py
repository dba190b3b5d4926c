"""
Command-line interface
Subcommands for every pipeline stage; results go to stdout as key=value lines,
logs go to stderr
"""

import argparse
import logging
import os
import sys
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

from . import __version__
from . import persist
from .charlm import perplexity, train_lm
from .classifier import GruClassifier, evaluate_classifier, train_classifier
from .embed import ContextualEmbedder, StackedEmbedder, StaticEmbedder
from .exceptions import ConfigError, DataError, ToolkitException, UsageError
from .runtime import default_workers, memory_mb
from .settings_manager import SettingsManager
from .tagger import CrfTagger, TagSet, evaluate_tagger, train_tagger
from .textcorpus import (
    Sentence,
    TaggedSentence,
    build_char_dictionary,
    corpus_stats,
    dataset_stats,
    load_vec_table,
    read_conllu,
    read_labeled,
    read_lines,
    split_corpus,
    write_conllu,
    write_lines,
)

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'
LOG_LEVELS = ('DEBUG', 'INFO', 'WARNING', 'ERROR')

# flag dest -> setting key suffix
LM_FLAGS = {
    'embed_dim': 'char_embed_dim',
    'hidden': 'hidden',
    'layers': 'layers',
    'seq_len': 'seq_len',
    'batch': 'batch',
    'lr': 'lr0',
    'anneal_factor': 'anneal_factor',
    'patience': 'patience',
    'epochs': 'epochs',
    'direction': 'direction',
    'clip': 'clip',
    'shard_lines': 'shard_lines',
}

HEAD_FLAGS = ('hidden', 'lr', 'epochs', 'batch', 'anneal_factor', 'patience', 'dropout', 'clip')


class CliArgumentParser(argparse.ArgumentParser):
    """ArgumentParser that raises UsageError instead of exiting"""

    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


class EmbedderPartAction(argparse.Action):
    """Collects --contextual / --static flags in command-line order"""

    def __call__(self, parser, namespace, values, option_string=None):
        parts = list(getattr(namespace, 'parts', None) or [])
        parts.append((self.const, values))
        setattr(namespace, 'parts', parts)


def emit(key: str, value) -> None:
    """Write one key=value result line to stdout"""
    if isinstance(value, float):
        value = repr(value)
    print(f"{key}={value}", flush=True)


# --- pipeline wiring --------------------------------------------------------

def _load_contextual(spec: str) -> ContextualEmbedder:
    paths = [p for p in spec.split(',') if p]
    if not 1 <= len(paths) <= 2:
        raise UsageError(f"--contextual expects FWD[,BWD], got {spec!r}")
    models = [persist.load(path, persist.KIND_CHARLM) for path in paths]
    try:
        return ContextualEmbedder(*models)
    except DataError as e:
        raise DataError(f"{' + '.join(paths)}: {e}")


def build_embedder(parts: Sequence[Tuple[str, str]]) -> StackedEmbedder:
    """StackedEmbedder from ('contextual' | 'static', argument) pairs in order"""
    if not parts:
        raise UsageError("At least one --contextual or --static embedding is required")
    embedders = []
    for kind, value in parts:
        if kind == 'contextual':
            embedders.append(_load_contextual(value))
        else:
            embedders.append(StaticEmbedder(load_vec_table(value)))
        logger.info(f"Stack part {len(embedders)}: {kind} {value} (dim {embedders[-1].dim})")
    return StackedEmbedder(embedders)


@dataclass
class Pipeline:
    embedder: StackedEmbedder
    model: object = None


def wire_pipeline(settings: SettingsManager, parts: Sequence[Tuple[str, str]],
                  head: Optional[str] = None, train: Sequence = ()) -> Pipeline:
    """
    Assemble the embedding stack and, optionally, a fresh downstream head

    Args:
        settings: Effective configuration (head hyperparameters and seed)
        parts: Embedding flags in command-line order
        head: 'tagger', 'classifier' or None for the stack alone
        train: Records the head's tag / label inventory is drawn from

    Returns:
        Pipeline with the stack and the initialized head
    """
    embedder = build_embedder(parts)
    pipeline = Pipeline(embedder)
    if head == 'tagger':
        pipeline.model = CrfTagger.initialize(embedder, TagSet.from_sentences(train),
                                              settings.head_config('tagger'), settings.get('seed'))
    elif head == 'classifier':
        pipeline.model = GruClassifier.initialize(embedder, GruClassifier.labels_of(train),
                                                  settings.head_config('classifier'), settings.get('seed'))
    return pipeline


# --- helpers ----------------------------------------------------------------

def _workers(settings: SettingsManager) -> int:
    workers = settings.get('workers')
    return workers if workers > 0 else default_workers()


def _read_tagged(settings: SettingsManager, path: str) -> List[TaggedSentence]:
    return read_conllu(path, settings.get('conllu.form_col'), settings.get('conllu.tag_col'))


def _read_sentences(path: str) -> List[Sentence]:
    return [Sentence.from_text(line) for line in read_lines(path) if line.split()]


# --- commands ---------------------------------------------------------------

def cmd_build_dict(args, settings: SettingsManager):
    lines = read_lines(args.corpus)
    dictionary = build_char_dictionary(lines, settings.get('corpus.max_chars'))
    persist.save(dictionary, args.out)
    emit('chars', len(dictionary))
    emit('out', args.out)


def cmd_split(args, settings: SettingsManager):
    train, valid, test = split_corpus(read_lines(args.corpus), settings.split_ratios(), settings.get('seed'))
    os.makedirs(args.out_dir, exist_ok=True)
    for name, part in (('train', train), ('valid', valid), ('test', test)):
        write_lines(part, os.path.join(args.out_dir, f"{name}.txt"))
        emit(name, len(part))


def cmd_train_lm(args, settings: SettingsManager):
    config = settings.lm_config()
    lines = read_lines(args.corpus)
    test = None
    if args.valid:
        train, valid = lines, read_lines(args.valid)
    else:
        train, valid, test = split_corpus(lines, settings.split_ratios(), settings.get('seed'))
    dictionary = persist.load(args.dict, persist.KIND_DICT) if args.dict else None

    workers = _workers(settings)
    model, log = train_lm(config, train, valid, seed=settings.get('seed'), dictionary=dictionary,
                          max_chars=settings.get('corpus.max_chars'), log_path=args.log, workers=workers)
    persist.save(model, args.out)

    best = min(cp.valid_ppl for cp in log.checkpoints)
    emit('checkpoints', len(log.checkpoints))
    emit('valid_perplexity', best)
    if test is not None:
        emit('test_perplexity', perplexity(model, test, workers=workers))
    emit('out', args.out)


def cmd_eval_lm(args, settings: SettingsManager):
    model = persist.load(args.model, persist.KIND_CHARLM)
    emit('perplexity', perplexity(model, read_lines(args.text), workers=_workers(settings)))


def cmd_embed(args, settings: SettingsManager):
    embedder = wire_pipeline(settings, args.parts).embedder
    for sentence in _read_sentences(args.text):
        vectors = embedder.embed(sentence)
        for token, row in zip(vectors.tokens, vectors.matrix):
            print(f"{token}\t{' '.join(repr(float(v)) for v in row)}")
        print()


def cmd_train_tagger(args, settings: SettingsManager):
    train = _read_tagged(settings, args.train)
    dev = _read_tagged(settings, args.dev) if args.dev else []
    tagger = wire_pipeline(settings, args.parts, 'tagger', list(train) + list(dev)).model
    tagger, log = train_tagger(tagger.config, tagger, train, dev, seed=settings.get('seed'))
    persist.save(tagger, args.out)
    emit('epochs', len(log.records))
    emit('dev_micro_f1', log.best_score)
    emit('out', args.out)


def cmd_eval_tagger(args, settings: SettingsManager):
    tagger = persist.load(args.model, persist.KIND_TAGGER)
    test = _read_tagged(settings, args.test)
    report = evaluate_tagger(tagger, test)
    for tag, m in report.per_tag.items():
        emit(f"precision.{tag}", m.precision)
        emit(f"recall.{tag}", m.recall)
        emit(f"f1.{tag}", m.f1)
        emit(f"support.{tag}", m.support)
    emit('accuracy', report.accuracy)
    emit('macro_f1', report.macro_f1)
    emit('micro_f1', report.micro_f1)
    if args.report:
        write_lines(report.render(), args.report)
        logger.info(f"Per-tag report written to {args.report}")
    if args.predictions:
        predicted = [TaggedSentence(list(sent.tokens), tags) for sent, tags in zip(test, report.predictions)]
        write_conllu(predicted, args.predictions,
                     settings.get('conllu.form_col'), settings.get('conllu.tag_col'))


def cmd_train_classifier(args, settings: SettingsManager):
    train = read_labeled(args.train)
    dev = read_labeled(args.dev) if args.dev else []
    model = wire_pipeline(settings, args.parts, 'classifier', list(train) + list(dev)).model
    model, log = train_classifier(model.config, model, train, dev, seed=settings.get('seed'))
    persist.save(model, args.out)
    emit('epochs', len(log.records))
    emit('dev_accuracy', log.best_score)
    emit('out', args.out)


def cmd_eval_classifier(args, settings: SettingsManager):
    model = persist.load(args.model, persist.KIND_CLASSIFIER)
    report = evaluate_classifier(model, read_labeled(args.test))
    for label, m in report.per_class.items():
        emit(f"f1.{label}", m.f1)
    emit('accuracy', report.accuracy)
    if args.report:
        write_lines(report.render(), args.report)
        logger.info(f"Classification report written to {args.report}")


def cmd_stats(args, settings: SettingsManager):
    if args.corpus:
        stats = corpus_stats(read_lines(args.corpus))
    elif args.train and args.test:
        if args.format == 'conllu':
            stats = dataset_stats(_read_tagged(settings, args.train), _read_tagged(settings, args.test))
        else:
            stats = dataset_stats(read_labeled(args.train), read_labeled(args.test))
    else:
        raise UsageError("stats needs --corpus, or --train and --test")
    for key, value in stats.items():
        emit(key, value)


# --- parser -----------------------------------------------------------------

def _common_parser() -> argparse.ArgumentParser:
    common = CliArgumentParser(add_help=False)
    common.add_argument('--config', metavar='PATH', help='Run configuration file (key = value lines)')
    common.add_argument('--save-config', metavar='PATH', help='Write the effective configuration here')
    common.add_argument('--seed', type=int, help='Random seed (default 42)')
    common.add_argument('--workers', type=int, help='Evaluation threads; 0 uses all physical cores')
    common.add_argument('--log-level', help='DEBUG, INFO, WARNING or ERROR')
    return common


def _add_embedding_flags(parser: argparse.ArgumentParser):
    parser.add_argument('--contextual', action=EmbedderPartAction, const='contextual', metavar='FWD[,BWD]',
                        help='Contextual embedding from a forward (and backward) language model file')
    parser.add_argument('--static', action=EmbedderPartAction, const='static', metavar='VEC',
                        help='Static word vectors in .vec text format')


def _add_head_flags(parser: argparse.ArgumentParser):
    parser.add_argument('--hidden', type=int)
    parser.add_argument('--lr', type=float)
    parser.add_argument('--epochs', type=int)
    parser.add_argument('--batch', type=int)
    parser.add_argument('--anneal-factor', type=float)
    parser.add_argument('--patience', type=int)
    parser.add_argument('--dropout', type=float)
    parser.add_argument('--clip', type=float)


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = CliArgumentParser(prog='csem', description='Contextual string embeddings toolkit')
    parser.add_argument('--version', action='version', version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest='command', metavar='COMMAND', parser_class=CliArgumentParser)
    sub.required = True

    p = sub.add_parser('build-dict', parents=[common], help='Build a character dictionary')
    p.add_argument('--corpus', required=True)
    p.add_argument('--out', required=True)
    p.add_argument('--max-chars', type=int)
    p.set_defaults(func=cmd_build_dict)

    p = sub.add_parser('split', parents=[common], help='Split a corpus into train/valid/test')
    p.add_argument('--corpus', required=True)
    p.add_argument('--out-dir', required=True)
    p.add_argument('--ratios', help='Comma-separated train,valid,test ratios')
    p.set_defaults(func=cmd_split)

    p = sub.add_parser('train-lm', parents=[common], help='Train a character language model')
    p.add_argument('--corpus', required=True)
    p.add_argument('--valid', help='Validation text; without it the corpus is split 80/10/10')
    p.add_argument('--out', required=True)
    p.add_argument('--dict', help='Prebuilt dictionary file')
    p.add_argument('--log', help='Checkpoint log (TSV)')
    p.add_argument('--max-chars', type=int)
    p.add_argument('--hidden', type=int)
    p.add_argument('--layers', type=int)
    p.add_argument('--seq-len', type=int)
    p.add_argument('--batch', type=int)
    p.add_argument('--lr', type=float)
    p.add_argument('--anneal-factor', type=float)
    p.add_argument('--patience', type=int)
    p.add_argument('--epochs', type=int)
    p.add_argument('--direction', choices=['forward', 'backward'])
    p.add_argument('--embed-dim', type=int)
    p.add_argument('--clip', type=float)
    p.add_argument('--shard-lines', type=int)
    p.set_defaults(func=cmd_train_lm)

    p = sub.add_parser('eval-lm', parents=[common], help='Perplexity of a language model')
    p.add_argument('--model', required=True)
    p.add_argument('--text', required=True)
    p.set_defaults(func=cmd_eval_lm)

    p = sub.add_parser('embed', parents=[common], help='Print stacked word vectors')
    p.add_argument('--text', required=True, help='One whitespace-tokenized sentence per line')
    _add_embedding_flags(p)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser('train-tagger', parents=[common], help='Train a BiLSTM-CRF tagger')
    p.add_argument('--train', required=True)
    p.add_argument('--dev')
    p.add_argument('--out', required=True)
    _add_embedding_flags(p)
    _add_head_flags(p)
    p.set_defaults(func=cmd_train_tagger, head='tagger')

    p = sub.add_parser('eval-tagger', parents=[common], help='Evaluate a tagger')
    p.add_argument('--model', required=True)
    p.add_argument('--test', required=True)
    p.add_argument('--report', help='Write the per-tag table here')
    p.add_argument('--predictions', help='Write predicted tags as CoNLL-U here')
    p.set_defaults(func=cmd_eval_tagger)

    p = sub.add_parser('train-classifier', parents=[common], help='Train a GRU classifier')
    p.add_argument('--train', required=True)
    p.add_argument('--dev')
    p.add_argument('--out', required=True)
    _add_embedding_flags(p)
    _add_head_flags(p)
    p.set_defaults(func=cmd_train_classifier, head='classifier')

    p = sub.add_parser('eval-classifier', parents=[common], help='Evaluate a classifier')
    p.add_argument('--model', required=True)
    p.add_argument('--test', required=True)
    p.add_argument('--report', help='Write accuracy and confusion matrix here')
    p.set_defaults(func=cmd_eval_classifier)

    p = sub.add_parser('stats', parents=[common], help='Corpus or dataset statistics')
    p.add_argument('--corpus')
    p.add_argument('--train')
    p.add_argument('--test')
    p.add_argument('--format', choices=['conllu', 'labeled'], default='conllu')
    p.set_defaults(func=cmd_stats)
    return parser


def overrides_from_args(args) -> dict:
    """Setting keys set on the command line"""
    values = {
        'seed': args.seed,
        'workers': args.workers,
        'log_level': args.log_level,
        'corpus.max_chars': getattr(args, 'max_chars', None),
        'corpus.split_ratios': getattr(args, 'ratios', None),
    }
    if args.command == 'train-lm':
        for dest, key in LM_FLAGS.items():
            values[f'lm.{key}'] = getattr(args, dest)
    head = getattr(args, 'head', None)
    if head:
        for dest in HEAD_FLAGS:
            values[f'{head}.{dest}'] = getattr(args, dest)
    return values


def run_cli(argv: Optional[Sequence[str]] = None) -> int:
    """
    Run one command

    Args:
        argv: Arguments without the program name (default: sys.argv[1:])

    Returns:
        Exit code: 0 ok, 1 usage/config, 2 data/parse/model file, 3 numeric failure
    """
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format=LOG_FORMAT, force=True)
    try:
        args = build_parser().parse_args(argv)
        settings = SettingsManager(args.config)
        settings.update(overrides_from_args(args))
        level = str(settings.get('log_level')).upper()
        if level not in LOG_LEVELS:
            raise ConfigError(f"Invalid log_level {level!r}, expected one of {', '.join(LOG_LEVELS)}")
        logging.getLogger().setLevel(level)

        logger.info(f"Command {args.command}, seed {settings.get('seed')}")
        settings.log_effective()
        if args.save_config:
            settings.save(args.save_config)

        args.parts = getattr(args, 'parts', None) or []
        args.func(args, settings)
        logger.info(f"{args.command} finished, rss {memory_mb():.0f} MB")
        return 0
    except UsageError as e:
        print(str(e), file=sys.stderr)
        return e.exit_code
    except ToolkitException as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code
    except OSError as e:
        logger.error(f"I/O error: {e}")
        return 2
    except SystemExit as e:
        # --help and --version
        return e.code if isinstance(e.code, int) else 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    return run_cli(argv)
