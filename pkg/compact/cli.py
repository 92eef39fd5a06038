"""
命令行入口::

    python -m compact <subcommand> --config run.json --set trainer.epochs=2 --out runs/demo

子命令: gen-data, train, eval, grad-check, pca-shift, mi-trace, weights-plot.
exit code: 0 成功, 1 配置错误, 2 运行时错误
"""
import argparse
import json
import logging
import os
import platform
import sys
from pathlib import Path

import numpy as np
import torch

import compact
from compact.exceptions import CompactError, ConfigError
from compact.utils import derive_seed, setup_seed, worker_count, stable_json
from compact.config import load_config
from compact.datasets import Vocabulary, generate_dataset, load_jsonl, save_jsonl, ood_probe_corpus, id_probe_corpus
from compact.model_zoo import StudentModel, load_checkpoint_file
from compact.base.scoring import score_instance
from compact.distill import MetricLedger, train, evaluate, verify_gradient_equivalence
from compact.analysis import pca_basis, pca_shift_sweep, mean_shift, final_token_activations, find_instance, \
    fresh_traces, mi_trajectory_export, weight_trajectory_summary, save_weight_trajectory
from compact.base.utils.visualization import plot_pca_scatter

logger = logging.getLogger(__name__)

SUBCOMMANDS = ('gen-data', 'train', 'eval', 'grad-check', 'pca-shift', 'mi-trace', 'weights-plot')
GRAD_CHECK_TOL = 1e-10


def build_parser():
    parser = argparse.ArgumentParser(prog='compact', description='multi-teacher chain-of-thought distillation')
    parser.add_argument('subcommand', choices=SUBCOMMANDS)
    parser.add_argument('--config', default=None, help='JSON config with sections model/weighting/loss/trainer/data')
    parser.add_argument('--set', dest='overrides', action='append', default=[], metavar='DOT.KEY=VALUE',
                        help='override a config key, repeatable')
    parser.add_argument('--out', default='runs/default', help='output directory')
    return parser


def _datasets(cfg, vocab):
    data = cfg.data
    max_len = cfg.model.max_seq_len
    room = cfg.weighting.mi_probe == 'forced_continuation'

    def build(path, n, prefix):
        if path:
            return load_jsonl(path, vocab, max_len=max_len, answer_room=room)
        return [inst.validate().tokenize(vocab).check_length(max_len, room) for inst in generate_dataset(
            n, data.teachers, data.task, derive_seed(data.seed, 'gen-data'), id_prefix=prefix)]

    return build(data.train_path, data.n_train, 'train'), build(data.test_path, data.n_test, 'test')


def _model(cfg, path=None):
    if path:
        return load_checkpoint_file(path, cfg.model)
    return StudentModel(cfg.model)


def cmd_gen_data(cfg, vocab, out):
    data = cfg.data
    seed = derive_seed(data.seed, 'gen-data')
    train_set = generate_dataset(data.n_train, data.teachers, data.task, seed, id_prefix='train')
    test_set = generate_dataset(data.n_test, data.teachers, data.task, seed, id_prefix='test')
    for inst in train_set + test_set:
        inst.validate().tokenize(vocab)
    return [save_jsonl(train_set, out / 'train.jsonl'), save_jsonl(test_set, out / 'test.jsonl')], {}


def cmd_train(cfg, vocab, out):
    train_set, test_set = _datasets(cfg, vocab)
    model = _model(cfg, cfg.trainer.init_checkpoint)
    if cfg.trainer.checkpoint_dir is None:
        cfg.trainer.checkpoint_dir = str(out / 'checkpoints')
    model, ledger = train(model, train_set, cfg.trainer, cfg.weighting, cfg.loss, vocab)
    outputs = [ledger.save_csv(out / 'ledger.csv')]
    if len(ledger):
        outputs.append(save_weight_trajectory(weight_trajectory_summary(ledger), out / 'weights.csv'))
    ckpts = sorted(Path(cfg.trainer.checkpoint_dir).glob('ckpt_epoch*.bin'))
    return outputs + ckpts, {'steps': len({r.step for r in ledger})}


def cmd_eval(cfg, vocab, out):
    _, test_set = _datasets(cfg, vocab)
    model = _model(cfg, cfg.trainer.checkpoint)
    acc = evaluate(model, test_set, vocab)
    path = out / 'eval.json'
    path.write_text(json.dumps({'accuracy': acc, 'n': len(test_set)}, indent=2) + '\n', encoding='utf-8')
    print('accuracy {:.4f}'.format(acc))
    return [path], {'accuracy': acc}


def cmd_grad_check(cfg, vocab, out):
    train_set, _ = _datasets(cfg, vocab)
    model = _model(cfg, cfg.trainer.checkpoint)
    inst = train_set[0]
    bundle = score_instance(model, inst, cfg.weighting, vocab)
    diff = verify_gradient_equivalence(model, inst, bundle, cfg.loss, vocab)
    print('max relative difference {:.3e}'.format(diff))
    if not diff < GRAD_CHECK_TOL:
        raise CompactError('gradient equivalence failed: {:.3e} >= {:.0e}'.format(diff, GRAD_CHECK_TOL))
    path = out / 'grad_check.json'
    path.write_text(json.dumps({'instance_id': inst.id, 'max_relative_difference': diff}, indent=2) + '\n',
                    encoding='utf-8')
    return [path], {'max_relative_difference': diff}


def cmd_pca_shift(cfg, vocab, out):
    if not cfg.trainer.checkpoint:
        raise ConfigError('trainer.checkpoint', 'pca-shift needs the distilled checkpoint')
    before = _model(cfg, cfg.trainer.init_checkpoint)
    after = _model(cfg, cfg.trainer.checkpoint)
    if cfg.data.probe == 'ood':
        corpus = ood_probe_corpus(vocab, cfg.data.n_probe, derive_seed(cfg.data.seed, 'pca-shift'))
    else:
        _, test_set = _datasets(cfg, vocab)
        corpus = id_probe_corpus(test_set[:cfg.data.n_probe], vocab)
    reports = pca_shift_sweep(before, after, corpus)
    path = out / 'pca_shift.csv'
    lines = ['layer,shift,before_pc1,before_pc2,after_pc1,after_pc2']
    for r in reports:
        lines.append(','.join([str(r.layer), repr(r.shift)] + [repr(float(v)) for v in
                                                               list(r.centroid_before) + list(r.centroid_after)]))
    path.write_text('\n'.join(lines) + '\n', encoding='utf-8')
    last = reports[-1].layer
    basis = pca_basis(before, corpus, last)
    plot_pca_scatter(basis.project(final_token_activations(before, corpus, last)),
                     basis.project(final_token_activations(after, corpus, last)),
                     path.with_suffix('.svg'), (reports[-1].centroid_before, reports[-1].centroid_after))
    shift = mean_shift(reports)
    print('mean shift {:.6g}'.format(shift))
    return [path, path.with_suffix('.svg')], {'mean_shift': shift}


def cmd_mi_trace(cfg, vocab, out):
    train_set, _ = _datasets(cfg, vocab)
    inst = find_instance(train_set, cfg.data.instance_id) if cfg.data.instance_id else train_set[0]
    model = _model(cfg, cfg.trainer.checkpoint)
    traces = fresh_traces(model, inst, cfg.weighting, vocab)
    path = mi_trajectory_export(traces, inst, out / 'mi_trace.csv', vocab)
    return [path, path.with_suffix('.svg')], {'instance_id': inst.id}


def cmd_weights_plot(cfg, vocab, out):
    if not cfg.data.ledger_path:
        raise ConfigError('data.ledger_path', 'weights-plot needs a ledger CSV')
    ledger = MetricLedger.load_csv(cfg.data.ledger_path)
    path = save_weight_trajectory(weight_trajectory_summary(ledger), out / 'weights.csv')
    return [path, path.with_suffix('.svg')], {}


COMMANDS = {
    'gen-data': cmd_gen_data,
    'train': cmd_train,
    'eval': cmd_eval,
    'grad-check': cmd_grad_check,
    'pca-shift': cmd_pca_shift,
    'mi-trace': cmd_mi_trace,
    'weights-plot': cmd_weights_plot,
}


def write_manifest(out, subcommand, cfg, outputs, extra):
    manifest = {
        'subcommand': subcommand,
        'config_hash': cfg.hash(),
        'seed': cfg.seed,
        'config': cfg.to_dict(),
        'versions': {
            'compact': compact.__version__,
            'python': platform.python_version(),
            'torch': torch.__version__,
            'numpy': np.__version__,
        },
        'outputs': [str(p) for p in outputs],
        'results': extra,
    }
    path = out / 'run_manifest.json'
    path.write_text(json.dumps(json.loads(stable_json(manifest)), indent=2) + '\n', encoding='utf-8')
    return path


def setup_logging():
    level = os.environ.get('COMPACT_LOG_LEVEL', 'INFO').upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO),
                        format='%(asctime)s %(levelname)s %(name)s: %(message)s')


def run(argv=None):
    """
    :return: exit code
    """
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.overrides)
        vocab = Vocabulary.default()
        cfg.validate(vocab_size=len(vocab))
        if cfg.model.vocab_size != len(vocab):
            raise ConfigError('model.vocab_size', 'must equal the vocabulary size {}, got {}'.format(
                len(vocab), cfg.model.vocab_size))
    except ConfigError as e:
        logger.error('bad config: %s', e)
        print('error: {}'.format(e), file=sys.stderr)
        return 1

    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        torch.set_num_threads(worker_count())
        setup_seed(cfg.seed)
        outputs, extra = COMMANDS[args.subcommand](cfg, vocab, out)
        write_manifest(out, args.subcommand, cfg, outputs, extra)
    except ConfigError as e:
        logger.error('bad config: %s', e)
        print('error: {}'.format(e), file=sys.stderr)
        return 1
    except (CompactError, OSError) as e:
        logger.error('%s failed: %s', args.subcommand, e)
        print('error: {}'.format(e), file=sys.stderr)
        return 2
    return 0


def main():
    setup_logging()
    sys.exit(run())


if __name__ == '__main__':
    main()
