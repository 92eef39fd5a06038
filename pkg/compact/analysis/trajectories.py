"""
MI 轨迹导出, 权重轨迹汇总以及消融结果汇总
"""
import csv
import logging
from pathlib import Path

import numpy as np
from scipy import stats

from compact.exceptions import CompactError, DatasetError
from compact.base.scoring import mi_adaptability
from compact.base.utils.visualization import plot_mi_trajectory, plot_weight_trajectory

logger = logging.getLogger(__name__)

MI_COLUMNS = ('step', 'instance_id', 'teacher_id', 't', 'token', 'i_proxy', 'delta_i', 'mask', 'peak')


def find_instance(dataset, instance_id):
    for inst in dataset:
        if inst.id == instance_id:
            return inst
    raise DatasetError('unknown instance {!r}'.format(instance_id))


def fresh_traces(model, instance, config, vocab):
    """
    在当前参数上重新计算每个教师的 MiTrace
    :return: (teacher_id, MiTrace) 列表
    """
    return [(r.teacher_id, mi_adaptability(model, instance, k, config, vocab)[1])
            for k, r in enumerate(instance.rationales)]


def count_masked_gains(trace):
    return len(trace.peaks())


def mi_trace_rows(trace, vocab, instance_id, teacher_id, step=0):
    peaks = set(trace.peaks())
    rows = []
    for t in range(len(trace.i_proxy)):
        token = vocab.tokens[int(trace.token_ids[t])] if trace.token_ids is not None else ''
        rows.append({
            'step': step, 'instance_id': instance_id, 'teacher_id': teacher_id, 't': t, 'token': token,
            'i_proxy': repr(float(trace.i_proxy[t])),
            'delta_i': '' if t == 0 else repr(float(trace.delta_i[t - 1])),
            'mask': repr(float(trace.mask[t])), 'peak': int(t in peaks),
        })
    return rows


def mi_trajectory_export(traces, instance, path, vocab, step=0, chart=True):
    """
    :param traces: (teacher_id, MiTrace) 列表
    :param instance: 对应的 ``Instance``
    :param path: CSV 路径, 图表写在同名的 ``.svg``
    :return: CSV 路径
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    known = set(instance.teacher_ids)
    with open(path, 'w', encoding='utf-8', newline='') as f:
        writer = csv.DictWriter(f, fieldnames=MI_COLUMNS, lineterminator='\n')
        writer.writeheader()
        for tid, trace in traces:
            if tid not in known:
                raise DatasetError('instance {} has no teacher {!r}'.format(instance.id, tid))
            writer.writerows(mi_trace_rows(trace, vocab, instance.id, tid, step))
    if chart:
        series = [(tid, [vocab.tokens[int(i)] for i in trace.token_ids], trace.i_proxy, trace.peaks())
                  for tid, trace in traces]
        plot_mi_trajectory(series, path.with_suffix('.svg'), title=instance.id)
    return path


def load_mi_csv(path):
    rows = []
    with open(path, 'r', encoding='utf-8', newline='') as f:
        reader = csv.DictReader(f)
        if tuple(reader.fieldnames or ()) != MI_COLUMNS:
            raise DatasetError('MI trace header {} does not match {}'.format(reader.fieldnames, list(MI_COLUMNS)),
                               row=1)
        for lineno, r in enumerate(reader, start=2):
            try:
                rows.append({
                    'step': int(r['step']), 'instance_id': r['instance_id'], 'teacher_id': r['teacher_id'],
                    't': int(r['t']), 'token': r['token'], 'i_proxy': float(r['i_proxy']),
                    'delta_i': None if r['delta_i'] == '' else float(r['delta_i']),
                    'mask': float(r['mask']), 'peak': bool(int(r['peak'])),
                })
            except (TypeError, ValueError) as e:
                raise DatasetError(str(e), row=lineno)
    return rows


def weight_trajectory_summary(ledger):
    """
    按 (epoch, teacher) 求 alpha 的均值
    :return: (epochs, teacher_ids, means [n_epochs, K])
    """
    if not len(ledger):
        raise CompactError('weight_trajectory_summary: ledger is empty')
    teacher_ids = ledger.teacher_ids
    epochs = sorted({r.epoch for r in ledger})
    sums = np.zeros((len(epochs), len(teacher_ids)))
    counts = np.zeros_like(sums)
    e_index = {e: i for i, e in enumerate(epochs)}
    t_index = {t: i for i, t in enumerate(teacher_ids)}
    for r in ledger:
        sums[e_index[r.epoch], t_index[r.teacher_id]] += r.alpha
        counts[e_index[r.epoch], t_index[r.teacher_id]] += 1
    means = np.divide(sums, counts, out=np.zeros_like(sums), where=counts > 0)
    return epochs, teacher_ids, means


def save_weight_trajectory(summary, path, chart=True):
    epochs, teacher_ids, means = summary
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(['epoch'] + list(teacher_ids))
        for e, row in zip(epochs, means):
            writer.writerow([e] + [repr(float(v)) for v in row])
    if chart:
        plot_weight_trajectory(epochs, means, teacher_ids, path.with_suffix('.svg'))
    return path


def ablation_summary(results, reference='compact'):
    """
    :param results: {mode: 各 seed 的准确率列表}
    :return: {mode: {'mean', 'sem', 'relative_drop'}}, relative_drop 相对 ``reference`` 的均值
    """
    out = {}
    for mode, values in results.items():
        values = np.asarray(values, dtype=np.float64)
        if values.size == 0:
            raise CompactError('ablation_summary: no results for mode {!r}'.format(mode))
        out[mode] = {'mean': float(values.mean()),
                     'sem': float(stats.sem(values)) if values.size > 1 else 0.}
    if reference in out:
        ref = out[reference]['mean']
        for mode in out:
            out[mode]['relative_drop'] = (ref - out[mode]['mean']) / ref if ref != 0 else 0.
    return out
