import math

import numpy as np
import torch

from compact.exceptions import ShapeError
from compact.base.numerics import functional as nf


def consensus_from_vectors(v, pair):
    """
    以学生最后一层的 W_Q / W_K 构造 rationale 之间的注意力图
    A_ij = softmax_j(Q_i . K_j / sqrt(d_model)), S_cons_k = sum_{j != k} A_jk
    :param v: [K, d_model] 各 rationale 在 EOS 处的隐状态
    :param pair: ``ProjectionPair``
    :return: (s_cons [K], A [K, K])
    """
    v = torch.as_tensor(v, dtype=nf.DTYPE)
    if v.dim() != 2 or v.shape[0] < 2:
        raise ShapeError('consensus: need a [K, d_model] matrix with K >= 2, got {}'.format(tuple(v.shape)))
    d = v.shape[1]
    if tuple(pair.w_q.shape) != (d, d) or tuple(pair.w_k.shape) != (d, d):
        raise ShapeError('consensus: vectors {} do not match projections {} and {}'.format(
            tuple(v.shape), tuple(pair.w_q.shape), tuple(pair.w_k.shape)))
    with torch.no_grad():
        q = nf.matmul(v, nf.transpose(pair.w_q))
        key = nf.matmul(v, nf.transpose(pair.w_k))
        att = nf.softmax(nf.matmul(q, nf.transpose(key)) / math.sqrt(d), dim=-1)
    a = att.numpy().copy()
    s_cons = a.sum(axis=0) - np.diag(a)
    return s_cons, a


def eos_states(model, instance, vocab, traces=None):
    rows = []
    for k in range(instance.K):
        if traces is None:
            ids, _ = instance.sequence(k, vocab)
            h = model(ids).hidden_states
        else:
            h = traces[k].hidden_states
        rows.append(h[-1])
    return torch.stack(rows)


@torch.no_grad()
def consensus(model, instance, vocab, traces=None):
    """
    :return: (s_cons [K], A [K, K])
    """
    if instance.K < 2:
        raise ShapeError('consensus: instance {} has K={}, need at least 2'.format(instance.id, instance.K))
    return consensus_from_vectors(eos_states(model, instance, vocab, traces), model.projection_pair())
