"""
自适应性得分 S_MI: 沿 rationale 逐位置的 gold 答案代理似然 I_proxy, 对思考词位置上的正增益加权求和
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np
import torch

from compact.exceptions import ShapeError
from compact.base.numerics import functional as nf
from compact.base.scoring.fusion import WeightingConfig


@dataclass
class MiTrace:
    """
    :param i_proxy: [T_k]
    :param delta_i: [T_k - 1], ``delta_i[t] = i_proxy[t + 1] - i_proxy[t]``
    :param mask: [T_k], 取值为 ``epsilon_mask`` 或 1.0
    :param token_ids: [T_k], 对应位置的 token
    """
    i_proxy: np.ndarray
    delta_i: np.ndarray
    mask: np.ndarray
    token_ids: Optional[np.ndarray] = None

    @property
    def gains(self):
        return np.maximum(self.delta_i, 0.) * self.mask[1:]

    def peaks(self):
        """
        正增益且位于思考词上的位置 t (t >= 1)
        """
        return [t + 1 for t in range(len(self.delta_i)) if self.delta_i[t] > 0 and self.mask[t + 1] == 1.]


def mi_from_trace(i_proxy, thinking, epsilon_mask=0.1, token_ids=None):
    """
    S_MI = sum_{t>=1} relu(I[t] - I[t-1]) * M[t], 位置 0 的增益无定义, 不计入
    :param i_proxy: [T] 代理似然
    :param thinking: [T] bool, 是否为思考词
    :param epsilon_mask: 非思考词的权重
    :return: (S_MI, MiTrace)
    """
    i_proxy = np.asarray(i_proxy, dtype=np.float64).reshape(-1)
    thinking = np.asarray(thinking, dtype=bool).reshape(-1)
    if i_proxy.shape != thinking.shape:
        raise ShapeError('mi_from_trace: i_proxy {} and mask {} differ'.format(i_proxy.shape, thinking.shape))
    if i_proxy.size == 0:
        raise ShapeError('mi_from_trace: empty trace')
    mask = np.where(thinking, 1., epsilon_mask)
    trace = MiTrace(i_proxy=i_proxy, delta_i=i_proxy[1:] - i_proxy[:-1], mask=mask,
                    token_ids=None if token_ids is None else np.asarray(token_ids, dtype=np.int64))
    return float(trace.gains.sum()), trace


def _forced_continuation(model, ids, start, stop, gold, ans_id):
    out = []
    g = len(gold)
    for p in range(start, stop):
        seq = list(ids[:p + 1]) + [ans_id] + list(gold)
        logits = model(seq).logits
        rows = nf.log_softmax(nf.slice_range(logits, p + 1, p + 1 + g), dim=-1)
        out.append(float(rows[torch.arange(g), torch.as_tensor(gold)].mean()))
    return np.asarray(out)


def i_proxy_from_trace(model, trace, instance, start, stop, config: WeightingConfig, vocab):
    gold = instance.gold_ids
    if not gold:
        raise ShapeError('mi_adaptability: instance {} has an empty gold answer'.format(instance.id))
    if config.mi_probe == 'forced_continuation':
        return _forced_continuation(model, trace.token_ids.tolist(), start, stop, gold, vocab.ans_id)
    h = nf.slice_range(trace.hidden_states, start, stop)
    return model.answer_logprobs_from_states(h, gold).detach().numpy().copy()


@torch.no_grad()
def mi_adaptability(model, instance, k, config: WeightingConfig, vocab, trace=None):
    """
    :param model: ``StudentModel``
    :param instance: 已 tokenize 的 ``Instance``
    :param k: rationale 下标
    :param trace: 可选, 该分支已有的 ``ForwardTrace``
    :return: (S_MI, MiTrace)
    """
    ids, (start, stop) = instance.sequence(k, vocab)
    if trace is None:
        trace = model(ids)
    i_proxy = i_proxy_from_trace(model, trace, instance, start, stop, config, vocab)
    tokens = ids[start:stop]
    thinking = [vocab.is_thinking(t) for t in tokens]
    return mi_from_trace(i_proxy, thinking, config.epsilon_mask, token_ids=tokens)
