import torch

from compact.exceptions import ShapeError
from compact.base.numerics import functional as nf


def rationale_nll(logits, ids, start, stop, reduction='sum'):
    """
    rationale 区间 [start, stop) 上 teacher-forcing 的负对数似然, 问题部分不计入
    """
    if stop <= start or start < 1:
        raise ShapeError('rationale_nll: empty rationale range [{}, {})'.format(start, stop))
    targets = torch.as_tensor(ids[start:stop], dtype=torch.long)
    return nf.cross_entropy(nf.slice_range(logits, start - 1, stop - 1), targets, reduction=reduction)


@torch.no_grad()
def difficulty(model, instance, k, vocab, trace=None):
    """
    S_PPL = -(1/T_k) sum_t log P(y_t | x, y_<t), T_k 包含末尾的 EOS
    """
    ids, (start, stop) = instance.sequence(k, vocab)
    if trace is None:
        trace = model(ids)
    return float(rationale_nll(trace.logits, ids, start, stop, reduction='mean'))
