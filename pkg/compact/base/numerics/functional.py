"""
稠密张量原语. 所有原语在 float64 上计算, 形状不匹配时抛出 ``ShapeError`` 并给出形状,
当任一输入需要梯度时记录到当前的 ``ComputationTape``.
"""
import torch

from compact.exceptions import ShapeError
from compact.base.numerics import autograd
from compact.base.numerics.tape import record

DTYPE = torch.float64


def tensor(data, requires_grad=False):
    """
    构造 float64 张量
    """
    return torch.tensor(data, dtype=DTYPE, requires_grad=requires_grad)


def _shape(x):
    return tuple(x.shape) if isinstance(x, torch.Tensor) else ()


def _broadcast(op, a, b):
    try:
        torch.broadcast_shapes(_shape(a), _shape(b))
    except RuntimeError:
        raise ShapeError('{}: shapes {} and {} are not broadcastable'.format(op, _shape(a), _shape(b)))


def _dim(op, x, dim):
    if not -x.dim() <= dim < max(x.dim(), 1):
        raise ShapeError('{}: dim {} out of range for shape {}'.format(op, dim, _shape(x)))


def matmul(a, b):
    if a.dim() == 0 or b.dim() == 0:
        raise ShapeError('matmul: scalar operand, shapes {} and {}'.format(_shape(a), _shape(b)))
    inner_b = b.shape[0] if b.dim() == 1 else b.shape[-2]
    if a.shape[-1] != inner_b:
        raise ShapeError('matmul: shapes {} and {} do not conform'.format(_shape(a), _shape(b)))
    out = torch.matmul(a, b)
    record('matmul', (a, b), out)
    return out


def add(a, b):
    _broadcast('add', a, b)
    out = a + b
    record('add', (a, b), out)
    return out


def mul(a, b):
    _broadcast('mul', a, b)
    out = a * b
    record('mul', (a, b), out)
    return out


def log_softmax(x, dim=-1):
    _dim('log_softmax', x, dim)
    out = x - torch.logsumexp(x, dim=dim, keepdim=True)
    record('log_softmax', (x,), out)
    return out


def softmax(x, dim=-1):
    _dim('softmax', x, dim)
    out = torch.exp(x - torch.logsumexp(x, dim=dim, keepdim=True))
    record('softmax', (x,), out)
    return out


def relu(x):
    out = torch.relu(x)
    record('relu', (x,), out)
    return out


def layer_norm(x, weight, bias, eps=1e-5):
    if _shape(weight) != _shape(x)[-1:] or _shape(bias) != _shape(x)[-1:]:
        raise ShapeError('layer_norm: input {} with weight {} and bias {}'.format(
            _shape(x), _shape(weight), _shape(bias)))
    out = torch.nn.functional.layer_norm(x, (x.shape[-1],), weight, bias, eps)
    record('layer_norm', (x, weight, bias), out)
    return out


def embedding_lookup(weight, ids):
    """
    :param weight: [num_embeddings, dim]
    :param ids: LongTensor, 任意形状
    """
    if weight.dim() != 2:
        raise ShapeError('embedding_lookup: weight must be 2-D, got {}'.format(_shape(weight)))
    if ids.numel() and (int(ids.min()) < 0 or int(ids.max()) >= weight.shape[0]):
        raise ShapeError('embedding_lookup: ids in [{}, {}] outside table of shape {}'.format(
            int(ids.min()), int(ids.max()), _shape(weight)))
    out = weight[ids]
    record('embedding_lookup', (weight,), out)
    return out


def cross_entropy(logits, targets, reduction='sum'):
    """
    :param logits: [N, V]
    :param targets: [N] LongTensor
    :param reduction: ``sum``, ``mean`` 或 ``none``
    """
    if logits.dim() != 2 or targets.dim() != 1 or logits.shape[0] != targets.shape[0]:
        raise ShapeError('cross_entropy: logits {} and targets {} do not conform'.format(
            _shape(logits), _shape(targets)))
    out = autograd.cross_entropy.apply(logits, targets)
    if reduction == 'sum':
        out = out.sum()
    elif reduction == 'mean':
        out = out.mean()
    elif reduction != 'none':
        raise ValueError('unknown reduction {}'.format(reduction))
    record('cross_entropy', (logits,), out)
    return out


def kl_div(log_p, log_q):
    """
    逐行 KL(p || q), 输入为 log 概率, 返回形状为 ``log_p.shape[:-1]``
    """
    if _shape(log_p) != _shape(log_q):
        raise ShapeError('kl_div: shapes {} and {} differ'.format(_shape(log_p), _shape(log_q)))
    out = autograd.kl_div.apply(log_p, log_q)
    record('kl_div', (log_p, log_q), out)
    return out


def transpose(x, dim0=-2, dim1=-1):
    if x.dim() < 2:
        raise ShapeError('transpose: need at least 2 dims, got {}'.format(_shape(x)))
    out = x.transpose(dim0, dim1)
    record('transpose', (x,), out)
    return out


def slice_range(x, start, stop, dim=0):
    _dim('slice', x, dim)
    size = x.shape[dim]
    if not 0 <= start <= stop <= size:
        raise ShapeError('slice: range [{}, {}) outside dim {} of shape {}'.format(start, stop, dim, _shape(x)))
    out = x.narrow(dim, start, stop - start)
    record('slice', (x,), out)
    return out


def concat(tensors, dim=0):
    tensors = list(tensors)
    if not tensors:
        raise ShapeError('concat: nothing to concatenate')
    ref = _shape(tensors[0])
    d = dim % len(ref)
    for t in tensors[1:]:
        s = _shape(t)
        if len(s) != len(ref) or any(a != b for i, (a, b) in enumerate(zip(s, ref)) if i != d):
            raise ShapeError('concat: shapes {} do not agree outside dim {}'.format([_shape(x) for x in tensors], dim))
    out = torch.cat(tensors, dim=dim)
    record('concat', tensors, out)
    return out


def reduce_mean(x, dim=None):
    out = x.mean() if dim is None else x.mean(dim=dim)
    record('mean', (x,), out)
    return out


def reduce_sum(x, dim=None):
    out = x.sum() if dim is None else x.sum(dim=dim)
    record('sum', (x,), out)
    return out


def masked_fill(x, mask, value):
    if _shape(mask) != _shape(x)[-mask.dim():]:
        raise ShapeError('masked_fill: mask {} does not match input {}'.format(_shape(mask), _shape(x)))
    out = x.masked_fill(mask, value)
    record('masked_fill', (x,), out)
    return out


def logsumexp(x, dim=-1):
    out = torch.logsumexp(x, dim=dim)
    record('logsumexp', (x,), out)
    return out
