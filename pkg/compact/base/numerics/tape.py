from contextvars import ContextVar
from dataclasses import dataclass

import torch

from compact.exceptions import CompactError, ShapeError

_ACTIVE_TAPE = ContextVar('compact_active_tape', default=None)


@dataclass(frozen=True)
class TapeNode:
    """
    tape 上的一个原语记录
    :param index: 执行顺序
    :param op: 原语名称
    :param input_shapes: 输入形状
    :param output_shape: 输出形状
    """
    index: int
    op: str
    input_shapes: tuple
    output_shape: tuple


class ComputationTape(object):
    """
    define-by-run 的计算记录. 反向传播所需的中间激活由 torch 的 autograd graph 保存,
    tape 只按执行顺序记录原语, 因此每个节点的输入总在它之前.
    每个线程 / context 有自己的 active tape, 不同的 tape 之间不共享任何张量.

    使用方式::

        with ComputationTape() as tape:
            loss = model_loss(...)
            backward(loss, tape)
    """

    def __init__(self):
        self.nodes = []
        self._token = None

    def record(self, op, inputs, output):
        shapes = tuple(tuple(t.shape) for t in inputs if isinstance(t, torch.Tensor))
        self.nodes.append(TapeNode(len(self.nodes), op, shapes, tuple(output.shape)))

    def clear(self):
        self.nodes = []

    def ops(self):
        return [node.op for node in self.nodes]

    def __len__(self):
        return len(self.nodes)

    def __enter__(self):
        self._token = _ACTIVE_TAPE.set(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _ACTIVE_TAPE.reset(self._token)
        self._token = None
        return False


def current_tape():
    return _ACTIVE_TAPE.get()


def record(op, inputs, output):
    """
    当任一输入需要梯度且梯度开启时, 把原语记录到当前 tape
    """
    tape = _ACTIVE_TAPE.get()
    if tape is None or not torch.is_grad_enabled():
        return
    if any(isinstance(t, torch.Tensor) and t.requires_grad for t in inputs):
        tape.record(op, inputs, output)


def backward(loss, tape=None):
    """
    对标量 loss 做反向传播, 为所有参与计算且 ``requires_grad`` 的叶子填充 ``grad``, 结束后清空 tape
    :param loss: 标量张量
    :param tape: 记录该 loss 的 tape, 默认使用当前 active tape
    :return: None
    """
    if not isinstance(loss, torch.Tensor) or loss.numel() != 1:
        shape = tuple(loss.shape) if isinstance(loss, torch.Tensor) else type(loss).__name__
        raise ShapeError('backward expects a scalar loss, got shape {}'.format(shape))
    if tape is None:
        tape = current_tape()
    if tape is not None and len(tape) == 0:
        raise CompactError('backward called on an empty tape')
    if not loss.requires_grad:
        raise CompactError('loss does not depend on any tensor that requires grad')
    loss.reshape(()).backward()
    if tape is not None:
        tape.clear()
