import math

import torch
from torch import nn

from compact.base.numerics import functional as nf
from compact.base.connection.layer import Linear


class LoRALinear(nn.Module):
    """
    在冻结的 ``Linear`` 上加入低秩 adapter: y = W x + b + s * B A x, s = alpha / r
    A 以 kaiming-uniform (a = sqrt(5)) 初始化, B 为零, 因此初始时输出与 base 完全相同
    :param base: 被包装的 ``Linear``
    :param r: 秩
    :param alpha: 缩放系数的分子, 默认 ``2.``
    :param generator: A 初始化使用的 ``torch.Generator``
    """

    def __init__(self, base: Linear, r, alpha=2., generator=None):
        super().__init__()
        assert r > 0, 'r must be greater than 0'
        self.base = base
        self.r = r
        self.scaling = alpha / r
        bound = 1. / math.sqrt(base.in_features)
        self.lora_A = nn.Parameter(
            (torch.rand(r, base.in_features, generator=generator, dtype=nf.DTYPE) * 2. - 1.) * bound)
        self.lora_B = nn.Parameter(torch.zeros(base.out_features, r, dtype=nf.DTYPE))
        for p in self.base.parameters():
            p.requires_grad = False

    @property
    def in_features(self):
        return self.base.in_features

    @property
    def out_features(self):
        return self.base.out_features

    def forward(self, x):
        base = self.base(x)
        delta = nf.matmul(nf.matmul(x, nf.transpose(self.lora_A)), nf.transpose(self.lora_B))
        return nf.add(base, nf.mul(delta, self.scaling))

    def effective_weight(self):
        """
        把 adapter 的增量折叠进权重
        """
        with torch.no_grad():
            return self.base.weight + self.scaling * (self.lora_B @ self.lora_A)


def find_parent_and_attr(model, module_name: str):
    parts = module_name.split('.')
    parent = model
    for p in parts[:-1]:
        parent = parent[int(p)] if p.isdigit() else getattr(parent, p)
    return parent, parts[-1]


def apply_lora_to_linear_modules(model: nn.Module, target_modules, r, alpha=2., generator=None):
    """
    把名称中包含 ``target_modules`` 任一项的 ``Linear`` 替换为 ``LoRALinear``
    :return: 被替换的模块名称列表
    """
    names = [name for name, mod in model.named_modules()
             if isinstance(mod, Linear) and any(tm in name for tm in target_modules)]
    for name in names:
        parent, attr = find_parent_and_attr(model, name)
        setattr(parent, attr, LoRALinear(getattr(parent, attr), r=r, alpha=alpha, generator=generator))
    return names
