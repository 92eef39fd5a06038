import abc

import torch
from torch import nn

from compact.base.connection.lora import LoRALinear


class BaseModule(nn.Module, abc.ABC):
    """
    学生模型的抽象类, 所有的学生模型都要继承这个类, 以实现一些基础方法
    """

    def adapters(self):
        """
        获取所有的 adapter 模块
        :return: (name, LoRALinear) 列表
        """
        return [(name, mod) for name, mod in self.named_modules() if isinstance(mod, LoRALinear)]

    def trainable_parameters(self):
        """
        获取需要梯度的参数, 顺序与 ``named_parameters`` 一致
        """
        return [p for p in self.parameters() if p.requires_grad]

    def named_trainable_parameters(self):
        return [(n, p) for n, p in self.named_parameters() if p.requires_grad]

    def freeze_base(self):
        """
        冻结除 adapter 因子以外的所有参数
        :return:
        """
        for name, p in self.named_parameters():
            p.requires_grad = 'lora_' in name

    def zero_adapters(self):
        """
        将所有 adapter 的增量置零, 之后的前向与 base-only 模型一致
        """
        with torch.no_grad():
            for _, mod in self.adapters():
                mod.lora_B.zero_()

    @abc.abstractmethod
    def forward(self, token_ids, capture_all_layers=False):
        pass
