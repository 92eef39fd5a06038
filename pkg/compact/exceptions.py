"""
compact 中所有可预期错误的基类与子类
"""


class CompactError(Exception):
    """
    compact 中所有错误的基类, CLI 据此返回 exit code 2
    """


class ShapeError(CompactError, ValueError):
    """
    张量形状不匹配, 错误信息中包含出错的形状
    """


class CheckpointError(CompactError):
    """
    checkpoint 文件损坏, 版本不符或形状不符
    """


class VocabularyError(CompactError, ValueError):
    """
    词表之外的词, 或答案标记的数量不为 1
    """


class DatasetError(CompactError):
    """
    数据集行不合法
    :param message: 错误描述
    :param row: 出错的行号(从 1 开始), 未知时为 ``None``
    """

    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = 'row {}: {}'.format(row, message)
        super().__init__(message)


class ConfigError(CompactError):
    """
    配置不合法, ``key`` 为点分路径, 例如 ``trainer.epochs``
    """

    def __init__(self, key, message):
        self.key = key
        super().__init__('{}: {}'.format(key, message))


class DivergenceError(CompactError):
    """
    训练中出现非有限的 loss
    :param step: 出错时的优化步
    :param last_losses: 最近的有限 loss
    """

    def __init__(self, step, last_losses):
        self.step = step
        self.last_losses = list(last_losses)
        super().__init__('non-finite loss at step {} (last finite losses: {})'.format(
            step, ', '.join('{:.6g}'.format(x) for x in self.last_losses) or 'none'))
