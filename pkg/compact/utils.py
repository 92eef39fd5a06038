import os
import random
import hashlib
import json
import numpy as np
import torch


def setup_seed(seed):
    """
    为CPU，numpy，python设置随机数种子，并禁止hash随机化
    :param seed: seed value
    :return:
    """
    torch.manual_seed(seed)
    np.random.seed(seed % (2 ** 32))
    random.seed(seed)

    torch.backends.cudnn.benchmark = False

    torch.backends.cudnn.deterministic = True

    os.environ['PYTHONHASHSEED'] = str(seed)


def derive_seed(seed, *keys):
    """
    由 (seed, keys...) 稳定地派生子种子, 与进程和 hash 随机化无关
    :param seed: 全局种子
    :param keys: 子命令名, instance id 等
    :return: 非负的 63 位整数
    """
    text = '/'.join([str(seed)] + [str(k) for k in keys])
    digest = hashlib.sha256(text.encode('utf-8')).digest()
    return int.from_bytes(digest[:8], 'little') & ((1 << 63) - 1)


def stable_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(',', ':'), ensure_ascii=False)


def config_hash(obj):
    """
    配置的 sha256, 基于 key 排序后的 JSON
    """
    return hashlib.sha256(stable_json(obj).encode('utf-8')).hexdigest()


class AverageMeter(object):
    def __init__(self):
        self.reset()

    def reset(self):
        self.avg = 0
        self.sum = 0
        self.cnt = 0

    def update(self, val, n=1):
        self.sum += val * n
        self.cnt += n
        self.avg = self.sum / self.cnt


def worker_count(default=None):
    """
    读取 ``COMPACT_THREADS``, 未设置时使用可用核数
    """
    value = os.environ.get('COMPACT_THREADS')
    if value:
        try:
            n = int(value)
        except ValueError:
            n = 0
        if n > 0:
            return n
    if default is not None:
        return default
    return os.cpu_count() or 1
