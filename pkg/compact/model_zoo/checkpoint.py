"""
checkpoint 格式: magic ``CPKT``, u32 版本号, u32 长度 + JSON 配置,
u32 参数个数, 然后每个参数: u32 名称长度 + utf-8 名称, u32 维数, 每维 u32, 小端 f64 数据
"""
import io
import json
import struct
from pathlib import Path

import numpy as np
import torch

from compact.exceptions import CheckpointError
from compact.model_zoo.student import ModelConfig, StudentModel

MAGIC = b'CPKT'
FORMAT_VERSION = 1


def _u32(buf, value):
    buf.write(struct.pack('<I', value))


def save_checkpoint(model: StudentModel):
    """
    :return: bytes
    """
    buf = io.BytesIO()
    buf.write(MAGIC)
    _u32(buf, FORMAT_VERSION)
    cfg = json.dumps(model.config.to_dict(), sort_keys=True).encode('utf-8')
    _u32(buf, len(cfg))
    buf.write(cfg)
    params = list(model.named_parameters())
    _u32(buf, len(params))
    for name, p in params:
        raw = name.encode('utf-8')
        _u32(buf, len(raw))
        buf.write(raw)
        _u32(buf, p.dim())
        for d in p.shape:
            _u32(buf, d)
        buf.write(p.detach().cpu().numpy().astype('<f8').tobytes())
    return buf.getvalue()


class _Reader(object):
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.data):
            raise CheckpointError('truncated checkpoint while reading {}'.format(what))
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self, what):
        return struct.unpack('<I', self.take(4, what))[0]


def load_checkpoint(data, config: ModelConfig = None):
    """
    :param data: ``save_checkpoint`` 的输出
    :param config: 期望的配置, 给出时与 checkpoint 中的配置逐项比较
    :return: ``StudentModel``
    """
    reader = _Reader(bytes(data))
    if reader.take(4, 'magic') != MAGIC:
        raise CheckpointError('bad magic bytes, not a CPKT checkpoint')
    version = reader.u32('version')
    if version != FORMAT_VERSION:
        raise CheckpointError('unsupported format version {} (expected {})'.format(version, FORMAT_VERSION))
    stored = ModelConfig.from_dict(json.loads(reader.take(reader.u32('config length'), 'config').decode('utf-8')))
    if config is not None:
        diffs = ['{}: checkpoint has {}, expected {}'.format(k, v, getattr(config, k))
                 for k, v in stored.to_dict().items() if getattr(config, k) != v]
        if diffs:
            raise CheckpointError('config mismatch: ' + '; '.join(diffs))
    model = StudentModel(stored)
    params = dict(model.named_parameters())
    count = reader.u32('parameter count')
    if count != len(params):
        raise CheckpointError('checkpoint holds {} parameters, model expects {}'.format(count, len(params)))
    with torch.no_grad():
        for _ in range(count):
            name = reader.take(reader.u32('name length'), 'name').decode('utf-8')
            shape = tuple(reader.u32('dim') for _ in range(reader.u32('ndim')))
            if name not in params:
                raise CheckpointError('unknown parameter {}'.format(name))
            expected = tuple(params[name].shape)
            if shape != expected:
                raise CheckpointError('parameter {}: checkpoint shape {}, model shape {}'.format(name, shape, expected))
            n = int(np.prod(shape)) if shape else 1
            values = np.frombuffer(reader.take(8 * n, name), dtype='<f8').reshape(shape)
            params[name].copy_(torch.from_numpy(values.astype(np.float64)))
    if reader.pos != len(reader.data):
        raise CheckpointError('{} trailing bytes after the last parameter'.format(len(reader.data) - reader.pos))
    return model


def save_checkpoint_file(model, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(save_checkpoint(model))
    return path


def load_checkpoint_file(path, config: ModelConfig = None):
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise CheckpointError('cannot read checkpoint {}: {}'.format(path, e))
    return load_checkpoint(data, config)
