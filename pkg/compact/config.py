"""
单个 JSON 配置文件, 分为 model / weighting / loss / trainer / data 五个部分,
``--set dot.key=value`` 在校验之前覆盖
"""
import json
from dataclasses import dataclass, field, asdict, fields
from pathlib import Path
from typing import List, Optional

from compact.exceptions import ConfigError
from compact.utils import config_hash
from compact.model_zoo.student import ModelConfig
from compact.base.scoring.fusion import WeightingConfig
from compact.base.utils.criterions import LossConfig
from compact.datasets.reasoning import TaskConfig, TeacherProfile, default_teachers
from compact.distill.trainer import TrainerConfig

SECTIONS = ('model', 'weighting', 'loss', 'trainer', 'data')
PROBES = ('ood', 'id')


@dataclass
class DataConfig:
    """
    :param train_path: 训练集 JSONL, 未给出时按 ``seed`` 生成
    :param probe: PCA 漂移使用的探针, ``ood`` 或 ``id``
    :param instance_id: mi-trace 导出的 instance, 默认训练集第一个
    :param ledger_path: weights-plot 读取的 ledger CSV
    """
    n_train: int = 200
    n_test: int = 50
    n_probe: int = 32
    seed: int = 0
    task: TaskConfig = field(default_factory=TaskConfig)
    teachers: List[TeacherProfile] = field(default_factory=default_teachers)
    train_path: Optional[str] = None
    test_path: Optional[str] = None
    probe: str = 'ood'
    instance_id: Optional[str] = None
    ledger_path: Optional[str] = None

    def validate(self):
        for name in ('n_train', 'n_test'):
            if getattr(self, name) < 1:
                raise ConfigError('data.' + name, 'must be positive, got {}'.format(getattr(self, name)))
        if self.n_probe < 3:
            raise ConfigError('data.n_probe', 'PCA needs at least 3 probes, got {}'.format(self.n_probe))
        if self.probe not in PROBES:
            raise ConfigError('data.probe', 'expected one of {}, got {!r}'.format(PROBES, self.probe))
        self.task.validate()
        if len(self.teachers) < 2:
            raise ConfigError('data.teachers', 'need at least 2 teacher profiles, got {}'.format(len(self.teachers)))
        if len({t.id for t in self.teachers}) != len(self.teachers):
            raise ConfigError('data.teachers', 'teacher ids must be distinct')
        for t in self.teachers:
            t.validate()
        return self

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        for key in data:
            if key not in known:
                raise ConfigError('data.' + key, 'unknown key')
        data = dict(data)
        if 'task' in data:
            if not isinstance(data['task'], dict):
                raise ConfigError('data.task', 'expected an object')
            data['task'] = TaskConfig.from_dict(data['task'])
        if 'teachers' in data:
            if not isinstance(data['teachers'], list) or not all(isinstance(t, dict) for t in data['teachers']):
                raise ConfigError('data.teachers', 'expected a list of objects')
            data['teachers'] = [TeacherProfile.from_dict(t) for t in data['teachers']]
        return cls(**data)


_SECTION_TYPES = {
    'model': ModelConfig,
    'weighting': WeightingConfig,
    'loss': LossConfig,
    'trainer': TrainerConfig,
    'data': DataConfig,
}


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    weighting: WeightingConfig = field(default_factory=WeightingConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    data: DataConfig = field(default_factory=DataConfig)
    seed: int = 0

    @classmethod
    def from_dict(cls, raw):
        """
        顶层的 ``seed`` 作为 model / trainer / data 三个部分未显式给出的 seed
        """
        if not isinstance(raw, dict):
            raise ConfigError('config', 'expected a JSON object at the top level')
        for key in raw:
            if key not in SECTIONS and key != 'seed':
                raise ConfigError(key, 'unknown section')
        seed = raw.get('seed', 0)
        if not isinstance(seed, int) or isinstance(seed, bool):
            raise ConfigError('seed', 'expected an integer, got {!r}'.format(seed))
        kwargs = {'seed': seed}
        for name in SECTIONS:
            section = raw.get(name, {})
            if not isinstance(section, dict):
                raise ConfigError(name, 'expected an object')
            section = dict(section)
            if name in ('model', 'trainer', 'data'):
                section.setdefault('seed', seed)
            try:
                kwargs[name] = _SECTION_TYPES[name].from_dict(section)
            except TypeError as e:
                raise ConfigError(name, str(e))
        return cls(**kwargs)

    def validate(self, vocab_size=None):
        if vocab_size is not None and self.model.vocab_size == 0:
            self.model.vocab_size = vocab_size
        if self.model.vocab_size != 0:
            self.model.validate()
        self.weighting.validate()
        self.loss.validate()
        self.trainer.validate()
        self.data.validate()
        return self

    def to_dict(self):
        out = {name: getattr(self, name).to_dict() for name in SECTIONS}
        out['seed'] = self.seed
        return out

    def hash(self):
        return config_hash(self.to_dict())


def parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(raw, overrides):
    """
    :param raw: 配置字典, 原地修改
    :param overrides: ``dot.key=value`` 列表, value 按 JSON 字面量解析, 失败时作为字符串
    """
    for item in overrides or ():
        if '=' not in item:
            raise ConfigError(item, 'override must look like dot.key=value')
        key, value = item.split('=', 1)
        parts = key.strip().split('.')
        if not all(parts):
            raise ConfigError(key, 'empty path component')
        node = raw
        for p in parts[:-1]:
            child = node.setdefault(p, {})
            if not isinstance(child, dict):
                raise ConfigError(key, '{!r} is not a section'.format(p))
            node = child
        node[parts[-1]] = parse_value(value)
    return raw


def load_config(path=None, overrides=None):
    raw = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text(encoding='utf-8'))
        except OSError as e:
            raise ConfigError('config', 'cannot read {}: {}'.format(path, e))
        except json.JSONDecodeError as e:
            raise ConfigError('config', 'invalid JSON in {}: {}'.format(path, e))
    apply_overrides(raw, overrides)
    return RunConfig.from_dict(raw)
