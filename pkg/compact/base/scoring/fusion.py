from dataclasses import dataclass, asdict, fields

import numpy as np
from scipy.special import softmax
from scipy.stats import zscore as _zscore

from compact.exceptions import ConfigError, ShapeError

MI_PROBES = ('single_state', 'forced_continuation')


@dataclass
class WeightingConfig:
    """
    动态权重的配置
    :param beta1: S_MI 的系数
    :param beta2: S_cons 的系数
    :param beta3: S_PPL 的系数(作为惩罚项)
    :param tau: softmax 温度
    :param epsilon_mask: 非思考词位置的掩码权重
    :param zscore_floor: 标准差低于该值时归一化结果为全零
    :param mi_probe: ``single_state`` 或 ``forced_continuation``
    """
    beta1: float = 1.
    beta2: float = 1.
    beta3: float = 1.
    tau: float = 0.5
    epsilon_mask: float = 0.1
    zscore_floor: float = 1e-9
    mi_probe: str = 'single_state'

    def validate(self):
        for name in ('beta1', 'beta2', 'beta3'):
            if getattr(self, name) < 0:
                raise ConfigError('weighting.' + name, 'must be non-negative, got {}'.format(getattr(self, name)))
        if not self.tau > 0:
            raise ConfigError('weighting.tau', 'must be positive, got {}'.format(self.tau))
        if not 0 < self.epsilon_mask <= 1:
            raise ConfigError('weighting.epsilon_mask', 'must be in (0, 1], got {}'.format(self.epsilon_mask))
        if not self.zscore_floor > 0:
            raise ConfigError('weighting.zscore_floor', 'must be positive, got {}'.format(self.zscore_floor))
        if self.mi_probe not in MI_PROBES:
            raise ConfigError('weighting.mi_probe', 'expected one of {}, got {!r}'.format(MI_PROBES, self.mi_probe))
        return self

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        for key in data:
            if key not in known:
                raise ConfigError('weighting.' + key, 'unknown key')
        return cls(**data)


def zscore(values, floor=1e-9):
    """
    教师之间的 z-score (总体标准差), 标准差小于 ``floor`` 时返回全零
    """
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0 or np.std(values) < floor:
        return np.zeros_like(values)
    return _zscore(values, ddof=0)


def fuse_weights(s_mi, s_cons, s_ppl, config: WeightingConfig = None):
    """
    Score_k = b1 N(S_MI) + b2 N(S_cons) - b3 N(S_PPL), alpha = softmax(Score / tau)
    :return: (score, alpha)
    """
    config = config or WeightingConfig()
    s_mi, s_cons, s_ppl = (np.asarray(s, dtype=np.float64).reshape(-1) for s in (s_mi, s_cons, s_ppl))
    if not len(s_mi) == len(s_cons) == len(s_ppl):
        raise ShapeError('fuse_weights: score vectors have lengths {}, {} and {}'.format(
            len(s_mi), len(s_cons), len(s_ppl)))
    if len(s_mi) == 0:
        raise ShapeError('fuse_weights: need at least one teacher')
    floor = config.zscore_floor
    score = config.beta1 * zscore(s_mi, floor) + config.beta2 * zscore(s_cons, floor) \
        - config.beta3 * zscore(s_ppl, floor)
    alpha = softmax(score / config.tau)
    return score, alpha
