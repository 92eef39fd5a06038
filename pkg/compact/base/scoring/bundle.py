import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np
import torch

from compact.exceptions import CompactError
from compact.utils import worker_count
from compact.base.scoring.fusion import WeightingConfig, fuse_weights
from compact.base.scoring.adaptability import MiTrace, mi_adaptability
from compact.base.scoring.consensus import consensus
from compact.base.scoring.difficulty import difficulty

logger = logging.getLogger(__name__)


@dataclass
class ScoreBundle:
    """
    一个 instance 上每个教师的得分与权重
    """
    instance_id: str
    teacher_ids: List[str]
    s_mi: np.ndarray
    s_cons: np.ndarray
    s_ppl: np.ndarray
    score: np.ndarray
    alpha: np.ndarray
    attention: Optional[np.ndarray] = None
    traces: List[MiTrace] = field(default_factory=list, repr=False)

    @property
    def K(self):
        return len(self.alpha)

    def check_simplex(self, tol=1e-9):
        alpha = self.alpha
        if not np.all(np.isfinite(alpha)) or np.any(alpha < 0) or abs(float(alpha.sum()) - 1.) > tol:
            raise CompactError('instance {}: alpha {} is not on the simplex'.format(self.instance_id, self.alpha))
        return self

    def with_alpha(self, alpha):
        """
        以给定的权重替换 alpha, 其余得分保留(用于 direct_average / single_teacher)
        """
        return replace(self, alpha=np.asarray(alpha, dtype=np.float64)).check_simplex()


@torch.no_grad()
def score_instance(model, instance, config: WeightingConfig, vocab):
    """
    对参数快照计算三项得分并融合为 alpha, 每个分支只做一次前向
    """
    outs = [model(instance.sequence(k, vocab)[0]) for k in range(instance.K)]
    s_mi, traces = [], []
    for k in range(instance.K):
        value, trace = mi_adaptability(model, instance, k, config, vocab, trace=outs[k])
        s_mi.append(value)
        traces.append(trace)
    s_ppl = [difficulty(model, instance, k, vocab, trace=outs[k]) for k in range(instance.K)]
    if instance.K >= 2:
        s_cons, att = consensus(model, instance, vocab, traces=outs)
    else:
        s_cons, att = np.zeros(1), np.ones((1, 1))
    score, alpha = fuse_weights(s_mi, s_cons, s_ppl, config)
    return ScoreBundle(instance_id=instance.id, teacher_ids=instance.teacher_ids,
                       s_mi=np.asarray(s_mi), s_cons=np.asarray(s_cons), s_ppl=np.asarray(s_ppl),
                       score=score, alpha=alpha, attention=att, traces=traces)


def score_batch(model, instances, config: WeightingConfig, vocab, workers=None):
    """
    多线程地对同一参数快照上的一批 instance 打分, 结果顺序与输入一致
    """
    instances = list(instances)
    workers = min(workers or worker_count(), max(len(instances), 1))
    if workers <= 1:
        return [score_instance(model, inst, config, vocab) for inst in instances]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda inst: score_instance(model, inst, config, vocab), instances))
