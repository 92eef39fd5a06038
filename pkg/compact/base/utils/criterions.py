from dataclasses import dataclass, asdict, fields

import torch

from compact.exceptions import ConfigError, ShapeError, VocabularyError
from compact.base.numerics import functional as nf
from compact.base.scoring.difficulty import rationale_nll

SYMMETRIZATIONS = ('symmetric_mean', 'forward_only')


@dataclass
class LossConfig:
    """
    :param lambda_mcon: 一致性正则的系数 lambda
    :param mcon_symmetrization: ``symmetric_mean`` 为 0.5 (KL(p||q) + KL(q||p)), ``forward_only`` 为 KL(p||q)
    """
    lambda_mcon: float = 0.1
    mcon_symmetrization: str = 'symmetric_mean'

    def validate(self):
        if self.lambda_mcon < 0:
            raise ConfigError('loss.lambda_mcon', 'must be non-negative, got {}'.format(self.lambda_mcon))
        if self.mcon_symmetrization not in SYMMETRIZATIONS:
            raise ConfigError('loss.mcon_symmetrization', 'expected one of {}, got {!r}'.format(
                SYMMETRIZATIONS, self.mcon_symmetrization))
        return self

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        for key in data:
            if key not in known:
                raise ConfigError('loss.' + key, 'unknown key')
        return cls(**data)


@dataclass
class BranchLossReport:
    teacher_id: str
    l_sft: float
    l_mcon: float
    l_total: float


def sft_loss(model, instance, k, vocab):
    """
    y_k 在给定 x 时的 token 求和负对数似然, 问题部分被屏蔽
    """
    ids, (start, stop) = instance.sequence(k, vocab)
    return rationale_nll(model(ids).logits, ids, start, stop, reduction='sum')


def answer_log_distribution(model, instance, k, vocab):
    """
    以 x 与 y_k 直到 ``####`` 为前缀, teacher-forcing gold 答案, 给出答案每个位置的 log 概率
    :return: [|gold|, vocab_size]
    """
    r = instance.rationales[k]
    if r.answer_span[0] <= 0 or not instance.gold_ids:
        raise VocabularyError('instance {}: answer span of teacher {!r} is not located'.format(
            instance.id, r.teacher_id))
    prefix = vocab.frame_prompt(instance.question_ids) + r.token_ids[:r.marker_index + 1]
    logits = model(prefix + list(instance.gold_ids)).logits
    g = len(instance.gold_ids)
    return nf.log_softmax(nf.slice_range(logits, len(prefix) - 1, len(prefix) - 1 + g), dim=-1)


def answer_distribution(model, instance, k, vocab):
    return torch.exp(answer_log_distribution(model, instance, k, vocab))


def answer_divergence(log_p, log_q, symmetrization='symmetric_mean'):
    """
    答案各位置上散度的平均
    """
    if log_p.shape != log_q.shape:
        raise ShapeError('mcon: answer distributions {} and {} differ in shape'.format(
            tuple(log_p.shape), tuple(log_q.shape)))
    forward = nf.reduce_mean(nf.kl_div(log_p, log_q))
    if symmetrization == 'forward_only':
        return forward
    return 0.5 * (forward + nf.reduce_mean(nf.kl_div(log_q, log_p)))


def _mcon_from_logs(logs, k, alpha, config: LossConfig):
    total = torch.zeros((), dtype=nf.DTYPE)
    for j, log_q in enumerate(logs):
        if j == k:
            continue
        total = total + float(alpha[j]) * answer_divergence(logs[k], log_q, config.mcon_symmetrization)
    return total


def mcon_loss(model, instance, k, alpha, config: LossConfig, vocab):
    """
    sum_{j != k} alpha_j D(P_a^(k) || P_a^(j)), alpha 视为常数
    """
    if instance.K < 2:
        raise ShapeError('mcon_loss: instance {} has K={}, need at least 2'.format(instance.id, instance.K))
    if len(alpha) != instance.K:
        raise ShapeError('mcon_loss: {} weights for {} branches'.format(len(alpha), instance.K))
    logs = [answer_log_distribution(model, instance, j, vocab) for j in range(instance.K)]
    return _mcon_from_logs(logs, k, alpha, config)


def branch_terms(model, instance, vocab):
    """
    每个分支一次 SFT 前向与一次答案前向
    :return: (sft 列表, 答案 log 分布列表)
    """
    sfts = [sft_loss(model, instance, k, vocab) for k in range(instance.K)]
    logs = [answer_log_distribution(model, instance, k, vocab) for k in range(instance.K)]
    return sfts, logs


def branch_loss(model, instance, k, alpha, config: LossConfig, vocab, terms=None):
    """
    L_k = L_SFT + lambda * L_MCon
    :return: (可微标量, ``BranchLossReport``)
    """
    sfts, logs = terms if terms is not None else branch_terms(model, instance, vocab)
    l_sft = sfts[k]
    if instance.K >= 2:
        if len(alpha) != instance.K:
            raise ShapeError('branch_loss: {} weights for {} branches'.format(len(alpha), instance.K))
        l_mcon = _mcon_from_logs(logs, k, alpha, config)
    else:
        l_mcon = torch.zeros((), dtype=nf.DTYPE)
    total = l_sft + config.lambda_mcon * l_mcon
    report = BranchLossReport(teacher_id=instance.rationales[k].teacher_id, l_sft=float(l_sft),
                              l_mcon=float(l_mcon), l_total=float(total))
    return total, report


def fused_loss(model, instance, bundle, config: LossConfig, vocab):
    """
    L_Final = sum_k alpha_k L_k, alpha 不参与求导
    :return: (可微标量, ``BranchLossReport`` 列表)
    """
    alpha = [float(a) for a in bundle.alpha]
    if len(alpha) != instance.K:
        raise ShapeError('fused_loss: bundle has {} weights, instance {} has {} branches'.format(
            len(alpha), instance.id, instance.K))
    terms = branch_terms(model, instance, vocab)
    total = torch.zeros((), dtype=nf.DTYPE)
    reports = []
    for k in range(instance.K):
        loss_k, report = branch_loss(model, instance, k, alpha, config, vocab, terms=terms)
        total = total + alpha[k] * loss_k
        reports.append(report)
    return total, reports


class FusedDistillLoss(torch.nn.Module):
    """
    以模块形式包装 ``fused_loss``, 便于在训练循环中替换
    :param config: ``LossConfig``
    :param vocab: ``Vocabulary``
    """

    def __init__(self, config: LossConfig, vocab):
        super(FusedDistillLoss, self).__init__()
        self.config = config
        self.vocab = vocab

    def forward(self, model, instance, bundle):
        return fused_loss(model, instance, bundle, self.config, self.vocab)
