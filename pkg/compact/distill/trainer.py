"""
蒸馏训练循环: 对每个 instance 实时打分, 构造融合损失, 反向传播, 裁剪梯度并更新参数
"""
import logging
import math
from collections import deque
from dataclasses import dataclass, asdict, fields, replace
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
import torch
from tqdm import tqdm

from compact.exceptions import ConfigError, DatasetError, DivergenceError, CompactError
from compact.utils import derive_seed, AverageMeter
from compact.base.numerics import ComputationTape, backward
from compact.base.scoring import WeightingConfig, score_batch
from compact.base.utils.criterions import LossConfig, fused_loss, branch_loss, branch_terms
from compact.distill.ledger import MetricLedger
from compact.model_zoo.checkpoint import save_checkpoint_file

logger = logging.getLogger(__name__)

MODES = ('compact', 'direct_average', 'single_teacher', 'ablate_mi', 'ablate_cons', 'ablate_ppl')
FUSIONS = ('objective', 'task_vectors')
SCORE_REFRESH = ('visit', 'epoch')
EVAL_MAX_NEW_TOKENS = 256


@dataclass
class TrainerConfig:
    """
    :param mode: ``compact``, ``direct_average``, ``single_teacher``, ``ablate_mi``, ``ablate_cons`` 或 ``ablate_ppl``
    :param teacher: ``single_teacher`` 模式下使用的教师 id
    :param fusion: ``objective`` 在一个 tape 上对 sum_k alpha_k L_k 求导,
        ``task_vectors`` 逐分支求梯度后按 alpha 加权求和
    :param score_refresh: ``visit`` 每次访问都重新打分, ``epoch`` 每个 epoch 开始时打分一次
    :param max_steps: 优化步数上限, ``None`` 表示不限
    :param workers: 打分线程数, ``None`` 时读取 ``COMPACT_THREADS``
    """
    learning_rate: float = 1e-3
    epochs: int = 8
    batch_size: int = 4
    betas: Tuple[float, float] = (0.9, 0.999)
    weight_decay: float = 0.01
    mode: str = 'compact'
    teacher: Optional[str] = None
    seed: int = 0
    grad_clip: float = 1.
    grad_accum_steps: int = 1
    fusion: str = 'objective'
    score_refresh: str = 'visit'
    max_steps: Optional[int] = None
    workers: Optional[int] = None
    checkpoint_dir: Optional[str] = None
    checkpoint: Optional[str] = None
    init_checkpoint: Optional[str] = None
    tensorboard_dir: Optional[str] = None
    progress: bool = True

    def __post_init__(self):
        self.betas = tuple(self.betas)

    def validate(self):
        if not self.learning_rate > 0:
            raise ConfigError('trainer.learning_rate', 'must be positive, got {}'.format(self.learning_rate))
        if self.epochs < 0:
            raise ConfigError('trainer.epochs', 'must be non-negative, got {}'.format(self.epochs))
        if self.batch_size < 1:
            raise ConfigError('trainer.batch_size', 'must be positive, got {}'.format(self.batch_size))
        if len(self.betas) != 2 or not all(0 <= b < 1 for b in self.betas):
            raise ConfigError('trainer.betas', 'expected two values in [0, 1), got {}'.format(list(self.betas)))
        if self.weight_decay < 0:
            raise ConfigError('trainer.weight_decay', 'must be non-negative, got {}'.format(self.weight_decay))
        if self.mode not in MODES:
            raise ConfigError('trainer.mode', 'expected one of {}, got {!r}'.format(MODES, self.mode))
        if self.mode == 'single_teacher' and not self.teacher:
            raise ConfigError('trainer.teacher', 'single_teacher mode needs a teacher id')
        if not self.grad_clip > 0:
            raise ConfigError('trainer.grad_clip', 'must be positive, got {}'.format(self.grad_clip))
        if self.grad_accum_steps < 1:
            raise ConfigError('trainer.grad_accum_steps', 'must be positive, got {}'.format(self.grad_accum_steps))
        if self.fusion not in FUSIONS:
            raise ConfigError('trainer.fusion', 'expected one of {}, got {!r}'.format(FUSIONS, self.fusion))
        if self.score_refresh not in SCORE_REFRESH:
            raise ConfigError('trainer.score_refresh', 'expected one of {}, got {!r}'.format(
                SCORE_REFRESH, self.score_refresh))
        if self.max_steps is not None and self.max_steps < 0:
            raise ConfigError('trainer.max_steps', 'must be non-negative, got {}'.format(self.max_steps))
        if self.workers is not None and self.workers < 1:
            raise ConfigError('trainer.workers', 'must be positive, got {}'.format(self.workers))
        return self

    def to_dict(self):
        d = asdict(self)
        d['betas'] = list(self.betas)
        return d

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        for key in data:
            if key not in known:
                raise ConfigError('trainer.' + key, 'unknown key')
        return cls(**data)


def effective_weighting(config: TrainerConfig, weighting: WeightingConfig):
    """
    ablate_* 模式把对应的 beta 置零
    """
    if config.mode == 'ablate_mi':
        return replace(weighting, beta1=0.)
    if config.mode == 'ablate_cons':
        return replace(weighting, beta2=0.)
    if config.mode == 'ablate_ppl':
        return replace(weighting, beta3=0.)
    return weighting


def mode_weights(config: TrainerConfig, bundle):
    """
    得分始终记录, 权重按模式覆盖: direct_average 为均匀分布, single_teacher 为 one-hot
    """
    if config.mode == 'direct_average':
        return bundle.with_alpha(np.full(bundle.K, 1. / bundle.K))
    if config.mode == 'single_teacher':
        if config.teacher not in bundle.teacher_ids:
            raise DatasetError('instance {} has no rationale from teacher {!r}'.format(
                bundle.instance_id, config.teacher))
        alpha = np.zeros(bundle.K)
        alpha[bundle.teacher_ids.index(config.teacher)] = 1.
        return bundle.with_alpha(alpha)
    return bundle.check_simplex()


def _task_vector_step(model, params, instance, bundle, loss_config, vocab, scale):
    """
    逐分支求 grad L_k, 以 scale * alpha_k 加权累加到 ``p.grad``
    """
    alpha = [float(a) for a in bundle.alpha]
    total = 0.
    reports = []
    for k in range(instance.K):
        with ComputationTape():
            loss_k, report = branch_loss(model, instance, k, alpha, loss_config, vocab)
            grads = torch.autograd.grad(loss_k, params, allow_unused=True)
        for p, g in zip(params, grads):
            if g is None or alpha[k] == 0.:
                continue
            if p.grad is None:
                p.grad = torch.zeros_like(p)
            p.grad.add_(g, alpha=scale * alpha[k])
        total += alpha[k] * report.l_total
        reports.append(report)
    return total, reports


def _open_writer(log_dir):
    if not log_dir:
        return None
    from torch.utils.tensorboard import SummaryWriter
    return SummaryWriter(log_dir=log_dir)


def _write_checkpoint(model, config, epoch):
    if config.checkpoint_dir:
        path = Path(config.checkpoint_dir) / 'ckpt_epoch{}.bin'.format(epoch)
        save_checkpoint_file(model, path)
        logger.info('checkpoint written to %s', path)


def train(model, dataset, trainer_config: TrainerConfig, weighting_config: WeightingConfig,
          loss_config: LossConfig, vocab, ledger: MetricLedger = None):
    """
    :param model: ``StudentModel``, 原地更新
    :param dataset: 已 tokenize 的 Instance 列表
    :return: (model, MetricLedger)
    """
    trainer_config.validate()
    weighting_config.validate()
    loss_config.validate()
    dataset = list(dataset)
    if not dataset:
        raise DatasetError('training dataset is empty')
    ledger = ledger if ledger is not None else MetricLedger()
    weighting = effective_weighting(trainer_config, weighting_config)
    params = model.trainable_parameters()
    if not params:
        raise CompactError('model has no trainable parameters')

    if trainer_config.epochs == 0 or trainer_config.max_steps == 0:
        _write_checkpoint(model, trainer_config, 0)
        return model, ledger

    optimizer = torch.optim.AdamW(params, lr=trainer_config.learning_rate, betas=trainer_config.betas,
                                  weight_decay=trainer_config.weight_decay)
    optimizer.zero_grad(set_to_none=True)
    rng = np.random.default_rng(derive_seed(trainer_config.seed, 'shuffle'))
    writer = _open_writer(trainer_config.tensorboard_dir)
    last_losses = deque(maxlen=5)
    visit = ledger.rows[-1].step + 1 if len(ledger) else 0
    opt_step = 0
    pending = 0
    bs = trainer_config.batch_size
    done = False

    try:
        for epoch in range(1, trainer_config.epochs + 1):
            order = rng.permutation(len(dataset))
            epoch_loss = AverageMeter()
            cache = {}
            if trainer_config.score_refresh == 'epoch':
                for b in score_batch(model, dataset, weighting, vocab, trainer_config.workers):
                    cache[b.instance_id] = b
            batches = [order[i:i + bs] for i in range(0, len(order), bs)]
            bar = tqdm(batches, desc='epoch {}'.format(epoch), disable=not trainer_config.progress, leave=False)
            for bi, idx in enumerate(bar):
                batch = [dataset[i] for i in idx]
                if cache:
                    bundles = [cache[inst.id] for inst in batch]
                else:
                    bundles = score_batch(model, batch, weighting, vocab, trainer_config.workers)
                if not all(np.all(np.isfinite(b.alpha)) for b in bundles):
                    raise DivergenceError(opt_step, last_losses)
                bundles = [mode_weights(trainer_config, b) for b in bundles]
                scale = 1. / (len(batch) * trainer_config.grad_accum_steps)

                batch_loss = 0.
                for inst, bundle in zip(batch, bundles):
                    if trainer_config.fusion == 'task_vectors':
                        l_final, reports = _task_vector_step(model, params, inst, bundle, loss_config, vocab, scale)
                    else:
                        with ComputationTape() as tape:
                            loss, reports = fused_loss(model, inst, bundle, loss_config, vocab)
                            l_final = float(loss)
                            if math.isfinite(l_final):
                                backward(loss * scale, tape)
                    if not math.isfinite(l_final):
                        raise DivergenceError(opt_step, last_losses)
                    ledger.append(visit, epoch, bundle, reports, l_final)
                    if writer is not None:
                        writer.add_scalar('loss/final', l_final, visit)
                        for tid, a in zip(bundle.teacher_ids, bundle.alpha):
                            writer.add_scalar('alpha/{}'.format(tid), float(a), visit)
                    visit += 1
                    batch_loss += l_final / len(batch)
                last_losses.append(batch_loss)
                epoch_loss.update(batch_loss)
                pending += 1
                logger.debug('epoch %d batch %d loss %.6f', epoch, bi, batch_loss)

                if pending == trainer_config.grad_accum_steps or bi == len(batches) - 1:
                    torch.nn.utils.clip_grad_norm_(params, trainer_config.grad_clip)
                    optimizer.step()
                    optimizer.zero_grad(set_to_none=True)
                    opt_step += 1
                    pending = 0
                    if trainer_config.max_steps is not None and opt_step >= trainer_config.max_steps:
                        done = True
                        break
                bar.set_postfix(loss='{:.4f}'.format(batch_loss))

            rows = [r for r in ledger.rows if r.epoch == epoch]
            means = {tid: np.mean([r.alpha for r in rows if r.teacher_id == tid]) for tid in ledger.teacher_ids}
            logger.info('epoch %d: mean loss %.6f, steps %d, mean alpha %s', epoch, epoch_loss.avg, opt_step,
                        ', '.join('{}={:.4f}'.format(k, v) for k, v in means.items() if not np.isnan(v)))
            _write_checkpoint(model, trainer_config, epoch)
            if done:
                logger.info('reached max_steps=%d', trainer_config.max_steps)
                break
    finally:
        if writer is not None:
            writer.close()
    return model, ledger


def _flat_grads(params, loss):
    grads = torch.autograd.grad(loss, params, allow_unused=True)
    return [torch.zeros_like(p) if g is None else g for p, g in zip(params, grads)]


def verify_gradient_equivalence(model, instance, bundle, loss_config: LossConfig, vocab):
    """
    比较一个 tape 上的 grad L_Final 与 K 个 tape 上 sum_k alpha_k grad L_k
    :return: 各参数相对 L2 差异的最大值
    """
    params = model.trainable_parameters()
    alpha = [float(a) for a in bundle.alpha]
    with ComputationTape():
        loss, _ = fused_loss(model, instance, bundle, loss_config, vocab)
        fused = _flat_grads(params, loss)
    summed = [torch.zeros_like(p) for p in params]
    for k in range(instance.K):
        with ComputationTape():
            loss_k, _ = branch_loss(model, instance, k, alpha, loss_config, vocab,
                                    terms=branch_terms(model, instance, vocab))
            for acc, g in zip(summed, _flat_grads(params, loss_k)):
                acc.add_(g, alpha=alpha[k])
    worst = 0.
    for a, b in zip(fused, summed):
        denom = max(float(a.norm()), float(b.norm()))
        if denom == 0.:
            continue
        worst = max(worst, float((a - b).norm()) / denom)
    return worst


def predict_answer(model, instance, vocab, max_new_tokens=EVAL_MAX_NEW_TOKENS):
    """
    从问题开始贪心解码, 取 ``####`` 之后直到 EOS 的文本, 没有标记时返回 ``None``
    """
    prompt = vocab.frame_prompt(instance.question_ids)
    out = model.generate_greedy(prompt, max_new_tokens, vocab.eos_id)
    if vocab.ans_id not in out:
        return None
    tail = out[out.index(vocab.ans_id) + 1:]
    if vocab.eos_id in tail:
        tail = tail[:tail.index(vocab.eos_id)]
    return vocab.detokenize(tail)


def evaluate(model, dataset, vocab, max_new_tokens=EVAL_MAX_NEW_TOKENS):
    """
    exact-match 准确率
    """
    dataset = list(dataset)
    if not dataset:
        raise DatasetError('cannot evaluate on an empty dataset')
    correct = 0
    for inst in dataset:
        pred = predict_answer(model, inst, vocab, max_new_tokens)
        correct += int(pred is not None and pred.strip() == inst.gold_answer.strip())
    acc = correct / len(dataset)
    logger.info('exact match %d/%d = %.4f', correct, len(dataset), acc)
    return acc
