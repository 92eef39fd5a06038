from dataclasses import dataclass, asdict, fields
from typing import Optional

import torch

from compact.exceptions import ConfigError, ShapeError
from compact.utils import derive_seed
from compact.base.numerics import functional as nf
from compact.base.connection import Linear, LayerNorm, Embedding, TransformerBlock, apply_lora_to_linear_modules
from compact.model_zoo.base_module import BaseModule

ADAPTER_TARGETS = ('attn.w_', 'ffn.fc')
ADAPTER_ALPHA = 2.


@dataclass
class ModelConfig:
    """
    学生模型配置
    :param vocab_size: 词表大小, ``0`` 表示由 tokenizer 决定
    :param adapter_rank: adapter 的秩, ``0`` 表示全参数微调
    """
    vocab_size: int = 0
    n_layers: int = 4
    n_heads: int = 4
    d_model: int = 128
    d_ff: Optional[int] = None
    max_seq_len: int = 256
    adapter_rank: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.d_ff is None:
            self.d_ff = 4 * self.d_model

    def validate(self):
        for name in ('vocab_size', 'n_layers', 'n_heads', 'd_model', 'd_ff', 'max_seq_len'):
            if getattr(self, name) <= 0:
                raise ConfigError('model.' + name, 'must be a positive integer, got {}'.format(getattr(self, name)))
        if self.d_model % self.n_heads != 0:
            raise ConfigError('model.n_heads', 'd_model {} is not divisible by n_heads {}'.format(
                self.d_model, self.n_heads))
        if not 0 <= self.adapter_rank < self.d_model:
            raise ConfigError('model.adapter_rank', 'must be in [0, d_model={}), got {}'.format(
                self.d_model, self.adapter_rank))
        return self

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        for key in data:
            if key not in known:
                raise ConfigError('model.' + key, 'unknown key')
        return cls(**data)


def parameter_count(config: ModelConfig, trainable_only=False):
    """
    解析地计算参数量
    """
    d, f, V, S, L, r = config.d_model, config.d_ff, config.vocab_size, config.max_seq_len, \
        config.n_layers, config.adapter_rank
    adapters = L * r * (4 * 2 * d + 2 * (d + f))
    if trainable_only and r > 0:
        return adapters
    block = 2 * d + 4 * d * d + 2 * d + (d * f + f) + (f * d + d)
    base = V * d + S * d + L * block + 2 * d + V * d
    return base + adapters


@dataclass
class ForwardTrace:
    """
    一次前向的结果
    :param hidden_states: [T, d_model], 最后一层经过 final LayerNorm 后的表示, 即 LM head 的输入
    :param all_layer_states: [L, T, d_model], 每个 block 的残差流输出, 仅在请求时给出
    :param logits: [T, vocab_size]
    """
    token_ids: torch.Tensor
    hidden_states: torch.Tensor
    logits: torch.Tensor
    all_layer_states: Optional[torch.Tensor] = None


@dataclass(frozen=True)
class ProjectionPair:
    """
    最后一层的 query / key 映射快照, 形状均为 [d_model, d_model], adapter 增量已折叠
    """
    w_q: torch.Tensor
    w_k: torch.Tensor


class StudentModel(BaseModule):
    """
    decoder-only transformer 学生模型, 使用可学习的位置编码, 参数全部为 float64,
    初始化为 std = 0.02 的正态分布, 由 ``config.seed`` 决定
    :param config: ``ModelConfig``
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        config.validate()
        self.config = config
        g = torch.Generator().manual_seed(derive_seed(config.seed, 'student', 'base'))
        self.tok_emb = Embedding(config.vocab_size, config.d_model, generator=g)
        self.pos_emb = Embedding(config.max_seq_len, config.d_model, generator=g)
        self.blocks = torch.nn.ModuleList([
            TransformerBlock(config.d_model, config.n_heads, config.d_ff, config.max_seq_len, generator=g)
            for _ in range(config.n_layers)
        ])
        self.ln_f = LayerNorm(config.d_model)
        self.lm_head = Linear(config.d_model, config.vocab_size, bias=False, generator=g)
        if config.adapter_rank > 0:
            ga = torch.Generator().manual_seed(derive_seed(config.seed, 'student', 'adapters'))
            apply_lora_to_linear_modules(self, ADAPTER_TARGETS, r=config.adapter_rank,
                                         alpha=ADAPTER_ALPHA, generator=ga)
            self.freeze_base()

    def _ids(self, token_ids):
        ids = torch.as_tensor(token_ids, dtype=torch.long).reshape(-1)
        if ids.numel() == 0:
            raise ShapeError('forward: empty token sequence')
        if ids.numel() > self.config.max_seq_len:
            raise ShapeError('forward: sequence length {} exceeds max_seq_len {}'.format(
                ids.numel(), self.config.max_seq_len))
        if int(ids.max()) >= self.config.vocab_size or int(ids.min()) < 0:
            raise ShapeError('forward: token id {} outside vocab_size {}'.format(
                int(ids.max()), self.config.vocab_size))
        return ids

    def forward(self, token_ids, capture_all_layers=False):
        """
        :param token_ids: token-id 序列
        :param capture_all_layers: 是否保存每一层的输出
        :return: ``ForwardTrace``
        """
        ids = self._ids(token_ids)
        positions = torch.arange(ids.numel())
        x = nf.add(self.tok_emb(ids), self.pos_emb(positions))
        states = []
        for block in self.blocks:
            x = block(x)
            if capture_all_layers:
                states.append(x)
        h = self.ln_f(x)
        logits = self.lm_head(h)
        return ForwardTrace(token_ids=ids, hidden_states=h, logits=logits,
                            all_layer_states=torch.stack(states) if capture_all_layers else None)

    def answer_logprobs_from_states(self, h, gold_ids):
        """
        对每个隐状态直接应用 LM head, 求 gold 答案 token 的平均 log 概率
        :param h: [T, d_model] 或 [d_model]
        :param gold_ids: 非空的 gold token-id 序列
        :return: [T] 或标量
        """
        gold = torch.as_tensor(gold_ids, dtype=torch.long).reshape(-1)
        if gold.numel() == 0:
            raise ShapeError('answer_logprob: empty gold answer')
        if h.shape[-1] != self.config.d_model:
            raise ShapeError('answer_logprob: state shape {} does not match d_model {}'.format(
                tuple(h.shape), self.config.d_model))
        log_probs = nf.log_softmax(self.lm_head(h), dim=-1)
        return nf.reduce_mean(log_probs[..., gold], dim=-1)

    def answer_logprob_from_state(self, h, gold_ids):
        """
        单个隐状态 h 上的 I_proxy: (1/|gold|) sum_j log P(gold_j | h)
        """
        if h.dim() != 1:
            raise ShapeError('answer_logprob_from_state: expected a vector, got {}'.format(tuple(h.shape)))
        return self.answer_logprobs_from_states(h, gold_ids)

    def projection_pair(self):
        """
        最后一层注意力的 W_Q / W_K 只读快照
        """
        attn = self.blocks[-1].attn
        return ProjectionPair(w_q=attn.w_q.effective_weight().clone(), w_k=attn.w_k.effective_weight().clone())

    @torch.no_grad()
    def generate_greedy(self, prompt_ids, max_new_tokens, stop_id):
        """
        贪心解码, 遇到 ``stop_id`` 或达到长度上限时停止
        :return: 新生成的 token-id 列表(包含 stop token)
        """
        ids = [int(t) for t in prompt_ids]
        budget = min(max_new_tokens, self.config.max_seq_len - len(ids))
        out = []
        for _ in range(max(budget, 0)):
            logits = self.forward(ids).logits[-1]
            nxt = int(torch.argmax(logits))
            out.append(nxt)
            ids.append(nxt)
            if nxt == stop_id:
                break
        return out


if __name__ == '__main__':
    cfg = ModelConfig(vocab_size=40, n_layers=2, d_model=16, n_heads=2, max_seq_len=32, adapter_rank=2)
    net = StudentModel(cfg)
    print(net)
    print(sum(p.numel() for p in net.parameters()), parameter_count(cfg))
