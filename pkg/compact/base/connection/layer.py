import math

import torch
from torch import nn
from einops import rearrange

from compact.base.numerics import functional as nf


def normal_(shape, std, generator):
    return torch.randn(*shape, generator=generator, dtype=nf.DTYPE) * std


class Linear(nn.Module):
    """
    全连接映射 y = x W^T + b, 权重形状 ``[out_features, in_features]``, 与 torch 一致
    :param in_features: 输入尺寸
    :param out_features: 输出尺寸
    :param bias: 是否有Bias
    :param std: 初始化的标准差
    :param generator: 初始化使用的 ``torch.Generator``
    """

    def __init__(self, in_features, out_features, bias=True, std=0.02, generator=None):
        super().__init__()
        self.in_features = in_features
        self.out_features = out_features
        self.weight = nn.Parameter(normal_((out_features, in_features), std, generator))
        self.bias = nn.Parameter(torch.zeros(out_features, dtype=nf.DTYPE)) if bias else None

    def forward(self, x):
        y = nf.matmul(x, nf.transpose(self.weight))
        if self.bias is not None:
            y = nf.add(y, self.bias)
        return y

    def effective_weight(self):
        return self.weight.detach()


class LayerNorm(nn.Module):
    def __init__(self, ndim, eps=1e-5):
        super().__init__()
        self.weight = nn.Parameter(torch.ones(ndim, dtype=nf.DTYPE))
        self.bias = nn.Parameter(torch.zeros(ndim, dtype=nf.DTYPE))
        self.eps = eps

    def forward(self, x):
        return nf.layer_norm(x, self.weight, self.bias, self.eps)


class Embedding(nn.Module):
    def __init__(self, num_embeddings, dim, std=0.02, generator=None):
        super().__init__()
        self.weight = nn.Parameter(normal_((num_embeddings, dim), std, generator))

    def forward(self, ids):
        return nf.embedding_lookup(self.weight, ids)


class CausalSelfAttention(nn.Module):
    """
    多头因果自注意力, Q/K/V/O 都是无 bias 的完整 ``d_model x d_model`` 映射
    :param d_model: 隐层维度
    :param n_heads: 头数
    :param max_seq_len: 因果 mask 的最大长度
    """

    def __init__(self, d_model, n_heads, max_seq_len, generator=None):
        super().__init__()
        self.n_heads = n_heads
        self.d_model = d_model
        self.w_q = Linear(d_model, d_model, bias=False, generator=generator)
        self.w_k = Linear(d_model, d_model, bias=False, generator=generator)
        self.w_v = Linear(d_model, d_model, bias=False, generator=generator)
        self.w_o = Linear(d_model, d_model, bias=False, generator=generator)
        self.register_buffer('causal_mask',
                             torch.triu(torch.ones(max_seq_len, max_seq_len, dtype=torch.bool), diagonal=1),
                             persistent=False)

    def forward(self, x):
        # x.shape = [T, d_model]
        T = x.shape[0]
        q = rearrange(self.w_q(x), 't (h e) -> h t e', h=self.n_heads)
        k = rearrange(self.w_k(x), 't (h e) -> h t e', h=self.n_heads)
        v = rearrange(self.w_v(x), 't (h e) -> h t e', h=self.n_heads)
        att = nf.mul(nf.matmul(q, nf.transpose(k)), 1. / math.sqrt(q.shape[-1]))
        att = nf.masked_fill(att, self.causal_mask[:T, :T], float('-inf'))
        y = nf.matmul(nf.softmax(att, dim=-1), v)
        return self.w_o(rearrange(y, 'h t e -> t (h e)'))


class FeedForward(nn.Module):
    def __init__(self, d_model, d_ff, generator=None):
        super().__init__()
        self.fc1 = Linear(d_model, d_ff, generator=generator)
        self.fc2 = Linear(d_ff, d_model, generator=generator)

    def forward(self, x):
        return self.fc2(nf.relu(self.fc1(x)))


class TransformerBlock(nn.Module):
    """
    pre-LN 的 decoder block
    """

    def __init__(self, d_model, n_heads, d_ff, max_seq_len, generator=None):
        super().__init__()
        self.ln1 = LayerNorm(d_model)
        self.attn = CausalSelfAttention(d_model, n_heads, max_seq_len, generator=generator)
        self.ln2 = LayerNorm(d_model)
        self.ffn = FeedForward(d_model, d_ff, generator=generator)

    def forward(self, x):
        x = nf.add(x, self.attn(self.ln1(x)))
        return nf.add(x, self.ffn(self.ln2(x)))
