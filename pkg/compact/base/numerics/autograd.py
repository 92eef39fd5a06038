import torch


class cross_entropy(torch.autograd.Function):
    """
    逐行的负对数似然, 使用 logsumexp 保证数值稳定
    对应的原函数为:

    .. math::
            \\ell_i = \\log\\sum_v e^{z_{iv}} - z_{i y_i}
    反向传播的函数为:

    .. math::
            \\frac{\\partial \\ell_i}{\\partial z_{iv}} = \\mathrm{softmax}(z_i)_v - [v = y_i]

    """

    @staticmethod
    def forward(ctx, logits, targets):
        log_probs = logits - torch.logsumexp(logits, dim=-1, keepdim=True)
        ctx.save_for_backward(log_probs, targets)
        return -log_probs.gather(-1, targets.unsqueeze(-1)).squeeze(-1)

    @staticmethod
    def backward(ctx, grad_output):
        grad_logits = None
        if ctx.needs_input_grad[0]:
            log_probs, targets = ctx.saved_tensors
            grad_logits = log_probs.exp()
            grad_logits.scatter_add_(-1, targets.unsqueeze(-1),
                                     torch.full(targets.unsqueeze(-1).shape, -1., dtype=grad_logits.dtype))
            grad_logits = grad_logits * grad_output.unsqueeze(-1)
        return grad_logits, None


class kl_div(torch.autograd.Function):
    """
    逐行的 KL(p || q), 输入为归一化后的 log 概率
    对应的原函数为:

    .. math::
            D_i = \\sum_v p_{iv} (\\log p_{iv} - \\log q_{iv})
    反向传播的函数为:

    .. math::
            \\frac{\\partial D_i}{\\partial \\log p_{iv}} = p_{iv}(\\log p_{iv} - \\log q_{iv} + 1), \\quad
            \\frac{\\partial D_i}{\\partial \\log q_{iv}} = -p_{iv}

    """

    @staticmethod
    def forward(ctx, log_p, log_q):
        p = log_p.exp()
        log_ratio = log_p - log_q
        ctx.save_for_backward(p, log_ratio)
        return (p * log_ratio).sum(-1)

    @staticmethod
    def backward(ctx, grad_output):
        p, log_ratio = ctx.saved_tensors
        g = grad_output.unsqueeze(-1)
        grad_p, grad_q = None, None
        if ctx.needs_input_grad[0]:
            grad_p = g * p * (log_ratio + 1.)
        if ctx.needs_input_grad[1]:
            grad_q = -g * p
        return grad_p, grad_q
