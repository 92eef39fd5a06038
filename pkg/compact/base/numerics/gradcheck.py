import math

import torch

from compact.exceptions import CompactError


def finite_diff_gradient(f, params, h=1e-5, relative=False):
    """
    中心差分梯度 (f(w+h) - f(w-h)) / 2h, 作为反向传播的 oracle
    :param f: 确定性的标量函数, 输入与 ``params`` 同形状的张量
    :param params: 求导位置
    :param h: 步长, 必须为正
    :param relative: 为 ``True`` 时每个坐标的步长为 ``h * max(1, |w|)``
    :return: 与 ``params`` 同形状的 float64 梯度
    """
    if not h > 0:
        raise ValueError('h must be positive, got {}'.format(h))
    point = params.detach().clone().to(torch.float64)
    flat = point.view(-1)
    grad = torch.zeros_like(flat)
    with torch.no_grad():
        for i in range(flat.numel()):
            w = float(flat[i])
            step = h * max(1., abs(w)) if relative else h
            flat[i] = w + step
            f_plus = float(f(point))
            flat[i] = w - step
            f_minus = float(f(point))
            flat[i] = w
            if not (math.isfinite(f_plus) and math.isfinite(f_minus)):
                raise CompactError('non-finite function value at coordinate {} (w={})'.format(i, w))
            grad[i] = (f_plus - f_minus) / (2. * step)
    return grad.view(params.shape)


def relative_error(a, b, floor=1e-12):
    """
    max|a - b| / max(max|a|, max|b|, floor)
    """
    scale = max(float(a.abs().max()), float(b.abs().max()), floor)
    return float((a - b).abs().max()) / scale


def gradient_check(closure, params, h=1e-5, relative=True):
    """
    比较 autograd 梯度与有限差分
    :param closure: 无参函数, 用 ``params`` 计算标量 loss
    :param params: 需要检查的叶子张量列表
    :return: 所有参数中最大的相对误差
    """
    params = list(params)
    analytic = torch.autograd.grad(closure(), params, allow_unused=True)
    worst = 0.
    for p, g in zip(params, analytic):
        if g is None:
            g = torch.zeros_like(p)

        def f(w, p=p):
            saved = p.detach().clone()
            with torch.no_grad():
                p.copy_(w)
            try:
                return float(closure())
            finally:
                with torch.no_grad():
                    p.copy_(saved)

        numeric = finite_diff_gradient(f, p, h=h, relative=relative)
        worst = max(worst, relative_error(g.detach(), numeric))
    return worst
