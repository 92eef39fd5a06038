import math

import numpy as np
import pytest
import torch

from compact.exceptions import CompactError, ShapeError
from compact.base.numerics import ComputationTape, backward, finite_diff_gradient, gradient_check
from compact.base.numerics import functional as nf


def _rand(gen, *shape):
    return torch.randn(*shape, generator=gen, dtype=torch.float64)


def test_relu_softmax_matmul():
    assert nf.relu(nf.tensor([-1., 0., 2.])).tolist() == [0., 0., 2.]
    assert torch.allclose(nf.softmax(nf.tensor([0., 0., 0.])), torch.full((3,), 1. / 3), atol=1e-15)
    m = _rand(torch.Generator().manual_seed(0), 3, 3)
    assert torch.equal(nf.matmul(torch.eye(3, dtype=torch.float64), m), m)


def test_shape_mismatch_names_shapes():
    with pytest.raises(ShapeError, match=r'\(2, 3\)'):
        nf.matmul(torch.ones(2, 3, dtype=torch.float64), torch.ones(2, 3, dtype=torch.float64))
    with pytest.raises(ShapeError):
        nf.add(torch.ones(2, 3), torch.ones(4))
    with pytest.raises(ShapeError):
        nf.kl_div(torch.zeros(2, 3), torch.zeros(3, 2))


def test_tape_records_in_order():
    x = nf.tensor([[1., -2.], [3., 4.]], requires_grad=True)
    with ComputationTape() as tape:
        y = nf.relu(nf.matmul(x, x))
        loss = nf.reduce_sum(y)
        assert tape.ops() == ['matmul', 'relu', 'sum']
        assert [n.index for n in tape.nodes] == [0, 1, 2]
        backward(loss, tape)
    assert len(tape) == 0
    assert x.grad is not None


def test_nothing_recorded_without_grad():
    x = nf.tensor([1., 2.])
    with ComputationTape() as tape:
        nf.relu(x)
    assert len(tape) == 0


def test_backward_square():
    x = nf.tensor([1., 2.], requires_grad=True)
    with ComputationTape() as tape:
        backward(nf.reduce_sum(nf.mul(x, x)), tape)
    assert x.grad.tolist() == [2., 4.]


def test_backward_kl_self_is_zero():
    z = _rand(torch.Generator().manual_seed(1), 3, 5).requires_grad_()
    with ComputationTape() as tape:
        lp = nf.log_softmax(z)
        backward(nf.reduce_sum(nf.kl_div(lp, lp)), tape)
    assert torch.allclose(z.grad, torch.zeros_like(z), atol=1e-15)


def test_backward_rejects_bad_input():
    x = nf.tensor([1., 2.], requires_grad=True)
    with ComputationTape() as tape:
        with pytest.raises(ShapeError):
            backward(nf.mul(x, x), tape)
    with ComputationTape() as tape:
        with pytest.raises(CompactError):
            backward((x * x).sum(), tape)


def test_finite_diff_analytic():
    g = finite_diff_gradient(lambda w: (w ** 2).sum(), nf.tensor([3.]), h=1e-5)
    assert abs(float(g) - 6.) < 1e-9
    g = finite_diff_gradient(lambda w: torch.exp(w).sum(), nf.tensor([0.]), h=1e-5)
    assert abs(float(g) - 1.) < 1e-9


def test_finite_diff_errors():
    with pytest.raises(ValueError):
        finite_diff_gradient(lambda w: w.sum(), nf.tensor([1.]), h=0.)
    with pytest.raises(CompactError):
        finite_diff_gradient(lambda w: torch.log(w - 3.).sum(), nf.tensor([3.]), h=1e-5)


def test_linear_model_matches_finite_differences():
    gen = torch.Generator().manual_seed(2)
    x, y = _rand(gen, 6, 10), _rand(gen, 6)
    w = _rand(gen, 10).requires_grad_()
    err = gradient_check(lambda: nf.reduce_sum(nf.mul(nf.matmul(x, w) - y, nf.matmul(x, w) - y)), [w])
    assert err < 1e-6


def test_two_layer_net_matches_finite_differences():
    gen = torch.Generator().manual_seed(3)
    x = _rand(gen, 5, 4)
    targets = torch.tensor([0, 2, 1, 2, 0])
    w1, w2 = _rand(gen, 4, 6).requires_grad_(), _rand(gen, 6, 3).requires_grad_()
    b1 = (_rand(gen, 6) + 0.5).requires_grad_()

    def closure():
        h = nf.relu(nf.add(nf.matmul(x, w1), b1))
        return nf.cross_entropy(nf.matmul(h, w2), targets, reduction='mean')

    assert gradient_check(closure, [w1, b1, w2]) < 1e-5


def _primitive_cases(gen):
    a, b = _rand(gen, 3, 4), _rand(gen, 4, 2)
    c = _rand(gen, 3, 4)
    away = a + 0.2 * torch.sign(a)
    w, bias = _rand(gen, 4) + 1., _rand(gen, 4)
    table = _rand(gen, 5, 4)
    ids = torch.tensor([0, 3, 3, 1])
    targets = torch.tensor([1, 0, 3])
    return [
        ('matmul', [a, b], lambda a, b: nf.matmul(a, b)),
        ('add', [a, c], lambda a, c: nf.add(a, c)),
        ('mul', [a, c], lambda a, c: nf.mul(a, c)),
        ('softmax', [a], lambda a: nf.softmax(a)),
        ('log_softmax', [a], lambda a: nf.log_softmax(a)),
        ('relu', [away], lambda x: nf.relu(x)),
        ('layer_norm', [a, w, bias], lambda x, w, b: nf.layer_norm(x, w, b)),
        ('embedding_lookup', [table], lambda t: nf.embedding_lookup(t, ids)),
        ('cross_entropy', [a], lambda x: nf.cross_entropy(x, targets, reduction='none')),
        ('kl_div', [a, c], lambda x, y: nf.kl_div(nf.log_softmax(x), nf.log_softmax(y))),
        ('transpose', [a], lambda x: nf.transpose(x)),
        ('slice', [a], lambda x: nf.slice_range(x, 1, 3)),
        ('concat', [a, c], lambda x, y: nf.concat([x, y], dim=0)),
        ('mean', [a], lambda x: nf.reduce_mean(x, dim=-1)),
        ('sum', [a], lambda x: nf.reduce_sum(x, dim=0)),
        ('logsumexp', [a], lambda x: nf.logsumexp(x)),
    ]


def _check_primitives(seed):
    gen = torch.Generator().manual_seed(seed)
    for name, inputs, fn in _primitive_cases(gen):
        inputs = [t.clone().requires_grad_() for t in inputs]
        weights = _rand(gen, *fn(*inputs).shape)

        def closure(fn=fn, inputs=inputs, weights=weights):
            return nf.reduce_sum(nf.mul(fn(*inputs), weights))

        err = gradient_check(closure, inputs)
        assert err < 1e-5, '{} seed {}: {}'.format(name, seed, err)


@pytest.mark.parametrize('seed', range(5))
def test_primitive_gradients(seed):
    _check_primitives(seed)


@pytest.mark.slow
def test_primitive_gradients_many_seeds():
    for seed in range(100):
        _check_primitives(seed)


def test_log_softmax_identity():
    x = torch.linspace(-50., 50., 41, dtype=torch.float64)
    expected = x - torch.logsumexp(x, dim=-1)
    assert float((nf.log_softmax(x) - expected).abs().max()) <= 1e-12


def test_kl_nonnegative():
    rng = np.random.default_rng(0)
    for _ in range(200):
        p = torch.as_tensor(rng.dirichlet(np.ones(6)))
        q = torch.as_tensor(rng.dirichlet(np.ones(6)))
        assert float(nf.kl_div(torch.log(p), torch.log(q))) >= -1e-15
        assert float(nf.kl_div(torch.log(p), torch.log(p))) == 0.


def test_gradient_linearity():
    gen = torch.Generator().manual_seed(4)
    x = _rand(gen, 4, 3)
    w = _rand(gen, 3, 5).requires_grad_()
    targets = torch.tensor([0, 4, 2, 1])

    def l1():
        return nf.cross_entropy(nf.matmul(x, w), targets)

    def l2():
        return nf.reduce_sum(nf.mul(nf.softmax(nf.matmul(x, w)), nf.matmul(x, w)))

    g_sum, = torch.autograd.grad(l1() + l2(), [w])
    g1, = torch.autograd.grad(l1(), [w])
    g2, = torch.autograd.grad(l2(), [w])
    assert float((g_sum - (g1 + g2)).norm() / g_sum.norm()) < 1e-12


def test_cross_entropy_matches_torch():
    gen = torch.Generator().manual_seed(5)
    logits = _rand(gen, 4, 7) * 10
    targets = torch.tensor([6, 0, 3, 3])
    ref = torch.nn.functional.cross_entropy(logits, targets, reduction='sum')
    assert math.isclose(float(nf.cross_entropy(logits, targets)), float(ref), rel_tol=1e-12)
