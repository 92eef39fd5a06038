import math

import numpy as np
import pytest
import torch
from scipy.special import softmax

from compact.exceptions import CompactError, DatasetError, ShapeError
from compact.model_zoo import ProjectionPair, StudentModel
from compact.base.scoring import WeightingConfig, zscore, fuse_weights, mi_from_trace, mi_adaptability, \
    consensus, consensus_from_vectors, difficulty, rationale_nll, score_instance, score_batch, ScoreBundle
from tests.conftest import CONCISE, VERBOSE, WRONG


def test_mi_constant_and_decreasing_are_zero():
    assert mi_from_trace([-2.] * 6, [True] * 6)[0] == 0.
    assert mi_from_trace([-1., -1.5, -2., -4.], [True] * 4)[0] == 0.


def test_mi_hand_trace():
    i_proxy = [-3.0, -2.5, -2.6, -1.0]
    s_mi, trace = mi_from_trace(i_proxy, [False, True, False, True], epsilon_mask=0.1)
    # gains 0.5 and 1.6 both land on thinking positions, the dip is cut by the relu
    assert s_mi == pytest.approx(2.1, abs=1e-12)
    np.testing.assert_array_equal(trace.delta_i, np.diff(i_proxy))
    np.testing.assert_array_equal(trace.mask, [0.1, 1., 0.1, 1.])
    assert trace.peaks() == [1, 3]


def test_mi_off_thinking_gain_is_damped():
    s_mi, trace = mi_from_trace([0., 1.], [True, False], epsilon_mask=0.1)
    assert s_mi == pytest.approx(0.1)
    assert trace.peaks() == []


def test_mi_shape_errors():
    with pytest.raises(ShapeError):
        mi_from_trace([0., 1.], [True])
    with pytest.raises(ShapeError):
        mi_from_trace([], [])


def test_mi_adaptability_on_model(model, hand_instance, vocab):
    cfg = WeightingConfig()
    s_mi, trace = mi_adaptability(model, hand_instance, 0, cfg, vocab)
    ids, (start, stop) = hand_instance.sequence(0, vocab)
    assert s_mi >= 0.
    assert len(trace.i_proxy) == stop - start == len(hand_instance.rationales[0].token_ids) + 1
    np.testing.assert_array_equal(trace.delta_i, trace.i_proxy[1:] - trace.i_proxy[:-1])
    assert set(np.unique(trace.mask)) <= {cfg.epsilon_mask, 1.}
    h = model(ids).hidden_states
    t = 3
    expected = float(model.answer_logprob_from_state(h[start + t], hand_instance.gold_ids))
    assert trace.i_proxy[t] == pytest.approx(expected, abs=1e-12)


def test_mi_forced_continuation_probe(model, hand_instance, vocab):
    cfg = WeightingConfig(mi_probe='forced_continuation')
    s_mi, trace = mi_adaptability(model, hand_instance, 1, cfg, vocab)
    assert s_mi >= 0.
    assert len(trace.i_proxy) == len(hand_instance.rationales[1].token_ids) + 1
    assert np.all(np.isfinite(trace.i_proxy)) and np.all(trace.i_proxy <= 0.)


def test_forced_continuation_fits_checked_length(make_config, hand_instance, vocab):
    need = max(len(vocab.frame(hand_instance.question_ids, r.token_ids)[0]) for r in hand_instance.rationales)
    budget = need + 1 + len(hand_instance.gold_ids)
    hand_instance.check_length(budget, answer_room=True)
    with pytest.raises(DatasetError, match='answer continuation'):
        hand_instance.check_length(budget - 1, answer_room=True)
    net = StudentModel(make_config(max_seq_len=budget))
    cfg = WeightingConfig(mi_probe='forced_continuation')
    for k in range(hand_instance.K):
        _, trace = mi_adaptability(net, hand_instance, k, cfg, vocab)
        assert np.all(np.isfinite(trace.i_proxy))


def test_mi_rejects_empty_gold(model, make_instance, vocab):
    inst = make_instance([CONCISE, VERBOSE])
    inst.gold_ids = []
    with pytest.raises(ShapeError):
        mi_adaptability(model, inst, 0, WeightingConfig(), vocab)


def _identity_pair(d):
    eye = torch.eye(d, dtype=torch.float64)
    return ProjectionPair(w_q=eye, w_k=eye.clone())


def test_consensus_identical_vectors_is_uniform():
    v = torch.ones(4, 8, dtype=torch.float64)
    s_cons, att = consensus_from_vectors(v, _identity_pair(8))
    np.testing.assert_allclose(att, np.full((4, 4), 0.25), atol=1e-12)
    np.testing.assert_allclose(s_cons, np.full(4, 0.75), atol=1e-12)


def test_consensus_outlier_is_minimal():
    e = torch.zeros(4, dtype=torch.float64)
    e[0] = 3.
    v = torch.stack([e, e + 0.01, e - 0.01, -e])
    s_cons, att = consensus_from_vectors(v, _identity_pair(4))
    assert int(np.argmin(s_cons)) == 3
    assert all(s_cons[3] < s_cons[k] for k in range(3))


def test_consensus_hand_rolled_softmax():
    rng = np.random.default_rng(0)
    v = rng.normal(size=(3, 5))
    wq, wk = rng.normal(size=(5, 5)), rng.normal(size=(5, 5))
    pair = ProjectionPair(w_q=torch.as_tensor(wq), w_k=torch.as_tensor(wk))
    s_cons, att = consensus_from_vectors(torch.as_tensor(v), pair)
    logits = (v @ wq.T) @ (v @ wk.T).T / math.sqrt(5)
    expected = softmax(logits, axis=1)
    np.testing.assert_allclose(att, expected, atol=1e-12)
    np.testing.assert_allclose(s_cons, expected.sum(axis=0) - np.diag(expected), atol=1e-12)


def test_consensus_on_model(model, hand_instance, vocab):
    s_cons, att = consensus(model, hand_instance, vocab)
    K = hand_instance.K
    np.testing.assert_allclose(att.sum(axis=1), np.ones(K), atol=1e-12)
    assert np.all(s_cons >= 0.) and np.all(s_cons <= K - 1)
    assert s_cons.sum() == pytest.approx(K - np.trace(att), abs=1e-12)


def test_untrained_projections_give_flat_consensus(model, hand_instance, vocab):
    s_cons, att = consensus(model, hand_instance, vocab)
    K = hand_instance.K
    assert np.abs(att - 1. / K).max() < 0.1
    assert np.ptp(s_cons) < 0.3
    # the z-score stretches the residual spread to unit scale
    assert np.std(zscore(s_cons)) == pytest.approx(1.)


def test_consensus_needs_two_rationales(model, make_instance, vocab):
    with pytest.raises(ShapeError):
        consensus(model, make_instance([CONCISE]), vocab)
    with pytest.raises(ShapeError):
        consensus_from_vectors(torch.ones(1, 4, dtype=torch.float64), _identity_pair(4))
    with pytest.raises(ShapeError):
        consensus_from_vectors(torch.ones(2, 4, dtype=torch.float64), _identity_pair(5))


def test_difficulty_uniform_is_log_vocab(uniform_model, hand_instance, vocab):
    for k in range(hand_instance.K):
        assert difficulty(uniform_model, hand_instance, k, vocab) == pytest.approx(math.log(len(vocab)), abs=1e-12)


def test_rationale_nll_saturated():
    ids = [0, 1, 2, 0, 1]
    logits = torch.zeros(5, 3, dtype=torch.float64)
    for i in range(4):
        logits[i, ids[i + 1]] = 50.
    assert float(rationale_nll(logits, ids, 1, 5, reduction='mean')) < 1e-8


def test_rationale_nll_hand():
    # 3-token vocab, 4-token rationale after a 1-token question
    ids = [2, 0, 1, 1, 2]
    logits = torch.tensor([[1., 0., 0.], [0., 2., 1.], [0.5, 0.5, 0.], [0., 0., 3.], [9., 9., 9.]],
                          dtype=torch.float64)
    expected = 0.
    for pos in range(4):
        row = logits[pos].tolist()
        lse = math.log(sum(math.exp(x) for x in row))
        expected += lse - row[ids[pos + 1]]
    assert float(rationale_nll(logits, ids, 1, 5)) == pytest.approx(expected, abs=1e-12)
    assert float(rationale_nll(logits, ids, 1, 5, reduction='mean')) == pytest.approx(expected / 4, abs=1e-12)
    with pytest.raises(ShapeError):
        rationale_nll(logits, ids, 3, 3)


def test_zscore_floor():
    np.testing.assert_array_equal(zscore([2., 2., 2.]), np.zeros(3))
    np.testing.assert_allclose(zscore([1., 2., 3.]), [-math.sqrt(1.5), 0., math.sqrt(1.5)], atol=1e-12)


def test_fuse_constant_is_uniform():
    _, alpha = fuse_weights([1.] * 4, [0.3] * 4, [2.] * 4)
    np.testing.assert_allclose(alpha, np.full(4, 0.25), atol=1e-12)


def test_fuse_three_teacher_hand_case():
    score, alpha = fuse_weights([1, 2, 3], [0.5, 0.5, 0.5], [3, 2, 1], WeightingConfig(tau=0.5))
    z = math.sqrt(1.5)
    np.testing.assert_allclose(score, [-2 * z, 0., 2 * z], atol=1e-12)
    e = np.exp([-4 * z, 0., 4 * z])
    np.testing.assert_allclose(alpha, e / e.sum(), atol=1e-12)


def test_fuse_argmax_limit():
    _, alpha = fuse_weights([1., 0.], [0., 0.], [0., 0.], WeightingConfig(tau=1e-3))
    np.testing.assert_allclose(alpha, [1., 0.], atol=1e-6)


def test_fuse_rejects_mismatched_lengths():
    with pytest.raises(ShapeError):
        fuse_weights([1., 2.], [1., 2., 3.], [1., 2.])
    with pytest.raises(ShapeError):
        fuse_weights([], [], [])


def _random_scores(rng, K):
    return rng.random(K) * 5, rng.random(K) * (K - 1), rng.random(K) * 4


def test_fuse_simplex_and_affine_invariance():
    rng = np.random.default_rng(11)
    for _ in range(100):
        K = int(rng.integers(1, 7))
        s_mi, s_cons, s_ppl = _random_scores(rng, K)
        _, alpha = fuse_weights(s_mi, s_cons, s_ppl)
        assert np.all(alpha >= 0) and abs(alpha.sum() - 1.) < 1e-9
        a, b = rng.random() * 10 + 0.1, rng.normal() * 10
        _, moved = fuse_weights(a * s_mi + b, s_cons, a * s_ppl - b)
        np.testing.assert_allclose(moved, alpha, atol=1e-9)


def test_fuse_permutation_equivariance():
    rng = np.random.default_rng(12)
    for _ in range(50):
        s_mi, s_cons, s_ppl = _random_scores(rng, 5)
        perm = rng.permutation(5)
        _, alpha = fuse_weights(s_mi, s_cons, s_ppl)
        _, permuted = fuse_weights(s_mi[perm], s_cons[perm], s_ppl[perm])
        np.testing.assert_allclose(permuted, alpha[perm], atol=1e-12)


def test_fuse_temperature_limits():
    rng = np.random.default_rng(13)
    checked = 0
    while checked < 100:
        s_mi, s_cons, s_ppl = _random_scores(rng, 4)
        score, _ = fuse_weights(s_mi, s_cons, s_ppl)
        top = np.sort(score)
        if top[-1] - top[-2] < 0.01:
            continue
        _, sharp = fuse_weights(s_mi, s_cons, s_ppl, WeightingConfig(tau=1e-3))
        assert sharp.max() > 0.999 and int(np.argmax(sharp)) == int(np.argmax(score))
        # |score| <= 3 * sqrt(K - 1)
        _, flat = fuse_weights(s_mi, s_cons, s_ppl, WeightingConfig(tau=1e3))
        assert np.abs(flat - 0.25).max() < 1.5e-3
        _, flatter = fuse_weights(s_mi, s_cons, s_ppl, WeightingConfig(tau=1e4))
        assert np.abs(flatter - 0.25).max() < 1.5e-4
        checked += 1


def test_fuse_is_monotone_in_own_mi():
    prev = -1.
    for v in np.linspace(-5., 5., 101):
        _, alpha = fuse_weights([v, 1., 2.], [0.4] * 3, [1.] * 3)
        assert alpha[0] >= prev - 1e-12
        prev = alpha[0]


def test_weighting_config_validation():
    from compact.exceptions import ConfigError
    with pytest.raises(ConfigError, match='weighting.tau'):
        WeightingConfig(tau=0.).validate()
    with pytest.raises(ConfigError, match='weighting.beta2'):
        WeightingConfig(beta2=-1.).validate()
    with pytest.raises(ConfigError, match='weighting.mi_probe'):
        WeightingConfig(mi_probe='oracle').validate()
    with pytest.raises(ConfigError, match='weighting.gamma'):
        WeightingConfig.from_dict({'gamma': 1.})


def test_score_instance_simplex_and_purity(model, hand_instance, vocab):
    cfg = WeightingConfig()
    a = score_instance(model, hand_instance, cfg, vocab)
    b = score_instance(model, hand_instance, cfg, vocab)
    a.check_simplex()
    assert a.teacher_ids == ['t0', 't1', 't2']
    assert np.all(a.s_mi >= 0) and np.all(a.s_ppl >= 0)
    for name in ('s_mi', 's_cons', 's_ppl', 'score', 'alpha'):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
    assert len(a.traces) == 3


@pytest.mark.parametrize('alpha', [
    [0.5, float('nan'), 0.5],
    [float('nan')] * 3,
    [0.7, 0.7, -0.4],
    [0.2, 0.2, 0.2],
])
def test_check_simplex_rejects(alpha):
    bundle = ScoreBundle(instance_id='x', teacher_ids=['a', 'b', 'c'], s_mi=np.zeros(3), s_cons=np.zeros(3),
                         s_ppl=np.zeros(3), score=np.zeros(3), alpha=np.asarray(alpha))
    with pytest.raises(CompactError, match='instance x'):
        bundle.check_simplex()


def test_identical_rationales_get_equal_weight(model, make_instance, vocab):
    bundle = score_instance(model, make_instance([CONCISE, CONCISE, WRONG]), WeightingConfig(), vocab)
    assert abs(bundle.alpha[0] - bundle.alpha[1]) < 1e-9


def test_single_rationale_has_full_weight(model, make_instance, vocab):
    bundle = score_instance(model, make_instance([VERBOSE]), WeightingConfig(), vocab)
    np.testing.assert_array_equal(bundle.alpha, [1.])
    np.testing.assert_array_equal(bundle.s_cons, [0.])


def test_score_batch_matches_sequential(model, corpus, vocab):
    cfg = WeightingConfig()
    threaded = score_batch(model, corpus[:4], cfg, vocab, workers=2)
    assert [b.instance_id for b in threaded] == [inst.id for inst in corpus[:4]]
    for inst, bundle in zip(corpus[:4], threaded):
        np.testing.assert_allclose(bundle.alpha, score_instance(model, inst, cfg, vocab).alpha, atol=1e-12)
