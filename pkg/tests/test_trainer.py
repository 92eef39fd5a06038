import numpy as np
import pytest
import torch

from compact.exceptions import CompactError, ConfigError, DatasetError, DivergenceError
from compact.model_zoo import save_checkpoint, load_checkpoint, StudentModel
from compact.base.scoring import WeightingConfig, score_instance
from compact.base.utils import LossConfig
from compact.distill import MetricLedger, TrainerConfig, train, verify_gradient_equivalence, evaluate, \
    predict_answer, effective_weighting, mode_weights
from compact.datasets import default_teachers, generate_dataset
from tests.conftest import CONCISE, VERBOSE


def _config(tmp_path=None, **kwargs):
    params = dict(epochs=1, batch_size=4, progress=False, workers=1,
                  checkpoint_dir=str(tmp_path / 'ckpt') if tmp_path is not None else None)
    params.update(kwargs)
    return TrainerConfig(**params)


def _run(model, corpus, vocab, tcfg, wcfg=None, lcfg=None):
    return train(model, corpus, tcfg, wcfg or WeightingConfig(), lcfg or LossConfig(), vocab)


def _copy(model):
    return load_checkpoint(save_checkpoint(model))


def test_zero_epochs_is_identity(model, corpus, vocab, tmp_path):
    before = save_checkpoint(model)
    model, ledger = _run(model, corpus, vocab, _config(tmp_path, epochs=0))
    assert save_checkpoint(model) == before
    assert (tmp_path / 'ckpt' / 'ckpt_epoch0.bin').read_bytes() == before
    assert len(ledger) == 0


def test_compact_weights_are_on_simplex(model, corpus, vocab, tmp_path):
    _, ledger = _run(model, corpus, vocab, _config(tmp_path))
    steps = ledger.steps()
    assert sorted(steps) == list(range(len(corpus)))
    for rows in steps.values():
        assert len(rows) == 4
        assert abs(sum(r.alpha for r in rows) - 1.) < 1e-9
        assert all(r.alpha >= 0 for r in rows)
        assert rows[0].l_final == pytest.approx(sum(r.alpha * r.l_total for r in rows), abs=1e-9)
    assert (tmp_path / 'ckpt' / 'ckpt_epoch1.bin').exists()


def test_single_teacher_is_one_hot(model, corpus, vocab):
    _, ledger = _run(model, corpus, vocab, _config(mode='single_teacher', teacher='t1'))
    for r in ledger:
        assert r.alpha == (1. if r.teacher_id == 't1' else 0.)


def test_direct_average_is_uniform(model, corpus, vocab):
    _, ledger = _run(model, corpus, vocab, _config(mode='direct_average'))
    assert all(r.alpha == 0.25 for r in ledger)
    # scores are still logged under the override
    assert any(r.s_ppl > 0 for r in ledger)


def test_zero_betas_give_uniform_weights(model, corpus, vocab):
    wcfg = WeightingConfig(beta1=0., beta2=0., beta3=0.)
    _, ledger = _run(model, corpus[:2], vocab, _config(), wcfg)
    np.testing.assert_allclose([r.alpha for r in ledger], 0.25, atol=1e-12)


def test_ablation_modes_zero_one_beta():
    w = WeightingConfig(beta1=1., beta2=2., beta3=3.)
    assert effective_weighting(_config(mode='ablate_mi'), w).beta1 == 0.
    assert effective_weighting(_config(mode='ablate_cons'), w).beta2 == 0.
    assert effective_weighting(_config(mode='ablate_ppl'), w).beta3 == 0.
    assert effective_weighting(_config(), w) == w


def test_training_is_deterministic(make_config, corpus, vocab):
    a_model, a = _run(StudentModel(make_config()), corpus, vocab, _config(batch_size=3, seed=5))
    b_model, b = _run(StudentModel(make_config()), corpus, vocab, _config(batch_size=3, seed=5))
    assert a == b
    assert save_checkpoint(a_model) == save_checkpoint(b_model)


def test_training_moves_adapters_only(model, corpus, vocab):
    base = {n: p.detach().clone() for n, p in model.named_parameters() if not p.requires_grad}
    before = save_checkpoint(model)
    _run(model, corpus[:4], vocab, _config())
    assert save_checkpoint(model) != before
    for n, p in model.named_parameters():
        if n in base:
            assert torch.equal(p, base[n])


def test_single_teacher_needs_known_teacher(model, hand_instance, vocab):
    bundle = score_instance(model, hand_instance, WeightingConfig(), vocab)
    with pytest.raises(DatasetError, match='t9'):
        mode_weights(_config(mode='single_teacher', teacher='t9'), bundle)


@pytest.mark.parametrize('kwargs, key', [
    (dict(mode='teacher_forcing'), 'trainer.mode'),
    (dict(mode='single_teacher'), 'trainer.teacher'),
    (dict(learning_rate=0.), 'trainer.learning_rate'),
    (dict(grad_clip=0.), 'trainer.grad_clip'),
    (dict(fusion='average'), 'trainer.fusion'),
])
def test_trainer_config_validation(kwargs, key):
    with pytest.raises(ConfigError, match=key):
        TrainerConfig(**kwargs).validate()


def test_empty_dataset_is_rejected(model, vocab):
    with pytest.raises(DatasetError):
        _run(model, [], vocab, _config())
    with pytest.raises(DatasetError):
        evaluate(model, [], vocab)


def test_gradient_equivalence(model, hand_instance, make_instance, vocab):
    lcfg = LossConfig(lambda_mcon=0.5)
    bundle = score_instance(model, hand_instance, WeightingConfig(), vocab)
    assert verify_gradient_equivalence(model, hand_instance, bundle, lcfg, vocab) < 1e-10
    one_hot = bundle.with_alpha([0., 0., 1.])
    assert verify_gradient_equivalence(model, hand_instance, one_hot, lcfg, vocab) < 1e-10
    single = make_instance([VERBOSE])
    bundle = score_instance(model, single, WeightingConfig(), vocab)
    assert verify_gradient_equivalence(model, single, bundle, lcfg, vocab) < 1e-10


def test_task_vectors_match_objective_fusion(make_config, corpus, vocab):
    a_model, a = _run(StudentModel(make_config()), corpus, vocab, _config(max_steps=1))
    b_model, b = _run(StudentModel(make_config()), corpus, vocab, _config(max_steps=1, fusion='task_vectors'))
    assert [r.l_final for r in a] == pytest.approx([r.l_final for r in b], abs=1e-9)
    for (n, p), (_, q) in zip(a_model.named_trainable_parameters(), b_model.named_trainable_parameters()):
        np.testing.assert_allclose(p.detach().numpy(), q.detach().numpy(), atol=1e-9, err_msg=n)


def test_epoch_refresh_uses_epoch_snapshot(model, corpus, vocab):
    snapshot = _copy(model)
    _, ledger = _run(model, corpus[:4], vocab, _config(batch_size=1, score_refresh='epoch'))
    for step, rows in ledger.steps().items():
        inst = next(i for i in corpus if i.id == rows[0].instance_id)
        expected = score_instance(snapshot, inst, WeightingConfig(), vocab).alpha
        np.testing.assert_allclose([r.alpha for r in rows], expected, atol=1e-12)


def test_visit_refresh_rescores_live_parameters(model, corpus, vocab):
    snapshot = _copy(model)
    _, ledger = _run(model, corpus[:4], vocab, _config(batch_size=1, learning_rate=1e-2))
    last = ledger.steps()[3]
    inst = next(i for i in corpus if i.id == last[0].instance_id)
    stale = score_instance(snapshot, inst, WeightingConfig(), vocab)
    assert not np.allclose([r.s_ppl for r in last], stale.s_ppl, atol=1e-12, rtol=0)


def test_max_steps_stops_early(model, corpus, vocab, tmp_path):
    _, ledger = _run(model, corpus, vocab, _config(tmp_path, epochs=5, batch_size=2, max_steps=2))
    assert sorted(ledger.steps()) == [0, 1, 2, 3]
    assert sorted(p.name for p in (tmp_path / 'ckpt').iterdir()) == ['ckpt_epoch1.bin']


@pytest.mark.parametrize('mode', ['compact', 'direct_average', 'single_teacher'])
def test_divergence_is_reported(model, corpus, vocab, mode):
    with torch.no_grad():
        model.tok_emb.weight.fill_(float('nan'))
    with pytest.raises(DivergenceError) as info:
        _run(model, corpus[:2], vocab, _config(mode=mode, teacher='t0'))
    assert info.value.step == 0


def test_ledger_csv_round_trip(model, corpus, vocab, tmp_path):
    _, ledger = _run(model, corpus[:4], vocab, _config())
    loaded = MetricLedger.load_csv(ledger.save_csv(tmp_path / 'ledger.csv'))
    assert loaded == ledger
    assert loaded.teacher_ids == ['t0', 't1', 't2', 't3']


def test_ledger_rejects_repeated_step(model, hand_instance, vocab):
    from compact.base.utils import fused_loss
    bundle = score_instance(model, hand_instance, WeightingConfig(), vocab)
    _, reports = fused_loss(model, hand_instance, bundle, LossConfig(), vocab)
    ledger = MetricLedger()
    ledger.append(0, 1, bundle, reports, 1.)
    with pytest.raises(CompactError):
        ledger.append(0, 1, bundle, reports, 1.)


def test_ledger_rejects_bad_header(tmp_path):
    path = tmp_path / 'bad.csv'
    path.write_text('step,epoch\n0,1\n', encoding='utf-8')
    with pytest.raises(DatasetError, match='row 1'):
        MetricLedger.load_csv(path)
    with pytest.raises(DatasetError, match='cannot read ledger'):
        MetricLedger.load_csv(tmp_path / 'absent.csv')


def test_predict_answer_budget(model, hand_instance, vocab):
    pred = predict_answer(model, hand_instance, vocab, max_new_tokens=4)
    assert pred is None or isinstance(pred, str)


def test_reloaded_checkpoint_evaluates_the_same(model, corpus, vocab):
    data = corpus[:4]
    _run(model, data, vocab, _config())
    restored = load_checkpoint(save_checkpoint(model))
    assert [predict_answer(restored, inst, vocab, max_new_tokens=16) for inst in data] == \
        [predict_answer(model, inst, vocab, max_new_tokens=16) for inst in data]
    assert evaluate(restored, data, vocab, max_new_tokens=16) == evaluate(model, data, vocab, max_new_tokens=16)


@pytest.mark.slow
def test_memorized_instance_is_answered(make_config, make_instance, vocab):
    inst = make_instance([CONCISE, VERBOSE])
    model = StudentModel(make_config(d_model=32, adapter_rank=0))
    _run(model, [inst], vocab, _config(mode='single_teacher', teacher='t0', epochs=400, learning_rate=1e-2,
                                       weight_decay=0.), lcfg=LossConfig(lambda_mcon=0.))
    assert predict_answer(model, inst, vocab, max_new_tokens=64) == '57'
    assert evaluate(model, [inst], vocab, max_new_tokens=64) == 1.
    assert evaluate(load_checkpoint(save_checkpoint(model)), [inst], vocab, max_new_tokens=64) == 1.


@pytest.mark.slow
def test_untrained_accuracy_is_low(model, vocab, small_task):
    data = [inst.validate().tokenize(vocab)
            for inst in generate_dataset(100, default_teachers(), small_task, seed=2, id_prefix='test')]
    assert evaluate(model, data, vocab, max_new_tokens=64) < 0.2


@pytest.mark.slow
def test_training_lowers_the_loss(model, corpus, vocab):
    _, ledger = _run(model, corpus[:4], vocab, _config(epochs=6, batch_size=2, learning_rate=1e-2))
    first = np.mean([r.l_final for r in ledger if r.epoch == 1])
    last = np.mean([r.l_final for r in ledger if r.epoch == 6])
    assert last < first
