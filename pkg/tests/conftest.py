import pytest
import torch

from compact.datasets import Vocabulary, Instance, Rationale, TaskConfig, default_teachers, generate_dataset
from compact.model_zoo import ModelConfig, StudentModel

QUESTION = 'What is ( ( 12 + 7 ) * 3 ) mod 97 ?'
CONCISE = 'Start : 12 . So 12 + 7 mod 97 = 19 . So 19 * 3 mod 97 = 57 . Therefore the answer is 57 . #### 57'
VERBOSE = ('First , we begin with 12 . Because we add 7 , we compute 12 + 7 mod 97 = 19 . '
           'Because we multiply by 3 , we compute 19 * 3 mod 97 = 57 . Thus the final answer is 57 . #### 57')
WRONG = 'Start : 12 . So 12 + 7 mod 97 = 20 . So 20 * 3 mod 97 = 60 . Therefore the answer is 60 . #### 60'


@pytest.fixture(scope='session')
def vocab():
    return Vocabulary.default()


@pytest.fixture
def make_config(vocab):
    def _make(**kwargs):
        params = dict(vocab_size=len(vocab), n_layers=2, n_heads=2, d_model=16, max_seq_len=256,
                      adapter_rank=2, seed=0)
        params.update(kwargs)
        return ModelConfig(**params)
    return _make


@pytest.fixture
def model(make_config):
    return StudentModel(make_config())


@pytest.fixture
def full_model(make_config):
    return StudentModel(make_config(adapter_rank=0))


@pytest.fixture
def uniform_model(make_config):
    net = StudentModel(make_config())
    with torch.no_grad():
        net.lm_head.weight.zero_()
    return net


@pytest.fixture
def make_instance(vocab):
    def _make(texts, gold='57', question=QUESTION, inst_id='hand-0'):
        rationales = [Rationale(teacher_id='t{}'.format(k), text=t) for k, t in enumerate(texts)]
        return Instance(id=inst_id, question=question, gold_answer=gold, rationales=rationales).tokenize(vocab)
    return _make


@pytest.fixture
def hand_instance(make_instance):
    return make_instance([CONCISE, VERBOSE, WRONG])


@pytest.fixture
def small_task():
    return TaskConfig(min_steps=2, max_steps=3)


@pytest.fixture
def corpus(vocab, small_task):
    return [inst.validate().tokenize(vocab)
            for inst in generate_dataset(8, default_teachers(), small_task, seed=1, id_prefix='train')]
