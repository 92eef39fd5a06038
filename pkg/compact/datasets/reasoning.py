"""
链式模运算推理任务以及脚本化的教师池.
每个教师按照自身的风格模板给出 CoT, 以 ``hallucination_rate`` 的概率篡改某一步中间结果并向后传播.
"""
import logging
from dataclasses import dataclass, asdict, fields
from typing import List, Tuple

import numpy as np

from compact.exceptions import ConfigError
from compact.utils import derive_seed
from compact.datasets.datasets import Instance, Rationale

logger = logging.getLogger(__name__)

STYLES = ('concise', 'verbose', 'stylized')
STEP_ORDERS = ('forward', 'regrouped')
OPS = ('+', '-', '*')
OP_VERBS = {'+': 'add', '-': 'subtract', '*': 'multiply by'}
SELF_CORRECTION_PROB = 0.2


@dataclass
class TaskConfig:
    """
    ((a op b) op c ...) mod m
    :param min_steps: 最少运算步数
    :param max_steps: 最多运算步数
    :param max_operand: 操作数上限(含)
    :param modulus: 模数
    """
    min_steps: int = 2
    max_steps: int = 5
    max_operand: int = 99
    modulus: int = 97

    def validate(self):
        if not 1 <= self.min_steps <= self.max_steps:
            raise ConfigError('data.task.min_steps', 'need 1 <= min_steps <= max_steps, got {} and {}'.format(
                self.min_steps, self.max_steps))
        if self.max_operand < 1:
            raise ConfigError('data.task.max_operand', 'must be >= 1, got {}'.format(self.max_operand))
        if self.modulus < 2:
            raise ConfigError('data.task.modulus', 'must be >= 2, got {}'.format(self.modulus))
        return self

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        for key in data:
            if key not in known:
                raise ConfigError('data.task.' + key, 'unknown key')
        return cls(**data)


@dataclass
class TeacherProfile:
    id: str
    style: str = 'concise'
    hallucination_rate: float = 0.
    step_order: str = 'forward'
    seed: int = 0

    def validate(self):
        if self.style not in STYLES:
            raise ConfigError('data.teachers.style', 'teacher {!r}: unknown style {!r}, expected one of {}'.format(
                self.id, self.style, STYLES))
        if self.step_order not in STEP_ORDERS:
            raise ConfigError('data.teachers.step_order', 'teacher {!r}: unknown step_order {!r}'.format(
                self.id, self.step_order))
        if not 0. <= self.hallucination_rate <= 1.:
            raise ConfigError('data.teachers.hallucination_rate', 'teacher {!r}: must be in [0, 1], got {}'.format(
                self.id, self.hallucination_rate))
        return self

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        for key in data:
            if key not in known:
                raise ConfigError('data.teachers.' + key, 'unknown key')
        if 'id' not in data:
            raise ConfigError('data.teachers.id', 'missing')
        return cls(**data)


def default_teachers(noisy=None, rate=0.4):
    """
    默认的四个教师: 简洁, 冗长, 冗长且先列计划, 以及风格化(低频措辞, 偶尔自我纠正)
    :param noisy: 需要设置幻觉率的教师 id
    :param rate: 该教师的幻觉率
    """
    pool = [
        TeacherProfile('t0', 'concise', 0., 'forward', 0),
        TeacherProfile('t1', 'verbose', 0., 'forward', 1),
        TeacherProfile('t2', 'verbose', 0., 'regrouped', 2),
        TeacherProfile('t3', 'stylized', 0., 'forward', 3),
    ]
    for p in pool:
        if p.id == noisy:
            p.hallucination_rate = rate
    return pool


@dataclass
class Problem:
    start: int
    steps: List[Tuple[str, int]]
    modulus: int

    def apply(self, value, k):
        op, b = self.steps[k]
        if op == '+':
            r = value + b
        elif op == '-':
            r = value - b
        else:
            r = value * b
        return r % self.modulus

    def values(self):
        out, v = [], self.start
        for k in range(len(self.steps)):
            v = self.apply(v, k)
            out.append(v)
        return out

    @property
    def answer(self):
        return self.values()[-1]

    def question(self):
        expr = str(self.start)
        for i, (op, b) in enumerate(self.steps):
            expr = '{} {} {}'.format(expr, op, b)
            if i < len(self.steps) - 1:
                expr = '( {} )'.format(expr)
        return 'What is ( {} ) mod {} ?'.format(expr, self.modulus)


def sample_problem(task: TaskConfig, rng: np.random.Generator):
    n = int(rng.integers(task.min_steps, task.max_steps + 1))
    start = int(rng.integers(0, task.max_operand + 1))
    steps = [(OPS[int(rng.integers(len(OPS)))], int(rng.integers(1, task.max_operand + 1))) for _ in range(n)]
    return Problem(start, steps, task.modulus)


def _step_text(style, problem, k, prev, result):
    op, b = problem.steps[k]
    m = problem.modulus
    if style == 'concise':
        return 'So {} {} {} mod {} = {} .'.format(prev, op, b, m, result)
    if style == 'verbose':
        return 'Because we {} {} , we compute {} {} {} mod {} = {} .'.format(OP_VERBS[op], b, prev, op, b, m, result)
    return 'Verily {} {} {} mod {} yields {} ; indeed {} it is .'.format(prev, op, b, m, result, result)


def _intro(style, start):
    if style == 'concise':
        return 'Start : {} .'.format(start)
    if style == 'verbose':
        return 'First , we begin with {} .'.format(start)
    return 'Behold the number {} .'.format(start)


def _conclusion(style, final):
    if style == 'concise':
        return 'Therefore the answer is {} . #### {}'.format(final, final)
    if style == 'verbose':
        return 'Thus the final answer is {} . #### {}'.format(final, final)
    return 'Hence : Thus the result is {} . #### {}'.format(final, final)


def _plan(problem):
    return 'Plan : ' + ' , then '.join('{} {}'.format(OP_VERBS[op], b) for op, b in problem.steps) + ' .'


def render_rationale(profile: TeacherProfile, problem: Problem, rng: np.random.Generator):
    """
    按教师风格生成 CoT
    :return: (text, corrupted, corrected), 当 ``corrupted and not corrected`` 时给出的答案错误
    """
    m = problem.modulus
    n = len(problem.steps)
    corrupted = bool(rng.random() < profile.hallucination_rate)
    bad_step = int(rng.integers(n)) if corrupted else -1
    offset = int(rng.integers(1, m))
    correct_here = profile.style == 'stylized' and bool(rng.random() < SELF_CORRECTION_PROB)
    recheck_step = int(rng.integers(n))

    parts = [_intro(profile.style, problem.start)]
    if profile.step_order == 'regrouped':
        parts.append(_plan(problem))
    corrected = False
    stated = []
    value = problem.start
    for k in range(n):
        true_next = problem.apply(value, k)
        result = (true_next + offset) % m if k == bad_step else true_next
        parts.append(_step_text(profile.style, problem, k, value, result))
        if correct_here and k == bad_step:
            op, b = problem.steps[k]
            parts.append('Wait , that is wrong . {} {} {} mod {} = {} .'.format(value, op, b, m, true_next))
            result = true_next
            corrected = True
        elif correct_here and not corrupted and k == recheck_step:
            op, b = problem.steps[k]
            parts.append('Wait , recheck : {} {} {} mod {} = {} .'.format(value, op, b, m, result))
        stated.append(result)
        value = result
    if corrupted and not corrected and value == problem.answer:
        # the error cancelled out downstream; break the last step instead
        value = (value + offset) % m
        parts[-1] = _step_text(profile.style, problem, n - 1, stated[-2] if n > 1 else problem.start, value)
    parts.append(_conclusion(profile.style, value))
    return ' '.join(parts), corrupted, corrected


def generate_dataset(n, profiles, task: TaskConfig = None, seed=0, id_prefix='inst'):
    """
    生成数据集, 是 (n, profiles, task, seed, id_prefix) 的纯函数
    :param n: instance 数量
    :param profiles: ``TeacherProfile`` 列表, 至少两个
    :param task: ``TaskConfig``
    :param seed: 全局种子
    :param id_prefix: instance id 前缀, 训练集与测试集使用不同前缀以保证互不相同
    :return: Instance 列表(尚未 tokenize)
    """
    task = (task or TaskConfig()).validate()
    profiles = list(profiles)
    if not profiles:
        raise ConfigError('data.teachers', 'empty teacher profile list')
    if len(profiles) < 2:
        raise ConfigError('data.teachers', 'need at least 2 teacher profiles, got {}'.format(len(profiles)))
    if len({p.id for p in profiles}) != len(profiles):
        raise ConfigError('data.teachers', 'teacher ids must be distinct')
    for p in profiles:
        p.validate()
    if n <= 0:
        raise ConfigError('data.n_train', 'instance count must be positive, got {}'.format(n))

    instances = []
    for i in range(n):
        inst_id = '{}-{:05d}'.format(id_prefix, i)
        problem = sample_problem(task, np.random.default_rng(derive_seed(seed, 'task', inst_id)))
        rationales = []
        for p in profiles:
            rng = np.random.default_rng(derive_seed(seed, 'teacher', p.id, p.seed, inst_id))
            text, _, _ = render_rationale(p, problem, rng)
            rationales.append(Rationale(teacher_id=p.id, text=text))
        instances.append(Instance(id=inst_id, question=problem.question(),
                                  gold_answer=str(problem.answer), rationales=rationales))
    logger.debug('generated %d instances with teachers %s', n, [p.id for p in profiles])
    return instances
