import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Tuple

from compact.exceptions import DatasetError, VocabularyError
from compact.datasets.vocab import ANS, Vocabulary

INSTANCE_FIELDS = ('id', 'question', 'gold_answer', 'rationales')
RATIONALE_FIELDS = ('teacher', 'text')


def answer_span(token_ids, vocab: Vocabulary):
    """
    答案区间: 紧随 ``####`` 之后, 直到 EOS (不含) 或序列末尾
    :return: 半开区间 (start, stop)
    """
    ids = [int(t) for t in token_ids]
    markers = [i for i, t in enumerate(ids) if t == vocab.ans_id]
    if not markers:
        raise VocabularyError('answer marker {!r} not found'.format(ANS))
    if len(markers) > 1:
        raise VocabularyError('answer marker {!r} found {} times, at positions {}'.format(
            ANS, len(markers), markers))
    start = markers[0] + 1
    stop = ids.index(vocab.eos_id, start) if vocab.eos_id in ids[start:] else len(ids)
    if stop <= start:
        raise VocabularyError('empty answer after marker at position {}'.format(markers[0]))
    return start, stop


@dataclass
class Rationale:
    """
    单个教师的 CoT
    :param answer_span: 在 ``token_ids + [EOS]`` 中的答案区间, 加载时填充
    """
    teacher_id: str
    text: str
    token_ids: List[int] = field(default_factory=list)
    answer_span: Tuple[int, int] = (0, 0)

    @property
    def marker_index(self):
        return self.answer_span[0] - 1


@dataclass
class Instance:
    """
    蒸馏的基本单位: 问题, gold 答案以及 K 个教师 rationale
    """
    id: str
    question: str
    gold_answer: str
    rationales: List[Rationale]
    question_ids: List[int] = field(default_factory=list)
    gold_ids: List[int] = field(default_factory=list)

    @property
    def K(self):
        return len(self.rationales)

    @property
    def teacher_ids(self):
        return [r.teacher_id for r in self.rationales]

    def validate(self):
        if len(self.rationales) < 2:
            raise DatasetError('instance {} has {} rationales, need at least 2'.format(self.id, len(self.rationales)))
        seen = set()
        for r in self.rationales:
            if r.teacher_id in seen:
                raise DatasetError('instance {}: duplicate teacher_id {!r}'.format(self.id, r.teacher_id))
            seen.add(r.teacher_id)
        if not self.gold_answer.strip():
            raise DatasetError('instance {}: empty gold_answer'.format(self.id))
        for r in self.rationales:
            n = r.text.split().count(ANS)
            if n != 1:
                raise DatasetError('instance {}: rationale of {!r} has {} answer markers'.format(
                    self.id, r.teacher_id, n))
        return self

    def tokenize(self, vocab: Vocabulary):
        """
        填充 token id 以及答案区间
        """
        self.question_ids = vocab.tokenize(self.question)
        self.gold_ids = vocab.tokenize(self.gold_answer)
        if not self.gold_ids:
            raise DatasetError('instance {}: gold answer tokenizes to nothing'.format(self.id))
        for r in self.rationales:
            r.token_ids = vocab.tokenize(r.text)
            r.answer_span = answer_span(r.token_ids + [vocab.eos_id], vocab)
        return self

    def sequence(self, k, vocab: Vocabulary):
        """
        x + y_k 的完整 token 序列
        :return: (ids, (start, stop))
        """
        return vocab.frame(self.question_ids, self.rationales[k].token_ids)

    def check_length(self, max_len, answer_room=False):
        """
        检查每个分支的 BOS + x + y_k + EOS 是否放得进 ``max_len`` 个位置
        :param answer_room: 是否为 ``####`` 加 gold 答案的续写预留位置(forced_continuation 探针)
        """
        extra = 1 + len(self.gold_ids) if answer_room else 0
        for r in self.rationales:
            need = len(self.question_ids) + len(r.token_ids) + 2 + extra
            if need > max_len:
                raise DatasetError('instance {}: rationale of {!r} needs {} positions{}, max_seq_len is {}'.format(
                    self.id, r.teacher_id, need, ' with the answer continuation' if extra else '', max_len))
        return self

    def to_json(self):
        return {
            'id': self.id,
            'question': self.question,
            'gold_answer': self.gold_answer,
            'rationales': [{'teacher': r.teacher_id, 'text': r.text} for r in self.rationales],
        }


def _instance_from_row(row, lineno):
    if not isinstance(row, dict):
        raise DatasetError('expected a JSON object', row=lineno)
    for key in INSTANCE_FIELDS:
        if key not in row:
            raise DatasetError('missing field {!r}'.format(key), row=lineno)
    unknown = sorted(set(row) - set(INSTANCE_FIELDS))
    if unknown:
        raise DatasetError('unknown fields {}'.format(unknown), row=lineno)
    if not isinstance(row['rationales'], list):
        raise DatasetError('field "rationales" must be a list', row=lineno)
    rationales = []
    for r in row['rationales']:
        if not isinstance(r, dict):
            raise DatasetError('rationale must be a JSON object', row=lineno)
        for key in RATIONALE_FIELDS:
            if key not in r:
                raise DatasetError('rationale missing field {!r}'.format(key), row=lineno)
        unknown = sorted(set(r) - set(RATIONALE_FIELDS))
        if unknown:
            raise DatasetError('unknown rationale fields {}'.format(unknown), row=lineno)
        rationales.append(Rationale(teacher_id=str(r['teacher']), text=str(r['text'])))
    return Instance(id=str(row['id']), question=str(row['question']),
                    gold_answer=str(row['gold_answer']), rationales=rationales)


def load_jsonl(path, vocab: Vocabulary = None, max_len=None, answer_room=False):
    """
    读取 JSONL 数据集, 每行一个 instance
    :param path: 文件路径
    :param vocab: 用于 tokenize 的词表, 默认 ``Vocabulary.default()``
    :param max_len: 学生的 ``max_seq_len``, 给出时拒绝放不下的 rationale
    :param answer_room: 见 ``Instance.check_length``
    :return: Instance 列表
    """
    vocab = vocab or Vocabulary.default()
    instances = []
    try:
        f = open(path, 'r', encoding='utf-8')
    except OSError as e:
        raise DatasetError('cannot read dataset {}: {}'.format(path, e))
    with f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as e:
                raise DatasetError('invalid JSON: {}'.format(e), row=lineno)
            inst = _instance_from_row(row, lineno)
            try:
                inst.validate()
                inst.tokenize(vocab)
                if max_len is not None:
                    inst.check_length(max_len, answer_room)
            except DatasetError as e:
                raise DatasetError(str(e), row=lineno)
            except VocabularyError as e:
                raise DatasetError('instance {}: {}'.format(inst.id, e), row=lineno)
            instances.append(inst)
    return instances


def save_jsonl(instances, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        for inst in instances:
            f.write(json.dumps(inst.to_json(), ensure_ascii=False) + '\n')
    return path
