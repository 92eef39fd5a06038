from compact.exceptions import VocabularyError

PAD = '<pad>'
BOS = '<bos>'
EOS = '<eos>'
ANS = '####'
SPECIAL_TOKENS = (PAD, BOS, EOS, ANS)
DIGITS = tuple('0123456789')
SYMBOLS = ('+', '-', '*', '=', '(', ')', 'mod', '.', ',', '?', ':', ';')
THINKING_TOKENS = ('Therefore', 'So', 'Because', 'Thus', 'Wait')
# words used by the teacher templates and the probe corpora
TEMPLATE_WORDS = (
    'What', 'is', 'Start', 'the', 'answer', 'First', 'we', 'begin', 'with', 'add', 'subtract',
    'multiply', 'by', 'compute', 'final', 'Plan', 'then', 'Behold', 'number', 'Verily', 'yields',
    'indeed', 'it', 'Hence', 'result', 'recheck', 'that', 'wrong', 'Reverse', 'sequence', 'reversed',
)


class Vocabulary(object):
    """
    词级别的词表, 数字按位切分为单个 token, 思考词(Therefore, So, ...)均为单个 token
    :param tokens: 互不相同的 token 列表
    :param thinking_tokens: 思考词, 必须都在 ``tokens`` 中
    """

    def __init__(self, tokens, thinking_tokens=THINKING_TOKENS):
        tokens = list(tokens)
        if len(set(tokens)) != len(tokens):
            dup = sorted({t for t in tokens if tokens.count(t) > 1})
            raise VocabularyError('duplicate tokens in vocabulary: {}'.format(dup))
        for t in SPECIAL_TOKENS + DIGITS:
            if t not in tokens:
                raise VocabularyError('vocabulary is missing required token {!r}'.format(t))
        missing = [t for t in thinking_tokens if t not in tokens]
        if missing:
            raise VocabularyError('thinking tokens not in vocabulary: {}'.format(missing))
        self.tokens = tokens
        self.token_to_id = {t: i for i, t in enumerate(tokens)}
        self.thinking_token_ids = frozenset(self.token_to_id[t] for t in thinking_tokens)
        self.digit_ids = frozenset(self.token_to_id[d] for d in DIGITS)
        self.pad_id = self.token_to_id[PAD]
        self.bos_id = self.token_to_id[BOS]
        self.eos_id = self.token_to_id[EOS]
        self.ans_id = self.token_to_id[ANS]

    @classmethod
    def default(cls):
        return cls(SPECIAL_TOKENS + DIGITS + SYMBOLS + THINKING_TOKENS + TEMPLATE_WORDS)

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, word):
        return word in self.token_to_id

    def is_thinking(self, token_id):
        return token_id in self.thinking_token_ids

    def tokenize(self, text):
        """
        按空白切分, 数字逐位输出
        :param text: 文本
        :return: token-id 列表
        """
        ids = []
        for word in text.split():
            if word in self.token_to_id:
                ids.append(self.token_to_id[word])
            elif word.isdigit() and word.isascii():
                ids.extend(self.token_to_id[ch] for ch in word)
            else:
                raise VocabularyError('out-of-vocabulary word {!r}'.format(word))
        return ids

    def detokenize(self, ids, skip_special=True):
        """
        连续的数字 token 合并为一个数, 其余 token 以空格连接
        """
        words = []
        prev_digit = False
        for i in ids:
            i = int(i)
            if not 0 <= i < len(self.tokens):
                raise VocabularyError('token id {} outside vocabulary of size {}'.format(i, len(self.tokens)))
            if skip_special and i in (self.pad_id, self.bos_id, self.eos_id):
                prev_digit = False
                continue
            tok = self.tokens[i]
            if i in self.digit_ids and prev_digit:
                words[-1] += tok
            else:
                words.append(tok)
            prev_digit = i in self.digit_ids
        return ' '.join(words)

    def frame(self, question_ids, rationale_ids):
        """
        BOS + x + y_k + EOS
        :return: (ids, (start, stop)), ``[start, stop)`` 覆盖 rationale 以及末尾的 EOS
        """
        ids = [self.bos_id] + list(question_ids) + list(rationale_ids) + [self.eos_id]
        return ids, (1 + len(question_ids), len(ids))

    def frame_prompt(self, question_ids):
        return [self.bos_id] + list(question_ids)
