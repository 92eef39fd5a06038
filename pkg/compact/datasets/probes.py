"""
PCA 漂移分析使用的探针语料: 分布内为留出的任务问题, 分布外为共享词表的序列反转描述
"""
import numpy as np

from compact.utils import derive_seed
from compact.datasets.vocab import Vocabulary


def reversal_sentence(items):
    seq = ' , '.join(str(i) for i in items)
    rev = ' , '.join(str(i) for i in reversed(items))
    return 'Reverse the sequence {} . So the reversed sequence is {} .'.format(seq, rev)


def ood_probe_corpus(vocab: Vocabulary, n, seed=0, min_len=3, max_len=6):
    """
    :return: n 条 BOS 开头的 token-id 序列
    """
    rng = np.random.default_rng(derive_seed(seed, 'probe', 'ood'))
    corpus = []
    for _ in range(n):
        length = int(rng.integers(min_len, max_len + 1))
        items = [int(x) for x in rng.integers(0, 10, size=length)]
        corpus.append([vocab.bos_id] + vocab.tokenize(reversal_sentence(items)))
    return corpus


def id_probe_corpus(instances, vocab: Vocabulary):
    """
    已 tokenize 的 instance 的问题部分, 以 BOS 开头
    """
    return [vocab.frame_prompt(inst.question_ids or vocab.tokenize(inst.question)) for inst in instances]
