from .vocab import Vocabulary, THINKING_TOKENS, TEMPLATE_WORDS, SPECIAL_TOKENS, ANS, BOS, EOS, PAD
from .datasets import Instance, Rationale, answer_span, load_jsonl, save_jsonl
from .reasoning import TaskConfig, TeacherProfile, Problem, default_teachers, generate_dataset, render_rationale, \
    sample_problem
from .probes import ood_probe_corpus, id_probe_corpus, reversal_sentence

__all__ = [
    'Vocabulary', 'THINKING_TOKENS', 'TEMPLATE_WORDS', 'SPECIAL_TOKENS', 'ANS', 'BOS', 'EOS', 'PAD',
    'Instance', 'Rationale', 'answer_span', 'load_jsonl', 'save_jsonl',
    'TaskConfig', 'TeacherProfile', 'Problem', 'default_teachers', 'generate_dataset', 'render_rationale',
    'sample_problem', 'ood_probe_corpus', 'id_probe_corpus', 'reversal_sentence',
]
