from .fusion import WeightingConfig, MI_PROBES, zscore, fuse_weights
from .adaptability import MiTrace, mi_from_trace, mi_adaptability
from .consensus import consensus, consensus_from_vectors
from .difficulty import difficulty, rationale_nll
from .bundle import ScoreBundle, score_instance, score_batch

__all__ = [
    'WeightingConfig', 'MI_PROBES', 'zscore', 'fuse_weights',
    'MiTrace', 'mi_from_trace', 'mi_adaptability',
    'consensus', 'consensus_from_vectors',
    'difficulty', 'rationale_nll',
    'ScoreBundle', 'score_instance', 'score_batch',
]
