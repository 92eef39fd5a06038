from .ledger import MetricLedger, LedgerRow, LEDGER_COLUMNS
from .trainer import TrainerConfig, MODES, train, verify_gradient_equivalence, evaluate, predict_answer, \
    mode_weights, effective_weighting

__all__ = [
    'MetricLedger', 'LedgerRow', 'LEDGER_COLUMNS',
    'TrainerConfig', 'MODES', 'train', 'verify_gradient_equivalence', 'evaluate', 'predict_answer',
    'mode_weights', 'effective_weighting',
]
