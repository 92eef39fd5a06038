from .tape import ComputationTape, TapeNode, backward, current_tape
from .gradcheck import finite_diff_gradient, gradient_check, relative_error
from . import functional

__all__ = [
    'ComputationTape', 'TapeNode', 'backward', 'current_tape',
    'finite_diff_gradient', 'gradient_check', 'relative_error',
    'functional'
]
