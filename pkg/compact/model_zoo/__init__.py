__all__ = ['base_module', 'student', 'checkpoint']

from . import (
    base_module,
    student,
    checkpoint
)
from .student import ModelConfig, StudentModel, ForwardTrace, ProjectionPair, parameter_count
from .checkpoint import save_checkpoint, load_checkpoint, save_checkpoint_file, load_checkpoint_file
