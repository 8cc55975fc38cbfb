"""
MTGrow — Domain Models Package
Tensors and the autodiff tape, vocabularies, model configuration,
checkpoints and parameter groups.
"""

from app.models.checkpoint import Checkpoint
from app.models.param_group import ParamGroup
from app.models.tensor import Tape, Tensor
from app.models.transformer import ModelConfig
from app.models.vocab import Vocab, VocabMapping

__all__ = [
    "Checkpoint",
    "ModelConfig",
    "ParamGroup",
    "Tape",
    "Tensor",
    "Vocab",
    "VocabMapping",
]
