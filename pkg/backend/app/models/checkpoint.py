"""
Checkpoint Model — the unit surgery, training and probes exchange.

Holds the model configuration, the vocabulary, the named parameter map,
optional Adam moment buffers per parameter (absent = fresh) and the global
optimizer step counter, which persists across training phases.
"""

from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from app.exceptions import CheckpointError
from app.models.tensor import Tensor
from app.models.transformer import EMBEDDING, ModelConfig, param_shapes
from app.models.vocab import Vocab

Moments = Tuple[np.ndarray, np.ndarray]


@dataclass
class Checkpoint:
    config: ModelConfig
    vocab: Vocab
    params: Dict[str, Tensor]
    moments: Dict[str, Moments] = field(default_factory=dict)
    step: int = 0

    def validate(self) -> None:
        """Raise CheckpointError unless names, shapes and vocabulary agree."""
        expected = param_shapes(self.config)
        if set(expected) != set(self.params):
            missing = sorted(set(expected) - set(self.params))
            extra = sorted(set(self.params) - set(expected))
            raise CheckpointError(f"parameter names disagree with config: missing={missing} extra={extra}")
        for name, shape in expected.items():
            if self.params[name].shape != shape:
                raise CheckpointError(
                    f"{name}: shape {self.params[name].shape} does not match config shape {shape}"
                )
        if self.vocab.size != self.params[EMBEDDING].shape[0] or self.vocab.size != self.config.vocab_size:
            raise CheckpointError(
                f"vocabulary size {self.vocab.size} disagrees with embedding rows "
                f"{self.params[EMBEDDING].shape[0]} / config {self.config.vocab_size}"
            )
        for name, (m, v) in self.moments.items():
            if name not in self.params:
                raise CheckpointError(f"moment buffers for unknown parameter {name}")
            if m.shape != self.params[name].shape or v.shape != self.params[name].shape:
                raise CheckpointError(f"moment buffers for {name} do not match its shape")

    def copy(self) -> "Checkpoint":
        """Deep copy; the result shares no arrays with self."""
        return Checkpoint(
            config=self.config.model_copy(deep=True),
            vocab=self.vocab,
            params={name: Tensor(t.data.copy(), requires_grad=True) for name, t in self.params.items()},
            moments={name: (m.copy(), v.copy()) for name, (m, v) in self.moments.items()},
            step=self.step,
        )

    def array(self, name: str) -> np.ndarray:
        return self.params[name].data

    def reset_moments(self, name: str) -> None:
        """Zero a tensor's moments when present, resized to its current shape."""
        if name in self.moments:
            shape = self.params[name].shape
            self.moments[name] = (np.zeros(shape), np.zeros(shape))

    def equals(self, other: "Checkpoint") -> bool:
        """Bitwise field-wise equality."""
        if not isinstance(other, Checkpoint):
            return False
        if self.config != other.config or self.vocab != other.vocab or self.step != other.step:
            return False
        if set(self.params) != set(other.params) or set(self.moments) != set(other.moments):
            return False
        for name, t in self.params.items():
            if not _bitwise_equal(t.data, other.params[name].data):
                return False
        for name, (m, v) in self.moments.items():
            om, ov = other.moments[name]
            if not (_bitwise_equal(m, om) and _bitwise_equal(v, ov)):
                return False
        return True


def _bitwise_equal(a: np.ndarray, b: np.ndarray) -> bool:
    return a.shape == b.shape and a.astype("<f8").tobytes() == b.astype("<f8").tobytes()


def from_params(
    config: ModelConfig, vocab: Vocab, params: Dict[str, Tensor], step: int = 0
) -> Checkpoint:
    ckpt = Checkpoint(config=config, vocab=vocab, params=params, step=step)
    ckpt.validate()
    return ckpt

