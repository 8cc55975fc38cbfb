"""
Transformer Model — architecture configuration and the parameter naming scheme.

Canonical parameter names (the contract surgery and parameter groups use):

    embedding.table                                  (vocab, model)
    output.projection                                (vocab, model), untied only
    encoder.layer.{i}.self_attn.{wq,wk,wv,wo}        (model, model)
    encoder.layer.{i}.ln_attn.{gain,bias}            (model,)
    encoder.layer.{i}.ln_ffn.{gain,bias}             (model,)
    encoder.layer.{i}.ffn.w1                         (hidden, model)
    encoder.layer.{i}.ffn.b1                         (hidden,)
    encoder.layer.{i}.ffn.w2                         (model, hidden)
    encoder.layer.{i}.ffn.b2                         (model,)
    decoder.layer.{i}.self_attn.{wq,wk,wv,wo}
    decoder.layer.{i}.cross_attn.{wq,wk,wv,wo}
    decoder.layer.{i}.ln_self / ln_cross / ln_ffn .{gain,bias}
    decoder.layer.{i}.ffn.{w1,b1,w2,b2}
    encoder.final_ln.{gain,bias}, decoder.final_ln.{gain,bias}

Weight matrices are stored (out_features, in_features).
"""

import logging
import re
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

logger = logging.getLogger(__name__)

ENCODER, DECODER = "encoder", "decoder"
STACKS = (ENCODER, DECODER)
EMBEDDING = "embedding.table"
OUTPUT_PROJECTION = "output.projection"
ATTN_MATRICES = ("wq", "wk", "wv", "wo")
FFN_TENSORS = ("w1", "b1", "w2", "b2")

_LAYER_RE = re.compile(r"^(encoder|decoder)\.layer\.(\d+)\.(.+)$")


class ModelConfig(BaseModel):
    """Encoder–decoder shape and regularization settings."""

    model_config = ConfigDict(protected_namespaces=())

    enc_layers: int = Field(4, ge=1)
    dec_layers: int = Field(4, ge=1)
    model_dim: int = Field(64, ge=1)
    ffn_hidden_dim: int = Field(128, ge=1)
    heads: int = Field(4, ge=1)
    vocab_size: int = Field(512, ge=5)
    attention_dropout: float = Field(0.1, ge=0.0, lt=1.0)
    label_smoothing_epsilon: float = Field(0.1, ge=0.0, lt=1.0)
    max_positions: int = Field(64, ge=2)
    pre_norm: bool = True
    tie_embeddings: bool = True
    layer_norm_eps: float = Field(1e-5, gt=0.0)

    @model_validator(mode="after")
    def _check_heads(self) -> "ModelConfig":
        if self.model_dim % self.heads != 0:
            raise ValueError(f"model_dim {self.model_dim} is not divisible by heads {self.heads}")
        if self.ffn_hidden_dim < self.model_dim:
            logger.warning(
                "ffn_hidden_dim %d is smaller than model_dim %d",
                self.ffn_hidden_dim, self.model_dim,
            )
        return self

    @property
    def head_dim(self) -> int:
        return self.model_dim // self.heads

    def layers(self, stack: str) -> int:
        return self.enc_layers if stack == ENCODER else self.dec_layers


# ------- Naming -------

def layer_prefix(stack: str, index: int) -> str:
    return f"{stack}.layer.{index}."


def parse_layer_name(name: str) -> Optional[Tuple[str, int, str]]:
    """(stack, layer index, local name) for layer tensors, else None."""
    match = _LAYER_RE.match(name)
    if not match:
        return None
    return match.group(1), int(match.group(2)), match.group(3)


def ffn_name(stack: str, index: int, tensor: str) -> str:
    return f"{layer_prefix(stack, index)}ffn.{tensor}"


def _layer_shapes(config: ModelConfig, stack: str) -> Dict[str, Tuple[int, ...]]:
    d, h = config.model_dim, config.ffn_hidden_dim
    attn_blocks = ["self_attn"] if stack == ENCODER else ["self_attn", "cross_attn"]
    norms = ["ln_attn", "ln_ffn"] if stack == ENCODER else ["ln_self", "ln_cross", "ln_ffn"]
    shapes: Dict[str, Tuple[int, ...]] = {}
    for block in attn_blocks:
        for m in ATTN_MATRICES:
            shapes[f"{block}.{m}"] = (d, d)
    for norm in norms:
        shapes[f"{norm}.gain"] = (d,)
        shapes[f"{norm}.bias"] = (d,)
    shapes["ffn.w1"] = (h, d)
    shapes["ffn.b1"] = (h,)
    shapes["ffn.w2"] = (d, h)
    shapes["ffn.b2"] = (d,)
    return shapes


def layer_local_names(stack: str) -> List[str]:
    """Local tensor names of one layer of `stack`, in sorted order."""
    probe = ModelConfig(enc_layers=1, dec_layers=1, model_dim=1, ffn_hidden_dim=1, heads=1)
    return sorted(_layer_shapes(probe, stack))


def param_shapes(config: ModelConfig) -> Dict[str, Tuple[int, ...]]:
    """Every parameter name mapped to its shape, sorted by name."""
    d = config.model_dim
    shapes: Dict[str, Tuple[int, ...]] = {EMBEDDING: (config.vocab_size, d)}
    if not config.tie_embeddings:
        shapes[OUTPUT_PROJECTION] = (config.vocab_size, d)
    for stack in STACKS:
        local = _layer_shapes(config, stack)
        for i in range(config.layers(stack)):
            for name, shape in local.items():
                shapes[layer_prefix(stack, i) + name] = shape
        shapes[f"{stack}.final_ln.gain"] = (d,)
        shapes[f"{stack}.final_ln.bias"] = (d,)
    return dict(sorted(shapes.items()))


def parameter_count(config: ModelConfig) -> int:
    total = 0
    for shape in param_shapes(config).values():
        n = 1
        for s in shape:
            n *= s
        total += n
    return total


def is_bias_like(name: str) -> bool:
    """Tensors initialized to zero."""
    return name.endswith(".bias") or name.endswith(".b1") or name.endswith(".b2")


def is_gain(name: str) -> bool:
    return name.endswith(".gain")
