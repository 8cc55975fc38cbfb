"""
Growth Schemas — growth plans and surgery reports.

A SurgeryReport records, for every tensor of the grown checkpoint, the
provenance of each element and whether the element is "old" (derived from
seed weights, scaled by γ_old) or "new". Both are stored as run-length
encoded flat-index ranges.
"""

import enum
from typing import Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from app.models.vocab import Vocab


class EmbeddingInit(str, enum.Enum):
    UNK_COPY = "unk_copy"
    RANDOM_NEW = "random_new"
    RANDOM_ALL = "random_all"


class WidthInit(str, enum.Enum):
    CONCAT_NOISE = "concat_noise"
    LINEAR_INTERP = "linear_interp"
    RANDOM_EXPAND = "random_expand"


class NormMode(str, enum.Enum):
    FROBENIUS_MATCH = "frobenius_match"
    FUNCTION_PRESERVE = "function_preserve"
    NONE = "none"


class DepthInit(str, enum.Enum):
    AVERAGE_LAYER = "average_layer"
    CLOSEST_LAYER = "closest_layer"
    RANDOM = "random"


class InsertPosition(str, enum.Enum):
    BOTTOM = "bottom"
    TOP = "top"


class Provenance(str, enum.Enum):
    COPIED = "copied"
    COPIED_NOISY = "copied_noisy"
    INTERPOLATED = "interpolated"
    UNK_ROW = "unk_row"
    FRESH_RANDOM = "fresh_random"
    LAYER_AVERAGE = "layer_average"


PROVENANCE_CODES = {p: i for i, p in enumerate(Provenance)}
PROVENANCE_BY_CODE = {i: p for p, i in PROVENANCE_CODES.items()}


# ------- Plan -------

class GrowthPlan(BaseModel):
    """How to grow a seed checkpoint. Width fields are ignored at factor 1,
    depth fields when both insert counts are 0."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    embedding_init: EmbeddingInit = EmbeddingInit.UNK_COPY
    width_factor: int = Field(1, ge=1)
    width_init: WidthInit = WidthInit.CONCAT_NOISE
    noise_std: float = Field(0.01, ge=0.0)
    norm_mode: NormMode = NormMode.FROBENIUS_MATCH
    enc_insert: int = Field(0, ge=0)
    dec_insert: int = Field(0, ge=0)
    enc_position: InsertPosition = InsertPosition.BOTTOM
    dec_position: InsertPosition = InsertPosition.TOP
    depth_init: DepthInit = DepthInit.AVERAGE_LAYER
    seed: int = 0
    # Filled in at run time from the continual-phase vocabulary
    target_vocab: Optional[Vocab] = Field(default=None, exclude=True)

    @property
    def widens(self) -> bool:
        return self.width_factor > 1

    @property
    def deepens(self) -> bool:
        return self.enc_insert > 0 or self.dec_insert > 0


PLAN_PRESETS: Dict[str, dict] = {
    "base": {},
    "wide": {"width_factor": 2, "width_init": "concat_noise", "norm_mode": "frobenius_match", "noise_std": 0.01},
    "deep": {"enc_insert": 2, "dec_insert": 2, "depth_init": "average_layer"},
}


# ------- Report -------

class ProvenanceRun(BaseModel):
    """Flat elements [start, stop) share one provenance."""

    start: int
    stop: int
    provenance: Provenance


class IndexRange(BaseModel):
    start: int
    stop: int


class TensorProvenance(BaseModel):
    name: str
    shape: List[int]
    runs: List[ProvenanceRun]
    new_ranges: List[IndexRange]
    # Name of the seed tensor the old elements derive from (None for inserted layers)
    source: Optional[str] = None
    # Factor applied to the whole tensor after copying (norm matching of W2')
    scale: float = 1.0

    @property
    def size(self) -> int:
        return int(np.prod(self.shape)) if self.shape else 1

    def provenance_codes(self) -> np.ndarray:
        codes = np.full(self.size, -1, dtype=np.int64)
        for run in self.runs:
            codes[run.start:run.stop] = PROVENANCE_CODES[run.provenance]
        return codes.reshape(self.shape)

    def new_mask(self) -> np.ndarray:
        mask = np.zeros(self.size, dtype=bool)
        for r in self.new_ranges:
            mask[r.start:r.stop] = True
        return mask.reshape(self.shape)

    def old_mask(self) -> np.ndarray:
        return ~self.new_mask()

    def provenances(self) -> List[Provenance]:
        seen = []
        for run in self.runs:
            if run.provenance not in seen:
                seen.append(run.provenance)
        return seen


class SurgeryReport(BaseModel):
    coverage: float
    stages_applied: List[str]
    plan: GrowthPlan
    seed_config: dict
    grown_config: dict
    tensors: Dict[str, TensorProvenance]

    def new_mask(self, name: str) -> np.ndarray:
        return self.tensors[name].new_mask()

    def old_mask(self, name: str) -> np.ndarray:
        return self.tensors[name].old_mask()

    def new_element_count(self) -> int:
        return int(sum(t.new_mask().sum() for t in self.tensors.values()))

    def fully_new_tensors(self) -> List[str]:
        return sorted(n for n, t in self.tensors.items() if t.new_mask().all())


def encode_runs(codes: np.ndarray) -> List[ProvenanceRun]:
    flat = np.asarray(codes).reshape(-1)
    runs: List[ProvenanceRun] = []
    if flat.size == 0:
        return runs
    change = np.nonzero(np.diff(flat))[0] + 1
    starts = np.concatenate([[0], change])
    stops = np.concatenate([change, [flat.size]])
    for s, e in zip(starts, stops):
        runs.append(ProvenanceRun(start=int(s), stop=int(e), provenance=PROVENANCE_BY_CODE[int(flat[s])]))
    return runs


def encode_ranges(mask: np.ndarray) -> List[IndexRange]:
    flat = np.asarray(mask, dtype=np.int8).reshape(-1)
    if flat.size == 0:
        return []
    padded = np.concatenate([[0], flat, [0]])
    edges = np.nonzero(np.diff(padded))[0]
    return [IndexRange(start=int(s), stop=int(e)) for s, e in zip(edges[0::2], edges[1::2])]
