"""
Manifest Schemas — one JSON document describing a whole experiment.

A manifest fixes the languages and their old/new split, the tokenizer,
the seed architecture, both training phases, the growth plans and the
evaluation settings. Every stage output is stamped with the manifest's
hash.
"""

import enum
from typing import Dict, List, Optional

from pydantic import BaseModel, Field, field_validator, model_validator

from app.config import settings
from app.models.transformer import ModelConfig
from app.schemas.data import PIVOT, LanguageSpec, direction_name
from app.schemas.growth import PLAN_PRESETS, GrowthPlan
from app.schemas.training import TrainConfig


class GrowthSource(str, enum.Enum):
    SURGERY = "surgery"
    FRESH = "fresh"


class VocabSettings(BaseModel):
    size: int = Field(default_factory=lambda: settings.DEFAULT_VOCAB_SIZE, ge=8)
    temperature: float = Field(2.0, ge=1.0)


class DataSettings(BaseModel):
    tier_scale: float = Field(0.1, gt=0.0)
    dev_pairs: int = Field(20, ge=1)
    test_pairs: int = Field(40, ge=1)


class EvalSettings(BaseModel):
    beam: int = Field(4, ge=1)
    length_penalty: float = Field(1.0, ge=0.0)
    # Segments scored per direction (None = the whole test set)
    limit: Optional[int] = Field(None, ge=1)
    savings_fraction: float = Field(0.95, gt=0.0, le=1.0)


def _default_plans() -> Dict[str, GrowthPlan]:
    return {name: GrowthPlan(**fields) for name, fields in PLAN_PRESETS.items()}


class ExperimentManifest(BaseModel):
    name: str = Field("default", min_length=1)
    seed: int = Field(default_factory=lambda: settings.DEFAULT_SEED)
    output_dir: str = Field("default", min_length=1)

    languages: List[LanguageSpec]
    old_languages: List[str] = Field(..., min_length=1)
    new_languages: List[str] = Field(default_factory=list)
    data: DataSettings = Field(default_factory=DataSettings)
    vocab: VocabSettings = Field(default_factory=VocabSettings)

    model: ModelConfig = Field(default_factory=ModelConfig)
    seed_training: TrainConfig = Field(default_factory=TrainConfig)

    plans: Dict[str, GrowthPlan] = Field(default_factory=_default_plans)
    plan: str = "wide"
    growth_source: GrowthSource = GrowthSource.SURGERY

    continual: TrainConfig = Field(default_factory=TrainConfig)
    # Old low-resource languages related to a new language share its α
    upsample_related: bool = False

    baseline_plan: str = "wide"
    baseline_steps: Optional[int] = Field(None, ge=1)

    evaluation: EvalSettings = Field(default_factory=EvalSettings)

    @field_validator("languages")
    @classmethod
    def _unique_codes(cls, languages: List[LanguageSpec]) -> List[LanguageSpec]:
        codes = [spec.code for spec in languages]
        duplicates = sorted({c for c in codes if codes.count(c) > 1})
        if duplicates:
            raise ValueError(f"duplicate language codes {duplicates}")
        if PIVOT in codes:
            raise ValueError(f"'{PIVOT}' is the pivot language and is implicit")
        return languages

    @model_validator(mode="after")
    def _consistent(self) -> "ExperimentManifest":
        declared = {spec.code for spec in self.languages}
        overlap = sorted(set(self.old_languages) & set(self.new_languages))
        if overlap:
            raise ValueError(f"languages {overlap} are both old and new")
        unknown = sorted((set(self.old_languages) | set(self.new_languages)) - declared)
        if unknown:
            raise ValueError(f"languages {unknown} are not declared")
        for field in ("plan", "baseline_plan"):
            if getattr(self, field) not in self.plans:
                raise ValueError(f"{field} '{getattr(self, field)}' is not one of {sorted(self.plans)}")
        names = set(self.direction_names())
        for phase in ("seed_training", "continual"):
            stray = sorted(set(getattr(self, phase).alpha) - names)
            if stray:
                raise ValueError(f"{phase}.alpha names undeclared directions {stray}")
        return self

    def language(self, code: str) -> LanguageSpec:
        for spec in self.languages:
            if spec.code == code:
                return spec
        raise KeyError(code)

    def direction_names(self, codes: Optional[List[str]] = None) -> List[str]:
        codes = codes if codes is not None else self.old_languages + self.new_languages
        out = []
        for code in sorted(codes):
            out.append(direction_name(PIVOT, code))
            out.append(direction_name(code, PIVOT))
        return out

    @property
    def growth_plan(self) -> GrowthPlan:
        return self.plans[self.plan]
