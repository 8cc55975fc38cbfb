"""
Data Schemas — synthetic languages and English-centric translation directions.
"""

import enum
from typing import List, Tuple

from pydantic import BaseModel, Field, field_validator

PIVOT = "eng"
IDENTITY_CIPHER = "identity"


class Tier(str, enum.Enum):
    HIGH = "high"
    MID = "mid"
    LOW = "low"
    V_LOW = "v_low"


class ReorderKind(str, enum.Enum):
    NONE = "none"
    SWAP_ADJACENT = "swap_adjacent"
    REVERSE_WINDOW = "reverse_window"


class ReorderRule(BaseModel):
    kind: ReorderKind = ReorderKind.NONE
    window: int = Field(3, ge=2)


class LanguageSpec(BaseModel):
    """
    One synthetic language.

    cipher_seed has the form "<family>.<name>"; languages of one family
    share a base permutation of the latent lexicon and are "related".
    The special value "identity" renders latent ids unchanged.
    """

    code: str = Field(..., pattern=r"^[a-z_0-9]+$")
    script: str = Field(..., pattern=r"^[a-z]+$")
    cipher_seed: str = IDENTITY_CIPHER
    reorder: ReorderRule = Field(default_factory=ReorderRule)
    tier: Tier = Tier.LOW

    @property
    def family(self) -> str:
        return self.cipher_seed.split(".")[0]

    def related_to(self, other: "LanguageSpec") -> bool:
        return self.cipher_seed != IDENTITY_CIPHER and self.family == other.family


class DirectionSpec(BaseModel):
    """One translation direction with its corpus; one side is always English."""

    source: str
    target: str
    tier: Tier
    alpha: float = Field(1.0, ge=1.0)
    pairs: List[Tuple[str, str]] = Field(default_factory=list)

    @field_validator("target")
    @classmethod
    def _english_centric(cls, target: str, info) -> str:
        source = info.data.get("source")
        if PIVOT not in (source, target):
            raise ValueError(f"direction {source}-{target} is not English-centric")
        return target

    @property
    def name(self) -> str:
        return direction_name(self.source, self.target)

    @property
    def size(self) -> int:
        return len(self.pairs)

    @property
    def language(self) -> str:
        """The non-English side."""
        return self.target if self.source == PIVOT else self.source


def direction_name(source: str, target: str) -> str:
    return f"{source}-{target}"
