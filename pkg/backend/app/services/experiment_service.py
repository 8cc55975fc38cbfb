"""
Experiment Service — manifest loading, overrides, hashing and ablations.

Schema violations surface as ManifestError with the dotted path of the
offending field, e.g. `continual.gamma_old.start: Input should be greater than 0`.
"""

import json
import logging
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, Union

from pydantic import ValidationError

from app.exceptions import ManifestError, UnknownAxisError
from app.schemas.data import PIVOT, Tier, direction_name
from app.schemas.growth import DepthInit, EmbeddingInit, WidthInit
from app.schemas.manifest import ExperimentManifest, GrowthSource
from app.schemas.training import GammaSchedule
from app.services.hash_service import hash_json
from app.utils.helpers import parse_override, set_dotted

logger = logging.getLogger(__name__)


class Ablation(str, Enum):
    RANDOM_INIT_ALL = "random_init_all"
    RANDOM_INIT_NEW = "random_init_new"
    NO_UPSAMPLING = "no_upsampling"
    NO_LR_SCALING = "no_lr_scaling"


def _field_path(error: dict) -> str:
    return ".".join(str(part) for part in error.get("loc", ()))


def validate_manifest(data: dict) -> ExperimentManifest:
    try:
        return ExperimentManifest.model_validate(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        raise ManifestError(first.get("msg", "invalid value"), _field_path(first) or None) from exc


def load_manifest(path: Union[str, Path], overrides: Iterable[str] = ()) -> ExperimentManifest:
    """Read a JSON manifest and apply `dotted.path=value` overrides before validation."""
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"manifest {path} does not exist")
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest {path} is not valid JSON: {exc}") from exc
    return apply_overrides(data, overrides)


def apply_overrides(data: Union[dict, ExperimentManifest], overrides: Iterable[str]) -> ExperimentManifest:
    if isinstance(data, ExperimentManifest):
        data = manifest_data(data)
    for text in overrides:
        dotted, value = parse_override(text)
        set_dotted(data, dotted, value)
        logger.info("Manifest override %s = %r", dotted, value)
    return validate_manifest(data)


def manifest_data(manifest: ExperimentManifest) -> dict:
    return manifest.model_dump(mode="json")


def manifest_hash(manifest: ExperimentManifest) -> str:
    return hash_json(manifest_data(manifest))


# ------- Derived settings -------

def effective_alpha(manifest: ExperimentManifest) -> Dict[str, float]:
    """
    Continual-phase α per direction name. With upsample_related, an old
    low/v_low language in the same family as a new language gets the
    largest α configured for that new language's directions.
    """
    alpha = dict(manifest.continual.alpha)
    if not manifest.upsample_related:
        return alpha
    for new_code in manifest.new_languages:
        new_spec = manifest.language(new_code)
        boost = max(
            alpha.get(direction_name(PIVOT, new_code), 1.0),
            alpha.get(direction_name(new_code, PIVOT), 1.0),
        )
        for old_code in manifest.old_languages:
            old_spec = manifest.language(old_code)
            if old_spec.tier in (Tier.LOW, Tier.V_LOW) and old_spec.related_to(new_spec):
                for name in (direction_name(PIVOT, old_code), direction_name(old_code, PIVOT)):
                    alpha[name] = max(alpha.get(name, 1.0), boost)
    return alpha


# ------- Ablations -------

def ablation(manifest: ExperimentManifest, axis: str) -> ExperimentManifest:
    """The manifest with exactly one ingredient of the recipe switched off."""
    try:
        axis = Ablation(axis)
    except ValueError:
        raise UnknownAxisError(
            f"unknown ablation axis '{axis}'; expected one of {[a.value for a in Ablation]}"
        ) from None

    data = manifest_data(manifest)
    if axis == Ablation.RANDOM_INIT_ALL:
        data["growth_source"] = GrowthSource.FRESH.value
    elif axis == Ablation.RANDOM_INIT_NEW:
        plan = data["plans"][manifest.plan]
        plan["embedding_init"] = EmbeddingInit.RANDOM_NEW.value
        plan["width_init"] = WidthInit.RANDOM_EXPAND.value
        plan["depth_init"] = DepthInit.RANDOM.value
    elif axis == Ablation.NO_UPSAMPLING:
        data["continual"]["alpha"] = {name: 1.0 for name in data["continual"]["alpha"]}
        data["upsample_related"] = False
    elif axis == Ablation.NO_LR_SCALING:
        ones = GammaSchedule.constant(1.0).model_dump(mode="json")
        data["continual"]["gamma_old"] = dict(ones)
        data["continual"]["gamma_new"] = dict(ones)
        data["continual"]["fisher_gamma"] = 1.0
    logger.info("Derived %s ablation of manifest '%s'", axis.value, manifest.name)
    return validate_manifest(data)
