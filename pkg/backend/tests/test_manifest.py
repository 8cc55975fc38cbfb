"""
Test — Manifest Validation

Validates:
- Schema violations are reported with the dotted path of the field
- Dotted-path overrides
- Derived α for related low-resource languages
- Ablations change exactly one ingredient and never mutate their input
"""

import pytest

from app.config import settings
from app.exceptions import ManifestError, UnknownAxisError
from app.schemas.manifest import GrowthSource
from app.services.experiment_service import (
    Ablation,
    ablation,
    apply_overrides,
    effective_alpha,
    load_manifest,
    manifest_data,
    manifest_hash,
    validate_manifest,
)
from app.utils.helpers import dotted_diff, parse_override, set_dotted
from tests.conftest import tiny_manifest_data


@pytest.fixture
def manifest():
    return validate_manifest(tiny_manifest_data())


class TestValidation:
    """Schema errors carry a field path."""

    def test_omitted_fields_use_settings_defaults(self, monkeypatch):
        data = tiny_manifest_data()
        del data["seed"]
        del data["vocab"]["size"]
        monkeypatch.setattr(settings, "DEFAULT_SEED", 99)
        monkeypatch.setattr(settings, "DEFAULT_VOCAB_SIZE", 64)
        manifest = validate_manifest(data)
        assert manifest.seed == 99
        assert manifest.vocab.size == 64

    def test_valid(self, manifest):
        assert manifest.growth_plan.width_factor == 2
        assert manifest.direction_names(["xxa"]) == ["eng-xxa", "xxa-eng"]

    def test_field_path_reported(self):
        data = tiny_manifest_data()
        data["continual"]["gamma_old"]["start"] = 0
        with pytest.raises(ManifestError) as exc:
            validate_manifest(data)
        assert exc.value.field_path == "continual.gamma_old.start"
        assert exc.value.detail.startswith("continual.gamma_old.start: ")

    def test_old_and_new_overlap(self):
        with pytest.raises(ManifestError, match="both old and new"):
            validate_manifest(tiny_manifest_data(new_languages=["xxb", "xxc"]))

    def test_undeclared_language(self):
        with pytest.raises(ManifestError, match="not declared"):
            validate_manifest(tiny_manifest_data(old_languages=["xxa", "zzz"]))

    def test_unknown_plan(self):
        with pytest.raises(ManifestError, match="plan"):
            validate_manifest(tiny_manifest_data(plan="huge"))

    def test_alpha_names_known_directions(self):
        data = tiny_manifest_data()
        data["continual"]["alpha"]["eng-zzz"] = 2.0
        with pytest.raises(ManifestError, match="undeclared directions"):
            validate_manifest(data)

    def test_pivot_is_implicit(self):
        data = tiny_manifest_data()
        data["languages"].append({"code": "eng", "script": "latn"})
        with pytest.raises(ManifestError, match="pivot"):
            validate_manifest(data)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ManifestError):
            load_manifest(tmp_path / "absent.json")

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json", encoding="utf-8")
        with pytest.raises(ManifestError, match="not valid JSON"):
            load_manifest(path)


class TestOverrides:
    """--set dotted.path=value."""

    def test_json_values(self):
        assert parse_override("continual.total_steps=10") == ("continual.total_steps", 10)
        assert parse_override("name=run-a") == ("name", "run-a")
        assert parse_override("continual.gamma_old={\"start\": 0.5}") == ("continual.gamma_old", {"start": 0.5})

    def test_malformed(self):
        with pytest.raises(ManifestError):
            parse_override("continual.total_steps")

    def test_apply(self, manifest_file):
        manifest = load_manifest(manifest_file, ["continual.total_steps=9", "evaluation.beam=2"])
        assert manifest.continual.total_steps == 9
        assert manifest.evaluation.beam == 2

    def test_alpha_leaf_may_be_added(self, manifest):
        changed = apply_overrides(manifest, ["continual.alpha.eng-xxd=3.0"])
        assert changed.continual.alpha["eng-xxd"] == 3.0
        assert "eng-xxd" not in manifest.continual.alpha

    def test_unknown_field(self):
        with pytest.raises(ManifestError) as exc:
            set_dotted(tiny_manifest_data(), "continual.gamma_olde.start", 1.0)
        assert exc.value.field_path == "continual.gamma_olde"

    def test_invalid_value_reports_path(self, manifest):
        with pytest.raises(ManifestError) as exc:
            apply_overrides(manifest, ["model.heads=3"])
        assert exc.value.field_path is not None
        assert exc.value.field_path.startswith("model")

    def test_hash_tracks_content(self, manifest):
        assert manifest_hash(manifest) == manifest_hash(validate_manifest(tiny_manifest_data()))
        assert manifest_hash(apply_overrides(manifest, ["seed=78"])) != manifest_hash(manifest)


class TestEffectiveAlpha:
    """Up-sampling related languages."""

    def test_off_by_default(self, manifest):
        assert effective_alpha(manifest) == {"eng-xxc": 5.0, "xxc-eng": 5.0}

    def test_related_low_resource_language_boosted(self):
        data = tiny_manifest_data(upsample_related=True)
        data["continual"]["alpha"] = {"eng-xxd": 4.0}
        alpha = effective_alpha(validate_manifest(data))
        assert alpha["eng-xxb"] == alpha["xxb-eng"] == 4.0
        assert "eng-xxa" not in alpha


class TestAblation:
    """One ingredient off at a time."""

    def _diff(self, manifest, axis):
        return dotted_diff(manifest_data(manifest), manifest_data(ablation(manifest, axis)))

    def test_no_lr_scaling_touches_only_gamma(self, manifest):
        diff = self._diff(manifest, Ablation.NO_LR_SCALING.value)
        assert diff
        assert all(
            path.startswith(("continual.gamma_old.", "continual.gamma_new.")) or path == "continual.fisher_gamma"
            for path in diff
        ), diff
        derived = ablation(manifest, "no_lr_scaling")
        assert derived.continual.gamma_old.start == derived.continual.gamma_new.end == 1.0

    def test_random_init_all(self, manifest):
        assert self._diff(manifest, "random_init_all") == ["growth_source"]
        assert ablation(manifest, "random_init_all").growth_source == GrowthSource.FRESH

    def test_random_init_new(self, manifest):
        diff = self._diff(manifest, "random_init_new")
        assert sorted(diff) == [
            "plans.wide.depth_init", "plans.wide.embedding_init", "plans.wide.width_init",
        ]

    def test_no_upsampling(self):
        manifest = validate_manifest(tiny_manifest_data(upsample_related=True))
        derived = ablation(manifest, "no_upsampling")
        assert set(derived.continual.alpha.values()) == {1.0}
        assert derived.upsample_related is False
        assert effective_alpha(derived) == {"eng-xxc": 1.0, "xxc-eng": 1.0}

    def test_input_not_mutated(self, manifest):
        before = manifest_hash(manifest)
        for axis in Ablation:
            ablation(manifest, axis.value)
        assert manifest_hash(manifest) == before

    def test_unknown_axis(self, manifest):
        with pytest.raises(UnknownAxisError):
            ablation(manifest, "no_dropout")
