"""
Test — Pipeline and CLI

Validates:
- Stages run in order and refuse missing or foreign upstream outputs
- Exit codes of the command-line entry point
- Stamps are byte-identical across reruns; the ledger chain verifies
- Growth plan selection and ablation manifests from the CLI
"""

import json

import pytest

from app.exceptions import (
    ConfigError,
    ManifestError,
    ManifestMismatchError,
    StageDependencyError,
    UnknownAxisError,
)
from app.main import main
from app.middleware.stage_guard import require_artifact_stamp
from app.models.vocab import tag_token
from app.services import checkpoint_store
from app.services.audit_service import LEDGER_FILE, read_ledger, verify_ledger
from app.services.experiment_service import load_manifest
from app.services.pipeline_service import Workspace, gen_data, grow_stage, read_vocab, train_seed
from app.utils.helpers import read_json


def cli(manifest_file, root, *args):
    return main(["--manifest", str(manifest_file), "--output-root", str(root), *args])


@pytest.fixture
def workspace(manifest_file, tmp_path):
    return Workspace(load_manifest(manifest_file), tmp_path / "runs" / "tiny")


class TestStages:
    """Stage ordering and outputs."""

    def test_data_and_vocabularies(self, workspace):
        stamp = gen_data(workspace)
        assert "data/train/eng-xxa.tsv" in stamp["outputs"]
        assert "data/test/eng-xxd.tsv" in stamp["outputs"]
        seed_vocab = read_vocab(workspace.vocab_file("seed"))
        full_vocab = read_vocab(workspace.vocab_file("full"))
        assert seed_vocab.lookup(tag_token("xxc")) is None
        assert full_vocab.tag_id("xxc") > 0
        assert stamp["manifest_hash"] == workspace.manifest_hash
        assert "timestamp" not in json.dumps(stamp)

    def test_grow_before_seed_training(self, workspace):
        gen_data(workspace)
        with pytest.raises(StageDependencyError, match="train-seed"):
            grow_stage(workspace)

    def test_changed_artifact_detected(self, workspace):
        gen_data(workspace)
        workspace.corpus("train", "xxa").write_text("a\tb\n", encoding="utf-8")
        with pytest.raises(StageDependencyError, match="changed"):
            train_seed(workspace)

    def test_foreign_manifest_detected(self, workspace, manifest_file):
        gen_data(workspace)
        other = Workspace(load_manifest(manifest_file, ["seed=78"]), workspace.root)
        with pytest.raises(ManifestMismatchError):
            train_seed(other)

    def test_grow_plan_selection(self, workspace):
        gen_data(workspace)
        train_seed(workspace)
        stamp = grow_stage(workspace, "deep")
        assert stamp["extra"] == {"plan": "deep"}
        grown = checkpoint_store.load(workspace.checkpoint("grown"))
        assert grown.config.enc_layers == 3
        assert grown.config.ffn_hidden_dim == 16
        assert grown.vocab.tag_id("xxd") > 0
        with pytest.raises(ConfigError):
            grow_stage(workspace, "huge")


class TestCli:
    """Entry point and exit codes."""

    def test_full_run(self, manifest_file, tmp_path, capsys):
        root = tmp_path / "runs"
        assert cli(manifest_file, root, "run") == 0
        out = root / "tiny"
        for name in ("eval_continual.json", "eval_baseline.json", "comparison.json",
                     "forgetting.json", "norm_drift_continual.csv"):
            assert (out / "reports" / name).exists(), name
        entries = read_ledger(out / LEDGER_FILE)
        assert [e["stage"] for e in entries][:3] == ["gen-data", "train-seed", "grow"]
        assert entries[-1]["stage"] == "report"
        assert verify_ledger(out / LEDGER_FILE)
        comparison = read_json(out / "reports" / "comparison.json")
        assert "all" in comparison["bleu"]
        assert json.loads(capsys.readouterr().out)["stage"] == "report"

    def test_rerun_stamps_identical(self, manifest_file, tmp_path):
        for name in ("a", "b"):
            root = tmp_path / name
            for command in (["gen-data"], ["train-seed"], ["grow"], ["train-continual"]):
                assert cli(manifest_file, root, *command) == 0
        for stage in ("gen-data", "train-seed", "grow", "train-continual"):
            first = (tmp_path / "a" / "tiny" / "stamps" / f"{stage}.json").read_bytes()
            second = (tmp_path / "b" / "tiny" / "stamps" / f"{stage}.json").read_bytes()
            assert first == second, stage

    def test_grow_plan_flag_keeps_manifest_hash(self, manifest_file, tmp_path):
        root = tmp_path / "runs"
        for command in (["gen-data"], ["train-seed"], ["grow", "--plan", "wide"]):
            assert cli(manifest_file, root, *command) == 0
        stamp = read_json(root / "tiny" / "stamps" / "grow.json")
        seed_stamp = read_json(root / "tiny" / "stamps" / "train-seed.json")
        assert stamp["manifest_hash"] == seed_stamp["manifest_hash"]
        assert stamp["extra"]["plan"] == "wide"

    def test_missing_upstream_exit_code(self, manifest_file, tmp_path):
        assert cli(manifest_file, tmp_path, "train-seed") == StageDependencyError.exit_code

    def test_manifest_mismatch_exit_code(self, manifest_file, tmp_path):
        assert cli(manifest_file, tmp_path, "gen-data") == 0
        code = main(["--manifest", str(manifest_file), "--output-root", str(tmp_path),
                     "--set", "seed=78", "train-seed"])
        assert code == ManifestMismatchError.exit_code

    def test_bad_override_exit_code(self, manifest_file, tmp_path):
        code = main(["--manifest", str(manifest_file), "--output-root", str(tmp_path),
                     "--set", "continual.gamma_old.start=0", "gen-data"])
        assert code == ManifestError.exit_code

    def test_ablation_manifest(self, manifest_file, tmp_path):
        out = tmp_path / "ablated.json"
        assert cli(manifest_file, tmp_path, "ablation", "--axis", "no_lr_scaling", "--out", str(out)) == 0
        derived = load_manifest(out)
        assert derived.output_dir == "tiny-no_lr_scaling"
        assert derived.continual.gamma_old.start == 1.0

    def test_unknown_axis_exit_code(self, manifest_file, tmp_path):
        code = cli(manifest_file, tmp_path, "ablation", "--axis", "no_dropout", "--out", str(tmp_path / "x.json"))
        assert code == UnknownAxisError.exit_code


class TestCompareReports:
    """report --compare only accepts stamped evaluation reports of this manifest."""

    @pytest.fixture
    def grown_reports(self, manifest_file, tmp_path):
        paths = {}
        for name, overrides in (("a", []), ("b", ["--set", "seed=78"])):
            root = tmp_path / name
            for command in (["gen-data"], ["train-seed"], ["grow"], ["evaluate", "--checkpoint", "grown"]):
                code = main(["--manifest", str(manifest_file), "--output-root", str(root), *overrides, *command])
                assert code == 0, command
            paths[name] = root / "tiny" / "reports" / "eval_grown.json"
        return paths

    def test_same_run(self, manifest_file, tmp_path, grown_reports):
        report = str(grown_reports["a"])
        assert cli(manifest_file, tmp_path / "a", "report", "--compare", report, report) == 0
        comparison = read_json(tmp_path / "a" / "tiny" / "reports" / "comparison.json")
        assert comparison["mean_delta"] == 0.0

    def test_foreign_run_rejected(self, manifest_file, tmp_path, grown_reports):
        code = cli(
            manifest_file, tmp_path / "a", "report", "--compare",
            str(grown_reports["a"]), str(grown_reports["b"]),
        )
        assert code == ManifestMismatchError.exit_code
        assert not (tmp_path / "a" / "tiny" / "reports" / "comparison.json").exists()

    def test_unstamped_copy_rejected(self, manifest_file, tmp_path, grown_reports):
        loose = tmp_path / "loose" / "reports" / "eval_grown.json"
        loose.parent.mkdir(parents=True)
        loose.write_bytes(grown_reports["a"].read_bytes())
        code = cli(manifest_file, tmp_path / "a", "report", "--compare", str(grown_reports["a"]), str(loose))
        assert code == StageDependencyError.exit_code

    def test_artifact_traced_to_its_stamp(self, workspace):
        gen_data(workspace)
        corpus = workspace.corpus("train", "xxa")
        assert require_artifact_stamp(corpus, workspace.manifest_hash)["stage"] == "gen-data"
        with pytest.raises(ManifestMismatchError):
            require_artifact_stamp(corpus, "0" * 64)
        corpus.write_text("a\tb\n", encoding="utf-8")
        with pytest.raises(StageDependencyError):
            require_artifact_stamp(corpus, workspace.manifest_hash)
