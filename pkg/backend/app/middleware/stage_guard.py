"""
Stage Guard — refuses to run a stage on missing or foreign upstream outputs.

Checks, per required upstream stage:
- its stamp exists (otherwise the stage has not run)
- the stamp was written under the current manifest hash
- every output the stamp lists still exists with the recorded hash

Single artifacts given by path (report --compare) are traced back to the
stamp that lists them and checked the same way.
"""

import logging
from pathlib import Path
from typing import Dict, List

from app.exceptions import ManifestMismatchError, StageDependencyError
from app.services.hash_service import hash_file
from app.utils.helpers import read_json

logger = logging.getLogger(__name__)


def stamp_path(root: Path, stage: str) -> Path:
    return Path(root) / "stamps" / f"{stage}.json"


def require_stage(root: Path, stage: str, manifest_hash: str) -> Dict:
    """The upstream stamp of `stage`, after checking it belongs to this manifest."""
    path = stamp_path(root, stage)
    if not path.exists():
        raise StageDependencyError(f"stage '{stage}' has not run: {path} is missing")
    stamp = read_json(path)
    if stamp.get("manifest_hash") != manifest_hash:
        raise ManifestMismatchError(
            f"stage '{stage}' outputs in {root} were produced by manifest "
            f"{str(stamp.get('manifest_hash'))[:12]}, not {manifest_hash[:12]}"
        )
    for relpath, digest in sorted(stamp.get("outputs", {}).items()):
        artifact = Path(root) / relpath
        if not artifact.exists():
            raise StageDependencyError(f"artifact {artifact} of stage '{stage}' is missing")
        if hash_file(artifact) != digest:
            raise StageDependencyError(f"artifact {artifact} changed after stage '{stage}' wrote it")
    return stamp


def require_stages(root: Path, manifest_hash: str, *stages: str) -> List[Dict]:
    return [require_stage(root, stage, manifest_hash) for stage in stages]


def require_artifact_stamp(path: Path, manifest_hash: str) -> Dict:
    """The stamp of the stage that wrote `path`, found in the nearest enclosing run directory."""
    path = Path(path).resolve()
    root = next((p for p in path.parents if (p / "stamps").is_dir()), None)
    if root is None:
        raise StageDependencyError(f"{path} is not inside a run directory with stamps")
    relpath = path.relative_to(root).as_posix()
    digest = hash_file(path)
    for candidate in sorted((root / "stamps").glob("*.json")):
        stamp = read_json(candidate)
        if stamp.get("outputs", {}).get(relpath) != digest:
            continue
        if stamp.get("manifest_hash") != manifest_hash:
            raise ManifestMismatchError(
                f"{path} was produced by manifest {str(stamp.get('manifest_hash'))[:12]}, "
                f"not {manifest_hash[:12]}"
            )
        return stamp
    raise StageDependencyError(f"{path} is not an unchanged output of any stamped stage in {root}")
