"""
Hash Service — SHA256 hashing for artifacts, manifests and the provenance ledger.

Integrity function:
- Every stage output is hashed so downstream stages can prove what they consumed
- Ledger entries form a hash chain (each entry references previous hash)
- Corpus pairs are hashed individually to enforce train/test disjointness
- Named RNG streams are derived from a master seed by hashing labels
"""

import hashlib
import json
from pathlib import Path
from typing import Iterable, Optional, Union


def hash_text(text: str) -> str:
    """SHA256 hex digest of a UTF-8 string."""
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def hash_bytes(payload: bytes) -> str:
    return hashlib.sha256(payload).hexdigest()


def hash_pair(source: str, target: str) -> str:
    """Hash one parallel sentence pair; the tab keeps the two sides apart."""
    return hash_text(f"{source}\t{target}")


def hash_file(path: Union[str, Path], chunk_size: int = 1 << 20) -> str:
    """Streamed SHA256 of a file on disk."""
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        while True:
            chunk = fh.read(chunk_size)
            if not chunk:
                break
            digest.update(chunk)
    return digest.hexdigest()


def hash_json(data) -> str:
    """
    Generate deterministic hash of a JSON-serializable object.
    Key order does not matter.
    """
    canonical = json.dumps(data, sort_keys=True, default=str, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def stable_seed(seed: int, *labels: Union[str, int]) -> int:
    """
    Derive an independent 64-bit seed from a master seed and labels.

    Used so that e.g. the widening noise of `encoder.layer.2.ffn.w1` can be
    regenerated without replaying every other random draw.
    """
    payload = "/".join([str(seed), *(str(label) for label in labels)])
    return int.from_bytes(hashlib.sha256(payload.encode("utf-8")).digest()[:8], "little")


def hash_ledger_entry(
    stage: str,
    manifest_hash: str,
    stamp_hash: str,
    timestamp: str,
    previous_hash: Optional[str] = None,
) -> str:
    """
    Generate SHA256 hash for a ledger entry.
    Creates hash chain by incorporating the previous entry's hash.

    Chain formula: SHA256(previous_hash + stage + manifest_hash + stamp_hash + timestamp)
    """
    payload = f"{previous_hash or 'GENESIS'}{stage}{manifest_hash}{stamp_hash}{timestamp}"
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def verify_hash_chain(entries: Iterable[dict]) -> bool:
    """
    Verify integrity of the ledger hash chain.
    Returns True if chain is valid, False if tampering detected.
    """
    previous = None
    for entry in entries:
        expected_hash = hash_ledger_entry(
            stage=entry["stage"],
            manifest_hash=entry["manifest_hash"],
            stamp_hash=entry["stamp_hash"],
            timestamp=entry["timestamp"],
            previous_hash=entry.get("previous_hash"),
        )
        if expected_hash != entry["hash_signature"]:
            return False
        # The first entry must start the chain
        if entry.get("previous_hash") != previous:
            return False
        previous = entry["hash_signature"]
    return True
