"""
Audit Service — append-only stage ledger with hash-chain integrity.

Every completed stage appends one JSON line to `ledger.jsonl`. Each
entry's hash incorporates the previous entry's hash, forming a
tamper-evident chain that can be verified at any time.

The ledger is the only artifact that carries wall-clock timestamps;
stamps and reports do not, so reruns stay byte-identical.
"""

import json
import logging
from datetime import datetime, timezone
from pathlib import Path
from typing import List, Optional, Union

from app.exceptions import CheckpointError
from app.services.hash_service import hash_ledger_entry, verify_hash_chain

logger = logging.getLogger(__name__)

LEDGER_FILE = "ledger.jsonl"


def read_ledger(path: Union[str, Path]) -> List[dict]:
    path = Path(path)
    if not path.exists():
        return []
    entries = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                entries.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise CheckpointError(f"{path}:{line_no}: unreadable ledger entry ({exc})") from exc
    return entries


def append_entry(
    path: Union[str, Path],
    stage: str,
    manifest_hash: str,
    stamp_hash: str,
    timestamp: Optional[str] = None,
) -> dict:
    """
    Append a new entry to the ledger, chained to the last entry's hash.
    Existing lines are never rewritten.
    """
    path = Path(path)
    entries = read_ledger(path)
    previous_hash = entries[-1]["hash_signature"] if entries else None
    timestamp = timestamp or datetime.now(timezone.utc).isoformat()

    entry = {
        "stage": stage,
        "manifest_hash": manifest_hash,
        "stamp_hash": stamp_hash,
        "timestamp": timestamp,
        "previous_hash": previous_hash,
        "hash_signature": hash_ledger_entry(stage, manifest_hash, stamp_hash, timestamp, previous_hash),
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(entry, sort_keys=True) + "\n")
    logger.info("Ledger: %s recorded (%s)", stage, entry["hash_signature"][:12])
    return entry


def verify_ledger(path: Union[str, Path]) -> bool:
    """True when the ledger's hash chain is intact (an empty ledger is valid)."""
    return verify_hash_chain(read_ledger(path))
