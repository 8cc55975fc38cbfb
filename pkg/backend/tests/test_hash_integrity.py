"""
Test — Hash Integrity

Validates:
- SHA256 hashing of text, sentence pairs and JSON
- Named seed derivation
- Ledger hash chain generation and verification
- Tamper detection
"""

import json

from app.services.audit_service import append_entry, read_ledger, verify_ledger
from app.services.hash_service import (
    hash_json,
    hash_ledger_entry,
    hash_pair,
    hash_text,
    stable_seed,
    verify_hash_chain,
)


class TestHashing:
    """Deterministic digests."""

    def test_deterministic_hashing(self):
        text = "lat_tok_3 lat_tok_17 lat_tok_5"
        assert hash_text(text) == hash_text(text)

    def test_hash_format(self):
        """Hash must be 64-char lowercase hex (SHA256)."""
        h = hash_text("anything")
        assert len(h) == 64
        assert all(c in "0123456789abcdef" for c in h)

    def test_pair_sides_kept_apart(self):
        assert hash_pair("a b", "c") != hash_pair("a", "b c")

    def test_json_key_order_irrelevant(self):
        assert hash_json({"b": 2, "a": 1}) == hash_json({"a": 1, "b": 2})
        assert hash_json({"a": 1}) != hash_json({"a": 2})


class TestStableSeed:
    """Named RNG streams."""

    def test_deterministic_and_distinct(self):
        assert stable_seed(5, "width") == stable_seed(5, "width")
        assert stable_seed(5, "width") != stable_seed(5, "depth")
        assert stable_seed(5, "width") != stable_seed(6, "width")

    def test_64_bit(self):
        assert 0 <= stable_seed(0, "x", 3) < 2 ** 64


class TestHashChain:
    """Ledger chain generation and verification."""

    def test_genesis_entry(self):
        h = hash_ledger_entry("gen-data", "m" * 64, "s" * 64, "2026-01-01T00:00:00", None)
        assert h == hash_text("GENESIS" + "gen-data" + "m" * 64 + "s" * 64 + "2026-01-01T00:00:00")

    def test_chain_linkage(self):
        h1 = hash_ledger_entry("gen-data", "m", "s1", "t1", None)
        chained = hash_ledger_entry("train-seed", "m", "s2", "t2", h1)
        assert chained != hash_ledger_entry("train-seed", "m", "s2", "t2", None)

    def test_empty_chain_is_valid(self):
        assert verify_hash_chain([]) is True


class TestLedger:
    """Append-only stage ledger on disk."""

    def test_append_and_verify(self, tmp_path):
        path = tmp_path / "ledger.jsonl"
        first = append_entry(path, "gen-data", "m", "s1", "2026-01-01T00:00:00")
        second = append_entry(path, "train-seed", "m", "s2", "2026-01-01T00:05:00")
        assert first["previous_hash"] is None
        assert second["previous_hash"] == first["hash_signature"]
        assert read_ledger(path) == [first, second]
        assert verify_ledger(path) is True

    def test_existing_lines_untouched(self, tmp_path):
        path = tmp_path / "ledger.jsonl"
        append_entry(path, "gen-data", "m", "s1")
        before = path.read_bytes()
        append_entry(path, "train-seed", "m", "s2")
        assert path.read_bytes().startswith(before)

    def test_tampered_entry_detected(self, tmp_path):
        path = tmp_path / "ledger.jsonl"
        append_entry(path, "gen-data", "m", "s1", "t1")
        append_entry(path, "train-seed", "m", "s2", "t2")
        entries = read_ledger(path)
        entries[0]["stamp_hash"] = "forged"
        path.write_text("".join(json.dumps(e, sort_keys=True) + "\n" for e in entries), encoding="utf-8")
        assert verify_ledger(path) is False

    def test_broken_link_detected(self, tmp_path):
        path = tmp_path / "ledger.jsonl"
        append_entry(path, "gen-data", "m", "s1", "t1")
        append_entry(path, "train-seed", "m", "s2", "t2")
        entries = read_ledger(path)
        del entries[0]
        assert verify_hash_chain(entries) is False

    def test_missing_ledger_is_empty(self, tmp_path):
        assert read_ledger(tmp_path / "none.jsonl") == []
        assert verify_ledger(tmp_path / "none.jsonl") is True
