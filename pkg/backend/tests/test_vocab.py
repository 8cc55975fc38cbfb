"""
Test — Vocabulary and Tokenizer

Validates:
- Reserved ids and one tag per language
- Temperature-rescaled vocabulary selection against an exhaustive oracle
- encode/decode and <unk> handling
- Overlap mappings between old and new vocabularies
"""

import pytest

from app.exceptions import VocabError
from app.models.vocab import (
    BOS_ID,
    EOS_ID,
    PAD_ID,
    RESERVED,
    UNK,
    UNK_ID,
    Vocab,
    VocabMapping,
    tag_token,
)
from app.services.synth_data import gen_corpus
from app.services.tokenizer_service import (
    build_vocab,
    decode,
    encode,
    overlap_map,
    rescaled_counts,
)


def toy_corpora():
    return [
        ("aaa", {"p": 9, "q": 4, "r": 4, "s": 1}),
        ("bbb", {"q": 2, "t": 16, "u": 3, "v": 3, "w": 1}),
        ("ccc", {"x": 1, "y": 2, "z": 7, "p": 1}),
    ]


class TestBuildVocab:
    """Vocabulary layout and selection."""

    def test_layout(self):
        """Reserved ids first, then one tag per language sorted by code."""
        vocab = build_vocab(toy_corpora(), size=20)
        assert vocab.tokens[:4] == RESERVED
        assert (PAD_ID, UNK_ID, BOS_ID, EOS_ID) == (0, 1, 2, 3)
        assert vocab.tokens[4:7] == tuple(tag_token(c) for c in ("aaa", "bbb", "ccc"))
        assert vocab.languages == ["aaa", "bbb", "ccc"]

    def test_temperature_one_single_language(self):
        """T=1 on one language is plain frequency truncation."""
        vocab = build_vocab([("aaa", {"p": 9, "q": 4, "r": 4, "s": 1})], size=8, temperature=1.0)
        assert vocab.tokens[5:] == ("p", "q", "r")

    def test_mass_ratio(self):
        """Masses 100 and 400 at T=2 rescale to 10 and 20."""
        _, masses = rescaled_counts([("aaa", {"a": 100}), ("bbb", {"b": 400})], 2.0)
        assert masses["aaa"] == pytest.approx(10.0)
        assert masses["bbb"] == pytest.approx(20.0)
        assert masses["bbb"] / masses["aaa"] == pytest.approx(2.0)

    def test_matches_exhaustive_sort_oracle(self):
        """Kept tokens equal the top rescaled counts found by brute force."""
        corpora = toy_corpora()
        temperature = 2.0
        scores = {}
        for _, counts in corpora:
            mass = sum(counts.values())
            factor = mass ** (1.0 / temperature) / mass
            for token, count in counts.items():
                scores[token] = scores.get(token, 0.0) + count * factor
        for size in (8, 12, 20):
            budget = size - 4 - 3
            expected = sorted(scores, key=lambda t: (-scores[t], t))[:budget]
            vocab = build_vocab(corpora, size=size, temperature=temperature)
            assert list(vocab.tokens[7:]) == expected

    def test_empty_corpora(self):
        with pytest.raises(VocabError):
            build_vocab([], size=10)

    def test_size_too_small(self):
        with pytest.raises(VocabError):
            build_vocab(toy_corpora(), size=7)

    def test_vocab_must_start_with_reserved(self):
        with pytest.raises(VocabError):
            Vocab(["a", "b"])

    def test_duplicate_token(self):
        with pytest.raises(VocabError):
            Vocab(list(RESERVED) + ["a", "a"])


class TestEncodeDecode:
    """Id sequences for model input."""

    def test_round_trip(self):
        vocab = build_vocab(toy_corpora(), size=20)
        text = "p t z q"
        ids = encode(vocab, "bbb", text)
        assert ids[0] == vocab.tag_id("bbb")
        assert ids[-1] == EOS_ID
        assert decode(vocab, ids) == text

    def test_unknown_token(self):
        vocab = build_vocab(toy_corpora(), size=20)
        ids = encode(vocab, "aaa", "p nope q")
        assert ids[2] == UNK_ID
        assert decode(vocab, ids) == f"p {UNK} q"

    def test_missing_tag(self):
        vocab = build_vocab(toy_corpora(), size=20)
        with pytest.raises(VocabError):
            encode(vocab, "zzz", "p")

    def test_decode_id_out_of_range(self):
        vocab = build_vocab(toy_corpora(), size=20)
        with pytest.raises(VocabError):
            decode(vocab, [vocab.size])

    def test_unseen_script_is_all_unk(self, languages, seed_vocab):
        """Tokens of a script absent from the old vocabulary all encode to <unk>."""
        forward, _ = gen_corpus(languages["xxc"], 10, seed=7)
        tokens = [tok for _, x_text in forward.pairs for tok in x_text.split()]
        ids = [seed_vocab.id_of(tok) for tok in tokens]
        assert tokens
        assert all(i == UNK_ID for i in ids)


class TestOverlapMap:
    """Old→new id correspondence."""

    def test_set_intersection(self):
        old = Vocab(list(RESERVED) + ["a", "b", "c"])
        new = Vocab(list(RESERVED) + ["b", "c", "d"])
        mapping = overlap_map(old, new)
        assert mapping.pairs == ((0, 0), (1, 1), (2, 2), (3, 3), (5, 4), (6, 5))
        assert mapping.unmapped_new_ids() == [6]
        assert mapping.coverage == pytest.approx(6 / 7)

    def test_identical_is_bijection(self, seed_vocab):
        mapping = overlap_map(seed_vocab, seed_vocab)
        assert mapping.is_bijection()
        assert mapping.coverage == 1.0
        assert all(o == n for o, n in mapping.pairs)

    def test_new_script_unmapped(self, seed_vocab, full_vocab):
        mapping = overlap_map(seed_vocab, full_vocab)
        expected = sum(1 for tok in full_vocab.tokens if tok in seed_vocab)
        assert len(mapping) == expected
        assert mapping.coverage < 1.0
        unmapped = {full_vocab.tokens[i] for i in mapping.unmapped_new_ids()}
        assert tag_token("xxc") in unmapped
        assert all(tok.startswith("gujr") or tok == tag_token("xxc") for tok in unmapped)

    def test_mapping_rejects_duplicates(self):
        with pytest.raises(VocabError):
            VocabMapping([(0, 1), (0, 2)], 3, 3)
