"""
Test — Transformer Model

Validates:
- Parameter naming, counting and initialization
- Teacher-forced loss: determinism, padding and batch-order invariance
- Full-model gradients against finite differences
- Beam search against greedy decoding and exhaustive enumeration
"""

import itertools
import math

import numpy as np
import pytest
from pydantic import ValidationError

from app.exceptions import ConfigError
from app.models.tensor import Tensor
from app.models.transformer import EMBEDDING, ModelConfig, param_shapes, parameter_count
from app.models.vocab import BOS_ID, EOS_ID, PAD_ID, Vocab
from app.services.beam_search import decode_beam, greedy_decode
from app.services.gradcheck import grad_check_params
from app.services.transformer_service import (
    Batch,
    build_example,
    collate,
    encode_source,
    forward_loss,
    init_model,
    logits,
    next_token_log_probs,
    target_log_probs,
)
from tests.conftest import tiny_config


def micro_batch(vocab, rows):
    examples = [build_example(vocab, "eng", "xxa", src, tgt) for src, tgt in rows]
    return collate(examples)


class TestModelConfig:
    """Shapes and initialization."""

    def test_parameter_count_closed_form(self):
        """(enc 2, dec 2, d 16, hidden 32, heads 2, V 64) has 11840 parameters."""
        config = ModelConfig(
            enc_layers=2, dec_layers=2, model_dim=16, ffn_hidden_dim=32, heads=2, vocab_size=64,
        )
        d, h, v = 16, 32, 64
        ffn = h * d + h + d * h + d
        enc_layer = 4 * d * d + 2 * 2 * d + ffn
        dec_layer = 8 * d * d + 3 * 2 * d + ffn
        expected = v * d + 2 * enc_layer + 2 * dec_layer + 2 * 2 * d
        assert expected == 11840
        assert parameter_count(config) == expected

    def test_heads_must_divide_model_dim(self):
        with pytest.raises(ValidationError):
            ModelConfig(model_dim=10, heads=4)

    def test_untied_adds_output_projection(self):
        config = tiny_config(20, tie_embeddings=False)
        assert param_shapes(config)["output.projection"] == (20, 16)

    def test_init_deterministic(self):
        config = tiny_config(30)
        a, b = init_model(config, seed=11), init_model(config, seed=11)
        assert all(np.array_equal(a[n].data, b[n].data) for n in a)
        c = init_model(config, seed=12)
        assert not np.array_equal(a[EMBEDDING].data, c[EMBEDDING].data)

    def test_init_values(self):
        config = tiny_config(30)
        params = init_model(config, seed=1)
        for name, tensor in params.items():
            if name.endswith(".gain"):
                assert np.all(tensor.data == 1.0)
            elif name.endswith((".bias", ".b1", ".b2")):
                assert np.all(tensor.data == 0.0)
        assert abs(params[EMBEDDING].data.std() - 16 ** -0.5) < 0.05


class TestForwardLoss:
    """Teacher-forced loss on padded batches."""

    def test_example_layout(self, micro_vocab):
        src, tgt_in, tgt_out = build_example(micro_vocab, "eng", "xxa", "a b", "b a b")
        a, b = micro_vocab.id_of("a"), micro_vocab.id_of("b")
        tag = micro_vocab.tag_id("xxa")
        assert src == [micro_vocab.tag_id("eng"), a, b, EOS_ID]
        assert tgt_in == [BOS_ID, tag, b, a, b]
        assert tgt_out == [PAD_ID, b, a, b, EOS_ID]

    def test_eval_mode_deterministic(self, micro_ckpt, micro_vocab):
        batch = micro_batch(micro_vocab, [("a b", "b"), ("b", "a a")])
        first, count = forward_loss(micro_ckpt.params, micro_ckpt.config, batch)
        second, _ = forward_loss(micro_ckpt.params, micro_ckpt.config, batch)
        assert first.item() == second.item()
        assert count == 5

    def test_zero_table_gives_uniform_loss(self, micro_ckpt, micro_vocab):
        """A zero embedding table predicts uniformly: loss ln V."""
        micro_ckpt.params[EMBEDDING].data[:] = 0.0
        batch = micro_batch(micro_vocab, [("a b", "b a")])
        loss, _ = forward_loss(micro_ckpt.params, micro_ckpt.config, batch)
        assert loss.item() == pytest.approx(math.log(micro_vocab.size), abs=1e-12)

    def test_padding_does_not_leak(self, micro_ckpt, micro_vocab):
        """Scores of a short pair are the same alone and next to a longer pair."""
        params, config = micro_ckpt.params, micro_ckpt.config
        alone = target_log_probs(params, config, micro_batch(micro_vocab, [("a", "b")])).data[0]
        batched = target_log_probs(
            params, config, micro_batch(micro_vocab, [("a", "b"), ("a b a b", "b b a a")])
        ).data[0]
        np.testing.assert_allclose(batched[1:3], alone[1:3], atol=1e-10)

    def test_batch_order_invariance(self, micro_ckpt, micro_vocab):
        rows = [("a", "b"), ("a b a", "b a"), ("b b", "a")]
        params, config = micro_ckpt.params, micro_ckpt.config
        forward, _ = forward_loss(params, config, micro_batch(micro_vocab, rows), reduction="sum")
        backward, _ = forward_loss(params, config, micro_batch(micro_vocab, rows[::-1]), reduction="sum")
        assert forward.item() == pytest.approx(backward.item(), abs=1e-10)

    def test_all_pad_target(self, micro_ckpt):
        batch = Batch(
            src=np.array([[5, 6, EOS_ID]]),
            tgt_in=np.array([[BOS_ID, 5]]),
            tgt_out=np.array([[PAD_ID, PAD_ID]]),
        )
        loss, count = forward_loss(micro_ckpt.params, micro_ckpt.config, batch)
        assert loss.item() == 0.0
        assert count == 0

    def test_tied_embeddings_share_storage(self, micro_ckpt, micro_vocab):
        batch = micro_batch(micro_vocab, [("a b", "b")])
        params, config = micro_ckpt.params, micro_ckpt.config
        before_logits = logits(params, config, batch).data.copy()
        before_memory = encode_source(params, config, batch.src).data.copy()
        params[EMBEDDING].data[micro_vocab.id_of("a")] += 0.5
        assert not np.allclose(logits(params, config, batch).data, before_logits)
        assert not np.allclose(encode_source(params, config, batch.src).data, before_memory)

    def test_sequence_too_long(self, micro_ckpt, micro_vocab):
        text = " ".join(["a"] * micro_ckpt.config.max_positions)
        with pytest.raises(ConfigError):
            forward_loss(micro_ckpt.params, micro_ckpt.config, micro_batch(micro_vocab, [(text, "b")]))

    def test_dropout_only_with_rng(self, micro_vocab):
        config = tiny_config(micro_vocab.size, model_dim=8, ffn_hidden_dim=16, attention_dropout=0.5)
        params = init_model(config, seed=5)
        batch = micro_batch(micro_vocab, [("a b a", "b a b")])
        eval_a, _ = forward_loss(params, config, batch)
        eval_b, _ = forward_loss(params, config, batch)
        train, _ = forward_loss(params, config, batch, rng=np.random.default_rng(0))
        assert eval_a.item() == eval_b.item()
        assert train.item() != eval_a.item()


class TestModelGradients:
    """Whole-model tape gradients."""

    def test_full_gradient_check(self, micro_vocab):
        """One layer each, d 8, V 16: max relative error below 1e-4."""
        vocab = Vocab(list(micro_vocab.tokens) + [f"w{i}" for i in range(8)])
        config = tiny_config(16, enc_layers=1, dec_layers=1, model_dim=8, ffn_hidden_dim=16, max_positions=16)
        params = init_model(config, seed=21)
        batch = collate([
            build_example(vocab, "eng", "xxa", "a w1 w2", "w3 b"),
            build_example(vocab, "eng", "xxa", "w4", "w5 w6 w7"),
        ])
        error, per_tensor = grad_check_params(
            lambda: forward_loss(params, config, batch)[0],
            params,
            step=1e-6,
            coords_per_tensor=2,
            seed=3,
        )
        assert set(per_tensor) == set(params)
        assert error < 1e-4, max(per_tensor.items(), key=lambda kv: kv[1])


class TestBeamSearch:
    """Decoding."""

    def test_beam_one_is_greedy(self, micro_ckpt, micro_vocab):
        params, config = micro_ckpt.params, micro_ckpt.config
        tag = micro_vocab.tag_id("xxa")
        for src_text in ("a", "a b", "b b a"):
            src = build_example(micro_vocab, "eng", "xxa", src_text, "")[0]
            assert decode_beam(params, config, src, tag, beam=1, max_len=6) == greedy_decode(
                params, config, src, tag, max_len=6
            )

    def test_deterministic(self, micro_ckpt, micro_vocab):
        src = build_example(micro_vocab, "eng", "xxa", "a b", "")[0]
        tag = micro_vocab.tag_id("xxa")
        first = decode_beam(micro_ckpt.params, micro_ckpt.config, src, tag, beam=3, max_len=5)
        assert decode_beam(micro_ckpt.params, micro_ckpt.config, src, tag, beam=3, max_len=5) == first

    @pytest.mark.parametrize("length_penalty", [0.0, 1.0])
    def test_matches_exhaustive_enumeration(self, micro_ckpt, micro_vocab, length_penalty):
        """max_len 3 with beam 8·V keeps every candidate; the argmax matches enumeration."""
        params, config = micro_ckpt.params, micro_ckpt.config
        tag = micro_vocab.tag_id("xxa")
        src_ids = build_example(micro_vocab, "eng", "xxa", "b a", "")[0]
        src = np.asarray([src_ids])
        memory = encode_source(params, config, src)
        v = micro_vocab.size

        cache = {}

        def step_log_probs(prefix):
            if prefix not in cache:
                ids = np.asarray([[BOS_ID, tag] + list(prefix)])
                cache[prefix] = next_token_log_probs(params, config, memory, src, ids)[0]
            return cache[prefix]

        def score(seq):
            total = sum(step_log_probs(seq[:i])[seq[i]] for i in range(len(seq)))
            return total / len(seq) ** length_penalty

        sequences = [(EOS_ID,)]
        sequences += [(t, EOS_ID) for t in range(v) if t != EOS_ID]
        sequences += [
            (t1, t2, t3)
            for t1, t2, t3 in itertools.product(range(v), repeat=3)
            if EOS_ID not in (t1, t2)
        ]
        ranked = sorted(sequences, key=lambda s: (-score(s), s))
        assert score(ranked[0]) - score(ranked[1]) > 1e-9
        expected = [t for t in ranked[0] if t != EOS_ID]

        got = decode_beam(
            params, config, src_ids, tag, beam=8 * v, max_len=3, length_penalty=length_penalty
        )
        assert got == expected

    def test_max_len_capped_by_positions(self, micro_ckpt, micro_vocab):
        src = build_example(micro_vocab, "eng", "xxa", "a", "")[0]
        tag = micro_vocab.tag_id("xxa")
        out = decode_beam(micro_ckpt.params, micro_ckpt.config, src, tag, beam=2, max_len=500)
        assert len(out) <= micro_ckpt.config.max_positions - 2

    def test_params_untouched(self, micro_ckpt, micro_vocab):
        before = {n: t.data.copy() for n, t in micro_ckpt.params.items()}
        src = build_example(micro_vocab, "eng", "xxa", "a b", "")[0]
        decode_beam(micro_ckpt.params, micro_ckpt.config, src, micro_vocab.tag_id("xxa"), beam=2, max_len=4)
        assert all(np.array_equal(before[n], t.data) for n, t in micro_ckpt.params.items())
        assert isinstance(micro_ckpt.params[EMBEDDING], Tensor)
