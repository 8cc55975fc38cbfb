"""
Surgery Service — grows a seed checkpoint under vocabulary and architecture mismatch.

Stages (applied by grow in this order, identity stages skipped):
  1. remap_embeddings — new vocabulary rows: copied, <unk>-initialized or random
  2. widen_ffn        — FFN hidden dimension × factor (concat+noise, interleave, random)
  3. deepen           — insert encoder layers (bottom) and decoder layers (top)

Every stage threads a lineage per tensor: provenance per element, the
old/new mask, the seed tensor it derives from and the scale applied to it.
grow turns the final lineage into a SurgeryReport.

Random draws come from per-tensor generators seeded with
stable_seed(seed, tensor name), so any noise block can be regenerated.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from app.exceptions import SurgeryError
from app.models.checkpoint import Checkpoint
from app.models.tensor import Tensor
from app.models.transformer import (
    DECODER,
    EMBEDDING,
    ENCODER,
    OUTPUT_PROJECTION,
    STACKS,
    ModelConfig,
    ffn_name,
    layer_local_names,
    layer_prefix,
    parse_layer_name,
)
from app.models.vocab import UNK_ID, Vocab, VocabMapping
from app.schemas.growth import (
    PROVENANCE_CODES,
    DepthInit,
    EmbeddingInit,
    GrowthPlan,
    InsertPosition,
    NormMode,
    Provenance,
    SurgeryReport,
    TensorProvenance,
    WidthInit,
    encode_ranges,
    encode_runs,
)
from app.services.hash_service import stable_seed
from app.services.tokenizer_service import overlap_map
from app.services.transformer_service import init_model, init_tensor

logger = logging.getLogger(__name__)

COPIED = PROVENANCE_CODES[Provenance.COPIED]
COPIED_NOISY = PROVENANCE_CODES[Provenance.COPIED_NOISY]
INTERPOLATED = PROVENANCE_CODES[Provenance.INTERPOLATED]
UNK_ROW = PROVENANCE_CODES[Provenance.UNK_ROW]
FRESH_RANDOM = PROVENANCE_CODES[Provenance.FRESH_RANDOM]
LAYER_AVERAGE = PROVENANCE_CODES[Provenance.LAYER_AVERAGE]


@dataclass
class Lineage:
    """Per-element provenance codes and new-mask of one grown tensor."""

    codes: np.ndarray
    new: np.ndarray
    source: Optional[str]
    scale: float = 1.0

    @classmethod
    def copied(cls, shape, source: Optional[str]) -> "Lineage":
        return cls(np.full(shape, COPIED, dtype=np.int64), np.zeros(shape, dtype=bool), source)

    @classmethod
    def fresh(cls, shape, code: int = FRESH_RANDOM) -> "Lineage":
        return cls(np.full(shape, code, dtype=np.int64), np.ones(shape, dtype=bool), None)


LineageMap = Dict[str, Lineage]


def initial_lineage(ckpt: Checkpoint) -> LineageMap:
    return {name: Lineage.copied(t.shape, name) for name, t in ckpt.params.items()}


def noise_stream(seed: int, name: str, shape: Tuple[int, ...], std: float) -> np.ndarray:
    """The Gaussian draws surgery adds to `name`; regenerable from (seed, name)."""
    rng = np.random.default_rng(stable_seed(seed, name))
    return rng.normal(0.0, std, size=shape)


# ------- Embeddings -------

def _remap(
    ckpt: Checkpoint,
    lineage: LineageMap,
    new_vocab: Vocab,
    mapping: VocabMapping,
    strategy: EmbeddingInit,
    seed: int,
) -> Tuple[Checkpoint, LineageMap]:
    if mapping.old_size != ckpt.vocab.size or mapping.new_size != new_vocab.size:
        raise SurgeryError(
            f"mapping sizes ({mapping.old_size}, {mapping.new_size}) do not match "
            f"vocabularies ({ckpt.vocab.size}, {new_vocab.size})"
        )
    for old_id, new_id in mapping.pairs:
        if ckpt.vocab.token_of(old_id) != new_vocab.token_of(new_id):
            raise SurgeryError(f"mapping pairs different tokens at ({old_id}, {new_id})")

    strategy = EmbeddingInit(strategy)
    out = ckpt.copy()
    lineage = dict(lineage)
    d = ckpt.config.model_dim
    rows = new_vocab.size
    new_to_old = mapping.new_to_old()
    mapped = np.array(sorted(new_to_old), dtype=np.int64)
    sources = np.array([new_to_old[i] for i in mapped], dtype=np.int64)
    unmapped = np.array(mapping.unmapped_new_ids(), dtype=np.int64)

    names = [EMBEDDING] if ckpt.config.tie_embeddings else [EMBEDDING, OUTPUT_PROJECTION]
    for name in names:
        old = ckpt.array(name)
        codes = np.full((rows, d), COPIED, dtype=np.int64)
        new_mask = np.zeros((rows, d), dtype=bool)
        fresh = noise_stream(seed, name, (rows, d), d ** -0.5)
        if strategy == EmbeddingInit.RANDOM_ALL:
            table = fresh
            codes[:] = FRESH_RANDOM
            new_mask[:] = True
        else:
            table = np.empty((rows, d))
            if mapped.size:
                table[mapped] = old[sources]
            if unmapped.size:
                if strategy == EmbeddingInit.UNK_COPY:
                    table[unmapped] = old[UNK_ID]
                    codes[unmapped] = UNK_ROW
                else:
                    table[unmapped] = fresh[unmapped]
                    codes[unmapped] = FRESH_RANDOM
                new_mask[unmapped] = True
        out.params[name] = Tensor(table, requires_grad=True)
        out.reset_moments(name)
        lineage[name] = Lineage(codes, new_mask, name)

    out.vocab = new_vocab
    out.config = out.config.model_copy(update={"vocab_size": rows})
    logger.info(
        "Remapped embeddings: %s, %d/%d rows mapped (coverage %.3f)",
        strategy.value, mapped.size, rows, mapping.coverage,
    )
    return out, lineage


def remap_embeddings(
    ckpt: Checkpoint,
    new_vocab: Vocab,
    mapping: VocabMapping,
    strategy: EmbeddingInit = EmbeddingInit.UNK_COPY,
    seed: int = 0,
) -> Checkpoint:
    """New embedding table over new_vocab; moments for the table reset to zero."""
    out, _ = _remap(ckpt, initial_lineage(ckpt), new_vocab, mapping, strategy, seed)
    return out


# ------- Width -------

def _frobenius(x: np.ndarray) -> float:
    return float(np.sqrt((x * x).sum()))


def _expand_ffn(
    w1: np.ndarray, b1: np.ndarray, w2: np.ndarray,
    factor: int, strategy: WidthInit, noise_std: float, seed: int,
    names: Tuple[str, str, str], model_dim: int,
):
    """Expanded (w1, b1, w2) and per-hidden-unit (provenance, is_new) codes."""
    hidden = w1.shape[0]
    big = hidden * factor
    n1, nb, n2 = names
    if strategy == WidthInit.LINEAR_INTERP:
        source_unit = np.arange(big) // factor
        is_new = (np.arange(big) % factor) != 0
        noise_w1 = noise_stream(seed, n1, (big, w1.shape[1]), noise_std)
        noise_b1 = noise_stream(seed, nb, (big,), noise_std)
        noise_w2 = noise_stream(seed, n2, (w2.shape[0], big), noise_std)
        w1n = w1[source_unit] + noise_w1 * is_new[:, None]
        b1n = b1[source_unit] + noise_b1 * is_new
        w2n = w2[:, source_unit] + noise_w2 * is_new[None, :]
        unit_codes = np.where(is_new, INTERPOLATED, COPIED)
        return w1n, b1n, w2n, unit_codes, is_new

    extra = big - hidden
    is_new = np.arange(big) >= hidden
    if strategy == WidthInit.CONCAT_NOISE:
        noise_w1 = noise_stream(seed, n1, (extra, w1.shape[1]), noise_std)
        noise_b1 = noise_stream(seed, nb, (extra,), noise_std)
        noise_w2 = noise_stream(seed, n2, (w2.shape[0], extra), noise_std)
        w1n = np.concatenate([w1, np.tile(w1, (factor - 1, 1)) + noise_w1], axis=0)
        b1n = np.concatenate([b1, np.tile(b1, factor - 1) + noise_b1])
        w2n = np.concatenate([w2, np.tile(w2, (1, factor - 1)) + noise_w2], axis=1)
        unit_codes = np.where(is_new, COPIED_NOISY, COPIED)
    elif strategy == WidthInit.RANDOM_EXPAND:
        std = model_dim ** -0.5
        w1n = np.concatenate([w1, noise_stream(seed, n1, (extra, w1.shape[1]), std)], axis=0)
        b1n = np.concatenate([b1, np.zeros(extra)])
        w2n = np.concatenate([w2, noise_stream(seed, n2, (w2.shape[0], extra), std)], axis=1)
        unit_codes = np.where(is_new, FRESH_RANDOM, COPIED)
    else:
        raise SurgeryError(f"unknown width strategy {strategy!r}")
    return w1n, b1n, w2n, unit_codes, is_new


def _widen(
    ckpt: Checkpoint,
    lineage: LineageMap,
    factor: int,
    strategy: WidthInit,
    noise_std: float,
    norm_mode: NormMode,
    seed: int,
) -> Tuple[Checkpoint, LineageMap]:
    if factor < 1:
        raise SurgeryError(f"width factor must be >= 1, got {factor}")
    if noise_std < 0:
        raise SurgeryError(f"noise_std must be >= 0, got {noise_std}")
    if factor == 1:
        return ckpt.copy(), dict(lineage)

    strategy, norm_mode = WidthInit(strategy), NormMode(norm_mode)
    out = ckpt.copy()
    lineage = dict(lineage)
    d = ckpt.config.model_dim

    for stack in STACKS:
        for i in range(ckpt.config.layers(stack)):
            n1, nb, n2 = (ffn_name(stack, i, t) for t in ("w1", "b1", "w2"))
            w1, b1, w2 = ckpt.array(n1), ckpt.array(nb), ckpt.array(n2)
            w1n, b1n, w2n, unit_codes, is_new = _expand_ffn(
                w1, b1, w2, factor, strategy, noise_std, seed, (n1, nb, n2), d
            )

            if norm_mode == NormMode.FROBENIUS_MATCH:
                scale = _frobenius(w2) / _frobenius(w2n) if _frobenius(w2n) > 0 else 1.0
            elif norm_mode == NormMode.FUNCTION_PRESERVE:
                scale = 1.0 / factor
            else:
                scale = 1.0
            if scale != 1.0:
                w2n = w2n * scale

            for name, value in ((n1, w1n), (nb, b1n), (n2, w2n)):
                out.params[name] = Tensor(value, requires_grad=True)
                out.reset_moments(name)

            sources = {n: lineage[n].source for n in (n1, nb, n2)}
            w2_scale = lineage[n2].scale * scale
            lineage[n1] = Lineage(
                np.repeat(unit_codes[:, None], w1.shape[1], axis=1),
                np.repeat(is_new[:, None], w1.shape[1], axis=1),
                sources[n1],
            )
            lineage[nb] = Lineage(unit_codes.copy(), is_new.copy(), sources[nb])
            lineage[n2] = Lineage(
                np.repeat(unit_codes[None, :], w2.shape[0], axis=0),
                np.repeat(is_new[None, :], w2.shape[0], axis=0),
                sources[n2],
                scale=w2_scale,
            )

    out.config = out.config.model_copy(update={"ffn_hidden_dim": ckpt.config.ffn_hidden_dim * factor})
    logger.info(
        "Widened FFNs x%d (%s, noise_std=%s, norm=%s): hidden %d -> %d",
        factor, strategy.value, noise_std, norm_mode.value,
        ckpt.config.ffn_hidden_dim, out.config.ffn_hidden_dim,
    )
    return out, lineage


def widen_ffn(
    ckpt: Checkpoint,
    factor: int,
    strategy: WidthInit = WidthInit.CONCAT_NOISE,
    noise_std: float = 0.01,
    norm_mode: NormMode = NormMode.FROBENIUS_MATCH,
    seed: int = 0,
) -> Checkpoint:
    """Every encoder/decoder FFN hidden dimension multiplied by `factor`."""
    out, _ = _widen(ckpt, initial_lineage(ckpt), factor, strategy, noise_std, norm_mode, seed)
    return out


# ------- Depth -------

def _insert_layers(
    src: Checkpoint,
    out: Checkpoint,
    lineage: LineageMap,
    new_lineage: LineageMap,
    stack: str,
    count: int,
    position: InsertPosition,
    strategy: DepthInit,
    seed: int,
) -> None:
    old_layers = src.config.layers(stack)
    local_names = layer_local_names(stack)
    shift = count if position == InsertPosition.BOTTOM else 0
    inserted = range(count) if position == InsertPosition.BOTTOM else range(old_layers, old_layers + count)
    closest = 0 if position == InsertPosition.BOTTOM else old_layers - 1

    for k in range(old_layers):
        for local in local_names:
            old_name = layer_prefix(stack, k) + local
            new_name = layer_prefix(stack, k + shift) + local
            out.params[new_name] = src.params[old_name].copy()
            if old_name in src.moments:
                m, v = src.moments[old_name]
                out.moments[new_name] = (m.copy(), v.copy())
            new_lineage[new_name] = lineage[old_name]

    for j in inserted:
        for local in local_names:
            new_name = layer_prefix(stack, j) + local
            if strategy == DepthInit.AVERAGE_LAYER:
                value = np.mean(
                    np.stack([src.array(layer_prefix(stack, k) + local) for k in range(old_layers)]), axis=0
                )
                code = LAYER_AVERAGE
            elif strategy == DepthInit.CLOSEST_LAYER:
                value = src.array(layer_prefix(stack, closest) + local).copy()
                code = COPIED
            else:
                value = init_tensor(new_name, src.params[layer_prefix(stack, 0) + local].shape,
                                    src.config, stable_seed(seed, "deepen"))
                code = FRESH_RANDOM
            out.params[new_name] = Tensor(value, requires_grad=True)
            new_lineage[new_name] = Lineage.fresh(value.shape, code)


def _deepen(
    ckpt: Checkpoint,
    lineage: LineageMap,
    enc_count: int,
    dec_count: int,
    positions: Tuple[InsertPosition, InsertPosition],
    strategy: DepthInit,
    seed: int,
) -> Tuple[Checkpoint, LineageMap]:
    if enc_count < 0 or dec_count < 0:
        raise SurgeryError(f"layer insert counts must be >= 0, got ({enc_count}, {dec_count})")
    if enc_count == 0 and dec_count == 0:
        return ckpt.copy(), dict(lineage)

    strategy = DepthInit(strategy)
    enc_pos, dec_pos = (InsertPosition(p) for p in positions)
    out = Checkpoint(
        config=ckpt.config.model_copy(update={
            "enc_layers": ckpt.config.enc_layers + enc_count,
            "dec_layers": ckpt.config.dec_layers + dec_count,
        }),
        vocab=ckpt.vocab,
        params={},
        moments={},
        step=ckpt.step,
    )
    new_lineage: LineageMap = {}
    for name, t in ckpt.params.items():
        if parse_layer_name(name) is None:
            out.params[name] = t.copy()
            if name in ckpt.moments:
                m, v = ckpt.moments[name]
                out.moments[name] = (m.copy(), v.copy())
            new_lineage[name] = lineage[name]

    for stack, count, pos in ((ENCODER, enc_count, enc_pos), (DECODER, dec_count, dec_pos)):
        _insert_layers(ckpt, out, lineage, new_lineage, stack, count, pos, strategy, seed)

    out.params = dict(sorted(out.params.items()))
    out.moments = dict(sorted(out.moments.items()))
    logger.info(
        "Inserted layers: encoder +%d (%s), decoder +%d (%s), init %s",
        enc_count, enc_pos.value, dec_count, dec_pos.value, strategy.value,
    )
    return out, new_lineage


def deepen(
    ckpt: Checkpoint,
    enc_count: int,
    dec_count: int,
    positions: Tuple[InsertPosition, InsertPosition] = (InsertPosition.BOTTOM, InsertPosition.TOP),
    strategy: DepthInit = DepthInit.AVERAGE_LAYER,
    seed: int = 0,
) -> Checkpoint:
    """Insert layers; old layer tensors are preserved bitwise at shifted indices."""
    out, _ = _deepen(ckpt, initial_lineage(ckpt), enc_count, dec_count, positions, strategy, seed)
    return out


# ------- Composition -------

def plan_config(config: ModelConfig, plan: GrowthPlan, vocab_size: int) -> ModelConfig:
    """The architecture `plan` grows `config` into."""
    return config.model_copy(update={
        "vocab_size": vocab_size,
        "ffn_hidden_dim": config.ffn_hidden_dim * plan.width_factor,
        "enc_layers": config.enc_layers + plan.enc_insert,
        "dec_layers": config.dec_layers + plan.dec_insert,
    })


def grown_config(ckpt: Checkpoint, plan: GrowthPlan) -> ModelConfig:
    vocab = plan.target_vocab or ckpt.vocab
    return plan_config(ckpt.config, plan, vocab.size)


def _report(
    seed_ckpt: Checkpoint,
    grown: Checkpoint,
    lineage: LineageMap,
    plan: GrowthPlan,
    coverage: float,
    stages: List[str],
) -> SurgeryReport:
    tensors = {}
    for name in sorted(grown.params):
        lin = lineage[name]
        tensors[name] = TensorProvenance(
            name=name,
            shape=list(grown.params[name].shape),
            runs=encode_runs(lin.codes),
            new_ranges=encode_ranges(lin.new),
            source=lin.source,
            scale=lin.scale,
        )
    return SurgeryReport(
        coverage=coverage,
        stages_applied=stages,
        plan=plan,
        seed_config=seed_ckpt.config.model_dump(mode="json"),
        grown_config=grown.config.model_dump(mode="json"),
        tensors=tensors,
    )


def _is_identity_remap(ckpt: Checkpoint, vocab: Vocab, strategy: EmbeddingInit) -> bool:
    return vocab == ckpt.vocab and strategy != EmbeddingInit.RANDOM_ALL


def grow(ckpt: Checkpoint, plan: GrowthPlan) -> Tuple[Checkpoint, SurgeryReport]:
    """
    remap_embeddings, then widen_ffn, then deepen. The input checkpoint is
    never mutated; stages that would be the identity are skipped.
    """
    target = plan.target_vocab or ckpt.vocab
    mapping = overlap_map(ckpt.vocab, target)
    lineage = initial_lineage(ckpt)
    current = ckpt
    stages: List[str] = []

    if not _is_identity_remap(ckpt, target, plan.embedding_init):
        current, lineage = _remap(current, lineage, target, mapping, plan.embedding_init,
                                  stable_seed(plan.seed, "embeddings"))
        stages.append("remap_embeddings")
    if plan.widens:
        current, lineage = _widen(current, lineage, plan.width_factor, plan.width_init,
                                  plan.noise_std, plan.norm_mode, stable_seed(plan.seed, "width"))
        stages.append("widen_ffn")
    if plan.deepens:
        current, lineage = _deepen(current, lineage, plan.enc_insert, plan.dec_insert,
                                   (plan.enc_position, plan.dec_position), plan.depth_init,
                                   stable_seed(plan.seed, "depth"))
        stages.append("deepen")
    if current is ckpt:
        current = ckpt.copy()

    current.validate()
    report = _report(ckpt, current, lineage, plan, mapping.coverage, stages)
    logger.info(
        "Grew checkpoint: stages=%s, %d new of %d elements",
        stages or ["identity"], report.new_element_count(),
        sum(t.size for t in current.params.values()),
    )
    return current, report


def fresh_growth(ckpt: Checkpoint, plan: GrowthPlan, seed: int) -> Tuple[Checkpoint, SurgeryReport]:
    """
    Freshly initialized model at the grown architecture; no element is
    copied and every element is new. The step counter restarts at 0.
    """
    config = grown_config(ckpt, plan)
    vocab = plan.target_vocab or ckpt.vocab
    params = init_model(config, seed)
    out = Checkpoint(config=config, vocab=vocab, params=params, step=0)
    out.validate()
    lineage = {name: Lineage.fresh(t.shape) for name, t in params.items()}
    coverage = overlap_map(ckpt.vocab, vocab).coverage
    return out, _report(ckpt, out, lineage, plan, coverage, ["fresh_init"])

