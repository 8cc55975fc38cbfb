"""
Trainer Service — one training phase (seed or continual).

Per step:
  1. sample a direction with p ∝ (α·n)^(1/T)
  2. draw a single-direction batch of ~batch_tokens target tokens
  3. forward with dropout, label-smoothed loss, backward
  4. clip to global norm, Adam update with lr_at(step) · γ(group)
  5. at the validation cadence, score every validation direction

The global step continues from the checkpoint's step unless
reset_scheduler is set; γ schedules run on the phase-local step
(0 at the first update). The checkpoint with the lowest mean validation
loss is returned as the best checkpoint.
"""

import csv
import io
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Set, Union

import numpy as np
from tqdm import tqdm

from app.config import settings
from app.exceptions import ConfigError
from app.models.checkpoint import Checkpoint
from app.models.param_group import ParamGroup, single_group, validate_partition
from app.models.tensor import Tape, Tensor
from app.models.vocab import Vocab, tag_token
from app.schemas.data import PIVOT, DirectionSpec
from app.schemas.training import TrainConfig
from app.services import checkpoint_store
from app.services.hash_service import stable_seed
from app.services.optimizer import AdamState, adam_step, clip_grads
from app.services.sampler import batches_of, draw_batch, sample_direction, sampling_probabilities
from app.services.schedule import lr_at
from app.services.transformer_service import Batch, forward_loss

logger = logging.getLogger(__name__)

VAL_BATCH_PAIRS = 16


@dataclass
class TrainingResult:
    best: Checkpoint
    final: Checkpoint
    rows: List[Dict[str, object]]
    columns: List[str]
    best_step: int
    direction_counts: Dict[str, int] = field(default_factory=dict)
    snapshots: List[Path] = field(default_factory=list)

    def to_csv(self) -> str:
        return format_log(self.rows, self.columns)


def format_log(rows: Sequence[Dict[str, object]], columns: Sequence[str]) -> str:
    """CSV text with floats written via repr so equal runs give equal bytes."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(row.get(c)) for c in columns])
    return buf.getvalue()


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def validation_loss(ckpt_params, config, vocab, direction: DirectionSpec, limit: int) -> float:
    """Token-weighted un-dropped loss over the first `limit` pairs."""
    total, tokens = 0.0, 0
    for batch in batches_of(vocab, direction, VAL_BATCH_PAIRS, limit):
        loss, count = forward_loss(ckpt_params, config, batch, reduction="sum")
        total += loss.item()
        tokens += count
    return total / tokens if tokens else 0.0


def phase_tag_ids(vocab: Vocab, languages: Sequence[str]) -> Set[int]:
    """Tag ids a phase restricted to `languages` may feed; English is always allowed."""
    out = set()
    for code in [PIVOT, *languages]:
        token_id = vocab.lookup(tag_token(code))
        if token_id is not None:
            out.add(token_id)
    return out


def check_batch_languages(vocab: Vocab, batch: Batch, allowed: Set[int]) -> None:
    """Source tags sit at encoder position 0, target tags at decoder position 1."""
    seen = set(np.unique(batch.src[:, 0]).tolist()) | set(np.unique(batch.tgt_in[:, 1]).tolist())
    foreign = sorted(vocab.token_of(i) for i in seen - allowed)
    if foreign:
        raise ConfigError(f"batch carries language tags outside this phase: {foreign}")


def _snapshot(params: Dict[str, Tensor], state: AdamState, ckpt: Checkpoint, step: int) -> Checkpoint:
    return Checkpoint(
        config=ckpt.config,
        vocab=ckpt.vocab,
        params={name: Tensor(t.data.copy(), requires_grad=True) for name, t in params.items()},
        moments={name: (m.copy(), v.copy()) for name, (m, v) in state.moments().items()},
        step=step,
    )


def train(
    ckpt: Checkpoint,
    directions: Sequence[DirectionSpec],
    config: TrainConfig,
    groups: Optional[List[ParamGroup]] = None,
    val_directions: Optional[Sequence[DirectionSpec]] = None,
    languages: Optional[Sequence[str]] = None,
    snapshot_dir: Optional[Union[str, Path]] = None,
) -> TrainingResult:
    """
    Train a copy of `ckpt`; the input is not mutated.

    languages, when given, restricts the phase to the listed languages:
    every batch is checked for foreign language tags before it is used
    (the seed phase never sees new languages).
    """
    for d in directions:
        ckpt.vocab.tag_id(d.source)
        ckpt.vocab.tag_id(d.target)

    work = ckpt.copy()
    params = work.params
    groups = groups or single_group(params)
    validate_partition(groups, params)
    val_directions = list(val_directions or [])
    allowed_tags = None
    if languages is not None:
        allowed_tags = phase_tag_ids(work.vocab, languages)

    loss_config = work.config.model_copy(update={"label_smoothing_epsilon": config.label_smoothing})
    eval_config = work.config
    start_step = 0 if config.reset_scheduler else work.step
    state = AdamState(params, work.moments, start_step, config.beta1, config.beta2, config.adam_eps)
    probs = sampling_probabilities(directions, config.temperature, config.alpha)
    sample_rng = np.random.default_rng(stable_seed(config.seed, "sampling"))
    dropout_rng = np.random.default_rng(stable_seed(config.seed, "dropout"))

    columns = ["step", "lr"] + [f"gamma_{g.name}" for g in groups] + ["train_loss"]
    columns += [f"val_{d.name}" for d in val_directions]
    rows: List[Dict[str, object]] = []
    counts = {d.name: 0 for d in directions}
    snapshots: List[Path] = []

    logger.info(
        "Training %d steps from global step %d over %d directions (p=%s)",
        config.total_steps, start_step, len(directions), np.round(probs, 4).tolist(),
    )
    max_gamma = max(max(g.gamma_start, g.gamma_end) for g in groups)
    if max_gamma > 1.0:
        logger.warning("γ up to %s lets effective lr exceed the peak lr %s", max_gamma, config.peak_lr)

    best: Optional[Checkpoint] = None
    best_loss = float("inf")
    best_step = start_step
    step = start_step

    for k in tqdm(range(config.total_steps), disable=not settings.SHOW_PROGRESS, desc="train"):
        step = start_step + k + 1
        continual_step = k
        lr = lr_at(step, config.peak_lr, config.warmup_steps, config.lr_schedule.value)
        direction = directions[sample_direction(probs, sample_rng)]
        counts[direction.name] += 1
        batch, _ = draw_batch(work.vocab, direction, config.batch_tokens, sample_rng)
        if allowed_tags is not None:
            check_batch_languages(work.vocab, batch, allowed_tags)

        with Tape() as tape:
            loss, _ = forward_loss(params, loss_config, batch, rng=dropout_rng)
        tape.backward(loss)
        grads = {}
        for name, p in params.items():
            grads[name] = p.grad if p.grad is not None else np.zeros(p.shape)
            p.grad = None
        clip_grads(grads, config.clip_norm)
        adam_step(params, grads, state, lr, groups, continual_step, step)

        row: Dict[str, object] = {"step": step, "lr": lr, "train_loss": loss.item()}
        for g in groups:
            row[f"gamma_{g.name}"] = g.gamma_at(continual_step)

        last = k == config.total_steps - 1
        if val_directions and ((k + 1) % config.val_every == 0 or last):
            losses = []
            for d in val_directions:
                value = validation_loss(params, eval_config, work.vocab, d, config.val_pairs)
                row[f"val_{d.name}"] = value
                losses.append(value)
            mean_loss = float(np.mean(losses))
            logger.info("step %d lr %.6g train %.4f val %.4f", step, lr, loss.item(), mean_loss)
            if mean_loss < best_loss:
                best_loss = mean_loss
                best_step = step
                best = _snapshot(params, state, work, step)
        rows.append(row)

        if snapshot_dir is not None and config.snapshot_every and (k + 1) % config.snapshot_every == 0:
            path = Path(snapshot_dir) / f"step_{step:07d}.ckpt"
            checkpoint_store.save(_snapshot(params, state, work, step), path)
            snapshots.append(path)

    final = _snapshot(params, state, work, step)
    if best is None:
        best, best_step = final, step
    logger.info("Finished at step %d; best checkpoint at step %d", step, best_step)
    return TrainingResult(
        best=best,
        final=final,
        rows=rows,
        columns=columns,
        best_step=best_step,
        direction_counts=counts,
        snapshots=snapshots,
    )
