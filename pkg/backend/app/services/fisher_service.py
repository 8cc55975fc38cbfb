"""
Fisher Service — per-token Fisher information and Fisher-thresholded parameter groups.

F(θ) = mean over dev-set target tokens of (∂ log p(y_t | ·) / ∂θ)²,
using the un-smoothed log-likelihood. Each token gets its own backward
pass over one shared forward tape, so F is independent of how the dev
set is batched.
"""

import logging
from pathlib import Path
from typing import Callable, Dict, List, Mapping, Sequence, Tuple, Union

import numpy as np

from app.exceptions import ConfigError
from app.models.checkpoint import Checkpoint
from app.models.param_group import ParamGroup
from app.models.tensor import Tape, Tensor
from app.models.vocab import PAD_ID
from app.services.transformer_service import Batch, target_log_probs

logger = logging.getLogger(__name__)

FisherMap = Dict[str, np.ndarray]
LogLikFn = Callable[[Mapping[str, Tensor], object], Tuple[Tensor, np.ndarray]]


def fisher_from_loglik(params: Mapping[str, Tensor], batches: Sequence, loglik_fn: LogLikFn) -> FisherMap:
    """
    Mean squared per-token gradient of `loglik_fn`.

    loglik_fn(params, batch) returns per-position log-likelihoods and a
    boolean mask of the positions that count as tokens.
    """
    totals = {name: np.zeros(p.shape) for name, p in params.items()}
    tokens = 0
    for batch in batches:
        for p in params.values():
            p.requires_grad = True
            p.grad = None
        with Tape() as tape:
            loglik, mask = loglik_fn(params, batch)
        for position in np.argwhere(mask):
            seed = np.zeros(loglik.shape)
            seed[tuple(position)] = 1.0
            tape.backward(loglik, seed)
            for name, p in params.items():
                if p.grad is not None:
                    totals[name] += p.grad * p.grad
                    p.grad = None
            tokens += 1
    if tokens == 0:
        raise ConfigError("Fisher information needs at least one dev-set token")
    return {name: totals[name] / tokens for name in sorted(totals)}


def fisher(ckpt: Checkpoint, dev_batches: Sequence[Batch]) -> FisherMap:
    """Per-token Fisher information of every parameter of `ckpt` over dev_batches."""
    config = ckpt.config

    def loglik(params, batch: Batch):
        return target_log_probs(params, config, batch), batch.tgt_out != PAD_ID

    result = fisher_from_loglik(ckpt.params, dev_batches, loglik)
    peak = max(float(f.max()) for f in result.values())
    logger.info("Fisher information over %d batches: max %.3e", len(dev_batches), peak)
    return result


def fisher_groups(fisher_map: Mapping[str, np.ndarray], threshold: float, gamma_old: float) -> List[ParamGroup]:
    """
    Elements with Fisher > threshold form the "important" group at a
    constant γ_old; every other element stays at γ = 1.
    """
    if threshold < 0:
        raise ConfigError(f"Fisher threshold must be >= 0, got {threshold}")
    important = {name: np.asarray(f) > threshold for name, f in fisher_map.items()}
    rest = {name: ~mask for name, mask in important.items()}
    groups = [ParamGroup("important", important, gamma_old), ParamGroup("rest", rest, 1.0)]
    logger.info(
        "Fisher threshold %s selects %d of %d elements for γ=%s",
        threshold, groups[0].element_count, groups[0].element_count + groups[1].element_count, gamma_old,
    )
    return groups


def save_fisher(fisher_map: Mapping[str, np.ndarray], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        np.savez(fh, **{name: fisher_map[name] for name in sorted(fisher_map)})
    return path


def load_fisher(path: Union[str, Path]) -> FisherMap:
    with np.load(Path(path)) as data:
        return {name: data[name].copy() for name in sorted(data.files)}
