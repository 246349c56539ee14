"""Training loop: mask, encode, re-mask, score against targets, step."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Sequence

import numpy as np

from .augment import MaskPlan, apply_masks, sample_masks, unmasked
from .diffmath import GradTape
from .graph import EmbeddingMatrix, Graph
from .loss import DEFAULT_CLASS_WEIGHTS, ClassWeights, LossBreakdown, multi_target_loss, target_cosine_matrices
from .model import ModelParams, encode, init_model, remask_source, save_checkpoint
from .optim import Adam

log = logging.getLogger(__name__)

PRECISIONS = {"float32": np.float32, "float64": np.float64}


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 500
    learning_rate: float = 1e-3
    weight_decay: float = 0.0
    hidden_dim: int = 512
    out_dim: int = 512
    heads: int = 4
    mask_edge_ratio: float = 0.4
    mask_feature_ratio: float = 0.4
    tau: float = 0.5
    class_weights: ClassWeights = DEFAULT_CLASS_WEIGHTS
    subsets: tuple[tuple[int, ...], ...] | None = None
    negatives: str = "masked"
    seed: int = 0
    precision: str = "float64"
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        for name in ("mask_edge_ratio", "mask_feature_ratio"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.precision not in PRECISIONS:
            raise ValueError(f"precision must be one of {sorted(PRECISIONS)}")

    @property
    def dtype(self):
        return PRECISIONS[self.precision]


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    breakdown: LossBreakdown
    wall_ms: float

    def to_line(self) -> str:
        return f"{self.epoch}\t{self.loss:.10g}\t{self.wall_ms:.1f}\t{self.breakdown.to_kv()}"


@dataclass
class TrainLog:
    records: list[EpochRecord] = field(default_factory=list)

    def losses(self) -> np.ndarray:
        return np.array([r.loss for r in self.records])

    def __len__(self) -> int:
        return len(self.records)


def _target_arrays(targets, num_nodes: int, dtype) -> list[np.ndarray]:
    arrays = []
    for t in targets:
        data = t.data if isinstance(t, EmbeddingMatrix) else t
        data = np.asarray(data, dtype=dtype)
        if data.shape[0] != num_nodes:
            raise ValueError(f"target has {data.shape[0]} rows, graph has {num_nodes} nodes")
        if not np.isfinite(data).all():
            raise ValueError("target contains non-finite values")
        arrays.append(data)
    return arrays


def loss_on_plan(model: ModelParams, graph: Graph, targets, plan: MaskPlan, config: TrainConfig) -> LossBreakdown:
    """Evaluate the objective for a fixed mask plan without updating anything."""
    dtype = model.encoder.layers[0].bias.dtype
    arrays = _target_arrays(targets, graph.num_nodes, dtype)
    z = encode(apply_masks(graph, plan), model.encoder)
    s = remask_source(z, plan.node_class)
    _, breakdown = multi_target_loss(
        s, arrays, model.projectors, config.class_weights, plan.node_class, config.tau, config.negatives
    )
    return breakdown


def embed(graph: Graph, model: ModelParams) -> np.ndarray:
    """Encode the unmasked graph with trained parameters."""
    return encode(unmasked(graph), model.encoder).data


def train_model(
    graph: Graph,
    targets: Sequence,
    config: TrainConfig = TrainConfig(),
    stream: IO[str] | None = None,
    checkpoint_dir=None,
    config_hash: str = "",
) -> tuple[ModelParams, EmbeddingMatrix, TrainLog]:
    """Fit encoder and projectors by maximizing the multi-target objective.

    Each epoch draws a fresh mask plan.  Returns the parameters, the
    embedding of the unmasked graph and the per-epoch log.
    """
    dtype = config.dtype
    arrays = _target_arrays(targets, graph.num_nodes, dtype)
    model = init_model(
        graph.feature_dim,
        config.hidden_dim,
        config.out_dim,
        [a.shape[1] for a in arrays],
        config.heads,
        config.subsets,
        seed=config.seed,
        dtype=dtype,
    )
    params = model.parameters()
    opt = Adam(params, lr=config.learning_rate, weight_decay=config.weight_decay)
    mask_rng = np.random.default_rng([config.seed, 1])
    cosines = target_cosine_matrices(arrays, model.projectors.subsets, dtype) if config.negatives == "masked" else None
    train_log = TrainLog()
    if config.epochs and config.mask_edge_ratio == 0 and config.mask_feature_ratio == 0:
        raise ValueError("with both mask ratios at 0 no node is masked and the loss is empty")
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        plan = sample_masks(graph, config.mask_edge_ratio, config.mask_feature_ratio, mask_rng)
        if not plan.masked_nodes.size:
            continue
        masked = apply_masks(graph, plan)
        try:
            with GradTape() as tape:
                z = encode(masked, model.encoder)
                s = remask_source(z, plan.node_class)
                objective, breakdown = multi_target_loss(
                    s,
                    arrays,
                    model.projectors,
                    config.class_weights,
                    plan.node_class,
                    config.tau,
                    config.negatives,
                    cosines,
                )
        except FloatingPointError as exc:
            raise FloatingPointError(f"non-finite value at epoch {epoch}: {exc}") from exc
        if not np.isfinite(objective.data):
            raise FloatingPointError(f"non-finite loss at epoch {epoch}")
        grads = tape.gradient(objective, params)
        opt.step([-g for g in grads])
        rec = EpochRecord(epoch, breakdown.total, breakdown, (time.perf_counter() - t0) * 1000.0)
        train_log.records.append(rec)
        if stream is not None:
            stream.write(rec.to_line() + "\n")
        if checkpoint_dir and config.checkpoint_every and (epoch + 1) % config.checkpoint_every == 0:
            save_checkpoint(Path(checkpoint_dir) / f"epoch{epoch + 1}", model, config_hash)
        log.debug("epoch %d loss %.5f", epoch, breakdown.total)
    final = embed(graph, model)
    meta = {"config_hash": config_hash, "epochs": str(config.epochs), "seed": str(config.seed)}
    return model, EmbeddingMatrix("gigamae", final, meta), train_log
