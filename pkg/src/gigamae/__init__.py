"""Graph masked autoencoder that reconstructs precomputed target embeddings
(node2vec, PCA, optionally GAE) of masked nodes under a weighted InfoNCE objective."""

from .augment import MaskPlan, MaskedGraph, apply_masks, sample_masks
from .evaluate import EvalReport, cluster_eval, link_eval, linear_probe, naive_integration
from .graph import (
    EdgeSplit,
    EmbeddingMatrix,
    Graph,
    load_graph,
    planted_partition_graph,
    read_embedding,
    split_edges,
    write_embedding,
    write_graph_tsv,
)
from .loss import DEFAULT_CLASS_WEIGHTS, ClassWeights, inverse_lambda_transform, lambda_transform, multi_target_loss
from .model import encode, init_model
from .targets import GaeConfig, Node2vecConfig, PcaConfig, gae_embed, node2vec_embed, pca_embed
from .train import TrainConfig, loss_on_plan, train_model

__version__ = "0.1.0"
