"""Edge and feature masking, and the four-way node partition it induces."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import Graph, canonical_edges

# node classes: untouched, edge-masked, feature-masked, both
CLASS_N, CLASS_E, CLASS_F, CLASS_B = 0, 1, 2, 3
CLASS_NAMES = ("N", "E", "F", "B")


def round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


@dataclass(frozen=True, eq=False)
class MaskPlan:
    num_nodes: int
    masked_edges: np.ndarray
    masked_feature_nodes: np.ndarray
    node_class: np.ndarray
    edge_ratio: float
    feature_ratio: float
    seed: int | None = None

    @property
    def masked_nodes(self) -> np.ndarray:
        """Indices of nodes in classes E, F or B (the rows that enter the loss)."""
        return np.flatnonzero(self.node_class != CLASS_N)

    def class_counts(self) -> dict[str, int]:
        counts = np.bincount(self.node_class, minlength=4)
        return dict(zip(CLASS_NAMES, counts.tolist()))


def classify_nodes(num_nodes: int, masked_edges, masked_feature_nodes) -> np.ndarray:
    """Node class from masks: B if both, E if edge-only, F if feature-only, else N."""
    edge_hit = np.zeros(num_nodes, dtype=bool)
    masked_edges = np.asarray(masked_edges, dtype=np.int64).reshape(-1, 2)
    edge_hit[masked_edges.ravel()] = True
    feat_hit = np.zeros(num_nodes, dtype=bool)
    feat_hit[np.asarray(masked_feature_nodes, dtype=np.int64)] = True
    return (edge_hit.astype(np.int64) * CLASS_E + feat_hit.astype(np.int64) * CLASS_F).astype(np.int64)


def make_plan(graph: Graph, masked_edges=(), masked_feature_nodes=(), seed=None) -> MaskPlan:
    """Build a plan from explicit mask sets."""
    medges = canonical_edges(masked_edges, graph.num_nodes)
    if len(medges):
        known = graph.edge_set()
        missing = [tuple(e) for e in medges.tolist() if tuple(e) not in known]
        if missing:
            raise ValueError(f"masked edge {missing[0]} is not an edge of the graph")
    mfeat = np.unique(np.asarray(masked_feature_nodes, dtype=np.int64))
    if mfeat.size and (mfeat.min() < 0 or mfeat.max() >= graph.num_nodes):
        raise ValueError("feature-masked node outside the graph")
    return MaskPlan(
        graph.num_nodes,
        medges,
        mfeat,
        classify_nodes(graph.num_nodes, medges, mfeat),
        len(medges) / max(graph.num_edges, 1),
        len(mfeat) / max(graph.num_nodes, 1),
        seed,
    )


def sample_masks(graph: Graph, edge_ratio: float, feature_ratio: float, seed=None) -> MaskPlan:
    """Mask ``round(edge_ratio * |E|)`` edges and ``round(feature_ratio * |V|)`` feature rows.

    ``seed`` may be an int or a ``numpy.random.Generator``.
    """
    for name, r in (("edge_ratio", edge_ratio), ("feature_ratio", feature_ratio)):
        if not 0.0 <= r <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1], got {r}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n_edges = round_half_up(edge_ratio * graph.num_edges)
    n_feat = round_half_up(feature_ratio * graph.num_nodes)
    edge_idx = np.sort(rng.choice(graph.num_edges, size=n_edges, replace=False))
    feat_idx = np.sort(rng.choice(graph.num_nodes, size=n_feat, replace=False))
    medges = graph.edges[edge_idx]
    return MaskPlan(
        graph.num_nodes,
        medges,
        feat_idx,
        classify_nodes(graph.num_nodes, medges, feat_idx),
        edge_ratio,
        feature_ratio,
        None if isinstance(seed, np.random.Generator) else seed,
    )


@dataclass(frozen=True, eq=False)
class MaskedGraph:
    """Masked view: surviving edges and features with masked rows zeroed."""

    adjacency_edges: np.ndarray
    features: np.ndarray
    plan: MaskPlan

    @property
    def num_nodes(self) -> int:
        return self.features.shape[0]


def unmasked(graph: Graph) -> MaskedGraph:
    """The identity augmentation (used to embed the full graph after training)."""
    return apply_masks(graph, make_plan(graph))


def apply_masks(graph: Graph, plan: MaskPlan) -> MaskedGraph:
    if plan.num_nodes != graph.num_nodes:
        raise ValueError(f"plan is for {plan.num_nodes} nodes, graph has {graph.num_nodes}")
    if len(plan.masked_edges):
        # row-wise membership of masked edges in the (sorted, unique) edge list
        keys = graph.edges[:, 0] * graph.num_nodes + graph.edges[:, 1]
        mkeys = plan.masked_edges[:, 0] * graph.num_nodes + plan.masked_edges[:, 1]
        hit = np.isin(keys, mkeys)
        if hit.sum() != len(np.unique(mkeys)):
            raise ValueError("plan masks edges that are not in the graph")
        surviving = graph.edges[~hit]
    else:
        surviving = graph.edges
    feats = np.array(graph.features, copy=True)
    feats[plan.masked_feature_nodes] = 0.0
    return MaskedGraph(surviving, feats, plan)
