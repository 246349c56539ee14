"""Reconstruction targets: PCA (attributes), node2vec (structure), GAE (both)."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np
import scipy.sparse as sp

from . import diffmath as dm
from .augment import round_half_up
from .diffmath import GradTape, Tensor
from .graph import EmbeddingMatrix, Graph
from .optim import Adam, SparseRowAdam

log = logging.getLogger(__name__)


def _meta(config) -> dict[str, str]:
    return {f"config.{k}": str(v) for k, v in asdict(config).items()}


# --- PCA ----------------------------------------------------------------------


@dataclass(frozen=True)
class PcaConfig:
    ratio: float = 0.5
    center: bool = True

    def __post_init__(self):
        if not 0.0 < self.ratio <= 1.0:
            raise ValueError(f"PCA ratio must lie in (0, 1], got {self.ratio}")

    def output_dim(self, feature_dim: int) -> int:
        return min(max(1, round_half_up(self.ratio * feature_dim)), feature_dim)


def pca_embed(features, config: PcaConfig = PcaConfig()) -> EmbeddingMatrix:
    """Project centered features onto their top principal directions."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] < 1:
        raise ValueError("features must be a matrix with at least one column")
    xc = x - x.mean(axis=0, keepdims=True)
    if not np.any(xc):
        raise ValueError("all feature columns are constant; PCA is undefined")
    k = config.output_dim(x.shape[1])
    k = min(k, min(xc.shape))
    _, s, v = dm.svd_topk(xc, k)
    z = xc @ v
    var = s**2 / max(x.shape[0] - 1, 1)
    meta = _meta(config) | {"dim": str(k), "explained_variance": ",".join(f"{e:.6g}" for e in var[:8])}
    return EmbeddingMatrix("pca", z, meta)


# --- node2vec ------------------------------------------------------------------


@dataclass(frozen=True)
class Node2vecConfig:
    dim: int = 256
    walk_length: int = 5
    context_size: int = 5
    walks_per_node: int = 5
    epochs: int = 20
    p: float = 1.0
    q: float = 1.0
    negatives_per_positive: int = 1
    learning_rate: float = 0.01
    batch_walks: int = 128
    seed: int = 0

    def __post_init__(self):
        if self.p <= 0 or self.q <= 0:
            raise ValueError("return and in-out parameters must be positive")
        if not 2 <= self.context_size <= self.walk_length:
            raise ValueError("context_size must lie in [2, walk_length]")


class _Neighbors:
    """CSR neighbor lists with O(log d) edge membership tests."""

    def __init__(self, graph: Graph):
        adj = graph.adjacency().tocsr()
        adj.sort_indices()
        self.indptr = adj.indptr.astype(np.int64)
        self.indices = adj.indices.astype(np.int64)
        self.degree = np.diff(self.indptr)
        self.n = graph.num_nodes
        self.keys = np.sort(np.repeat(np.arange(self.n), self.degree) * self.n + self.indices)

    def has_edge(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        keys = a * self.n + b
        pos = np.searchsorted(self.keys, keys)
        pos = np.minimum(pos, len(self.keys) - 1)
        return self.keys[pos] == keys if len(self.keys) else np.zeros_like(a, dtype=bool)

    def uniform(self, nodes: np.ndarray, rng) -> np.ndarray:
        offs = (rng.random(len(nodes)) * self.degree[nodes]).astype(np.int64)
        return self.indices[self.indptr[nodes] + offs]


def random_walks(graph: Graph, starts, walk_length: int, p: float, q: float, rng) -> np.ndarray:
    """Second-order biased walks, one row per start node.

    Each row has ``walk_length + 1`` entries; after reaching a node with no
    neighbors the row is padded with -1.  The unnormalized weight of moving
    from ``cur`` to neighbor ``x`` having come from ``prev`` is ``1/p`` if
    ``x == prev``, 1 if ``x`` neighbors ``prev``, and ``1/q`` otherwise.
    Sampling is exact, by rejection against the largest of the three.
    """
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    nb = graph if isinstance(graph, _Neighbors) else _Neighbors(graph)
    starts = np.asarray(starts, dtype=np.int64)
    walks = np.full((len(starts), walk_length + 1), -1, dtype=np.int64)
    walks[:, 0] = starts
    w_return, w_out = 1.0 / p, 1.0 / q
    w_max = max(w_return, 1.0, w_out)
    alive = nb.degree[starts] > 0
    for step in range(1, walk_length + 1):
        rows = np.flatnonzero(alive)
        if rows.size == 0:
            break
        cur = walks[rows, step - 1]
        if step == 1:
            walks[rows, step] = nb.uniform(cur, rng)
            continue
        prev = walks[rows, step - 2]
        chosen = np.full(len(rows), -1, dtype=np.int64)
        pending = np.arange(len(rows))
        while pending.size:
            cand = nb.uniform(cur[pending], rng)
            weight = np.where(
                cand == prev[pending], w_return, np.where(nb.has_edge(prev[pending], cand), 1.0, w_out)
            )
            accept = rng.random(len(pending)) * w_max < weight
            chosen[pending[accept]] = cand[accept]
            pending = pending[~accept]
        walks[rows, step] = chosen
    return walks


def _window_pairs(walks: np.ndarray, context_size: int) -> tuple[np.ndarray, np.ndarray]:
    """(anchor, context) pairs: each window's first node with the rest of the window."""
    length = walks.shape[1]
    anchors, contexts = [], []
    for start in range(length - context_size + 1):
        a = walks[:, start]
        for off in range(1, context_size):
            c = walks[:, start + off]
            ok = (a >= 0) & (c >= 0)
            anchors.append(a[ok])
            contexts.append(c[ok])
    if not anchors:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    return np.concatenate(anchors), np.concatenate(contexts)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def node2vec_embed(graph: Graph, config: Node2vecConfig = Node2vecConfig()) -> EmbeddingMatrix:
    """Skip-gram with negative sampling over biased random walks.

    A single embedding table scores both anchors and contexts.  Walks are
    redrawn every epoch; negatives follow the degree^0.75 distribution.
    """
    if graph.num_edges < 1:
        raise ValueError("node2vec needs at least one edge")
    rng = np.random.default_rng(config.seed)
    nb = _Neighbors(graph)
    n = graph.num_nodes
    table = (rng.standard_normal((n, config.dim)) / np.sqrt(config.dim)).astype(np.float64)
    opt = SparseRowAdam(table, lr=config.learning_rate)
    noise = nb.degree.astype(np.float64) ** 0.75
    noise_cdf = np.cumsum(noise / noise.sum())
    starts_all = np.repeat(np.arange(n), config.walks_per_node)
    for epoch in range(config.epochs):
        starts = starts_all[rng.permutation(len(starts_all))]
        total, count = 0.0, 0
        for b in range(0, len(starts), config.batch_walks):
            walks = random_walks(nb, starts[b : b + config.batch_walks], config.walk_length, config.p, config.q, rng)
            anchors, contexts = _window_pairs(walks, config.context_size)
            if anchors.size == 0:
                continue
            k = config.negatives_per_positive
            neg_anchor = np.repeat(anchors, k)
            neg = np.searchsorted(noise_cdf, rng.random(len(neg_anchor)), side="right")
            neg = np.minimum(neg, n - 1)
            left = np.concatenate([anchors, neg_anchor])
            right = np.concatenate([contexts, neg])
            label = np.concatenate([np.ones(len(anchors)), np.zeros(len(neg_anchor))])
            eu, ev = table[left], table[right]
            score = np.einsum("ij,ij->i", eu, ev)
            prob = _sigmoid(score)
            # d/dscore of -[y log s + (1-y) log(1-s)], averaged over the batch
            coef = ((prob - label) / len(label))[:, None]
            rows = np.concatenate([left, right])
            grads = np.concatenate([coef * ev, coef * eu])
            opt.step(rows, grads)
            eps = 1e-15
            total += float(-(label * np.log(prob + eps) + (1 - label) * np.log(1 - prob + eps)).sum())
            count += len(label)
        log.debug("node2vec epoch %d loss %.4f", epoch, total / max(count, 1))
    return EmbeddingMatrix("node2vec", table, _meta(config))


# --- GAE ------------------------------------------------------------------------


@dataclass(frozen=True)
class GaeConfig:
    hidden_dim: int = 128
    out_dim: int = 64
    epochs: int = 200
    learning_rate: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.hidden_dim < 1 or self.out_dim < 1:
            raise ValueError("GAE dimensions must be >= 1")


def normalized_adjacency(graph: Graph) -> sp.csr_matrix:
    """D^-1/2 (A + I) D^-1/2."""
    a = graph.adjacency() + sp.identity(graph.num_nodes, format="csr")
    d = np.asarray(a.sum(axis=1)).ravel()
    inv = sp.diags(1.0 / np.sqrt(d))
    return (inv @ a @ inv).tocsr()


def _gae_forward(a_hat, x: Tensor, w1: Tensor, w2: Tensor) -> Tensor:
    hidden = dm.relu(dm.spmm(a_hat, dm.matmul(x, w1)))
    return dm.spmm(a_hat, dm.matmul(hidden, w2))


def _edge_logits(z: Tensor, pairs: np.ndarray) -> Tensor:
    return dm.sum(dm.mul(dm.select_rows(z, pairs[:, 0]), dm.select_rows(z, pairs[:, 1])), axis=1)


def gae_embed(graph: Graph, config: GaeConfig = GaeConfig()) -> EmbeddingMatrix:
    """Two-layer graph-convolution encoder trained to reconstruct edges.

    Each epoch scores every observed edge against as many freshly drawn
    non-adjacent pairs under binary cross-entropy.
    """
    if graph.num_edges < 1:
        raise ValueError("GAE needs at least one edge")
    rng = np.random.default_rng(config.seed)
    a_hat = normalized_adjacency(graph)
    x = Tensor(np.asarray(graph.features, dtype=np.float64))
    d = graph.feature_dim
    w1 = Tensor(rng.uniform(-1, 1, (d, config.hidden_dim)) * np.sqrt(6.0 / (d + config.hidden_dim)), True, "gae.W1")
    w2 = Tensor(
        rng.uniform(-1, 1, (config.hidden_dim, config.out_dim)) * np.sqrt(6.0 / (config.hidden_dim + config.out_dim)),
        True,
        "gae.W2",
    )
    opt = Adam([w1, w2], lr=config.learning_rate)
    nb = _Neighbors(graph)
    pos = graph.edges
    n = graph.num_nodes
    for epoch in range(config.epochs):
        cand = rng.integers(0, n, size=(2 * len(pos) + 16, 2))
        ok = (cand[:, 0] != cand[:, 1]) & ~nb.has_edge(cand[:, 0], cand[:, 1])
        neg = cand[ok][: len(pos)]
        try:
            with GradTape() as tape:
                z = _gae_forward(a_hat, x, w1, w2)
                pos_term = dm.sum(dm.log_sigmoid(_edge_logits(z, pos)))
                neg_term = dm.sum(dm.log_sigmoid(dm.scale(_edge_logits(z, neg), -1.0)))
                loss = dm.add(dm.scale(pos_term, -1.0 / len(pos)), dm.scale(neg_term, -1.0 / max(len(neg), 1)))
        except FloatingPointError as exc:
            raise FloatingPointError(f"GAE diverged at epoch {epoch}: {exc}") from exc
        if not np.isfinite(loss.data):
            raise FloatingPointError(f"GAE diverged at epoch {epoch}")
        opt.step(tape.gradient(loss, [w1, w2]))
    z = _gae_forward(a_hat, x, w1, w2).data
    return EmbeddingMatrix("gae", z, _meta(config))
