"""Graph data model, TSV ingestion, edge splits and the embedding cache."""

from __future__ import annotations

import logging
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

log = logging.getLogger(__name__)

EMBEDDING_MAGIC = b"GGME"
EMBEDDING_VERSION = 1
_HEADER = struct.Struct("<4sIII")
_U32_MAX = 2**32 - 1


class GraphFormatError(ValueError):
    """Malformed input file; the message names the file and line."""


def canonical_edges(edges, num_nodes: int | None = None) -> np.ndarray:
    """Sort each pair to (i < j), drop self-loops and duplicates."""
    arr = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if arr.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    arr = np.sort(arr, axis=1)
    arr = arr[arr[:, 0] != arr[:, 1]]
    if num_nodes is not None and arr.size and (arr.min() < 0 or arr.max() >= num_nodes):
        raise ValueError(f"edge endpoint outside [0, {num_nodes})")
    return np.unique(arr, axis=0)


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected attributed graph with dense features.

    ``edges`` holds each undirected edge once as ``(i, j)`` with ``i < j``.
    """

    features: np.ndarray
    edges: np.ndarray
    labels: np.ndarray | None = None
    num_classes: int | None = None

    def __post_init__(self):
        feats = np.asarray(self.features)
        if feats.ndim != 2:
            raise ValueError("features must be a 2-D matrix")
        n = feats.shape[0]
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        canon = canonical_edges(edges, n)
        if len(canon) != len(edges) or not np.array_equal(canon, edges):
            raise ValueError("edges must be canonical: i < j, sorted, unique, no self-loops")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "edges", canon)
        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=np.int64)
            if labels.shape != (n,):
                raise ValueError(f"labels must have length {n}")
            k = self.num_classes if self.num_classes is not None else int(labels.max()) + 1
            if labels.min() < 0 or labels.max() >= k:
                raise ValueError(f"labels must lie in [0, {k})")
            object.__setattr__(self, "labels", labels)
            object.__setattr__(self, "num_classes", k)
        for arr in (self.features, self.edges, self.labels):
            if arr is not None:
                arr.setflags(write=False)

    @classmethod
    def from_edges(cls, features, edges, labels=None, num_classes=None) -> "Graph":
        feats = np.asarray(features, dtype=np.float64)
        return cls(feats, canonical_edges(edges, feats.shape[0]), labels, num_classes)

    @property
    def num_nodes(self) -> int:
        return self.features.shape[0]

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.num_nodes)

    def adjacency(self) -> sp.csr_matrix:
        """Symmetric 0/1 adjacency matrix (no self-loops)."""
        n = self.num_nodes
        i, j = self.edges[:, 0], self.edges[:, 1]
        data = np.ones(2 * len(i))
        return sp.csr_matrix((data, (np.r_[i, j], np.r_[j, i])), shape=(n, n))

    def with_edges(self, edges) -> "Graph":
        return Graph(self.features, canonical_edges(edges, self.num_nodes), self.labels, self.num_classes)

    def edge_set(self) -> set[tuple[int, int]]:
        return set(map(tuple, self.edges.tolist()))

    def summary(self) -> str:
        parts = [f"{self.num_nodes} nodes", f"{self.num_edges} edges", f"{self.feature_dim}-dim features"]
        if self.num_classes is not None:
            parts.append(f"{self.num_classes} classes")
        return ", ".join(parts)


# --- TSV ingestion -------------------------------------------------------------


def _data_lines(path: Path):
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            yield lineno, line


def _read_features(path: Path) -> np.ndarray:
    rows: dict[int, list[float]] = {}
    width = None
    for lineno, line in _data_lines(path):
        parts = line.split("\t")
        if len(parts) != 2:
            raise GraphFormatError(f"{path}:{lineno}: expected 'node_id<TAB>values'")
        try:
            node = int(parts[0])
        except ValueError:
            raise GraphFormatError(f"{path}:{lineno}: node id {parts[0]!r} is not an integer") from None
        try:
            values = [float(v) for v in parts[1].split(",")]
        except ValueError:
            raise GraphFormatError(f"{path}:{lineno}: non-numeric feature value") from None
        if width is None:
            width = len(values)
        elif len(values) != width:
            raise GraphFormatError(f"{path}:{lineno}: ragged row ({len(values)} values, expected {width})")
        if node in rows:
            raise GraphFormatError(f"{path}:{lineno}: duplicate node id {node}")
        rows[node] = values
    if not rows:
        raise GraphFormatError(f"{path}: no feature rows")
    n = len(rows)
    if min(rows) != 0 or max(rows) != n - 1:
        raise GraphFormatError(f"{path}: node ids must cover 0..{n - 1}")
    return np.array([rows[i] for i in range(n)], dtype=np.float64)


def _read_pairs(path: Path, num_nodes: int, what: str) -> list[tuple[int, int]]:
    pairs = []
    for lineno, line in _data_lines(path):
        parts = line.split()
        if len(parts) != 2:
            raise GraphFormatError(f"{path}:{lineno}: expected two fields")
        try:
            a, b = int(parts[0]), int(parts[1])
        except ValueError:
            raise GraphFormatError(f"{path}:{lineno}: non-integer {what}") from None
        if not 0 <= a < num_nodes or (what == "edge" and not 0 <= b < num_nodes):
            raise GraphFormatError(f"{path}:{lineno}: node index out of range [0, {num_nodes})")
        pairs.append((a, b))
    return pairs


def load_graph(features_path, edges_path, labels_path=None) -> Graph:
    """Read a graph from ``features.tsv``, ``edges.tsv`` and optional ``labels.tsv``."""
    features = _read_features(Path(features_path))
    n = features.shape[0]
    edges = _read_pairs(Path(edges_path), n, "edge")
    labels = None
    if labels_path is not None:
        pairs = _read_pairs(Path(labels_path), n, "label")
        labels = np.full(n, -1, dtype=np.int64)
        for node, label in pairs:
            labels[node] = label
        if (labels < 0).any():
            missing = int(np.flatnonzero(labels < 0)[0])
            raise GraphFormatError(f"{labels_path}: no non-negative label for node {missing}")
    graph = Graph.from_edges(features, edges, labels)
    log.info("loaded graph: %s", graph.summary())
    return graph


def write_graph_tsv(graph: Graph, directory) -> dict[str, Path]:
    """Write ``features.tsv``, ``edges.tsv`` and (if present) ``labels.tsv``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {"features": directory / "features.tsv", "edges": directory / "edges.tsv"}
    with open(paths["features"], "w", encoding="utf-8") as fh:
        for i, row in enumerate(graph.features):
            fh.write(f"{i}\t{','.join(repr(float(v)) for v in row)}\n")
    with open(paths["edges"], "w", encoding="utf-8") as fh:
        for i, j in graph.edges:
            fh.write(f"{i}\t{j}\n")
    if graph.labels is not None:
        paths["labels"] = directory / "labels.tsv"
        with open(paths["labels"], "w", encoding="utf-8") as fh:
            for i, y in enumerate(graph.labels):
                fh.write(f"{i}\t{y}\n")
    return paths


def load_linqs_cora(content_path, cites_path) -> Graph:
    """Read the raw LINQS citation format (``cora.content`` / ``cora.cites``).

    Nodes are numbered in file order; class names are mapped to integers in
    sorted order.
    """
    ids, feats, names = [], [], []
    for lineno, line in _data_lines(Path(content_path)):
        parts = line.split()
        ids.append(parts[0])
        try:
            feats.append([float(v) for v in parts[1:-1]])
        except ValueError:
            raise GraphFormatError(f"{content_path}:{lineno}: non-numeric feature value") from None
        names.append(parts[-1])
    index = {pid: i for i, pid in enumerate(ids)}
    classes = sorted(set(names))
    labels = np.array([classes.index(c) for c in names])
    edges = []
    for lineno, line in _data_lines(Path(cites_path)):
        a, b = line.split()
        if a not in index or b not in index:
            raise GraphFormatError(f"{cites_path}:{lineno}: unknown paper id")
        edges.append((index[a], index[b]))
    return Graph.from_edges(np.array(feats), edges, labels, len(classes))


# --- edge splits ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class EdgeSplit:
    train_edges: np.ndarray
    valid_edges: np.ndarray
    test_edges: np.ndarray
    valid_neg: np.ndarray
    test_neg: np.ndarray
    seed: int
    fractions: tuple[float, float, float] = field(default=(0.85, 0.05, 0.10))

    def describe(self) -> str:
        return (
            f"edges train/valid/test={len(self.train_edges)}/{len(self.valid_edges)}/{len(self.test_edges)}, "
            f"negatives valid/test={len(self.valid_neg)}/{len(self.test_neg)}, seed={self.seed}"
        )

    def to_bytes(self) -> bytes:
        parts = [self.train_edges, self.valid_edges, self.test_edges, self.valid_neg, self.test_neg]
        return b"".join(np.ascontiguousarray(p, dtype="<i8").tobytes() for p in parts) + str(self.seed).encode()


def _count_non_edges(num_nodes: int, num_excluded: int) -> int:
    return num_nodes * (num_nodes - 1) // 2 - num_excluded


def sample_negative_edges(graph: Graph, n: int, seed: int, exclude=()) -> np.ndarray:
    """Draw ``n`` distinct node pairs that are neither edges nor in ``exclude``.

    Pairs are uniform over the admissible unordered pairs and returned in
    canonical ``(i < j)`` form, in draw order.
    """
    forbidden = graph.edge_set()
    forbidden.update(map(tuple, canonical_edges(exclude).tolist()))
    available = _count_non_edges(graph.num_nodes, len(forbidden))
    if n > available:
        raise ValueError(f"cannot sample {n} negative edges: only {available} non-edges available")
    rng = np.random.default_rng(seed)
    if n == 0:
        return np.zeros((0, 2), dtype=np.int64)
    num = graph.num_nodes
    if 2 * n > available:
        iu, ju = np.triu_indices(num, k=1)
        cand = [(int(a), int(b)) for a, b in zip(iu, ju) if (a, b) not in forbidden]
        pick = rng.choice(len(cand), size=n, replace=False)
        return np.array([cand[k] for k in pick], dtype=np.int64).reshape(-1, 2)
    chosen: list[tuple[int, int]] = []
    seen = set(forbidden)
    while len(chosen) < n:
        batch = rng.integers(0, num, size=(2 * (n - len(chosen)) + 16, 2))
        for a, b in batch.tolist():
            if a == b:
                continue
            pair = (a, b) if a < b else (b, a)
            if pair in seen:
                continue
            seen.add(pair)
            chosen.append(pair)
            if len(chosen) == n:
                break
    return np.array(chosen, dtype=np.int64)


def split_edges(graph: Graph, fractions=(0.85, 0.05, 0.10), seed: int = 0) -> EdgeSplit:
    """Shuffle edges into train/valid/test and draw matching negatives.

    Valid and test sizes are ``floor(fraction * |E|)``; the remainder goes to
    train.  Negatives avoid every edge of the full graph.
    """
    fr = tuple(float(f) for f in fractions)
    if len(fr) != 3 or any(f < 0 for f in fr) or abs(sum(fr) - 1.0) > 1e-9:
        raise ValueError(f"fractions must be three non-negative values summing to 1, got {fractions}")
    if graph.num_edges < 10:
        raise ValueError("split_edges needs at least 10 edges")
    m = graph.num_edges
    n_valid = int(np.floor(fr[1] * m + 1e-9))
    n_test = int(np.floor(fr[2] * m + 1e-9))
    rng = np.random.default_rng(seed)
    perm = rng.permutation(m)
    valid = graph.edges[np.sort(perm[:n_valid])]
    test = graph.edges[np.sort(perm[n_valid : n_valid + n_test])]
    train = graph.edges[np.sort(perm[n_valid + n_test :])]
    neg_seed = int(rng.integers(0, 2**63 - 1))
    negatives = sample_negative_edges(graph, n_valid + n_test, neg_seed)
    return EdgeSplit(train, valid, test, negatives[:n_valid], negatives[n_valid:], seed, fr)


def write_split(path, split: EdgeSplit, config_hash: str = "") -> None:
    """Write a split as ``kind<TAB>src<TAB>dst`` lines after a key=value header."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# seed={split.seed}\n# fractions={','.join(map(str, split.fractions))}\n")
        if config_hash:
            fh.write(f"# config_hash={config_hash}\n")
        for kind in ("train_edges", "valid_edges", "test_edges", "valid_neg", "test_neg"):
            for i, j in getattr(split, kind):
                fh.write(f"{kind}\t{i}\t{j}\n")


def read_split(path) -> EdgeSplit:
    meta: dict[str, str] = {}
    groups: dict[str, list] = {k: [] for k in ("train_edges", "valid_edges", "test_edges", "valid_neg", "test_neg")}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                meta[key.strip()] = value.strip()
                continue
            parts = line.split("\t")
            if len(parts) != 3 or parts[0] not in groups:
                raise GraphFormatError(f"{path}:{lineno}: expected 'kind<TAB>src<TAB>dst'")
            groups[parts[0]].append((int(parts[1]), int(parts[2])))
    arrays = {k: np.array(v, dtype=np.int64).reshape(-1, 2) for k, v in groups.items()}
    fractions = tuple(float(x) for x in meta.get("fractions", "0.85,0.05,0.1").split(","))
    return EdgeSplit(seed=int(meta.get("seed", 0)), fractions=fractions, **arrays)


# --- embedding cache ------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class EmbeddingMatrix:
    name: str
    data: np.ndarray
    meta: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 2:
            raise ValueError("embedding data must be a 2-D matrix")
        object.__setattr__(self, "data", arr)

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]


def write_embedding(path, matrix: EmbeddingMatrix) -> None:
    """Write the binary cache file and its ``.meta`` sidecar."""
    data = np.asarray(matrix.data)
    if not np.all(np.isfinite(data)):
        raise ValueError(f"embedding {matrix.name!r} has non-finite entries")
    rows, cols = data.shape
    if rows > _U32_MAX or cols > _U32_MAX:
        raise ValueError("embedding dimensions overflow u32")
    path = Path(path)
    payload = np.ascontiguousarray(data, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(EMBEDDING_MAGIC, EMBEDDING_VERSION, rows, cols))
        fh.write(payload.tobytes())
    meta = {"name": matrix.name, "rows": str(rows), "cols": str(cols), **matrix.meta}
    with open(_meta_path(path), "w", encoding="utf-8") as fh:
        for key, value in meta.items():
            fh.write(f"{key}={value}\n")


def _meta_path(path: Path) -> Path:
    return path.with_name(path.name + ".meta")


def read_embedding(path) -> EmbeddingMatrix:
    path = Path(path)
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise ValueError(f"{path}: truncated header")
        magic, version, rows, cols = _HEADER.unpack(header)
        if magic != EMBEDDING_MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        if version != EMBEDDING_VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        expected = rows * cols * 4
        if expected > os.path.getsize(path) - _HEADER.size:
            raise ValueError(f"{path}: truncated payload ({rows}x{cols} declared)")
        payload = fh.read(expected)
    data = np.frombuffer(payload, dtype="<f4").reshape(rows, cols).astype(np.float32)
    meta: dict[str, str] = {}
    mp = _meta_path(path)
    if mp.exists():
        for line in mp.read_text(encoding="utf-8").splitlines():
            if "=" in line:
                key, _, value = line.partition("=")
                meta[key] = value
    name = meta.pop("name", path.stem)
    meta.pop("rows", None)
    meta.pop("cols", None)
    return EmbeddingMatrix(name, data, meta)


# --- synthetic benchmark -----------------------------------------------------------


def planted_partition_graph(
    num_nodes: int = 600,
    num_classes: int = 5,
    feature_dim: int = 200,
    avg_degree: float = 4.0,
    homophily: float = 0.8,
    words_per_node: int = 12,
    topic_strength: float = 0.6,
    seed: int = 0,
) -> Graph:
    """Stochastic block model with bag-of-words features tied to the blocks.

    A citation-network stand-in: each class owns a topic (a random subset of
    vocabulary words); each node draws ``words_per_node`` words, a fraction
    ``topic_strength`` of them from its class topic and the rest uniformly.
    ``homophily`` is the expected fraction of intra-class edges.
    """
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, num_classes, size=num_nodes)
    labels[:num_classes] = np.arange(num_classes)
    topic_size = max(feature_dim // num_classes, 1)
    topics = [rng.choice(feature_dim, size=topic_size, replace=False) for _ in range(num_classes)]
    features = np.zeros((num_nodes, feature_dim))
    for i in range(num_nodes):
        n_topic = rng.binomial(words_per_node, topic_strength)
        words = np.r_[
            rng.choice(topics[labels[i]], size=n_topic),
            rng.integers(0, feature_dim, size=words_per_node - n_topic),
        ]
        features[i, words] = 1.0
    target = int(round(avg_degree * num_nodes / 2))
    members = [np.flatnonzero(labels == c) for c in range(num_classes)]
    edges: set[tuple[int, int]] = set()
    while len(edges) < target:
        a = int(rng.integers(num_nodes))
        if rng.random() < homophily:
            b = int(rng.choice(members[labels[a]]))
        else:
            b = int(rng.integers(num_nodes))
        if a != b:
            edges.add((min(a, b), max(a, b)))
    return Graph.from_edges(features, sorted(edges), labels, num_classes)
