"""Graph-attention encoder, re-masking and the projector bank."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path

import numpy as np

from . import diffmath as dm
from .augment import CLASS_N, MaskedGraph
from .diffmath import Tensor
from .graph import EmbeddingMatrix, read_embedding, write_embedding

ATTENTION_SLOPE = 0.2
PRELU_INIT = 0.25


def _glorot(rng, fan_in: int, fan_out: int, shape=None, dtype=np.float64) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_in, fan_out)).astype(dtype)


@dataclass
class GATLayer:
    weights: list[Tensor]  # one in_dim x head_dim matrix per head
    att_src: list[Tensor]  # head_dim x 1
    att_dst: list[Tensor]
    bias: Tensor
    slope: Tensor

    @property
    def heads(self) -> int:
        return len(self.weights)

    def parameters(self) -> list[Tensor]:
        return [*self.weights, *self.att_src, *self.att_dst, self.bias, self.slope]


@dataclass
class EncoderParams:
    layers: list[GATLayer]

    @property
    def in_dim(self) -> int:
        return self.layers[0].weights[0].shape[0]

    @property
    def out_dim(self) -> int:
        last = self.layers[-1]
        return last.heads * last.weights[0].shape[1]

    def parameters(self) -> list[Tensor]:
        return [p for layer in self.layers for p in layer.parameters()]


def init_encoder(in_dim: int, hidden_dim: int, out_dim: int, heads: int = 4, seed=0, dtype=np.float64) -> EncoderParams:
    """Two attention layers: ``heads`` concatenated heads, then a single head.

    ``hidden_dim`` is the concatenated width of layer one, so it must be a
    multiple of ``heads``.
    """
    if hidden_dim % heads:
        raise ValueError(f"hidden_dim={hidden_dim} is not divisible by heads={heads}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    layers = []
    for li, (d_in, n_heads, head_dim) in enumerate([(in_dim, heads, hidden_dim // heads), (hidden_dim, 1, out_dim)]):
        layers.append(
            GATLayer(
                weights=[Tensor(_glorot(rng, d_in, head_dim, dtype=dtype), True, f"enc{li}.W{h}") for h in range(n_heads)],
                att_src=[Tensor(_glorot(rng, head_dim, 1, dtype=dtype), True, f"enc{li}.a_src{h}") for h in range(n_heads)],
                att_dst=[Tensor(_glorot(rng, head_dim, 1, dtype=dtype), True, f"enc{li}.a_dst{h}") for h in range(n_heads)],
                bias=Tensor(np.zeros((1, n_heads * head_dim), dtype=dtype), True, f"enc{li}.bias"),
                slope=Tensor(np.full((1,), PRELU_INIT, dtype=dtype), True, f"enc{li}.prelu"),
            )
        )
    return EncoderParams(layers)


def attention_index(edges: np.ndarray, num_nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """(dst, src) arrays over both edge directions plus one self-loop per node."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    loops = np.arange(num_nodes, dtype=np.int64)
    dst = np.concatenate([edges[:, 0], edges[:, 1], loops])
    src = np.concatenate([edges[:, 1], edges[:, 0], loops])
    return dst, src


def _segment_max(values: np.ndarray, segment: np.ndarray, n: int) -> np.ndarray:
    out = np.full(n, -np.inf, dtype=values.dtype)
    np.maximum.at(out, segment, values)
    return out


def gat_layer(x: Tensor, layer: GATLayer, dst: np.ndarray, src: np.ndarray, num_nodes: int) -> Tensor:
    heads = []
    for w, a_src, a_dst in zip(layer.weights, layer.att_src, layer.att_dst):
        h = dm.matmul(x, w)
        logits = dm.leaky_relu(
            dm.add(dm.select_rows(dm.matmul(h, a_src), src), dm.select_rows(dm.matmul(h, a_dst), dst)),
            ATTENTION_SLOPE,
        )
        # softmax is shift invariant per destination, so the shift carries no gradient
        shift = _segment_max(logits.data.ravel(), dst, num_nodes)[dst].reshape(-1, 1)
        weights = dm.exp(dm.sub(logits, Tensor(shift)))
        denom = dm.segment_sum(weights, dst, num_nodes)
        alpha = dm.div(weights, dm.select_rows(denom, dst))
        heads.append(dm.edge_aggregate(alpha, h, dst, src, num_nodes))
    out = heads[0] if len(heads) == 1 else dm.concat_cols(heads)
    return dm.prelu(dm.add_bias(out, layer.bias), layer.slope)


def encode(masked_graph: MaskedGraph, params: EncoderParams) -> Tensor:
    """Node embeddings of the masked graph (one row per node)."""
    feats = masked_graph.features
    if feats.shape[1] != params.in_dim:
        raise ValueError(f"feature dim {feats.shape[1]} does not match encoder input {params.in_dim}")
    n = masked_graph.num_nodes
    dst, src = attention_index(masked_graph.adjacency_edges, n)
    x = Tensor(np.asarray(feats, dtype=params.layers[0].bias.dtype))
    for layer in params.layers:
        x = gat_layer(x, layer, dst, src, n)
    return x


# --- re-masking ----------------------------------------------------------------------


def remask_source(z: Tensor, node_class) -> Tensor:
    """Keep encoder rows of masked nodes (E, F, B); zero rows of class N."""
    node_class = np.asarray(node_class)
    if node_class.shape != (z.shape[0],):
        raise ValueError("node_class length does not match embedding rows")
    return dm.mask_rows(z, node_class != CLASS_N)


def remask_target(target: np.ndarray, node_class) -> np.ndarray:
    """Same row rule as :func:`remask_source`, for constant target matrices."""
    target = np.asarray(target)
    node_class = np.asarray(node_class)
    if node_class.shape != (target.shape[0],):
        raise ValueError("node_class length does not match target rows")
    return np.where((node_class != CLASS_N)[:, None], target, 0).astype(target.dtype)


# --- projectors -------------------------------------------------------------------


def default_subsets(num_targets: int) -> list[tuple[int, ...]]:
    """Every non-empty subset of target indices, by size then lexicographically."""
    return [c for k in range(1, num_targets + 1) for c in combinations(range(num_targets), k)]


def subset_key(subset) -> str:
    return "+".join(str(i + 1) for i in subset)


@dataclass
class Projector:
    w1: Tensor
    b1: Tensor
    slope: Tensor
    w2: Tensor
    b2: Tensor

    def parameters(self) -> list[Tensor]:
        return [self.w1, self.b1, self.slope, self.w2, self.b2]

    @property
    def out_dim(self) -> int:
        return self.w2.shape[1]


@dataclass
class ProjectorBank:
    projectors: dict[tuple[int, ...], Projector]
    target_dims: list[int]

    @property
    def subsets(self) -> list[tuple[int, ...]]:
        return list(self.projectors)

    def parameters(self) -> list[Tensor]:
        return [p for proj in self.projectors.values() for p in proj.parameters()]


def init_projectors(in_dim: int, target_dims, subsets=None, seed=0, dtype=np.float64) -> ProjectorBank:
    """One two-layer MLP per subset, mapping ``in_dim`` to the summed member dims."""
    target_dims = [int(d) for d in target_dims]
    subsets = [tuple(sorted(s)) for s in (subsets or default_subsets(len(target_dims)))]
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    bank = {}
    for s in subsets:
        if not s or any(i < 0 or i >= len(target_dims) for i in s):
            raise ValueError(f"invalid target subset {s}")
        out_dim = sum(target_dims[i] for i in s)
        width = max(in_dim, out_dim)
        key = subset_key(s)
        bank[s] = Projector(
            Tensor(_glorot(rng, in_dim, width, dtype=dtype), True, f"proj{key}.W1"),
            Tensor(np.zeros((1, width), dtype=dtype), True, f"proj{key}.b1"),
            Tensor(np.full((1,), PRELU_INIT, dtype=dtype), True, f"proj{key}.prelu"),
            Tensor(_glorot(rng, width, out_dim, dtype=dtype), True, f"proj{key}.W2"),
            Tensor(np.zeros((1, out_dim), dtype=dtype), True, f"proj{key}.b2"),
        )
    return ProjectorBank(bank, target_dims)


def project(s: Tensor, bank: ProjectorBank, subset) -> Tensor:
    proj = bank.projectors.get(tuple(sorted(subset)))
    if proj is None:
        raise KeyError(f"no projector for target subset {tuple(subset)}")
    hidden = dm.prelu(dm.add_bias(dm.matmul(s, proj.w1), proj.b1), proj.slope)
    return dm.add_bias(dm.matmul(hidden, proj.w2), proj.b2)


# --- full model and checkpoints -------------------------------------------------


@dataclass
class ModelParams:
    encoder: EncoderParams
    projectors: ProjectorBank
    meta: dict[str, str] = field(default_factory=dict)

    def parameters(self) -> list[Tensor]:
        return self.encoder.parameters() + self.projectors.parameters()

    def named_parameters(self) -> dict[str, Tensor]:
        return {p.name: p for p in self.parameters()}


def init_model(in_dim, hidden_dim, out_dim, target_dims, heads=4, subsets=None, seed=0, dtype=np.float64) -> ModelParams:
    rng = np.random.default_rng(seed)
    enc = init_encoder(in_dim, hidden_dim, out_dim, heads, rng, dtype)
    bank = init_projectors(out_dim, target_dims, subsets, rng, dtype)
    return ModelParams(enc, bank)


def save_checkpoint(directory, model: ModelParams, config_hash: str = "") -> Path:
    """One embedding-cache file per tensor plus ``manifest.txt``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    enc = model.encoder
    header = {
        "config_hash": config_hash,
        "in_dim": enc.in_dim,
        "hidden_dim": enc.layers[0].heads * enc.layers[0].weights[0].shape[1],
        "out_dim": enc.out_dim,
        "heads": enc.layers[0].heads,
        "target_dims": ",".join(map(str, model.projectors.target_dims)),
        "subsets": ";".join(subset_key(s) for s in model.projectors.subsets),
    }
    lines = [f"# {k}={v}" for k, v in header.items()]
    for p in model.parameters():
        fname = p.name + ".ggme"
        write_embedding(directory / fname, EmbeddingMatrix(p.name, p.data.reshape(p.shape[0], -1), {"config_hash": config_hash}))
        lines.append(f"{p.name}\t{'x'.join(map(str, p.shape))}\t{fname}")
    (directory / "manifest.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return directory


def load_checkpoint(directory, dtype=np.float64) -> ModelParams:
    directory = Path(directory)
    manifest = directory / "manifest.txt"
    if not manifest.exists():
        raise FileNotFoundError(f"missing checkpoint manifest {manifest}")
    header, entries = {}, []
    for line in manifest.read_text(encoding="utf-8").splitlines():
        if line.startswith("#"):
            k, _, v = line[1:].strip().partition("=")
            header[k] = v
        elif line.strip():
            name, shape, fname = line.split("\t")
            entries.append((name, tuple(int(d) for d in shape.split("x")), fname))
    subsets = [tuple(int(i) - 1 for i in key.split("+")) for key in header["subsets"].split(";")]
    model = init_model(
        int(header["in_dim"]),
        int(header["hidden_dim"]),
        int(header["out_dim"]),
        [int(d) for d in header["target_dims"].split(",")],
        int(header["heads"]),
        subsets,
        dtype=dtype,
    )
    named = model.named_parameters()
    for name, shape, fname in entries:
        data = read_embedding(directory / fname).data.reshape(shape)
        named[name].data[...] = data
    model.meta.update(header)
    return model
