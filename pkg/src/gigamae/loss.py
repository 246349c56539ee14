"""InfoNCE discriminators and the weighted multi-target reconstruction loss."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import diffmath as dm
from .augment import CLASS_B, CLASS_E, CLASS_F, CLASS_N, CLASS_NAMES
from .diffmath import Tensor
from .model import ProjectorBank, project, subset_key


def discriminator_scores(s_proj, t, tau: float) -> Tensor:
    """``exp(cos(s_proj[i], t[j]) / tau)`` for every pair of rows."""
    if tau <= 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    return dm.exp(dm.scale(dm.cosine_matrix(s_proj, t), 1.0 / tau))


def _directional(cross: Tensor, intra, columns: bool = False) -> Tensor:
    """Per-row log of positive over (cross row + intra row without its diagonal)."""
    return dm.contrastive_log_ratio(cross, intra, columns)


def infonce_per_node(p, q, tau: float, projector=None) -> Tensor:
    """One-directional InfoNCE term for each row pair ``(p_i, q_i)``.

    ``projector`` (a callable on tensors) is applied to ``p`` first.  The
    denominator sums the cross scores ``D(p_i, q_j)`` and the intra-view
    scores ``D(p_i, p_j)`` for ``j != i``; every term is <= 0.
    """
    p, q = dm.as_tensor(p), dm.as_tensor(q)
    if p.shape[0] == 0:
        raise ValueError("InfoNCE needs at least one row")
    if tau <= 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    if projector is not None:
        p = projector(p)
    cross = dm.scale(dm.cosine_matrix(p, q), 1.0 / tau)
    intra = dm.scale(dm.cosine_matrix(p, p), 1.0 / tau)
    return _directional(cross, intra)


def symmetric_infonce_per_node(p_proj, q, tau: float, q_cosines: np.ndarray | None = None) -> Tensor:
    """Average of both InfoNCE directions per node, sharing one score matrix.

    ``p_proj`` is already projected; ``q`` is a constant target block.
    ``q_cosines`` may supply the precomputed target-target cosine matrix.
    """
    cross = dm.scale(dm.cosine_matrix(p_proj, q), 1.0 / tau)
    intra_p = dm.scale(dm.cosine_matrix(p_proj, p_proj), 1.0 / tau)
    if q_cosines is None:
        qn = dm.l2_normalize_rows(dm.as_tensor(q)).data
        q_cosines = qn @ qn.T
    intra_q = np.asarray(q_cosines, dtype=cross.dtype) / tau
    forward = _directional(cross, intra_p)
    reverse = _directional(cross, intra_q, columns=True)
    return dm.scale(dm.add(forward, reverse), 0.5)


# --- weights --------------------------------------------------------------------


def lambda_transform(l1: float, l2: float, l3: float) -> tuple[float, float, float]:
    """Weights on (exclusive_1, exclusive_2, common) knowledge to weights on
    the estimable terms (single target 1, single target 2, joint target)."""
    out = (l3 - l2, l3 - l1, l1 + l2 - l3)
    if min(out) < 0:
        warnings.warn(f"transformed weights {out} contain a negative entry", stacklevel=2)
    return out


def inverse_lambda_transform(t1: float, t2: float, t3: float) -> tuple[float, float, float]:
    l3 = t1 + t2 + t3
    return (l3 - t2, l3 - t1, l3)


@dataclass(frozen=True)
class ClassWeights:
    """Per-class weights, one per configured target subset (class N has none)."""

    E: tuple[float, ...]
    F: tuple[float, ...]
    B: tuple[float, ...]

    def __post_init__(self):
        lengths = {len(self.E), len(self.F), len(self.B)}
        if len(lengths) != 1:
            raise ValueError("every class needs the same number of subset weights")
        if min(min(self.E), min(self.F), min(self.B)) < 0:
            raise ValueError("subset weights must be non-negative")

    @classmethod
    def uniform(cls, num_subsets: int, value: float = 1.0) -> "ClassWeights":
        w = (value,) * num_subsets
        return cls(w, w, w)

    @property
    def num_subsets(self) -> int:
        return len(self.E)

    def matrix(self) -> np.ndarray:
        """4 x num_subsets array indexed by node class (row N is zero)."""
        m = np.zeros((4, self.num_subsets))
        m[CLASS_E], m[CLASS_F], m[CLASS_B] = self.E, self.F, self.B
        return m

    def scaled(self, c: float) -> "ClassWeights":
        return ClassWeights(*(tuple(c * v for v in w) for w in (self.E, self.F, self.B)))


DEFAULT_CLASS_WEIGHTS = ClassWeights(E=(5.0, 2.0, 6.0), F=(2.0, 5.0, 6.0), B=(1.0, 1.0, 3.0))


# --- multi-target loss -----------------------------------------------------------


@dataclass
class LossBreakdown:
    total: float
    parts: dict[tuple[str, str], float] = field(default_factory=dict)
    mean_infonce: dict[str, float] = field(default_factory=dict)
    num_nodes: int = 0

    def to_kv(self) -> str:
        items = [f"total={self.total:.10g}", f"nodes={self.num_nodes}"]
        items += [f"part.{s}.{c}={v:.10g}" for (s, c), v in self.parts.items()]
        items += [f"infonce.{s}={v:.10g}" for s, v in self.mean_infonce.items()]
        return " ".join(items)


def multi_target_loss(
    s: Tensor,
    targets: Sequence[np.ndarray],
    bank: ProjectorBank,
    class_weights: ClassWeights,
    node_class,
    tau: float = 0.5,
    negatives: str = "masked",
    target_cosines: Mapping[tuple[int, ...], np.ndarray] | None = None,
) -> tuple[Tensor, LossBreakdown]:
    """Weighted sum over target subsets of per-node symmetric InfoNCE.

    Only nodes outside class N contribute; each contributes to subset ``k``
    with its class weight, and the sum is divided by the number of
    contributing nodes.  The returned value is to be maximized.

    ``negatives="masked"`` scores each node against the other masked nodes;
    ``"all"`` widens the candidate set to every row of the re-masked
    matrices.  ``target_cosines`` optionally maps a subset to the full
    |V| x |V| cosine matrix of its concatenated targets.
    """
    node_class = np.asarray(node_class)
    subsets = bank.subsets
    if class_weights.num_subsets != len(subsets):
        raise ValueError(f"{class_weights.num_subsets} weights per class for {len(subsets)} subsets")
    if tau <= 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    contributing = np.flatnonzero(node_class != CLASS_N)
    if contributing.size == 0:
        raise ValueError("no masked nodes: the loss is empty")
    if negatives == "masked":
        rows = contributing
    elif negatives == "all":
        rows = np.arange(len(node_class))
    else:
        raise ValueError(f"unknown negatives mode {negatives!r}")
    for t in targets:
        if t.shape[0] != len(node_class):
            raise ValueError("target rows do not match node count")
    weights = class_weights.matrix()[node_class[rows]]
    keep = (node_class[rows] != CLASS_N)[:, None]
    s_rows = dm.select_rows(s, rows)
    n_contrib = contributing.size
    total = None
    breakdown = LossBreakdown(0.0, num_nodes=n_contrib)
    for k, subset in enumerate(subsets):
        key = subset_key(subset)
        block = np.concatenate([np.asarray(targets[i])[rows] for i in subset], axis=1)
        block = np.where(keep, block, 0).astype(s.dtype)
        qcos = None
        if target_cosines is not None and subset in target_cosines:
            qcos = target_cosines[subset][np.ix_(rows, rows)]
            if not keep.all():
                # re-masked target rows are zero, so their cosines are zero too
                qcos = np.where(keep & keep.T, qcos, 0)
        ell = symmetric_infonce_per_node(project(s_rows, bank, subset), block, tau, qcos)
        w = weights[:, k : k + 1].astype(s.dtype)
        term = dm.sum(dm.mul(ell, w))
        total = term if total is None else dm.add(total, term)
        per_node = ell.data.ravel()
        cls = node_class[rows]
        for c in (CLASS_E, CLASS_F, CLASS_B):
            sel = cls == c
            breakdown.parts[(key, CLASS_NAMES[c])] = float((per_node[sel] * w.ravel()[sel]).sum() / n_contrib)
        breakdown.mean_infonce[key] = float(per_node[cls != CLASS_N].mean())
    value = dm.scale(total, 1.0 / n_contrib)
    breakdown.total = float(value.data)
    return value, breakdown


def target_cosine_matrices(targets: Sequence[np.ndarray], subsets, dtype=np.float64) -> dict[tuple[int, ...], np.ndarray]:
    """Full-graph cosine matrices of each subset's concatenated targets."""
    out = {}
    for subset in subsets:
        block = np.concatenate([np.asarray(targets[i], dtype=np.float64) for i in subset], axis=1)
        norm = np.maximum(np.sqrt((block * block).sum(axis=1, keepdims=True)), dm.COSINE_EPS)
        unit = block / norm
        out[tuple(subset)] = (unit @ unit.T).astype(dtype)
    return out
