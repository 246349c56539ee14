"""Downstream protocols (linear probe, k-means clustering, link prediction) and metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.special import logsumexp
from scipy.stats import rankdata

from .graph import EdgeSplit, EmbeddingMatrix

DEFAULT_GRID = (1e-3, 1e-2, 1e-1, 1.0, 10.0)


@dataclass
class EvalReport:
    task: str
    values: dict[str, list[float]]
    seeds: list[int] = field(default_factory=list)
    config_hash: str = ""
    split: str = ""
    extra: dict[str, str] = field(default_factory=dict)

    def mean(self, metric: str) -> float:
        return float(np.mean(self.values[metric]))

    def std(self, metric: str) -> float:
        vals = self.values[metric]
        return 0.0 if len(vals) < 2 else float(np.std(vals))

    @property
    def repeats(self) -> int:
        return len(next(iter(self.values.values())))

    def to_table(self) -> str:
        lines = [f"task: {self.task}  (repeats={self.repeats}, split: {self.split or '-'})"]
        lines.append(f"{'metric':<10} {'mean':>10} {'std':>10}")
        for m in self.values:
            lines.append(f"{m:<10} {self.mean(m):>10.4f} {self.std(m):>10.4f}")
        return "\n".join(lines)

    def to_kv(self) -> str:
        kv = {
            "task": self.task,
            "repeats": self.repeats,
            "seeds": ",".join(map(str, self.seeds)),
            "config_hash": self.config_hash,
            "split": self.split,
        }
        for m in self.values:
            kv[f"{m}.mean"] = repr(self.mean(m))
            kv[f"{m}.std"] = repr(self.std(m))
            kv[f"{m}.values"] = ",".join(repr(float(v)) for v in self.values[m])
        kv.update(self.extra)
        return "\n".join(f"{k}={v}" for k, v in kv.items())


# --- ranking metrics -----------------------------------------------------------


def roc_auc(pos_scores, neg_scores) -> float:
    """Probability that a random positive outscores a random negative (ties 1/2)."""
    pos = np.asarray(pos_scores, dtype=np.float64).ravel()
    neg = np.asarray(neg_scores, dtype=np.float64).ravel()
    if pos.size == 0 or neg.size == 0:
        raise ValueError("AUC needs at least one positive and one negative")
    ranks = rankdata(np.concatenate([pos, neg]))
    wins = ranks[: pos.size].sum() - pos.size * (pos.size + 1) / 2.0
    return float(wins / (pos.size * neg.size))


def average_precision(pos_scores, neg_scores) -> float:
    """Step-interpolated area under the precision-recall curve.

    Sum over distinct score thresholds (descending) of recall increment
    times precision at that threshold.
    """
    pos = np.asarray(pos_scores, dtype=np.float64).ravel()
    neg = np.asarray(neg_scores, dtype=np.float64).ravel()
    if pos.size == 0:
        raise ValueError("AP needs at least one positive")
    scores = np.concatenate([pos, neg])
    labels = np.concatenate([np.ones(pos.size), np.zeros(neg.size)])
    order = np.argsort(-scores, kind="stable")
    scores, labels = scores[order], labels[order]
    last = np.r_[np.flatnonzero(np.diff(scores) != 0), scores.size - 1]
    tp = np.cumsum(labels.astype(np.int64))[last]
    fp = (last + 1) - tp
    prev_tp = np.r_[0, tp[:-1]]
    # exact rational sum, so the result is the correctly rounded value
    total = sum(
        (Fraction(int(d) * int(t), int(t + f)) for d, t, f in zip(tp - prev_tp, tp, fp) if d),
        Fraction(0),
    )
    return float(total / pos.size)


# --- clustering metrics --------------------------------------------------------


def contingency(a, b) -> np.ndarray:
    _, ai = np.unique(np.asarray(a), return_inverse=True)
    _, bi = np.unique(np.asarray(b), return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)
    return table


def nmi(labels_true, labels_pred) -> float:
    """I(pred; true) / sqrt(H(pred) H(true)); 0 when either entropy is 0."""
    table = contingency(labels_true, labels_pred)
    n = table.sum()
    # marginals from integer counts, so a single cluster has entropy exactly 0
    p = table / n
    pa, pb = table.sum(axis=1) / n, table.sum(axis=0) / n
    ha = -float(np.sum(pa * np.log(pa)))
    hb = -float(np.sum(pb * np.log(pb)))
    if ha <= 0 or hb <= 0:
        return 0.0
    nz = p > 0
    mi = float(np.sum(p[nz] * np.log(p[nz] / np.outer(pa, pb)[nz])))
    return mi / math.sqrt(ha * hb)


def _comb2(x):
    x = np.asarray(x, dtype=np.float64)
    return x * (x - 1) / 2.0


def ari(labels_true, labels_pred) -> float:
    """Adjusted Rand index (pair counting, chance-corrected)."""
    table = contingency(labels_true, labels_pred)
    n = table.sum()
    index = _comb2(table).sum()
    sum_a = _comb2(table.sum(axis=1)).sum()
    sum_b = _comb2(table.sum(axis=0)).sum()
    expected = sum_a * sum_b / _comb2(n) if n > 1 else 0.0
    max_index = 0.5 * (sum_a + sum_b)
    if max_index == expected:
        return 1.0
    return float((index - expected) / (max_index - expected))


# --- k-means --------------------------------------------------------------------


@dataclass
class KMeansResult:
    labels: np.ndarray
    centers: np.ndarray
    inertia_history: list[float]

    @property
    def inertia(self) -> float:
        return self.inertia_history[-1]


def _sq_dists(x, centers):
    d = (x * x).sum(axis=1)[:, None] - 2 * x @ centers.T + (centers * centers).sum(axis=1)[None, :]
    return np.maximum(d, 0.0)


def kmeans(x, k: int, seed=None, max_iter: int = 300) -> KMeansResult:
    """k-means++ seeding followed by Lloyd iterations until labels stop changing."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k={k} outside [1, {n}]")
    rng = np.random.default_rng(seed)
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    closest = _sq_dists(x, centers[:1]).ravel()
    for c in range(1, k):
        total = closest.sum()
        idx = rng.choice(n, p=closest / total) if total > 0 else rng.integers(n)
        centers[c] = x[idx]
        closest = np.minimum(closest, _sq_dists(x, centers[c : c + 1]).ravel())
    labels = None
    history = []
    for _ in range(max_iter):
        d = _sq_dists(x, centers)
        new = d.argmin(axis=1)
        history.append(float(d[np.arange(n), new].sum()))
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for c in range(k):
            members = labels == c
            if members.any():
                centers[c] = x[members].mean(axis=0)
            else:
                # reseed an empty cluster at the point farthest from its center
                far = int(d[np.arange(n), labels].argmax())
                centers[c] = x[far]
                labels[far] = c
    d = _sq_dists(x, centers)
    labels = d.argmin(axis=1)
    history.append(float(d[np.arange(n), labels].sum()))
    return KMeansResult(labels, centers, history)


def cluster_eval(z, labels, k: int | None = None, repeats: int = 10, seed: int = 0, config_hash: str = "") -> EvalReport:
    z = np.asarray(z.data if isinstance(z, EmbeddingMatrix) else z, dtype=np.float64)
    labels = np.asarray(labels)
    k = k or len(np.unique(labels))
    seeds = [seed + r for r in range(repeats)]
    nmis, aris = [], []
    for s in seeds:
        pred = kmeans(z, k, s).labels
        nmis.append(nmi(labels, pred))
        aris.append(ari(labels, pred))
    return EvalReport("cluster", {"nmi": nmis, "ari": aris}, seeds, config_hash, f"k={k}, full graph")


# --- linear probe --------------------------------------------------------------


def _softmax_regression(x, y, num_classes: int, reg: float, max_iter: int = 5000, tol: float = 1e-6):
    """Multinomial logistic regression by accelerated full-batch gradient descent.

    Minimizes mean cross-entropy + reg/2 * ||W||^2 (bias unpenalized); stops
    when the gradient norm drops below ``tol`` or after ``max_iter`` steps.
    """
    n, d = x.shape
    xb = np.hstack([x, np.ones((n, 1))])
    onehot = np.eye(num_classes)[y]
    lipschitz = 0.5 * np.linalg.norm(xb, 2) ** 2 / n + reg
    step = 1.0 / lipschitz
    penalty = np.ones((d + 1, 1))
    penalty[-1] = 0.0

    def grad(w):
        logits = xb @ w
        prob = np.exp(logits - logsumexp(logits, axis=1, keepdims=True))
        return xb.T @ (prob - onehot) / n + reg * penalty * w

    w = np.zeros((d + 1, num_classes))
    w_prev = w.copy()
    for it in range(max_iter):
        look = w + (it / (it + 3.0)) * (w - w_prev)
        g = grad(look)
        if np.linalg.norm(g) < tol:
            w_prev, w = w, look
            break
        w_prev, w = w, look - step * g
    return w


def _predict(w, x):
    return (np.hstack([x, np.ones((x.shape[0], 1))]) @ w).argmax(axis=1)


def _class_split(labels, fractions, rng, num_classes, max_retries: int = 20):
    n = len(labels)
    n_train = max(1, int(round(fractions[0] * n)))
    n_valid = max(1, int(round(fractions[1] * n)))
    for _ in range(max_retries):
        perm = rng.permutation(n)
        train = perm[:n_train]
        if len(np.unique(labels[train])) == num_classes:
            return train, perm[n_train : n_train + n_valid], perm[n_train + n_valid :]
    raise RuntimeError(f"no split with every class in training after {max_retries} attempts")


def linear_probe(
    z,
    labels,
    split_fractions=(0.1, 0.1, 0.8),
    grid: Sequence[float] = DEFAULT_GRID,
    repeats: int = 10,
    seed: int = 0,
    config_hash: str = "",
    max_iter: int = 5000,
) -> EvalReport:
    """Frozen-embedding logistic regression; the grid value with the best
    validation accuracy is scored on the test nodes.  Rows are L2-normalized."""
    if not grid:
        raise ValueError("regularization grid is empty")
    z = np.asarray(z.data if isinstance(z, EmbeddingMatrix) else z, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    x = z / np.maximum(np.linalg.norm(z, axis=1, keepdims=True), 1e-12)
    num_classes = int(labels.max()) + 1
    rng = np.random.default_rng(seed)
    accs, chosen = [], []
    for _ in range(repeats):
        train, valid, test = _class_split(labels, split_fractions, rng, num_classes)
        best = None
        for reg in grid:
            w = _softmax_regression(x[train], labels[train], num_classes, reg, max_iter)
            val_acc = float((_predict(w, x[valid]) == labels[valid]).mean())
            if best is None or val_acc > best[0]:
                best = (val_acc, reg, w)
        accs.append(float((_predict(best[2], x[test]) == labels[test]).mean()))
        chosen.append(best[1])
    frac = "/".join(f"{f:g}" for f in split_fractions)
    return EvalReport(
        "classify",
        {"accuracy": accs},
        [seed],
        config_hash,
        f"train/valid/test={frac}",
        {"chosen_reg": ",".join(f"{c:g}" for c in chosen)},
    )


# --- link prediction -------------------------------------------------------------


def link_scores(z, pairs) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    return np.einsum("ij,ij->i", z[pairs[:, 0]], z[pairs[:, 1]])


def link_eval(z, split: EdgeSplit, config_hash: str = "") -> EvalReport:
    """Rank held-out test edges against sampled non-edges by inner product."""
    z = np.asarray(z.data if isinstance(z, EmbeddingMatrix) else z, dtype=np.float64)
    if len(split.test_edges) == 0:
        raise ValueError("link evaluation needs a non-empty test set")
    pos, neg = link_scores(z, split.test_edges), link_scores(z, split.test_neg)
    extra = {}
    if len(split.valid_edges) and len(split.valid_neg):
        vp, vn = link_scores(z, split.valid_edges), link_scores(z, split.valid_neg)
        extra = {"valid_auc": repr(roc_auc(vp, vn)), "valid_ap": repr(average_precision(vp, vn))}
    return EvalReport(
        "link",
        {"auc": [roc_auc(pos, neg)], "ap": [average_precision(pos, neg)]},
        [split.seed],
        config_hash,
        split.describe(),
        extra,
    )


# --- naive integration ------------------------------------------------------------


def naive_integration(targets, mode: str) -> EmbeddingMatrix:
    """Combine target embeddings without training: max, avg or concat."""
    mats = [np.asarray(t.data if isinstance(t, EmbeddingMatrix) else t, dtype=np.float64) for t in targets]
    if not mats:
        raise ValueError("no targets to integrate")
    if len({m.shape[0] for m in mats}) != 1:
        raise ValueError("targets are not row-aligned")
    if mode == "concat":
        return EmbeddingMatrix("concat", np.concatenate(mats, axis=1))
    width = max(m.shape[1] for m in mats)
    padded = np.stack([np.pad(m, ((0, 0), (0, width - m.shape[1]))) for m in mats])
    if mode == "max":
        return EmbeddingMatrix("max", padded.max(axis=0))
    if mode == "avg":
        return EmbeddingMatrix("avg", padded.mean(axis=0))
    raise ValueError(f"unknown integration mode {mode!r}")
