"""Random instances for central-difference gradient checks.

Each builder takes a Generator and returns ``(f, params)`` where ``f()`` is a
scalar tensor.  Op outputs are contracted with a fixed random matrix so that
every output entry matters.
"""

import numpy as np
import scipy.sparse as sp

from gigamae import diffmath as dm
from gigamae.augment import apply_masks, sample_masks
from gigamae.diffmath import Tensor
from gigamae.graph import Graph
from gigamae.loss import ClassWeights, multi_target_loss, symmetric_infonce_per_node
from gigamae.model import encode, init_encoder, init_model, init_projectors, project, remask_source


def _param(rng, *shape, low=None, name="x"):
    data = rng.normal(size=shape)
    if low is not None:
        data = np.abs(data) + low
    return Tensor(data, True, name)


def _contracted(op_fn, rng):
    """Scalar ``sum(op_fn() * W)`` with ``W`` drawn once for this case."""
    weights = Tensor(rng.normal(size=op_fn().shape))
    return lambda: dm.sum(dm.mul(op_fn(), weights))


def _shape(rng):
    return int(rng.integers(2, 6)), int(rng.integers(2, 6))


def _unary(op, low=None):
    def build(rng):
        x = _param(rng, *_shape(rng), low=low)
        return _contracted(lambda: op(x), rng), [x]

    return build


def _binary(op, low_b=None, broadcast=False):
    def build(rng):
        n, m = _shape(rng)
        a = _param(rng, n, m, name="a")
        b = _param(rng, 1 if broadcast else n, m, low=low_b, name="b")
        return _contracted(lambda: op(a, b), rng), [a, b]

    return build


def _matmul(rng):
    n, k = _shape(rng)
    a, b = _param(rng, n, k, name="a"), _param(rng, k, int(rng.integers(1, 5)), name="b")
    return _contracted(lambda: dm.matmul(a, b), rng), [a, b]


def _add_bias(rng):
    n, m = _shape(rng)
    x, b = _param(rng, n, m), _param(rng, 1, m, name="bias")
    return _contracted(lambda: dm.add_bias(x, b), rng), [x, b]


def _prelu_scalar(rng):
    x, a = _param(rng, *_shape(rng)), _param(rng, 1, name="slope")
    return _contracted(lambda: dm.prelu(x, a), rng), [x, a]


def _prelu_columns(rng):
    n, m = _shape(rng)
    x, a = _param(rng, n, m), _param(rng, m, name="slope")
    return _contracted(lambda: dm.prelu(x, a), rng), [x, a]


def _reduction(op, axis):
    def build(rng):
        x = _param(rng, *_shape(rng))
        if axis is None:
            return (lambda: dm.scale(op(x), 1.7)), [x]
        return _contracted(lambda: op(x, axis=axis), rng), [x]

    return build


def _concat(rng):
    n = int(rng.integers(2, 5))
    parts = [_param(rng, n, int(rng.integers(1, 4)), name=f"p{i}") for i in range(3)]
    return _contracted(lambda: dm.concat_cols(parts), rng), parts


def _select_rows(rng):
    x = _param(rng, 5, 3)
    idx = rng.integers(0, 5, size=8)  # repeats exercise gradient accumulation
    return _contracted(lambda: dm.select_rows(x, idx), rng), [x]


def _mask_rows(rng):
    x = _param(rng, 6, 3)
    keep = rng.random(6) < 0.5
    return _contracted(lambda: dm.mask_rows(x, keep), rng), [x]


def _diagonal(rng):
    n = int(rng.integers(2, 6))
    x = _param(rng, n, n)
    return _contracted(lambda: dm.diagonal(x), rng), [x]


def _logsumexp(masked):
    def build(rng):
        n, m = _shape(rng)
        x = _param(rng, n, m)
        mask = None
        if masked:
            mask = rng.random((n, m)) < 0.6
            mask[:, 0] = True
        return _contracted(lambda: dm.logsumexp_rows(x, mask), rng), [x]

    return build


def _cosine(rng):
    d = int(rng.integers(2, 5))
    p, q = _param(rng, int(rng.integers(2, 5)), d, name="p"), _param(rng, int(rng.integers(2, 5)), d, name="q")
    return _contracted(lambda: dm.cosine_matrix(p, q), rng), [p, q]


def _cosine_self(rng):
    p = _param(rng, *_shape(rng), name="p")
    return _contracted(lambda: dm.cosine_matrix(p, p), rng), [p]


def _gram(rng):
    x = _param(rng, *_shape(rng))
    return _contracted(lambda: dm.gram(x), rng), [x]


def _log_ratio(columns, constant_intra):
    def build(rng):
        n = int(rng.integers(2, 6))
        c = _param(rng, n, n, name="cross")
        intra = rng.normal(size=(n, n)) if constant_intra else _param(rng, n, n, name="intra")
        params = [c] if constant_intra else [c, intra]
        return _contracted(lambda: dm.contrastive_log_ratio(c, intra, columns), rng), params

    return build


def _segment_sum(rng):
    x = _param(rng, 7, 2)
    seg = rng.integers(0, 3, size=7)
    return _contracted(lambda: dm.segment_sum(x, seg, 3), rng), [x]


def _edge_aggregate(rng):
    n = 5
    pairs = {(int(a), int(b)) for a, b in rng.integers(0, n, size=(9, 2))}
    dst, src = np.array(sorted(pairs)).T
    w, h = _param(rng, len(dst), 1, name="w"), _param(rng, n, 3, name="h")
    return _contracted(lambda: dm.edge_aggregate(w, h, dst, src, n), rng), [w, h]


def _spmm(rng):
    m = sp.random(5, 4, density=0.5, random_state=int(rng.integers(1 << 30)))
    x = _param(rng, 4, 3)
    return _contracted(lambda: dm.spmm(m, x), rng), [x]


def _composition(rng):
    """Depth >= 4: matmul, bias, PReLU, normalize, cosine, exp, log-sum-exp, mean."""
    x = Tensor(rng.normal(size=(5, 4)))
    w, b, a = _param(rng, 4, 3, name="w"), _param(rng, 1, 3, name="b"), _param(rng, 1, name="a")
    q = _param(rng, 4, 3, name="q")

    def f():
        h = dm.prelu(dm.add_bias(dm.matmul(x, w), b), a)
        s = dm.scale(dm.cosine_matrix(h, q), 2.0)
        return dm.mean(dm.logsumexp_rows(dm.exp(dm.scale(s, 0.3))))

    return f, [w, b, a, q]


OP_CASES = {
    "add": _binary(dm.add),
    "add_broadcast": _binary(dm.add, broadcast=True),
    "sub": _binary(dm.sub),
    "mul": _binary(dm.mul),
    "div": _binary(dm.div, low_b=0.5),
    "scale": _unary(lambda x: dm.scale(x, -2.5)),
    "add_bias": _add_bias,
    "matmul": _matmul,
    "transpose": _unary(dm.transpose),
    "exp": _unary(dm.exp),
    "log": _unary(dm.log, low=0.3),
    "log_sigmoid": _unary(dm.log_sigmoid),
    "relu": _unary(dm.relu),
    "leaky_relu": _unary(lambda x: dm.leaky_relu(x, 0.2)),
    "prelu_scalar": _prelu_scalar,
    "prelu_columns": _prelu_columns,
    "elu": _unary(dm.elu),
    "sum_all": _reduction(dm.sum, None),
    "sum_rows": _reduction(dm.sum, 1),
    "sum_cols": _reduction(dm.sum, 0),
    "mean_all": _reduction(dm.mean, None),
    "mean_rows": _reduction(dm.mean, 1),
    "l2_normalize_rows": _unary(dm.l2_normalize_rows),
    "concat_cols": _concat,
    "select_rows": _select_rows,
    "mask_rows": _mask_rows,
    "diagonal": _diagonal,
    "logsumexp_rows": _logsumexp(False),
    "logsumexp_rows_masked": _logsumexp(True),
    "cosine_matrix": _cosine,
    "cosine_matrix_self": _cosine_self,
    "gram": _gram,
    "contrastive_log_ratio": _log_ratio(False, False),
    "contrastive_log_ratio_columns": _log_ratio(True, False),
    "contrastive_log_ratio_const": _log_ratio(True, True),
    "segment_sum": _segment_sum,
    "edge_aggregate": _edge_aggregate,
    "spmm": _spmm,
    "composition_depth4": _composition,
}


# --- model-level cases -------------------------------------------------------------


def toy_graph(rng, n=10, d=5):
    edges = set()
    for i in range(n):
        edges.add(tuple(sorted((i, (i + 1) % n))))
    while len(edges) < n + 4:
        a, b = rng.choice(n, 2, replace=False)
        edges.add((int(min(a, b)), int(max(a, b))))
    return Graph.from_edges(rng.normal(size=(n, d)), sorted(edges))


def _jitter(params, rng):
    # random values everywhere keep PReLU inputs away from the kink at zero
    for p in params:
        p.data[...] = rng.normal(scale=0.5, size=p.shape)


def encoder_case(rng):
    g = toy_graph(rng)
    enc = init_encoder(g.feature_dim, 8, 3, heads=4, seed=rng)
    _jitter(enc.parameters(), rng)
    masked = apply_masks(g, sample_masks(g, 0.3, 0.3, rng))
    weights = Tensor(rng.normal(size=(g.num_nodes, 3)))
    return (lambda: dm.sum(dm.mul(encode(masked, enc), weights))), enc.parameters()


def projector_cases(rng):
    """One case per projector of a two-target bank."""
    bank = init_projectors(4, [3, 2], seed=rng)
    _jitter(bank.parameters(), rng)
    s = Tensor(rng.normal(size=(6, 4)))
    cases = []
    for subset, proj in bank.projectors.items():
        weights = Tensor(rng.normal(size=(6, proj.out_dim)))
        cases.append(((lambda subset=subset, weights=weights: dm.sum(dm.mul(project(s, bank, subset), weights))), proj.parameters()))
    return cases


def infonce_mlp_case(rng):
    """Symmetric InfoNCE of random 6x8 P, Q with an MLP projector in front."""
    bank = init_projectors(8, [8], seed=rng)
    _jitter(bank.parameters(), rng)
    p = _param(rng, 6, 8, name="p")
    q = rng.normal(size=(6, 8))
    params = [p, *bank.parameters()]
    return (lambda: dm.sum(symmetric_infonce_per_node(project(p, bank, (0,)), q, 0.5))), params


def full_loss_case(rng):
    """Multi-target loss on a 10-node toy graph through encoder, re-masking and projectors."""
    g = toy_graph(rng)
    targets = [rng.normal(size=(10, 3)), rng.normal(size=(10, 2))]
    model = init_model(g.feature_dim, 4, 3, [3, 2], heads=2, seed=int(rng.integers(1 << 30)))
    _jitter(model.parameters(), rng)
    plan = sample_masks(g, 0.4, 0.4, rng)
    while not plan.masked_nodes.size:
        plan = sample_masks(g, 0.4, 0.4, rng)
    masked = apply_masks(g, plan)
    weights = ClassWeights((5.0, 2.0, 6.0), (2.0, 5.0, 6.0), (1.0, 1.0, 3.0))

    def f():
        s = remask_source(encode(masked, model.encoder), plan.node_class)
        value, _ = multi_target_loss(s, targets, model.projectors, weights, plan.node_class, 0.5)
        return value

    return f, model.parameters()


def model_cases(rng):
    """Named model-level cases for one random draw."""
    out = {"encoder": encoder_case(rng), "infonce_mlp": infonce_mlp_case(rng), "full_loss": full_loss_case(rng)}
    for k, case in enumerate(projector_cases(rng)):
        out[f"projector_{k}"] = case
    return out
