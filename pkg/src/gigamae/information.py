"""Exact Shannon quantities over small discrete joint distributions.

These are closed-form reference values used to check the chain-rule
identities that the multi-target loss is built on.  Logs are natural.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True, eq=False)
class DiscreteJoint:
    """A probability table with one axis per random variable."""

    table: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.table, dtype=np.float64)
        if (t < 0).any():
            raise ValueError("probabilities must be non-negative")
        if abs(t.sum() - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {t.sum()!r}, not 1")
        object.__setattr__(self, "table", t)

    @property
    def ndim(self) -> int:
        return self.table.ndim

    def marginal(self, axes: Sequence[int]) -> np.ndarray:
        """Marginal table over ``axes``, with axes kept in the given order."""
        axes = list(axes)
        drop = tuple(a for a in range(self.ndim) if a not in axes)
        m = self.table.sum(axis=drop)
        kept = sorted(axes)
        return np.transpose(m, [kept.index(a) for a in axes])


def random_joint(shape, rng=None, concentration: float = 1.0) -> DiscreteJoint:
    rng = np.random.default_rng(rng)
    p = rng.dirichlet(np.full(int(np.prod(shape)), concentration)).reshape(shape)
    return DiscreteJoint(p / p.sum())


def _plogp(p: np.ndarray) -> np.ndarray:
    out = np.zeros_like(p)
    nz = p > 0
    out[nz] = p[nz] * np.log(p[nz])
    return out


def entropy(joint: DiscreteJoint, axes: Sequence[int]) -> float:
    """Joint entropy H of the variables on ``axes``."""
    if not axes:
        return 0.0
    return float(-_plogp(joint.marginal(axes)).sum())


def _kl_mi(pxy: np.ndarray) -> float:
    """I(X;Y) = KL(P_XY || P_X P_Y) for a 2-D table (need not sum to 1)."""
    total = pxy.sum()
    if total <= 0:
        return 0.0
    pxy = pxy / total
    px = pxy.sum(axis=1, keepdims=True)
    py = pxy.sum(axis=0, keepdims=True)
    nz = pxy > 0
    return float((pxy[nz] * np.log(pxy[nz] / (px @ py)[nz])).sum())


def _check_groups(joint: DiscreteJoint, *groups: Sequence[int]) -> None:
    seen: list[int] = []
    for g in groups:
        for a in g:
            if not 0 <= a < joint.ndim:
                raise ValueError(f"axis {a} outside a {joint.ndim}-variable joint")
            seen.append(a)
    if len(seen) != len(set(seen)):
        raise ValueError("variable groups must not overlap")


def mutual_information(joint: DiscreteJoint, x: Sequence[int], y: Sequence[int], given: Sequence[int] = ()) -> float:
    """I(X;Y) or I(X;Y|Z) from the KL-divergence definition.

    The conditional form averages the per-slice KL over P(Z); groups of
    several axes are treated as one compound variable.
    """
    x, y, given = list(x), list(y), list(given)
    _check_groups(joint, x, y, given)
    if not x or not y:
        raise ValueError("both variable groups must be non-empty")
    m = joint.marginal(x + y + given)
    sx = int(np.prod(m.shape[: len(x)]))
    sy = int(np.prod(m.shape[len(x) : len(x) + len(y)]))
    sz = int(np.prod(m.shape[len(x) + len(y) :]))
    m = m.reshape(sx, sy, sz)
    total = 0.0
    for k in range(sz):
        pz = m[:, :, k].sum()
        if pz > 0:
            total += pz * _kl_mi(m[:, :, k])
    return total


def conditional_mi_from_entropies(joint: DiscreteJoint, x, y, given) -> float:
    """I(X;Y|Z) = H(X,Z) + H(Y,Z) - H(X,Y,Z) - H(Z)."""
    x, y, z = list(x), list(y), list(given)
    return entropy(joint, x + z) + entropy(joint, y + z) - entropy(joint, x + y + z) - entropy(joint, z)


def interaction_information(joint: DiscreteJoint, x, y, z, given: Sequence[int] = ()) -> float:
    """Three-way I(X;Y;Z) = I(X;Y) - I(X;Y|Z) (optionally everything conditioned)."""
    given = list(given)
    return mutual_information(joint, x, y, given) - mutual_information(joint, x, y, list(z) + given)


def exact_mi(joint: DiscreteJoint, grouping: Sequence[Sequence[int]], given: Sequence[int] = ()) -> float:
    """Mutual information between two groups, or interaction information among three."""
    groups = [list(g) for g in grouping]
    if len(groups) == 2:
        return mutual_information(joint, groups[0], groups[1], given)
    if len(groups) == 3:
        _check_groups(joint, *groups, given)
        return interaction_information(joint, groups[0], groups[1], groups[2], given)
    raise ValueError("grouping must name two or three variable groups")
