"""Adaptive-moment (Adam) updates for dense and row-sparse parameters."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .diffmath import Tensor


class Adam:
    """Bias-corrected Adam; weight decay is added to the gradient (L2 style)."""

    def __init__(self, params: Sequence[Tensor], lr=1e-3, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self, grads: Sequence[np.ndarray]) -> None:
        """Apply one descent step given gradients of the loss to minimize."""
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1**t
        c2 = 1.0 - self.beta2**t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            if self.weight_decay:
                g = g + self.weight_decay * p.data
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.dtype)


class SparseRowAdam:
    """Adam for an embedding table where each step touches a few rows.

    Moments are only updated for touched rows (the usual lazy variant).
    """

    def __init__(self, table: np.ndarray, lr=0.01, betas=(0.9, 0.999), eps=1e-8):
        self.table = table
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.m = np.zeros_like(table)
        self.v = np.zeros_like(table)
        self.step_count = 0

    def step(self, rows: np.ndarray, grads: np.ndarray) -> None:
        """``rows`` may repeat; their gradients are summed first."""
        self.step_count += 1
        uniq, inv = np.unique(rows, return_inverse=True)
        g = np.zeros((len(uniq), self.table.shape[1]), dtype=self.table.dtype)
        np.add.at(g, inv, grads)
        t = self.step_count
        m = self.m[uniq] * self.beta1 + (1.0 - self.beta1) * g
        v = self.v[uniq] * self.beta2 + (1.0 - self.beta2) * g * g
        self.m[uniq], self.v[uniq] = m, v
        m_hat = m / (1.0 - self.beta1**t)
        v_hat = v / (1.0 - self.beta2**t)
        self.table[uniq] -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
