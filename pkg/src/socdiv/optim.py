"""Adam optimizer with sparse row updates over named embedding tables."""

from __future__ import annotations

import numpy as np


class OptimizerError(RuntimeError):
    """Raised when training hits non-finite gradients."""


class Adam:
    """Standard Adam (b1=0.9, b2=0.999, eps=1e-8).

    Moments are tracked per table; a step touches only rows with a nonzero
    gradient (plus the caller-supplied L2 on those rows), so rows outside
    the batch are left untouched, as with sparse Adam implementations.
    """

    def __init__(self, tables, lr, b1=0.9, b2=0.999, eps=1e-8):
        self.lr = lr
        self.b1 = b1
        self.b2 = b2
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros_like(tab) for name, tab in tables.items()}
        self.v = {name: np.zeros_like(tab) for name, tab in tables.items()}

    def step(self, tables, grads):
        """Apply one update in place; ``grads`` maps table name -> dense grad."""
        for name, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise OptimizerError(f"non-finite gradient in table {name!r}")
        self.t += 1
        bc1 = 1.0 - self.b1**self.t
        bc2 = 1.0 - self.b2**self.t
        for name, g in grads.items():
            rows = np.flatnonzero(np.any(g != 0.0, axis=1))
            if len(rows) == 0:
                continue
            gr = g[rows]
            m = self.m[name]
            v = self.v[name]
            m[rows] = self.b1 * m[rows] + (1.0 - self.b1) * gr
            v[rows] = self.b2 * v[rows] + (1.0 - self.b2) * gr**2
            m_hat = m[rows] / bc1
            v_hat = v[rows] / bc2
            tables[name][rows] -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
