"""Batched evaluation of a base layer and its cascading low-rank heads.

Order ``i`` output is ``f((W + sum_{j<=i} A_j B_j) X)``.  The fast path never
forms an ``n x n`` adapter product: it stacks every ``B_j``, multiplies once,
and accumulates the ``A_j Y_j`` terms with a running prefix sum.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .flops import FlopCounter, add_flops, matmul_flops

ACTIVATIONS = {
    "identity": lambda Z: Z,
    "relu": lambda Z: np.maximum(Z, 0.0),
    "tanh": np.tanh,
}


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class CascadeModel:
    W: np.ndarray
    adapters: tuple = ()
    activation: str = "identity"

    def __post_init__(self):
        W = np.asarray(self.W, dtype=np.float64)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise ShapeError(f"W must be square, got {W.shape}")
        n = W.shape[0]
        pairs = []
        for i, (A, B) in enumerate(self.adapters, start=1):
            A = np.asarray(A, dtype=np.float64)
            B = np.asarray(B, dtype=np.float64)
            if A.ndim != 2 or B.ndim != 2 or A.shape[0] != n or B.shape[1] != n or A.shape[1] != B.shape[0]:
                raise ShapeError(f"adapter {i}: A{A.shape} B{B.shape} do not conform to n={n}")
            if A.shape[1] < 1:
                raise ShapeError(f"adapter {i} has rank 0")
            pairs.append((A, B))
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}; pick from {sorted(ACTIVATIONS)}")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "adapters", tuple(pairs))

    @property
    def n(self):
        return self.W.shape[0]

    @property
    def k(self):
        return len(self.adapters)

    @property
    def ranks(self):
        return tuple(A.shape[1] for A, _ in self.adapters)

    @property
    def total_rank(self):
        return sum(self.ranks)

    def truncated(self, j):
        """The same model keeping only the first ``j`` adapters."""
        return CascadeModel(self.W, self.adapters[:j], self.activation)


@dataclass
class EvalOutput:
    orders: list
    flops_used: int


def _check_input(model, X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != model.n:
        raise ShapeError(f"X must have {model.n} rows, got shape {X.shape}")
    return X


def eval_all_orders(model: CascadeModel, X) -> EvalOutput:
    """All ``k+1`` heads via one stacked ``B`` product and prefix sums."""
    X = _check_input(model, X)
    n, b = X.shape
    f = ACTIVATIONS[model.activation]
    fc = FlopCounter()
    Z0 = fc.matmul(model.W, X)
    if model.k == 0:
        return EvalOutput([f(Z0)], fc.total)
    Bstack = np.vstack([B for _, B in model.adapters])
    Y = fc.matmul(Bstack, X)
    Zs = np.empty((model.k, n, b))
    off = 0
    for i, (A, _) in enumerate(model.adapters):
        r = A.shape[1]
        Zs[i] = fc.matmul(A, Y[off : off + r])
        off += r
    pre = _kernels.prefix_sums(Z0, Zs)
    fc.add(model.k * add_flops(n, b))
    return EvalOutput([f(pre[i]) for i in range(model.k + 1)], fc.total)


def eval_naive(model: CascadeModel, X) -> EvalOutput:
    """Dense oracle: materialise every ``W_i`` and multiply it by ``X``."""
    X = _check_input(model, X)
    f = ACTIVATIONS[model.activation]
    fc = FlopCounter()
    Wi = model.W
    orders = [f(fc.matmul(Wi, X))]
    for A, B in model.adapters:
        Wi = Wi + fc.matmul(A, B)
        fc.add(add_flops(*Wi.shape))
        orders.append(f(fc.matmul(Wi, X)))
    return EvalOutput(orders, fc.total)


def flop_estimate(model: CascadeModel, b: int):
    """Closed-form ``(cascade_flops, naive_flops)``.

    cascade = 2n^2 b + 2 r n b + sum_i 2 n r_i b + k n b
    naive   = (k+1) 2n^2 b + sum_i (2 n^2 r_i + n^2)
    """
    n, k, r = model.n, model.k, model.total_rank
    cascade = matmul_flops(n, n, b)
    naive = (k + 1) * matmul_flops(n, n, b)
    if k:
        cascade += matmul_flops(r, n, b) + sum(matmul_flops(n, ri, b) for ri in model.ranks) + k * n * b
        naive += sum(matmul_flops(n, ri, n) + n * n for ri in model.ranks)
    return cascade, naive
