"""Segment tree over CP factor triples.

A query returns ``sum_{i in [lo, hi]} A_i (x) B_i (x) (X^T C_i)``, an
``n x n x b`` array.  Tensors are C-ordered (third index fastest), so the
``n^2 x n`` unfolding used for the contraction is a free reshape.
"""
from __future__ import annotations

import numpy as np

from . import _kernels
from .flops import FlopCounter, add_flops, matmul_flops
from .segtree import (
    CostEstimate,
    IntervalError,
    QueryResult,
    QueryStrategy,
    ShapeError,
    _check_interval,
    _choose,
    _pow2_at_least,
    canonical_cover,
)

__all__ = [
    "TensorSegTree",
    "form_cp_tensor",
    "init",
    "query",
    "tensor_cost_model",
    "IntervalError",
    "ShapeError",
    "QueryStrategy",
]


def form_cp_tensor(A, B, C, counter=None):
    """``T[x, y, z] = sum_l A[x, l] B[y, l] C[z, l]``.

    Formed through the mode-1 unfolding ``T_(1) = A @ khatri_rao(B, C).T``,
    i.e. one ``(n1 x r) @ (r x n2 n3)`` product.
    """
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    C = np.asarray(C, dtype=np.float64)
    r = A.shape[1]
    if B.shape[1] != r or C.shape[1] != r:
        raise ShapeError(f"inner dimensions differ: {A.shape}, {B.shape}, {C.shape}")
    n1, n2, n3 = A.shape[0], B.shape[0], C.shape[0]
    kr = _kernels.khatri_rao(np.ascontiguousarray(B), np.ascontiguousarray(C))
    if counter is not None:
        counter.add(n2 * n3 * r)
        return counter.matmul(A, kr.T).reshape(n1, n2, n3)
    return (A @ kr.T).reshape(n1, n2, n3)


class TensorSegTree:
    """Static tree over ``k`` triples; node ``v`` stores ``T_v = sum_{j in S_v} A_j (x) B_j (x) C_j``."""

    def __init__(self, factors):
        factors = [tuple(np.asarray(M, dtype=np.float64) for M in f) for f in factors]
        if not factors:
            raise ValueError("need at least one factor triple (k >= 1)")
        n = factors[0][0].shape[0]
        for i, f in enumerate(factors, start=1):
            if len(f) != 3:
                raise ShapeError(f"entry {i}: expected (A, B, C), got {len(f)} matrices")
            r = f[0].shape[1] if f[0].ndim == 2 else -1
            if any(M.ndim != 2 or M.shape != (n, r) for M in f):
                raise ShapeError(f"entry {i}: shapes {[M.shape for M in f]} are not all ({n}, r)")
        self.n = n
        self.k = len(factors)
        self.size = _pow2_at_least(self.k)
        self.factors = tuple(factors)
        self.ranks = tuple(f[0].shape[1] for f in factors)

        fc = FlopCounter()
        store = np.zeros((2 * self.size, n, n, n))
        for i, (A, B, C) in enumerate(factors):
            store[self.size + i] = form_cp_tensor(A, B, C, fc)
        _kernels.build_internal(store, self.size)
        fc.add((self.size - 1) * n**3)
        store.setflags(write=False)
        self.store = store
        self.init_flops = fc.total

    def node(self, v):
        return self.store[v]

    def cover(self, lo, hi):
        return canonical_cover(self.k, lo, hi)

    def cost_model(self, lo, hi, b) -> CostEstimate:
        """Predicted flops of both strategies.

        tree     = m n^3 + 2 n^2 n b
        onthefly = sum_i (2 b n r_i + n b r_i + 2 n r_i n b + n^2 b)

        The on-the-fly terms are: ``Y_i = X^T C_i``, the Khatri-Rao product
        of ``B_i`` and ``Y_i``, the unfolded ``A_i`` product, and the
        accumulation.  The count is the same whether ``b <= n`` or ``b > n``.
        """
        m = len(self.cover(lo, hi))
        n = self.n
        tree = m * n**3 + matmul_flops(n * n, n, b)
        otf = sum(
            matmul_flops(b, n, r) + n * b * r + matmul_flops(n, r, n * b) + add_flops(n, n, b)
            for r in self.ranks[lo - 1 : hi]
        )
        per_node = m * (matmul_flops(n * n, n, b) + add_flops(n, n, b))
        return CostEstimate(tree, otf, _choose(tree, otf), m, per_node)

    def _check_x(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] != self.n:
            raise ShapeError(f"X must have {self.n} rows, got shape {X.shape}")
        return X

    def _tree(self, lo, hi, X, fc):
        n, b = self.n, X.shape[1]
        ids = self.cover(lo, hi)
        acc = _kernels.sum_nodes(self.store, ids)
        fc.add(len(ids) * n**3)
        return fc.matmul(acc.reshape(n * n, n), X).reshape(n, n, b)

    def _onthefly(self, lo, hi, X, fc):
        n, b = self.n, X.shape[1]
        acc = np.zeros((n, n, b))
        for A, B, C in self.factors[lo - 1 : hi]:
            Y = fc.matmul(X.T, C)
            acc += form_cp_tensor(A, B, Y, fc)
            fc.add(acc.size)
        return acc

    def query_ex(self, lo, hi, X, strategy=QueryStrategy.AUTO) -> QueryResult:
        _check_interval(self.k, lo, hi)
        X = self._check_x(X)
        strategy = QueryStrategy(strategy)
        if strategy is QueryStrategy.AUTO:
            strategy = self.cost_model(lo, hi, X.shape[1]).chosen
        fc = FlopCounter()
        if strategy is QueryStrategy.TREE:
            out = self._tree(lo, hi, X, fc)
        else:
            out = self._onthefly(lo, hi, X, fc)
        return QueryResult(out, strategy, fc.total)

    def query(self, lo, hi, X, strategy=QueryStrategy.AUTO):
        return self.query_ex(lo, hi, X, strategy).output


def init(factors) -> TensorSegTree:
    return TensorSegTree(factors)


def query(tree: TensorSegTree, lo, hi, X, strategy=QueryStrategy.AUTO):
    return tree.query(lo, hi, X, strategy)


def tensor_cost_model(tree: TensorSegTree, lo, hi, b):
    est = tree.cost_model(lo, hi, b)
    return est.tree_flops, est.onthefly_flops, est.chosen
