"""Segment tree over low-rank adapters answering ``sum_{i in [lo, hi]} A_i B_i X``.

Layout: an implicit binary heap with node 1 as root.  The ``k`` leaves sit at
``size + i`` where ``size`` is the next power of two >= k; padding leaves
hold zeros and never appear in a cover.  Intervals are 1-based and closed.

Cover bound: the bottom-up decomposition visits at most two nodes per level
below the root, and the root level contributes at most one node.  The exact
bound enforced here is ``max(1, 2*ceil(log2 k) - 2)``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .flops import FlopCounter, add_flops, matmul_flops


class ShapeError(ValueError):
    pass


class IntervalError(ValueError):
    pass


class QueryStrategy(str, enum.Enum):
    AUTO = "auto"
    TREE = "tree"
    ONTHEFLY = "onthefly"


def _pow2_at_least(k):
    size = 1
    while size < k:
        size <<= 1
    return size


def cover_bound(k):
    """Largest possible ``len(canonical_cover(k, lo, hi))``."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return max(1, 2 * math.ceil(math.log2(k)) - 2) if k > 1 else 1


def _check_interval(k, lo, hi):
    if not (1 <= lo <= hi <= k):
        raise IntervalError(f"need 1 <= lo <= hi <= k, got lo={lo}, hi={hi}, k={k}")


def canonical_cover(k, lo, hi):
    """Node ids whose intervals partition ``[lo, hi]``, ordered left to right."""
    _check_interval(k, lo, hi)
    size = _pow2_at_least(k)
    l, r = lo - 1 + size, hi + size
    left, right = [], []
    while l < r:
        if l & 1:
            left.append(l)
            l += 1
        if r & 1:
            r -= 1
            right.append(r)
        l >>= 1
        r >>= 1
    return left + right[::-1]


def node_interval(k, v):
    """1-based closed leaf interval covered by node ``v`` (clipped to ``k``)."""
    size = _pow2_at_least(k)
    depth = v.bit_length() - 1
    span = size >> depth
    lo = (v - (1 << depth)) * span + 1
    return lo, min(lo + span - 1, k)


def _choose(tree_flops, otf_flops):
    # ties go on-the-fly: it never touches the O(n^2) node store
    return QueryStrategy.TREE if tree_flops < otf_flops else QueryStrategy.ONTHEFLY


@dataclass
class CostEstimate:
    tree_flops: int
    onthefly_flops: int
    chosen: QueryStrategy
    cover_size: int
    # the one-multiply-per-node variant, for reference; never executed
    tree_flops_per_node_multiply: int = 0


@dataclass
class QueryResult:
    output: np.ndarray
    strategy: QueryStrategy
    flops: int


class MatrixSegTree:
    """Static tree over ``k`` adapters; node ``v`` stores ``M_v = sum_{j in S_v} A_j B_j``."""

    def __init__(self, adapters):
        adapters = [(np.asarray(A, dtype=np.float64), np.asarray(B, dtype=np.float64)) for A, B in adapters]
        if not adapters:
            raise ValueError("need at least one adapter (k >= 1)")
        n = adapters[0][0].shape[0]
        for i, (A, B) in enumerate(adapters, start=1):
            if A.ndim != 2 or B.ndim != 2 or A.shape[0] != n or B.shape != (A.shape[1], n):
                raise ShapeError(f"adapter {i}: A{A.shape} B{B.shape} do not conform to n={n}")
        self.n = n
        self.k = len(adapters)
        self.size = _pow2_at_least(self.k)
        self.factors = tuple(adapters)
        self.ranks = tuple(A.shape[1] for A, _ in adapters)

        fc = FlopCounter()
        store = np.zeros((2 * self.size, n, n))
        for i, (A, B) in enumerate(adapters):
            store[self.size + i] = fc.matmul(A, B)
        _kernels.build_internal(store, self.size)
        fc.add((self.size - 1) * add_flops(n, n))
        store.setflags(write=False)
        self.store = store
        self.init_flops = fc.total

    # -- structure --------------------------------------------------------

    def node(self, v):
        return self.store[v]

    def cover(self, lo, hi):
        return canonical_cover(self.k, lo, hi)

    def nodes(self):
        """Ids of nodes whose interval contains at least one real leaf."""
        return [v for v in range(1, 2 * self.size) if node_interval(self.k, v)[0] <= self.k]

    # -- queries ----------------------------------------------------------

    def cost_model(self, lo, hi, b) -> CostEstimate:
        """Predicted flops of both strategies.

        tree     = m n^2 + 2 n^2 b             (sum covered nodes, one multiply)
        onthefly = sum_i (2 r_i n b + 2 n r_i b + n b)
        """
        m = len(self.cover(lo, hi))
        n = self.n
        tree = m * add_flops(n, n) + matmul_flops(n, n, b)
        otf = sum(2 * matmul_flops(n, r, b) + add_flops(n, b) for r in self.ranks[lo - 1 : hi])
        per_node = m * (matmul_flops(n, n, b) + add_flops(n, b))
        return CostEstimate(tree, otf, _choose(tree, otf), m, per_node)

    def _check_x(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] != self.n:
            raise ShapeError(f"X must have {self.n} rows, got shape {X.shape}")
        return X

    def _tree(self, lo, hi, X, fc):
        ids = self.cover(lo, hi)
        acc = _kernels.sum_nodes(self.store, ids)
        fc.add(len(ids) * add_flops(self.n, self.n))
        return fc.matmul(acc, X)

    def _onthefly(self, lo, hi, X, fc):
        acc = np.zeros((self.n, X.shape[1]))
        for A, B in self.factors[lo - 1 : hi]:
            acc += fc.matmul(A, fc.matmul(B, X))
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


def init(adapters) -> MatrixSegTree:
    return MatrixSegTree(adapters)


def query(tree: MatrixSegTree, lo, hi, X, strategy=QueryStrategy.AUTO):
    return tree.query(lo, hi, X, strategy)


def cost_model(tree: MatrixSegTree, lo, hi, b):
    est = tree.cost_model(lo, hi, b)
    return est.tree_flops, est.onthefly_flops, est.chosen
