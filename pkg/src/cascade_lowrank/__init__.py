"""Cascading low-rank fitting: exp-polynomial rank dynamics, cascaded
adapter evaluation, and low-rank segment trees for range queries."""
from ._kernels import backend
from .cascade import CascadeModel, EvalOutput, eval_all_orders, eval_naive, flop_estimate
from .matfun import (
    ExpPolyMatrix,
    SampleSpec,
    antiderivative,
    differentiate,
    evaluate,
    generic_rank,
    l_sequence,
    numeric_rank,
)
from .segtree import MatrixSegTree, QueryStrategy, canonical_cover
from .tensor_segtree import TensorSegTree, form_cp_tensor

__version__ = "0.1.0"

__all__ = [
    "CascadeModel",
    "EvalOutput",
    "ExpPolyMatrix",
    "MatrixSegTree",
    "QueryStrategy",
    "SampleSpec",
    "TensorSegTree",
    "antiderivative",
    "backend",
    "canonical_cover",
    "differentiate",
    "eval_all_orders",
    "eval_naive",
    "evaluate",
    "flop_estimate",
    "form_cp_tensor",
    "generic_rank",
    "l_sequence",
    "numeric_rank",
]
