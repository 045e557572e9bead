import numpy as np
import pytest

from cascade_lowrank.segtree import IntervalError, QueryStrategy, ShapeError, node_interval
from cascade_lowrank.tensor_segtree import TensorSegTree, form_cp_tensor, init, query, tensor_cost_model
from oracles import cp_triple_loop, rel_err, tensor_range_oracle


def triples(rng, n, ranks):
    return [tuple(rng.standard_normal((n, r)) for _ in range(3)) for r in ranks]


# ---------------------------------------------------------------- formation


def test_basis_vectors():
    e1 = np.eye(4)[:, :1]
    T = form_cp_tensor(e1, e1, e1)
    expected = np.zeros((4, 4, 4))
    expected[0, 0, 0] = 1.0
    np.testing.assert_array_equal(T, expected)


@pytest.mark.parametrize("seed", range(20))
def test_formation_matches_triple_loop(seed):
    rng = np.random.default_rng(seed)
    n1, n2, n3, r = rng.integers(1, 9, size=4)
    A, B, C = rng.standard_normal((n1, r)), rng.standard_normal((n2, r)), rng.standard_normal((n3, r))
    assert rel_err(form_cp_tensor(A, B, C), cp_triple_loop(A, B, C)) <= 1e-12


def test_column_permutation():
    rng = np.random.default_rng(1)
    A, B, C = (rng.standard_normal((3, 4)) for _ in range(3))
    p = [2, 0, 3, 1]
    assert rel_err(form_cp_tensor(A[:, p], B[:, p], C[:, p]), form_cp_tensor(A, B, C)) <= 1e-15


def test_mode_symmetry():
    rng = np.random.default_rng(2)
    A, B, C = rng.standard_normal((5, 3)), rng.standard_normal((4, 3)), rng.standard_normal((6, 3))
    np.testing.assert_allclose(form_cp_tensor(A, B, C).transpose(1, 0, 2), form_cp_tensor(B, A, C), rtol=1e-14)


def test_formation_inner_mismatch():
    with pytest.raises(ShapeError):
        form_cp_tensor(np.zeros((3, 2)), np.zeros((3, 2)), np.zeros((3, 1)))


# ---------------------------------------------------------------- init


def test_single_triple_root():
    rng = np.random.default_rng(3)
    f = triples(rng, 4, (2,))
    tree = init(f)
    assert rel_err(tree.node(1), cp_triple_loop(*f[0])) <= 1e-12


def test_root_equals_sum():
    rng = np.random.default_rng(4)
    f = triples(rng, 6, (1, 2, 3))
    ref = sum(cp_triple_loop(*t) for t in f)
    assert rel_err(init(f).node(1), ref) <= 1e-12


def test_zero_factors():
    tree = init([tuple(np.zeros((3, 2)) for _ in range(3))] * 3)
    assert not np.any(tree.store)


def test_node_audit():
    rng = np.random.default_rng(5)
    f = triples(rng, 5, (1, 2, 1, 3, 2))
    tree = init(f)
    for v in range(1, 2 * tree.size):
        lo, hi = node_interval(tree.k, v)
        if lo > tree.k:
            continue
        ref = sum(cp_triple_loop(*t) for t in f[lo - 1 : hi])
        assert rel_err(tree.node(v), ref) <= 1e-12


def test_init_errors():
    with pytest.raises(ValueError):
        TensorSegTree([])
    with pytest.raises(ShapeError):
        TensorSegTree([(np.zeros((3, 2)), np.zeros((3, 2)))])
    with pytest.raises(ShapeError):
        TensorSegTree([(np.zeros((3, 2)), np.zeros((4, 2)), np.zeros((3, 2)))])


# ---------------------------------------------------------------- queries


def test_identity_contraction_returns_leaf():
    rng = np.random.default_rng(6)
    f = triples(rng, 5, (2, 3, 1))
    tree = init(f)
    for s in ("tree", "onthefly"):
        out = query(tree, 2, 2, np.eye(5), s)
        assert rel_err(out, cp_triple_loop(*f[1])) <= 1e-12


def test_example_interval():
    rng = np.random.default_rng(7)
    f = triples(rng, 10, rng.integers(1, 5, size=6))
    X = rng.standard_normal((10, 4))
    tree = init(f)
    ref = tensor_range_oracle(f, 2, 5, X)
    for s in ("tree", "onthefly"):
        assert rel_err(tree.query(2, 5, X, s), ref) <= 1e-10


def test_b1_matrix_oracle():
    rng = np.random.default_rng(8)
    f = triples(rng, 6, (2, 1, 3))
    x = rng.standard_normal((6, 1))
    # mode-3 contraction with a vector: sum_i A_i diag(C_i^T x) B_i^T
    ref = sum(A @ np.diag((C.T @ x)[:, 0]) @ B.T for A, B, C in f)
    out = init(f).query(1, 3, x, "onthefly")
    assert out.shape == (6, 6, 1)
    assert rel_err(out[:, :, 0], ref) <= 1e-12


def test_unfolding_consistency():
    rng = np.random.default_rng(9)
    f = triples(rng, 7, (3,))
    X = rng.standard_normal((7, 5))
    T = form_cp_tensor(*f[0])
    lhs = T.reshape(49, 7) @ X
    for s in ("tree", "onthefly"):
        assert rel_err(init(f).query(1, 1, X, s).reshape(49, 5), lhs) <= 1e-12


@pytest.mark.parametrize("seed", range(100))
def test_random_instances(seed):
    rng = np.random.default_rng(9000 + seed)
    n = int(rng.integers(1, 17))
    k = int(rng.integers(1, 9))
    b = int(rng.integers(1, 9))
    f = triples(rng, n, rng.integers(1, n + 1, size=k))
    lo = int(rng.integers(1, k + 1))
    hi = int(rng.integers(lo, k + 1))
    X = rng.standard_normal((n, b))
    tree = init(f)
    ref = tensor_range_oracle(f, lo, hi, X)
    runs = {s: tree.query_ex(lo, hi, X, s) for s in QueryStrategy}
    for res in runs.values():
        assert res.output.shape == (n, n, b)
        assert rel_err(res.output, ref) <= 1e-10
    est = tree.cost_model(lo, hi, b)
    assert runs[QueryStrategy.TREE].flops == est.tree_flops
    assert runs[QueryStrategy.ONTHEFLY].flops == est.onthefly_flops
    assert runs[QueryStrategy.AUTO].flops == min(est.tree_flops, est.onthefly_flops)


def test_query_errors():
    tree = init(triples(np.random.default_rng(10), 3, (1, 1)))
    with pytest.raises(IntervalError):
        tree.query(0, 1, np.zeros((3, 1)))
    with pytest.raises(ShapeError):
        tree.query(1, 1, np.zeros((2, 1)))


# ---------------------------------------------------------------- cost model


def test_cost_single_index_low_rank_prefers_onthefly():
    tree = init(triples(np.random.default_rng(11), 12, (1, 2, 1)))
    for b in (1, 4, 12):
        tf, otf, chosen = tensor_cost_model(tree, 2, 2, b)
        assert otf < tf and chosen is QueryStrategy.ONTHEFLY


def test_cost_full_rank_large_batch_prefers_tree():
    n = 6
    tree = init(triples(np.random.default_rng(12), n, (n,) * 4))
    tf, otf, chosen = tensor_cost_model(tree, 1, 4, 3 * n)
    assert tf == n**3 + 2 * n**3 * 3 * n
    assert chosen is QueryStrategy.TREE


def test_cost_chosen_is_argmin():
    tree = init(triples(np.random.default_rng(13), 4, (1, 4, 2, 3, 4)))
    for lo in range(1, 6):
        for hi in range(lo, 6):
            for b in range(1, 12):
                tf, otf, chosen = tensor_cost_model(tree, lo, hi, b)
                assert chosen is (QueryStrategy.TREE if tf < otf else QueryStrategy.ONTHEFLY)
