import numpy as np
import pytest

from cascade_lowrank import bench
from cascade_lowrank.bench import BenchGrid, OracleMismatch, annotate_crossovers, crossover_monotone, read_csv, rows_to_csv, run_bench
from cascade_lowrank.segtree import MatrixSegTree, QueryStrategy

SMALL = dict(ns=(64,), ks=(8,), bs=(1, 2, 4, 8, 16, 32), ranks=(4,), trials=1)


def test_small_batch_short_interval_onthefly():
    rng = np.random.default_rng(0)
    tree = MatrixSegTree([(rng.standard_normal((256, 4)), rng.standard_normal((4, 256))) for _ in range(8)])
    assert tree.cost_model(3, 4, 1).chosen is QueryStrategy.ONTHEFLY


def test_full_rank_full_interval_tree():
    rows = run_bench(BenchGrid(ns=(64,), ks=(8,), bs=(64,), ranks=(64,), trials=1, timing=False))
    assert {r.strategy_chosen for r in rows if r.strategy_run == "auto"} == {"tree"}


def test_rows_route_to_min():
    rows = run_bench(BenchGrid(**SMALL, intervals="sweep", timing=False))
    assert len(rows) == 8 * 6 * 3
    for r in rows:
        assert r.max_rel_err <= bench.MAX_REL_ERR
        if r.strategy_run == "auto":
            assert r.flops_measured == min(r.flops_tree, r.flops_otf)
        else:
            assert r.flops_measured == (r.flops_tree if r.strategy_run == "tree" else r.flops_otf)


def test_crossover_present_and_monotone():
    rows = run_bench(BenchGrid(**SMALL, timing=False))
    flips = [r for r in rows if r.crossover]
    assert len(flips) == 1
    assert crossover_monotone(rows)
    auto = [r for r in rows if r.strategy_run == "auto"]
    assert auto[0].strategy_chosen == "onthefly" and auto[-1].strategy_chosen == "tree"


def test_crossover_flag_only_on_first_flip():
    rows = run_bench(BenchGrid(**SMALL, timing=False))
    for r in rows:
        r.crossover = 0
    flagged = annotate_crossovers(rows)
    assert len(flagged) == 1 and flagged[0].strategy_run == "auto"


def test_tensor_grid():
    rows = run_bench(BenchGrid(ns=(8,), ks=(4,), bs=(1, 8, 64), ranks=(2,), trials=1, kind="tensor", timing=False))
    assert all(r.kind == "tensor" for r in rows)
    assert crossover_monotone(rows)


def test_csv_schema_and_columns():
    text = rows_to_csv(run_bench(BenchGrid(**SMALL)))
    lines = text.splitlines()
    assert lines[0] == "# schema=1"
    assert lines[1].split(",") == bench.COLUMNS
    parsed = read_csv(text)
    assert all(int(r["wall_time_ns"]) > 0 for r in parsed)
    with pytest.raises(ValueError):
        read_csv("\n".join(lines[1:]))


def test_deterministic_without_timing():
    g = BenchGrid(**SMALL, intervals="random", seed=7, timing=False)
    a = rows_to_csv(run_bench(g))
    b = rows_to_csv(run_bench(g, jobs=3))
    assert a == b


def test_oracle_mismatch_aborts(monkeypatch):
    monkeypatch.setattr(bench, "_oracle", lambda kind, f, lo, hi, X: np.zeros((f[0][0].shape[0], X.shape[1])) + 1.0)
    with pytest.raises(OracleMismatch):
        run_bench(BenchGrid(ns=(4,), ks=(2,), bs=(1,), trials=1))


@pytest.mark.parametrize(
    "kwargs",
    [dict(ns=()), dict(bs=(0,)), dict(trials=0), dict(intervals="all"), dict(kind="cube")],
)
def test_grid_validation(kwargs):
    with pytest.raises(ValueError):
        BenchGrid(**kwargs)


def test_rank_patterns():
    assert BenchGrid(ranks=(3,)).rank_patterns(4) == [(3, 3, 3, 3)]
    assert BenchGrid(ranks=(1, 2, 3)).rank_patterns(3) == [(1, 2, 3)]
    assert BenchGrid(ranks=(1, 2)).rank_patterns(3) == [(1, 1, 1), (2, 2, 2)]
