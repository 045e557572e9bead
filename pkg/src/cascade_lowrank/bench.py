"""Grid benchmark for segment-tree range queries.

Each grid point gets random adapters, a fixed query interval and a batch
``X``; the query runs under auto routing and under both forced strategies.
One CSV row per run.  Rows are checked against a dense oracle and any row
with relative error above ``MAX_REL_ERR`` aborts the run.
"""
from __future__ import annotations

import csv
import io
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .rng import stream
from .segtree import MatrixSegTree, QueryStrategy
from .tensor_segtree import TensorSegTree

SCHEMA_VERSION = 1
MAX_REL_ERR = 1e-8

COLUMNS = [
    "kind",
    "n",
    "k",
    "b",
    "lo",
    "hi",
    "ranks",
    "strategy_run",
    "strategy_chosen",
    "flops_tree",
    "flops_otf",
    "flops_measured",
    "wall_time_ns",
    "wall_time_ns_trials",
    "max_rel_err",
    "crossover",
]


class OracleMismatch(RuntimeError):
    pass


@dataclass(frozen=True)
class BenchGrid:
    ns: tuple = (64, 128)
    ks: tuple = (8, 16)
    bs: tuple = (1, 2, 4, 8, 16, 32, 64)
    ranks: tuple = (4,)
    intervals: str = "full"
    trials: int = 3
    seed: int = 0
    kind: str = "matrix"
    timing: bool = True

    def __post_init__(self):
        for name in ("ns", "ks", "bs", "ranks"):
            vals = tuple(int(v) for v in getattr(self, name))
            if not vals or any(v < 1 for v in vals):
                raise ValueError(f"{name} must be non-empty positive integers, got {vals}")
            object.__setattr__(self, name, vals)
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.intervals not in ("full", "random", "sweep"):
            raise ValueError(f"intervals must be full, random or sweep, not {self.intervals!r}")
        if self.kind not in ("matrix", "tensor"):
            raise ValueError(f"kind must be matrix or tensor, not {self.kind!r}")

    def rank_patterns(self, k):
        """Either one constant-rank pattern per value, or the list as per-order ranks."""
        if len(self.ranks) == 1:
            return [(self.ranks[0],) * k]
        if len(self.ranks) == k:
            return [self.ranks]
        return [(r,) * k for r in self.ranks]


@dataclass
class BenchRow:
    kind: str
    n: int
    k: int
    b: int
    lo: int
    hi: int
    ranks: tuple
    strategy_run: str
    strategy_chosen: str
    flops_tree: int
    flops_otf: int
    flops_measured: int
    wall_time_ns: int | None
    wall_time_ns_trials: list = field(default_factory=list)
    max_rel_err: float = 0.0
    crossover: int = 0

    def as_csv(self):
        return [
            self.kind,
            self.n,
            self.k,
            self.b,
            self.lo,
            self.hi,
            " ".join(map(str, self.ranks)),
            self.strategy_run,
            self.strategy_chosen,
            self.flops_tree,
            self.flops_otf,
            self.flops_measured,
            "" if self.wall_time_ns is None else self.wall_time_ns,
            " ".join(map(str, self.wall_time_ns_trials)),
            f"{self.max_rel_err:.3e}",
            self.crossover,
        ]


def _intervals(grid, n, k, key):
    if grid.intervals == "full":
        return [(1, k)]
    if grid.intervals == "sweep":
        return [(1, h) for h in range(1, k + 1)]
    g = stream(grid.seed, 0x1D, n, k, key)
    lo, hi = sorted(int(x) for x in g.integers(1, k + 1, size=2))
    return [(lo, hi)]


def _factors(grid, n, ranks, key):
    g = stream(grid.seed, 0xFA, n, len(ranks), key)
    count = 2 if grid.kind == "matrix" else 3
    out = []
    for r in ranks:
        if grid.kind == "matrix":
            out.append((g.standard_normal((n, r)), g.standard_normal((r, n))))
        else:
            out.append(tuple(g.standard_normal((n, r)) for _ in range(count)))
    return out


def _oracle(kind, factors, lo, hi, X):
    if kind == "matrix":
        return sum(A @ B @ X for A, B in factors[lo - 1 : hi])
    return sum(np.einsum("xl,yl,zl,zc->xyc", A, B, C, X) for A, B, C in factors[lo - 1 : hi])


def rel_err(out, ref):
    scale = np.max(np.abs(ref))
    diff = np.max(np.abs(out - ref))
    return float(diff / scale) if scale > 0 else float(diff)


def _run_point(grid, n, k, ranks, key):
    factors = _factors(grid, n, ranks, key)
    tree = MatrixSegTree(factors) if grid.kind == "matrix" else TensorSegTree(factors)
    rows = []
    for lo, hi in _intervals(grid, n, k, key):
        for b in grid.bs:
            X = stream(grid.seed, 0xB0, n, k, key, b).standard_normal((n, b))
            ref = _oracle(grid.kind, factors, lo, hi, X)
            est = tree.cost_model(lo, hi, b)
            for run in (QueryStrategy.AUTO, QueryStrategy.TREE, QueryStrategy.ONTHEFLY):
                times = []
                for _ in range(grid.trials):
                    t0 = time.perf_counter_ns()
                    res = tree.query_ex(lo, hi, X, run)
                    times.append(time.perf_counter_ns() - t0)
                err = rel_err(res.output, ref)
                if err > MAX_REL_ERR:
                    raise OracleMismatch(
                        f"{grid.kind} n={n} k={k} b={b} [{lo},{hi}] {run.value}: rel err {err:.3e}"
                    )
                rows.append(
                    BenchRow(
                        grid.kind, n, k, b, lo, hi, tuple(ranks), run.value, res.strategy.value,
                        est.tree_flops, est.onthefly_flops, res.flops,
                        int(statistics.median(times)) if grid.timing else None,
                        times if grid.timing else [],
                        err,
                    )
                )
    return rows


def annotate_crossovers(rows):
    """Flag the first auto row, per (kind, n, k, ranks, interval), where routing flips to tree.

    Returns the list of flagged rows.
    """
    flagged = []
    groups = {}
    for row in rows:
        if row.strategy_run == "auto":
            groups.setdefault((row.kind, row.n, row.k, row.ranks, row.lo, row.hi), []).append(row)
    for series in groups.values():
        series.sort(key=lambda r: r.b)
        for prev, cur in zip(series, series[1:]):
            if prev.strategy_chosen == "onthefly" and cur.strategy_chosen == "tree":
                cur.crossover = 1
                flagged.append(cur)
                break
    return flagged


def crossover_monotone(rows):
    """True if, within each series, tree once chosen stays chosen as b grows."""
    groups = {}
    for row in rows:
        if row.strategy_run == "auto":
            groups.setdefault((row.kind, row.n, row.k, row.ranks, row.lo, row.hi), []).append(row)
    for series in groups.values():
        seen_tree = False
        for row in sorted(series, key=lambda r: r.b):
            if row.strategy_chosen == "tree":
                seen_tree = True
            elif seen_tree:
                return False
    return True


def run_bench(grid: BenchGrid, jobs=1):
    tasks = []
    for n in grid.ns:
        for k in grid.ks:
            for key, ranks in enumerate(grid.rank_patterns(k)):
                tasks.append((n, k, ranks, key))
    if jobs > 1:
        with ThreadPoolExecutor(jobs) as ex:
            chunks = list(ex.map(lambda t: _run_point(grid, *t), tasks))
    else:
        chunks = [_run_point(grid, *t) for t in tasks]
    rows = [row for chunk in chunks for row in chunk]
    annotate_crossovers(rows)
    return rows


def rows_to_csv(rows):
    buf = io.StringIO()
    buf.write(f"# schema={SCHEMA_VERSION}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for row in rows:
        w.writerow(row.as_csv())
    return buf.getvalue()


def read_csv(text):
    lines = text.splitlines()
    if not lines or lines[0].strip() != f"# schema={SCHEMA_VERSION}":
        raise ValueError("missing or unsupported schema line")
    return list(csv.DictReader(lines[1:]))
