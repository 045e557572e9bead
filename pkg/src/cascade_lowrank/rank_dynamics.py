"""Matrix functions with prescribed derivative-rank behaviour.

Every constructor returns an :class:`~cascade_lowrank.matfun.ExpPolyMatrix`
and every rank claim is checked by measurement (``generic_rank``), never
assumed.  Ranks are reported 1-based in order: ``ranks[i-1]`` is the generic
rank of ``L_i = L_1^(i-1)``.
"""
from __future__ import annotations

import functools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .matfun import (
    DEFAULT_SAMPLES,
    ExpPolyMatrix,
    SampleSpec,
    antiderivative,
    block_diag,
    derivative_ranks,
    differentiate,
    generic_rank,
    numeric_rank,
)
from .rng import derive_seed, stream


class RankDynamicsError(ValueError):
    pass


class ConstructionError(RankDynamicsError):
    pass


class LeibnizViolation(RankDynamicsError):
    def __init__(self, q, i, j):
        self.q = tuple(q)
        self.i, self.j = i, j
        super().__init__(
            f"q={self.q} violates q({j}) <= ({j}-{i}+1)*q({i}): "
            f"{self.q[j - 1]} > {(j - i + 1) * self.q[i - 1]}"
        )


class SearchExhausted(RankDynamicsError):
    def __init__(self, q, reason):
        self.q = tuple(q)
        self.reason = reason
        super().__init__(f"no base-block decomposition found for q={self.q}: {reason}")


# ---------------------------------------------------------------------------
# domain types


@dataclass(frozen=True)
class RankSequence:
    values: tuple
    n: int | None = None

    def __post_init__(self):
        vals = tuple(int(v) for v in self.values)
        if any(v < 0 for v in vals):
            raise ValueError(f"ranks must be non-negative: {vals}")
        if self.n is not None and any(v > self.n for v in vals):
            raise ValueError(f"ranks {vals} exceed dimension n={self.n}")
        object.__setattr__(self, "values", vals)

    @property
    def k(self):
        return len(self.values)

    def __iter__(self):
        return iter(self.values)

    def __len__(self):
        return len(self.values)

    def __getitem__(self, i):
        return self.values[i]


def _values(q):
    return tuple(q.values) if isinstance(q, RankSequence) else tuple(int(v) for v in q)


@dataclass(frozen=True)
class DecomposableSpec:
    """``L_1(t) = sum_j f_j(t) u_j v_j^T`` with ``deg f_j = func_degrees[j]``."""

    n: int
    r1: int
    func_degrees: tuple
    seed: int = 0

    def __post_init__(self):
        degs = tuple(int(d) for d in self.func_degrees)
        object.__setattr__(self, "func_degrees", degs)
        if not 0 <= self.r1 <= self.n:
            raise ValueError(f"need 0 <= r1 <= n, got r1={self.r1}, n={self.n}")
        if len(degs) != self.r1:
            raise ValueError(f"expected {self.r1} function degrees, got {len(degs)}")
        if any(d < 0 for d in degs):
            raise ValueError("function degrees must be non-negative")


_RELATIONS = {"GT": "GT", ">": "GT", "EQ": "EQ", "=": "EQ", "==": "EQ", "GE": "GE", ">=": "GE"}


@dataclass(frozen=True)
class OrderingSpec:
    """Requested chain ``rank(L_pi(1)) R_1 rank(L_pi(2)) ... R_{k-1} rank(L_pi(k))``.

    ``pi`` is 1-based: ``pi[x-1] = pi(x)``.
    """

    k: int
    pi: tuple
    relations: tuple

    def __post_init__(self):
        pi = tuple(int(p) for p in self.pi)
        rel = tuple(_RELATIONS.get(str(r).upper(), r) for r in self.relations)
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if sorted(pi) != list(range(1, self.k + 1)):
            raise ValueError(f"pi={pi} is not a permutation of 1..{self.k}")
        if len(rel) != self.k - 1 or any(r not in ("GT", "EQ", "GE") for r in rel):
            raise ValueError(f"need {self.k - 1} relations from GT/EQ/GE, got {self.relations}")
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "relations", rel)


@dataclass(frozen=True, order=True)
class BaseBlockSpec:
    m: int
    d: int = 0

    def __post_init__(self):
        if self.m < 1 or self.d < 0:
            raise ValueError(f"need m >= 1 and d >= 0, got m={self.m}, d={self.d}")


@dataclass(frozen=True)
class SearchBudget:
    max_blocks: int = 64
    max_nodes: int = 200_000


# ---------------------------------------------------------------------------
# helpers


def _independent(M, r):
    return r == 0 or numeric_rank(M) == r


def random_matrix_of_rank(n, r, seed=0, integer=False):
    """``n x n`` matrix of rank ``r`` as a product of ``n x r`` and ``r x n`` factors.

    With ``integer=True`` the factors have small integer entries, so the
    product and anything derived from it by integer scaling is exact in
    double precision.
    """
    if not 0 <= r <= n:
        raise ValueError(f"need 0 <= r <= n, got r={r}, n={n}")
    if r == 0:
        return np.zeros((n, n))
    for attempt in range(32):
        g = stream(seed, 0xA7, attempt)
        if integer:
            M = g.integers(-4, 5, size=(n, r)).astype(float) @ g.integers(-4, 5, size=(r, n)).astype(float)
        else:
            M = g.standard_normal((n, r)) @ g.standard_normal((r, n))
        if numeric_rank(M) == r:
            return M
    raise ConstructionError(f"could not draw a rank-{r} {n}x{n} matrix")  # pragma: no cover


def leibniz_feasible(q):
    """First ``(i, j)`` (1-based) with ``q(j) > (j-i+1) q(i)``, or ``None``."""
    q = _values(q)
    for i in range(1, len(q) + 1):
        for j in range(i + 1, len(q) + 1):
            if q[j - 1] > (j - i + 1) * q[i - 1]:
                return i, j
    return None


# ---------------------------------------------------------------------------
# constructions


def construct_decomposable(spec: DecomposableSpec) -> ExpPolyMatrix:
    """Random ``r1``-linearly decomposable ``L_1``.

    ``u_j`` and ``v_j`` are redrawn (up to 10 times) until each family is
    numerically independent.
    """
    n, r1 = spec.n, spec.r1
    if r1 == 0:
        return ExpPolyMatrix.zeros(n)
    for attempt in range(10):
        g = stream(spec.seed, 0xDEC, attempt)
        U = g.standard_normal((n, r1))
        V = g.standard_normal((n, r1))
        if _independent(U, r1) and _independent(V, r1):
            break
    else:
        raise ConstructionError(f"u/v families not independent after 10 draws (seed={spec.seed})")
    dmax = max(spec.func_degrees)
    fc = np.zeros((r1, dmax + 1))
    for j, deg in enumerate(spec.func_degrees):
        fc[j, : deg + 1] = g.standard_normal(deg + 1)
        # keep the stated degree exact
        while abs(fc[j, deg]) < 0.1:
            fc[j, deg] = g.standard_normal()
    poly = np.einsum("ij,ja,kj->aik", U, fc, V)
    return ExpPolyMatrix(None, poly, shape=(n, n))


def construct_vandermonde_counterexample(n: int, k: int) -> ExpPolyMatrix:
    """``L_1 = u u^T`` with ``u = [1, t, ..., t^(n-1)]``; ``rank(L_i) = i`` for ``i <= k``."""
    if n < k:
        raise ValueError(f"need n >= k, got n={n}, k={k}")
    eye = np.eye(n)
    return ExpPolyMatrix.outer(eye, eye)


def solve_first_order_ode(L1: ExpPolyMatrix, C) -> ExpPolyMatrix:
    """Solve ``W - W' = L1`` as ``W = e^t C + sum_j L1^(j)``.

    ``L1`` must be a pure polynomial.  The particular solution is built by
    the backward recursion ``W_m = c_m + (m+1) W_{m+1}``, which is the
    finite series ``sum_j D^j L1`` written coefficient-wise.
    """
    if L1.has_exp:
        raise ValueError("solve_first_order_ode needs L1 with zero exp part")
    C = np.asarray(C, dtype=np.float64)
    if C.shape != L1.shape:
        raise ValueError(f"C has shape {C.shape}, expected {L1.shape}")
    P = L1.poly_coeffs
    W = np.zeros_like(P)
    for m in range(P.shape[0] - 1, -1, -1):
        W[m] = P[m] if m == P.shape[0] - 1 else P[m] + (m + 1) * W[m + 1]
    return ExpPolyMatrix(C, W, shape=L1.shape)


def construct_highorder_ode(n: int, k: int, C, u, v) -> ExpPolyMatrix:
    """``W = e^t C + t^k u v^T``."""
    if k < 1:
        raise ValueError("k must be >= 1")
    u = np.asarray(u, dtype=np.float64).reshape(-1)
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    C = np.asarray(C, dtype=np.float64)
    if u.shape != (n,) or v.shape != (n,) or C.shape != (n, n):
        raise ValueError("u, v must have length n and C shape (n, n)")
    poly = np.zeros((k + 1, n, n))
    poly[k] = np.outer(u, v)
    return ExpPolyMatrix(C, poly, shape=(n, n))


def highorder_l_closed_form(k: int, i: int, u, v) -> ExpPolyMatrix:
    """``(k!/(k-i+1)!) t^(k-i) (t - k + i - 1) u v^T``."""
    u = np.asarray(u, dtype=np.float64).reshape(-1)
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    c = math.factorial(k) // math.factorial(k - i + 1)
    uv = np.outer(u, v)
    poly = np.zeros((k - i + 2,) + uv.shape)
    poly[k - i + 1] = c * uv
    poly[k - i] = -c * (k - i + 1) * uv
    return ExpPolyMatrix(None, poly, shape=uv.shape)


def rank_at_zero_matrices(n: int, q, seed=0) -> list:
    """Targets ``C_1..C_k`` with ``rank C_j = q(j)``.

    ``C_j`` is ``(j-1)!`` times a random integer matrix, so every
    coefficient of the resulting ``L_1`` is an integer and ``L_j(0) == C_j``
    holds bit-exactly.
    """
    q = _values(q)
    if any(v > n for v in q):
        raise ValueError(f"q={q} exceeds n={n}")
    return [
        math.factorial(j) * random_matrix_of_rank(n, r, derive_seed(seed, j), integer=True)
        for j, r in enumerate(q)
    ]


def construct_rank_at_zero(n: int, q, seed=0) -> ExpPolyMatrix:
    """``L_1 = sum_j t^(j-1)/(j-1)! C_j``, so that ``L_j(0) = C_j``."""
    Cs = rank_at_zero_matrices(n, q, seed)
    poly = [C / math.factorial(j) for j, C in enumerate(Cs)]
    return ExpPolyMatrix(None, poly, shape=(n, n))


def rank_at_zero_targets(L1: ExpPolyMatrix, k: int) -> list:
    """The matrices ``C_i = L_i(0)`` for ``i = 1..k``."""
    out = []
    G = L1
    for _ in range(k):
        out.append(G.poly_coeffs[0].copy() if G.degree >= 0 else np.zeros(G.shape))
        G = differentiate(G)
    return out


# ---------------------------------------------------------------------------
# base blocks and rank matching


def base_block(spec: BaseBlockSpec) -> ExpPolyMatrix:
    """d-th antiderivative (zero constants) of ``u_m u_m^T``, ``u_m = [1, t, ..., t^(m-1)]``."""
    eye = np.eye(spec.m)
    return antiderivative(ExpPolyMatrix.outer(eye, eye), spec.d)


@functools.lru_cache(maxsize=None)
def _profile_cached(m, d, k, samples):
    return tuple(derivative_ranks(base_block(BaseBlockSpec(m, d)), k, samples))


def block_profile(spec: BaseBlockSpec, k: int, samples: SampleSpec | None = None) -> RankSequence:
    """Measured generic ranks of derivative orders ``0..k-1`` of the base block."""
    return RankSequence(_profile_cached(spec.m, spec.d, k, samples or DEFAULT_SAMPLES))


def _candidates(k, samples):
    seen = {}
    for m in range(1, k + 2):
        for d in range(0, k + 1):
            prof = _profile_cached(m, d, k, samples)
            # identical profiles: keep the smallest block
            seen.setdefault(prof, BaseBlockSpec(m, d))
    order = sorted(seen, key=lambda p: (-sum(p), tuple(-x for x in p)))
    return [(p, seen[p]) for p in order]


def decompose_rank_sequence(q, budget: SearchBudget | None = None, samples: SampleSpec | None = None):
    """Split ``q`` into a sum of measured base-block profiles.

    Depth-first search over candidate blocks, largest profile first, with
    memoised dead ends.  Returns a list of :class:`BaseBlockSpec` in the
    order found.

    Raises
    ------
    LeibnizViolation
        ``q(j) > (j-i+1) q(i)`` for some ``i < j``.
    SearchExhausted
        No decomposition within ``budget``.
    """
    q = _values(q)
    budget = budget or SearchBudget()
    samples = samples or DEFAULT_SAMPLES
    bad = leibniz_feasible(q)
    if bad is not None:
        raise LeibnizViolation(q, *bad)
    if not any(q):
        return []
    k = len(q)
    cands = _candidates(k, samples)
    dead = set()
    nodes = 0

    def search(rem, start, left):
        nonlocal nodes
        if not any(rem):
            return []
        # every block contributes >= 1 at order 0
        if rem[0] == 0 or left == 0 or rem[0] > left * max(p[0] for p, _ in cands):
            return None
        key = (rem, start, left)
        if key in dead:
            return None
        nodes += 1
        if nodes > budget.max_nodes:
            raise SearchExhausted(q, f"node budget {budget.max_nodes} exceeded")
        for idx in range(start, len(cands)):
            prof, blk = cands[idx]
            if all(p <= r for p, r in zip(prof, rem)):
                rest = search(tuple(r - p for r, p in zip(rem, prof)), idx, left - 1)
                if rest is not None:
                    return [blk] + rest
        dead.add(key)
        return None

    found = search(q, 0, budget.max_blocks)
    if found is None:
        raise SearchExhausted(q, f"search space exhausted (max_blocks={budget.max_blocks})")
    return found


def construct_generic_rank_matching(q, budget=None, samples=None, n=None) -> ExpPolyMatrix:
    """Block-diagonal ``L_1`` whose derivative generic ranks equal ``q``.

    The dimension is the sum of block sizes, or ``n`` when given (zero
    padding); ``n`` smaller than the block total is an error.
    """
    blocks = decompose_rank_sequence(q, budget, samples)
    total = sum(b.m for b in blocks)
    if n is not None and n < total:
        raise ConstructionError(f"decomposition needs n >= {total}, got n={n}")
    parts = [base_block(b) for b in blocks]
    pad = (n or max(total, 1)) - total
    if pad:
        parts.append(ExpPolyMatrix.zeros(pad))
    return block_diag(*parts)


# ---------------------------------------------------------------------------
# rank ordering


def ordering_weights(spec: OrderingSpec) -> RankSequence:
    """Target ``q`` with ``q(pi(x)) = w_x``, ``w_1 = 2k-1``; GE is treated as EQ."""
    k = spec.k
    w = [2 * k - 1]
    for rel in spec.relations:
        w.append(w[-1] - 1 if rel == "GT" else w[-1])
    q = [0] * k
    for x, p in enumerate(spec.pi):
        q[p - 1] = w[x]
    return RankSequence(q)


def ordering_satisfied(ranks, spec: OrderingSpec) -> bool:
    ranks = _values(ranks)
    chain = [ranks[p - 1] for p in spec.pi]
    for a, b, rel in zip(chain, chain[1:], spec.relations):
        ok = a > b if rel == "GT" else a == b if rel == "EQ" else a >= b
        if not ok:
            return False
    return True


def construct_rank_ordering(spec: OrderingSpec, budget=None, samples=None):
    """Return ``(q, L_1)`` realising the requested rank chain."""
    q = ordering_weights(spec)
    try:
        L1 = construct_generic_rank_matching(q, budget, samples)
    except SearchExhausted as exc:
        raise SearchExhausted(q.values, exc.reason) from exc
    return q, L1


# ---------------------------------------------------------------------------
# verification


@dataclass
class LeibnizReport:
    ranks: tuple
    step_ok: list = field(default_factory=list)
    linear_ok: list = field(default_factory=list)

    @property
    def passed(self):
        return all(self.step_ok) and all(self.linear_ok)

    @property
    def failures(self):
        """1-based indices where either bound fails."""
        return [i + 1 for i, (a, b) in enumerate(zip(self.step_ok, self.linear_ok)) if not (a and b)]

    def to_dict(self):
        return {
            "ranks": list(self.ranks),
            "step_ok": self.step_ok,
            "linear_ok": self.linear_ok,
            "passed": self.passed,
        }


def check_leibniz_bounds(ranks) -> LeibnizReport:
    """Check ``r_i <= 2 r_{i-1}`` (i >= 2) and ``r_i <= i r_1`` for every i."""
    r = _values(ranks)
    rep = LeibnizReport(r)
    for i in range(1, len(r) + 1):
        rep.step_ok.append(i == 1 or r[i - 1] <= 2 * r[i - 2])
        rep.linear_ok.append(r[i - 1] <= i * r[0])
    return rep


@dataclass
class NegativeReport:
    trials: int
    bound: int
    observed: list
    witness_rank: int
    # full (r_1, r_2, r_3) per trial; observed holds the r_3 column
    sequences: list = field(default_factory=list)

    @property
    def max_rank(self):
        return max(self.observed) if self.observed else 0

    @property
    def violations(self):
        return sum(1 for r in self.observed if r > self.bound)

    @property
    def passed(self):
        return self.violations == 0 and self.witness_rank == self.bound

    def to_dict(self):
        return {
            "trials": self.trials,
            "bound": self.bound,
            "max_rank": self.max_rank,
            "violations": self.violations,
            "witness_rank": self.witness_rank,
            "passed": self.passed,
        }


def negative_instance(seed):
    """The random rank-1 ``L_1 = u(t) v(t)^T`` used by trial ``seed``."""
    g = stream(seed, 0x4E6)
    n = int(g.integers(4, 9))
    du, dv = (int(x) for x in g.integers(0, 7, size=2))
    return ExpPolyMatrix.outer(g.standard_normal((du + 1, n)), g.standard_normal((dv + 1, n)))


def _negative_trial(seed, samples):
    return tuple(derivative_ranks(negative_instance(seed), 3, samples))


def negative_witness_rank(n=4, samples=None):
    """``rank(L_3)`` for ``u = v = [1, t, t^2, t^3, 0, ...]``: attains the bound 3."""
    if n < 4:
        raise ValueError("the witness needs n >= 4")
    u = np.zeros((4, n))
    u[np.arange(4), np.arange(4)] = 1.0
    return generic_rank(differentiate(ExpPolyMatrix.outer(u, u), 2), samples)


def verify_negative_example(trials: int, seed=0, samples=None, workers=1) -> NegativeReport:
    """Random rank-1 polynomial ``L_1 = u(t) v(t)^T`` never gives ``rank(L_3) > 3``.

    So ``q = (1, 2, 4)`` is unreachable even though it passes the one-step
    bound.  Trials use derived seeds and may run on ``workers`` threads.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    seeds = [derive_seed(seed, t) for t in range(trials)]
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            seqs = list(ex.map(lambda s: _negative_trial(s, samples), seeds))
    else:
        seqs = [_negative_trial(s, samples) for s in seeds]
    return NegativeReport(trials, 3, [q[2] for q in seqs], negative_witness_rank(samples=samples), seqs)


def measure_l_ranks(L1: ExpPolyMatrix, k: int, samples=None) -> list:
    """Generic ranks of ``L_1, ..., L_k`` with ``L_{i+1} = L_i'``."""
    return derivative_ranks(L1, k, samples)
