"""Exp-polynomial matrix functions ``F(t) = E e^t + sum_j C_j t^j``.

The class is closed under differentiation and antidifferentiation, which
is all the rank constructions need.  The ``e^t`` part is carried
symbolically and only turned into a float at evaluation time.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels, lrmx
from .rng import stream


def _frozen(a):
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


class ExpPolyMatrix:
    """Immutable matrix function ``E e^t + sum_{j=0}^{d} C_j t^j``.

    Parameters
    ----------
    exp_coeff : array (rows, cols) or None
        Coefficient of ``e^t``.  ``None`` means zero.
    poly_coeffs : sequence of arrays (rows, cols), or a 3-d array
        Monomial coefficients, lowest degree first.  Trailing all-zero
        coefficients are dropped so ``degree`` is canonical.
    shape : (rows, cols), optional
        Required only when both parts are empty.
    """

    __slots__ = ("exp_coeff", "poly_coeffs", "shape")

    def __init__(self, exp_coeff=None, poly_coeffs=(), shape=None):
        poly = [np.asarray(c, dtype=np.float64) for c in poly_coeffs]
        if shape is None:
            if exp_coeff is not None:
                shape = np.shape(exp_coeff)
            elif poly:
                shape = poly[0].shape
            else:
                raise ValueError("shape is required for an empty ExpPolyMatrix")
        shape = tuple(int(s) for s in shape)
        if len(shape) != 2 or min(shape) < 1:
            raise ValueError(f"invalid matrix shape {shape}")
        for c in poly:
            if c.shape != shape:
                raise ValueError(f"coefficient shape {c.shape} != {shape}")
        if exp_coeff is None:
            exp_coeff = np.zeros(shape)
        elif np.shape(exp_coeff) != shape:
            raise ValueError(f"exp coefficient shape {np.shape(exp_coeff)} != {shape}")
        while poly and not np.any(poly[-1]):
            poly.pop()
        stacked = np.stack(poly) if poly else np.zeros((0,) + shape)
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "exp_coeff", _frozen(exp_coeff))
        object.__setattr__(self, "poly_coeffs", _frozen(stacked))

    def __setattr__(self, name, value):
        raise AttributeError("ExpPolyMatrix is immutable")

    # -- constructors -------------------------------------------------------

    @classmethod
    def zeros(cls, rows, cols=None):
        return cls(None, (), shape=(rows, rows if cols is None else cols))

    @classmethod
    def constant(cls, C):
        C = np.asarray(C, dtype=np.float64)
        return cls(None, [C], shape=C.shape)

    @classmethod
    def outer(cls, u_coeffs, v_coeffs):
        """``u(t) v(t)^T`` for vector polynomials given as (deg+1, n) arrays."""
        U = np.atleast_2d(np.asarray(u_coeffs, dtype=np.float64))
        V = np.atleast_2d(np.asarray(v_coeffs, dtype=np.float64))
        du, dv = U.shape[0], V.shape[0]
        poly = np.zeros((du + dv - 1, U.shape[1], V.shape[1]))
        for a in range(du):
            for b in range(dv):
                poly[a + b] += np.outer(U[a], V[b])
        return cls(None, poly, shape=(U.shape[1], V.shape[1]))

    # -- properties ---------------------------------------------------------

    @property
    def dim_rows(self):
        return self.shape[0]

    @property
    def dim_cols(self):
        return self.shape[1]

    @property
    def degree(self):
        """Polynomial degree; -1 when the polynomial part is zero."""
        return self.poly_coeffs.shape[0] - 1

    @property
    def has_exp(self):
        return bool(np.any(self.exp_coeff))

    def is_zero(self):
        return not self.has_exp and self.degree < 0

    # -- algebra ------------------------------------------------------------

    def _padded(self, d):
        out = np.zeros((d,) + self.shape)
        out[: self.poly_coeffs.shape[0]] = self.poly_coeffs
        return out

    def __add__(self, other):
        if not isinstance(other, ExpPolyMatrix):
            return NotImplemented
        if other.shape != self.shape:
            raise ValueError(f"shape mismatch {self.shape} vs {other.shape}")
        d = max(self.poly_coeffs.shape[0], other.poly_coeffs.shape[0])
        return ExpPolyMatrix(
            self.exp_coeff + other.exp_coeff,
            self._padded(d) + other._padded(d),
            shape=self.shape,
        )

    def __neg__(self):
        return ExpPolyMatrix(-self.exp_coeff, -self.poly_coeffs, shape=self.shape)

    def __sub__(self, other):
        if not isinstance(other, ExpPolyMatrix):
            return NotImplemented
        if other.shape != self.shape:
            raise ValueError(f"shape mismatch {self.shape} vs {other.shape}")
        d = max(self.poly_coeffs.shape[0], other.poly_coeffs.shape[0])
        return ExpPolyMatrix(
            self.exp_coeff - other.exp_coeff,
            self._padded(d) - other._padded(d),
            shape=self.shape,
        )

    def __mul__(self, scalar):
        if isinstance(scalar, ExpPolyMatrix):
            return NotImplemented
        s = float(scalar)
        return ExpPolyMatrix(self.exp_coeff * s, self.poly_coeffs * s, shape=self.shape)

    __rmul__ = __mul__

    def equals(self, other):
        """Exact coefficient-wise equality (no tolerance)."""
        return (
            self.shape == other.shape
            and np.array_equal(self.exp_coeff, other.exp_coeff)
            and np.array_equal(self.poly_coeffs, other.poly_coeffs)
        )

    def allclose(self, other, rtol=1e-12, atol=0.0):
        if self.shape != other.shape:
            return False
        d = max(self.poly_coeffs.shape[0], other.poly_coeffs.shape[0])
        return np.allclose(self.exp_coeff, other.exp_coeff, rtol=rtol, atol=atol) and np.allclose(
            self._padded(d), other._padded(d), rtol=rtol, atol=atol
        )

    def __eq__(self, other):
        if not isinstance(other, ExpPolyMatrix):
            return NotImplemented
        return self.equals(other)

    __hash__ = None

    def __call__(self, t):
        return evaluate(self, t)

    def __repr__(self):
        return (
            f"ExpPolyMatrix(shape={self.shape}, has_exp={self.has_exp}, degree={self.degree})"
        )

    # -- serialization ------------------------------------------------------

    def to_dict(self):
        return {
            "rows": self.shape[0],
            "cols": self.shape[1],
            "exp": lrmx.to_b64(self.exp_coeff) if self.has_exp else None,
            "poly": [lrmx.to_b64(c) for c in self.poly_coeffs],
        }

    @classmethod
    def from_dict(cls, doc):
        shape = (int(doc["rows"]), int(doc["cols"]))
        exp = lrmx.from_b64(doc["exp"]) if doc.get("exp") else None
        poly = [lrmx.from_b64(s) for s in doc.get("poly", [])]
        return cls(exp, poly, shape=shape)

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# operations


def evaluate(F: ExpPolyMatrix, t: float) -> np.ndarray:
    out = _kernels.horner(F.poly_coeffs, t) if F.degree >= 0 else np.zeros(F.shape)
    if F.has_exp:
        out = out + math.exp(t) * F.exp_coeff
    return out


def differentiate(F: ExpPolyMatrix, times: int = 1) -> ExpPolyMatrix:
    """``d/dt``: the exp part is unchanged, ``C'_j = (j+1) C_{j+1}``."""
    G = F
    for _ in range(times):
        P = G.poly_coeffs
        if P.shape[0] <= 1:
            poly = np.zeros((0,) + G.shape)
        else:
            j = np.arange(1, P.shape[0], dtype=np.float64)
            poly = P[1:] * j[:, None, None]
        G = ExpPolyMatrix(G.exp_coeff, poly, shape=G.shape)
    return G


def antiderivative(F: ExpPolyMatrix, times: int = 1) -> ExpPolyMatrix:
    """Inverse of :func:`differentiate` with every integration constant zero."""
    G = F
    for _ in range(times):
        P = G.poly_coeffs
        poly = np.zeros((P.shape[0] + 1,) + G.shape)
        if P.shape[0]:
            j = np.arange(1, P.shape[0] + 1, dtype=np.float64)
            poly[1:] = P / j[:, None, None]
        G = ExpPolyMatrix(G.exp_coeff, poly, shape=G.shape)
    return G


def l_sequence(W: ExpPolyMatrix, k: int) -> list:
    """``[L_1, ..., L_k]`` with ``L_i = W^(i-1) - W^(i)``.

    ``L_1 = W - W'`` is formed once and the rest by repeated
    differentiation, so ``L_{i+1} == differentiate(L_i)`` holds bit-exactly.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    L = W - differentiate(W)
    out = [L]
    for _ in range(k - 1):
        L = differentiate(L)
        out.append(L)
    return out


def block_diag(*blocks: ExpPolyMatrix) -> ExpPolyMatrix:
    if not blocks:
        raise ValueError("need at least one block")
    rows = sum(b.shape[0] for b in blocks)
    cols = sum(b.shape[1] for b in blocks)
    d = max(b.poly_coeffs.shape[0] for b in blocks)
    E = np.zeros((rows, cols))
    P = np.zeros((d, rows, cols))
    r0 = c0 = 0
    for b in blocks:
        r1, c1 = r0 + b.shape[0], c0 + b.shape[1]
        E[r0:r1, c0:c1] = b.exp_coeff
        P[: b.poly_coeffs.shape[0], r0:r1, c0:c1] = b.poly_coeffs
        r0, c0 = r1, c1
    return ExpPolyMatrix(E, P, shape=(rows, cols))


# ---------------------------------------------------------------------------
# rank estimation

DEFAULT_REL_TOL = 1e-8


def default_tolerance(shape):
    return DEFAULT_REL_TOL * max(shape)


def numeric_rank(M, tolerance: float | None = None) -> int:
    """Number of singular values above ``tolerance * sigma_max``.

    ``tolerance`` defaults to ``1e-8 * max(M.shape)``.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.size == 0:
        return 0
    if tolerance is None:
        tolerance = default_tolerance(M.shape)
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    s = np.linalg.svd(M, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > tolerance * s[0]))


def _default_points(seed=0, count=7):
    pts = stream(seed, 0x5A).uniform(0.25, 2.0, size=count)
    return tuple(float(x) for x in pts) + (0.5, 1.5)


@dataclass(frozen=True)
class SampleSpec:
    """Where and how strictly to probe a matrix function for its generic rank.

    ``tolerance=None`` resolves to ``1e-8 * max(rows, cols)`` per matrix.
    """

    sample_points: Sequence[float] = field(default_factory=_default_points)
    tolerance: float | None = None

    def __post_init__(self):
        pts = tuple(float(t) for t in self.sample_points)
        if not pts:
            raise ValueError("SampleSpec needs at least one sample point")
        if self.tolerance is not None and not (0.0 < self.tolerance < 1.0):
            raise ValueError("tolerance must lie in (0, 1)")
        object.__setattr__(self, "sample_points", pts)

    @classmethod
    def seeded(cls, seed, count=7, tolerance=None):
        return cls(_default_points(seed, count), tolerance)


DEFAULT_SAMPLES = SampleSpec()


def generic_rank(F: ExpPolyMatrix, spec: SampleSpec | None = None) -> int:
    """Max pointwise numeric rank of ``F`` over the sample points."""
    spec = spec or DEFAULT_SAMPLES
    if F.is_zero():
        return 0
    best = 0
    full = min(F.shape)
    for t in spec.sample_points:
        best = max(best, numeric_rank(evaluate(F, t), spec.tolerance))
        if best == full:
            break
    return best


def derivative_ranks(F: ExpPolyMatrix, k: int, spec: SampleSpec | None = None) -> list:
    """Generic ranks of ``F, F', ..., F^(k-1)``."""
    out = []
    G = F
    for _ in range(k):
        out.append(generic_rank(G, spec))
        G = differentiate(G)
    return out
