"""Hot inner loops, compiled with numba when available.

Every kernel has a pure-numpy twin with identical semantics.  The numba
path is used by default; set ``CASCADE_LOWRANK_NUMBA=0`` before import to
force the numpy path (useful for debugging and for the comparison
benchmark in ``benchmarks/bench_kernels.py``).
"""
import os

import numpy as np

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False


def _env_wants_numba():
    flag = os.environ.get("CASCADE_LOWRANK_NUMBA", "1").strip().lower()
    return flag not in ("0", "false", "no", "off")


USE_NUMBA = HAS_NUMBA and _env_wants_numba()


# ---------------------------------------------------------------------------
# numpy reference path


def khatri_rao_np(B, C):
    """Column-wise Kronecker product, rows ordered (row of B, row of C)."""
    n2, r = B.shape
    n3 = C.shape[0]
    return (B[:, None, :] * C[None, :, :]).reshape(n2 * n3, r)


def sum_nodes_np(store, ids):
    out = np.zeros(store.shape[1:], dtype=store.dtype)
    for v in ids:
        out += store[v]
    return out


def build_internal_np(store, size):
    # store[size:2*size] holds leaves; fill 1..size-1 bottom-up
    for v in range(size - 1, 0, -1):
        np.add(store[2 * v], store[2 * v + 1], out=store[v])


def prefix_sums_np(Z0, Zs):
    out = np.empty((Zs.shape[0] + 1,) + Z0.shape, dtype=Z0.dtype)
    out[0] = Z0
    for i in range(Zs.shape[0]):
        np.add(out[i], Zs[i], out=out[i + 1])
    return out


def horner_np(coeffs, t):
    d = coeffs.shape[0]
    out = np.zeros(coeffs.shape[1:], dtype=np.float64)
    for j in range(d - 1, -1, -1):
        out = out * t + coeffs[j]
    return out


# ---------------------------------------------------------------------------
# numba path

if HAS_NUMBA:

    @njit(cache=True)
    def khatri_rao_nb(B, C):
        n2, r = B.shape
        n3 = C.shape[0]
        out = np.empty((n2 * n3, r))
        # column-by-column keeps the working set at one column of the output
        for l in range(r):
            for y in range(n2):
                b = B[y, l]
                base = y * n3
                for z in range(n3):
                    out[base + z, l] = b * C[z, l]
        return out

    @njit(cache=True)
    def _sum_nodes_flat(flat, ids):
        m = flat.shape[1]
        out = np.zeros(m)
        for v in ids:
            for e in range(m):
                out[e] += flat[v, e]
        return out

    def sum_nodes_nb(store, ids):
        flat = store.reshape(store.shape[0], -1)
        ids = np.asarray(ids, dtype=np.int64)
        return _sum_nodes_flat(flat, ids).reshape(store.shape[1:])

    @njit(cache=True)
    def _build_internal_flat(flat, size):
        m = flat.shape[1]
        for v in range(size - 1, 0, -1):
            for e in range(m):
                flat[v, e] = flat[2 * v, e] + flat[2 * v + 1, e]

    def build_internal_nb(store, size):
        _build_internal_flat(store.reshape(store.shape[0], -1), size)

    @njit(cache=True)
    def _prefix_sums_flat(Z0, Zs):
        k, m = Zs.shape
        out = np.empty((k + 1, m))
        for e in range(m):
            acc = Z0[e]
            out[0, e] = acc
            for i in range(k):
                acc = acc + Zs[i, e]
                out[i + 1, e] = acc
        return out

    def prefix_sums_nb(Z0, Zs):
        k = Zs.shape[0]
        out = _prefix_sums_flat(
            np.ascontiguousarray(Z0).reshape(-1),
            np.ascontiguousarray(Zs).reshape(k, -1),
        )
        return out.reshape((k + 1,) + Z0.shape)

    @njit(cache=True)
    def _horner_flat(coeffs, t):
        d, m = coeffs.shape
        out = np.zeros(m)
        for e in range(m):
            acc = 0.0
            for j in range(d - 1, -1, -1):
                acc = acc * t + coeffs[j, e]
            out[e] = acc
        return out

    def horner_nb(coeffs, t):
        d = coeffs.shape[0]
        flat = np.ascontiguousarray(coeffs).reshape(d, -1)
        return _horner_flat(flat, float(t)).reshape(coeffs.shape[1:])


NUMPY_KERNELS = {
    "khatri_rao": khatri_rao_np,
    "sum_nodes": sum_nodes_np,
    "build_internal": build_internal_np,
    "prefix_sums": prefix_sums_np,
    "horner": horner_np,
}

if HAS_NUMBA:
    NUMBA_KERNELS = {
        "khatri_rao": khatri_rao_nb,
        "sum_nodes": sum_nodes_nb,
        "build_internal": build_internal_nb,
        "prefix_sums": prefix_sums_nb,
        "horner": horner_nb,
    }
else:  # pragma: no cover
    NUMBA_KERNELS = dict(NUMPY_KERNELS)

_active = NUMBA_KERNELS if USE_NUMBA else NUMPY_KERNELS

khatri_rao = _active["khatri_rao"]
sum_nodes = _active["sum_nodes"]
build_internal = _active["build_internal"]
prefix_sums = _active["prefix_sums"]
horner = _active["horner"]


def backend():
    return "numba" if USE_NUMBA else "numpy"
