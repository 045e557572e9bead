"""Classical flop accounting shared by the evaluators and cost models."""


def matmul_flops(p, q, s):
    """Flops of a (p x q) @ (q x s) product: one multiply and one add per term."""
    return 2 * p * q * s


def add_flops(*shape):
    out = 1
    for d in shape:
        out *= d
    return out


class FlopCounter:
    """Running total of counted flops.  Not thread-safe; use one per call."""

    def __init__(self):
        self.total = 0

    def matmul(self, a, b):
        p, q = a.shape
        s = b.shape[1]
        self.total += matmul_flops(p, q, s)
        return a @ b

    def add(self, n):
        self.total += n

    def __repr__(self):
        return f"FlopCounter(total={self.total})"
