"""Minimal linear-operator algebra with plain (non-conjugate) transposes.

Anything exposing ``shape``, ``matmat`` and ``rmatmat`` can take part:
butterflies, the compressed impedance, and the wrappers below.
"""

import numpy as np


class LinearOp:
    def __init__(self, shape, matmat, rmatmat):
        self.shape = (int(shape[0]), int(shape[1]))
        self._matmat = matmat
        self._rmatmat = rmatmat

    def matmat(self, x):
        return self._matmat(x)

    def rmatmat(self, y):
        return self._rmatmat(y)

    @property
    def T(self):
        return LinearOp(self.shape[::-1], self._rmatmat, self._matmat)


def aslinop(a):
    """Wrap an ndarray; pass operator-like objects through unchanged."""
    if isinstance(a, np.ndarray):
        return LinearOp(a.shape, lambda x: a @ x, lambda y: a.T @ y)
    if not hasattr(a, "matmat"):
        raise TypeError(f"{type(a).__name__} is not an operator")
    return a


def zero(shape):
    def mm(x, rows=shape[0]):
        return np.zeros((rows,) + x.shape[1:], dtype=np.result_type(x, complex))

    return LinearOp(shape, mm, lambda y: mm(y, shape[1]))


def is_zero(a):
    return a is None


def product(*ops):
    """``ops[0] @ ops[1] @ ...``; ``None`` entries make the product zero."""
    if any(o is None for o in ops):
        return None
    shape = (ops[0].shape[0], ops[-1].shape[1])
    ops = [aslinop(o) for o in ops]

    def mm(x):
        for o in reversed(ops):
            x = o.matmat(x)
        return x

    def rmm(y):
        for o in ops:
            y = o.rmatmat(y)
        return y

    return LinearOp(shape, mm, rmm)


def combination(terms, shape):
    """Sum of ``coef * op`` over ``terms``; ``None`` operators are skipped."""
    terms = [(c, aslinop(o)) for c, o in terms if o is not None]
    if not terms:
        return None

    def mm(x):
        return sum(c * o.matmat(x) for c, o in terms)

    def rmm(y):
        return sum(c * o.rmatmat(y) for c, o in terms)

    return LinearOp(shape, mm, rmm)


def identity_plus(op, n=None):
    """``I + op`` (``op`` may be ``None`` for the identity)."""
    if op is None:
        return LinearOp((n, n), lambda x: x, lambda y: y)
    op = aslinop(op)
    return LinearOp(op.shape, lambda x: x + op.matmat(x), lambda y: y + op.rmatmat(y))


def restrict(op, rows, cols):
    """Sub-block ``op[rows[0]:rows[1], cols[0]:cols[1]]`` via padded products."""
    if op is None:
        return None
    op = aslinop(op)
    m, n = op.shape
    r0, r1 = rows
    c0, c1 = cols

    def mm(x):
        full = np.zeros((n,) + x.shape[1:], dtype=np.result_type(x, complex))
        full[c0:c1] = x
        return op.matmat(full)[r0:r1]

    def rmm(y):
        full = np.zeros((m,) + y.shape[1:], dtype=np.result_type(y, complex))
        full[r0:r1] = y
        return op.rmatmat(full)[c0:c1]

    return LinearOp((r1 - r0, c1 - c0), mm, rmm)


def block_2x2(blocks, row_sizes, col_sizes):
    """Operator from a 2x2 grid of operators (``None`` = zero block)."""
    m1, m2 = row_sizes
    n1, n2 = col_sizes
    grid = [[None if o is None else aslinop(o) for o in row] for row in blocks]

    def mm(x):
        y = np.zeros((m1 + m2,) + x.shape[1:], dtype=np.result_type(x, complex))
        xs = (x[:n1], x[n1:])
        for a, rs in enumerate((slice(0, m1), slice(m1, m1 + m2))):
            for b in range(2):
                if grid[a][b] is not None:
                    y[rs] += grid[a][b].matmat(xs[b])
        return y

    def rmm(y):
        x = np.zeros((n1 + n2,) + y.shape[1:], dtype=np.result_type(y, complex))
        ys = (y[:m1], y[m1:])
        for b, cs in enumerate((slice(0, n1), slice(n1, n1 + n2))):
            for a in range(2):
                if grid[a][b] is not None:
                    x[cs] += grid[a][b].rmatmat(ys[a])
        return x

    return LinearOp((m1 + m2, n1 + n2), mm, rmm)
