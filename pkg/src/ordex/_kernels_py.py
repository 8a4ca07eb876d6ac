"""Pure numpy implementations of the triangular hot loops.

Same signatures as the compiled ``ordex._kernels`` module.
"""

import numpy as np


def compose(f, g, h):
    """Trapezoidal Volterra composition of two lower-triangular arrays."""
    # upper-triangle zeros restrict the plain matrix product to k in [j, i]
    out = f @ g
    out -= 0.5 * (np.diagonal(f)[:, None] * g + f * np.diagonal(g)[None, :])
    out *= h
    out = np.tril(out, -1)
    return np.ascontiguousarray(out)


def resolvent_sweep(x, h, bound):
    """Row-by-row solve of r = x + x*r (trapezoid); returns (r, failed_row).

    ``failed_row`` is -1 on success, otherwise the row where ``bound`` was
    exceeded or the implicit diagonal factor vanished.
    """
    n = x.shape[0]
    r = np.zeros_like(x)
    diag = np.diagonal(x)
    for i in range(n):
        r[i, i] = diag[i]
        if i == 0:
            continue
        denom = 1.0 - 0.5 * h * diag[i]
        if denom == 0:
            return r, i
        xi = x[i, :i]
        s = xi @ r[:i, :i]
        s -= 0.5 * xi * diag[:i]
        row = (xi + h * s) / denom
        if not np.all(np.abs(row) <= bound):
            r[i, :i] = row
            return r, i
        r[i, :i] = row
    return r, -1
