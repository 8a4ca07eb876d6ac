"""Finite-difference machinery for lower-triangular kernels.

Derivatives along one axis use 1-D stencils confined to the valid part of
each row (``t``-direction, columns ``0..i``) or column (``t'``-direction,
rows ``j..n-1``). Points where the segment is too short for the stencil, and
all diagonal jets, fall back to a least-squares polynomial fit over a small
patch of the triangle.

Every stencil with derivative order >= 1 is applied to ``f - f(x0)`` so that
constant data differentiates to exact zeros.
"""

from __future__ import annotations

from fractions import Fraction
from functools import lru_cache
from math import comb, factorial

import numpy as np

#: accuracy order of the 1-D stencils (points = derivative order + ACCURACY)
ACCURACY = 2
#: half-width of the 2-D fitting patch; the patch is a (2K+1)^2 box
PATCH_HALF = 4


def _solve_exact(mat, rhs):
    """Gaussian elimination over Fractions."""
    size = len(rhs)
    aug = [list(row) + [b] for row, b in zip(mat, rhs)]
    for col in range(size):
        piv = next(r for r in range(col, size) if aug[r][col] != 0)
        aug[col], aug[piv] = aug[piv], aug[col]
        pv = aug[col][col]
        aug[col] = [x / pv for x in aug[col]]
        for r in range(size):
            if r != col and aug[r][col] != 0:
                fac = aug[r][col]
                aug[r] = [x - fac * y for x, y in zip(aug[r], aug[col])]
    return [aug[r][size] for r in range(size)]


@lru_cache(maxsize=None)
def stencil_weights(order: int, offsets: tuple[int, ...]) -> np.ndarray:
    """Weights ``w`` with ``sum(w * f(x0 + o*h)) = h**order f^(order)(x0) + O(h^len)``."""
    size = len(offsets)
    if size <= order:
        raise ValueError("stencil needs more points than the derivative order")
    mat = [[Fraction(o) ** m / factorial(m) for o in offsets] for m in range(size)]
    rhs = [Fraction(int(m == order)) for m in range(size)]
    return np.array([float(x) for x in _solve_exact(mat, rhs)])


@lru_cache(maxsize=None)
def _window_table(order: int) -> np.ndarray:
    """Row ``p`` holds the weights for evaluating at position ``p`` of the window."""
    npts = order + ACCURACY
    return np.array(
        [stencil_weights(order, tuple(k - p for k in range(npts))) for p in range(npts)]
    )


def diff_1d(values: np.ndarray, order: int, h: float) -> np.ndarray:
    """Derivative of a uniformly sampled 1-D function (order-2 stencils)."""
    values = np.asarray(values)
    if order == 0:
        return values.copy()
    n = values.shape[0]
    npts = order + ACCURACY
    if n < npts:
        raise ValueError(f"need at least {npts} samples for a derivative of order {order}")
    if np.all(values == values[0]):
        return np.zeros_like(values)
    idx = np.arange(n)
    start = np.clip(idx - (npts - 1) // 2, 0, n - npts)
    pos = idx - start
    table = _window_table(order)
    out = np.zeros_like(values)
    for k in range(npts):
        out += table[pos, k] * (values[start + k] - values)
    return out / h**order


# --------------------------------------------------------------------------
# 2-D patch fits
# --------------------------------------------------------------------------


def _monomials(degree):
    return [(a, b) for tot in range(degree + 1) for a in range(tot + 1) for b in [tot - a]]


@lru_cache(maxsize=None)
def _patch_weights(lag: int, pi: int, pj: int, q: int, r: int, degree: int) -> tuple:
    """Least-squares weights over the triangle part of a box.

    The box has rows ``R0..R0+W-1`` and columns ``C0..C0+W-1`` with
    ``R0 - C0 = lag``; the evaluation point sits at box offset ``(pi, pj)``.
    Returns ``(row_offsets, col_offsets, weights)``; weights carry the factor
    ``q! r!`` but not the ``h`` scaling.
    """
    width = 2 * PATCH_HALF + 1
    rows, cols = [], []
    for a in range(width):
        for b in range(width):
            if a + lag >= b:
                rows.append(a)
                cols.append(b)
    rows = np.array(rows)
    cols = np.array(cols)
    x = (rows - pi) / PATCH_HALF
    y = (cols - pj) / PATCH_HALF
    mons = _monomials(degree)
    vander = np.stack([x**a * y**b for a, b in mons], axis=1)
    pinv = np.linalg.pinv(vander)
    k = mons.index((q, r))
    weights = pinv[k] * factorial(q) * factorial(r) / PATCH_HALF ** (q + r)
    return rows, cols, weights


def patch_derivative(f: np.ndarray, ii: np.ndarray, jj: np.ndarray, q: int, r: int,
                     h: float, degree: int | None = None) -> np.ndarray:
    """Mixed partial ``d^q/dt'^q d^r/dt^r`` of the smooth part at points ``(ii, jj)``."""
    n = f.shape[0]
    width = 2 * PATCH_HALF + 1
    if n < width:
        raise ValueError(f"grid too small for patch fits (need n >= {width})")
    if degree is None:
        degree = q + r + ACCURACY
    ii = np.asarray(ii)
    jj = np.asarray(jj)
    out = np.zeros(ii.shape, dtype=f.dtype)
    if q == 0 and r == 0:
        return f[ii, jj].copy()
    r0 = np.clip(ii - PATCH_HALF, 0, n - width)
    c0 = np.clip(jj - PATCH_HALF, 0, n - width)
    lag = np.minimum(r0 - c0, width)
    keys = np.stack([lag, ii - r0, jj - c0], axis=1)
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    center = f[ii, jj]
    for u, (lg, pi, pj) in enumerate(uniq):
        sel = np.nonzero(inverse == u)[0]
        rows, cols, weights = _patch_weights(int(lg), int(pi), int(pj), q, r, degree)
        gi = r0[sel][:, None] + rows[None, :]
        gj = c0[sel][:, None] + cols[None, :]
        vals = f[gi, gj] - center[sel][:, None]
        out[sel] = vals @ weights
    return out / h ** (q + r)


def diag_jet(f: np.ndarray, q: int, r: int, h: float) -> np.ndarray:
    """``f^(q,r)(t_i, t_i)`` for every node."""
    n = f.shape[0]
    idx = np.arange(n)
    if q == 0 and r == 0:
        return np.diagonal(f).copy()
    return patch_derivative(f, idx, idx, q, r, h)


def total_diag_derivative(jets, q: int, r: int, l: int):
    """``d^l/dt^l [f^(q,r)(t,t)] = sum_m C(l,m) f^(q+m, r+l-m)(t,t)`` given a jet lookup."""
    acc = None
    for m in range(l + 1):
        term = comb(l, m) * jets(q + m, r + l - m)
        acc = term if acc is None else acc + term
    return acc


# --------------------------------------------------------------------------
# 1-D stencils inside the triangle
# --------------------------------------------------------------------------


@lru_cache(maxsize=None)
def _tri_index(n: int):
    ii, jj = np.tril_indices(n)
    return ii, jj


def _axis_derivative(f: np.ndarray, order: int, h: float, along_rows: bool) -> np.ndarray:
    n = f.shape[0]
    out = np.zeros_like(f)
    if order == 0:
        return np.tril(f)
    ii, jj = _tri_index(n)
    npts = order + ACCURACY
    if along_rows:
        # d/dt: index j moves inside [0, i]
        lo, hi, pos_idx = np.zeros_like(ii), ii, jj
    else:
        # d/dt': index i moves inside [j, n-1]
        lo, hi, pos_idx = jj, np.full_like(jj, n - 1), ii
    ok = (hi - lo + 1) >= npts
    table = _window_table(order)
    oi, oj, op, olo, ohi = ii[ok], jj[ok], pos_idx[ok], lo[ok], hi[ok]
    start = np.clip(op - (npts - 1) // 2, olo, ohi - npts + 1)
    pos = op - start
    center = f[oi, oj]
    acc = np.zeros(oi.shape, dtype=f.dtype)
    for k in range(npts):
        if along_rows:
            acc += table[pos, k] * (f[oi, start + k] - center)
        else:
            acc += table[pos, k] * (f[start + k, oj] - center)
    out[oi, oj] = acc / h**order
    if not np.all(ok):
        bi, bj = ii[~ok], jj[~ok]
        q, r = (0, order) if along_rows else (order, 0)
        out[bi, bj] = patch_derivative(f, bi, bj, q, r, h)
    return out


def d_dt(f: np.ndarray, order: int, h: float) -> np.ndarray:
    return _axis_derivative(f, order, h, along_rows=True)


def d_dtprime(f: np.ndarray, order: int, h: float) -> np.ndarray:
    return _axis_derivative(f, order, h, along_rows=False)


# --------------------------------------------------------------------------
# direct mixed partials
# --------------------------------------------------------------------------


def _box_starts(i, j, a, b, n):
    """Top-left corners ``(R, C)`` of ``a x b`` boxes lying in the triangle (``R >= C + b - 1``).

    Also returns a mask of points that had to be left outside their box.
    """
    r0 = np.clip(i - (a - 1) // 2, 0, n - a)
    c0 = np.clip(j - (b - 1) // 2, 0, n - b)
    deficit = np.maximum(c0 + b - 1 - r0, 0)
    # slide columns left while the point stays in the box, then rows down
    step = np.minimum(deficit, c0 - np.maximum(j - b + 1, 0))
    c0, deficit = c0 - step, deficit - step
    step = np.minimum(deficit, np.minimum(i, n - a) - r0)
    r0, deficit = r0 + step, deficit - step
    outside = deficit > 0
    # what is left: move further, extrapolating
    step = np.minimum(deficit, c0)
    c0, deficit = c0 - step, deficit - step
    r0 = r0 + deficit
    return r0, c0, outside


def _apply_boxes(f, out, ii, jj, q, r, a, b):
    n = f.shape[0]
    r0, c0, outside = _box_starts(ii, jj, a, b, n)
    pi, pj = ii - r0, jj - c0
    keys = pi * (4 * n) + pj
    center = f[ii, jj]
    for key in np.unique(keys):
        sel = np.nonzero(keys == key)[0]
        p, s = int(pi[sel[0]]), int(pj[sel[0]])
        wr = stencil_weights(q, tuple(k - p for k in range(a))) if a > 1 else np.ones(1)
        wc = stencil_weights(r, tuple(k - s for k in range(b))) if b > 1 else np.ones(1)
        box = f[r0[sel][:, None, None] + np.arange(a)[None, :, None],
                c0[sel][:, None, None] + np.arange(b)[None, None, :]]
        out[sel] = np.einsum("pab,a,b->p", box - center[sel][:, None, None], wr, wc)
    return outside


def partial_at(f: np.ndarray, ii, jj, q: int, r: int, h: float,
               accuracy: int = ACCURACY) -> np.ndarray:
    """``d^q/dt'^q d^r/dt^r`` at the points ``(ii, jj)``, one tensor-product stencil per point.

    Unlike chained 1-D derivatives, every value is a single linear functional
    of the input samples on a box inside the triangle, so the error is
    ``O(h^accuracy)`` with no amplification of earlier stencil errors. Where a
    box cannot contain its point, an undifferentiated direction gets an
    extrapolating stencil instead of a single line.
    """
    n = f.shape[0]
    ii = np.asarray(ii)
    jj = np.asarray(jj)
    if q == 0 and r == 0:
        return f[ii, jj].copy()
    a = q + accuracy if q else 1
    b = r + accuracy if r else 1
    if n < a + b - 1:
        raise ValueError(f"need at least {a + b - 1} nodes for a ({q},{r}) partial")
    out = np.zeros(ii.shape, dtype=f.dtype)
    outside = _apply_boxes(f, out, ii, jj, q, r, a, b)
    if np.any(outside) and (a == 1 or b == 1):
        a2 = a if a > 1 else accuracy + 1
        b2 = b if b > 1 else accuracy + 1
        sub = np.zeros(int(outside.sum()), dtype=f.dtype)
        _apply_boxes(f, sub, ii[outside], jj[outside], q, r, a2, b2)
        out[outside] = sub
    return out / h ** (q + r)


def mixed_partial(f: np.ndarray, q: int, r: int, h: float) -> np.ndarray:
    """:func:`partial_at` over the whole lower triangle."""
    ii, jj = _tri_index(f.shape[0])
    out = np.zeros_like(f)
    out[ii, jj] = partial_at(f, ii, jj, q, r, h)
    return out
