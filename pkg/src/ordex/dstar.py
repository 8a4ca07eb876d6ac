"""Arithmetic on distributions ``smooth * Theta + sum_i c_i(t) delta^(i)(t' - t)``.

A :class:`StarDist` is canonical when every delta coefficient is a function
of the right time ``t``. All products return canonical results.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb
from typing import Iterable

import numpy as np

from . import _fd
from .grid import (DiagFn, Kernel2, TimeGrid, d_dt, d_dtprime, jets, partial, theta,
                   vcompose, volterra_resolvent, cumulative_integral, KernelError,
                   MAX_JET)

#: default cap on delta derivative orders
MAX_ORDER = 8
#: stencil accuracy for diagonal traces used as delta coefficients
DIAG_ACCURACY = 4
TOL_NULL = 1e-8


class DeltaOrderError(ArithmeticError):
    """A product would create a delta derivative above the configured cap."""


class NotCanonicalError(ValueError):
    pass


class InverseError(ArithmeticError):
    """A kernel could not be *-inverted on the grid."""


class ZeroCrossingError(InverseError):
    """The leading diagonal jet vanishes at some grid nodes."""

    def __init__(self, msg, nodes, times):
        super().__init__(msg)
        self.nodes = list(nodes)
        self.times = list(times)


@dataclass(frozen=True)
class DeltaTerm:
    order: int
    coeff: DiagFn
    var: str = "t"  # "t" (canonical) or "tprime"

    def __post_init__(self):
        if self.order < 0:
            raise ValueError("delta order must be >= 0")
        if self.var not in ("t", "tprime"):
            raise ValueError("var must be 't' or 'tprime'")


@dataclass(frozen=True, eq=False)
class StarDist:
    grid: TimeGrid
    smooth: Kernel2 | None = None
    deltas: tuple[DeltaTerm, ...] = ()
    #: set by star_inverse_smooth: (delta order, Sm_Theta factor) with self = delta^(k) * factor
    factor: tuple[int, Kernel2] | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "deltas", tuple(sorted(self.deltas, key=lambda d: d.order)))
        if self.smooth is not None and self.smooth.grid != self.grid:
            raise KernelError("smooth part on a different grid")

    @property
    def canonical(self) -> bool:
        orders = [d.order for d in self.deltas]
        return all(d.var == "t" for d in self.deltas) and len(set(orders)) == len(orders)

    @property
    def coeffs(self) -> dict[int, DiagFn]:
        if not self.canonical:
            raise NotCanonicalError("distribution is not canonical")
        return {d.order: d.coeff for d in self.deltas}

    @property
    def max_order(self) -> int:
        return max((d.order for d in self.deltas), default=-1)

    def smooth_or_zero(self) -> Kernel2:
        return self.smooth if self.smooth is not None else Kernel2.zeros(self.grid)

    def is_smooth(self) -> bool:
        return not self.deltas

    def __repr__(self):
        parts = []
        if self.smooth is not None:
            parts.append(f"smooth(sup={self.smooth.sup():.3g})")
        parts += [f"d{d.order}[{d.var}](sup={d.coeff.sup():.3g})" for d in self.deltas]
        return f"StarDist({' + '.join(parts) or '0'})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, scale(-1, other))

    def __neg__(self):
        return scale(-1, self)

    def __mul__(self, other):
        return star(self, other)


# --------------------------------------------------------------------------
# constructors
# --------------------------------------------------------------------------


def zero(grid: TimeGrid) -> StarDist:
    return StarDist(grid)


def delta(grid: TimeGrid, order: int = 0, coeff=1.0) -> StarDist:
    c = coeff if isinstance(coeff, DiagFn) else DiagFn.constant(grid, coeff)
    return StarDist(grid, None, (DeltaTerm(order, c),))


def identity(grid: TimeGrid) -> StarDist:
    """The *-identity ``1_* = delta(t' - t)``."""
    return delta(grid, 0, 1.0)


def smooth(k: Kernel2) -> StarDist:
    return StarDist(k.grid, k)


def theta_dist(grid: TimeGrid) -> StarDist:
    return StarDist(grid, theta(grid))


# --------------------------------------------------------------------------
# linear structure
# --------------------------------------------------------------------------


def _assemble(grid, smooth_parts: Iterable[Kernel2], delta_parts: dict[int, list[DiagFn]],
              max_order: int = MAX_ORDER) -> StarDist:
    s = None
    for k in smooth_parts:
        if k is None or k.is_zero():
            continue
        s = k if s is None else s + k
    terms = []
    for order in sorted(delta_parts):
        acc = None
        for c in delta_parts[order]:
            if c.is_zero():
                continue
            acc = c if acc is None else acc + c
        if acc is None or acc.is_zero():
            continue
        if order > max_order:
            raise DeltaOrderError(f"delta order {order} exceeds cap {max_order}")
        terms.append(DeltaTerm(order, acc))
    if s is not None and s.is_zero():
        s = None
    return StarDist(grid, s, tuple(terms))


def add(a: StarDist, b: StarDist) -> StarDist:
    if a.grid != b.grid:
        raise KernelError("grid mismatch")
    _need_canonical(a, b)
    parts: dict[int, list[DiagFn]] = {}
    for d in a.deltas + b.deltas:
        parts.setdefault(d.order, []).append(d.coeff)
    return _assemble(a.grid, [a.smooth, b.smooth], parts, max_order=10**9)


def scale(c: complex, a: StarDist) -> StarDist:
    c = complex(c)
    if c == 0:
        return zero(a.grid)
    sm = a.smooth * c if a.smooth is not None else None
    return StarDist(a.grid, sm, tuple(DeltaTerm(d.order, d.coeff * c, d.var) for d in a.deltas))


def sum_dists(grid: TimeGrid, items: Iterable[StarDist]) -> StarDist:
    smooth_parts = []
    parts: dict[int, list[DiagFn]] = {}
    for it in items:
        _need_canonical(it)
        smooth_parts.append(it.smooth)
        for d in it.deltas:
            parts.setdefault(d.order, []).append(d.coeff)
    return _assemble(grid, smooth_parts, parts, max_order=10**9)


def norm(a: StarDist) -> float:
    """Smooth-part sup-norm plus the sup-norms of all delta coefficients."""
    total = a.smooth.sup() if a.smooth is not None else 0.0
    return total + sum(d.coeff.sup() for d in a.deltas)


def _need_canonical(*ds):
    for d in ds:
        if not d.canonical:
            raise NotCanonicalError("operation requires canonical distributions")


# --------------------------------------------------------------------------
# canonical form
# --------------------------------------------------------------------------


def _tprime_to_t(order: int, derivs: list[DiagFn]) -> dict[int, list[DiagFn]]:
    """``phi(t') delta^(k) = sum_l (-1)^l C(k,l) phi^(l)(t) delta^(k-l)``.

    ``derivs[l]`` holds ``phi^(l)`` on the grid.
    """
    out: dict[int, list[DiagFn]] = {}
    for l in range(order + 1):
        c = derivs[l]
        if c.is_zero():
            continue
        out.setdefault(order - l, []).append(c * ((-1) ** l * comb(order, l)))
    return out


def canonicalize(d: StarDist, max_order: int = MAX_ORDER) -> StarDist:
    """Rewrite ``t'``-dependent delta coefficients as functions of ``t``."""
    parts: dict[int, list[DiagFn]] = {}
    for term in d.deltas:
        if term.order > max_order:
            raise DeltaOrderError(f"delta order {term.order} exceeds cap {max_order}")
        if term.var == "t" or term.order == 0:
            parts.setdefault(term.order, []).append(term.coeff)
            continue
        derivs = [term.coeff] + [term.coeff.derivative(l) for l in range(1, term.order + 1)]
        for k, cs in _tprime_to_t(term.order, derivs).items():
            parts.setdefault(k, []).extend(cs)
    return _assemble(d.grid, [d.smooth], parts, max_order)


# --------------------------------------------------------------------------
# the *-product
# --------------------------------------------------------------------------


def _is_one(c: DiagFn) -> bool:
    return bool(np.all(c.values == 1.0))


def _coeff_derivs(c: DiagFn, upto: int) -> list[DiagFn]:
    return [c] + [c.derivative(l) for l in range(1, upto + 1)]


def _delta_times_smooth(order: int, coeff: DiagFn, k: Kernel2, parts, max_order):
    """``c(t) delta^(i) * k = delta^(i) * (c(t') k)``."""
    p = k if _is_one(coeff) else k.scale_rows(coeff)
    sm = p if order == 0 else d_dtprime(p, order)
    for kk in range(order):
        q = order - kk - 1
        if q > MAX_JET:
            raise DeltaOrderError(f"jet order {q} beyond supported stencils")
        parts.setdefault(kk, []).append(jets.get(p, q, 0))
    return sm


def _smooth_times_delta(k: Kernel2, order: int, coeff: DiagFn, parts, max_order):
    """``k * c(t) delta^(j)``: order-``j`` right action then multiply by ``c(t)``."""
    unit = _is_one(coeff)
    if order == 0:
        return k if unit else k.scale_cols(coeff)
    sm = d_dt(k, order) * ((-1) ** order)
    if not unit:
        sm = sm.scale_cols(coeff)
    for kk in range(order):
        r = order - kk - 1
        if r + kk > MAX_JET:
            raise DeltaOrderError(f"jet order {r + kk} beyond supported stencils")
        sign = (-1) ** (kk + order + 1)

        # phi(t') = k^(0,r)(t', t'); its total derivatives are sums of mixed jets
        def phi_deriv(l, r=r):
            acc = None
            for m in range(l + 1):
                term = jets.get(k, m, r + l - m) * comb(l, m)
                acc = term if acc is None else acc + term
            return acc

        derivs = [phi_deriv(l) for l in range(kk + 1)]
        for o, cs in _tprime_to_t(kk, derivs).items():
            for c in cs:
                c = c * sign
                parts.setdefault(o, []).append(c if unit else c * coeff)
    return sm


def _delta_times_delta(i: int, a: DiagFn, j: int, b: DiagFn, parts, max_order):
    """``a(t) delta^(i) * b(t) delta^(j) = b(t) sum_l (-1)^l C(j,l) a^(l)(t) delta^(i+j-l)``."""
    if i + j > max_order:
        raise DeltaOrderError(f"delta order {i + j} exceeds cap {max_order}")
    derivs = _coeff_derivs(a, j) if j else [a]
    for l in range(j + 1):
        al = derivs[l]
        if al.is_zero():
            continue
        c = al if l == 0 else al * ((-1) ** l * comb(j, l))
        if not _is_one(b):
            c = c * b
        parts.setdefault(i + j - l, []).append(c)


def star(a: StarDist, b: StarDist, max_order: int = MAX_ORDER) -> StarDist:
    """The *-product ``(a * b)(t', t) = int a(t', s) b(s, t) ds``."""
    if a.grid != b.grid:
        raise KernelError("grid mismatch")
    _need_canonical(a, b)
    smooth_parts: list[Kernel2] = []
    parts: dict[int, list[DiagFn]] = {}
    if a.smooth is not None and b.smooth is not None:
        smooth_parts.append(vcompose(a.smooth, b.smooth))
    if a.smooth is not None:
        for d in b.deltas:
            smooth_parts.append(_smooth_times_delta(a.smooth, d.order, d.coeff, parts, max_order))
    if b.smooth is not None:
        for d in a.deltas:
            smooth_parts.append(_delta_times_smooth(d.order, d.coeff, b.smooth, parts, max_order))
    for da in a.deltas:
        for db in b.deltas:
            _delta_times_delta(da.order, da.coeff, db.order, db.coeff, parts, max_order)
    return _assemble(a.grid, smooth_parts, parts, max_order)


def star_power(a: StarDist, k: int) -> StarDist:
    out = identity(a.grid)
    for _ in range(k):
        out = star(out, a)
    return out


# --------------------------------------------------------------------------
# inverses and resolvents
# --------------------------------------------------------------------------


def is_null(fn: DiagFn, scale: float = 0.0, tol: float = TOL_NULL) -> bool:
    """Identically-null test used to classify jets."""
    return fn.sup() < tol * (1.0 + scale)


def zero_crossings(fn: DiagFn, scale: float = 0.0, tol: float = TOL_NULL) -> list[int]:
    """Nodes where ``fn`` vanishes, or where it turns by more than 90 degrees before the next node."""
    v = fn.values
    small = np.abs(v) < tol * (1.0 + scale)
    turn = np.zeros_like(small)
    turn[:-1] = np.real(v[:-1] * np.conj(v[1:])) < 0
    return [int(i) for i in np.nonzero(small | turn)[0]]


def leading_jet_order(f: Kernel2, tol: float = TOL_NULL) -> int:
    """Smallest ``k`` with ``f^(k,0)(t,t)`` not identically null."""
    scale = f.sup()
    for k in range(MAX_JET + 1):
        if not is_null(jets.get(f, k, 0), scale, tol):
            return k
    raise InverseError(f"diagonal jets of the kernel vanish through order {MAX_JET}")


def star_inverse_smooth(f: Kernel2, k: int | None = None, tol: float = TOL_NULL,
                        max_order: int = MAX_ORDER) -> StarDist:
    """*-inverse of a kernel whose first nonvanishing diagonal jet has order ``k``.

    Returns ``delta^(k+2) * F`` expanded into canonical form, with ``F`` (an
    Sm_Theta kernel) kept in ``result.factor``. With ``c(t) = f^(0,k)(t,t)``
    and ``G(t',t) = f^(0,k+1)(t',t) / c(t')``::

        F(t', t) = (-1)^k / c(t) * (1 + int_t^{t'} R(s, t) ds),   R = resolvent of G
    """
    grid = f.grid
    scale = f.sup()
    if k is None:
        k = leading_jet_order(f, tol)
    if k + 1 > MAX_JET:
        raise InverseError(f"jet order {k + 1} beyond supported stencils")
    for j in range(k):
        if not is_null(jets.get(f, j, 0), scale, tol):
            raise InverseError(f"diagonal jet of order {j} < k={k} is not null")
    c = jets.get(f, 0, k)
    if is_null(c, scale, tol):
        raise InverseError(f"diagonal jet of order {k} is identically null")
    cabs = np.abs(c.values)
    bad = np.nonzero(cabs < tol * (1.0 + scale))[0]
    if bad.size:
        times = grid.nodes[bad]
        raise ZeroCrossingError(
            f"leading jet vanishes at {bad.size} node(s) (t={', '.join(f'{x:.6g}' for x in times[:5])}); "
            "restrict the interval to exclude them",
            bad, times)
    sign = (-1) ** k
    dg, diag_d, cinv = _inverse_ingredients(f, k)
    dr, dr_diag = _resolvent_tprime_derivatives(dg, diag_d, k + 1)
    # f^-1 = delta^(k+1) * X, X = (-1)^k (delta + R) c(t)^-1
    parts = {k + 1: [cinv * sign]}
    for j in range(k + 1):
        parts.setdefault(k - j, []).append(dr_diag[j] * cinv * sign)
    out = _assemble(grid, [dr[k + 1].scale_cols(cinv) * sign], parts, max_order)
    ones = np.tril(np.ones((grid.n, grid.n)))
    fac = Kernel2(grid, (ones + cumulative_integral(dr[0]).values) * (sign * cinv.values)[None, :])
    return StarDist(grid, out.smooth, out.deltas, factor=(k + 2, fac))


def sum_kernels(grid: TimeGrid, ks: Iterable[Kernel2]) -> Kernel2:
    acc = Kernel2.zeros(grid)
    for k in ks:
        acc = acc + k
    return acc


def _inverse_ingredients(f: Kernel2, k: int):
    """Derivatives of ``G = c(t')^-1 f^(0,k+1)`` built from direct partials of ``f``.

    Returns ``dg[i] = d^i G / dt'^i`` for ``i <= k+1``, a lookup
    ``diag_d(i, q) = d^q/dt^q [dg[i](t, t)]`` and ``1/c``. Derivatives of the jet ``c``
    and of diagonal traces are expanded into diagonal values of partials of
    ``f`` so that no difference quotient is ever taken of computed data.
    """
    grid = f.grid
    cache: dict[tuple[int, int], Kernel2] = {}

    def fp(q, r):
        if (q, r) not in cache:
            cache[(q, r)] = partial(f, q, r)
        return cache[(q, r)]

    idx = np.arange(grid.n)
    dcache: dict[tuple[int, int], np.ndarray] = {}

    def fdiag(q, r):
        # diagonal traces become delta coefficients that later products differentiate,
        # so they get higher-order stencils than the kernels
        if (q, r) not in dcache:
            dcache[(q, r)] = _fd.partial_at(f.values, idx, idx, q, r, grid.h, DIAG_ACCURACY)
        return dcache[(q, r)]

    # c^(q)(t) = sum_m C(q,m) f^(m, k+q-m)(t,t); (1/c)^(q) from c * (1/c) = 1
    top = k + 1
    cd = [fdiag(0, k)] + [sum(comb(q, m) * fdiag(m, k + q - m) for m in range(q + 1))
                       for q in range(1, top + 1)]
    u = [1.0 / cd[0]]
    for q in range(1, top + 1):
        u.append(-sum(comb(q, m) * cd[m] * u[q - m] for m in range(1, q + 1)) / cd[0])

    def g_partial(p, s):
        """d^p/dt'^p d^s/dt^s G as a kernel."""
        return sum_kernels(grid, [fp(p - l, k + 1 + s).scale_rows(u[l]) * comb(p, l)
                                  for l in range(p + 1)])

    def g_partial_diag(p, s):
        return sum(comb(p, l) * u[l] * fdiag(p - l, k + 1 + s) for l in range(p + 1))

    def diag_d(i, q):
        return DiagFn(grid, sum(comb(q, m) * g_partial_diag(i + m, q - m) for m in range(q + 1)))

    return [g_partial(i, 0) for i in range(k + 2)], diag_d, DiagFn(grid, u[0])


def _resolvent_tprime_derivatives(dg: list[Kernel2], diag_d, order: int):
    """``[R, R', ..., R^(order)]`` (t'-derivatives) for ``R = G + G o R``, and their diagonals.

    ``dg[i]`` is the i-th t'-derivative of ``G`` and ``diag_d(i, q)`` the q-th
    derivative of its diagonal trace. Differentiating the Volterra equation,
    ``(A o B)' = A(t',t') B + A' o B``, gives each derivative from lower ones
    and compositions, so no difference quotient of ``R`` is taken.
    """
    grid = dg[0].grid
    r = volterra_resolvent(dg[0])
    out = [r]
    # diagonal traces follow the same recursion (compositions vanish there)
    diag = [diag_d(0, 0)]
    for j in range(1, order + 1):
        terms = [dg[j], vcompose(dg[j], r)]
        dterm = diag_d(j, 0)
        for i in range(j):
            p = j - 1 - i
            for q in range(p + 1):
                a = diag_d(i, q)
                terms.append(out[p - q].scale_rows(a) * comb(p, q))
                dterm = dterm + a * diag[p - q] * comb(p, q)
        out.append(sum_kernels(grid, terms))
        diag.append(dterm)
    return out, diag


def resolvent_delta_minus(h: Kernel2) -> StarDist:
    """``(1_* - h)^{*-1} = 1_* + sum_k h^{*k}`` for a smooth kernel ``h``."""
    r = volterra_resolvent(h)
    return StarDist(h.grid, None if r.is_zero() else r,
                    (DeltaTerm(0, DiagFn.constant(h.grid, 1.0)),))


def split_smooth(d: StarDist) -> tuple[Kernel2, float]:
    """Project onto Sm_Theta; returns the kernel and the dropped delta magnitude."""
    dropped = sum(t.coeff.sup() for t in d.deltas)
    return d.smooth_or_zero(), dropped
