"""Sampled kernels on a uniform grid and their Volterra algebra.

A :class:`Kernel2` stores ``f(t_i, t_j)`` for ``i >= j`` in a dense complex
array whose strict upper triangle is zero; it stands for ``f(t', t) Theta(t' - t)``
with ``Theta(0) = 1``.
"""

from __future__ import annotations

import threading
import weakref
from dataclasses import dataclass, field
from math import factorial
from typing import Callable

import numpy as np

from . import _backend, _fd

MIN_NODES = 8
#: magnitude above which the resolvent sweep is declared divergent
OVERFLOW_BOUND = 1e100


class GridError(ValueError):
    """Unusable discretization or mismatched grids."""


class KernelError(ValueError):
    """Non-finite or malformed kernel data."""


class ResolventOverflow(ArithmeticError):
    """The Volterra resolvent sweep exceeded the overflow bound."""

    def __init__(self, msg, row):
        super().__init__(msg)
        self.row = row


@dataclass(frozen=True)
class TimeGrid:
    a: float
    b: float
    n: int

    def __post_init__(self):
        if not (np.isfinite(self.a) and np.isfinite(self.b)) or self.b <= self.a:
            raise GridError(f"need b > a, got a={self.a}, b={self.b}")
        if self.n < MIN_NODES:
            raise GridError(f"need at least {MIN_NODES} nodes, got {self.n}")

    @property
    def h(self) -> float:
        return (self.b - self.a) / (self.n - 1)

    @property
    def nodes(self) -> np.ndarray:
        nodes = self.a + self.h * np.arange(self.n)
        nodes[-1] = self.b
        return nodes


def make_grid(a: float, b: float, n: int) -> TimeGrid:
    return TimeGrid(float(a), float(b), int(n))


def _freeze(arr):
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Kernel2:
    """Lower-triangular sample of a smooth two-time kernel."""

    grid: TimeGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.complex128)
        n = self.grid.n
        if vals.shape != (n, n):
            raise KernelError(f"kernel shape {vals.shape} does not match grid size {n}")
        vals = np.tril(vals)
        if not np.all(np.isfinite(vals)):
            raise KernelError("kernel contains non-finite values")
        object.__setattr__(self, "values", _freeze(vals))

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros((grid.n, grid.n), dtype=np.complex128))

    @property
    def diagonal(self) -> np.ndarray:
        return np.diagonal(self.values)

    def sup(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def is_zero(self) -> bool:
        return not np.any(self.values)

    def __add__(self, other):
        _same_grid(self, other)
        return Kernel2(self.grid, self.values + other.values)

    def __sub__(self, other):
        _same_grid(self, other)
        return Kernel2(self.grid, self.values - other.values)

    def __neg__(self):
        return Kernel2(self.grid, -self.values)

    def __mul__(self, c):
        return Kernel2(self.grid, self.values * complex(c))

    __rmul__ = __mul__

    def scale_rows(self, diag: "DiagFn | np.ndarray") -> "Kernel2":
        """Multiply by a function of ``t'``."""
        d = diag.values if isinstance(diag, DiagFn) else np.asarray(diag)
        return Kernel2(self.grid, self.values * d[:, None])

    def scale_cols(self, diag: "DiagFn | np.ndarray") -> "Kernel2":
        """Multiply by a function of ``t``."""
        d = diag.values if isinstance(diag, DiagFn) else np.asarray(diag)
        return Kernel2(self.grid, self.values * d[None, :])

    def column(self, j: int = 0) -> np.ndarray:
        return self.values[:, j].copy()


@dataclass(frozen=True, eq=False)
class DiagFn:
    """A one-time function sampled on the grid nodes."""

    grid: TimeGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.complex128).reshape(-1)
        if vals.shape[0] != self.grid.n:
            raise KernelError(f"expected {self.grid.n} samples, got {vals.shape[0]}")
        if not np.all(np.isfinite(vals)):
            raise KernelError("diagonal function contains non-finite values")
        object.__setattr__(self, "values", _freeze(vals))

    @classmethod
    def constant(cls, grid, c=1.0):
        return cls(grid, np.full(grid.n, complex(c)))

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))

    def is_zero(self) -> bool:
        return not np.any(self.values)

    def derivative(self, order: int = 1) -> "DiagFn":
        return DiagFn(self.grid, _fd.diff_1d(self.values, order, self.grid.h))

    def __add__(self, other):
        return DiagFn(self.grid, self.values + other.values)

    def __sub__(self, other):
        return DiagFn(self.grid, self.values - other.values)

    def __neg__(self):
        return DiagFn(self.grid, -self.values)

    def __mul__(self, other):
        if isinstance(other, DiagFn):
            return DiagFn(self.grid, self.values * other.values)
        return DiagFn(self.grid, self.values * complex(other))

    __rmul__ = __mul__


def _same_grid(f, g):
    if f.grid != g.grid:
        raise GridError(f"grid mismatch: {f.grid} vs {g.grid}")


def sample_kernel(f: Callable, grid: TimeGrid) -> Kernel2:
    """Evaluate ``f(t', t)`` on the lower triangle (vectorized call)."""
    tp, t = np.meshgrid(grid.nodes, grid.nodes, indexing="ij")
    mask = tp >= t
    vals = np.zeros((grid.n, grid.n), dtype=np.complex128)
    vals[mask] = np.broadcast_to(np.asarray(f(tp[mask], t[mask]), dtype=np.complex128),
                                 tp[mask].shape)
    if not np.all(np.isfinite(vals)):
        raise KernelError("sampled kernel has non-finite values")
    return Kernel2(grid, vals)


def sample_diag(f: Callable, grid: TimeGrid) -> DiagFn:
    vals = np.broadcast_to(np.asarray(f(grid.nodes), dtype=np.complex128), (grid.n,))
    return DiagFn(grid, vals)


def theta(grid: TimeGrid) -> Kernel2:
    return Kernel2(grid, np.tril(np.ones((grid.n, grid.n), dtype=np.complex128)))


def vcompose(f: Kernel2, g: Kernel2) -> Kernel2:
    """Volterra composition ``int_t^{t'} f(t', s) g(s, t) ds`` by the trapezoid rule."""
    _same_grid(f, g)
    if f.is_zero() or g.is_zero():
        return Kernel2.zeros(f.grid)
    return Kernel2(f.grid, _backend.compose(f.values, g.values, f.grid.h))


def theta_power(k: int, grid: TimeGrid) -> Kernel2:
    """Closed form of the k-th Volterra power of Theta: ``(t'-t)^(k-1)/(k-1)!``."""
    if k < 1:
        raise ValueError("theta_power needs k >= 1")
    if k == 1:
        return theta(grid)
    return sample_kernel(lambda tp, t: (tp - t) ** (k - 1) / factorial(k - 1), grid)


def d_dtprime(f: Kernel2, order: int = 1) -> Kernel2:
    return Kernel2(f.grid, _fd.d_dtprime(f.values, order, f.grid.h))


def d_dt(f: Kernel2, order: int = 1) -> Kernel2:
    return Kernel2(f.grid, _fd.d_dt(f.values, order, f.grid.h))


def partial(f: Kernel2, q: int, r: int) -> Kernel2:
    """Mixed partial ``f^(q,r)`` from a single stencil per point (no chaining)."""
    return Kernel2(f.grid, _fd.mixed_partial(f.values, q, r, f.grid.h))


MAX_JET = 4


def diag_jet(f: Kernel2, q: int, r: int) -> DiagFn:
    """Diagonal value of the mixed partial ``f^(q,r)(t, t)``."""
    if q < 0 or r < 0:
        raise ValueError("jet orders must be non-negative")
    if q + r > MAX_JET:
        raise ValueError(f"jet order {q + r} exceeds supported maximum {MAX_JET}")
    return DiagFn(f.grid, _fd.diag_jet(f.values, q, r, f.grid.h))


class JetCache:
    """Thread-safe memo of diagonal jets keyed on kernel identity."""

    def __init__(self):
        self._lock = threading.Lock()
        self._store: "weakref.WeakKeyDictionary[Kernel2, dict]" = weakref.WeakKeyDictionary()
        self._pending: dict = {}

    def get(self, f: Kernel2, q: int, r: int) -> DiagFn:
        key = (q, r)
        with self._lock:
            slot = self._store.setdefault(f, {})
            if key in slot:
                return slot[key]
            ev = self._pending.get((id(f), key))
            owner = ev is None
            if owner:
                ev = threading.Event()
                self._pending[(id(f), key)] = ev
        if not owner:
            ev.wait()
            with self._lock:
                return self._store[f][key]
        try:
            value = diag_jet(f, q, r)
            with self._lock:
                self._store[f][key] = value
        finally:
            with self._lock:
                self._pending.pop((id(f), key), None)
            ev.set()
        return value

    def __len__(self):
        with self._lock:
            return sum(len(v) for v in self._store.values())


jets = JetCache()


def volterra_resolvent(x: Kernel2, bound: float = OVERFLOW_BOUND) -> Kernel2:
    """Solve ``r = x + x*r`` for the second-kind Volterra resolvent kernel."""
    if x.is_zero():
        return Kernel2.zeros(x.grid)
    r, failed = _backend.resolvent_sweep(np.ascontiguousarray(x.values), x.grid.h, bound)
    if failed >= 0:
        raise ResolventOverflow(
            f"Volterra resolvent diverged at row {failed} (t'={x.grid.nodes[failed]:.6g}); "
            "grid too coarse or kernel too large",
            failed,
        )
    return Kernel2(x.grid, r)


def cumulative_integral(f: Kernel2) -> Kernel2:
    """``int_t^{t'} f(s, t) ds`` down each column (trapezoid); equals ``Theta * f``."""
    h = f.grid.h
    v = f.values
    csum = np.cumsum(v, axis=0)
    # trapezoid: h*(sum_{k=j}^{i} v_kj - (v_jj + v_ij)/2)
    out = h * (csum - csum[np.diag_indices_from(v)][None, :] + np.diagonal(v)[None, :]
               - 0.5 * (np.diagonal(v)[None, :] + v))
    return Kernel2(f.grid, np.tril(out, -1))
