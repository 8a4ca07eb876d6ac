"""Continued-fraction evaluation of the (1,1) *-resolvent entry and the propagator."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import dstar
from .dstar import StarDist, resolvent_delta_minus, star
from .grid import Kernel2, TimeGrid, cumulative_integral
from .starlan import DELTA_FORM, LanczosReport, MatrixFn, Tolerances, TriT, star_lanczos


class PathSumError(ArithmeticError):
    pass


def resolvent11(T: TriT) -> StarDist:
    """``R_*(T)_{11}`` evaluated from the bottom level up.

    Each level is ``(1_* - alpha_k - sup_k * s_{k+1} * sub_k)^{*-1}`` where
    ``s_{k+1}`` is the level below. Every inner term must be smooth.
    """
    m = T.m
    grid = T.grid
    s = resolvent_delta_minus(T.alphas[m - 1].smooth_or_zero())
    for k in range(m - 2, -1, -1):
        sub = T.betas[k]
        inner = star(s, sub)
        if T.superdiag != DELTA_FORM:
            inner = star(T.entry(k, k + 1), inner)
        if not inner.is_smooth():
            raise PathSumError(
                f"level {k}: path term has a delta part of size {dstar.norm(inner):.3g}; "
                "beta is not in the smooth class")
        a = T.alphas[k]
        if not a.is_smooth():
            raise PathSumError(f"alpha_{k} has a delta part")
        s = resolvent_delta_minus(a.smooth_or_zero() + inner.smooth_or_zero())
    return s


@dataclass
class PropagatorColumn:
    grid: TimeGrid
    u: np.ndarray = field(repr=False)
    oracle: np.ndarray | None = field(default=None, repr=False)
    depth: int = 0
    report: LanczosReport | None = None
    runtime: float = 0.0
    oracle_runtime: float = 0.0

    @property
    def abs_err(self) -> np.ndarray | None:
        return None if self.oracle is None else np.abs(self.u - self.oracle)

    def max_abs_err(self) -> float:
        return float(np.max(self.abs_err))

    def max_rel_err(self) -> float:
        """Max error relative to the largest oracle magnitude."""
        return float(np.max(self.abs_err) / max(np.max(np.abs(self.oracle)), 1e-300))


def propagator_kernel(s0: StarDist) -> Kernel2:
    """``Theta * s0`` for ``s0 = delta + r``: the delta part contributes Theta exactly."""
    grid = s0.grid
    coeffs = s0.coeffs
    if set(coeffs) - {0}:
        raise PathSumError("resolvent has delta derivatives")
    vals = np.zeros((grid.n, grid.n), dtype=np.complex128)
    if 0 in coeffs:
        vals += np.tril(np.ones((grid.n, grid.n))) * coeffs[0].values[None, :]
    if s0.smooth is not None:
        vals += cumulative_integral(s0.smooth).values
    return Kernel2(grid, vals)


def ordered_exp_entry(A: MatrixFn, w, v, m: int, tols: Tolerances | None = None,
                      oracle: bool = True, rtol: float = 1e-10) -> PropagatorColumn:
    """``u(t_i) = w^H U(t_i, a) v`` through *-Lanczos and the path sum.

    A breakdown truncates the fraction at the depth reached; the report on
    the result says so.
    """
    t0 = time.perf_counter()
    T, _, _, report = star_lanczos(A, w, v, m, tols)
    s0 = resolvent11(T)
    u = propagator_kernel(s0).column(0)
    u[0] = 1.0
    out = PropagatorColumn(A.grid, u, depth=T.m, report=report,
                           runtime=time.perf_counter() - t0)
    if oracle:
        if A.func is None:
            raise ValueError("oracle comparison needs the analytic coefficient function")
        from .oracle import ode_propagator

        t1 = time.perf_counter()
        sol = ode_propagator(A.func, A.N, A.grid, rtol=rtol, atol=rtol * 1e-2, v=v, check=False)
        out.oracle = sol.bilinear(w)
        out.oracle_runtime = time.perf_counter() - t1
    return out
