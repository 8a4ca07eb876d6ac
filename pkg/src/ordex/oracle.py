"""Independent reference computations.

Nothing here touches the distribution algebra: the ODE integrator sees the
analytic coefficient function, and the brute-force moments use plain Volterra
compositions of sampled kernels.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg
from scipy.integrate import solve_ivp

from .grid import Kernel2, TimeGrid, vcompose

#: vectors with norm below this fraction of the initial scale count as null
VEC_NULL = 1e-10
#: the controller bounds local error only; running it this much tighter keeps
#: the global error of growing solutions within the requested tolerance
CONTROLLER_MARGIN = 10.0
RTOL_FLOOR = 2.5e-14


class OracleError(RuntimeError):
    pass


@dataclass
class OdeSolution:
    grid: TimeGrid
    U: np.ndarray = field(repr=False)  # (n, N, N), or (n, N) for a single column
    steps: int = 0
    nfev: int = 0
    rtol: float = 0.0
    atol: float = 0.0
    self_consistency: float | None = None

    def bilinear(self, w, v=None) -> np.ndarray:
        """``w^H U(t_i, a) v`` along the grid."""
        w = np.conj(np.asarray(w, dtype=np.complex128))
        if self.U.ndim == 2:
            return self.U @ w
        return np.einsum("i,nij,j->n", w, self.U, np.asarray(v, dtype=np.complex128))


def _integrate(func: Callable, y0: np.ndarray, grid: TimeGrid, rtol: float, atol: float):
    N = y0.shape[0]
    shape = y0.shape

    def rhs(t, y):
        return (np.asarray(func(t), dtype=np.complex128).reshape(N, N) @ y.reshape(shape)).ravel()

    sol = solve_ivp(rhs, (grid.a, grid.b), y0.ravel().astype(np.complex128), method="DOP853",
                    dense_output=True, rtol=rtol, atol=atol)
    if sol.status != 0:
        raise OracleError(f"ODE integration failed: {sol.message}")
    ys = sol.sol(grid.nodes).T.reshape((grid.n,) + shape)
    ys[0] = y0
    return ys, len(sol.t) - 1, sol.nfev


def ode_propagator(func: Callable, N: int, grid: TimeGrid, rtol: float = 1e-10,
                   atol: float = 1e-12, v=None, check: bool = True) -> OdeSolution:
    """Integrate ``dU/dt' = A(t') U`` from ``U(a) = Id`` with an adaptive 8(5,3) RK pair.

    ``rtol`` and ``atol`` are accuracy targets for the sampled solution. With
    ``v`` given only the column ``U v`` is integrated. ``check`` repeats the
    run at a tenth of the tolerance and records the largest difference
    relative to ``max |U|``.
    """
    if rtol < 1e-12:
        raise ValueError("rtol below 1e-12 is not supported by the integrator")
    y0 = np.eye(N, dtype=np.complex128) if v is None else np.asarray(v, dtype=np.complex128).copy()
    c = CONTROLLER_MARGIN
    ys, steps, nfev = _integrate(func, y0, grid, rtol / c, atol / c)
    out = OdeSolution(grid, ys, steps, nfev, rtol, atol)
    if check:
        # solve_ivp clips rtol below 100 machine epsilons
        ys2, _, _ = _integrate(func, y0, grid, max(rtol / c**2, RTOL_FLOOR), atol / c**2)
        out.self_consistency = float(np.max(np.abs(ys - ys2)) / np.max(np.abs(ys)))
    return out


def expm(M) -> np.ndarray:
    return scipy.linalg.expm(np.asarray(M, dtype=np.complex128))


@dataclass
class ClassicalLanczosResult:
    alphas: list
    betas: list
    depth: int
    breakdown_step: int | None
    kind: str  # "complete", "breakdown", "invariant"


def classical_lanczos(M, w, v, steps: int, tol: float = 1e-10) -> ClassicalLanczosResult:
    """Two-sided Lanczos with unit superdiagonal and ``w^H v = 1``.

    A step whose pairing ``w_n^H vhat_n`` is below ``tol`` times the product of
    the vector norms stops the process: "invariant" when both vectors are
    null, "breakdown" otherwise.
    """
    M = np.asarray(M, dtype=np.complex128)
    w = np.asarray(w, dtype=np.complex128)
    v = np.asarray(v, dtype=np.complex128)
    if abs(np.vdot(w, v) - 1) > 1e-12:
        raise ValueError("need w^H v = 1")
    scale = np.linalg.norm(M, 2) + 1.0
    null_w = VEC_NULL * scale * np.linalg.norm(w)
    null_v = VEC_NULL * scale * np.linalg.norm(v)
    wh = np.conj(w)
    alphas = [wh @ M @ v]
    betas = []
    wh_prev = v_prev = None
    for n in range(1, steps):
        a = alphas[-1]
        wn = wh @ M - a * wh
        vn = M @ v - v * a
        if n > 1:
            wn = wn - betas[-1] * wh_prev
            vn = vn - v_prev
        beta = wn @ vn
        nw, nv = np.linalg.norm(wn), np.linalg.norm(vn)
        if nw <= null_w and nv <= null_v:
            return ClassicalLanczosResult(alphas, betas, n, n, "invariant")
        if abs(beta) <= tol * max(nw * nv, null_w * null_v):
            return ClassicalLanczosResult(alphas, betas, n, n, "breakdown")
        betas.append(beta)
        wh_prev, v_prev = wh, v
        wh, v = wn, vn / beta
        alphas.append(wh @ M @ v)
    return ClassicalLanczosResult(alphas, betas, len(alphas), None, "complete")


def _theta_coeff(grid: TimeGrid, col: np.ndarray) -> Kernel2:
    n = grid.n
    return Kernel2(grid, np.tril(np.broadcast_to(col[:, None], (n, n))))


def brute_moments(samples: np.ndarray, grid: TimeGrid, w, v, jmax: int) -> list[Kernel2]:
    """``w^H A^{*j} v`` for ``j = 1..jmax`` by entrywise Volterra compositions.

    ``samples`` has shape ``(n, N, N)``; returns a list whose entry ``j-1``
    is the ``j``-th moment.
    """
    if jmax < 1:
        raise ValueError("jmax must be >= 1")
    samples = np.asarray(samples, dtype=np.complex128)
    N = samples.shape[1]
    w = np.conj(np.asarray(w, dtype=np.complex128))
    v = np.asarray(v, dtype=np.complex128)
    A = [[_theta_coeff(grid, samples[:, i, k]) for k in range(N)] for i in range(N)]
    nonzero = [[bool(np.any(samples[:, i, k])) for k in range(N)] for i in range(N)]
    # row[k] = (w^H A^{*j})_k
    row = [_theta_coeff(grid, np.einsum("i,ni->n", w, samples[:, :, k])) for k in range(N)]
    out = []
    for j in range(1, jmax + 1):
        if j > 1:
            new = []
            for k in range(N):
                acc = np.zeros((grid.n, grid.n), dtype=np.complex128)
                for l in range(N):
                    if nonzero[l][k]:
                        acc += vcompose(row[l], A[l][k]).values
                new.append(Kernel2(grid, acc))
            row = new
        acc = np.zeros((grid.n, grid.n), dtype=np.complex128)
        for k in range(N):
            if v[k] != 0:
                acc += row[k].values * v[k]
        out.append(Kernel2(grid, acc))
    return out
