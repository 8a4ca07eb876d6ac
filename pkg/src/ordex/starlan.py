"""Time-dependent (*-product) Lanczos tridiagonalization."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import dstar
from .dstar import StarDist, identity, norm, star, sum_dists
from .grid import DiagFn, Kernel2, TimeGrid, d_dtprime, jets, theta_power, vcompose

log = logging.getLogger(__name__)

DELTA_FORM = "delta"
THETA_FORM = "theta"


@dataclass
class Tolerances:
    null: float = 1e-8
    mm: float = 1e-3
    diag: float = 1e-3
    bio: float = 1e-3
    probe: float = 1e-10
    #: dropped delta parts of alpha/beta above this (relative) abort the run
    smooth_proj: float = 1e-2
    max_order: int = dstar.MAX_ORDER

    @classmethod
    def from_dict(cls, d):
        return cls(**d) if d else cls()


class BreakdownError(RuntimeError):
    def __init__(self, msg, report):
        super().__init__(msg)
        self.report = report


class NormalizationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class MatrixFn:
    """Samples of an ``N x N`` coefficient matrix at the grid nodes.

    ``func`` optionally keeps the analytic coefficient ``t -> A(t)`` for
    oracles that must not see the samples.
    """

    grid: TimeGrid
    samples: np.ndarray = field(repr=False)
    func: Callable | None = field(default=None, repr=False)

    def __post_init__(self):
        s = np.array(self.samples, dtype=np.complex128)
        if s.ndim != 3 or s.shape[0] != self.grid.n or s.shape[1] != s.shape[2]:
            raise ValueError(f"samples must have shape (n, N, N), got {s.shape}")
        if not np.all(np.isfinite(s)):
            raise ValueError("matrix samples contain non-finite values")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "_kernels", {})

    @classmethod
    def from_callable(cls, func: Callable, grid: TimeGrid) -> "MatrixFn":
        samples = np.stack([np.asarray(func(t), dtype=np.complex128) for t in grid.nodes])
        if samples.ndim == 1:
            samples = samples[:, None, None]
        return cls(grid, samples, func)

    @property
    def N(self) -> int:
        return self.samples.shape[1]

    def kernel(self, i: int, j: int) -> Kernel2 | None:
        """``A_ij(t') Theta(t' - t)``, or None for an identically zero entry."""
        cache = self._kernels
        if (i, j) not in cache:
            col = self.samples[:, i, j]
            if not np.any(col):
                cache[(i, j)] = None
            else:
                n = self.grid.n
                cache[(i, j)] = Kernel2(self.grid, np.tril(np.broadcast_to(col[:, None], (n, n))))
        return cache[(i, j)]

    def entry(self, i: int, j: int) -> StarDist:
        k = self.kernel(i, j)
        return StarDist(self.grid, k)

    def bilinear(self, w, v) -> Kernel2:
        """``(w^H A(t') v) Theta``."""
        w = np.asarray(w, dtype=np.complex128)
        v = np.asarray(v, dtype=np.complex128)
        vals = np.array([np.conj(w) @ m @ v for m in self.samples])
        n = self.grid.n
        return Kernel2(self.grid, np.tril(np.broadcast_to(vals[:, None], (n, n))))


StarVec = tuple  # tuple[StarDist, ...]


def const_vec(grid: TimeGrid, x, conj: bool = False) -> StarVec:
    """``x 1_*`` as a StarVec (``conj`` gives the row vector ``x^H 1_*``)."""
    x = np.asarray(x, dtype=np.complex128)
    if conj:
        x = np.conj(x)
    return tuple(dstar.delta(grid, 0, c) if c != 0 else dstar.zero(grid) for c in x)


def star_matvec(A: MatrixFn, v: StarVec) -> StarVec:
    """Entry ``i`` is ``sum_j A_ij * v_j``."""
    if len(v) != A.N:
        raise ValueError("dimension mismatch")
    out = []
    for i in range(A.N):
        terms = [star(A.entry(i, j), v[j]) for j in range(A.N)
                 if A.kernel(i, j) is not None and _nonzero(v[j])]
        out.append(sum_dists(A.grid, terms))
    return tuple(out)


def vec_star(w: StarVec, A: MatrixFn) -> StarVec:
    """Row vector times matrix: entry ``j`` is ``sum_i w_i * A_ij``."""
    if len(w) != A.N:
        raise ValueError("dimension mismatch")
    out = []
    for j in range(A.N):
        terms = [star(w[i], A.entry(i, j)) for i in range(A.N)
                 if A.kernel(i, j) is not None and _nonzero(w[i])]
        out.append(sum_dists(A.grid, terms))
    return tuple(out)


def star_dot(w: StarVec, v: StarVec) -> StarDist:
    grid = w[0].grid
    return sum_dists(grid, [star(a, b) for a, b in zip(w, v) if _nonzero(a) and _nonzero(b)])


def vec_sub(x: StarVec, y: StarVec) -> StarVec:
    return tuple(a - b for a, b in zip(x, y))


def vec_right(x: StarVec, d: StarDist) -> StarVec:
    """``x * d`` entrywise."""
    return tuple(star(a, d) if _nonzero(a) else a for a in x)


def vec_left(d: StarDist, x: StarVec) -> StarVec:
    """``d * x`` entrywise."""
    return tuple(star(d, a) if _nonzero(a) else a for a in x)


def vec_norm(x: StarVec) -> float:
    return max((norm(a) for a in x), default=0.0)


def _nonzero(d: StarDist) -> bool:
    return d.smooth is not None or bool(d.deltas)


@dataclass
class StepDiagnostics:
    step: int
    beta_diag_max: float = 0.0
    beta_jet_min: float = 0.0
    beta_jet_max: float = 0.0
    zero_crossings: list = field(default_factory=list)
    alpha_dropped_delta: float = 0.0
    beta_dropped_delta: float = 0.0


@dataclass
class LanczosReport:
    requested: int
    completed: int = 0
    steps: list = field(default_factory=list)
    breakdown: bool = False
    breakdown_step: int | None = None
    classification: str = "none"
    message: str = ""
    zero_crossing_times: list = field(default_factory=list)

    def to_dict(self):
        return {
            "requested": self.requested,
            "completed": self.completed,
            "breakdown": self.breakdown,
            "breakdown_step": self.breakdown_step,
            "classification": self.classification,
            "message": self.message,
            "zero_crossing_times": [float(x) for x in self.zero_crossing_times],
            "steps": [
                {
                    "step": s.step,
                    "beta_diag_max": float(s.beta_diag_max),
                    "beta_jet_min": float(s.beta_jet_min),
                    "beta_jet_max": float(s.beta_jet_max),
                    "zero_crossings": [int(i) for i in s.zero_crossings],
                    "alpha_dropped_delta": float(s.alpha_dropped_delta),
                    "beta_dropped_delta": float(s.beta_dropped_delta),
                }
                for s in self.steps
            ],
        }


@dataclass
class TriT:
    alphas: list  # StarDist
    betas: list  # StarDist, betas[k] is beta_{k+1}
    superdiag: str = DELTA_FORM
    beta_inverses: list = field(default_factory=list)

    @property
    def m(self) -> int:
        return len(self.alphas)

    @property
    def grid(self) -> TimeGrid:
        return self.alphas[0].grid

    def entry(self, i: int, j: int) -> StarDist | None:
        if i == j:
            return self.alphas[i]
        if j == i + 1:
            return identity(self.grid) if self.superdiag == DELTA_FORM \
                else dstar.theta_dist(self.grid)
        if i == j + 1:
            return self.betas[j]
        return None


def _smooth_projection(d: StarDist, what: str, tol: float, step: int):
    kern, dropped = dstar.split_smooth(d)
    scale = kern.sup()
    if dropped > tol * (1.0 + scale):
        raise ArithmeticError(
            f"{what} at step {step} has a delta part of size {dropped:.3g} "
            f"(smooth part {scale:.3g}); numerical rules are inconsistent")
    return kern, dropped


def _check_beta(beta: Kernel2, tols: Tolerances, diag: StepDiagnostics, report, grid,
                w_next, vhat):
    """Classify beta; returns True when the run must stop."""
    scale = beta.sup()
    diag.beta_diag_max = float(np.max(np.abs(beta.diagonal)))
    jet = jets.get(beta, 1, 0)
    ajet = np.abs(jet.values)
    diag.beta_jet_min = float(ajet.min())
    diag.beta_jet_max = float(ajet.max())
    if dstar.is_null(jet, scale, tols.null):
        wn, vn = vec_norm(w_next), vec_norm(vhat)
        null_w = wn < tols.null * (1.0 + scale)
        null_v = vn < tols.null * (1.0 + scale)
        report.breakdown = True
        report.breakdown_step = diag.step
        report.classification = "invariant-subspace" if (null_w and null_v) else "breakdown"
        report.message = (f"beta_{diag.step} is identically null; the usual Lanczos process "
                          f"breaks down at step {diag.step} for every sampled time")
        return True
    diag.zero_crossings = dstar.zero_crossings(jet, scale, tols.null)
    if diag.zero_crossings:
        report.zero_crossing_times.extend(grid.nodes[diag.zero_crossings])
        log.warning("beta_%d jet changes sign or vanishes near t=%s; consider restricting the "
                    "interval", diag.step, grid.nodes[diag.zero_crossings][:5])
    return False


def star_lanczos(A: MatrixFn, w, v, m: int, tols: Tolerances | None = None):
    """Run ``m`` iterations of the *-Lanczos recurrence.

    Returns ``(T, W, V, report)``. A breakdown stops the run early; the
    returned ``T`` then holds the completed iterations only.
    """
    tols = tols or Tolerances()
    grid = A.grid
    w = np.asarray(w, dtype=np.complex128)
    v = np.asarray(v, dtype=np.complex128)
    if w.shape != (A.N,) or v.shape != (A.N,):
        raise ValueError("w and v must have length N")
    if abs(np.vdot(w, v) - 1) > 1e-12:
        raise NormalizationError(f"need w^H v = 1, got {np.vdot(w, v)}")
    if not 1 <= m <= A.N:
        raise ValueError(f"need 1 <= m <= N={A.N}, got {m}")

    report = LanczosReport(requested=m)
    w0 = const_vec(grid, w, conj=True)
    v0 = const_vec(grid, v)
    W, V = [w0], [v0]
    Av0 = star_matvec(A, v0)
    alpha0 = dstar.smooth(A.bilinear(w, v))
    alphas, betas, inverses = [alpha0], [], []
    report.completed = 1
    Av_prev = Av0

    w_prev2 = None
    v_prev2 = None
    for n in range(1, m):
        diag = StepDiagnostics(step=n)
        report.steps.append(diag)
        a_prev = alphas[-1]
        w_prev, v_prev = W[-1], V[-1]
        w_next = vec_sub(vec_star(w_prev, A), vec_left(a_prev, w_prev))
        vhat = vec_sub(Av_prev, vec_right(v_prev, a_prev))
        if n == 1:
            m2 = star_dot(w0, star_matvec(A, Av0))
            beta_d = m2 - star(a_prev, a_prev)
        else:
            w_next = vec_sub(w_next, vec_left(betas[-1], w_prev2))
            vhat = vec_sub(vhat, v_prev2)
            beta_d = star_dot(w_next, Av_prev)
        beta, diag.beta_dropped_delta = _smooth_projection(beta_d, "beta", tols.smooth_proj, n)
        if _check_beta(beta, tols, diag, report, grid, w_next, vhat):
            break
        # zero diagonal is exact in theory; the measured residual stays in the report
        vals = beta.values.copy()
        np.fill_diagonal(vals, 0)
        beta = Kernel2(grid, vals)
        try:
            inv = dstar.star_inverse_smooth(beta, k=1, tol=tols.null, max_order=tols.max_order)
        except dstar.ZeroCrossingError as exc:
            report.breakdown = True
            report.breakdown_step = n
            report.classification = "zero-crossing"
            report.zero_crossing_times = [float(x) for x in exc.times]
            report.message = str(exc)
            break
        betas.append(dstar.smooth(beta))
        inverses.append(inv)
        v_next = vec_right(vhat, inv)
        W.append(w_next)
        V.append(v_next)
        w_prev2, v_prev2 = w_prev, v_prev
        Av_prev = star_matvec(A, v_next)
        alpha_d = star_dot(w_next, Av_prev)
        alpha, diag.alpha_dropped_delta = _smooth_projection(alpha_d, "alpha", tols.smooth_proj, n)
        alphas.append(dstar.smooth(alpha))
        report.completed = n + 1

    T = TriT(alphas, betas, DELTA_FORM, inverses)
    return T, W, V, report


def moments(A: MatrixFn, w, v, jmax: int) -> list[StarDist]:
    """``m_j = w^H A^{*j} v`` through the distribution algebra."""
    grid = A.grid
    wv = np.vdot(w, v)
    out = [dstar.scale(wv, identity(grid))]
    wrow = const_vec(grid, w, conj=True)
    x = const_vec(grid, v)
    for _ in range(jmax):
        x = star_matvec(A, x)
        out.append(star_dot(wrow, x))
    return out


def tri_moments(T: TriT, jmax: int) -> list[StarDist]:
    """``e_1^H T^{*j} e_1`` for ``j = 0..jmax``."""
    grid = T.grid
    m = T.m
    x = [identity(grid)] + [dstar.zero(grid) for _ in range(m - 1)]
    out = [x[0]]
    for _ in range(jmax):
        y = []
        for i in range(m):
            terms = []
            for k in (i - 1, i, i + 1):
                if 0 <= k < m and _nonzero(x[k]):
                    e = T.entry(i, k)
                    if e is not None and _nonzero(e):
                        terms.append(star(e, x[k]))
            y.append(sum_dists(grid, terms))
        x = y
        out.append(x[0])
    return out


def to_theta_form(T: TriT) -> TriT:
    """Equivalent tridiagonal with Theta on the superdiagonal.

    Conjugation by ``S = diag(1_*, Theta, Theta^{*2}, ...)`` keeps every
    ``(1,1)`` moment. The first beta becomes ``d beta_1/dt'``; deeper entries
    become ``delta^(k) * alpha_k * Theta^{*k}`` and
    ``delta^(k+1) * beta_{k+1} * Theta^{*k}``, all smooth.
    """
    if T.superdiag != DELTA_FORM:
        raise ValueError("expected a delta-form tridiagonal")
    grid = T.grid

    def conj(d: StarDist, left: int, right: int) -> StarDist:
        k = d.smooth_or_zero()
        if right:
            k = vcompose(k, theta_power(right, grid))
        if left == 1 and right == 0:
            return dstar.smooth(d_dtprime(k))
        out = star(dstar.delta(grid, left), dstar.smooth(k)) if left else dstar.smooth(k)
        return dstar.smooth(dstar.split_smooth(out)[0])

    alphas = [T.alphas[0]] + [conj(a, k, k) for k, a in enumerate(T.alphas) if k]
    betas = [conj(b, k + 1, k) for k, b in enumerate(T.betas)]
    return TriT(alphas, betas, THETA_FORM)


def biorthogonality_check(W: Sequence[StarVec], V: Sequence[StarVec]) -> np.ndarray:
    """``res[i, j] = || w_i^H * v_j - [i == j] 1_* ||``."""
    grid = W[0][0].grid
    res = np.zeros((len(W), len(V)))
    for i, wi in enumerate(W):
        for j, vj in enumerate(V):
            d = star_dot(wi, vj)
            if i == j:
                d = d - identity(grid)
            res[i, j] = norm(d)
    return res


@dataclass
class ProbeSample:
    index: int
    rho: float
    depth: int
    breakdown_step: int | None
    kind: str


@dataclass
class ProbeReport:
    samples: list
    max_depth: int
    N: int


def breakdown_probe(A: MatrixFn, w, v, sample_count: int, tol: float = 1e-10) -> ProbeReport:
    """Classical Lanczos on the frozen matrices ``A(rho)`` at evenly spaced nodes."""
    from .oracle import classical_lanczos

    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    n = A.grid.n
    idx = np.unique(np.round(np.linspace(0, n - 1, sample_count)).astype(int))
    out = []
    for i in idx:
        res = classical_lanczos(A.samples[i], w, v, A.N, tol=tol)
        out.append(ProbeSample(int(i), float(A.grid.nodes[i]), res.depth, res.breakdown_step,
                               res.kind))
    return ProbeReport(out, max(s.depth for s in out), A.N)
