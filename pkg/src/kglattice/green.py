"""Advanced and retarded Green operators of the lattice Klein-Gordon operator.

Sign conventions: ``E_plus`` propagates into the causal future of the source
(zero data on the first two slices) and ``E_minus`` into the causal past
(zero data on the last two slices).  The propagator is ``E = E_minus -
E_plus``.  With this choice ``E P chi_adv E t = E t`` holds for a cutoff
``chi_adv`` that equals one in the past.

All matrices here act on grid *functions*: ``(E f)(x) = sum_y E[x, y] f(y)``.
The kernel with respect to the volume measure is ``E[x, y] / w(y)``.  Test
functions are sources on the interior rows ``1..Nt-2``; values on the first
and last slice are ignored by the solves.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import BandError, GeometryError, NotASolutionError, NotAWeakSolutionError, SolveError
from .kleingordon import KGOperator
from .spacetime import END_SLABS, LatticeSpacetime, PartitionOfUnity, smooth_bump, smoothstep_profile

SOLVER_TOLERANCE = 1e-8


class _SliceBlocks:
    """Time-marching solver for the banded block structure of P.

    Row ``j`` of P couples slices ``j-1, j, j+1``.  Marching forward solves
    with the block on slice ``j+1`` and backward with the block on ``j-1``;
    the transposed systems are marched in the opposite order.  Blocks are
    diagonal for diagonal metrics, so supports stay exact.
    """

    def __init__(self, P: KGOperator):
        M = P.spacetime
        self.Nt, self.Nx = M.Nt, M.Nx
        A = P.matrix.tocsr()
        Nx = self.Nx

        def block(j, k):
            return A[j * Nx : (j + 1) * Nx, k * Nx : (k + 1) * Nx].tocsr()

        self.A = {(j, k): block(j, k) for j in range(1, self.Nt - 1) for k in (j - 1, j, j + 1)}
        self.up = {j: _factor(self.A[j, j + 1]) for j in range(1, self.Nt - 1)}
        self.down = {j: _factor(self.A[j, j - 1]) for j in range(1, self.Nt - 1)}

    def _blk(self, j, k):
        return self.A.get((j, k))

    def future(self, f):
        """Solution vanishing on slices 0, 1 with P u = f on rows 1..Nt-2."""
        u = np.zeros_like(f)
        for j in range(1, self.Nt - 1):
            r = f[j] - self.A[j, j] @ u[j] - self.A[j, j - 1] @ u[j - 1]
            u[j + 1] = _lu_solve(self.up[j], r, "N")
        return u

    def past(self, f):
        u = np.zeros_like(f)
        for j in range(self.Nt - 2, 0, -1):
            r = f[j] - self.A[j, j] @ u[j] - self.A[j, j + 1] @ u[j + 1]
            u[j - 1] = _lu_solve(self.down[j], r, "N")
        return u

    def cauchy(self, j0, a, b):
        """Homogeneous solution with ``u[j0] = a`` and ``u[j0 + 1] = b``."""
        u = np.zeros((self.Nt,) + a.shape, dtype=np.result_type(a, b, float))
        u[j0], u[j0 + 1] = a, b
        for j in range(j0 + 1, self.Nt - 1):
            r = -(self.A[j, j] @ u[j]) - self.A[j, j - 1] @ u[j - 1]
            u[j + 1] = _lu_solve(self.up[j], r, "N")
        for j in range(j0, 0, -1):
            r = -(self.A[j, j] @ u[j]) - self.A[j, j + 1] @ u[j + 1]
            u[j - 1] = _lu_solve(self.down[j], r, "N")
        return u

    def future_T(self, g):
        """Transpose of ``future``: result lives on rows 1..Nt-2."""
        y = np.zeros_like(g)
        for c in range(self.Nt - 1, 1, -1):
            r = g[c].copy()
            for j in (c, c + 1):
                if 1 <= j <= self.Nt - 2:
                    r -= self.A[j, c].T @ y[j]
            y[c - 1] = _lu_solve(self.up[c - 1], r, "T")
        return y

    def past_T(self, g):
        y = np.zeros_like(g)
        for c in range(0, self.Nt - 2):
            r = g[c].copy()
            for j in (c - 1, c):
                if 1 <= j <= self.Nt - 2:
                    r -= self.A[j, c].T @ y[j]
            y[c + 1] = _lu_solve(self.down[c + 1], r, "T")
        return y


def _factor(A: sp.spmatrix) -> spla.SuperLU:
    try:
        lu = spla.splu(sp.csc_matrix(A))
    except RuntimeError as exc:
        raise SolveError(f"time-stepping block is singular: {exc}") from exc
    diag = np.abs(lu.U.diagonal())
    if diag.min() <= 1e-14 * diag.max():
        raise SolveError("time-stepping block is numerically singular")
    return lu


@dataclass(frozen=True, eq=False)
class GreenOperators:
    """Green operators for one Klein-Gordon operator.

    Dense matrices are assembled on first access; ``apply_*`` methods march
    the sparse slice blocks directly and are cheap.
    """

    P: KGOperator
    _blocks: _SliceBlocks = field(repr=False)
    tolerance: float = SOLVER_TOLERANCE

    @property
    def spacetime(self) -> LatticeSpacetime:
        return self.P.spacetime

    @property
    def weights(self) -> np.ndarray:
        return self.spacetime.weights

    # matrix-free application ----------------------------------------------
    def _run(self, method, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f)
        M = self.spacetime
        sl = f.reshape(M.Nt, M.Nx, -1)
        sl = sl.astype(np.result_type(sl.dtype, float))
        return method(sl).reshape(f.shape)

    def apply_plus(self, f: np.ndarray) -> np.ndarray:
        return self._run(self._blocks.future, f)

    def apply_minus(self, f: np.ndarray) -> np.ndarray:
        return self._run(self._blocks.past, f)

    def apply(self, f: np.ndarray) -> np.ndarray:
        return self.apply_minus(f) - self.apply_plus(f)

    def apply_plus_T(self, g: np.ndarray) -> np.ndarray:
        """Plain matrix transpose of ``E_plus`` applied to ``g``."""
        return self._run(self._blocks.future_T, g)

    def apply_minus_T(self, g: np.ndarray) -> np.ndarray:
        return self._run(self._blocks.past_T, g)

    def apply_T(self, g: np.ndarray) -> np.ndarray:
        return self.apply_minus_T(g) - self.apply_plus_T(g)

    def evolve(self, j0: int, first: np.ndarray, second: np.ndarray) -> np.ndarray:
        """Solution of ``P u = 0`` with data on slices ``j0`` and ``j0 + 1``."""
        M = self.spacetime
        if not 0 <= j0 < M.Nt - 1:
            raise ValueError("data slices must lie on the grid")
        return self._blocks.cauchy(j0, np.asarray(first), np.asarray(second)).reshape(-1)

    # dense matrices --------------------------------------------------------
    @cached_property
    def E_plus(self) -> np.ndarray:
        return self.apply_plus(np.eye(self.spacetime.size))

    @cached_property
    def E_minus(self) -> np.ndarray:
        return self.apply_minus(np.eye(self.spacetime.size))

    @cached_property
    def E(self) -> np.ndarray:
        return self.E_minus - self.E_plus

    @cached_property
    def kernel(self) -> np.ndarray:
        """E(x, y) with respect to the volume measure."""
        return self.E / self.weights[None, :]


def _lu_solve(lu: spla.SuperLU, rhs: np.ndarray, trans: str) -> np.ndarray:
    if np.iscomplexobj(rhs):
        return lu.solve(np.ascontiguousarray(rhs.real), trans=trans) + 1j * lu.solve(
            np.ascontiguousarray(rhs.imag), trans=trans
        )
    return lu.solve(np.ascontiguousarray(rhs), trans=trans)


def build_green(P: KGOperator, check_sources: int = 8, seed: int = 0) -> GreenOperators:
    """Factor the time-stepping blocks and record the achieved residual."""
    G = GreenOperators(P, _SliceBlocks(P))
    if check_sources:
        rng = np.random.default_rng(seed)
        res = green_residual(G, source_battery(P.spacetime, check_sources, rng))
        if not np.isfinite(res) or res > SOLVER_TOLERANCE:
            raise SolveError(f"Green residual {res:.3e} exceeds {SOLVER_TOLERANCE:.1e}")
        object.__setattr__(G, "tolerance", max(res, 1e-15))
    return G


# --------------------------------------------------------------------------
# batteries and measurements


def source_battery(M: LatticeSpacetime, count: int, rng: np.random.Generator, margin: int = END_SLABS) -> np.ndarray:
    """Smooth random compact sources, shape ``(count, Nt*Nx)``.

    Each source is a sum of two cos^2 bumps placed well inside the slices
    ``margin..Nt-1-margin``.
    """
    T = (M.Nt - 1) * M.dt
    L = M.Nx * M.dx
    room = 0.5 * (T - 2 * margin * M.dt)
    if room <= M.dt:
        raise GeometryError(f"grid with {M.Nt} slices leaves no room for sources inside margin {margin}")
    out = np.zeros((count, M.size))
    for k in range(count):
        f = np.zeros(M.shape)
        for _ in range(2):
            ht = min(rng.uniform(0.15, 0.3) * T, room)
            hx = rng.uniform(0.1, 0.25) * L
            lo = margin * M.dt + ht
            hi = T - margin * M.dt - ht
            t0 = rng.uniform(lo, hi)
            x0 = rng.uniform(0, L)
            f += rng.normal() * smooth_bump(M, t0, x0, ht, hx)
        out[k] = f.ravel()
    return out


def green_residual(G: GreenOperators, sources: np.ndarray) -> float:
    """max over sources of ||P E^pm f - f||_inf / ||f||_inf on interior rows."""
    P = G.P.matrix
    Nx = G.spacetime.Nx
    rows = slice(Nx, G.spacetime.size - Nx)
    worst = 0.0
    for f in np.atleast_2d(sources):
        scale = np.max(np.abs(f))
        for sol in (G.apply_plus(f), G.apply_minus(f)):
            r = (P @ sol - f)[rows]
            worst = max(worst, float(np.max(np.abs(r)) / scale))
    return worst


def antisymmetry_defect(G: GreenOperators, columns: np.ndarray | None = None) -> float:
    """max|W E + (W E)^T| / max|W E| over the chosen source columns.

    Columns default to every point at least ``END_SLABS`` slices from the
    temporal ends; the rows are restricted to the same window.
    """
    M = G.spacetime
    w = G.weights
    window = np.arange(END_SLABS * M.Nx, M.size - END_SLABS * M.Nx)
    if columns is None:
        columns = window
    basis = np.zeros((M.size, len(columns)))
    basis[columns, np.arange(len(columns))] = 1.0
    WE_cols = w[:, None] * G.apply(basis)  # (W E)[:, c]
    WE_rows = G.apply_T(w[:, None] * basis)  # ((W E)^T)[:, c] = E^T W e_c
    diff = (WE_cols + WE_rows)[window]
    return float(np.max(np.abs(diff)) / np.max(np.abs(WE_cols[window])))


def pair_E(G: GreenOperators, f: np.ndarray, fp: np.ndarray) -> complex | float:
    """Quadrature pairing sum_x w(x) f(x) (E f')(x)."""
    val = np.sum(G.weights * np.ravel(f) * np.ravel(G.apply(np.ravel(fp))))
    return val


# --------------------------------------------------------------------------
# solutions and sources


def _relative_residual(P: KGOperator, phi: np.ndarray) -> float:
    rows = np.arange(P.spacetime.Nx, P.spacetime.size - P.spacetime.Nx)
    A = P.matrix
    res = np.abs((A @ phi)[rows])
    scale = (abs(A) @ np.abs(phi))[rows]
    top = float(np.max(scale)) if scale.size else 0.0
    return float(np.max(res) / top) if top > 0 else 0.0


def solution_to_source(G: GreenOperators, chi: PartitionOfUnity, phi: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    """Source ``f = P(chi_adv * phi)`` cut to the transition band, with ``E f = phi``."""
    phi = np.ravel(phi)
    if _relative_residual(G.P, phi) > tol:
        raise NotASolutionError("field does not satisfy the Klein-Gordon equation on interior rows")
    return band_source(G.P, chi, phi)


def band_source(P: KGOperator, chi: PartitionOfUnity, u: np.ndarray) -> np.ndarray:
    """``P(chi_adv u)`` evaluated on the rows of the transition band only.

    For a solution ``u`` the remaining rows vanish identically; they are
    not computed, so the support is exact.  Accepts ``(N,)`` or ``(N, k)``.
    """
    u = np.asarray(u)
    flat = u.reshape(P.spacetime.size, -1)
    f = P.interior @ (chi.chi_adv.reshape(-1, 1) * flat)
    f = np.where(chi.band_mask.reshape(-1, 1), f, 0.0)
    return f.reshape(u.shape)


def cutoff_profile(M: LatticeSpacetime, eta_band: tuple[int, int]) -> np.ndarray:
    """Time cutoff rising from 0 (``j <= lo``) to 1 (``j >= hi``)."""
    lo, hi = eta_band
    if not (1 <= lo < hi < M.Nt - 1):
        raise BandError(f"cutoff band {eta_band} must satisfy 1 <= lo < hi < Nt-1")
    prof = 1.0 - smoothstep_profile(M.Nt, lo, hi)
    return np.repeat(prof[:, None], M.Nx, axis=1).ravel()


def weak_solution_residual(P: KGOperator, u: np.ndarray) -> float:
    """Relative size of u[P g] over compact g supported in slices 2..Nt-3."""
    M = P.spacetime
    Pi = P.interior
    wu = M.weights * np.ravel(u)
    cols = np.arange(2 * M.Nx, M.size - 2 * M.Nx)
    res = np.abs(Pi.T @ wu)[cols]
    scale = (abs(Pi).T @ np.abs(wu))[cols]
    top = float(np.max(scale))
    return float(np.max(res) / top) if top > 0 else 0.0


def dual_propagate(G: GreenOperators, chi: PartitionOfUnity, eta: np.ndarray, density: np.ndarray,
                   P_cut: KGOperator | None = None) -> np.ndarray:
    """Covector map ``d -> -E^T eta P^T chi d`` (the dual reconstruction).

    ``density`` holds covectors (``u[f] = density . f``) as rows or a single
    vector.  ``P_cut`` is the operator whose transpose multiplies after the
    cutoff; it defaults to the operator ``G`` was built from.
    """
    P_cut = P_cut or G.P
    d = np.asarray(density)
    flat = d.reshape(-1, G.spacetime.size).T  # (n, k)
    chi_v = chi.chi_adv.ravel()[:, None]
    step = eta[:, None] * (P_cut.interior.T @ (chi_v * flat))
    out = -G.apply_T(step)
    return out.T.reshape(d.shape)


def weak_solution_reconstruct(
    G: GreenOperators,
    chi: PartitionOfUnity,
    eta_band: tuple[int, int],
    u: np.ndarray,
    tol: float = 1e-8,
) -> np.ndarray:
    """Rebuild a weak solution from its cutoff data near the partition band.

    Computes the dual of ``chi P eta E`` on ``u`` using transposed matrices.
    The cutoff ``eta`` must vanish on the first two slices and equal one from
    the partition band onwards.
    """
    M = G.spacetime
    if eta_band[1] > chi.band[0]:
        raise BandError("cutoff band must end before the partition band starts")
    u = np.ravel(u)
    if weak_solution_residual(G.P, u) > tol:
        raise NotAWeakSolutionError("u[P g] does not vanish on compact test functions")
    eta = cutoff_profile(M, eta_band)
    density = M.weights * u
    return dual_propagate(G, chi, eta, density) / M.weights
