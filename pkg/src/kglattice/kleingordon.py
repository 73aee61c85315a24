"""The Klein-Gordon operator P = box_g + xi R + m^2 on a lattice spacetime.

The wave operator is discretised in product-rule form,

    box f = g^ab D_ab f + |g|^-1/2 D_a(|g|^1/2 g^ab) D_b f,

with three-point second differences, the four-corner mixed difference and
centred first differences.  On the flat metric the weighted matrix W P is
exactly symmetric; on curved metrics its asymmetry is a truncation error.
The first and last time slices use one-sided second-order stencils.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .spacetime import LatticeSpacetime


@dataclass(frozen=True)
class Coupling:
    xi: float = 0.0
    mass: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.xi) and np.isfinite(self.mass)):
            raise ValueError("coupling constants must be finite")
        if self.mass < 0:
            raise ValueError("mass must be non-negative")


# --------------------------------------------------------------------------
# one-dimensional difference matrices


def _time_first(n: int, h: float) -> sp.csr_matrix:
    d = sp.lil_matrix((n, n))
    for j in range(1, n - 1):
        d[j, j - 1] = -0.5 / h
        d[j, j + 1] = 0.5 / h
    d[0, 0:3] = np.array([-3.0, 4.0, -1.0]) / (2 * h)
    d[n - 1, n - 3 :] = np.array([1.0, -4.0, 3.0]) / (2 * h)
    return d.tocsr()


def _time_second(n: int, h: float) -> sp.csr_matrix:
    d = sp.lil_matrix((n, n))
    for j in range(1, n - 1):
        d[j, j - 1 : j + 2] = np.array([1.0, -2.0, 1.0]) / h**2
    d[0, 0:4] = np.array([2.0, -5.0, 4.0, -1.0]) / h**2
    d[n - 1, n - 4 :] = np.array([-1.0, 4.0, -5.0, 2.0]) / h**2
    return d.tocsr()


def _ring_first(n: int, h: float) -> sp.csr_matrix:
    e = np.ones(n)
    d = sp.diags([0.5 * e[:-1], -0.5 * e[:-1]], [1, -1], shape=(n, n), format="lil")
    d[0, n - 1] = -0.5
    d[n - 1, 0] = 0.5
    return (d / h).tocsr()


def _ring_second(n: int, h: float) -> sp.csr_matrix:
    e = np.ones(n)
    d = sp.diags([e[:-1], -2 * e, e[:-1]], [1, 0, -1], shape=(n, n), format="lil")
    d[0, n - 1] = 1.0
    d[n - 1, 0] = 1.0
    return (d / h**2).tocsr()


@dataclass(frozen=True)
class DifferenceOperators:
    """Sparse difference matrices on flattened grid fields."""

    t: sp.csr_matrix
    x: sp.csr_matrix
    tt: sp.csr_matrix
    xx: sp.csr_matrix
    tx: sp.csr_matrix

    @classmethod
    def on(cls, M: LatticeSpacetime) -> "DifferenceOperators":
        It = sp.identity(M.Nt, format="csr")
        Ix = sp.identity(M.Nx, format="csr")
        t1 = _time_first(M.Nt, M.dt)
        x1 = _ring_first(M.Nx, M.dx)
        return cls(
            t=sp.kron(t1, Ix, format="csr"),
            x=sp.kron(It, x1, format="csr"),
            tt=sp.kron(_time_second(M.Nt, M.dt), Ix, format="csr"),
            xx=sp.kron(It, _ring_second(M.Nx, M.dx), format="csr"),
            tx=sp.kron(t1, x1, format="csr"),
        )

    def first(self, a: int) -> sp.csr_matrix:
        return self.t if a == 0 else self.x

    def second(self, a: int, b: int) -> sp.csr_matrix:
        if a == b:
            return self.tt if a == 0 else self.xx
        return self.tx


def field_gradient(M: LatticeSpacetime, f: np.ndarray, D: DifferenceOperators | None = None) -> np.ndarray:
    """Centred partial derivatives, shape ``(2,) + f.shape[:2]``-compatible."""
    D = D or DifferenceOperators.on(M)
    flat = np.asarray(f).reshape(M.size, -1)
    out = np.stack([D.t @ flat, D.x @ flat])
    return out.reshape((2,) + np.shape(f))


# --------------------------------------------------------------------------
# curvature


def christoffel(M: LatticeSpacetime, D: DifferenceOperators | None = None) -> np.ndarray:
    """Gamma^a_bc with shape ``(Nt, Nx, 2, 2, 2)`` from centred differences."""
    g = M.metric
    ginv = M.inverse_metric()
    dg = field_gradient(M, g, D)  # dg[c, ..., a, b] = d_c g_ab
    dg = np.moveaxis(dg, 0, 2)  # (Nt, Nx, c, a, b)
    # Gamma_{d,bc} = 1/2 (d_b g_dc + d_c g_db - d_d g_bc)
    low = 0.5 * (
        np.einsum("...bdc->...dbc", dg)
        + np.einsum("...cdb->...dbc", dg)
        - dg
    )
    return np.einsum("...ad,...dbc->...abc", ginv, low)


def ricci_tensor(M: LatticeSpacetime, D: DifferenceOperators | None = None) -> np.ndarray:
    """R_bd = d_a Gamma^a_db - d_d Gamma^a_ab + Gamma^a_ae Gamma^e_db - Gamma^a_de Gamma^e_ab."""
    D = D or DifferenceOperators.on(M)
    gam = christoffel(M, D)
    dgam = np.moveaxis(field_gradient(M, gam, D), 0, 2)  # (..., c, a, b, d) = d_c Gamma^a_bd
    term1 = np.einsum("...aadb->...db", dgam)
    trace = np.einsum("...aab->...b", gam)  # Gamma^a_ab
    dtrace = np.moveaxis(field_gradient(M, trace, D), 0, 2)  # (..., d, b)
    term2 = np.einsum("...db->...bd", dtrace)
    term3 = np.einsum("...e,...edb->...db", trace, gam)
    term4 = np.einsum("...ade,...eab->...db", gam, gam)
    return term1 - term2 + term3 - term4


def ricci_scalar(M: LatticeSpacetime, D: DifferenceOperators | None = None) -> np.ndarray:
    """Scalar curvature on the grid, shape ``(Nt, Nx)``."""
    return np.einsum("...bd,...bd->...", M.inverse_metric(), ricci_tensor(M, D))


def einstein_tensor_upper(M: LatticeSpacetime, D: DifferenceOperators | None = None) -> np.ndarray:
    """G^ab = R^ab - R g^ab / 2; identically zero in two dimensions up to truncation."""
    ginv = M.inverse_metric()
    ric = ricci_tensor(M, D)
    R = np.einsum("...bd,...bd->...", ginv, ric)
    ric_up = np.einsum("...ac,...cd,...db->...ab", ginv, ric, ginv)
    return ric_up - 0.5 * R[..., None, None] * ginv


# --------------------------------------------------------------------------
# the operator


@dataclass(frozen=True, eq=False)
class KGOperator:
    """Sparse Klein-Gordon matrix acting on flattened grid functions."""

    matrix: sp.csr_matrix
    spacetime: LatticeSpacetime
    coupling: Coupling
    stencil_halo: int = 1

    def __call__(self, f: np.ndarray) -> np.ndarray:
        return self.apply(f)

    def apply(self, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f)
        out = self.matrix @ f.reshape(self.spacetime.size, -1)
        return out.reshape(f.shape)

    @property
    def interior_rows(self) -> np.ndarray:
        """Flat indices of rows that use centred stencils."""
        M = self.spacetime
        return np.arange(M.Nx, M.size - M.Nx)

    @property
    def interior(self) -> sp.csr_matrix:
        """The operator with its one-sided boundary rows set to zero."""
        M = self.spacetime
        keep = np.ones(M.size)
        keep[: M.Nx] = 0.0
        keep[-M.Nx :] = 0.0
        return sp.diags(keep) @ self.matrix


def wave_operator(M: LatticeSpacetime, D: DifferenceOperators | None = None) -> sp.csr_matrix:
    """Discrete box_g as a sparse matrix."""
    D = D or DifferenceOperators.on(M)
    ginv = M.inverse_metric().reshape(M.size, 2, 2)
    sqrtg = M.sqrt_det().ravel()
    dens = sqrtg[:, None, None] * ginv
    box = sp.csr_matrix((M.size, M.size))
    for a in range(2):
        for b in range(a, 2):
            mult = 1.0 if a == b else 2.0
            box = box + sp.diags(mult * ginv[:, a, b]) @ D.second(a, b)
    for b in range(2):
        drift = sum(D.first(a) @ dens[:, a, b] for a in range(2)) / sqrtg
        box = box + sp.diags(drift) @ D.first(b)
    return box.tocsr()


def assemble_P(M: LatticeSpacetime, c: Coupling) -> KGOperator:
    D = DifferenceOperators.on(M)
    mat = wave_operator(M, D)
    potential = c.mass**2 * np.ones(M.size)
    if c.xi != 0.0:
        potential = potential + c.xi * ricci_scalar(M, D).ravel()
    mat = (mat + sp.diags(potential)).tocsr()
    mat.eliminate_zeros()
    return KGOperator(mat, M, c)


def adjoint_defect(P: KGOperator) -> float:
    """max|WP - (WP)^T| / max|WP| on the block of interior points."""
    M = P.spacetime
    idx = P.interior_rows
    WP = (sp.diags(M.weights) @ P.matrix).tocsr()[idx][:, idx]
    scale = abs(WP).max()
    if scale == 0:
        return 0.0
    return float(abs(WP - WP.T).max() / scale)
