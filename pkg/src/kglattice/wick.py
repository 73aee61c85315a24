"""Symmetric bisolutions, the H-deformed product and Wick transport.

A bisolution is stored as modes ``H(x, y) = sum_k c_k phi_k(x) phi_k(y)``
(a kernel with respect to the lattice measure).  Modes are weak solutions,
``sum_x w(x) phi_k(x) (P f)(x) = 0`` for compact ``f``, which is exactly the
bisolution condition ``H(P f, f') = 0`` in quadrature form.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DefectError
from .functionals import DEFAULT_MAX_ORDER, Functional, evaluate, star
from .green import GreenOperators, source_battery
from .kernels import Term, transport_terms

BISOLUTION_TOLERANCE = 1e-8


@dataclass(frozen=True, eq=False)
class Bisolution:
    modes: np.ndarray  # (N, r)
    coefs: np.ndarray  # (r,)
    defect: float = 0.0

    @property
    def rank(self) -> int:
        return self.coefs.size

    @cached_property
    def matrix(self) -> np.ndarray:
        """Dense kernel, symmetric bit for bit."""
        K = (self.modes * self.coefs) @ self.modes.T
        return 0.5 * (K + K.T)

    def pair(self, w: np.ndarray, f: np.ndarray, fp: np.ndarray):
        """``H(f, f') = sum w w f H f'``."""
        a = self.modes.T @ (w * f)
        b = self.modes.T @ (w * fp)
        return np.sum(self.coefs * a * b)

    def pair_abs(self, w, f, fp) -> float:
        a = np.abs(self.modes).T @ np.abs(w * f)
        b = np.abs(self.modes).T @ np.abs(w * fp)
        return float(np.sum(np.abs(self.coefs) * a * b))

    def minus(self, other: "Bisolution") -> "Bisolution":
        return Bisolution(
            np.hstack([self.modes, other.modes]),
            np.concatenate([self.coefs, -other.coefs]),
            self.defect + other.defect,
        )

    def same_as(self, other: "Bisolution") -> bool:
        return other is self or (
            self.modes.shape == other.modes.shape
            and np.array_equal(self.modes, other.modes)
            and np.array_equal(self.coefs, other.coefs)
        )


def zero_bisolution(n: int) -> Bisolution:
    return Bisolution(np.zeros((n, 0)), np.zeros(0))


def weak_solutions(G: GreenOperators, sources: np.ndarray) -> np.ndarray:
    """Columns ``-W^-1 E^T W g``: the dual propagator applied to each source.

    On a flat lattice this coincides with ``E g`` to rounding.
    """
    w = G.weights
    S = np.atleast_2d(sources).T
    return -G.apply_T(w[:, None] * S) / w[:, None]


def bisolution_defect(H: Bisolution, G: GreenOperators, count: int = 8, seed: int = 1) -> float:
    """max |H(P f, f')| / max |H|(|P f|, |f'|) over a seeded battery."""
    if H.rank == 0:
        return 0.0
    rng = np.random.default_rng(seed)
    fs = source_battery(G.spacetime, count, rng)
    w = G.weights
    P = G.P.matrix
    num = den = 0.0
    for f in fs:
        Pf = P @ f
        for fp in fs:
            num = max(num, abs(H.pair(w, Pf, fp)))
            den = max(den, H.pair_abs(w, Pf, fp))
    return float(num / den) if den > 0 else 0.0


def make_bisolution(G: GreenOperators, spec: str | tuple = "zero", tol: float = BISOLUTION_TOLERANCE) -> Bisolution:
    """Build ``zero`` or ``("mode_sum", rank, seed)`` bisolutions."""
    n = G.spacetime.size
    if spec == "zero":
        return zero_bisolution(n)
    kind, rank, seed = spec
    if kind != "mode_sum":
        raise ValueError(f"unknown bisolution spec {spec!r}")
    rng = np.random.default_rng(seed)
    g = source_battery(G.spacetime, rank, rng)
    modes = weak_solutions(G, g)
    coefs = rng.normal(size=rank)
    H = Bisolution(modes, coefs)
    return checked(H, G, tol)


def checked(H: Bisolution, G: GreenOperators, tol: float = BISOLUTION_TOLERANCE) -> Bisolution:
    d = bisolution_defect(H, G)
    if d > tol:
        raise DefectError(f"bisolution defect {d:.3e} exceeds {tol:.1e}")
    return Bisolution(H.modes, H.coefs, d)


# --------------------------------------------------------------------------
# products and transport


def pairing_kernel(G: GreenOperators, H: Bisolution) -> np.ndarray:
    """``E + 2iH`` as a kernel; exactly ``E`` when H has rank zero."""
    if H.rank == 0:
        return G.kernel
    return G.kernel + 2j * H.matrix


def star_H(F: Functional, Fp: Functional, H: Bisolution, G: GreenOperators,
           max_order: int = DEFAULT_MAX_ORDER) -> Functional:
    return star(F, Fp, pairing_kernel(G, H), max_order)


def lambda_transport(F: Functional, H: Bisolution, Hp: Bisolution) -> Functional:
    """Move a functional from the H presentation to the H' presentation.

    Pairs of slots are contracted against ``H - H'`` with weight
    ``1 / (2^n n!)`` for n pairs.
    """
    if H.same_as(Hp):
        return F
    D = H.matrix - Hp.matrix
    terms = []
    for t in F.terms:
        terms.extend(transport_terms(t, D, F.weights))
    return Functional.from_terms(F.weights, terms)


def intertwine_check(
    F: Functional,
    Fp: Functional,
    H: Bisolution,
    Hp: Bisolution,
    G: GreenOperators,
    samples: int = 8,
    seed: int = 0,
) -> float:
    """Relative gap between ``F *_H F'`` and ``lam^-1(lam F *_H' lam F')``."""
    lhs = star_H(F, Fp, H, G)
    rhs = lambda_transport(
        star_H(lambda_transport(F, H, Hp), lambda_transport(Fp, H, Hp), Hp, G), Hp, H
    )
    rng = np.random.default_rng(seed)
    fields = [0.3 * rng.normal(size=G.spacetime.size) for _ in range(samples)]
    num = den = 0.0
    for f in fields:
        a, b = evaluate(lhs, f), evaluate(rhs, f)
        num = max(num, abs(a - b))
        den = max(den, sum(t.abs_value(lhs.weights, f) for t in lhs.terms))
    return float(num / den) if den > 0 else float(num)


def wick_square_oracle(g: np.ndarray, f: np.ndarray, K: np.ndarray, w: np.ndarray) -> complex:
    """Direct double sum for ``(t2 *_K t2)[f]`` with ``t2 = g(x) delta(x - y)``."""
    gf = w * g * f
    gw = w * g
    return np.sum(w * g * f * f) ** 2 + 2j * (gf @ K @ gf) - 0.5 * (gw @ (K * K) @ gw)


# --------------------------------------------------------------------------
# families


@dataclass(frozen=True, eq=False)
class WickFamily:
    """All presentations of one element, stored as a single base entry."""

    base_H: Bisolution
    base_element: Functional


def family_entry(W: WickFamily, Hp: Bisolution) -> Functional:
    return lambda_transport(W.base_element, W.base_H, Hp)


def rebase(W: WickFamily, Hp: Bisolution) -> WickFamily:
    return WickFamily(Hp, family_entry(W, Hp))


# --------------------------------------------------------------------------
# transport along a metric perturbation


def transport_modes(modes: np.ndarray, ctx) -> tuple[np.ndarray, np.ndarray]:
    """Push weak-solution modes on M through M[h] and back.

    Returns ``(intermediate, final)``: the M[h] weak solutions agreeing with
    the input in the past slab, and the M weak solutions agreeing with those
    in the future slab.
    """
    from .green import dual_propagate

    w, wh = ctx.M.weights, ctx.M_h.weights
    d0 = (w[:, None] * modes).T
    d1 = dual_propagate(ctx.G_h, ctx.chi_minus, ctx.eta_minus, d0, P_cut=ctx.G.P)
    d2 = dual_propagate(ctx.G, ctx.chi_plus, ctx.eta_plus, d1, P_cut=ctx.G_h.P)
    return (d1 / wh).T, (d2 / w).T


def transported_bisolution(H: Bisolution, ctx, tol: float = BISOLUTION_TOLERANCE,
                           return_intermediate: bool = False):
    """The bisolution on M obtained by evolving H through the perturbed region."""
    if H.rank == 0:
        out = H
        mid = H
    else:
        mid_modes, new_modes = transport_modes(H.modes, ctx)
        out = checked(Bisolution(new_modes, H.coefs), ctx.G, tol)
        mid = Bisolution(mid_modes, H.coefs)
    return (out, mid) if return_intermediate else out


__all__ = [
    "Bisolution",
    "WickFamily",
    "bisolution_defect",
    "family_entry",
    "intertwine_check",
    "lambda_transport",
    "make_bisolution",
    "pairing_kernel",
    "rebase",
    "star_H",
    "transported_bisolution",
    "weak_solutions",
    "wick_square_oracle",
    "zero_bisolution",
    "Term",
]
