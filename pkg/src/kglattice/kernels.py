"""Symmetric n-point kernels built from one- and two-slot factors.

A :class:`Term` is ``coef * Sym(A_1 (x) ... (x) A_m)`` where each factor is a
test function (:class:`Vec`, one slot) or a symmetric two-slot kernel
(:class:`DiagPair` for ``g(x) delta(x-y)`` and :class:`BlockPair` for a
dense block).  Kernels are densities with respect to the lattice measure:
a one-slot factor ``v`` pairs with a field as ``sum_x w(x) v(x) f(x)``.

Contractions of slots through two-point kernels (the propagator in star
products, ``H - H'`` in Wick transport) form graphs whose connected
components are paths and cycles, because no factor has more than two slots.
:func:`contract` reduces such a graph to a scalar and new factors.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations, permutations
from math import factorial

import numpy as np

Array = np.ndarray


# --------------------------------------------------------------------------
# factors


@dataclass(frozen=True, eq=False)
class Vec:
    v: Array
    slots = 1

    def value(self, w: Array, f: Array):
        return np.sum(w * self.v * f)

    def abs_value(self, w: Array, f: Array) -> float:
        return float(np.sum(w * np.abs(self.v) * np.abs(f)))

    def conj(self) -> "Vec":
        return Vec(np.conj(self.v))

    def support(self) -> Array:
        return np.flatnonzero(self.v)


@dataclass(frozen=True, eq=False)
class DiagPair:
    """Kernel ``g(x) delta(x - y)``: pairs as ``sum_x w g f f'``."""

    g: Array
    slots = 2

    def value(self, w: Array, f: Array):
        return np.sum(w * self.g * f * f)

    def abs_value(self, w: Array, f: Array) -> float:
        return float(np.sum(w * np.abs(self.g) * np.abs(f) ** 2))

    def apply(self, w: Array, c: Array) -> Array:
        """``sum_y c(y) w(y) K(y, z)`` for vectors or row-stacked matrices."""
        return c * self.g

    def conj(self) -> "DiagPair":
        return DiagPair(np.conj(self.g))

    def support(self) -> Array:
        return np.flatnonzero(self.g)

    def dense(self, w: Array) -> Array:
        return np.diag(self.g / w)


@dataclass(frozen=True, eq=False)
class BlockPair:
    """Symmetrised kernel ``(A + A^T)/2`` with ``A`` supported on ``rows x cols``."""

    rows: Array
    cols: Array
    A: Array
    n: int
    slots = 2

    def value(self, w: Array, f: Array):
        return (w[self.rows] * f[self.rows]) @ self.A @ (w[self.cols] * f[self.cols])

    def abs_value(self, w: Array, f: Array) -> float:
        a = np.abs(w[self.rows] * f[self.rows])
        b = np.abs(w[self.cols] * f[self.cols])
        return float(a @ np.abs(self.A) @ b)

    def apply(self, w: Array, c: Array) -> Array:
        """``sum_y c(y) w(y) K(y, z)``; ``c`` is ``(n,)`` or ``(k, n)``."""
        wc = c * w
        out = np.zeros(c.shape, dtype=np.result_type(c, self.A))
        out[..., self.cols] += 0.5 * (wc[..., self.rows] @ self.A)
        out[..., self.rows] += 0.5 * (wc[..., self.cols] @ self.A.T)
        return out

    def conj(self) -> "BlockPair":
        return BlockPair(self.rows, self.cols, np.conj(self.A), self.n)

    def support(self) -> Array:
        return np.union1d(self.rows, self.cols)

    def dense(self, w: Array | None = None) -> Array:
        K = np.zeros((self.n, self.n), dtype=self.A.dtype)
        K[np.ix_(self.rows, self.cols)] += 0.5 * self.A
        K[np.ix_(self.cols, self.rows)] += 0.5 * self.A.T
        return K

    @staticmethod
    def from_dense(K: Array) -> "BlockPair":
        """Compress a full kernel matrix to its nonzero rows and columns."""
        nz_r = np.flatnonzero(np.any(K != 0, axis=1))
        nz_c = np.flatnonzero(np.any(K != 0, axis=0))
        return BlockPair(nz_r, nz_c, K[np.ix_(nz_r, nz_c)], K.shape[0])


Factor = Vec | DiagPair | BlockPair


def map_factor(fac: Factor, Z: "SlotMap") -> Factor:
    """Apply a linear map on test functions to every slot of a factor."""
    if isinstance(fac, Vec):
        return Vec(Z.apply(fac.v))
    S = fac.support()
    ZS = Z.columns(S)  # (n, |S|)
    if isinstance(fac, DiagPair):
        core = np.diag(fac.g[S] / Z.weights[S])
    else:
        core = fac.dense()[np.ix_(S, S)]
    K = ZS @ core @ ZS.T
    return BlockPair.from_dense(K)


class SlotMap:
    """Linear map on test functions given by a matrix or a column oracle."""

    def __init__(self, weights: Array, matrix: Array | None = None, columns=None, apply=None):
        self.weights = weights
        self._matrix = matrix
        self._columns = columns
        self._apply = apply

    def apply(self, v: Array) -> Array:
        if self._matrix is not None:
            return self._matrix @ v
        return self._apply(v)

    def columns(self, S: Array) -> Array:
        if self._matrix is not None:
            return self._matrix[:, S]
        return self._columns(S)


# --------------------------------------------------------------------------
# terms


@dataclass(frozen=True, eq=False)
class Term:
    coef: complex
    factors: tuple

    @property
    def arity(self) -> int:
        return sum(f.slots for f in self.factors)

    def value(self, w: Array, f: Array):
        out = self.coef
        for fac in self.factors:
            out = out * fac.value(w, f)
        return out

    def abs_value(self, w: Array, f: Array) -> float:
        out = abs(self.coef)
        for fac in self.factors:
            out *= fac.abs_value(w, f)
        return out

    def conj(self) -> "Term":
        return Term(np.conj(self.coef), tuple(f.conj() for f in self.factors))

    def slot_list(self) -> list[tuple[int, int]]:
        return [(i, s) for i, fac in enumerate(self.factors) for s in range(fac.slots)]


@dataclass(frozen=True, eq=False)
class NPointKernel:
    """Finite sum of symmetrised terms of a fixed arity."""

    n: int
    terms: tuple
    weights: Array

    def value(self, f: Array):
        return sum((t.value(self.weights, f) for t in self.terms), 0.0)

    def abs_value(self, f: Array) -> float:
        return sum(t.abs_value(self.weights, f) for t in self.terms)

    def dense(self) -> Array:
        """Materialise the kernel for ``n <= 2`` (vector or matrix)."""
        N = self.weights.size
        if self.n == 0:
            return np.asarray(sum((t.coef for t in self.terms), 0.0))
        if self.n == 1:
            out = np.zeros(N, dtype=complex)
            for t in self.terms:
                out += t.coef * t.factors[0].v
            return _real_if_close(out)
        if self.n == 2:
            out = np.zeros((N, N), dtype=complex)
            for t in self.terms:
                if len(t.factors) == 1:
                    out += t.coef * t.factors[0].dense(self.weights)
                else:
                    a, b = t.factors[0].v, t.factors[1].v
                    out += 0.5 * t.coef * (np.outer(a, b) + np.outer(b, a))
            return _real_if_close(out)
        raise ValueError("dense form only for arity <= 2")


def _real_if_close(a: Array) -> Array:
    return a.real.copy() if np.all(a.imag == 0) else a


# --------------------------------------------------------------------------
# derivatives


def _free_derivative(fac: Factor, d: int, w: Array, f: Array):
    """(scalar_or_None, new_factor_or_None, multiplicity) for ``d`` slots."""
    if d == 0:
        return fac.value(w, f), None
    if isinstance(fac, Vec):
        return 1.0, Vec(fac.v)
    if d == 1:
        return 2.0, Vec(fac.apply(w, f))
    return 2.0, fac


def term_derivative(term: Term, k: int, w: Array, f: Array) -> list[Term]:
    """k-th functional derivative of one term at ``f`` as arity-k terms."""
    caps = [fac.slots for fac in term.factors]
    out = []
    for ds in _compositions(k, caps):
        coef = term.coef * factorial(k)
        facs = []
        for fac, d in zip(term.factors, ds):
            scal, new = _free_derivative(fac, d, w, f)
            coef = coef * scal / factorial(d)
            if new is not None:
                facs.append(new)
        if coef != 0:
            out.append(Term(coef, tuple(facs)))
    return out


def _compositions(k: int, caps: list[int]):
    if not caps:
        if k == 0:
            yield ()
        return
    for d in range(min(k, caps[0]) + 1):
        for rest in _compositions(k - d, caps[1:]):
            yield (d,) + rest


# --------------------------------------------------------------------------
# contraction graphs


@dataclass
class _Edge:
    a: tuple[int, int]
    b: tuple[int, int]
    K: Array  # kernel matrix K(x_a, x_b) w.r.t. the measure


def contract(factors: list[Factor], edges: list[_Edge], w: Array) -> tuple[complex, list[Factor]]:
    """Reduce a contraction graph to (scalar, remaining factors)."""
    partner: dict[tuple[int, int], tuple[tuple[int, int], Array]] = {}
    for e in edges:
        partner[e.a] = (e.b, e.K)
        partner[e.b] = (e.a, e.K.T)
    used = set()
    scalar = 1.0 + 0j
    out: list[Factor] = []

    def walk(current, node, slot, stop=None):
        """Follow edges from ``(node, slot)`` carrying ``current`` (value at slot).

        Returns ``("scalar", v)`` at a one-slot end, ``("free", v)`` at a
        free two-slot end and ``("closed", v)`` on arrival at ``stop``.
        """
        while True:
            (nxt, nslot), K = partner[(node, slot)]
            used.add(nxt)
            current = (current * w) @ K  # sum_x c(x) w(x) K(x, y)
            if (nxt, nslot) == stop:
                return "closed", current
            fac = factors[nxt]
            if isinstance(fac, Vec):
                return "scalar", (current * w) @ fac.v
            nxt_free = (nxt, 1 - nslot)
            current = fac.apply(w, current)
            if nxt_free not in partner:
                return "free", current
            node, slot = nxt_free

    for i, fac in enumerate(factors):
        if i in used:
            continue
        slots_contracted = [(i, s) for s in range(fac.slots) if (i, s) in partner]
        if not slots_contracted:
            used.add(i)
            out.append(fac)
            continue
        if isinstance(fac, Vec):
            used.add(i)
            kind, val = walk(fac.v, i, 0)
            if kind == "scalar":
                scalar *= val
            else:
                out.append(Vec(val))
            continue
        if len(slots_contracted) == 2:
            continue  # interior of a path or part of a cycle; handled from an end
        # pair with one free slot: path starting at a free end
        used.add(i)
        cslot = slots_contracted[0][1]
        S = fac.support()
        rows = _pair_rows(fac, S, w)  # K(x_free, y) for x in S
        kind, val = walk(rows, i, cslot)
        if kind == "scalar":
            vec = np.zeros(w.size, dtype=np.result_type(val))
            vec[S] = val
            out.append(Vec(vec))
        else:
            out.append(_pair_from_rows(S, val, w.size))
    # cycles: remaining pairs with both slots contracted
    for i, fac in enumerate(factors):
        if i in used:
            continue
        used.add(i)
        S = fac.support()
        rows = _pair_rows(fac, S, w)  # K(x at slot 0, y at slot 1)
        kind, val = walk(rows, i, 1, stop=(i, 0))
        assert kind == "closed"
        scalar *= np.sum(w[S] * val[np.arange(S.size), S])
    return scalar, out


def _pair_rows(fac, S: Array, w: Array) -> Array:
    """Rows ``K(x, .)`` for ``x`` in ``S`` as a ``(|S|, n)`` array."""
    if isinstance(fac, DiagPair):
        rows = np.zeros((S.size, w.size), dtype=fac.g.dtype)
        rows[np.arange(S.size), S] = fac.g[S] / w[S]
        return rows
    return fac.dense()[S]


def _pair_from_rows(S: Array, val: Array, n: int) -> BlockPair:
    cols = np.flatnonzero(np.any(val != 0, axis=0))
    return BlockPair(S, cols, val[:, cols], n)


# --------------------------------------------------------------------------
# star products and Wick transport on terms


def star_terms(a: Term, b: Term, kernel: Array, w: Array, max_order: int) -> list[Term]:
    """All terms of ``a * b`` in the deformed product with contraction kernel.

    ``kernel`` is the two-point kernel ``K(x, y)`` (w.r.t. the measure) that
    links a slot of ``a`` to a slot of ``b``; the k-th order carries the
    weight ``i^k / (2^k k!)``.
    """
    out = []
    na, nb = a.arity, b.arity
    A_slots, B_slots = a.slot_list(), b.slot_list()
    offset = len(a.factors)
    factors = list(a.factors) + list(b.factors)
    for k in range(0, min(na, nb) + 1):
        arity = na + nb - 2 * k
        if arity > max_order:
            from .errors import ArityOverflowError

            raise ArityOverflowError(f"product of arity {arity} exceeds the cap {max_order}")
        pref = (1j**k) / (2**k * factorial(k)) * factorial(na) / factorial(na - k) * factorial(nb) / factorial(nb - k)
        configs: dict[tuple, int] = {}
        reps: dict[tuple, list] = {}
        total = 0
        for asub in combinations(range(na), k):
            for btup in permutations(range(nb), k):
                pairs = [(A_slots[i], B_slots[j]) for i, j in zip(asub, btup)]
                key = tuple(sorted((p[0][0], p[1][0]) for p in pairs))
                configs[key] = configs.get(key, 0) + 1
                reps.setdefault(key, pairs)
                total += 1
        for key, count in configs.items():
            pairs = reps[key]
            edges = [_Edge(pa, (pb[0] + offset, pb[1]), kernel) for pa, pb in pairs]
            scal, facs = contract(factors, edges, w)
            coef = a.coef * b.coef * pref * count / total * scal
            if coef != 0:
                out.append(Term(coef, tuple(facs)))
    return out


def transport_terms(a: Term, D: Array, w: Array) -> list[Term]:
    """Wick transport of one term: sum over n of 1/(2^n n!) <D^n, a^(2n)>."""
    out = [a]
    m = a.arity
    slots = a.slot_list()
    for n in range(1, m // 2 + 1):
        k = 2 * n
        pref = factorial(m) / factorial(m - k) / (2**n * factorial(n))
        configs: dict[tuple, int] = {}
        reps: dict[tuple, list] = {}
        total = 0
        for tup in permutations(range(m), k):
            pairs = [(slots[tup[2 * j]], slots[tup[2 * j + 1]]) for j in range(n)]
            key = tuple(sorted(tuple(sorted((p[0][0], p[1][0]))) for p in pairs))
            configs[key] = configs.get(key, 0) + 1
            reps.setdefault(key, pairs)
            total += 1
        for key, count in configs.items():
            edges = [_Edge(pa, pb, D) for pa, pb in reps[key]]
            scal, facs = contract(list(a.factors), edges, w)
            coef = a.coef * pref * count / total * scal
            if coef != 0:
                out.append(Term(coef, tuple(facs)))
    return out
