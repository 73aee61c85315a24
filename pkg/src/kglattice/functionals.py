"""Polynomial functionals F[f] = sum_n t_n[f] on lattice field configurations.

Components are finite sums of symmetrised products of test functions and
two-slot kernels (see :mod:`kglattice.kernels`).  The deformed product
contracts pairs of slots through the propagator, the ideal of on-shell
vanishing functionals is tested componentwise on propagated sources, and
region embeddings act by zero extension and restriction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, RegionsNotDisjointError, SupportError
from .green import GreenOperators, band_source, source_battery
from .kernels import (
    BlockPair,
    DiagPair,
    NPointKernel,
    SlotMap,
    Term,
    Vec,
    map_factor,
    star_terms,
    term_derivative,
)
from .spacetime import LatticeSpacetime, PartitionOfUnity, causal_set, smooth_bump

DEFAULT_MAX_ORDER = 6
EQUIVALENCE_TOLERANCE = 1e-7
BATTERY_SIZE = 64
SCALE_FLOOR = 1e-8


@dataclass(frozen=True, eq=False)
class Functional:
    """Graded functional with components ``n -> tuple of Term``."""

    weights: np.ndarray
    components: dict = field(default_factory=dict)

    # construction ----------------------------------------------------------
    @classmethod
    def zero(cls, weights) -> "Functional":
        return cls(np.asarray(weights), {})

    @classmethod
    def unit(cls, weights, coef: complex = 1.0) -> "Functional":
        return cls(np.asarray(weights), {0: (Term(coef, ()),)})

    @classmethod
    def linear(cls, weights, v, coef: complex = 1.0) -> "Functional":
        return cls(np.asarray(weights), {1: (Term(coef, (Vec(np.asarray(v)),)),)})

    @classmethod
    def separable(cls, weights, vs, coef: complex = 1.0) -> "Functional":
        facs = tuple(Vec(np.asarray(v)) for v in vs)
        return cls(np.asarray(weights), {len(facs): (Term(coef, facs),)})

    @classmethod
    def diagonal(cls, weights, g, coef: complex = 1.0) -> "Functional":
        """Kernel ``g(x) delta(x - y)`` (the lattice Wick square when g is a bump)."""
        return cls(np.asarray(weights), {2: (Term(coef, (DiagPair(np.asarray(g)),)),)})

    @classmethod
    def dense2(cls, weights, K, coef: complex = 1.0) -> "Functional":
        """Two-point kernel given as a full matrix (symmetrised)."""
        return cls(np.asarray(weights), {2: (Term(coef, (BlockPair.from_dense(np.asarray(K)),)),)})

    @classmethod
    def from_terms(cls, weights, terms) -> "Functional":
        comps: dict[int, list] = {}
        for t in terms:
            if t.coef != 0:
                comps.setdefault(t.arity, []).append(t)
        return cls(np.asarray(weights), {n: tuple(ts) for n, ts in sorted(comps.items())})

    # structure -----------------------------------------------------------
    @property
    def order(self) -> int:
        return max((n for n, ts in self.components.items() if ts), default=0)

    @property
    def terms(self) -> list[Term]:
        return [t for n in sorted(self.components) for t in self.components[n]]

    def component(self, n: int) -> NPointKernel:
        return NPointKernel(n, tuple(self.components.get(n, ())), self.weights)

    def __add__(self, other: "Functional") -> "Functional":
        _check_same_domain(self, other)
        return Functional.from_terms(self.weights, self.terms + other.terms)

    def __sub__(self, other: "Functional") -> "Functional":
        return self + other.scaled(-1.0)

    def scaled(self, c: complex) -> "Functional":
        return Functional.from_terms(self.weights, [Term(c * t.coef, t.factors) for t in self.terms])

    # evaluation --------------------------------------------------------------
    def __call__(self, f) -> complex:
        return evaluate(self, f)


def _check_same_domain(F: Functional, G: Functional) -> None:
    if F.weights.shape != G.weights.shape or not np.array_equal(F.weights, G.weights):
        raise ValueError("functionals live on different lattices")


def evaluate(F: Functional, f) -> complex:
    f = np.ravel(f)
    return sum((t.value(F.weights, f) for t in F.terms), 0.0)


def evaluate_component(F: Functional, n: int, f) -> complex:
    return F.component(n).value(np.ravel(f))


def derivative(F: Functional, f, k: int) -> NPointKernel:
    """k-th functional derivative at ``f`` as an arity-k kernel."""
    f = np.ravel(f)
    out = []
    for t in F.terms:
        if t.arity >= k:
            out.extend(term_derivative(t, k, F.weights, f))
    return NPointKernel(k, tuple(out), F.weights)


def involution(F: Functional) -> Functional:
    return Functional.from_terms(F.weights, [t.conj() for t in F.terms])


def star(F: Functional, Fp: Functional, pairing_kernel: np.ndarray, max_order: int = DEFAULT_MAX_ORDER) -> Functional:
    """Deformed product with contraction kernel ``pairing_kernel(x, y)``.

    For the plain product pass ``G.kernel``; the Wick-deformed product uses
    ``E + 2iH`` (see :func:`kglattice.wick.star_H`).
    """
    _check_same_domain(F, Fp)
    out = []
    for a in F.terms:
        for b in Fp.terms:
            out.extend(star_terms(a, b, pairing_kernel, F.weights, max_order))
    return Functional.from_terms(F.weights, out)


def star_E(F: Functional, Fp: Functional, G: GreenOperators, max_order: int = DEFAULT_MAX_ORDER) -> Functional:
    return star(F, Fp, G.kernel, max_order)


def apply_slotwise(F: Functional, Z: SlotMap) -> Functional:
    """Apply a linear map on test functions to every slot of every term."""
    terms = [Term(t.coef, tuple(map_factor(fac, Z) for fac in t.factors)) for t in F.terms]
    return Functional.from_terms(F.weights, terms)


# --------------------------------------------------------------------------
# the ideal of on-shell vanishing functionals


def ideal_defect(
    F: Functional,
    G: GreenOperators,
    sample_count: int = BATTERY_SIZE,
    seed: int = 0,
    sources: np.ndarray | None = None,
) -> dict[int, float]:
    """Per-component relative size of ``t_n[E f]`` over a seeded battery.

    The value for ``n`` is ``max_s |t_n[E f_s]| / max_s |t_n|[|E f_s|]``,
    the absolute-value evaluation giving the scale.  ``t_0`` is reported as
    its modulus.
    """
    if sources is None:
        sources = source_battery(G.spacetime, sample_count, np.random.default_rng(seed))
    props = [G.apply(s) for s in sources]
    out = {}
    for n in sorted(F.components):
        comp = F.component(n)
        if n == 0:
            out[0] = float(abs(comp.value(props[0])))
            continue
        vals = [abs(comp.value(p)) for p in props]
        scale = max(comp.abs_value(p) for p in props)
        out[n] = float(max(vals) / scale) if scale > 0 else 0.0
    return out


def in_ideal(F: Functional, G: GreenOperators, tol: float = EQUIVALENCE_TOLERANCE, **kw) -> bool:
    d = ideal_defect(F, G, **kw)
    return all(v <= tol for v in d.values())


def equivalence_defect(F: Functional, Fp: Functional, G: GreenOperators, sample_count: int = BATTERY_SIZE,
                       seed: int = 0, sources: np.ndarray | None = None) -> float:
    """Relative gap ``max_s |(F - F')[E f_s]| / max_s (|F| + |F'|)[|E f_s|]``.

    Evaluated componentwise so that different orders cannot cancel.
    """
    if sources is None:
        sources = source_battery(G.spacetime, sample_count, np.random.default_rng(seed))
    props = [G.apply(s) for s in sources]
    D = F - Fp
    orders = sorted(set(F.components) | set(Fp.components))
    nums, dens = {}, {}
    for n in orders:
        dn, fn, gn = D.component(n), F.component(n), Fp.component(n)
        nums[n] = max(abs(dn.value(p)) for p in props)
        dens[n] = max(fn.abs_value(p) + gn.abs_value(p) for p in props)
    # components far below the overall scale are compared against that scale
    floor = SCALE_FLOOR * max(dens.values(), default=0.0)
    worst = 0.0
    for n in orders:
        den = max(dens[n], floor)
        if den > 0:
            worst = max(worst, nums[n] / den)
        elif nums[n] > 0:
            worst = np.inf
    return float(worst)


# --------------------------------------------------------------------------
# regions


def push_forward(F: Functional, O: np.ndarray, M: LatticeSpacetime) -> Functional:
    """Zero-extend a functional living on the points of ``O`` to all of ``M``."""
    O = np.ravel(np.asarray(O, dtype=bool))
    idx = np.flatnonzero(O)
    if idx.size != F.weights.size or not np.array_equal(M.weights[idx], F.weights):
        raise ValueError("functional does not live on the given region of M")
    return _push(F, idx, O.size, M.weights)


def _push(F: Functional, idx: np.ndarray, n: int, weights: np.ndarray) -> Functional:
    def ext(fac):
        if isinstance(fac, Vec):
            v = np.zeros(n, dtype=fac.v.dtype)
            v[idx] = fac.v
            return Vec(v)
        if isinstance(fac, DiagPair):
            g = np.zeros(n, dtype=fac.g.dtype)
            g[idx] = fac.g
            return DiagPair(g)
        return BlockPair(idx[fac.rows], idx[fac.cols], fac.A, n)

    return Functional.from_terms(weights, [Term(t.coef, tuple(ext(f) for f in t.factors)) for t in F.terms])


def pull_back(F: Functional, O: np.ndarray) -> Functional:
    """Restrict a functional whose kernels live inside ``O`` to the points of ``O``."""
    O = np.ravel(np.asarray(O, dtype=bool))
    idx = np.flatnonzero(O)
    local = -np.ones(O.size, dtype=int)
    local[idx] = np.arange(idx.size)

    def res(fac):
        supp = fac.support()
        if np.any(~O[supp]):
            raise SupportError("kernel support leaves the region")
        if isinstance(fac, Vec):
            return Vec(fac.v[idx])
        if isinstance(fac, DiagPair):
            return DiagPair(fac.g[idx])
        return BlockPair(local[fac.rows], local[fac.cols], fac.A, idx.size)

    return Functional.from_terms(F.weights[idx], [Term(t.coef, tuple(res(f) for f in t.factors)) for t in F.terms])


def kernel_support(F: Functional) -> np.ndarray:
    """Union of the supports of all factors, as a flat boolean mask."""
    mask = np.zeros(F.weights.size, dtype=bool)
    for t in F.terms:
        for fac in t.factors:
            mask[fac.support()] = True
    return mask


# --------------------------------------------------------------------------
# timeslice


def zeta_map(G: GreenOperators, chi: PartitionOfUnity) -> SlotMap:
    """The map ``t -> P chi_adv E t`` on test functions, cut to the band."""

    def apply(v):
        return band_source(G.P, chi, G.apply(v))

    def columns(S):
        basis = np.zeros((G.spacetime.size, S.size))
        basis[S, np.arange(S.size)] = 1.0
        return band_source(G.P, chi, G.apply(basis))

    return SlotMap(G.weights, apply=apply, columns=columns)


def timeslice_inverse(F: Functional, chi: PartitionOfUnity, G: GreenOperators) -> Functional:
    """Move every kernel into the partition band with ``zeta`` slot-wise."""
    return apply_slotwise(F, zeta_map(G, chi))


# --------------------------------------------------------------------------
# causality


def commutator_defect(
    F1: Functional,
    O1: np.ndarray,
    F2: Functional,
    O2: np.ndarray,
    G: GreenOperators,
    sample_count: int = 16,
    seed: int = 0,
) -> float:
    """Relative size of ``(F1 * F2 - F2 * F1)[E f]`` for causally disjoint regions."""
    M = G.spacetime
    O1 = np.asarray(O1, dtype=bool).reshape(M.shape)
    O2 = np.asarray(O2, dtype=bool).reshape(M.shape)
    if np.any(causal_set(M, O1, "both") & O2):
        raise RegionsNotDisjointError("regions are not causally disjoint")
    for F, O in ((F1, O1), (F2, O2)):
        if np.any(kernel_support(F) & ~O.ravel()):
            raise SupportError("functional is not localised in its region")
    C = star_E(F1, F2, G) - star_E(F2, F1, G)
    scale_F = star_E(F1, F2, G)
    sources = source_battery(M, sample_count, np.random.default_rng(seed))
    num = den = 0.0
    for s in sources:
        p = G.apply(s)
        num = max(num, abs(evaluate(C, p)))
        den = max(den, sum(t.abs_value(C.weights, p) for t in scale_F.terms))
    return float(num / den) if den > 0 else float(num)


# --------------------------------------------------------------------------
# literal text format


def read_functional(text: str | Path, M: LatticeSpacetime, base_dir: str | Path | None = None) -> Functional:
    """Parse the literal format, one term per line::

        <n> <kind> <coefficient> <slot spec> [<slot spec> ...]

    ``kind`` is ``scalar``, ``separable``, ``diagonal`` or ``dense2``.  Slot
    specs are ``bump:t0,x0,half_t,half_x`` or ``csv:<file>`` (a grid of
    Nt rows by Nx columns, or an N by N matrix for ``dense2``).  Blank lines
    and ``#`` comments are ignored.
    """
    if isinstance(text, Path) or (isinstance(text, str) and "\n" not in text and Path(text).is_file()):
        path = Path(text)
        base_dir = base_dir or path.parent
        text = path.read_text()
    base = Path(base_dir or ".")
    terms = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) < 3:
            raise ConfigError(f"line {lineno}: expected '<n> <kind> <coef> ...'")
        try:
            n = int(parts[0])
            coef = complex(parts[2].replace("i", "j"))
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from exc
        kind, specs = parts[1], parts[3:]
        if kind == "scalar":
            facs = ()
        elif kind == "separable":
            facs = tuple(Vec(_slot_function(s, M, base, lineno)) for s in specs)
        elif kind == "diagonal":
            if len(specs) != 1:
                raise ConfigError(f"line {lineno}: diagonal takes one weight function")
            facs = (DiagPair(_slot_function(specs[0], M, base, lineno)),)
        elif kind == "dense2":
            if len(specs) != 1 or not specs[0].startswith("csv:"):
                raise ConfigError(f"line {lineno}: dense2 takes one csv matrix")
            K = np.loadtxt(base / specs[0][4:], delimiter=",", ndmin=2)
            if K.shape != (M.size, M.size):
                raise ConfigError(f"line {lineno}: dense2 matrix must be {M.size}x{M.size}")
            facs = (BlockPair.from_dense(K),)
        else:
            raise ConfigError(f"line {lineno}: unknown kind {kind!r}")
        term = Term(coef, facs)
        if term.arity != n:
            raise ConfigError(f"line {lineno}: arity {term.arity} does not match n={n}")
        terms.append(term)
    return Functional.from_terms(M.weights, terms)


def _slot_function(spec: str, M: LatticeSpacetime, base: Path, lineno: int) -> np.ndarray:
    kind, _, arg = spec.partition(":")
    if kind == "bump":
        try:
            t0, x0, ht, hx = (float(a) for a in arg.split(","))
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad bump spec {spec!r}") from exc
        return smooth_bump(M, t0, x0, ht, hx).ravel()
    if kind == "csv":
        arr = np.loadtxt(base / arg, delimiter=",", ndmin=2)
        if arr.shape != M.shape:
            raise ConfigError(f"line {lineno}: grid csv must have shape {M.shape}")
        return arr.ravel()
    raise ConfigError(f"line {lineno}: unknown slot spec {spec!r}")
