"""Relative Cauchy evolution on the lattice and its first derivative.

``beta[h] t = P_h chi_- E_h P chi_+ E t`` pulls a test function through the
perturbed region: the future cut ``chi_+`` sits above ``supp h`` and the past
cut ``chi_-`` below it.  Its derivative along ``h`` is compared with the
quadrature of ``h_ab T^ab`` built from lattice differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Literal

import numpy as np

from .errors import (
    ConstructionError,
    DecompositionError,
    GeometryError,
    NotASolutionError,
)
from .functionals import Functional, apply_slotwise, evaluate
from .green import (
    GreenOperators,
    _relative_residual,
    band_source,
    build_green,
    cutoff_profile,
    solution_to_source,
)
from .kernels import SlotMap
from .kleingordon import (
    Coupling,
    DifferenceOperators,
    assemble_P,
    christoffel,
    einstein_tensor_upper,
    field_gradient,
)
from .spacetime import (
    END_SLABS,
    LatticeSpacetime,
    MetricPerturbation,
    PartitionOfUnity,
    causal_set,
    dilate,
    make_partition,
    perturb,
    time_slab,
)
from .wick import Bisolution, WickFamily, family_entry, lambda_transport, transported_bisolution

SOLUTION_TOLERANCE = 1e-8
DEFAULT_STEPS = (0.08, 0.04, 0.02)
DEFAULT_ETA_BAND = (1, 2)

XiForm = Literal["hess_minus_box", "box_minus_hess"]
Band = tuple[int, int]


# --------------------------------------------------------------------------
# context


@dataclass(frozen=True, eq=False)
class RCEContext:
    M: LatticeSpacetime
    h: MetricPerturbation
    M_h: LatticeSpacetime
    coupling: Coupling
    G: GreenOperators
    G_h: GreenOperators
    chi_minus: PartitionOfUnity
    chi_plus: PartitionOfUnity
    slab_minus: np.ndarray
    slab_plus: np.ndarray
    eta_band: Band = DEFAULT_ETA_BAND

    @property
    def size(self) -> int:
        return self.M.size

    @cached_property
    def eta_minus(self) -> np.ndarray:
        return cutoff_profile(self.M, self.eta_band)

    @cached_property
    def eta_plus(self) -> np.ndarray:
        return cutoff_profile(self.M, self.eta_band)

    @cached_property
    def beta_matrix(self) -> np.ndarray:
        """``beta[h]`` as a dense matrix acting on test functions."""
        return beta(self, np.eye(self.size))

    def slot_map(self) -> SlotMap:
        def columns(S):
            basis = np.zeros((self.size, len(S)))
            basis[S, np.arange(len(S))] = 1.0
            return beta(self, basis)

        return SlotMap(self.M.weights, apply=lambda v: beta(self, v), columns=columns)

    def scaled(self, s: float) -> "RCEContext":
        """Same slabs and partitions for the perturbation ``s h``."""
        hs = self.h.scaled(s)
        M_h = perturb(self.M, hs)
        G_h = self.G if M_h is self.M else build_green(assemble_P(M_h, self.coupling), check_sources=0)
        return replace(self, h=hs, M_h=M_h, G_h=G_h)


def _time_extent(mask: np.ndarray) -> tuple[int, int] | None:
    rows = np.flatnonzero(mask.any(axis=1))
    if rows.size == 0:
        return None
    return int(rows[0]), int(rows[-1])


def default_bands(M: LatticeSpacetime, h: MetricPerturbation) -> tuple[Band, Band]:
    """Bands of ``~5 Nt/64`` slices just below and above ``supp h``."""
    width = max(2, int(round(5 * M.Nt / 64)))
    ext = _time_extent(h.support)
    a, b = ext if ext else (M.Nt // 2, M.Nt // 2)
    past_hi = a - 2
    past = (max(DEFAULT_ETA_BAND[1], past_hi - width), past_hi)
    fut_lo = b + 2
    fut = (fut_lo, min(M.Nt - END_SLABS, fut_lo + width))
    return past, fut


def make_rce_context(
    M: LatticeSpacetime,
    h: MetricPerturbation | np.ndarray,
    slab_margins: tuple[Band, Band] | None = None,
    coupling: Coupling = Coupling(),
    G: GreenOperators | None = None,
    eta_band: Band = DEFAULT_ETA_BAND,
) -> RCEContext:
    """Build slabs, partitions and both sets of Green operators.

    ``slab_margins`` gives the past and future transition bands as slice
    index pairs; by default they hug ``supp h`` from below and above.
    """
    if not isinstance(h, MetricPerturbation):
        h = MetricPerturbation(np.asarray(h, dtype=float))
    if h.h.shape != M.shape + (2, 2):
        raise GeometryError("perturbation shape does not match the grid")
    past, fut = slab_margins if slab_margins is not None else default_bands(M, h)
    for lo, hi in (past, fut):
        if not (eta_band[1] <= lo < hi <= M.Nt - END_SLABS):
            raise GeometryError(f"band {(lo, hi)} does not fit on the grid")
    slab_minus = time_slab(M, past[0] - 1, past[1] + 1)
    slab_plus = time_slab(M, fut[0] - 1, fut[1] + 1)
    supp = h.support
    if supp.any():
        if np.any(slab_minus & causal_set(M, supp, "future")):
            raise GeometryError("past slab meets the causal future of supp h")
        if np.any(slab_plus & causal_set(M, supp, "past")):
            raise GeometryError("future slab meets the causal past of supp h")
    if G is None:
        G = build_green(assemble_P(M, coupling))
    elif G.P.coupling != coupling or not G.spacetime.same_as(M):
        raise GeometryError("Green operators belong to a different spacetime or coupling")
    M_h = perturb(M, h)
    G_h = G if M_h is M else build_green(assemble_P(M_h, coupling))
    return RCEContext(
        M, h, M_h, coupling, G, G_h,
        make_partition(M, *past), make_partition(M, *fut),
        slab_minus, slab_plus, eta_band,
    )


def operator_support(ctx: RCEContext) -> np.ndarray:
    """Points where ``P_h`` differs from ``P``: supp h widened by the stencil reach."""
    diff = abs(ctx.G_h.P.matrix - ctx.G.P.matrix)
    rows = np.asarray(diff.sum(axis=1)).ravel() > 0
    return rows.reshape(ctx.M.shape)


# --------------------------------------------------------------------------
# beta and its slot-wise action


def beta(ctx: RCEContext, t: np.ndarray) -> np.ndarray:
    """``P_h chi_- E_h P chi_+ E t`` with both cuts evaluated on band rows."""
    z = band_source(ctx.G.P, ctx.chi_plus, ctx.G.apply(t))
    return band_source(ctx.G_h.P, ctx.chi_minus, ctx.G_h.apply(z))


def rce_apply(ctx: RCEContext, F: Functional) -> Functional:
    """``sum t_n -> sum beta^{(x)n} t_n``."""
    return apply_slotwise(F, ctx.slot_map())


def rce_apply_wick(ctx: RCEContext, W: WickFamily, H: Bisolution) -> Functional:
    """The H entry of the evolved family: ``beta`` after ``lambda_{H, H_check}``."""
    T_H = family_entry(W, H)
    H_check = transported_bisolution(H, ctx)
    return rce_apply(ctx, lambda_transport(T_H, H, H_check))


# --------------------------------------------------------------------------
# stress-energy


def _half_average(a: np.ndarray) -> np.ndarray:
    """Average of values on the half-integer slices to the integer ones."""
    out = np.zeros((a.shape[0] + 1,) + a.shape[1:])
    out[1:-1] = 0.5 * (a[1:] + a[:-1])
    return out


def stress_energy_tensor(
    M: LatticeSpacetime,
    coupling: Coupling,
    u: np.ndarray,
    phi: np.ndarray,
    xi_form: XiForm = "hess_minus_box",
    include_einstein: bool = True,
    tt_product: Literal["staggered", "centered"] = "staggered",
) -> np.ndarray:
    """Bilinear ``T^ab[u, phi]`` on the grid, shape ``(Nt, Nx, 2, 2)``.

    The gradient products use centred differences except the time-time
    product, which by default averages the forward-difference products on
    the two neighbouring half steps (the leapfrog energy).  The curvature
    block is ``xi (grad^a grad^b - g^ab box - G^ab)(u phi)``; the opposite
    sign for the first two terms is available as ``box_minus_hess``.
    """
    D = DifferenceOperators.on(M)
    U = np.reshape(u, M.shape)
    F = np.reshape(phi, M.shape)
    gi = M.inverse_metric()
    du = np.moveaxis(field_gradient(M, U, D), 0, -1)
    dp = np.moveaxis(field_gradient(M, F, D), 0, -1)
    prod = 0.5 * (du[..., :, None] * dp[..., None, :] + dp[..., :, None] * du[..., None, :])
    if tt_product == "staggered":
        prod[..., 0, 0] = _half_average((U[1:] - U[:-1]) * (F[1:] - F[:-1]) / M.dt**2)
    up = np.einsum("...ac,...cd,...bd->...ab", gi, prod, gi)
    dot = np.einsum("...cd,...cd->...", gi, prod)
    T = up - 0.5 * gi * dot[..., None, None] + 0.5 * coupling.mass**2 * gi * (U * F)[..., None, None]
    if coupling.xi != 0.0:
        T = T + coupling.xi * curvature_block(M, U * F, D, xi_form, include_einstein)
    return T


def curvature_block(
    M: LatticeSpacetime,
    w: np.ndarray,
    D: DifferenceOperators | None = None,
    xi_form: XiForm = "hess_minus_box",
    include_einstein: bool = True,
) -> np.ndarray:
    """``(grad^a grad^b - g^ab box - G^ab) w`` or its ``box_minus_hess`` variant."""
    D = D or DifferenceOperators.on(M)
    gi = M.inverse_metric()
    flat = np.ravel(w)
    d1 = np.moveaxis(field_gradient(M, np.reshape(w, M.shape), D), 0, -1)
    d2 = np.empty(M.shape + (2, 2))
    for a in range(2):
        for b in range(2):
            d2[..., a, b] = (D.second(a, b) @ flat).reshape(M.shape)
    hess = d2 - np.einsum("...cab,...c->...ab", christoffel(M, D), d1)
    hess_up = np.einsum("...ac,...cd,...bd->...ab", gi, hess, gi)
    box = np.einsum("...ab,...ab->...", gi, hess)
    blk = hess_up - gi * box[..., None, None]
    if xi_form == "box_minus_hess":
        blk = -blk
    elif xi_form != "hess_minus_box":
        raise ValueError(f"unknown curvature form {xi_form!r}")
    if include_einstein:
        blk = blk - einstein_tensor_upper(M, D)
    return blk


def _require_solution(G: GreenOperators, u: np.ndarray, name: str, tol: float) -> None:
    if _relative_residual(G.P, np.ravel(u)) > tol:
        raise NotASolutionError(f"{name} does not solve the Klein-Gordon equation")


def stress_energy_pairing(
    ctx: RCEContext,
    u: np.ndarray,
    phi: np.ndarray,
    tol: float = SOLUTION_TOLERANCE,
    **options,
) -> float:
    """Quadrature of ``h_ab T^ab[u, phi]`` over the unperturbed spacetime."""
    _require_solution(ctx.G, u, "u", tol)
    _require_solution(ctx.G, phi, "phi", tol)
    if not ctx.h.support.any():
        return 0.0
    T = stress_energy_tensor(ctx.M, ctx.coupling, u, phi, **options)
    dens = np.einsum("...ab,...ab->...", ctx.h.h, T)
    return float(np.sum(ctx.M.weights * dens.ravel()))


# --------------------------------------------------------------------------
# finite-difference oracle


@dataclass(frozen=True)
class GradientReport:
    lhs: float  # Richardson-extrapolated finite difference
    rhs: float  # minus the stress-energy pairing
    rel_error: float
    order_estimate: float
    derivatives: tuple[float, ...] = field(default=())

    def passed(self, tol: float = 1e-3) -> bool:
        return self.rel_error <= tol


def _richardson(value, steps) -> tuple[float, float, tuple[float, ...]]:
    """Central differences on the ladder, one Richardson level, FD order."""
    ders = tuple((value(s) - value(-s)) / (2 * s) for s in steps)
    ratio = steps[-2] / steps[-1]
    lhs = ders[-1] + (ders[-1] - ders[-2]) / (ratio**2 - 1)
    order = float("nan")
    if len(ders) >= 3:
        a, b = abs(ders[0] - ders[1]), abs(ders[1] - ders[2])
        if a > 0 and b > 0:
            order = float(np.log(a / b) / np.log(steps[0] / steps[1]))
    return float(lhs), order, ders


def _relative(a: float, b: float) -> float:
    top = max(abs(a), abs(b))
    return abs(a - b) / top if top > 0 else 0.0


def gradient_check(
    ctx: RCEContext,
    t: np.ndarray,
    f: np.ndarray,
    steps: tuple[float, ...] = DEFAULT_STEPS,
    **options,
) -> GradientReport:
    """d/ds (beta[s h] t)[E f] at s = 0 against ``-int h_ab T^ab[E t, E f]``.

    Steps are in units of ``max|h|``.
    """
    scale = float(np.max(np.abs(ctx.h.h)))
    if scale == 0:
        return GradientReport(0.0, 0.0, 0.0, float("nan"))
    w = ctx.M.weights
    Ef = ctx.G.apply(f)
    z = band_source(ctx.G.P, ctx.chi_plus, ctx.G.apply(t))

    def value(s):
        c = ctx.scaled(s)
        b = band_source(c.G_h.P, c.chi_minus, c.G_h.apply(z))
        return float(np.sum(w * b * Ef))

    lhs, order, ders = _richardson(value, [s / scale for s in steps])
    rhs = -stress_energy_pairing(ctx, ctx.G.apply(t), Ef, **options)
    return GradientReport(lhs, rhs, _relative(lhs, rhs), order, ders)


def tau_contract(F: Functional, n: int, f: np.ndarray, G: GreenOperators) -> np.ndarray:
    """``t_n(x, Ef, ..., Ef)`` for the order-n part of ``F`` (symmetrised kernel)."""
    if n < 1:
        raise ValueError("tau needs n >= 1")
    terms = [t for t in F.terms if t.arity == n]
    if n == 1:
        comp = F.component(1).dense()
        return np.asarray(comp)
    from .functionals import derivative

    Fn = Functional.from_terms(F.weights, terms)
    d = derivative(Fn, G.apply(f), 1)
    return np.asarray(d.dense()) / n


def gradient_check_order_n(
    ctx: RCEContext,
    F: Functional,
    n: int,
    f: np.ndarray,
    steps: tuple[float, ...] = DEFAULT_STEPS,
) -> GradientReport:
    """d/ds (beta[s h]^{(x)n} t_n)[E f] against ``-n int h_ab T^ab[E tau, E f]``."""
    scale = float(np.max(np.abs(ctx.h.h)))
    Fn = Functional.from_terms(F.weights, [t for t in F.terms if t.arity == n])
    Ef = ctx.G.apply(f)

    def value(s):
        return complex(evaluate(rce_apply(ctx.scaled(s), Fn), Ef)).real

    lhs, order, ders = _richardson(value, [s / scale for s in steps])
    tau = np.real(tau_contract(Fn, n, f, ctx.G))
    rhs = -n * stress_energy_pairing(ctx, ctx.G.apply(tau), Ef)
    return GradientReport(lhs, rhs, _relative(lhs, rhs), order, ders)


# --------------------------------------------------------------------------
# the seeded battery


def _time_bump(T: np.ndarray, centre: float, half: float) -> np.ndarray:
    u = (T - centre) / half
    return np.where(np.abs(u) < 1, np.cos(0.5 * np.pi * u) ** 4, 0.0)


def battery_fields(M: LatticeSpacetime, seed: int) -> tuple[np.ndarray, np.ndarray, MetricPerturbation]:
    """One seeded case ``(t, f, h)`` defined in physical coordinates.

    ``f`` overlaps ``t`` so that ``E t`` and ``E f`` are strongly correlated
    and the pairing does not suffer cancellation.
    """
    rng = np.random.default_rng(seed)
    T, X = M.coordinates()
    L = M.Nx * M.dx
    span = (M.Nt - 1) * M.dt

    def ripple(a):
        return 1.0 + a * rng.uniform(-1, 1) * np.cos(2 * np.pi * X / L + rng.uniform(0, 2 * np.pi))

    t = _time_bump(T, rng.uniform(0.18, 0.26) * span, 0.15 * span) * ripple(0.2)
    f = t + 0.2 * _time_bump(T, rng.uniform(0.18, 0.3) * span, 0.15 * span) * ripple(0.2)
    prof = _time_bump(T, 0.5 * span, 0.3 * span)
    htt = rng.uniform(0.2, 0.4)
    hxx = rng.uniform(-0.6, 0.6) * htt
    htx = rng.uniform(-0.1, 0.1)
    tt = htt * prof * ripple(0.3)
    xx = hxx * prof * ripple(0.3)
    tx = htx * prof * ripple(0.3)
    h = MetricPerturbation.from_components(tt, tx, xx)
    return t.ravel(), f.ravel(), h


BATTERY_COUPLINGS = [(xi, m) for xi in (0.0, 0.25, 1.0 / 6.0) for m in (0.0, 1.0)]


def battery_bands(M: LatticeSpacetime) -> tuple[Band, Band]:
    s = M.Nt / 64
    return (int(4 * s), int(9 * s)), (int(54 * s), int(59 * s))


@dataclass(frozen=True)
class BatteryCase:
    index: int
    seed: int
    xi: float
    mass: float
    report: GradientReport


def gradient_battery(
    Nx: int,
    Nt: int,
    dx: float,
    dt: float,
    cases: int = 16,
    seed: int = 200,
    steps: tuple[float, ...] = DEFAULT_STEPS,
) -> list[BatteryCase]:
    """Seeded battery cycling through ``xi in {0, 1/4, 1/6}`` and ``m in {0, 1}``."""
    from .spacetime import make_cylinder

    M = make_cylinder(Nx, Nt, dx, dt)
    bands = battery_bands(M)
    greens: dict[tuple[float, float], GreenOperators] = {}
    out = []
    for k in range(cases):
        xi, m = BATTERY_COUPLINGS[k % len(BATTERY_COUPLINGS)]
        c = Coupling(xi, m)
        if (xi, m) not in greens:
            greens[xi, m] = build_green(assemble_P(M, c))
        t, f, h = battery_fields(M, seed + k)
        ctx = make_rce_context(M, h, bands, c, greens[xi, m])
        out.append(BatteryCase(k, seed + k, xi, m, gradient_check(ctx, t, f, steps)))
    return out


# --------------------------------------------------------------------------
# kernels of E and support diagnostics


def _as_dense(t) -> np.ndarray:
    if isinstance(t, Functional):
        n = max(t.components)
        return np.asarray(t.component(n).dense())
    return np.asarray(t)


def _slot_apply(op, K: np.ndarray, slot: int) -> np.ndarray:
    """Apply a column map to one slot of a 1- or 2-slot kernel."""
    if K.ndim == 1:
        return op(K)
    if slot == 0:
        return op(K)
    return op(K.T).T


def kernel_decompose(
    t,
    G: GreenOperators,
    chi: PartitionOfUnity,
    tol: float = 1e-7,
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Split ``t_n = s + sum_k (P)_k u_k`` with ``s = zeta^{(x)n} t_n``.

    ``u_k`` applies ``zeta`` to the slots before ``k`` and
    ``U = chi_ret E_minus + chi_adv E_plus`` to slot ``k``; ``(1 - zeta) =
    P U`` on interior sources gives the telescoping sum.
    """
    K = _as_dense(t)
    n = K.ndim
    if n not in (1, 2):
        raise ValueError("decomposition implemented for n = 1, 2")
    ca = chi.chi_adv.reshape(-1, 1)
    cr = chi.chi_ret.reshape(-1, 1)

    def zeta(A):
        return band_source(G.P, chi, G.apply(A))

    def U(A):
        A2 = A.reshape(G.spacetime.size, -1)
        return (cr * G.apply_minus(A2) + ca * G.apply_plus(A2)).reshape(A.shape)

    us = []
    partial = K
    for k in range(n):
        us.append(_slot_apply(U, partial, k))
        partial = _slot_apply(zeta, partial, k)
    s = partial
    resid = reassembly_residual(K, s, us, G)
    if resid > tol:
        raise DecompositionError(f"reassembly residual {resid:.3e} exceeds {tol:.1e}")
    return s, us


def reassemble(s: np.ndarray, us: list[np.ndarray], G: GreenOperators) -> np.ndarray:
    """``s + sum_k (P)_k u_k``, with ``P`` acting on interior rows of slot ``k``."""

    def Pint(A):
        return (G.P.interior @ A.reshape(G.spacetime.size, -1)).reshape(A.shape)

    out = np.array(s, copy=True)
    for k, u in enumerate(us):
        out = out + _slot_apply(Pint, u, k)
    return out


def reassembly_residual(t, s: np.ndarray, us: list[np.ndarray], G: GreenOperators) -> float:
    K = _as_dense(t)
    scale = np.max(np.abs(K))
    return float(np.max(np.abs(K - reassemble(s, us, G))) / scale) if scale > 0 else 0.0


def propagate_kernel(t, G: GreenOperators) -> np.ndarray:
    """``E^{(x)n} t_n`` as a vector (n = 1) or matrix (n = 2)."""
    K = _as_dense(t)
    out = G.apply(K)
    if K.ndim == 2:
        out = G.apply(out.T).T
    return out


def support_diagnostic(t, K: np.ndarray, G: GreenOperators, halo: int = 1) -> dict[str, float | bool]:
    """Largest value of ``E^{(x)n} t_n`` outside the halo-dilated ``J(K)^{(x)n}``."""
    M = G.spacetime
    mask = dilate(M, causal_set(M, K, "both"), halo).ravel()
    Et = propagate_kernel(t, G)
    if Et.ndim == 1:
        outside = np.where(mask, 0.0, np.abs(Et))
    else:
        outside = np.where(mask[:, None] & mask[None, :], 0.0, np.abs(Et))
    top = float(np.max(np.abs(Et)))
    out_max = float(np.max(outside))
    return {
        "max_outside": out_max,
        "max_total": top,
        "relative_outside": out_max / top if top > 0 else 0.0,
    }


# --------------------------------------------------------------------------
# constructions around the degenerate directions


@dataclass(frozen=True)
class DegenerateSolution:
    source: np.ndarray
    field: np.ndarray  # E applied to the source
    point: tuple[int, int]
    value: float
    null_derivative: float
    null_second_derivative: float


NULL_DIRECTION = np.array([1.0, 1.0]) / np.sqrt(2.0)


def null_derivatives(M: LatticeSpacetime, u: np.ndarray, point: tuple[int, int],
                     direction: np.ndarray = NULL_DIRECTION) -> tuple[float, float, float]:
    """Value and first two directional derivatives at a grid point."""
    D = DifferenceOperators.on(M)
    flat = np.ravel(u)
    j, i = point
    k = j * M.Nx + i
    a = direction
    first = a[0] * (D.t @ flat)[k] + a[1] * (D.x @ flat)[k]
    second = (a[0] ** 2 * (D.tt @ flat)[k] + 2 * a[0] * a[1] * (D.tx @ flat)[k]
              + a[1] ** 2 * (D.xx @ flat)[k])
    return float(flat[k]), float(first), float(second)


def null_degenerate_solution(
    M: LatticeSpacetime,
    G: GreenOperators,
    x0: float,
    slice_j: int | None = None,
    chi: PartitionOfUnity | None = None,
) -> DegenerateSolution:
    """Source whose solution vanishes to second order along a null line at x0.

    Cauchy data ``(x - x0)^2`` times a smooth cutoff on the slice through
    ``x0``, with zero time derivative, are evolved and converted to a
    source; the solution at ``(slice_j, x0)`` must satisfy
    ``|Ef| <= 5 dx^2``, ``|grad_u Ef| <= 5 dx`` and ``|grad_u^2 Ef| >= 0.5``.
    """
    j0 = M.Nt // 2 if slice_j is None else slice_j
    if not (END_SLABS <= j0 < M.Nt - END_SLABS):
        raise ConstructionError("data slice must be interior")
    L = M.Nx * M.dx
    i0 = int(round(x0 / M.dx)) % M.Nx
    x = np.arange(M.Nx) * M.dx
    d = (x - i0 * M.dx + L / 2) % L - L / 2
    r = np.abs(d)
    inner, outer = 0.15 * L, 0.4 * L
    s = np.clip((r - inner) / (outer - inner), 0.0, 1.0)
    cut = 1.0 - s * s * (3.0 - 2.0 * s)
    data = d**2 * cut
    # zero time derivative: equal values on the neighbouring slices
    A = G._blocks.A
    rhs = -(A[j0, j0] @ data)
    lhs = (A[j0, j0 - 1] + A[j0, j0 + 1]).toarray()
    nxt = np.linalg.solve(lhs, rhs)
    phi = G.evolve(j0, data, nxt)
    if chi is None:
        chi = make_partition(M, max(2, j0 // 4), max(3, j0 // 2))
    f = solution_to_source(G, chi, phi)
    Ef = G.apply(f)
    val, d1, d2 = null_derivatives(M, Ef, (j0, i0))
    bad = []
    if abs(val) > 5 * M.dx**2:
        bad.append(f"|Ef| = {abs(val):.2e}")
    if abs(d1) > 5 * M.dx:
        bad.append(f"|grad_u Ef| = {abs(d1):.2e}")
    if abs(d2) < 0.5:
        bad.append(f"|grad_u^2 Ef| = {abs(d2):.2e}")
    if bad:
        raise ConstructionError("degenerate solution thresholds violated: " + ", ".join(bad))
    return DegenerateSolution(f, Ef, (j0, i0), val, d1, d2)


def null_stress_component(
    M: LatticeSpacetime,
    coupling: Coupling,
    u: np.ndarray,
    phi: np.ndarray,
    point: tuple[int, int],
    direction: np.ndarray = NULL_DIRECTION,
) -> float:
    """``T_ab n^a n^b`` at one point, node-centred products throughout."""
    T = stress_energy_tensor(M, coupling, u, phi, tt_product="centered")
    j, i = point
    g = M.metric[j, i]
    low = g @ T[j, i] @ g
    return float(direction @ low @ direction)


@dataclass(frozen=True)
class CounterexampleReport:
    source: np.ndarray
    pairings: tuple[float, ...]
    fd_derivatives: tuple[float, ...]
    beta_defects: tuple[float, ...]
    value: float  # t[E f] for the probe f
    integral: float  # int f

    @property
    def max_pairing(self) -> float:
        return max(abs(p) for p in self.pairings)

    @property
    def max_beta_defect(self) -> float:
        return max(self.beta_defects)


def random_perturbation(M: LatticeSpacetime, rng: np.random.Generator, amplitude: float = 0.2) -> MetricPerturbation:
    """Smooth compact ``h`` in the middle third of the grid."""
    span = (M.Nt - 1) * M.dt
    L = M.Nx * M.dx
    from .spacetime import smooth_bump

    bump = smooth_bump(M, rng.uniform(0.45, 0.55) * span, rng.uniform(0, L),
                       rng.uniform(0.1, 0.15) * span, rng.uniform(0.15, 0.3) * L)
    c = amplitude * rng.uniform(-1, 1, size=3) * np.array([1.0, 0.3, 1.0])
    return MetricPerturbation.from_components(c[0] * bump, c[1] * bump, c[2] * bump)


def massless_counterexample(
    M: LatticeSpacetime,
    G: GreenOperators,
    probe_region: np.ndarray,
    perturbations: int = 8,
    seed: int = 0,
) -> CounterexampleReport:
    """The constant solution: invisible to every ``h`` yet detected in ``O'``.

    ``t`` is the band source of the solution ``1``.  For each sampled ``h``
    the stress-energy pairing, the finite-difference derivative and the
    finite-h defect of ``beta[h] t ~ t`` are recorded; the probe ``f`` is a
    bump inside ``probe_region`` with ``|int f| = 1/2``, signed so that
    ``t[E f] > 0``.
    """
    from .functionals import ideal_defect
    from .spacetime import smooth_bump

    c = G.P.coupling
    if c.mass != 0.0 or c.xi != 0.0:
        raise ValueError("the counterexample needs the massless minimally coupled field")
    chi = make_partition(M, *battery_bands(M)[0])
    t = solution_to_source(G, chi, np.ones(M.size))
    Et = G.apply(t)
    rng = np.random.default_rng(seed)
    sources = np.stack([battery_fields(M, seed + k)[1] for k in range(4)])
    pairings, fds, defects = [], [], []
    for _ in range(perturbations):
        h = random_perturbation(M, rng)
        ctx = make_rce_context(M, h, battery_bands(M), c, G)
        for f in sources[:2]:
            pairings.append(stress_energy_pairing(ctx, Et, G.apply(f)))
        fds.append(gradient_check(ctx, t, sources[0]).lhs)
        diff = Functional.linear(M.weights, beta(ctx, t)) - Functional.linear(M.weights, t)
        d = ideal_defect(diff, G, sources=sources)
        defects.append(max(d.values()))
    # probe inside the region
    mask = np.asarray(probe_region, dtype=bool)
    jj, ii = np.nonzero(mask)
    T, X = M.coordinates()
    jc, ic = int(np.median(jj)), int(np.median(ii))
    ht = 0.5 * M.dt * max(2, (jj.max() - jj.min()) // 2)
    hx = 0.5 * M.dx * max(2, (ii.max() - ii.min()) // 2)
    bump = smooth_bump(M, T[jc, ic], X[jc, ic], ht, hx) * mask
    f = (bump / np.sum(M.weights * bump.ravel()) * 0.5).ravel()
    value = float(np.sum(M.weights * t * G.apply(f)))
    if value < 0:  # the probe's sign is ours to choose
        f, value = -f, -value
    integral = float(np.sum(M.weights * f))
    return CounterexampleReport(t, tuple(pairings), tuple(fds), tuple(defects), value, integral)


__all__ = [
    "BATTERY_COUPLINGS",
    "BatteryCase",
    "CounterexampleReport",
    "DegenerateSolution",
    "GradientReport",
    "RCEContext",
    "battery_bands",
    "battery_fields",
    "beta",
    "curvature_block",
    "default_bands",
    "gradient_battery",
    "gradient_check",
    "gradient_check_order_n",
    "kernel_decompose",
    "make_rce_context",
    "massless_counterexample",
    "null_degenerate_solution",
    "null_derivatives",
    "null_stress_component",
    "operator_support",
    "propagate_kernel",
    "random_perturbation",
    "rce_apply",
    "rce_apply_wick",
    "reassemble",
    "reassembly_residual",
    "support_diagnostic",
    "tau_contract",
    "stress_energy_pairing",
    "stress_energy_tensor",
]
