"""Discrete 1+1 dimensional cylinder spacetimes and their causal structure.

A spacetime is a grid of ``Nt`` time slices, each a periodic ring of ``Nx``
points.  Fields live on arrays of shape ``(Nt, Nx)``; when flattened the
point ``(j, i)`` (time index first) has index ``j * Nx + i``.  The metric uses
the (+, -) signature, so the flat metric is ``diag(1, -1)`` in (t, x) order.

Causal sets are computed by spatial dilation, one time step at a time.  The
dilation radius of a step is ``ceil(c * dt / dx)`` with ``c`` the largest
characteristic speed on the two slices involved.  Under the CFL bound this is
one cell per step, which is exactly the numerical domain of influence of the
three-point stencils used for the Klein-Gordon operator, so support
statements about discrete solutions hold without tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np

from .errors import BandError, CFLError, GeometryError, PerturbationError, SignatureError

Direction = Literal["future", "past", "both"]

# Perturbations must vanish on this many slices at each temporal end.
END_SLABS = 3
# Partition values are rounded to this dyadic grid so that 1 - chi is exact.
_PARTITION_QUANTUM = 2.0**-40


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


def characteristic_speeds(metric: np.ndarray) -> np.ndarray:
    """Largest |dx/dt| along null directions at each point.

    Null directions solve ``g_xx v^2 + 2 g_tx v + g_tt = 0`` for ``v = dx/dt``.
    """
    gtt = metric[..., 0, 0]
    gtx = metric[..., 0, 1]
    gxx = metric[..., 1, 1]
    disc = np.sqrt(np.maximum(gtx**2 - gtt * gxx, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        v1 = np.abs((-gtx + disc) / gxx)
        v2 = np.abs((-gtx - disc) / gxx)
    speeds = np.maximum(v1, v2)
    return np.where(gxx == 0.0, np.inf, speeds)


def _check_metric(metric: np.ndarray, dx: float, dt: float, safety: float) -> None:
    det = metric[..., 0, 0] * metric[..., 1, 1] - metric[..., 0, 1] * metric[..., 1, 0]
    if not np.all(np.isfinite(metric)):
        raise SignatureError("metric has non-finite entries")
    if np.any(det >= 0.0):
        raise SignatureError("det g >= 0 at %d points" % int(np.sum(det >= 0.0)))
    if np.any(metric[..., 0, 0] <= 0.0):
        raise SignatureError("g_tt <= 0: the time direction is not timelike everywhere")
    if not np.array_equal(metric[..., 0, 1], metric[..., 1, 0]):
        raise SignatureError("metric is not symmetric")
    cmax = float(np.max(characteristic_speeds(metric)))
    if not dt * cmax <= dx * safety:
        raise CFLError(f"dt*c_max = {dt * cmax:.6g} exceeds dx*safety = {dx * safety:.6g}")


@dataclass(frozen=True, eq=False)
class LatticeSpacetime:
    """Periodic-space, finite-time grid carrying a Lorentzian metric.

    The metric array has shape ``(Nt, Nx, 2, 2)`` with index 0 for time.
    Construction validates the signature, the CFL bound and the grid size.
    Time orientation is fixed: the future is increasing ``j``.
    """

    Nx: int
    Nt: int
    dx: float
    dt: float
    metric: np.ndarray
    safety_factor: float = 0.9
    volume_weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.Nx < 8 or self.Nt < 8:
            raise GeometryError("grid needs Nx >= 8 and Nt >= 8")
        if not (self.dx > 0 and self.dt > 0):
            raise GeometryError("grid spacings must be positive")
        if not 0 < self.safety_factor < 1:
            raise ValueError("safety_factor must lie in (0, 1)")
        metric = _readonly(self.metric)
        if metric.shape != (self.Nt, self.Nx, 2, 2):
            raise ValueError(f"metric shape {metric.shape} != {(self.Nt, self.Nx, 2, 2)}")
        _check_metric(metric, self.dx, self.dt, self.safety_factor)
        object.__setattr__(self, "metric", metric)
        det = metric[..., 0, 0] * metric[..., 1, 1] - metric[..., 0, 1] ** 2
        object.__setattr__(self, "volume_weights", _readonly(np.sqrt(-det) * self.dx * self.dt))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.Nt, self.Nx)

    @property
    def size(self) -> int:
        return self.Nt * self.Nx

    @property
    def weights(self) -> np.ndarray:
        """Volume weights as a flat vector."""
        return self.volume_weights.ravel()

    def coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        """Return (T, X) coordinate arrays of shape ``(Nt, Nx)``."""
        t = np.arange(self.Nt) * self.dt
        x = np.arange(self.Nx) * self.dx
        return np.meshgrid(t, x, indexing="ij")

    def inverse_metric(self) -> np.ndarray:
        return np.linalg.inv(self.metric)

    def sqrt_det(self) -> np.ndarray:
        g = self.metric
        return np.sqrt(-(g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] ** 2))

    def step_radii(self) -> np.ndarray:
        """Dilation radius (cells) for each step j -> j+1, length ``Nt - 1``."""
        c = characteristic_speeds(self.metric).max(axis=1)
        c_step = np.maximum(c[:-1], c[1:])
        return np.maximum(np.ceil(c_step * self.dt / self.dx), 1).astype(int)

    def same_as(self, other: "LatticeSpacetime") -> bool:
        return (
            self.shape == other.shape
            and self.dx == other.dx
            and self.dt == other.dt
            and np.array_equal(self.metric, other.metric)
        )


def flat_metric(Nt: int, Nx: int) -> np.ndarray:
    g = np.zeros((Nt, Nx, 2, 2))
    g[..., 0, 0] = 1.0
    g[..., 1, 1] = -1.0
    return g


def conformal_metric(omega: np.ndarray | float, Nt: int, Nx: int) -> np.ndarray:
    """Metric ``omega**2 * diag(1, -1)``."""
    om2 = np.broadcast_to(np.asarray(omega, dtype=float) ** 2, (Nt, Nx))
    g = np.zeros((Nt, Nx, 2, 2))
    g[..., 0, 0] = om2
    g[..., 1, 1] = -om2
    return g


def make_cylinder(
    Nx: int,
    Nt: int,
    dx: float,
    dt: float,
    metric_spec="flat",
    safety_factor: float = 0.9,
) -> LatticeSpacetime:
    """Build a validated cylinder spacetime.

    ``metric_spec`` is ``"flat"``, a pair ``("conformal", omega)`` where omega
    is a scalar, an ``(Nt, Nx)`` array or a callable ``omega(T, X)``, or an
    explicit metric array of shape ``(Nt, Nx, 2, 2)``.
    """
    if isinstance(metric_spec, str):
        if metric_spec != "flat":
            raise ValueError(f"unknown metric kind {metric_spec!r}")
        metric = flat_metric(Nt, Nx)
    elif isinstance(metric_spec, tuple) and metric_spec and metric_spec[0] == "conformal":
        omega = metric_spec[1]
        if callable(omega):
            t = np.arange(Nt) * dt
            x = np.arange(Nx) * dx
            T, X = np.meshgrid(t, x, indexing="ij")
            omega = omega(T, X)
        metric = conformal_metric(omega, Nt, Nx)
    else:
        metric = np.asarray(metric_spec, dtype=float)
    return LatticeSpacetime(Nx, Nt, float(dx), float(dt), metric, safety_factor)


# --------------------------------------------------------------------------
# metric perturbations


@dataclass(frozen=True, eq=False)
class MetricPerturbation:
    """Symmetric tensor field ``h_ab`` added to the metric (lower indices)."""

    h: np.ndarray

    def __post_init__(self):
        h = _readonly(self.h)
        if h.ndim != 4 or h.shape[2:] != (2, 2):
            raise PerturbationError("h must have shape (Nt, Nx, 2, 2)")
        if not np.array_equal(h[..., 0, 1], h[..., 1, 0]):
            raise PerturbationError("h is not symmetric")
        object.__setattr__(self, "h", h)

    @property
    def support(self) -> np.ndarray:
        return np.any(self.h != 0.0, axis=(2, 3))

    def scaled(self, s: float) -> "MetricPerturbation":
        return MetricPerturbation(s * self.h)

    @staticmethod
    def zero(M: LatticeSpacetime) -> "MetricPerturbation":
        return MetricPerturbation(np.zeros(M.shape + (2, 2)))

    @staticmethod
    def from_components(htt, htx, hxx) -> "MetricPerturbation":
        htt, htx, hxx = np.broadcast_arrays(*(np.asarray(c, dtype=float) for c in (htt, htx, hxx)))
        h = np.stack([np.stack([htt, htx], -1), np.stack([htx, hxx], -1)], -2)
        return MetricPerturbation(h)


def perturb(M: LatticeSpacetime, h: MetricPerturbation) -> LatticeSpacetime:
    """Return the spacetime with metric ``g + h``.

    The perturbation must vanish on the first and last ``END_SLABS`` slices.
    """
    if h.h.shape != M.shape + (2, 2):
        raise PerturbationError("perturbation shape does not match the grid")
    if np.any(h.h[:END_SLABS] != 0) or np.any(h.h[-END_SLABS:] != 0):
        raise PerturbationError(f"perturbation must vanish on the first and last {END_SLABS} slices")
    if not np.any(h.h):
        return M
    try:
        return LatticeSpacetime(M.Nx, M.Nt, M.dx, M.dt, M.metric + h.h, M.safety_factor)
    except (SignatureError, CFLError) as exc:
        raise PerturbationError(f"perturbed metric is invalid: {exc}") from exc


def smooth_bump(M: LatticeSpacetime, t0: float, x0: float, half_t: float, half_x: float) -> np.ndarray:
    """Product of cos^2 bumps centred at (t0, x0), periodic in x.

    Vanishes exactly outside ``|t - t0| < half_t`` and ``|x - x0| < half_x``.
    """
    T, X = M.coordinates()
    L = M.Nx * M.dx
    ddx = (X - x0 + L / 2) % L - L / 2
    u = (T - t0) / half_t
    v = ddx / half_x
    bt = np.where(np.abs(u) < 1, np.cos(0.5 * np.pi * u) ** 2, 0.0)
    bx = np.where(np.abs(v) < 1, np.cos(0.5 * np.pi * v) ** 2, 0.0)
    return bt * bx


# --------------------------------------------------------------------------
# regions and causal structure


def _dilate_ring(row: np.ndarray, r: int) -> np.ndarray:
    n = row.shape[-1]
    if 2 * r + 1 >= n:
        return np.broadcast_to(row.any(axis=-1, keepdims=True), row.shape).copy()
    out = row.copy()
    for k in range(1, r + 1):
        out |= np.roll(row, k, axis=-1) | np.roll(row, -k, axis=-1)
    return out


def dilate(M: LatticeSpacetime, K: np.ndarray, cells: int = 1) -> np.ndarray:
    """Dilate a region by ``cells`` in every grid direction (space periodic)."""
    out = np.asarray(K, dtype=bool).copy()
    for _ in range(cells):
        ring = _dilate_ring(out, 1)
        out = ring.copy()
        out[1:] |= ring[:-1]
        out[:-1] |= ring[1:]
    return out


def causal_set(M: LatticeSpacetime, K: np.ndarray, direction: Direction = "both") -> np.ndarray:
    """Discrete causal future, past, or both, of a region."""
    K = np.asarray(K, dtype=bool)
    if K.shape != M.shape:
        raise ValueError("region shape does not match the grid")
    radii = M.step_radii()
    if direction == "both":
        return causal_set(M, K, "future") | causal_set(M, K, "past")
    out = K.copy()
    if direction == "future":
        for j in range(1, M.Nt):
            out[j] |= _dilate_ring(out[j - 1], radii[j - 1])
    elif direction == "past":
        for j in range(M.Nt - 2, -1, -1):
            out[j] |= _dilate_ring(out[j + 1], radii[j])
    else:
        raise ValueError(f"unknown direction {direction!r}")
    return out


def causal_complement(M: LatticeSpacetime, K: np.ndarray) -> np.ndarray:
    return ~causal_set(M, K, "both")


def region_is_causally_convex(M: LatticeSpacetime, O: np.ndarray) -> bool:
    """True iff every discrete causal path between points of O stays in O."""
    O = np.asarray(O, dtype=bool)
    between = causal_set(M, O, "future") & causal_set(M, O, "past")
    return bool(np.all(O[between]))


def time_slab(M: LatticeSpacetime, j0: int, j1: int) -> np.ndarray:
    """Slices ``j0..j1`` inclusive."""
    mask = np.zeros(M.shape, dtype=bool)
    mask[max(j0, 0) : min(j1, M.Nt - 1) + 1] = True
    return mask


def interior_mask(M: LatticeSpacetime, margin: int = 2) -> np.ndarray:
    """Slices at least ``margin`` away from both temporal ends."""
    return time_slab(M, margin, M.Nt - 1 - margin)


def diamond(M: LatticeSpacetime, base_center: int, base_radius: int, slice_j: int) -> np.ndarray:
    """Discrete domain of dependence of a ball on slice ``slice_j``.

    The ball holds the cells with periodic distance ``< base_radius`` from
    ``base_center`` (so radius 1 is one cell).  A point belongs to the
    diamond when its whole discrete causal cone, traced to the base slice,
    lands inside the ball.
    """
    if base_radius < 1:
        raise GeometryError("base radius must be at least one cell")
    if 2 * base_radius - 1 >= M.Nx:
        raise GeometryError("base ball wraps around the spatial circle")
    if not 0 <= slice_j < M.Nt:
        raise GeometryError("base slice outside the grid")
    i = np.arange(M.Nx)
    dist = np.abs((i - base_center + M.Nx // 2) % M.Nx - M.Nx // 2)
    ball = dist < base_radius
    radii = M.step_radii()
    out = np.zeros(M.shape, dtype=bool)
    out[slice_j] = ball
    reach = ball.copy()
    for j in range(slice_j + 1, M.Nt):
        reach = ~_dilate_ring(~reach, radii[j - 1])
        out[j] = reach
    reach = ball.copy()
    for j in range(slice_j - 1, -1, -1):
        reach = ~_dilate_ring(~reach, radii[j])
        out[j] = reach
    return out


# --------------------------------------------------------------------------
# partitions of unity


@dataclass(frozen=True, eq=False)
class PartitionOfUnity:
    """Time-only cutoff pair with ``chi_adv`` = 1 in the past of the band."""

    chi_adv: np.ndarray
    chi_ret: np.ndarray
    band: tuple[int, int]

    @property
    def band_mask(self) -> np.ndarray:
        """Slices ``j_minus..j_plus``: where P(chi * solution) can be nonzero."""
        mask = np.zeros(self.chi_adv.shape, dtype=bool)
        mask[self.band[0] : self.band[1] + 1] = True
        return mask


def smoothstep_profile(n: int, j_minus: int, j_plus: int) -> np.ndarray:
    """Cubic smoothstep falling from 1 (``j <= j_minus``) to 0 (``j >= j_plus``)."""
    j = np.arange(n, dtype=float)
    s = np.clip((j - j_minus) / (j_plus - j_minus), 0.0, 1.0)
    rise = s * s * (3.0 - 2.0 * s)
    prof = 1.0 - np.round(rise / _PARTITION_QUANTUM) * _PARTITION_QUANTUM
    prof[j <= j_minus] = 1.0
    prof[j >= j_plus] = 0.0
    return prof


def make_partition(M: LatticeSpacetime, j_minus: int, j_plus: int) -> PartitionOfUnity:
    """Partition of unity with transition band ``(j_minus, j_plus)``."""
    if not (0 < j_minus < j_plus < M.Nt - 1):
        raise BandError(f"need 0 < j_minus < j_plus < Nt-1, got ({j_minus}, {j_plus})")
    prof = smoothstep_profile(M.Nt, j_minus, j_plus)
    chi_adv = np.repeat(prof[:, None], M.Nx, axis=1)
    chi_ret = 1.0 - chi_adv
    return PartitionOfUnity(_readonly(chi_adv), _readonly(chi_ret), (int(j_minus), int(j_plus)))


def region_from_function(M: LatticeSpacetime, pred: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> np.ndarray:
    """Boolean region from a predicate on the (T, X) coordinate arrays."""
    T, X = M.coordinates()
    return np.asarray(pred(T, X), dtype=bool)
