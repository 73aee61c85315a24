import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kglattice.errors import BandError, CFLError, GeometryError, PerturbationError, SignatureError
from kglattice.spacetime import (
    MetricPerturbation,
    causal_complement,
    causal_set,
    diamond,
    dilate,
    make_cylinder,
    make_partition,
    perturb,
    region_is_causally_convex,
    smooth_bump,
    smoothstep_profile,
    time_slab,
)
from oracles import convex_by_paths, flat_cone, lattice_paths_future, lattice_paths_past


def test_flat_weights(flat):
    # sqrt|det eta| = 1, so every weight is the cell area dx dt
    assert np.all(flat.weights == 0.1 * 0.05)
    np.testing.assert_allclose(flat.weights, 0.005, rtol=1e-15)


def test_constant_conformal_factor_scales_weights():
    M = make_cylinder(32, 64, 0.1, 0.05, ("conformal", 2.0))
    np.testing.assert_allclose(M.weights, 0.02, rtol=1e-15)


def test_cfl_violation():
    with pytest.raises(CFLError):
        make_cylinder(8, 8, 0.1, 0.2)


def test_bad_signature():
    g = np.zeros((8, 8, 2, 2))
    g[..., 0, 0] = -1.0
    g[..., 1, 1] = 1.0
    with pytest.raises(SignatureError):
        make_cylinder(8, 8, 0.1, 0.05, g)


def test_zero_perturbation_returns_same_object(flat):
    assert perturb(flat, MetricPerturbation.zero(flat)) is flat


def test_perturbation_is_local(flat):
    h = np.zeros(flat.shape + (2, 2))
    h[30:34, 10:14, 0, 0] = 0.1
    Mh = perturb(flat, MetricPerturbation(h))
    changed = np.any(Mh.metric != flat.metric, axis=(2, 3))
    expected = np.zeros(flat.shape, dtype=bool)
    expected[30:34, 10:14] = True
    assert np.array_equal(changed, expected)


def test_perturbation_breaking_signature(flat):
    h = np.zeros(flat.shape + (2, 2))
    h[30, 10, 0, 0] = -1.5
    with pytest.raises(PerturbationError):
        perturb(flat, MetricPerturbation(h))


def test_perturbation_on_end_slabs_rejected(flat):
    h = np.zeros(flat.shape + (2, 2))
    h[1, 10, 0, 0] = 0.01
    with pytest.raises(PerturbationError):
        perturb(flat, MetricPerturbation(h))


def test_empty_region_has_empty_causal_set(flat):
    K = np.zeros(flat.shape, dtype=bool)
    assert not causal_set(flat, K).any()
    assert causal_complement(flat, K).all()


def test_full_slice(flat):
    K = time_slab(flat, 20, 20)
    fut = causal_set(flat, K, "future")
    assert np.array_equal(fut, time_slab(flat, 20, flat.Nt - 1))
    assert not causal_complement(flat, K).any()


def test_point_future_matches_path_search(flat):
    K = np.zeros(flat.shape, dtype=bool)
    K[20, 16] = True
    radii = flat.step_radii()
    oracle = lattice_paths_future(flat.Nt, flat.Nx, [(20, 16)], radii)
    assert np.array_equal(causal_set(flat, K, "future"), oracle)
    # after two steps the rounded-outward cone spans five cells
    assert causal_set(flat, K, "future")[22].sum() == 5


def test_point_future_contains_continuum_cone(flat):
    K = np.zeros(flat.shape, dtype=bool)
    K[20, 16] = True
    cone = flat_cone(flat.Nt, flat.Nx, flat.dt, flat.dx, 20, 16)
    assert np.all(causal_set(flat, K, "future")[cone])


def test_complement_of_point_is_exterior_of_double_cone(flat):
    K = np.zeros(flat.shape, dtype=bool)
    K[32, 16] = True
    radii = flat.step_radii()
    both = lattice_paths_future(flat.Nt, flat.Nx, [(32, 16)], radii) | lattice_paths_past(
        flat.Nt, flat.Nx, [(32, 16)], radii
    )
    assert np.array_equal(causal_complement(flat, K), ~both)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 6), st.integers(0, 11), st.integers(0, 11), st.integers(0, 11), st.integers(0, 11))
def test_causal_set_matches_paths_on_random_regions(npts, a, b, c, d):
    M = make_cylinder(12, 12, 0.1, 0.05)
    K = np.zeros(M.shape, dtype=bool)
    pts = [(a, b), (c, d), ((a + c) % 12, (b * d) % 12)][: max(1, min(npts, 3))]
    for p in pts:
        K[p] = True
    radii = M.step_radii()
    starts = list(zip(*np.nonzero(K)))
    assert np.array_equal(causal_set(M, K, "future"), lattice_paths_future(12, 12, starts, radii))
    assert np.array_equal(causal_set(M, K, "past"), lattice_paths_past(12, 12, starts, radii))


def test_step_partition():
    M = make_cylinder(32, 64, 0.1, 0.05)
    chi = make_partition(M, 10, 11)
    prof = chi.chi_adv[:, 0]
    assert np.all(prof[:11] == 1.0) and np.all(prof[11:] == 0.0)


def test_smoothstep_partition_sums_to_one(flat):
    chi = make_partition(flat, 10, 20)
    assert np.all(chi.chi_adv + chi.chi_ret == 1.0)
    assert chi.chi_adv[15, 0] == 0.5


def test_partition_band_checks(flat):
    with pytest.raises(BandError):
        make_partition(flat, 20, 20)
    with pytest.raises(BandError):
        make_partition(flat, 0, 5)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 40), st.integers(1, 20))
def test_smoothstep_is_monotone(lo, width):
    prof = smoothstep_profile(64, lo, lo + width)
    assert np.all(np.diff(prof) <= 0)
    assert prof[0] == 1.0 and prof[-1] == 0.0


def test_slab_is_convex(flat):
    assert region_is_causally_convex(flat, time_slab(flat, 10, 20))


def test_convexity_against_path_enumeration():
    M = make_cylinder(16, 16, 0.1, 0.05)
    radii = M.step_radii()
    D1 = diamond(M, 3, 3, 8)
    D2 = diamond(M, 11, 3, 8)
    both = D1 | D2
    assert region_is_causally_convex(M, both) == convex_by_paths(both, radii) is True
    holed = D1.copy()
    holed[8, 3] = False
    assert region_is_causally_convex(M, holed) == convex_by_paths(holed, radii) is False


def test_unit_radius_diamond_is_single_cell(flat):
    D = diamond(flat, 10, 1, 30)
    assert D.sum() == 1 and D[30, 10]


def test_diamond_matches_dependence_oracle(flat):
    D = diamond(flat, 16, 4, 32)
    radii = flat.step_radii()
    ball = np.zeros(flat.Nx, dtype=bool)
    ball[13:20] = True
    expected = np.zeros(flat.shape, dtype=bool)
    for j in range(flat.Nt):
        for i in range(flat.Nx):
            if j >= 32:
                cone = lattice_paths_past(flat.Nt, flat.Nx, [(j, i)], radii)
            else:
                cone = lattice_paths_future(flat.Nt, flat.Nx, [(j, i)], radii)
            expected[j, i] = np.all(ball[cone[32]])
    assert np.array_equal(D, expected)
    # radius 4 on a 0.5 Courant grid: three slices above and below the base
    assert np.flatnonzero(D.any(axis=1)).tolist() == list(range(29, 36))


def test_diamond_rejects_wrapping(flat):
    with pytest.raises(GeometryError):
        diamond(flat, 0, 17, 10)


def test_dilate_grows_by_one(flat):
    K = np.zeros(flat.shape, dtype=bool)
    K[10, 5] = True
    assert dilate(flat, K, 1).sum() == 9


def test_bump_vanishes_outside_box(flat):
    b = smooth_bump(flat, 1.6, 1.6, 0.2, 0.3)
    T, X = flat.coordinates()
    assert np.all(b[np.abs(T - 1.6) >= 0.2] == 0.0)
    assert b.max() <= 1.0 and b.max() > 0.9
