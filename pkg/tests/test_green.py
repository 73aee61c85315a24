import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kglattice.errors import GeometryError, NotAWeakSolutionError
from kglattice.experiments import anisotropic_cylinder, physical_columns, support_leaks
from kglattice.green import (
    antisymmetry_defect,
    band_source,
    build_green,
    green_residual,
    pair_E,
    solution_to_source,
    source_battery,
    weak_solution_reconstruct,
)
from kglattice.kleingordon import Coupling, assemble_P
from kglattice.spacetime import diamond, make_cylinder, make_partition, time_slab
from oracles import dense_advanced, dense_retarded


@pytest.fixture(scope="module")
def curved_small():
    M = make_cylinder(10, 16, 0.2, 0.1, ("conformal", lambda T, X: 1 + 0.1 * np.sin(np.pi * X) * np.sin(T)))
    return M, build_green(assemble_P(M, Coupling(0.25, 1.0)))


def test_retarded_matches_dense_solve(curved_small):
    M, G = curved_small
    f = np.random.default_rng(0).normal(size=M.size)
    ref = dense_retarded(G.P.matrix, M.Nt, M.Nx, f)
    np.testing.assert_allclose(G.apply_plus(f), ref, atol=1e-10 * np.max(np.abs(ref)))


def test_advanced_matches_dense_solve(curved_small):
    M, G = curved_small
    f = np.random.default_rng(1).normal(size=M.size)
    ref = dense_advanced(G.P.matrix, M.Nt, M.Nx, f)
    np.testing.assert_allclose(G.apply_minus(f), ref, atol=1e-10 * np.max(np.abs(ref)))


def test_transposes_match_dense(curved_small):
    M, G = curved_small
    g = np.random.default_rng(2).normal(size=M.size)
    np.testing.assert_allclose(G.apply_plus_T(g), G.E_plus.T @ g, atol=1e-10)
    np.testing.assert_allclose(G.apply_minus_T(g), G.E_minus.T @ g, atol=1e-10)


def test_residual_on_battery(G_massive, rng):
    S = source_battery(G_massive.spacetime, 64, rng)
    assert green_residual(G_massive, S) <= 1e-8


def test_propagator_kills_images_of_P(G_coupled, rng):
    M = G_coupled.spacetime
    g = source_battery(M, 1, rng)[0]
    Pg = G_coupled.P.interior @ g
    assert np.max(np.abs(G_coupled.apply(Pg))) <= 10 * G_coupled.tolerance * np.max(np.abs(g))


def test_point_source_wedge(G_massless):
    # the retarded solution of box u = delta is 1/2 inside the forward cone
    M = G_massless.spacetime
    f = np.zeros(M.shape)
    f[20, 16] = 1 / M.weights[0]
    u = G_massless.apply_plus(f.ravel()).reshape(M.shape)
    for j, i in [(30, 16), (30, 14), (34, 19), (40, 16)]:
        assert abs(u[j, i] - 0.5) <= 2 * M.dx
    assert u[19, 16] == 0.0
    assert np.all(u[:21] == 0.0)


def test_support_inclusion_exact(small):
    G = build_green(assemble_P(small, Coupling(0.0, 1.0)))
    assert support_leaks(G) == (0, 0)


def test_pairing_antisymmetry(G_massive, rng):
    f, fp = source_battery(G_massive.spacetime, 2, rng)
    a, b = pair_E(G_massive, f, fp), pair_E(G_massive, fp, f)
    assert abs(a + b) <= 1e-12 * abs(a)
    assert abs(pair_E(G_massive, f, f)) <= 1e-12 * np.sum(np.abs(G_massive.weights * f * G_massive.apply(f)))


def test_spacelike_sources_do_not_pair(flat, G_massive, rng):
    a = rng.normal(size=flat.size) * diamond(flat, 6, 3, 32).ravel()
    b = rng.normal(size=flat.size) * diamond(flat, 22, 3, 32).ravel()
    assert pair_E(G_massive, a, b) == 0.0


def test_antisymmetry_flat_exact(G_massive, flat):
    assert antisymmetry_defect(G_massive, physical_columns(flat)) <= 1e-12


def test_antisymmetry_second_order_on_anisotropic_metric():
    d = []
    for n in (32, 64):
        M = anisotropic_cylinder(n, 2 * n, 3.2 / n, 1.6 / n)
        G = build_green(assemble_P(M, Coupling(0.0, 1.0)), check_sources=0)
        d.append(antisymmetry_defect(G, physical_columns(M)))
    assert 3.5 <= d[0] / d[1] <= 4.5


def test_solution_to_source_reproduces_solution_above_band(G_massive, rng):
    M = G_massive.spacetime
    g = source_battery(M, 1, rng)[0] * time_slab(M, 0, 20).ravel()
    chi = make_partition(M, 30, 40)
    f = solution_to_source(G_massive, chi, G_massive.apply(g))
    diff = (G_massive.apply(f) - G_massive.apply(g)).reshape(M.shape)
    assert np.max(np.abs(diff[41:])) <= 1e-8 * np.max(np.abs(G_massive.apply(g)))


def test_constant_solution_source(G_massless):
    M = G_massless.spacetime
    chi = make_partition(M, 4, 9)
    t = solution_to_source(G_massless, chi, np.ones(M.size))
    Et = G_massless.apply(t).reshape(M.shape)
    np.testing.assert_allclose(Et[10:], 1.0, atol=1e-10)


def test_retarded_cutoff_flips_sign(G_massive, rng):
    M = G_massive.spacetime
    chi = make_partition(M, 30, 40)
    swapped = type(chi)(chi.chi_ret, chi.chi_adv, chi.band)
    g = source_battery(M, 1, rng)[0]
    Eg = G_massive.apply(g)
    f = band_source(G_massive.P, swapped, Eg)
    np.testing.assert_allclose(G_massive.apply(f), -Eg, atol=1e-8 * np.max(np.abs(Eg)))


def test_reconstruct_propagated_source(G_massive, rng):
    M = G_massive.spacetime
    chi = make_partition(M, 28, 34)
    u = G_massive.apply(source_battery(M, 1, rng)[0])
    r = weak_solution_reconstruct(G_massive, chi, (1, 2), u)
    # the end slices carry no equation, so only 1..Nt-2 are determined
    inner = slice(M.Nx, M.size - M.Nx)
    assert np.max(np.abs(r - u)[inner]) <= 1e-7 * np.max(np.abs(u))


def test_reconstruct_constant(G_massless):
    M = G_massless.spacetime
    chi = make_partition(M, 28, 34)
    u = np.ones(M.size)
    r = weak_solution_reconstruct(G_massless, chi, (1, 2), u)
    assert np.max(np.abs(r - u)[M.Nx : M.size - M.Nx]) <= 1e-7


def test_source_battery_needs_room():
    with pytest.raises(GeometryError):
        source_battery(make_cylinder(8, 5, 0.2, 0.1), 1, np.random.default_rng(0))


def test_reconstruct_rejects_non_solution(G_massive, rng):
    chi = make_partition(G_massive.spacetime, 28, 34)
    with pytest.raises(NotAWeakSolutionError):
        weak_solution_reconstruct(G_massive, chi, (1, 2), rng.normal(size=G_massive.spacetime.size))


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.0, 2.0), st.sampled_from([0.0, 0.25]))
def test_linearity_and_residual(seed, mass, xi):
    M = make_cylinder(8, 12, 0.2, 0.1)
    G = build_green(assemble_P(M, Coupling(xi, mass)), check_sources=0)
    r = np.random.default_rng(seed)
    a, b = source_battery(M, 2, r)
    c = r.normal()
    np.testing.assert_allclose(G.apply(a + c * b), G.apply(a) + c * G.apply(b), atol=1e-9 * (1 + abs(c)) * np.max(np.abs(G.E)))
    assert green_residual(G, np.stack([a, b])) <= 1e-8
