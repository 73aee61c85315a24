import numpy as np
import pytest

from kglattice.errors import GeometryError, NotASolutionError
from kglattice.functionals import Functional, equivalence_defect, evaluate, star_E
from kglattice.green import build_green, source_battery
from kglattice.kleingordon import Coupling, assemble_P
from kglattice.rce import (
    battery_bands,
    battery_fields,
    beta,
    gradient_check,
    gradient_check_order_n,
    kernel_decompose,
    make_rce_context,
    massless_counterexample,
    null_degenerate_solution,
    null_derivatives,
    null_stress_component,
    operator_support,
    propagate_kernel,
    random_perturbation,
    rce_apply,
    reassembly_residual,
    stress_energy_pairing,
    stress_energy_tensor,
    support_diagnostic,
    tau_contract,
)
from kglattice.spacetime import (
    MetricPerturbation,
    diamond,
    dilate,
    make_cylinder,
    make_partition,
    smooth_bump,
)
from oracles import canonical_stress
from test_kleingordon import conformal_cylinder


def bump_h(M, t0=1.6, x0=1.6, amp=0.2):
    b = smooth_bump(M, t0, x0, 0.3, 0.5)
    return MetricPerturbation.from_components(amp * b, 0.3 * amp * b, -0.5 * amp * b)


@pytest.fixture(scope="module")
def ctx(flat, G_massive):
    return make_rce_context(flat, bump_h(flat), battery_bands(flat), Coupling(0.0, 1.0), G_massive)


def test_zero_perturbation_reuses_green(flat, G_massive):
    c = make_rce_context(flat, MetricPerturbation.zero(flat), battery_bands(flat), Coupling(0.0, 1.0), G_massive)
    assert c.G_h is c.G and c.M_h is c.M


def test_default_bands_bracket_the_perturbation(flat, G_massive):
    h = bump_h(flat)
    c = make_rce_context(flat, h, coupling=Coupling(0.0, 1.0), G=G_massive)
    rows = np.flatnonzero(h.support.any(axis=1))
    assert c.chi_minus.band[1] < rows[0] and c.chi_plus.band[0] > rows[-1]


def test_context_rejects_bands_inside_the_cone(flat, G_massive):
    with pytest.raises(GeometryError):
        make_rce_context(flat, bump_h(flat), ((20, 30), (50, 55)), Coupling(0.0, 1.0), G_massive)


def test_context_rejects_wrong_shape(flat):
    with pytest.raises(GeometryError):
        make_rce_context(flat, np.zeros((4, 4, 2, 2)))


def test_context_rejects_foreign_green(flat, G_coupled):
    with pytest.raises(GeometryError):
        make_rce_context(flat, bump_h(flat), battery_bands(flat), Coupling(0.0, 1.0), G_coupled)


def test_beta_is_identity_without_perturbation(flat, G_massive, rng):
    c = make_rce_context(flat, MetricPerturbation.zero(flat), battery_bands(flat), Coupling(0.0, 1.0), G_massive)
    t, f = source_battery(flat, 2, rng)
    w = flat.weights
    a = np.sum(w * beta(c, t) * G_massive.apply(f))
    b = np.sum(w * t * G_massive.apply(f))
    assert abs(a - b) <= 1e-10 * abs(b)


def test_rce_fixes_the_unit(ctx, flat):
    one = Functional.unit(flat.weights, 2.0)
    assert evaluate(rce_apply(ctx, one), np.ones(flat.size)) == 2.0


def _product_defect(n, conformal):
    M = make_cylinder(n, 2 * n, 3.2 / n, 1.6 / n)
    G = build_green(assemble_P(M, Coupling(0.0, 1.0)))
    b = smooth_bump(M, 1.6, 1.6, 0.3, 0.5)
    h = MetricPerturbation.from_components(0.2 * b, 0.0 * b, -0.2 * b) if conformal else bump_h(M)
    ctx = make_rce_context(M, h, battery_bands(M), Coupling(0.0, 1.0), G)
    a, c = source_battery(M, 2, np.random.default_rng(3))
    A, B = Functional.linear(M.weights, a), Functional.linear(M.weights, c)
    lhs = rce_apply(ctx, star_E(A, B, G))
    rhs = star_E(rce_apply(ctx, A), rce_apply(ctx, B), G)
    return equivalence_defect(lhs, rhs, G, sample_count=8)


def test_rce_respects_products_for_conformal_perturbations():
    # conformal metrics keep the lattice E exactly antisymmetric
    assert _product_defect(32, True) <= 1e-12


def test_rce_product_defect_is_a_discretisation_error():
    d = [_product_defect(n, False) for n in (32, 64)]
    assert d[0] <= 1e-4
    assert d[1] < 0.5 * d[0]


def test_pairing_vanishes_without_perturbation(flat, G_massive, rng):
    c = make_rce_context(flat, MetricPerturbation.zero(flat), battery_bands(flat), Coupling(0.0, 1.0), G_massive)
    u = G_massive.apply(source_battery(flat, 1, rng)[0])
    assert stress_energy_pairing(c, u, u) == 0.0


def test_pairing_needs_solutions(ctx, flat, rng):
    with pytest.raises(NotASolutionError):
        stress_energy_pairing(ctx, rng.normal(size=flat.size), rng.normal(size=flat.size))


def test_flat_stress_tensor_matches_canonical_form(flat, G_massive, rng):
    u = G_massive.apply(source_battery(flat, 1, rng)[0]).reshape(flat.shape)
    T = stress_energy_tensor(flat, Coupling(0.0, 1.0), u, u, tt_product="centered")
    for j, i in [(10, 3), (20, 16), (32, 31), (40, 0), (50, 8)]:
        np.testing.assert_allclose(T[j, i], canonical_stress(u, flat.dt, flat.dx, 1.0, j, i), atol=1e-12)


def test_staggered_time_product_is_close_to_centred(flat, G_massive, rng):
    u = G_massive.apply(source_battery(flat, 1, rng)[0])
    c = Coupling(0.0, 1.0)
    a = stress_energy_tensor(flat, c, u, u)[..., 0, 0][2:-2]
    b = stress_energy_tensor(flat, c, u, u, tt_product="centered")[..., 0, 0][2:-2]
    assert np.max(np.abs(a - b)) <= 0.05 * np.max(np.abs(b))


def test_einstein_term_is_negligible_in_two_dimensions():
    M = conformal_cylinder(32)
    G = build_green(assemble_P(M, Coupling(0.25, 1.0)))
    u = G.apply(source_battery(M, 1, np.random.default_rng(0))[0])
    c = Coupling(0.25, 1.0)
    a = stress_energy_tensor(M, c, u, u)
    b = stress_energy_tensor(M, c, u, u, include_einstein=False)
    assert np.max(np.abs(a - b)[2:-2]) <= 1e-10 * np.max(np.abs(a))


def test_curvature_coupling_changes_the_pairing(flat, G_massive, G_coupled):
    t, f, h = battery_fields(flat, 3)
    vals = []
    for G, c in ((G_massive, Coupling(0.0, 1.0)), (G_coupled, Coupling(0.25, 1.0))):
        ctx = make_rce_context(flat, h, battery_bands(flat), c, G)
        vals.append(stress_energy_pairing(ctx, G.apply(t), G.apply(f)))
    assert abs(vals[0] - vals[1]) > 1e-2 * abs(vals[0])


def test_gradient_matches_stress_energy(flat, G_massive):
    t, f, h = battery_fields(flat, 200)
    ctx = make_rce_context(flat, h, battery_bands(flat), Coupling(0.0, 1.0), G_massive)
    rep = gradient_check(ctx, t, f)
    assert rep.rel_error <= 1e-3
    assert 1.5 <= rep.order_estimate <= 2.5


def test_gradient_for_causally_separated_probe(flat, G_massive, rng):
    h = bump_h(flat, t0=1.6, x0=0.8, amp=0.1)
    ctx = make_rce_context(flat, h, battery_bands(flat), Coupling(0.0, 1.0), G_massive)
    t = source_battery(flat, 1, rng)[0]
    f = rng.normal(size=flat.size) * diamond(flat, 24, 5, 32).ravel()
    Ef = G_massive.apply(f)
    assert not np.any((Ef.reshape(flat.shape) != 0) & dilate(flat, operator_support(ctx), 1))
    rep = gradient_check(ctx, t, f)
    scale = np.sum(np.abs(flat.weights * t * G_massive.apply(f)))
    assert abs(rep.rhs) <= 1e-14 * scale and abs(rep.lhs) <= 1e-10 * scale


def test_tau_contract(flat, G_massive, rng):
    w = flat.weights
    a, b, f = source_battery(flat, 3, rng)
    np.testing.assert_array_equal(tau_contract(Functional.linear(w, a), 1, f, G_massive), a)
    Ef = G_massive.apply(f)
    tau = tau_contract(Functional.separable(w, [a, b]), 2, f, G_massive)
    expected = 0.5 * (a * np.sum(w * b * Ef) + b * np.sum(w * a * Ef))
    np.testing.assert_allclose(tau, expected, rtol=1e-12, atol=1e-14 * np.max(np.abs(expected)))
    with pytest.raises(ValueError):
        tau_contract(Functional.linear(w, a), 0, f, G_massive)


def test_second_order_gradient(flat, G_massive):
    t, f, h = battery_fields(flat, 205)
    ctx = make_rce_context(flat, h, battery_bands(flat), Coupling(0.0, 1.0), G_massive)
    F = Functional.separable(flat.weights, [t, t + 0.1 * f])
    rep = gradient_check_order_n(ctx, F, 2, f)
    assert rep.rel_error <= 1e-3


def test_operator_support_contains_perturbation(ctx, flat):
    S = operator_support(ctx)
    supp = ctx.h.support
    assert np.all(S[supp])
    assert np.all(dilate(flat, supp, 2)[S])


def test_kernel_decomposition_one_slot(G_massive, flat, rng):
    chi = make_partition(flat, 28, 36)
    t = source_battery(flat, 1, rng)[0]
    s, us = kernel_decompose(t, G_massive, chi)
    assert reassembly_residual(t, s, us, G_massive) <= 1e-12
    assert not np.any(s.reshape(flat.shape)[~chi.band_mask])
    np.testing.assert_allclose(propagate_kernel(s, G_massive), G_massive.apply(t), atol=1e-10 * np.abs(G_massive.apply(t)).max())


def test_kernel_decomposition_two_slots(small, rng):
    G = build_green(assemble_P(small, Coupling(0.0, 1.0)))
    chi = make_partition(small, 4, 7)
    a, b = source_battery(small, 2, rng)
    t = Functional.separable(small.weights, [a, b])
    s, us = kernel_decompose(t, G, chi)
    assert len(us) == 2
    assert reassembly_residual(t, s, us, G) <= 1e-10
    band = chi.band_mask.ravel()
    assert not np.any(s[~band]) and not np.any(s[:, ~band])


def test_support_diagnostic(G_massive, flat, rng):
    K = diamond(flat, 16, 5, 32)
    t = rng.normal(size=flat.size) * K.ravel()
    d = support_diagnostic(t, K, G_massive)
    assert d["max_outside"] == 0.0 and d["max_total"] > 0
    shifted = diamond(flat, 4, 3, 32)
    assert support_diagnostic(t, shifted, G_massive)["relative_outside"] > 0.1


def test_null_degenerate_solution(flat, G_massive):
    sol = null_degenerate_solution(flat, G_massive, 1.6)
    assert abs(sol.value) <= 5 * flat.dx**2
    assert abs(sol.null_derivative) <= 5 * flat.dx
    assert abs(sol.null_second_derivative) >= 0.5
    assert null_derivatives(flat, sol.field, sol.point) == (sol.value, sol.null_derivative, sol.null_second_derivative)
    # minimal coupling on flat space: T_uu = (d_u phi)^2 with n null
    Tuu = null_stress_component(flat, Coupling(0.0, 1.0), sol.field, sol.field, sol.point)
    assert Tuu == pytest.approx(sol.null_derivative**2, rel=1e-10, abs=1e-14)


def test_random_perturbation_is_compact(flat):
    h = random_perturbation(flat, np.random.default_rng(0))
    rows = np.flatnonzero(h.support.any(axis=1))
    assert rows.size and rows[0] >= flat.Nt // 4 and rows[-1] <= 3 * flat.Nt // 4


def test_massless_counterexample(flat, G_massless):
    probe = diamond(flat, 16, 4, 6)
    rep = massless_counterexample(flat, G_massless, probe, perturbations=2)
    assert rep.max_pairing <= 1e-10
    assert max(abs(d) for d in rep.fd_derivatives) <= 1e-8
    assert rep.max_beta_defect <= 1e-7
    assert rep.value > 0.1
    assert abs(abs(rep.integral) - 0.5) <= 1e-12
    assert abs(rep.value - abs(rep.integral)) <= 1e-6


def test_massless_counterexample_needs_massless_field(flat, G_massive):
    with pytest.raises(ValueError):
        massless_counterexample(flat, G_massive, diamond(flat, 16, 4, 6), perturbations=1)
