"""Finite-difference derivative of the relative evolution against the stress-energy pairing."""

from kglattice.kleingordon import Coupling
from kglattice.rce import battery_bands, battery_fields, gradient_check, make_rce_context
from kglattice.spacetime import make_cylinder

for n in (32, 64):
    M = make_cylinder(n, 2 * n, 3.2 / n, 1.6 / n)
    t, f, h = battery_fields(M, 203)
    for xi, m in ((0.0, 1.0), (0.25, 1.0), (1 / 6, 0.0)):
        ctx = make_rce_context(M, h, battery_bands(M), Coupling(xi, m))
        r = gradient_check(ctx, t, f)
        print(f"{n}x{2 * n} xi={xi:.3f} m={m:g}: derivative {r.lhs:+.6e}, pairing {r.rhs:+.6e}, "
              f"relative gap {r.rel_error:.1e}")
