"""Deformed products of linear fields and a Wick square in two presentations."""

import numpy as np

from kglattice.functionals import Functional, evaluate, star_E
from kglattice.green import build_green, pair_E, source_battery
from kglattice.kleingordon import Coupling, assemble_P
from kglattice.spacetime import make_cylinder, smooth_bump
from kglattice.wick import lambda_transport, make_bisolution, star_H

M = make_cylinder(16, 32, 0.2, 0.1)
G = build_green(assemble_P(M, Coupling(0.0, 1.0)))
w = M.weights
rng = np.random.default_rng(7)
a, b = source_battery(M, 2, rng)

A, B = Functional.linear(w, a), Functional.linear(w, b)
comm = star_E(A, B, G) - star_E(B, A, G)
print(f"[A, B] = {evaluate(comm, np.zeros(M.size)):.6f}")
print(f"i E(a, b) = {1j * pair_E(G, a, b):.6f}")

H = make_bisolution(G, ("mode_sum", 4, 1))
Hp = make_bisolution(G, ("mode_sum", 4, 2))
g = smooth_bump(M, 1.6, 1.6, 0.4, 0.6).ravel()
W = Functional.diagonal(w, g)
phi = rng.normal(size=M.size)
moved = lambda_transport(W, H, Hp)
print(f"Wick square at phi, H presentation:  {evaluate(W, phi).real:+.6f}")
print(f"after transport to H':              {evaluate(moved, phi).real:+.6f}")
print(f"shift, independent of phi:         {evaluate(moved - W, phi).real:+.6f}")
lhs = lambda_transport(star_H(A, B, H, G), H, Hp)
rhs = star_H(lambda_transport(A, H, Hp), lambda_transport(B, H, Hp), Hp, G)
print(f"intertwining gap: {abs(evaluate(lhs - rhs, phi)):.2e}")
