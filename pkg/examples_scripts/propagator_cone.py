"""Propagate a point source on a flat cylinder and print how the field fills the light cone."""

import numpy as np

from kglattice.green import build_green, green_residual, pair_E
from kglattice.kleingordon import Coupling, assemble_P
from kglattice.spacetime import causal_set, make_cylinder

M = make_cylinder(32, 64, 0.1, 0.05)
G = build_green(assemble_P(M, Coupling(0.0, 1.0)))

f = np.zeros((M.Nt, M.Nx))
f[20, 16] = 1.0 / (M.dx * M.dt)
u = G.apply(f.ravel()).reshape(M.Nt, M.Nx)

cone = causal_set(M, f != 0, "both")
print(f"relative residual of P E+- f = f on interior slices: {green_residual(G, f.ravel()):.2e}")
print(f"largest |E f| outside the causal set: {np.max(np.abs(u[~cone])):.2e}")
for j in (10, 20, 30, 40):
    row = np.flatnonzero(np.abs(u[j]) > 1e-12)
    print(f"slice {j:2d}: {row.size:2d} cells reached, peak {np.max(np.abs(u[j])):.3f}")

g = np.zeros_like(f)
g[25, 16] = f[20, 16]
print(f"E(f, g) = {pair_E(G, f.ravel(), g.ravel()):+.6f}, E(g, f) = {pair_E(G, g.ravel(), f.ravel()):+.6f}")
