"""Lattice toolkit for the free Klein-Gordon field on curved 1+1 cylinders.

Modules: ``spacetime`` (grids, metrics, causal sets), ``kleingordon``
(operator assembly), ``green`` (advanced and retarded propagators),
``functionals`` and ``wick`` (deformed products), ``rce`` (relative Cauchy
evolution and stress-energy checks) and ``cli``.
"""

__version__ = "0.1.0"
