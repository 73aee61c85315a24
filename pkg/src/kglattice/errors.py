"""Exception types raised across the package."""


class KGLatticeError(Exception):
    """Base class for all package errors."""


class SignatureError(KGLatticeError):
    """Metric is not Lorentzian with a future-pointing time axis."""


class CFLError(KGLatticeError):
    """Time step too large for the local characteristic speed."""


class PerturbationError(KGLatticeError):
    """A metric perturbation is invalid on the given spacetime."""


class GeometryError(KGLatticeError):
    """A requested region or slab does not fit on the grid."""


class BandError(KGLatticeError):
    """Transition band indices are out of order or out of range."""


class SolveError(KGLatticeError):
    """A linear system in the Green-operator construction is singular."""


class NotASolutionError(KGLatticeError):
    """A field that should solve the Klein-Gordon equation does not."""


class NotAWeakSolutionError(KGLatticeError):
    """A distribution that should be a weak solution is not."""


class ArityOverflowError(KGLatticeError):
    """A kernel contraction would exceed the configured order cap."""


class SupportError(KGLatticeError):
    """Kernel support leaks outside the region it is restricted to."""


class RegionsNotDisjointError(KGLatticeError):
    """Two regions expected to be causally disjoint are not."""


class DefectError(KGLatticeError):
    """A bisolution fails the field equation beyond tolerance."""


class DecompositionError(KGLatticeError):
    """Kernel decomposition failed to reassemble within tolerance."""


class ConstructionError(KGLatticeError):
    """A constructed solution does not meet its verification thresholds."""


class ConfigError(KGLatticeError):
    """Experiment configuration is malformed or incomplete."""
