"""rfphi4: finite-volume toolkit for coarse-grained random-field phi^4 models.

Lattice geometry, exact Gaussian machinery, random-walk resolvent
expansions, the sign-kernel coarse graining with its anharmonic-weight
expansion, Ising contour constants, and quenched Monte Carlo.
"""

from ._backend import BACKEND_NAME
from .lattice import LatticeVolume, SiteSet
from .model import BoundaryField, DisorderField, IsingConfig, ModelParams, SpinField

__version__ = "0.1.0"

__all__ = [
    "BACKEND_NAME",
    "LatticeVolume",
    "SiteSet",
    "ModelParams",
    "BoundaryField",
    "SpinField",
    "IsingConfig",
    "DisorderField",
]
