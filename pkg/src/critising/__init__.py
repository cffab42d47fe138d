"""Monte Carlo laboratory for the renormalized magnetization field of the critical 2D Ising model."""

from .lattice import BoundaryCondition, LatticeSpec, SubSquare, build_lattice
from .sampler import (BETA_C, P_C, Algorithm, SamplerConfig, SpinConfig, critical_constants,
                      sample_chain)

__version__ = "0.1.0"

__all__ = [
    "Algorithm", "BETA_C", "BoundaryCondition", "LatticeSpec", "P_C", "SamplerConfig",
    "SpinConfig", "SubSquare", "build_lattice", "critical_constants", "sample_chain",
]
