"""Random band matrices, resolvent observables and quantum diffusion profiles."""

__version__ = "0.1.0"

from .lattice import (BandProfile, SampledBandMatrix, TorusLattice, VarianceMatrix, build_lattice,
                      build_variance_matrix, mix_mean_field, sample_matrix, sample_mean_field_mix)
from .semicircle import SemicircleData, SpectralParameter, alpha, msc, phi_eps_sq, phi_sq, upsilon

__all__ = [
    "BandProfile", "SampledBandMatrix", "TorusLattice", "VarianceMatrix", "build_lattice",
    "build_variance_matrix", "mix_mean_field", "sample_matrix", "sample_mean_field_mix",
    "SemicircleData", "SpectralParameter", "alpha", "msc", "phi_eps_sq", "phi_sq", "upsilon",
    "__version__",
]
