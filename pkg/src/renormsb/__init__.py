"""Renormalized quadratic forms for spin-boson models with supercritical form factors."""
from .modes import FormFactor, ModeGrid, Regularity, ww_family, subcritical_family, power_family
from .fock import FockBasis, build_basis, annihilate, create, second_quantize
from .dressing import SpinSpace, DressedSpace, build_dressed_space, renorm_inner, spin_boson_map
from .spin_form import renorm_spin_form, spectral_decompose, chi, ChiKernel
from .forms import QuadraticForm, MetricMismatchError
from .hamiltonian import (renorm_hamiltonian_form, dressed_regular_form, regular_hamiltonian, solve_gevp,
                          TruncationError)

__version__ = "0.1.0"

__all__ = [
    "FormFactor", "ModeGrid", "Regularity", "ww_family", "subcritical_family", "power_family",
    "FockBasis", "build_basis", "annihilate", "create", "second_quantize",
    "SpinSpace", "DressedSpace", "build_dressed_space", "renorm_inner", "spin_boson_map",
    "renorm_spin_form", "spectral_decompose", "chi", "ChiKernel",
    "QuadraticForm", "MetricMismatchError",
    "renorm_hamiltonian_form", "dressed_regular_form", "regular_hamiltonian", "solve_gevp", "TruncationError",
]
