"""resonance-lab: non-Hermitian effective Hamiltonians for open quantum systems.

Build a finite level set coupled to scattering continua, solve the
biorthogonal spectral problem of the energy-dependent effective Hamiltonian,
and derive resonances, exceptional points, phase rigidities, S-matrix and
transmission, time-domain decay laws and bound states in the continuum, with
a discretized full-space Hermitian oracle for independent validation.
"""

from .bic import (BicCandidate, BicVerification, find_bics, verify_bic,
                  width_upper_bound)
from .dynamics import (DecayTrace, SaturationTable, average_rate_saturation,
                       decay_rate, evolve)
from .errors import (BranchAmbiguityError, ClosedChannelError,
                     DefectiveSpectrumError, InternalConsistencyError,
                     InvalidInputError, ModelFormatError,
                     NumericalFailureError, ResonanceLabError,
                     SingularSelfEnergyError, UndefinedRigidityError)
from .model import (Channel, ChannelKind, EffectiveHamiltonian, ParamRef,
                    SystemModel, build_h_eff, coupling_vector,
                    expected_width_sum, is_channel_open, open_channel_mask)
from .modelfile import load_model, loads_model
from .oracle import (DiscretizedFullSpace, SurvivalResult, build_full,
                     fit_lorentzian_resonance, survival_probability)
from .scattering import (ScatteringPoint, c_coefficients, phase_rigidity_psi,
                         s_matrix_full, s_matrix_resonant, scattering_point,
                         transmission, unitarity_residual)
from .spectral import (ExceptionalPoint, ResonanceSpectrum, ResonanceState,
                       SweepResult, diagonalize, find_exceptional_points,
                       solve_fixed_point, sweep)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "Channel", "ChannelKind", "EffectiveHamiltonian", "ParamRef", "SystemModel",
    "build_h_eff", "coupling_vector", "expected_width_sum", "is_channel_open",
    "open_channel_mask", "load_model", "loads_model",
    "ResonanceSpectrum", "ResonanceState", "SweepResult", "ExceptionalPoint",
    "diagonalize", "solve_fixed_point", "sweep", "find_exceptional_points",
    "ScatteringPoint", "s_matrix_resonant", "s_matrix_full", "transmission",
    "phase_rigidity_psi", "c_coefficients", "scattering_point",
    "unitarity_residual",
    "DecayTrace", "SaturationTable", "evolve", "decay_rate",
    "average_rate_saturation",
    "BicCandidate", "BicVerification", "find_bics", "verify_bic",
    "width_upper_bound",
    "DiscretizedFullSpace", "SurvivalResult", "build_full",
    "survival_probability", "fit_lorentzian_resonance",
    "ResonanceLabError", "InvalidInputError", "ModelFormatError",
    "SingularSelfEnergyError", "NumericalFailureError", "BranchAmbiguityError",
    "DefectiveSpectrumError", "ClosedChannelError", "UndefinedRigidityError",
    "InternalConsistencyError",
]
