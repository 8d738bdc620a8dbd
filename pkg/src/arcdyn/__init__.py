"""arcdyn: coupled electron-nuclear wavepacket dynamics on a 1-D two-level
double-arc model, with exact-factorization diagnostics and nuclear-density
interference analysis."""

from .errors import (ArcdynError, CoefficientError, ConfigError,
                     ConvergenceError, InsufficientSeries, LeakageError,
                     MismatchError, QuadratureError, ScheduleMismatch,
                     StabilityError, StencilError)
from .model import (BOData, ChannelHamiltonian, GridSpec, Hamiltonian,
                    ModelParams, assemble_hamiltonian, channel_hamiltonian,
                    compute_nac, diagonalize_bo, energy_width,
                    eval_potentials)
from .propagator import (AdiabaticChannel, RunRecord, SpinorField,
                         assemble_superposition, initial_chi,
                         initial_component, propagate, run_adiabatic,
                         run_component, run_superposition)
from .efactor import (EFDiagnostics, compute_diagnostics, extract_factors,
                      marginal_density, momentum_function, overlap_field,
                      tdpes_gi_part, vector_potential, y_complex)
from .interference import (DensityDecomposition, ReducedDensityMatrix,
                           adiabatic_spinor, assemble_total, cross_density,
                           decompose, ef_decompose_rho, nac_region_mass,
                           reduced_density_matrix)
from .perturb import (OrderComparison, PerturbationSeries, S1Result,
                      ZerothOrderFactors, aligned_exact_overlap, apply_enc,
                      compare_orders, perturbation_series, s1_overlap,
                      zeroth_factors)

__version__ = "0.1.0"
