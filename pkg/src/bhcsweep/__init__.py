"""Adiabatic passage in Bose-Hubbard chains at three tiers of theory:
mean-field, truncated-Wigner, and exact quantum propagation, with
stationary-point stability analysis and phase-space chaos diagnostics."""

__version__ = "0.1.0"

from .errors import (BhcError, BranchLossError, CalibrationRangeError,
                     CapacityError, IntegrationError, NormDriftError,
                     ParameterError, PartialRunError, StaleStateError,
                     StatisticsError)
from .model import (ModelParams, SweepProtocol, dark_state,
                    derive_dimensionless, hopping_profile, load_config,
                    resolve_params, single_particle_hamiltonian)
from .fockspace import (FockBasis, FockOperatorSet, assemble_operators,
                        build_basis, dump_basis, instantaneous_spectrum,
                        occupations, site_reversal_permutation)
from .quantum import (LevelTrace, QuantumState, QuantumTrajectory, StepControl,
                      level_overlap_trace, propagate_frozen, propagate_quantum,
                      transfer_efficiency)
from .classical import (ClassicalState, ClassicalTrajectory, classical_energy,
                        eom_rhs, integrate_frozen, integrate_trajectory,
                        mft_efficiency)
from .twa import (Cloud, CloudTrajectory, calibrate_width,
                  efficiency_vs_epsilon, propagate_cloud, sample_cloud)
from .stability import (RegimeBorders, StabilityProfile, StationaryPoint,
                        bogoliubov_matrix, bogoliubov_modes,
                        closed_form_trimer_freqs, continue_branch, find_sp,
                        instability_windows, regime_borders)
from .chaos import (ChaosScore, EnergyScatter, SectionPoint, distance_from_sp,
                    energy_scatter, final_cloud_section, participation_number,
                    poincare_section, section_seed_fan)
