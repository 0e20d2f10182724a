"""Dynamical invariants and non-adiabatic geometric phases for open
two-level systems.

The pipeline: build a Lindblad generator in the Pauli basis
(:mod:`invphase.superop`), pick or integrate a dynamical invariant
(:mod:`invphase.invariant`), decompose it into biorthogonal eigenvalue
blocks (:mod:`invphase.spectral`), and read off Abelian or non-Abelian
geometric and dynamical phases (:mod:`invphase.phase`).  Direct
master-equation integration (:mod:`invphase.evolution`) is the independent
oracle for every phase prediction, and :mod:`invphase.robustness` sweeps
decoherence parameters to certify which phases survive them.
"""

from .errors import (AmbiguousMatching, DegenerateFamily, DimensionMismatch,
                     InvPhaseError, NonDiagonalizable, NotBlockDecoupled,
                     NotCyclic, ScenarioParseError, ScenarioValidationError,
                     SingularExponent, StepTooLarge, VanishingDenominator,
                     VanishingOverlap)
from .superop import (PAULI_BASIS, DecoherenceChannel, apply_generator,
                      bit_flip, build_lindblad, build_lindblad_from_action,
                      coherence_vector, custom_channel, dephasing,
                      density_matrix, dissipator_action,
                      extract_internal_block, is_physical,
                      spontaneous_emission, state_vector)
from .spectral import (SpectralBasis, align_continuity,
                       check_biorthonormality, decompose)
from .invariant import (InvariantTrajectory, TimeGrid, bitflip_family,
                        dephasing_family, invariant_rhs, period,
                        solve_invariant, spontaneous_emission_family,
                        verify_invariant)
from .phase import (BasisPath, NonAbelianPhase, PhaseDecomposition,
                    align_basis_path, check_block_decoupling,
                    closed_form_dephasing_gp, coefficient_evolution,
                    coefficient_history, cyclic_geometric_phase,
                    cyclic_reference_dephasing, dynamical_phase,
                    dynamical_reference_dephasing, fold_phase,
                    nonabelian_gp, nonabelian_matrices,
                    noncyclic_geometric_phase, noncyclic_phase_series,
                    time_ordered_propagator)
from .evolution import (CoefficientHistory, StateTrajectory,
                        expand_in_invariant_basis, integrate_master,
                        oracle_compare)
from .robustness import (RobustnessReport, SweepScenario,
                         commutator_independence, phase_sweep)

__version__ = "0.1.0"
