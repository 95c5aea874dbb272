"""Resonant normal forms for finitely differentiable near-integrable
Hamiltonians: periodic approximations of frequencies, iterated periodic
averaging with explicit generators, and desk-scale experiments on action
stability and manifold splitting."""

from .trigpoly import TrigTaylorPoly, DomainError, DimensionMismatchError
from .diophantine import (ExactFrequency, PeriodicVector, PsiTable,
                          golden_frequency, cubic_frequency, psi_table,
                          delta_star, rational_span, resonance_lattice,
                          periodic_approximations, dioph_check)
from .normalform import (NormalFormConfig, NormalFormResult, LieGenerator,
                         NormLedger, ThresholdError, average,
                         solve_homological, lie_transform, periodic_step,
                         normal_form, localize, map_distance,
                         symplectic_defect, transform_points)
from .dynamics import (Trajectory, DriftReport, DriftDemoFamily,
                       integrate, drift_report, drift_demo,
                       stability_experiment, projector_onto_span)
from .splitting import (ResonantModel, BandPatch, GeneratingFunction,
                        SplittingReport, pendulum_model, fixed_point,
                        periodic_orbit, manifolds, splitting_matrix,
                        split_model, mu_sweep, epsilon_sweep,
                        separatrix_action)

__version__ = "0.1.0"
