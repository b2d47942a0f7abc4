"""Discrete weak-membrane energies and their homogenized cell formulas."""

from .elastic_cell import (QuadraticCellSystem, assemble_cell_system, bulk_density,
                           closed_form_density, membrane_cell_density, solve_cell)
from .energies import (EnergyBreakdown, blend_energy_bound, cutoff_blend, cutoff_weights,
                       elastic_energy, fidelity_energy, spin_energy, truncated_potential,
                       weak_membrane_energy)
from .exceptions import (HomogLabError, IncompatibleFunctionError, IncompleteFunctionError,
                         InvalidParameterError, InvalidSpinError, RefusalError, SolverError)
from .lattice import (CoefficientField, DilationCount, LatticeFunction, LatticeRegion,
                      NeighborSet, count_in_dilation, jump_datum, lattice_points)
from .membrane import (GncSchedule, LineField, alternating_minimize, coarea_threshold,
                       discrete_gradient, exact_minimize_1d, lipschitz_truncation,
                       maximal_function)
from .results import CellProblemResult, DensityEstimate
from .spin_cell import (FlowNetwork, SpinConfiguration, brute_force_ground_state,
                        build_cut_network, min_cut_ground_state, surface_density, wulff_sample)

__version__ = "0.1.0"
