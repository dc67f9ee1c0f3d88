"""spinpath: coherent-state spin kernels from planar Brownian-bridge Monte
Carlo, cross-checked against exact matrix exponentials, a truncated-Fock
canonical oracle, and a grid-propagated magnetic Schrodinger semigroup."""

__version__ = "0.1.0"

from .spin_core import (SpinSystem, CoherentFamily, build_spin_system, weight_g,
                        coherent_overlap, coherent_rep, polynomial_structure_check)
from .symbols import SymbolFn, table_symbol, constant_symbol, combine_symbols, ZERO_SYMBOL
from .quadrature import (PlanarQuadrature, default_quadrature, integrate,
                         reconstruct_operator, unity_resolution_residual,
                         quantize_general_j, ac_dimension_formula)
from .oracle import (mat_exp, HamiltonianSpec, monomial_hamiltonian,
                     symbol_hamiltonian, parse_hamiltonian, parse_complex,
                     exact_kernel, exact_kernel_unitary, contract_hamiltonian,
                     contraction_kernel_lhs, FockSystem, fock_oracle_kernel,
                     canonical_overlap)
from .bridge import (BridgeConfig, BridgePath, sample_bridge, kinetic_stratonovich,
                     nu_term, symbol_term, ito_weight, bridge_mean, bridge_covariance)
from .mc import (KernelEstimate, estimate_kernel, estimate_kernel_both_forms,
                 long_time_estimate, unitary_estimate, nu_sweep, long_time_sweep,
                 unitary_sweep, default_m_steps)
from .schrodinger import (assemble_R, low_spectrum, factorization_residual,
                          propagate_kernel, strong_convergence_probe, GridPropagator)
