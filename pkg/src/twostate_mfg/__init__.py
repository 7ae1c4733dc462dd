"""Two-state mean field game with non-unique equilibria.

Closed-form MFG solutions, the entropy solution of the master equation, the
N-player Nash value system, jump-process simulation and the potential-game
selection criterion, with estimator-style front ends.
"""

from .core import (
    MeanState,
    PlayerState,
    SimplexFraction,
    TimeGrid,
    fraction_to_mean,
    hamiltonian,
    mean_to_fraction,
    monotonicity_gap,
    optimal_rate,
    terminal_cost,
)
from .master import (
    EntropyField,
    InducedFlow,
    check_entropy_jump,
    entropy_Z,
    induced_flow,
    pde_residual,
    sign_root,
    u_star,
    value_U,
)
from .mfg import (
    ConsistencyRoots,
    MeanFieldGame,
    MfgTrajectory,
    build_trajectory,
    consistency_poly,
    enumerate_terminal_means,
    threshold_time,
    verify_mfg_residual,
)
from .nash import (
    NashValueFunction,
    ValueTable,
    convergence_error,
    nash_rate,
    solve_value,
    verify_sign_property,
    w_n,
    z_n,
)
from .potential import BranchCosts, branch_costs, cost_quadrature, phi
from .simulation import (
    ChaosEstimate,
    CoupledPaths,
    SimConfig,
    chaos_metric,
    simulate_coupled,
    simulate_iid_limit,
    simulate_nash,
    zero_start_experiment,
)

__version__ = "0.1.0"
