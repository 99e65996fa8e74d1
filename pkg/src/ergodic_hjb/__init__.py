"""Ergodic Bellman problems on the periodic torus.

Library layout: grids and discrete norms (:mod:`.grids`), coefficient terms
and problem instances (:mod:`.expressions`, :mod:`.problems`), the monotone
upwind solver (:mod:`.solver`), vanishing-discount continuation
(:mod:`.ergodic`), paired-solve perturbation studies (:mod:`.cde`), the
two-scale pipeline (:mod:`.homogenization`), and the CLI (:mod:`.cli`).
"""

__version__ = "0.1.0"

from .grids import (
    GridFunction,
    NormReport,
    TorusGrid,
    build_grid,
    discrete_derivatives,
    discrete_norms,
)
from .problems import (
    CellProblemSpec,
    CoefficientField,
    ConfigError,
    ControlSet,
    TwoScaleCoefficientField,
    coefficient_distance,
    evaluate_hamiltonian,
    freeze_cell_problem,
)
from .solver import (
    DiscreteBellmanOperator,
    DiscountedSolution,
    EvolutiveTrace,
    SolverError,
    discretize,
    march_evolutive,
    solve_discounted,
)
from .ergodic import ErgodicSolution, ergodic_from_evolutive, solve_ergodic
from .cde import CdeReport, ScalingReport, compare_ergodic, scaling_study
from .homogenization import (
    EffectiveHamiltonianSample,
    RateReport,
    effective_hamiltonian,
    measure_rate,
    semilinear_oracle,
    solve_effective,
    solve_oscillatory,
)
