"""Nash equilibrium solvers for convex m-player games with nonsmooth losses.

The package is organized around a small set of building blocks:

- :mod:`nasheq.games` -- the loss family (max-of-affine plus quadratic), game
  validation, subgradient intervals, builtin test games, JSON descriptions;
- :mod:`nasheq.smoothing` -- averaging over a ball or cube neighborhood
  (Steklov smoothing), quadrature rules, smoothed residuals and Jacobians;
- :mod:`nasheq.solvers` -- the solver ladder, from Newton on the residual map
  to safeguarded coordinate descent and smoothed/regularized Newton variants;
- :mod:`nasheq.diagnostics` -- cycle/divergence detectors, coordinate
  permutation, equilibrium certificates;
- :mod:`nasheq.cli` -- the ``nasheq solve`` command: traces, reports,
  multistart comparison.
"""

from .games import (
    BUILTIN_NAMES,
    ConvexityError,
    Game,
    GameSpecError,
    PlayerLoss,
    SubgradientInterval,
    best_response_oracle,
    builtin_game,
    distance_to_known_equilibrium,
    equilibrium_gap,
    evaluate,
    parse_game_spec,
    residual_vector,
    subgradient_interval,
)
from .smoothing import (
    AveragingSet,
    QuadratureRule,
    SmoothedGame,
    grad_lipschitz,
    hessian_lipschitz,
    make_quadrature,
    smooth_game,
    smoothed_grad_own,
    smoothed_residual,
    smoothed_value,
    twice_smoothed_jacobian,
    twice_smoothed_residual,
    twice_smoothed_value,
)
from .solvers import (
    ALGORITHMS,
    IterationRecord,
    SingularJacobianError,
    SolverConfig,
    Trace,
    check_step_diameter,
    coordinated_descent,
    exact_coordinate_descent,
    line_search_residual,
    merit,
    newton_direction,
    newton_solve,
    regularized_map,
    regularized_newton,
    safeguarded_descent,
    smoothed_descent_outer,
    smoothed_newton,
    solve,
)
from .diagnostics import (
    EquilibriumReport,
    NeighborhoodCertificate,
    average_points,
    certify_equilibrium,
    certify_neighborhood,
    detect_cycle,
    detect_divergence,
    permute_game,
    permute_point,
    refine_equilibrium,
)

__version__ = "0.1.0"

__all__ = [
    "ALGORITHMS",
    "BUILTIN_NAMES",
    "AveragingSet",
    "ConvexityError",
    "EquilibriumReport",
    "Game",
    "GameSpecError",
    "IterationRecord",
    "NeighborhoodCertificate",
    "PlayerLoss",
    "QuadratureRule",
    "SingularJacobianError",
    "SmoothedGame",
    "SolverConfig",
    "SubgradientInterval",
    "Trace",
    "average_points",
    "best_response_oracle",
    "builtin_game",
    "certify_equilibrium",
    "certify_neighborhood",
    "check_step_diameter",
    "coordinated_descent",
    "detect_cycle",
    "detect_divergence",
    "distance_to_known_equilibrium",
    "equilibrium_gap",
    "evaluate",
    "exact_coordinate_descent",
    "grad_lipschitz",
    "hessian_lipschitz",
    "line_search_residual",
    "make_quadrature",
    "merit",
    "newton_direction",
    "newton_solve",
    "parse_game_spec",
    "permute_game",
    "permute_point",
    "refine_equilibrium",
    "regularized_map",
    "regularized_newton",
    "residual_vector",
    "safeguarded_descent",
    "smooth_game",
    "smoothed_descent_outer",
    "smoothed_grad_own",
    "smoothed_newton",
    "smoothed_residual",
    "smoothed_value",
    "solve",
    "subgradient_interval",
    "twice_smoothed_jacobian",
    "twice_smoothed_residual",
    "twice_smoothed_value",
    "__version__",
]
