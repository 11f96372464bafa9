"""BQ (s, m) planner"""
from .ParameterPlanner import (
    Plan,
    continuous_solution,
    continuous_variance,
    privacy_ratio,
    solve,
    solve_grid,
    variance_of_plan,
)
