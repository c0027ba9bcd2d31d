"""Reflected backward equations on finite filtered probability spaces."""

from .filtration import (
    CountExceeded, FilteredSpace, StoppingTime, binomial_space, cond_expect,
    counterexample_space, dual_predictable_projection, enumerate_stopping_times,
    load_space, predictable_projection, random_tree, save_space, trinomial_space,
)
from .martrep import build_basis, represent
from .rbsde import (
    Generator, RBSDEInput, Solution, check_solution, penalization_sweep,
    solve_penalized, solve_picard, solve_reflected,
)
from .snell import SnellProblem, snell_envelope, snell_oracle

__version__ = "0.1.0"

__all__ = [
    "CountExceeded", "FilteredSpace", "Generator", "RBSDEInput", "SnellProblem", "Solution",
    "StoppingTime", "binomial_space", "build_basis", "check_solution", "cond_expect",
    "counterexample_space", "dual_predictable_projection", "enumerate_stopping_times",
    "load_space", "penalization_sweep", "predictable_projection", "random_tree", "represent",
    "save_space", "snell_envelope", "snell_oracle", "solve_penalized", "solve_picard",
    "solve_reflected", "trinomial_space",
]
