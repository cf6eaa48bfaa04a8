"""Weighted Poincaré and log-Sobolev inequalities on finite metric measure spaces."""
from .errors import PoincareLabError
from .space import Space, build_space, fit_growth_constant, iterated_ball
from .weights import WeightPair, check_admissibility, make_weights, search_admissibility

__version__ = "0.1.0"

__all__ = [
    "PoincareLabError",
    "Space",
    "WeightPair",
    "build_space",
    "check_admissibility",
    "fit_growth_constant",
    "iterated_ball",
    "make_weights",
    "search_admissibility",
    "__version__",
]
