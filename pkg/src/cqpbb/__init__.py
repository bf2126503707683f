"""Global solver for nonconvex complex quadratic programs with modulus and argument constraints."""
from .model import (ComplexityConstants, Discrete, Interval, ModulusBounds, ProblemCQP, compute_constants,
                    evaluate_objective, validate)
from .conic import SearchBox, build_csdr, build_ecsdr, solve_relaxation
from .bb import Limits, RunReport, run

__all__ = [
    "ComplexityConstants", "Discrete", "Interval", "ModulusBounds", "ProblemCQP", "compute_constants",
    "evaluate_objective", "validate", "SearchBox", "build_csdr", "build_ecsdr", "solve_relaxation",
    "Limits", "RunReport", "run",
]
__version__ = "0.1.0"
