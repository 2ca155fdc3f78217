from .convex import ConeQP, SubproblemSolution, SubproblemStatus, solve_cone_qp, solve_convex_subproblem

__all__ = ["ConeQP", "SubproblemSolution", "SubproblemStatus", "solve_cone_qp", "solve_convex_subproblem"]
from .bnb import BnBNode, MipSolution, MipStatus, solve_mip

__all__ += ["BnBNode", "MipSolution", "MipStatus", "solve_mip"]
