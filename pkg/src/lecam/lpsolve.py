"""Thin wrapper around scipy's HiGHS linear programming backend.

Every solver call in the package goes through :func:`solve_lp`, which returns
the primal solution together with the constraint marginals needed to assemble
certified dual bounds.  Callers repair the marginals into exactly feasible
dual points themselves, so optimality gaps are genuine weak-duality gaps and
never trust solver tolerances.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .errors import SolverError


@dataclass(frozen=True, eq=False)
class LPSolution:
    x: np.ndarray
    objective: float
    ub_marginals: np.ndarray | None
    eq_marginals: np.ndarray | None


def solve_lp(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, bounds=None) -> LPSolution:
    """Minimize ``c @ x`` subject to the given constraints via HiGHS.

    Retries once with presolve disabled: presolve can misreport feasible
    problems whose right-hand sides span extreme magnitudes (mass vectors
    with entries near the underflow threshold) as infeasible.
    """
    res = linprog(
        c,
        A_ub=A_ub,
        b_ub=b_ub,
        A_eq=A_eq,
        b_eq=b_eq,
        bounds=bounds,
        method="highs",
    )
    if not res.success:
        res = linprog(
            c,
            A_ub=A_ub,
            b_ub=b_ub,
            A_eq=A_eq,
            b_eq=b_eq,
            bounds=bounds,
            method="highs",
            options={"presolve": False},
        )
    if not res.success:
        raise SolverError(f"LP solve failed ({res.status}): {res.message}")
    ub_marg = np.asarray(res.ineqlin.marginals, dtype=float) if A_ub is not None else None
    eq_marg = np.asarray(res.eqlin.marginals, dtype=float) if A_eq is not None else None
    return LPSolution(
        x=np.asarray(res.x, dtype=float),
        objective=float(res.fun),
        ub_marginals=ub_marg,
        eq_marginals=eq_marg,
    )
