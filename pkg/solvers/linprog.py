"""
Dense two-phase primal simplex.

Problems are stated as

    maximize c·x  subject to  A_ub·x <= b_ub,  A_eq·x = b_eq,  x >= 0

and solved on a full tableau. Entering variables follow Dantzig's rule with
lowest-index tie breaking; after a run of degenerate pivots the solver switches
to Bland's rule for the rest of the phase.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from utils.errors import DimensionError, NumericError

logger = logging.getLogger(__name__)

PIVOT_TOL = 1e-10
FEASIBILITY_TOL = 1e-9
OPTIMALITY_TOL = 1e-10
DEGENERATE_STREAK = 50

OPTIMAL = 'optimal'
INFEASIBLE = 'infeasible'
UNBOUNDED = 'unbounded'


def _matrix(rows, n: int, label: str) -> np.ndarray:
    if rows is None:
        return np.zeros((0, n))
    arr = np.atleast_2d(np.asarray(rows, dtype=float))
    if arr.size == 0:
        return np.zeros((0, n))
    if arr.shape[1] != n:
        raise DimensionError(f"{label} has {arr.shape[1]} columns, expected {n}")
    return arr


def _vector(values, m: int, label: str) -> np.ndarray:
    if values is None:
        values = []
    arr = np.atleast_1d(np.asarray(values, dtype=float))
    if arr.shape != (m,):
        raise DimensionError(f"{label} has shape {arr.shape}, expected ({m},)")
    return arr


@dataclass(frozen=True)
class LpProblem:
    """maximize c·x s.t. a_ub·x <= b_ub, a_eq·x = b_eq, x >= 0."""

    c: np.ndarray
    a_ub: Optional[np.ndarray] = None
    b_ub: Optional[np.ndarray] = None
    a_eq: Optional[np.ndarray] = None
    b_eq: Optional[np.ndarray] = None

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.c, dtype=float))
        if c.ndim != 1:
            raise DimensionError(f"objective must be a vector, got shape {c.shape}")
        n = c.shape[0]
        a_ub = _matrix(self.a_ub, n, 'a_ub')
        a_eq = _matrix(self.a_eq, n, 'a_eq')
        b_ub = _vector(self.b_ub, a_ub.shape[0], 'b_ub')
        b_eq = _vector(self.b_eq, a_eq.shape[0], 'b_eq')
        for label, arr in (('c', c), ('a_ub', a_ub), ('b_ub', b_ub), ('a_eq', a_eq), ('b_eq', b_eq)):
            if not np.all(np.isfinite(arr)):
                raise NumericError(f"LP input {label} has non-finite entries")
        object.__setattr__(self, 'c', c)
        object.__setattr__(self, 'a_ub', a_ub)
        object.__setattr__(self, 'b_ub', b_ub)
        object.__setattr__(self, 'a_eq', a_eq)
        object.__setattr__(self, 'b_eq', b_eq)

    @property
    def n(self) -> int:
        return self.c.shape[0]

    def with_objective(self, c) -> 'LpProblem':
        return LpProblem(c, self.a_ub, self.b_ub, self.a_eq, self.b_eq)


@dataclass
class LpSolution:
    status: str
    x: Optional[np.ndarray] = None
    objective: float = float('nan')
    duals_ub: Optional[np.ndarray] = None
    duals_eq: Optional[np.ndarray] = None
    iterations: int = 0
    bland_used: bool = False
    redundant_rows: List[int] = field(default_factory=list)

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


def _pivot(T: np.ndarray, row: int, col: int):
    T[row, :] /= T[row, col]
    factors = T[:, col].copy()
    factors[row] = 0.0
    T -= np.outer(factors, T[row, :])


class _Tableau:
    """Tableau T = B⁻¹[A | b] with the basis kept as column indices."""

    def __init__(self, T: np.ndarray, basis: List[int], max_iter: int):
        self.T = T
        self.basis = basis
        self.max_iter = max_iter
        self.iterations = 0
        self.bland_used = False

    def run(self, cost: np.ndarray, bland: bool = False) -> str:
        T = self.T
        streak = 0
        while True:
            if self.iterations >= self.max_iter:
                raise NumericError(f"simplex exceeded {self.max_iter} pivots",
                                   {'iterations': self.iterations})
            reduced = cost - cost[self.basis] @ T[:, :-1]
            candidates = np.flatnonzero(reduced < -OPTIMALITY_TOL)
            if candidates.size == 0:
                return OPTIMAL
            if bland:
                col = int(candidates[0])
            else:
                col = int(np.argmin(reduced))

            column = T[:, col]
            rows = np.flatnonzero(column > PIVOT_TOL)
            if rows.size == 0:
                return UNBOUNDED
            ratios = np.maximum(T[rows, -1], 0.0) / column[rows]
            best = ratios.min()
            tied = rows[ratios <= best + 1e-12]
            row = int(min(tied, key=lambda r: self.basis[r]))

            _pivot(T, row, col)
            self.basis[row] = col
            self.iterations += 1

            streak = streak + 1 if best <= 1e-12 else 0
            if not bland and streak >= DEGENERATE_STREAK:
                logger.debug(f"{streak} degenerate pivots in a row, switching to Bland's rule")
                bland = True
                self.bland_used = True


def solve_lp(problem: LpProblem, max_iter: Optional[int] = None) -> LpSolution:
    """
    Solve ``problem`` with the two-phase simplex.

    Returns:
        LpSolution with status optimal/infeasible/unbounded. Optimal solutions
        carry the primal vertex, the objective and the row duals of the
        maximization (duals_ub >= 0).
    """
    n = problem.n
    m_ub = problem.a_ub.shape[0]
    m_eq = problem.a_eq.shape[0]
    m = m_ub + m_eq
    n_struct = n + m_ub
    if max_iter is None:
        max_iter = 50 * (m + n_struct) + 1000

    A = np.zeros((m, n_struct))
    A[:m_ub, :n] = problem.a_ub
    A[:m_ub, n:] = np.eye(m_ub)
    A[m_ub:, :n] = problem.a_eq
    b = np.concatenate([problem.b_ub, problem.b_eq])

    sign = np.where(b < 0, -1.0, 1.0)
    A *= sign[:, None]
    b = b * sign

    needs_artificial = [r for r in range(m) if r >= m_ub or sign[r] < 0]
    n_art = len(needs_artificial)
    T = np.zeros((m, n_struct + n_art + 1))
    T[:, :n_struct] = A
    T[:, -1] = b
    basis = []
    art_of_row = {r: k for k, r in enumerate(needs_artificial)}
    for r in range(m):
        if r in art_of_row:
            T[r, n_struct + art_of_row[r]] = 1.0
            basis.append(n_struct + art_of_row[r])
        else:
            basis.append(n + r)

    tableau = _Tableau(T, basis, max_iter)
    kept_rows = list(range(m))

    if n_art:
        phase1_cost = np.zeros(n_struct + n_art)
        phase1_cost[n_struct:] = 1.0
        tableau.run(phase1_cost)
        infeasibility = float(phase1_cost[tableau.basis] @ tableau.T[:, -1])
        scale = max(1.0, float(np.max(np.abs(b))) if m else 1.0)
        if infeasibility > FEASIBILITY_TOL * scale:
            logger.debug(f"phase 1 ended with infeasibility {infeasibility:.3e}")
            return LpSolution(status=INFEASIBLE, iterations=tableau.iterations)

        redundant = []
        for r in range(m):
            if tableau.basis[r] < n_struct:
                continue
            row = tableau.T[r, :n_struct]
            cols = np.flatnonzero(np.abs(row) > PIVOT_TOL)
            if cols.size:
                _pivot(tableau.T, r, int(cols[0]))
                tableau.basis[r] = int(cols[0])
            else:
                redundant.append(r)
        kept_rows = [r for r in range(m) if r not in redundant]
        tableau.T = np.hstack([tableau.T[kept_rows, :n_struct], tableau.T[kept_rows, -1:]])
        tableau.basis = [tableau.basis[r] for r in kept_rows]
        if redundant:
            logger.debug(f"dropped redundant rows {redundant}")
    else:
        redundant = []
        tableau.T = np.hstack([tableau.T[:, :n_struct], tableau.T[:, -1:]])

    cost = np.zeros(n_struct)
    cost[:n] = -problem.c
    status = tableau.run(cost)
    if status == UNBOUNDED:
        return LpSolution(status=UNBOUNDED, iterations=tableau.iterations,
                          bland_used=tableau.bland_used)

    values = np.zeros(n_struct)
    values[tableau.basis] = tableau.T[:, -1]
    x = values[:n]
    x = np.where(x < 0.0, 0.0, x)

    duals = np.zeros(m)
    if kept_rows:
        B = A[np.ix_(kept_rows, tableau.basis)]
        try:
            y_min = np.linalg.solve(B.T, cost[tableau.basis])
        except np.linalg.LinAlgError:
            y_min = np.linalg.lstsq(B.T, cost[tableau.basis], rcond=None)[0]
        duals[kept_rows] = -y_min * sign[kept_rows]

    return LpSolution(status=OPTIMAL, x=x, objective=float(problem.c @ x),
                      duals_ub=duals[:m_ub], duals_eq=duals[m_ub:],
                      iterations=tableau.iterations, bland_used=tableau.bland_used,
                      redundant_rows=redundant)
