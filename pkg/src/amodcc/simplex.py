"""Dense two-phase primal simplex with Bland's rule.

Self-contained LP engine for small problems and cross-checks; the
branch-and-bound solver can also route relaxations through SciPy's HiGHS
backend, which is much faster on production-sized instances.  Bland's
pivoting rule (lowest eligible index, both entering and leaving) makes the
method finite and the solutions deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, NumericalError

_TOL = 1e-9
_MAX_PIVOTS = 200_000


@dataclass
class LpResult:
    status: str                 # "optimal" | "infeasible" | "unbounded"
    x: np.ndarray | None = None
    objective: float | None = None


def _pivot(tab: np.ndarray, basis: np.ndarray, row: int, col: int) -> None:
    tab[row] /= tab[row, col]
    for r in range(tab.shape[0]):
        if r != row and tab[r, col] != 0.0:
            tab[r] -= tab[r, col] * tab[row]
    basis[row] = col


def _run_simplex(tab: np.ndarray, basis: np.ndarray, cost: np.ndarray) -> str:
    """Minimize cost over the tableau in place; returns final status."""
    for _ in range(_MAX_PIVOTS):
        reduced = cost - cost[basis] @ tab[:, :-1]
        candidates = np.flatnonzero(reduced < -_TOL)
        if candidates.size == 0:
            return "optimal"
        enter = int(candidates[0])
        col = tab[:, enter]
        rows = np.flatnonzero(col > _TOL)
        if rows.size == 0:
            return "unbounded"
        ratios = tab[rows, -1] / col[rows]
        best = ratios.min()
        tied = rows[ratios <= best + _TOL]
        leave = int(tied[np.argmin(basis[tied])])
        _pivot(tab, basis, leave, enter)
    raise NumericalError("simplex failed to terminate (pivot budget exhausted)")


def solve_lp_bland(
    c: np.ndarray,
    a: np.ndarray,
    senses: list[str],
    b: np.ndarray,
    lb: np.ndarray,
    ub: np.ndarray,
) -> LpResult:
    """Solve min c.x s.t. A x {<=,=,>=} b, lb <= x <= ub.

    ``senses`` holds one of "L", "E", "G" per row.  Lower bounds must be
    finite; upper bounds may be +inf.
    """
    c = np.asarray(c, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    lb = np.asarray(lb, dtype=float)
    ub = np.asarray(ub, dtype=float)
    n = c.shape[0]
    if a.shape != (len(senses), n) or b.shape != (len(senses),):
        raise InvalidInputError("inconsistent LP dimensions")
    if not np.all(np.isfinite(lb)):
        raise InvalidInputError("lower bounds must be finite")
    if np.any(lb > ub + _TOL):
        return LpResult(status="infeasible")

    # Shift to y = x - lb >= 0; finite upper bounds become extra <= rows.
    rows = [a]
    rhs = [b - a @ lb]
    sense_list = list(senses)
    finite_ub = np.flatnonzero(np.isfinite(ub))
    if finite_ub.size:
        bound_rows = np.zeros((finite_ub.size, n))
        bound_rows[np.arange(finite_ub.size), finite_ub] = 1.0
        rows.append(bound_rows)
        rhs.append(ub[finite_ub] - lb[finite_ub])
        sense_list.extend("L" for _ in finite_ub)
    amat = np.vstack(rows)
    bvec = np.concatenate(rhs)

    flip = bvec < 0
    amat[flip] *= -1.0
    bvec[flip] *= -1.0
    swap = {"L": "G", "G": "L", "E": "E"}
    sense_list = [swap[s] if f else s for s, f in zip(sense_list, flip)]

    m = amat.shape[0]
    n_slack = sum(s == "L" for s in sense_list)
    n_surp = sum(s == "G" for s in sense_list)
    n_art = sum(s != "L" for s in sense_list)
    width = n + n_slack + n_surp + n_art
    tab = np.zeros((m, width + 1))
    tab[:, :n] = amat
    tab[:, -1] = bvec

    basis = np.zeros(m, dtype=int)
    slack_at = n
    surp_at = n + n_slack
    art_at = n + n_slack + n_surp
    for i, s in enumerate(sense_list):
        if s == "L":
            tab[i, slack_at] = 1.0
            basis[i] = slack_at
            slack_at += 1
        else:
            if s == "G":
                tab[i, surp_at] = -1.0
                surp_at += 1
            tab[i, art_at] = 1.0
            basis[i] = art_at
            art_at += 1

    art_start = n + n_slack + n_surp
    phase1 = np.zeros(width)
    phase1[art_start:] = 1.0
    if _run_simplex(tab, basis, phase1) != "optimal":
        raise NumericalError("phase-1 simplex reported an unbounded problem")
    if float(phase1[basis] @ tab[:, -1]) > 1e-7:
        return LpResult(status="infeasible")

    # Pivot leftover artificials out; a row with no real pivot is redundant.
    keep = np.ones(m, dtype=bool)
    for i in range(m):
        if basis[i] >= art_start:
            pivots = np.flatnonzero(np.abs(tab[i, :art_start]) > _TOL)
            if pivots.size:
                _pivot(tab, basis, i, int(pivots[0]))
            else:
                keep[i] = False
    tab = np.hstack([tab[keep, :art_start], tab[keep, -1:]])
    basis = basis[keep]

    phase2 = np.zeros(art_start)
    phase2[:n] = c
    status = _run_simplex(tab, basis, phase2)
    if status != "optimal":
        return LpResult(status="unbounded")

    y = np.zeros(art_start)
    y[basis] = tab[:, -1]
    x = y[:n] + lb
    return LpResult(status="optimal", x=x, objective=float(c @ x))
