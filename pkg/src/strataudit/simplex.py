"""Dense two-phase primal simplex for small linear programs.

Solves min c.x subject to A_ub x <= b_ub, A_eq x = b_eq and per-variable
bounds.  Problems here are tiny (tens of variables), so a dense tableau
with Bland's anti-cycling rule is plenty: deterministic, exact pivoting
order, no external solver.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_TOL = 1e-9


class InfeasibleLP(Exception):
    """No point satisfies the constraints."""


class UnboundedLP(Exception):
    """The objective decreases without bound over the feasible set."""


@dataclass
class LpResult:
    x: np.ndarray
    value: float


def _pivot(tab: np.ndarray, basis: np.ndarray, row: int, col: int) -> None:
    tab[row] /= tab[row, col]
    for r in range(tab.shape[0]):
        if r != row and tab[r, col] != 0.0:
            tab[r] -= tab[r, col] * tab[row]
    basis[row] = col


def _run_simplex(tab: np.ndarray, basis: np.ndarray, n_enterable: int) -> None:
    """Iterate to optimality; the last tableau row is the objective.

    Columns with index below ``n_enterable`` may enter the basis.
    Bland's rule throughout: lowest-index entering column with negative
    reduced cost, lowest-index basic variable among ratio ties.
    """
    m = tab.shape[0] - 1
    while True:
        costs = tab[-1, :n_enterable]
        candidates = np.flatnonzero(costs < -_TOL)
        if len(candidates) == 0:
            return
        entering = int(candidates[0])
        col = tab[:m, entering]
        best_ratio = np.inf
        leaving = -1
        for r in range(m):
            if col[r] > _TOL:
                ratio = tab[r, -1] / col[r]
                if leaving < 0 or ratio < best_ratio - _TOL:
                    best_ratio = ratio
                    leaving = r
                elif ratio < best_ratio + _TOL and basis[r] < basis[leaving]:
                    leaving = r
        if leaving < 0:
            raise UnboundedLP(f"column {entering} unbounded")
        _pivot(tab, basis, leaving, entering)


def lp_solve(
    c,
    a_ub=None,
    b_ub=None,
    a_eq=None,
    b_eq=None,
    bounds=None,
) -> LpResult:
    """Minimize ``c.x`` over the polytope described by the arguments.

    ``bounds`` is a per-variable list of (lo, hi); lo must be finite
    (default 0), hi may be None for unbounded above.  Raises
    :class:`InfeasibleLP` or :class:`UnboundedLP` accordingly.
    """
    c = np.asarray(c, dtype=float)
    n = len(c)
    a_ub = np.zeros((0, n)) if a_ub is None else np.atleast_2d(np.asarray(a_ub, float))
    b_ub = np.zeros(0) if b_ub is None else np.atleast_1d(np.asarray(b_ub, float))
    a_eq = np.zeros((0, n)) if a_eq is None else np.atleast_2d(np.asarray(a_eq, float))
    b_eq = np.zeros(0) if b_eq is None else np.atleast_1d(np.asarray(b_eq, float))
    if bounds is None:
        bounds = [(0.0, None)] * n
    lo = np.array([b[0] for b in bounds], dtype=float)
    if not np.all(np.isfinite(lo)):
        raise ValueError("lower bounds must be finite")
    hi = np.array(
        [np.inf if b[1] is None else float(b[1]) for b in bounds], dtype=float
    )
    if np.any(hi < lo - _TOL):
        raise InfeasibleLP("empty variable box")

    # shift to x' = x - lo >= 0; finite upper bounds become <= rows
    b_ub = b_ub - a_ub @ lo
    b_eq = b_eq - a_eq @ lo
    finite = np.flatnonzero(np.isfinite(hi))
    if len(finite):
        box_rows = np.zeros((len(finite), n))
        box_rows[np.arange(len(finite)), finite] = 1.0
        a_ub = np.vstack([a_ub, box_rows])
        b_ub = np.concatenate([b_ub, hi[finite] - lo[finite]])

    m_ub, m_eq = len(b_ub), len(b_eq)
    m = m_ub + m_eq
    a = np.vstack([a_ub, a_eq]) if m_eq else a_ub.copy()
    b = np.concatenate([b_ub, b_eq]) if m_eq else b_ub.copy()
    slack = np.zeros((m, m_ub))
    slack[np.arange(m_ub), np.arange(m_ub)] = 1.0

    # flip rows with negative rhs so every b entry is nonnegative
    for r in np.flatnonzero(b < 0):
        a[r] *= -1
        slack[r] *= -1
        b[r] *= -1

    body = np.hstack([a, slack])
    n_cols = body.shape[1]

    # slack starts basic wherever its coefficient stayed +1
    basis = np.full(m, -1, dtype=int)
    for r in range(m_ub):
        if slack[r, r] > 0:
            basis[r] = n + r
    art_rows = np.flatnonzero(basis < 0)
    n_art = len(art_rows)
    art = np.zeros((m, n_art))
    for j, r in enumerate(art_rows):
        art[r, j] = 1.0
        basis[r] = n_cols + j

    tab = np.zeros((m + 1, n_cols + n_art + 1))
    tab[:m, :n_cols] = body
    tab[:m, n_cols : n_cols + n_art] = art
    tab[:m, -1] = b

    # Phase 1: minimize the artificial total
    if n_art:
        tab[-1, n_cols : n_cols + n_art] = 1.0
        for r in art_rows:
            tab[-1] -= tab[r]
        _run_simplex(tab, basis, n_cols + n_art)
        if tab[-1, -1] < -_TOL * max(1.0, float(abs(b).max())):
            raise InfeasibleLP("phase 1 optimum nonzero")
        # pivot lingering artificials out of the basis where possible
        for r in range(m):
            if basis[r] >= n_cols:
                for j in range(n_cols):
                    if abs(tab[r, j]) > _TOL:
                        _pivot(tab, basis, r, j)
                        break

    # Phase 2: restore the real objective, expressed in the current basis
    tab[-1] = 0.0
    tab[-1, :n] = c
    for r in range(m):
        if basis[r] < n_cols and tab[-1, basis[r]] != 0.0:
            tab[-1] -= tab[-1, basis[r]] * tab[r]
    _run_simplex(tab, basis, n_cols)

    x_shift = np.zeros(n_cols + n_art)
    for r in range(m):
        x_shift[basis[r]] = tab[r, -1]
    x = x_shift[:n] + lo
    return LpResult(x=x, value=float(c @ x))
