"""Dense two-phase simplex with Bland's rule.

Problems in this package are small (tens of variables and rows), so a plain
tableau with anti-cycling pivoting buys determinism and easy auditing over
speed. Free variables are split into positive parts internally.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

_PIVOT_EPS = 1e-10
_FEAS_EPS = 1e-8


@dataclass(eq=False)
class LPResult:
    status: str
    x: np.ndarray | None
    objective: float


def solve_lp(c, a_ub=None, b_ub=None, a_eq=None, b_eq=None) -> LPResult:
    """Minimize c @ x subject to a_ub @ x <= b_ub and a_eq @ x = b_eq.

    All variables are free (unbounded); add explicit rows for bounds.
    """
    c = np.asarray(c, dtype=float)
    n = c.size
    a_ub = np.zeros((0, n)) if a_ub is None else np.asarray(a_ub, dtype=float).reshape(-1, n)
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float).ravel()
    a_eq = np.zeros((0, n)) if a_eq is None else np.asarray(a_eq, dtype=float).reshape(-1, n)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).ravel()

    m_ub, m_eq = a_ub.shape[0], a_eq.shape[0]
    m = m_ub + m_eq
    # Standard form: split x = xp - xm, add slacks s >= 0 on the <= rows.
    n_std = 2 * n + m_ub
    A = np.zeros((m, n_std))
    b = np.concatenate([b_ub, b_eq])
    A[:m_ub, :n] = a_ub
    A[:m_ub, n : 2 * n] = -a_ub
    A[:m_ub, 2 * n :] = np.eye(m_ub)
    A[m_ub:, :n] = a_eq
    A[m_ub:, n : 2 * n] = -a_eq
    c_std = np.concatenate([c, -c, np.zeros(m_ub)])

    neg = b < 0
    A[neg] *= -1.0
    b = np.abs(b)

    # Phase 1: artificial basis.
    total = n_std + m
    T = np.zeros((m + 1, total + 1))
    T[:m, :n_std] = A
    T[:m, n_std:total] = np.eye(m)
    T[:m, -1] = b
    basis = list(range(n_std, total))
    T[m, :n_std] = -A.sum(axis=0)
    T[m, -1] = -b.sum()

    status = _simplex(T, basis, total)
    if status != OPTIMAL or T[m, -1] < -_FEAS_EPS:
        return LPResult(INFEASIBLE, None, np.inf)

    # Drive artificials out of the basis where possible; drop redundant rows.
    keep_rows = []
    for i, bi in enumerate(basis):
        if bi >= n_std:
            pivoted = False
            for j in range(n_std):
                if abs(T[i, j]) > _PIVOT_EPS:
                    _pivot(T, i, j, basis)
                    pivoted = True
                    break
            if not pivoted:
                continue  # redundant constraint row
        keep_rows.append(i)

    rows = keep_rows
    # Phase 2 tableau on the surviving rows.
    m2 = len(rows)
    T2 = np.zeros((m2 + 1, n_std + 1))
    basis2 = []
    for r, i in enumerate(rows):
        T2[r, :n_std] = T[i, :n_std]
        T2[r, -1] = T[i, -1]
        basis2.append(basis[i])
    T2[m2, :n_std] = c_std
    for r, bi in enumerate(basis2):
        if abs(T2[m2, bi]) > 0:
            T2[m2] -= T2[m2, bi] * T2[r]
    status = _simplex(T2, basis2, n_std)
    if status == UNBOUNDED:
        return LPResult(UNBOUNDED, None, -np.inf)

    x_std = np.zeros(n_std)
    for r, bi in enumerate(basis2):
        if bi < n_std:
            x_std[bi] = T2[r, -1]
    x = x_std[:n] - x_std[n : 2 * n]
    return LPResult(OPTIMAL, x, float(c @ x))


def _pivot(T, row, col, basis):
    T[row] /= T[row, col]
    factors = T[:, col].copy()
    factors[row] = 0.0
    T -= np.outer(factors, T[row])
    basis[row] = col


def _simplex(T, basis, n_cols, max_pivots=50000) -> str:
    """Dantzig pricing, falling back to strict Bland pivoting when degenerate.

    Dantzig's rule is fast but can stall on degenerate corners; a streak of
    degenerate pivots (or a large total pivot count) engages Bland's rule
    with exact-minimum tie handling, which cannot cycle. All choices are
    index-deterministic.
    """
    m = len(basis)
    degenerate_streak = 0
    bland_forever = False
    for pivot_count in range(max_pivots):
        if pivot_count > 2000:
            bland_forever = True
        row_obj = T[m, :n_cols]
        use_bland = bland_forever or degenerate_streak >= 12
        if not use_bland:
            col = int(np.argmin(row_obj))
            if row_obj[col] >= -_PIVOT_EPS:
                return OPTIMAL
        else:
            neg = np.nonzero(row_obj < -_PIVOT_EPS)[0]
            if neg.size == 0:
                return OPTIMAL
            col = int(neg[0])
        column = T[:m, col]
        positive = column > _PIVOT_EPS
        if not positive.any():
            return UNBOUNDED
        ratios = np.full(m, np.inf)
        ratios[positive] = T[:m, -1][positive] / column[positive]
        best = float(ratios.min())
        if use_bland:
            ties = np.nonzero(ratios == best)[0]
        else:
            ties = np.nonzero(ratios <= best + 1e-12)[0]
        basis_arr = np.array([basis[i] for i in ties])
        row = int(ties[int(np.argmin(basis_arr))])
        degenerate_streak = degenerate_streak + 1 if best <= 1e-12 else 0
        _pivot(T, row, col, basis)
    raise RuntimeError("simplex pivot limit exceeded")
