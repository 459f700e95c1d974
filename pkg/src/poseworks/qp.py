"""Dense primal active-set solver for strictly convex quadratic programs.

    minimize    0.5 x' P x + q' x
    subject to  a_eq x = b_eq
                a_in x <= b_in
                lower <= x <= upper

P must be symmetric positive definite. The working set grows/shrinks one
constraint per step with lowest-index tie-breaking, so identical inputs give
bit-identical solutions. KKT residuals of every accepted solution are
reported for auditing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import lp


class QPError(RuntimeError):
    pass


class QPInfeasible(QPError):
    pass


@dataclass(eq=False)
class QPSolution:
    x: np.ndarray
    iterations: int
    active_set: tuple[int, ...]
    kkt_residual: float
    objective: float


def _stack_rows(n, lower, upper, a_in, b_in):
    rows = []
    rhs = []
    labels = []
    if a_in is not None:
        a_in = np.asarray(a_in, dtype=float).reshape(-1, n)
        b_in = np.asarray(b_in, dtype=float).ravel()
        for i in range(a_in.shape[0]):
            rows.append(a_in[i])
            rhs.append(b_in[i])
            labels.append(("g", i))
    for j in range(n):
        if upper is not None and np.isfinite(upper[j]):
            e = np.zeros(n)
            e[j] = 1.0
            rows.append(e)
            rhs.append(upper[j])
            labels.append(("ub", j))
        if lower is not None and np.isfinite(lower[j]):
            e = np.zeros(n)
            e[j] = -1.0
            rows.append(e)
            rhs.append(-lower[j])
            labels.append(("lb", j))
    G = np.array(rows) if rows else np.zeros((0, n))
    h = np.array(rhs) if rhs else np.zeros(0)
    return G, h, labels


def _feasible_start(n, G, h, A, b):
    """Find any feasible point; tries 0, then least squares, then an LP."""
    candidates = [np.zeros(n)]
    if A is not None and A.shape[0]:
        x_ls, *_ = np.linalg.lstsq(A, b, rcond=None)
        candidates.append(x_ls)
    for x in candidates:
        ok_eq = A is None or not A.shape[0] or np.abs(A @ x - b).max() <= 1e-9
        ok_in = not G.shape[0] or (G @ x - h).max() <= 1e-9
        if ok_eq and ok_in:
            return x
    res = lp.solve_lp(
        np.zeros(n),
        a_ub=G if G.shape[0] else None,
        b_ub=h if G.shape[0] else None,
        a_eq=A if A is not None and A.shape[0] else None,
        b_eq=b if A is not None and A.shape[0] else None,
    )
    if res.status != lp.OPTIMAL:
        raise QPInfeasible("no feasible point for the QP constraint set")
    x = res.x
    viol = (G @ x - h).max() if G.shape[0] else 0.0
    if viol > 1e-7:
        raise QPInfeasible("phase-1 point violates constraints beyond tolerance")
    return x


def solve_qp(
    P,
    q,
    lower=None,
    upper=None,
    a_in=None,
    b_in=None,
    a_eq=None,
    b_eq=None,
    x0=None,
    warm_active=None,
) -> QPSolution:
    P = np.asarray(P, dtype=float)
    q = np.asarray(q, dtype=float).ravel()
    n = q.size
    lower = None if lower is None else np.asarray(lower, dtype=float).ravel()
    upper = None if upper is None else np.asarray(upper, dtype=float).ravel()
    A = None if a_eq is None else np.asarray(a_eq, dtype=float).reshape(-1, n)
    b = None if b_eq is None else np.asarray(b_eq, dtype=float).ravel()

    G, h, _ = _stack_rows(n, lower, upper, a_in, b_in)
    m = G.shape[0]
    me = 0 if A is None else A.shape[0]

    if x0 is not None:
        x = np.asarray(x0, dtype=float).copy()
        if A is not None and me:
            # Project a near-feasible start exactly onto the equality manifold.
            resid = b - A @ x
            if np.abs(resid).max() > 1e-12:
                corr, *_ = np.linalg.lstsq(A, resid, rcond=None)
                x = x + corr
        ok_eq = A is None or not me or np.abs(A @ x - b).max() <= 1e-8
        ok_in = not m or (G @ x - h).max() <= 1e-9
        if not (ok_eq and ok_in):
            x = _feasible_start(n, G, h, A, b)
    else:
        x = _feasible_start(n, G, h, A, b)

    active: list[int] = []
    if warm_active:
        slack = G @ x - h if m else np.zeros(0)
        active = sorted(i for i in set(warm_active) if 0 <= i < m and slack[i] >= -1e-12)

    max_iter = 50 + 10 * (m + me)
    lam_active = np.zeros(0)
    prev_sig: tuple[int, ...] | None = None
    prev_step: float | None = None
    for it in range(max_iter):
        # Equality-constrained subproblem on the working set.
        W = np.vstack([A, G[active]]) if A is not None else G[active]
        k = W.shape[0]
        KKT = np.zeros((n + k, n + k))
        KKT[:n, :n] = P
        if k:
            KKT[:n, n:] = W.T
            KKT[n:, :n] = W
        rhs = np.zeros(n + k)
        rhs[:n] = -(P @ x + q)
        try:
            sol = np.linalg.solve(KKT, rhs)
        except np.linalg.LinAlgError:
            sol, *_ = np.linalg.lstsq(KKT, rhs, rcond=None)
        p = sol[:n]
        lam = sol[n:]
        lam_active = lam[me:] if k else np.zeros(0)

        step = float(np.abs(p).max()) if p.size else 0.0
        sig = tuple(active)
        # Stagnation on ill-conditioned KKT systems: consecutive full Newton
        # steps on an unchanged working set that stop shrinking are roundoff
        # noise, so the subspace optimum has been reached to machine accuracy.
        stalled = (
            prev_sig == sig and prev_step is not None and step > 0.5 * prev_step
        )
        if step <= 1e-11 * max(1.0, float(np.abs(x).max())) or stalled:
            if lam_active.size == 0 or lam_active.min() >= -1e-9:
                return _finish(P, q, x, G, h, A, b, active, lam_active, lam[:me] if me else None, it + 1)
            # Bland-style drop: the lowest-index constraint among negative
            # multipliers, which prevents cycling on degenerate corners.
            worst = next(i for i, l in enumerate(lam_active) if l < -1e-9)
            active.pop(worst)
            prev_sig, prev_step = None, None
            continue

        # Ratio test against constraints not in the working set.
        alpha = 1.0
        blocking = -1
        if m:
            inactive = [i for i in range(m) if i not in active]
            for i in inactive:
                gi_p = float(G[i] @ p)
                if gi_p > 1e-12:
                    ai = (h[i] - float(G[i] @ x)) / gi_p
                    if ai < alpha - 1e-15:
                        alpha = max(ai, 0.0)
                        blocking = i
        x = x + alpha * p
        if blocking >= 0 and alpha < 1.0:
            active.append(blocking)
            active.sort()
            prev_sig, prev_step = None, None
        else:
            prev_sig, prev_step = sig, step
    raise QPError("active-set iteration limit exceeded")


def _finish(P, q, x, G, h, A, b, active, lam_active, nu, iterations):
    grad = P @ x + q
    if A is not None and A.shape[0]:
        grad = grad + A.T @ nu
    lam_full = np.zeros(G.shape[0])
    for idx, lam in zip(active, lam_active):
        lam_full[idx] = lam
    if G.shape[0]:
        grad = grad + G.T @ lam_full
    stat = float(np.abs(grad).max()) if grad.size else 0.0
    feas = 0.0
    if G.shape[0]:
        feas = max(feas, float(np.maximum(G @ x - h, 0.0).max()))
    if A is not None and A.shape[0]:
        feas = max(feas, float(np.abs(A @ x - b).max()))
    comp = 0.0
    if G.shape[0]:
        comp = float(np.abs(lam_full * (G @ x - h)).max())
    kkt = max(stat, feas, comp)
    obj = 0.5 * float(x @ P @ x) + float(q @ x)
    return QPSolution(
        x=x, iterations=iterations, active_set=tuple(active), kkt_residual=kkt, objective=obj
    )
