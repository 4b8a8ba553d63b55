"""Dense phase-I simplex for linear feasibility, with Bland's rule.

Works on ``float64`` arrays or on ``object`` arrays of ``Fraction`` (exact
pivoting), with the same code path.  Infeasibility comes with a Farkas
certificate read off the phase-I duals.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np


@dataclass
class LPResult:
    status: str                 # "feasible" | "infeasible"
    x: list | None              # solution in the caller's variables
    certificate: list | None    # Farkas multipliers, one per caller row (see check_certificate)
    phase1_value: object
    iterations: int


def _to_array(rows, ncols, exact):
    if exact:
        A = np.empty((len(rows), ncols), dtype=object)
        A[...] = Fraction(0)
        for i, row in enumerate(rows):
            for j, v in row.items():
                A[i, j] = Fraction(v)
    else:
        A = np.zeros((len(rows), ncols))
        for i, row in enumerate(rows):
            for j, v in row.items():
                A[i, j] = float(v)
    return A


def solve_feasibility(n_vars: int, eq_rows, eq_rhs, ub_rows=(), ub_rhs=(), exact=False,
                      tol=1e-9, max_iter=50_000, feas_tol=None) -> LPResult:
    """Find x >= 0 with ``eq_rows x = eq_rhs`` and ``ub_rows x <= ub_rhs``.

    Rows are sparse ``{column: coefficient}`` dicts.  ``tol`` guards pivots and
    reduced costs; the system counts as infeasible when the phase-I optimum
    exceeds ``feas_tol`` (default ``tol`` scaled by the largest right-hand side).
    """
    tol = 0 if exact else tol
    rows = list(eq_rows) + list(ub_rows)
    rhs = list(eq_rhs) + list(ub_rhs)
    n_ub = len(ub_rows)
    m = len(rows)
    n_std = n_vars + n_ub
    A = _to_array(rows, n_std, exact)
    for k in range(n_ub):
        A[len(eq_rows) + k, n_vars + k] = Fraction(1) if exact else 1.0
    b = np.array([Fraction(v) for v in rhs], dtype=object) if exact else np.array(rhs, dtype=float)
    sign = np.ones(m, dtype=int)
    for i in range(m):
        if b[i] < 0:
            A[i] = -A[i]
            b[i] = -b[i]
            sign[i] = -1

    # tableau: [A | I | b], artificial columns n_std .. n_std+m-1
    width = n_std + m + 1
    if exact:
        T = np.empty((m + 1, width), dtype=object)
        T[...] = Fraction(0)
        one = Fraction(1)
    else:
        T = np.zeros((m + 1, width))
        one = 1.0
    T[:m, :n_std] = A
    for i in range(m):
        T[i, n_std + i] = one
    T[:m, -1] = b
    basis = [n_std + i for i in range(m)]
    # objective row holds reduced costs of "min sum of artificials"
    T[m, :] = -T[:m, :].sum(axis=0)
    T[m, n_std:n_std + m] = 0 * one
    T[m, -1] = -b.sum() if m else 0 * one

    it = 0
    while it < max_iter:
        cost = T[m, :-1]
        entering = next((j for j in range(width - 1) if cost[j] < -tol), None)
        if entering is None:
            break
        col = T[:m, entering]
        best, leave = None, None
        for i in range(m):
            if col[i] > tol:
                ratio = T[i, -1] / col[i]
                if best is None or ratio < best - tol or (abs(ratio - best) <= tol and basis[i] < basis[leave]):
                    best, leave = ratio, i
        if leave is None:  # unbounded direction cannot occur in phase I
            break
        T[leave] = T[leave] / T[leave, entering]
        for i in range(m + 1):
            if i != leave and T[i, entering] != 0:
                T[i] = T[i] - T[i, entering] * T[leave]
        basis[leave] = entering
        it += 1

    value = -T[m, -1]
    if feas_tol is None:
        feas_tol = tol * max(1.0, float(np.abs(b).max(initial=0))) if not exact else 0
    if value > (0 if exact else feas_tol):
        # duals of phase I: reduced cost of artificial i is 1 - y_i
        y = [one - T[m, n_std + i] for i in range(m)]
        y = [yi * s for yi, s in zip(y, sign)]  # undo row sign flips
        return LPResult("infeasible", None, y, value, it)
    x = [0 * one] * n_std
    for i, j in enumerate(basis):
        if j < n_std:
            x[j] = T[i, -1]
    return LPResult("feasible", x[:n_vars], None, value, it)


def check_certificate(n_vars, eq_rows, eq_rhs, ub_rows, ub_rhs, y, tol=1e-9, margin=None,
                      var_bound=None) -> bool:
    """Verify a Farkas certificate against the original (unflipped) system.

    With the system written as A x + s = b (s >= 0 on the inequality rows), a
    certificate has A^T y <= 0, y <= 0 on inequality rows and b^T y > 0.  On
    the float track the sign conditions allow ``tol`` and b^T y must exceed
    ``margin`` (default ``tol``).  When every feasible x is known to satisfy
    x <= ``var_bound``, positive entries of A^T y are allowed instead and
    charged against b^T y, which keeps the proof rigorous under rounding.
    """
    margin = tol if margin is None else margin
    rows = list(eq_rows) + list(ub_rows)
    rhs = list(eq_rhs) + list(ub_rhs)
    n_eq = len(eq_rows)
    agg = [0] * n_vars
    for yi, row in zip(y, rows):
        for j, v in row.items():
            agg[j] += yi * v
    if any(yi > tol for yi in y[n_eq:]):  # slack columns need y <= 0
        return False
    btu = sum(yi * bi for yi, bi in zip(y, rhs))
    if var_bound is not None:
        return bool(btu - var_bound * sum(a for a in agg if a > 0) > margin)
    if any(a > tol for a in agg):
        return False
    return bool(btu > margin)
