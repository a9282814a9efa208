"""Sparse direct solves of the block systems  [[A, B^T], [B, 0]].

Every solve is followed by a residual check of both block equations at
1e-10 relative accuracy; a failed check (including NaN from a singular
factorization) raises SaddleSolveError carrying the caller's context, e.g.
the patch element and facet that produced the system.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

RESIDUAL_TOL = 1e-10


class SaddleSolveError(RuntimeError):
    pass


class SaddleSystem:
    """Factorized indefinite block system for one operator/constraint pair.

    A: (n, n) sparse SPD block on the free dofs, B: (m, n) sparse constraint
    rows.  The factorization is computed once and may be reused for any
    number of right-hand sides.
    """

    def __init__(self, A: sp.spmatrix, B: sp.spmatrix, context: str = "system"):
        self.n = A.shape[0]
        self.m = B.shape[0]
        self.context = context
        K = sp.bmat([[A, B.T], [B, None]], format="csc")
        self._norm = float(np.abs(K).sum(axis=1).max()) if K.nnz else 0.0
        try:
            self._lu = spla.splu(K)
        except RuntimeError as exc:
            raise SaddleSolveError(f"{context}: factorization failed ({exc})") from exc
        self._K = K

    def solve(self, rhs_primal: np.ndarray, rhs_constraint: np.ndarray | None = None):
        """Primal/multiplier pair for the given block right-hand sides."""
        rhs = np.zeros(self.n + self.m)
        rhs[: self.n] = rhs_primal
        if rhs_constraint is not None:
            rhs[self.n:] = rhs_constraint
        sol = self._lu.solve(rhs)
        res = self._K @ sol - rhs
        denom = max(np.linalg.norm(rhs), self._norm * np.linalg.norm(sol), 1e-300)
        rel = np.linalg.norm(res) / denom
        if not np.isfinite(rel) or rel > RESIDUAL_TOL:
            raise SaddleSolveError(
                f"{self.context}: solve residual {rel:.2e} exceeds {RESIDUAL_TOL:.0e} "
                "(singular or redundant constraint rows?)"
            )
        return sol[: self.n], sol[self.n:]

    def solve_constrained(self, rhs_primal: np.ndarray):
        """Solution with all constraint functionals forced to zero (the
        discrete fine-scale space)."""
        return self.solve(rhs_primal, None)
