"""Dense and matrix-free complex linear solves with a residual contract.

Both solvers return only after checking ``||A x - b||_inf <= tol ||b||_inf``
against the operator itself. Failures raise :class:`SingularSystem` carrying
a condition estimate (dense) or the achieved residual (iterative).
"""

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse.linalg as spla

from .errors import SingularSystem

RESIDUAL_TOL = 1e-10


@dataclass(frozen=True)
class SolveInfo:
    method: str
    residual: float
    condition: float = None
    iterations: int = 0

    def to_json(self):
        return {"method": self.method, "residual": self.residual,
                "condition": self.condition, "iterations": self.iterations}


def relative_residual(apply, x, b):
    bn = np.max(np.abs(b)) if b.size else 0.0
    r = apply(x) - b
    rn = np.max(np.abs(r)) if r.size else 0.0
    return float(rn / bn) if bn > 0 else float(rn)


def condition_estimate(lu_piv, anorm):
    """1-norm condition number estimate from an LU factorisation (LAPACK gecon)."""
    lu, _ = lu_piv
    gecon, = scipy.linalg.get_lapack_funcs(("gecon",), (lu,))
    rcond, info = gecon(lu, anorm, norm="1")
    if info != 0 or rcond == 0:
        return np.inf
    return float(1.0 / rcond)


def solve_dense(matrix, b, tol=RESIDUAL_TOL, scale=None):
    """LU solve with partial pivoting; returns ``(x, SolveInfo)``.

    ``scale`` is the 1-norm of the operator's terms before they were summed
    (e.g. ``|I| + |K|``). When cancellation makes ``||A||`` much smaller
    than that, the condition is measured against ``scale``, so an identity
    cancelled down to round-off is reported as singular.
    """
    matrix = np.asarray(matrix, dtype=complex)
    b = np.asarray(b, dtype=complex)
    n = len(b)
    if n == 0:
        return np.zeros(0, dtype=complex), SolveInfo("dense", 0.0, 1.0)
    if not np.all(np.isfinite(matrix)):
        raise SingularSystem("system matrix has non-finite entries")
    anorm = float(np.max(np.sum(np.abs(matrix), axis=0)))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu_piv = scipy.linalg.lu_factor(matrix, check_finite=False)
    cond = condition_estimate(lu_piv, anorm)
    if scale is not None and anorm > 0:
        cond *= max(1.0, float(scale) / anorm)
    if not np.isfinite(cond) or cond > 1.0 / (n * np.finfo(float).eps):
        raise SingularSystem(f"system is numerically singular (condition estimate {cond:.3e})",
                             condition=cond)
    x = scipy.linalg.lu_solve(lu_piv, b, check_finite=False)
    apply = lambda v: matrix @ v  # noqa: E731
    res = relative_residual(apply, x, b)
    # one step of iterative refinement is cheap with the factors at hand
    if res > tol:
        x = x + scipy.linalg.lu_solve(lu_piv, b - apply(x), check_finite=False)
        res = relative_residual(apply, x, b)
    if not np.all(np.isfinite(x)) or res > tol:
        raise SingularSystem(f"dense solve residual {res:.3e} exceeds {tol:.1e}",
                             condition=cond, residual=res)
    return x, SolveInfo("dense", res, cond)


def solve_iterative(apply, b, tol=RESIDUAL_TOL, x0=None, restart=60, maxiter=40, refinements=4):
    """Restarted GMRES on the operator ``apply``; returns ``(x, SolveInfo)``.

    GMRES runs with a relative tolerance well below ``tol`` and the true
    residual is recomputed afterwards. If that misses ``tol`` the solve is
    restarted from the current iterate on the residual equation.
    """
    b = np.asarray(b, dtype=complex)
    n = len(b)
    if n == 0:
        return np.zeros(0, dtype=complex), SolveInfo("gmres", 0.0)
    count = [0]

    def mv(v):
        count[0] += 1
        return apply(np.asarray(v, dtype=complex).ravel())

    op = spla.LinearOperator((n, n), matvec=mv, dtype=complex)
    bn = float(np.max(np.abs(b)))
    if bn == 0:
        return np.zeros(n, dtype=complex), SolveInfo("gmres", 0.0)
    x = np.zeros(n, dtype=complex) if x0 is None else np.asarray(x0, dtype=complex).copy()
    res = np.inf
    for _ in range(refinements):
        r = b - mv(x)
        res = float(np.max(np.abs(r)) / bn)
        if res <= tol:
            break
        dx, _ = spla.gmres(op, r, rtol=min(1e-2 * tol, 1e-12), atol=0.0, restart=min(restart, n),
                           maxiter=maxiter)
        if not np.all(np.isfinite(dx)):
            break
        x = x + dx
    else:
        res = relative_residual(mv, x, b)
    if not np.all(np.isfinite(x)) or res > tol:
        raise SingularSystem(f"GMRES residual {res:.3e} exceeds {tol:.1e} after {count[0]} products",
                             residual=res)
    return x, SolveInfo("gmres", res, None, count[0])
