"""Right-preconditioned GMRES over a real or complex scalar field.

Modified Gram-Schmidt Arnoldi, no restart.  With right preconditioning the
recurrence residual equals the true residual of the original system, so the
reported history needs no correction; the final residual is nevertheless
recomputed at exit.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalFailureError

BREAKDOWN_TOL = 1e-30


@dataclass
class KrylovReport:
    """Convergence record of one GMRES solve."""

    iterations: int = 0
    residual_history: list = field(default_factory=list)
    converged: bool = False
    reduction_achieved: float = 1.0


def gmres(apply_A, apply_Pinv, rhs, rel_tol=1e-12, max_iter=200, dtype=None):
    """Solve A x = rhs with right preconditioning: A (P^-1) y = rhs, x = P^-1 y.

    ``apply_A`` and ``apply_Pinv`` map arrays shaped like ``rhs`` to arrays of
    the same shape; ``apply_Pinv`` may be None for an unpreconditioned solve.
    Returns ``(x, KrylovReport)``.  A vanishing Arnoldi subdiagonal is the
    happy breakdown: the solution is exact in the current subspace.  NaN or
    Inf anywhere raises NumericalFailureError.
    """
    if not (0.0 < rel_tol < 1.0):
        raise ValueError("rel_tol must lie in (0, 1)")
    if apply_Pinv is None:
        apply_Pinv = lambda v: v
    rhs = np.asarray(rhs)
    if dtype is None:
        dtype = np.complex128 if np.iscomplexobj(rhs) else np.float64
    b = rhs.astype(dtype, copy=True)
    shape = b.shape

    def dot(u, v):
        return np.vdot(u, v)

    def norm(u):
        return float(np.linalg.norm(u.ravel()))

    report = KrylovReport()
    beta = norm(b)
    report.residual_history.append(beta)
    if beta == 0.0:
        report.converged = True
        report.reduction_achieved = 0.0
        return np.zeros(shape, dtype=dtype), report
    target = rel_tol * beta

    basis = [b / beta]
    H = np.zeros((max_iter + 1, max_iter), dtype=dtype)
    g = np.zeros(max_iter + 1, dtype=dtype)
    g[0] = beta

    k = 0
    happy = False
    for j in range(max_iter):
        w = apply_A(apply_Pinv(basis[j]))
        w = np.asarray(w, dtype=dtype)
        if not np.all(np.isfinite(w.view(np.float64) if dtype == np.complex128 else w)):
            raise NumericalFailureError("non-finite value in GMRES operator output")
        for i in range(j + 1):  # modified Gram-Schmidt
            H[i, j] = dot(basis[i], w)
            w = w - H[i, j] * basis[i]
        H[j + 1, j] = norm(w)
        k = j + 1
        if abs(H[j + 1, j]) < BREAKDOWN_TOL:
            happy = True
        else:
            basis.append(w / H[j + 1, j])
        # least-squares residual of the (k+1) x k Hessenberg system
        y, res = _solve_hessenberg(H[: k + 1, :k], g[: k + 1])
        report.residual_history.append(res)
        if happy or res <= target:
            break

    y, _ = _solve_hessenberg(H[: k + 1, :k], g[: k + 1])
    z = np.zeros(shape, dtype=dtype)
    for i in range(k):
        z = z + y[i] * basis[i]
    x = np.asarray(apply_Pinv(z), dtype=dtype)

    true_res = norm(b - np.asarray(apply_A(x), dtype=dtype))
    report.iterations = k
    report.reduction_achieved = true_res / beta
    report.converged = happy or true_res <= target * (1.0 + 1e-9) or (
        report.residual_history[-1] <= target
    )
    if not np.all(np.isfinite(x.view(np.float64) if dtype == np.complex128 else x)):
        raise NumericalFailureError("non-finite GMRES solution")
    return x, report


def _solve_hessenberg(Hk, gk):
    """Least squares min ||gk - Hk y||; returns (y, residual norm)."""
    y, *_ = np.linalg.lstsq(Hk, gk, rcond=None)
    res = float(np.linalg.norm(gk - Hk @ y))
    return y, res
