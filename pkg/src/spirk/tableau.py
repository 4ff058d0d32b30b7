"""Radau IIA Butcher tableaux and the matrix factorizations used by the solvers.

The time integrator never factorizes the spatial problem; everything in this
module operates on small dense Q x Q matrices: the coefficient matrix of the
collocation method, its inverse, the Crout LU split of the inverse, and the
real/complex spectral decompositions that diagonalize the stage coupling.
"""

from dataclasses import dataclass
from math import comb

import numpy as np

from .errors import (
    DegenerateSpectrumError,
    FactorizationError,
    SpectralFailureError,
    UnsupportedStageCountError,
)

MAX_STAGES = 9


@dataclass(frozen=True)
class ButcherTableau:
    """Coefficients (A, b, c) of a Q-stage Radau IIA method plus inv(A)."""

    Q: int
    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    Ainv: np.ndarray


@dataclass(frozen=True)
class TriangularFactors:
    """Crout split inv(A) = L @ U with unit-diagonal U."""

    L: np.ndarray
    U: np.ndarray


@dataclass(frozen=True)
class RealSpectralFactors:
    """Spectral decomposition L = S @ diag(lambdas) @ Sinv, all real."""

    lambdas: np.ndarray
    S: np.ndarray
    Sinv: np.ndarray


@dataclass(frozen=True)
class EigenvaluePair:
    """One entry of the complex spectrum: the value and its conjugate partner.

    ``index`` / ``partner_index`` address the full length-Q spectrum.  A lone
    real eigenvalue (odd Q) is its own partner and has ``im == 0``.
    """

    re: float
    im: float
    index: int
    partner_index: int

    @property
    def is_real(self):
        return self.index == self.partner_index


@dataclass(frozen=True)
class ComplexSpectralFactors:
    """Spectral decomposition inv(A) = S @ diag(lambdas) @ Sinv over C.

    Conjugate eigenvalue pairs sit adjacent in ``lambdas``; for odd Q the
    single real eigenvalue comes last.  ``pairs`` lists one representative
    (the member with non-negative imaginary part) per pair.
    """

    lambdas: np.ndarray
    S: np.ndarray
    Sinv: np.ndarray
    pairs: tuple


def _radau_polynomial_coefficients(Q):
    """Monomial coefficients (ascending) of d^{Q-1}/dx^{Q-1} [x^{Q-1} (x-1)^Q].

    The Q roots of this polynomial in (0, 1] are the right-endpoint Radau
    collocation nodes.  All coefficients are integers representable exactly
    in double precision for Q <= 9.
    """
    base = np.zeros(2 * Q)
    for k in range(Q + 1):
        base[Q - 1 + k] = comb(Q, k) * (-1) ** (Q - k)
    order = Q - 1
    out = np.zeros(2 * Q - order)
    for m in range(order, 2 * Q):
        if base[m] == 0.0:
            continue
        fall = 1.0
        for j in range(m, m - order, -1):
            fall *= j
        out[m - order] = base[m] * fall
    return out


def _polyval(coeffs, x):
    y = 0.0
    for a in reversed(coeffs):
        y = y * x + a
    return y


def _radau_nodes(Q):
    """Roots of the Radau right polynomial, found by bisection on sign changes.

    The node at x = 1 is set exactly; the remaining Q-1 interior roots are
    simple and well separated (minimum gap ~0.02 for Q = 9), so a scan with
    2e5 samples brackets each of them.
    """
    if Q == 1:
        return np.array([1.0])
    coeffs = _radau_polynomial_coefficients(Q)
    xs = np.linspace(0.0, 1.0, 200001)
    powers = xs[:, None] ** np.arange(len(coeffs))[None, :]
    vals = powers @ coeffs
    roots = []
    for i in range(len(xs) - 1):
        fa, fb = vals[i], vals[i + 1]
        if fa == 0.0 and 0.0 < xs[i] < 1.0 - 1e-9:
            roots.append(xs[i])
            continue
        if fa * fb < 0.0:
            lo, hi, flo = xs[i], xs[i + 1], fa
            while hi - lo > 1e-17:
                mid = 0.5 * (lo + hi)
                if mid == lo or mid == hi:
                    break
                fm = _polyval(coeffs, mid)
                if fm == 0.0:
                    lo = hi = mid
                elif flo * fm < 0.0:
                    hi = mid
                else:
                    lo, flo = mid, fm
            roots.append(0.5 * (lo + hi))
    roots = sorted(r for r in roots if r < 1.0 - 1e-9)
    roots.append(1.0)
    return np.array(roots)


def _lagrange_values(nodes, j, x):
    """Evaluate the j-th Lagrange basis polynomial at points x (product form)."""
    num = np.ones_like(x)
    den = 1.0
    for m, cm in enumerate(nodes):
        if m == j:
            continue
        num = num * (x - cm)
        den *= nodes[j] - cm
    return num / den


def radau_iia(Q):
    """Construct the Q-stage Radau IIA tableau.

    Nodes are the roots of the Radau right polynomial; the coefficients are
    the collocation integrals a_ij = int_0^{c_i} ell_j(s) ds, evaluated with
    a Q-point Gauss-Legendre rule (exact for the degree Q-1 basis).
    """
    if not (1 <= Q <= MAX_STAGES):
        raise UnsupportedStageCountError(
            f"stage count {Q} outside supported range [1, {MAX_STAGES}]"
        )
    c = _radau_nodes(Q)
    xg, wg = np.polynomial.legendre.leggauss(Q)
    A = np.zeros((Q, Q))
    for i in range(Q):
        half = 0.5 * c[i]
        pts = half * (xg + 1.0)
        w = half * wg
        for j in range(Q):
            A[i, j] = np.sum(w * _lagrange_values(c, j, pts))
    b = A[-1, :].copy()
    Ainv = np.linalg.inv(A)
    return ButcherTableau(Q=Q, A=A, b=b, c=c, Ainv=Ainv)


def crout_lu(Ainv):
    """Crout factorization Ainv = L @ U with L lower and U unit-diagonal upper.

    Raises FactorizationError (with the pivot index) on a zero pivot.
    """
    Ainv = np.asarray(Ainv, dtype=float)
    n = Ainv.shape[0]
    if Ainv.shape != (n, n):
        raise ValueError("crout_lu expects a square matrix")
    L = np.zeros((n, n))
    U = np.eye(n)
    for j in range(n):
        for i in range(j, n):
            L[i, j] = Ainv[i, j] - L[i, :j] @ U[:j, j]
        if L[j, j] == 0.0:
            raise FactorizationError(j)
        for i in range(j + 1, n):
            U[j, i] = (Ainv[j, i] - L[j, :j] @ U[:j, i]) / L[j, j]
    return TriangularFactors(L=L, U=U)


def spectral_real(L):
    """Spectral decomposition of a lower-triangular matrix with distinct diagonal.

    Eigenvalues are the diagonal entries; each eigenvector is computed by
    forward substitution and scaled so its first nonzero entry equals 1,
    which makes S lower-triangular with unit diagonal.  The substitution and
    the triangular inversion run in extended precision before rounding to
    float64: the eigenbasis of the Radau LU factor is ill-conditioned for
    Q >= 8 and plain double-precision substitution loses ~1e-9 in the
    reconstruction.
    """
    L = np.asarray(L, dtype=float)
    n = L.shape[0]
    lambdas = np.diag(L).copy()
    scale = max(np.abs(lambdas).max(), 1.0)
    for a in range(n):
        for b in range(a + 1, n):
            if abs(lambdas[a] - lambdas[b]) < 1e-10 * scale:
                raise DegenerateSpectrumError(
                    f"diagonal entries {a} and {b} closer than 1e-10 relative"
                )
    Lx = L.astype(np.longdouble)
    S = np.zeros((n, n), dtype=np.longdouble)
    for k in range(n):
        v = np.zeros(n, dtype=np.longdouble)
        v[k] = 1.0
        for i in range(k + 1, n):
            v[i] = -(Lx[i, k:i] @ v[k:i]) / (Lx[i, i] - Lx[k, k])
        S[:, k] = v
    # S is unit lower triangular; invert by forward substitution
    Sinv = np.zeros((n, n), dtype=np.longdouble)
    for j in range(n):
        x = np.zeros(n, dtype=np.longdouble)
        x[j] = 1.0
        for i in range(j + 1, n):
            x[i] = -(S[i, :i] @ x[:i])
        Sinv[:, j] = x
    return RealSpectralFactors(
        lambdas=lambdas, S=S.astype(float), Sinv=Sinv.astype(float)
    )


def _first_nonzero_scale(v):
    """Scale factor making the first significant entry of v equal one."""
    mag = np.abs(v)
    idx = int(np.argmax(mag > 1e-12 * mag.max()))
    return v[idx]


def spectral_complex(Ainv):
    """Diagonalize inv(A) over C with conjugate pairs adjacent.

    Pair ordering is by ascending real part; within a pair the representative
    with non-negative imaginary part comes first and the partner's eigenvector
    is taken as the exact conjugate of the representative's.  For odd Q the
    lone real eigenvalue is placed last.
    """
    Ainv = np.asarray(Ainv, dtype=float)
    Q = Ainv.shape[0]
    try:
        vals, vecs = np.linalg.eig(Ainv)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise SpectralFailureError(str(exc)) from exc
    if not np.all(np.isfinite(vals.view(float))):
        raise SpectralFailureError("non-finite eigenvalues")

    order = np.argsort(-vals.imag, kind="stable")
    remaining = list(order)
    scale = np.abs(vals).max()
    groups = []  # (representative eigval, rep vec) or real singleton
    reals = []
    while remaining:
        i = remaining.pop(0)
        if abs(vals[i].imag) <= 1e-10 * scale:
            reals.append(i)
            continue
        # find the conjugate partner among the remaining indices
        match, best = None, np.inf
        for j in remaining:
            d = abs(vals[j] - np.conj(vals[i]))
            if d < best:
                match, best = j, d
        if match is None or best > 1e-8 * scale:
            raise SpectralFailureError("could not match a conjugate pair")
        remaining.remove(match)
        rep = i if vals[i].imag > 0 else match
        groups.append((vals[rep], vecs[:, rep]))
    if len(reals) != Q % 2:
        raise SpectralFailureError(
            f"expected {Q % 2} real eigenvalue(s), found {len(reals)}"
        )

    groups.sort(key=lambda g: g[0].real)
    lambdas = np.zeros(Q, dtype=complex)
    S = np.zeros((Q, Q), dtype=complex)
    pairs = []
    pos = 0
    for lam, vec in groups:
        v = vec / _first_nonzero_scale(vec)
        lambdas[pos] = lam
        lambdas[pos + 1] = np.conj(lam)
        S[:, pos] = v
        S[:, pos + 1] = np.conj(v)
        pairs.append(
            EigenvaluePair(re=lam.real, im=lam.imag, index=pos, partner_index=pos + 1)
        )
        pos += 2
    for i in reals:
        lam = vals[i].real
        v = vecs[:, i] / _first_nonzero_scale(vecs[:, i])
        lambdas[pos] = lam
        S[:, pos] = v.real
        pairs.append(EigenvaluePair(re=lam, im=0.0, index=pos, partner_index=pos))
        pos += 1
    Sinv = np.linalg.inv(S)
    return ComplexSpectralFactors(lambdas=lambdas, S=S, Sinv=Sinv, pairs=tuple(pairs))


def tableau_csv_rows(tab):
    """Rows for the tableau export: per stage [c_i, a_i1..a_iQ], then the weights."""
    rows = []
    for i in range(tab.Q):
        rows.append([f"{tab.c[i]!r}"] + [f"{a!r}" for a in tab.A[i]])
    rows.append(["b"] + [f"{w!r}" for w in tab.b])
    return rows
