"""Geometric multigrid V-cycle for blocks (lam M + tau K).

One V-cycle is used as the approximate block inverse inside the stage
preconditioner.  Smoothing is a fixed-coefficient Chebyshev polynomial around
point Jacobi; the largest eigenvalue of the Jacobi-preconditioned operator is
estimated once per solver by power iteration and then frozen, which keeps the
whole cycle a linear operator (required inside non-flexible GMRES).

Three variants share the machinery:
  * BlockSolver        - one real block, one right-hand side
  * BatchedBlockSolver - all Q stage blocks in a single multivector sweep,
                         Chebyshev coefficients shared across blocks
  * PairBlockSolver    - coupled 2x2 real form of one complex block
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ConfigurationError, NumericalFailureError, SpectralFailureError

_POWER_SEED = 202206


@dataclass
class VCycleConfig:
    smoother_degree: int = 5
    smoothing_range: float = 20.0
    eig_iters: int = 20
    eig_safety: float = 1.2
    coarse_solver: str = "direct"  # "direct" | "chebyshev"

    def __post_init__(self):
        if self.smoother_degree < 1:
            raise ConfigurationError("smoother_degree must be >= 1")
        if self.smoothing_range <= 1.0:
            raise ConfigurationError("smoothing_range must exceed 1")
        if self.eig_safety < 1.0:
            raise ConfigurationError("eig_safety must be >= 1")
        if self.coarse_solver not in ("direct", "chebyshev"):
            raise ConfigurationError(f"unknown coarse solver {self.coarse_solver!r}")


def estimate_lambda_max(apply_op, inv_diag, n, config=None, seed=_POWER_SEED):
    """Largest eigenvalue of the Jacobi-preconditioned operator, with safety.

    Power iteration with a fixed seeded start vector; the returned value is
    the raw estimate multiplied by ``eig_safety``.
    """
    config = config or VCycleConfig()
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    est = 1.0
    for _ in range(config.eig_iters):
        w = inv_diag * apply_op(v)
        est = np.linalg.norm(w)
        if not np.isfinite(est) or est <= 0.0:
            raise SpectralFailureError(f"power iteration produced estimate {est}")
        v = w / est
    return est * config.eig_safety


class ChebyshevSmoother:
    """Fixed-coefficient Chebyshev iteration around point Jacobi."""

    def __init__(self, lam_max, config):
        self.degree = config.smoother_degree
        lam_min = lam_max / config.smoothing_range
        self.theta = 0.5 * (lam_max + lam_min)
        self.delta = 0.5 * (lam_max - lam_min)

    def apply(self, apply_op, inv_diag, x, b):
        """In-place style smoothing: returns the updated x."""
        r = b - apply_op(x)
        d = (inv_diag * r) / self.theta
        if self.degree == 1:
            return x + d
        sigma = self.theta / self.delta
        rho = 1.0 / sigma
        for _ in range(self.degree - 1):
            x = x + d
            r = r - apply_op(d)
            rho_new = 1.0 / (2.0 * sigma - rho)
            d = rho_new * rho * d + (2.0 * rho_new / self.delta) * (inv_diag * r)
            rho = rho_new
        return x + d


class _VCycleBase:
    """Level recursion shared by the real, batched and paired solvers.

    Subclasses provide per-level ``_apply(level, u)``, ``_inv_diag(level)``,
    ``_restrict_masked``, ``_prolong`` and the coarse solve.
    """

    def __init__(self, hierarchy, config, min_level=0):
        if not (0 <= min_level <= hierarchy.max_level):
            raise ConfigurationError("min_level outside hierarchy range")
        self.hierarchy = hierarchy
        self.config = config or VCycleConfig()
        self.min_level = min_level
        self.smoothers = {}
        self.cycles_applied = 0

    def _smoother(self, level):
        return self.smoothers[level]

    def apply(self, b):
        """One V-cycle from the zero initial guess on the finest level."""
        x = self._cycle(self.hierarchy.max_level, np.asarray(b, dtype=float))
        self.cycles_applied += 1
        return x

    def _cycle(self, level, b):
        if level == self.min_level:
            return self._coarse_solve(b)
        sm = self._smoother(level)
        inv_d = self._inv_diag(level)
        x = sm.apply(lambda u: self._apply(level, u), inv_d, np.zeros_like(b), b)
        r = b - self._apply(level, x)
        rc = self._restrict_masked(level, r)
        ec = self._cycle(level - 1, rc)
        x = x + self._prolong(level - 1, ec)
        x = sm.apply(lambda u: self._apply(level, u), inv_d, x, b)
        if not np.all(np.isfinite(x)):
            raise NumericalFailureError("non-finite V-cycle iterate", level=level)
        return x

    def _coarse_solve(self, b):
        if self.config.coarse_solver == "direct":
            return self._coarse_direct(b)
        sm = self._smoother(self.min_level)
        return sm.apply(
            lambda u: self._apply(self.min_level, u),
            self._inv_diag(self.min_level),
            np.zeros_like(b),
            b,
        )


class BlockSolver(_VCycleBase):
    """V-cycle approximate inverse of one constrained block (lam M + tau K)."""

    def __init__(self, hierarchy, lam, tau, config=None, min_level=0):
        super().__init__(hierarchy, config, min_level)
        self.lam = float(lam)
        self.tau = float(tau)
        self._diag = {}
        self.lambda_max = {}
        for level in range(self.min_level, hierarchy.max_level + 1):
            diag = hierarchy.operator_diagonal(level, self.lam, self.tau)
            self._diag[level] = 1.0 / diag
            est = estimate_lambda_max(
                lambda u, level=level: self._apply(level, u),
                self._diag[level],
                hierarchy.levels[level].n_dofs,
                self.config,
            )
            self.lambda_max[level] = est
            self.smoothers[level] = ChebyshevSmoother(est, self.config)
        self._coarse_lu = None

    def _apply(self, level, u):
        return self.hierarchy.apply_constrained(level, self.lam, self.tau, u)

    def _inv_diag(self, level):
        return self._diag[level]

    def _restrict_masked(self, level, r):
        rc = self.hierarchy.restrict(level, r)
        mask = self.hierarchy.levels[level - 1].interior_mask
        return np.where(mask, rc, 0.0)

    def _prolong(self, coarse_level, e):
        return self.hierarchy.prolong(coarse_level, e)

    def _coarse_direct(self, b):
        if self._coarse_lu is None:
            nc = self.hierarchy.levels[self.min_level].n_dofs
            mat = np.column_stack(
                [self._apply(self.min_level, e) for e in np.eye(nc)]
            )
            self._coarse_lu = scipy.linalg.lu_factor(mat)
        return scipy.linalg.lu_solve(self._coarse_lu, b)


class BatchedBlockSolver(_VCycleBase):
    """All Q blocks in one multivector V-cycle sweep.

    Per-block Jacobi diagonals, but a single Chebyshev coefficient set built
    from the maximum eigenvalue estimate over all blocks.
    """

    def __init__(self, hierarchy, lams, tau, config=None, min_level=0):
        super().__init__(hierarchy, config, min_level)
        self.lams = np.asarray(lams, dtype=float)
        self.tau = float(tau)
        self._diag = {}
        for level in range(self.min_level, hierarchy.max_level + 1):
            diag = np.stack(
                [
                    hierarchy.operator_diagonal(level, lam, self.tau)
                    for lam in self.lams
                ]
            )
            self._diag[level] = 1.0 / diag
            per_block = [
                estimate_lambda_max(
                    lambda u, level=level, lam=lam: hierarchy.apply_constrained(
                        level, lam, self.tau, u
                    ),
                    1.0 / diag[i],
                    hierarchy.levels[level].n_dofs,
                    self.config,
                )
                for i, lam in enumerate(self.lams)
            ]
            shared = max(per_block)
            self.smoothers[level] = ChebyshevSmoother(shared, self.config)
        self._coarse_lus = None

    def _apply(self, level, u):
        mask = self.hierarchy.levels[level].interior_mask
        ui = np.where(mask, u, 0.0)
        v = self.hierarchy.apply_shifted(level, self.lams, self.tau, ui)
        return np.where(mask, v, u)

    def _inv_diag(self, level):
        return self._diag[level]

    def _restrict_masked(self, level, r):
        rc = self.hierarchy.restrict(level, r)
        mask = self.hierarchy.levels[level - 1].interior_mask
        return np.where(mask, rc, 0.0)

    def _prolong(self, coarse_level, e):
        return self.hierarchy.prolong(coarse_level, e)

    def _coarse_direct(self, b):
        if self._coarse_lus is None:
            nc = self.hierarchy.levels[self.min_level].n_dofs
            self._coarse_lus = []
            for lam in self.lams:
                cols = []
                mask = self.hierarchy.levels[self.min_level].interior_mask
                for e in np.eye(nc):
                    v = self.hierarchy.apply_shifted(
                        self.min_level, lam, self.tau, np.where(mask, e, 0.0)
                    )
                    cols.append(np.where(mask, v, e))
                self._coarse_lus.append(scipy.linalg.lu_factor(np.column_stack(cols)))
        return np.stack(
            [scipy.linalg.lu_solve(self._coarse_lus[i], b[i]) for i in range(len(b))]
        )


class PairBlockSolver(_VCycleBase):
    """V-cycle on the coupled 2x2 real form of one complex block.

    The operator on a pair (re, im) is [[K', -M'], [M', K']] with
    K' = re_lam M + tau K and M' = im_lam M; smoothing uses Chebyshev around
    block-diagonal Jacobi built from the 2x2 point blocks.
    """

    def __init__(self, hierarchy, re_lam, im_lam, tau, config=None, min_level=0):
        super().__init__(hierarchy, config, min_level)
        self.re_lam = float(re_lam)
        self.im_lam = float(im_lam)
        self.tau = float(tau)
        self._jacobi = {}
        for level in range(self.min_level, hierarchy.max_level + 1):
            a = hierarchy.operator_diagonal(level, self.re_lam, self.tau)
            b = self.im_lam * (
                hierarchy.operator_diagonal(level, 1.0, 0.0)
            )
            mask = hierarchy.levels[level].interior_mask
            b = np.where(mask, b, 0.0)
            det = a * a + b * b
            self._jacobi[level] = (a / det, b / det)
            est = estimate_lambda_max(
                lambda u, level=level: self._apply_flat(level, u),
                self._inv_diag_flat(level),
                2 * hierarchy.levels[level].n_dofs,
                self.config,
                seed=_POWER_SEED + 1,
            )
            self.smoothers[level] = ChebyshevSmoother(est, self.config)
        self._coarse_lu = None

    def _apply(self, level, u):
        """u shaped (2, n): coupled block application, constrained."""
        hier = self.hierarchy
        mask = hier.levels[level].interior_mask
        ui = np.where(mask, u, 0.0)
        m_re = hier.apply_mass(level, ui[0])
        m_im = hier.apply_mass(level, ui[1])
        k_re = hier.apply_stiffness(level, ui[0])
        k_im = hier.apply_stiffness(level, ui[1])
        kp_re = self.re_lam * m_re + self.tau * k_re
        kp_im = self.re_lam * m_im + self.tau * k_im
        out = np.stack(
            [kp_re - self.im_lam * m_im, self.im_lam * m_re + kp_im]
        )
        return np.where(mask, out, u)

    def _apply_flat(self, level, u):
        n = self.hierarchy.levels[level].n_dofs
        return self._apply(level, u.reshape(2, n)).ravel()

    def _inv_diag(self, level):
        # block Jacobi: (re, im) -> ((a re + b im), (-b re + a im)) / det
        a, b = self._jacobi[level]

        class _BlockDiag:
            def __mul__(_, r):
                return np.stack([a * r[0] + b * r[1], -b * r[0] + a * r[1]])

            __rmul__ = __mul__

        return _BlockDiag()

    def _inv_diag_flat(self, level):
        a, b = self._jacobi[level]
        n = len(a)

        class _FlatBlockDiag:
            def __mul__(_, r):
                rr = r.reshape(2, n)
                return np.stack([a * rr[0] + b * rr[1], -b * rr[0] + a * rr[1]]).ravel()

            __rmul__ = __mul__

        return _FlatBlockDiag()

    def _restrict_masked(self, level, r):
        rc = self.hierarchy.restrict(level, r)
        mask = self.hierarchy.levels[level - 1].interior_mask
        return np.where(mask, rc, 0.0)

    def _prolong(self, coarse_level, e):
        return self.hierarchy.prolong(coarse_level, e)

    def _coarse_direct(self, b):
        if self._coarse_lu is None:
            nc = self.hierarchy.levels[self.min_level].n_dofs
            cols = [
                self._apply_flat(self.min_level, e) for e in np.eye(2 * nc)
            ]
            self._coarse_lu = scipy.linalg.lu_factor(np.column_stack(cols))
        nc = self.hierarchy.levels[self.min_level].n_dofs
        return scipy.linalg.lu_solve(self._coarse_lu, b.ravel()).reshape(2, nc)


def chebyshev_smooth(apply_op, inv_diag, x, b, lam_max, config=None):
    """Standalone degree-d Chebyshev smoothing step (testing hook)."""
    config = config or VCycleConfig()
    return ChebyshevSmoother(lam_max, config).apply(apply_op, inv_diag, x, b)


def v_cycle(hierarchy, lambda_shift, tau, b, config=None, min_level=0):
    """Convenience one-shot V-cycle; builds a solver and applies it once."""
    if lambda_shift <= 0.0:
        raise ConfigurationError("lambda_shift must be positive")
    solver = BlockSolver(hierarchy, lambda_shift, tau, config, min_level)
    return solver.apply(b)


def v_cycle_2x2(hierarchy, re_lam, im_lam, tau, b_pair, config=None, min_level=0):
    """One V-cycle on the coupled 2x2 system; b_pair is (2, n)."""
    solver = PairBlockSolver(hierarchy, re_lam, im_lam, tau, config, min_level)
    return solver.apply(b_pair)
