"""Uniform-grid FEM discretization of the heat model problem.

Nested grids on [0,1]^dim with multilinear (k=1) Lagrange elements.  Mass and
stiffness actions are matrix-free: the uniform affine mesh gives both
operators an exact tensor-product structure (M = M1 x M1 x ..., K a sum of
Kronecker terms), so one application is a sequence of small dense contractions
along each grid axis.  Dirichlet constraints are eliminated symmetrically
through an interior mask.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DimensionMismatchError

GAUSS_PTS = np.array([-1.0, 1.0]) / np.sqrt(3.0)
GAUSS_WTS = np.array([1.0, 1.0])


def _mass_1d(n_nodes, h):
    """Assembled 1D mass matrix for linear elements on a uniform grid."""
    m = np.zeros((n_nodes, n_nodes))
    el = h / 6.0 * np.array([[2.0, 1.0], [1.0, 2.0]])
    for e in range(n_nodes - 1):
        m[e : e + 2, e : e + 2] += el
    return m

def _stiffness_1d(n_nodes, h):
    k = np.zeros((n_nodes, n_nodes))
    el = 1.0 / h * np.array([[1.0, -1.0], [-1.0, 1.0]])
    for e in range(n_nodes - 1):
        k[e : e + 2, e : e + 2] += el
    return k


def _contract(mat, arr, axis):
    """Apply a dense matrix along one axis of a dense tensor."""
    moved = np.moveaxis(arr, axis, 0)
    out = mat @ moved.reshape(moved.shape[0], -1)
    return np.moveaxis(out.reshape((mat.shape[0],) + moved.shape[1:]), 0, axis)


@dataclass
class GridLevel:
    """One refinement level: node layout, 1D factors, constraint mask."""

    index: int
    dim: int
    n_per_axis: int
    h: float
    mass_1d: np.ndarray
    stiffness_1d: np.ndarray
    interior_mask: np.ndarray  # flat, True on interior DoFs

    @property
    def shape(self):
        return (self.n_per_axis,) * self.dim

    @property
    def n_dofs(self):
        return self.n_per_axis**self.dim

    @property
    def n_cells(self):
        return (self.n_per_axis - 1) ** self.dim

    def axis_coords(self):
        return np.linspace(0.0, 1.0, self.n_per_axis)


class GridHierarchy:
    """Nested uniform grids with per-level operators and transfer actions."""

    def __init__(self, dim, max_level):
        if dim not in (1, 2, 3):
            raise ConfigurationError(f"dim must be 1, 2 or 3, got {dim}")
        if not (1 <= max_level <= 7):
            raise ConfigurationError(f"max_level must be in [1, 7], got {max_level}")
        self.dim = dim
        self.max_level = max_level
        self.levels = []
        for ell in range(max_level + 1):
            n = 2**ell + 1
            h = 1.0 / (n - 1)
            coords = np.linspace(0.0, 1.0, n)
            boundary_1d = (coords == 0.0) | (coords == 1.0)
            interior = ~boundary_1d
            mask = interior
            for _ in range(dim - 1):
                mask = np.logical_and.outer(mask, interior)
            self.levels.append(
                GridLevel(
                    index=ell,
                    dim=dim,
                    n_per_axis=n,
                    h=h,
                    mass_1d=_mass_1d(n, h),
                    stiffness_1d=_stiffness_1d(n, h),
                    interior_mask=mask.ravel(),
                )
            )

    @property
    def finest(self):
        return self.levels[-1]

    @property
    def n(self):
        return self.finest.n_dofs

    def _check(self, level, u):
        lvl = self.levels[level]
        if u.shape[-1] != lvl.n_dofs:
            raise DimensionMismatchError(
                f"level {level} expects {lvl.n_dofs} DoFs, got {u.shape[-1]}"
            )
        return lvl

    def apply_mass(self, level, u):
        """v = M u, unconstrained.  Accepts (..., n) stacked vectors."""
        lvl = self._check(level, np.asarray(u))
        lead = u.shape[:-1]
        w = u.reshape(lead + lvl.shape)
        off = len(lead)
        for ax in range(self.dim):
            w = _contract(lvl.mass_1d, w, off + ax)
        return w.reshape(lead + (lvl.n_dofs,))

    def apply_stiffness(self, level, u):
        """v = K u (negative-Laplacian bilinear form), unconstrained."""
        lvl = self._check(level, np.asarray(u))
        lead = u.shape[:-1]
        w = u.reshape(lead + lvl.shape)
        off = len(lead)
        out = np.zeros_like(w)
        for d in range(self.dim):
            term = w
            for ax in range(self.dim):
                op = lvl.stiffness_1d if ax == d else lvl.mass_1d
                term = _contract(op, term, off + ax)
            out += term
        return out.reshape(lead + (lvl.n_dofs,))

    def apply_shifted(self, level, lam, tau, u):
        """v = (lam M + tau K) u, unconstrained; lam may be per-block array."""
        mu = self.apply_mass(level, u)
        ku = self.apply_stiffness(level, u)
        if np.ndim(lam) == 0:
            return lam * mu + tau * ku
        return np.asarray(lam).reshape((-1,) + (1,) * (u.ndim - 1)) * mu + tau * ku

    def constrain(self, level, vec, boundary_values=0.0):
        """Overwrite boundary DoFs with prescribed values (0 by default)."""
        lvl = self._check(level, np.asarray(vec))
        out = np.array(vec, copy=True)
        out[..., ~lvl.interior_mask] = boundary_values
        return out

    def apply_constrained(self, level, lam, tau, u):
        """Symmetrically eliminated block operator.

        Interior rows act as (lam M + tau K); boundary rows are identity, so
        vectors with zero boundary stay in the interior subspace.
        """
        lvl = self.levels[level]
        mask = lvl.interior_mask
        ui = np.where(mask, u, 0.0)
        v = self.apply_shifted(level, lam, tau, ui)
        return np.where(mask, v, u)

    def operator_diagonal(self, level, lam, tau):
        """Diagonal of (lam M + tau K); 1.0 on constrained rows."""
        lvl = self.levels[level]
        dm1 = np.diag(lvl.mass_1d)
        dk1 = np.diag(lvl.stiffness_1d)
        dm = dm1
        for _ in range(self.dim - 1):
            dm = np.multiply.outer(dm, dm1)
        dk = np.zeros(lvl.shape)
        for d in range(self.dim):
            term = np.ones(())
            for ax in range(self.dim):
                term = np.multiply.outer(term, dk1 if ax == d else dm1)
            dk += term
        diag = (lam * dm + tau * dk).ravel()
        return np.where(lvl.interior_mask, diag, 1.0)

    def prolong(self, coarse_level, u_coarse):
        """Linear interpolation from level ell to ell+1 (exact on linears)."""
        lvl_c = self._check(coarse_level, np.asarray(u_coarse))
        nc = lvl_c.n_per_axis
        p1 = _prolongation_1d(nc)
        lead = u_coarse.shape[:-1]
        w = u_coarse.reshape(lead + lvl_c.shape)
        off = len(lead)
        for ax in range(self.dim):
            w = _contract(p1, w, off + ax)
        return w.reshape(lead + (-1,))

    def restrict(self, fine_level, r_fine):
        """Transpose of prolongation, from level ell to ell-1."""
        lvl_f = self._check(fine_level, np.asarray(r_fine))
        nc = self.levels[fine_level - 1].n_per_axis
        p1t = _prolongation_1d(nc).T
        lead = r_fine.shape[:-1]
        w = r_fine.reshape(lead + lvl_f.shape)
        off = len(lead)
        for ax in range(self.dim):
            w = _contract(p1t, w, off + ax)
        return w.reshape(lead + (-1,))

    def node_coords(self, level):
        """(n_dofs, dim) array of node coordinates in grid (C) order."""
        lvl = self.levels[level]
        axes = [lvl.axis_coords()] * self.dim
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def load_vector(self, level, f, t):
        """Consistent load vector int f(x, t) phi_i dx with the 2-point Gauss rule.

        Exploits separability-free per-element quadrature: f is evaluated at
        the tensor Gauss points of every cell at once.
        """
        lvl = self.levels[level]
        n = lvl.n_per_axis
        h = lvl.h
        # per-axis Gauss coordinates and nodal shape values at the 2 points
        xi = 0.5 * (GAUSS_PTS + 1.0)  # in [0,1]
        shape_vals = np.stack([1.0 - xi, xi])  # (2 local nodes, 2 gauss pts)
        cells_1d = np.arange(n - 1)
        gauss_1d = (cells_1d[:, None] + xi[None, :]) * h  # (cells, 2)
        # collapse to a per-axis list of all Gauss coordinates
        gx = [gauss_1d.ravel()] * self.dim
        mesh = np.meshgrid(*gx, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=-1)
        fvals = f(pts, t).reshape((2 * (n - 1),) * self.dim)
        out = np.zeros(lvl.shape)
        # scatter: for each local corner, contract shape values per axis
        w1 = 0.5 * h * GAUSS_WTS  # per-axis quadrature weight
        contrib = fvals
        for ax in range(self.dim):
            contrib = _contract_gauss_to_nodes(contrib, shape_vals, w1, n, ax)
        out += contrib
        return out.ravel()

    def l2_error(self, level, u_nodal, u_exact, t):
        """L2 norm of (u_h - u_exact) by per-cell 2-point Gauss quadrature."""
        lvl = self.levels[level]
        n = lvl.n_per_axis
        h = lvl.h
        xi = 0.5 * (GAUSS_PTS + 1.0)
        # nodal -> Gauss-point interpolation matrix per axis: (2(n-1), n)
        interp = np.zeros((2 * (n - 1), n))
        for e in range(n - 1):
            for g in range(2):
                interp[2 * e + g, e] = 1.0 - xi[g]
                interp[2 * e + g, e + 1] = xi[g]
        w = u_nodal.reshape(lvl.shape)
        for ax in range(self.dim):
            w = _contract(interp, w, ax)
        cells_1d = np.arange(n - 1)
        gauss_1d = (cells_1d[:, None] + xi[None, :]).ravel() * h
        mesh = np.meshgrid(*([gauss_1d] * self.dim), indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=-1)
        diff = w.ravel() - u_exact(pts, t)
        wq = 0.5 * h * GAUSS_WTS
        wts = np.tile(wq, n - 1)
        weight = np.ones(())
        for _ in range(self.dim):
            weight = np.multiply.outer(weight, wts)
        return float(np.sqrt(np.sum(weight.ravel() * diff**2)))


def _contract_gauss_to_nodes(arr, shape_vals, w1, n, axis):
    """Accumulate per-axis Gauss-point data into nodal values (load assembly)."""
    # matrix (n, 2(n-1)): node i gets shape_vals from adjacent cell points
    m = np.zeros((n, 2 * (n - 1)))
    for e in range(n - 1):
        for g in range(2):
            m[e, 2 * e + g] += shape_vals[0, g] * w1[g]
            m[e + 1, 2 * e + g] += shape_vals[1, g] * w1[g]
    return _contract(m, arr, axis)


def _prolongation_1d(nc):
    """1D interpolation matrix from nc coarse nodes to 2*(nc-1)+1 fine nodes."""
    nf = 2 * (nc - 1) + 1
    p = np.zeros((nf, nc))
    for i in range(nf):
        if i % 2 == 0:
            p[i, i // 2] = 1.0
        else:
            p[i, i // 2] = 0.5
            p[i, i // 2 + 1] = 0.5
    return p


def build_hierarchy(dim, max_level):
    """Nested hierarchy of uniform grids, levels 0..max_level."""
    return GridHierarchy(dim, max_level)


def manufactured(dim):
    """Closed-form benchmark solution, source and boundary data.

    u = prod_d sin(2 pi x_d) * (1 + sin(pi t)) * exp(-0.5 t); the source is
    derived analytically from du/dt = lap(u) + f.  Returns callables
    (u_exact, f_source, g_boundary), each mapping ((npts, dim) array, t) to
    values; the solution vanishes on the boundary of the unit box.
    """

    def spatial(x):
        x = np.atleast_2d(x)
        s = np.ones(x.shape[0])
        for d in range(dim):
            s = s * np.sin(2.0 * np.pi * x[:, d])
        return s

    def time_factor(t):
        return (1.0 + np.sin(np.pi * t)) * np.exp(-0.5 * t)

    def time_factor_dt(t):
        return np.exp(-0.5 * t) * (
            np.pi * np.cos(np.pi * t) - 0.5 * (1.0 + np.sin(np.pi * t))
        )

    def u_exact(x, t):
        return spatial(x) * time_factor(t)

    def f_source(x, t):
        lap_coeff = 4.0 * np.pi**2 * dim
        return spatial(x) * (time_factor_dt(t) + lap_coeff * time_factor(t))

    def g_boundary(x, t):
        return u_exact(x, t)

    return u_exact, f_source, g_boundary


@dataclass
class HeatProblem:
    """Time-stepping setup for the heat benchmark on a grid hierarchy."""

    hierarchy: GridHierarchy
    tau: float
    t0: float = 0.0
    steps: int = 10
    callables: tuple = field(default=None, repr=False)

    def __post_init__(self):
        if self.tau <= 0.0:
            raise ConfigurationError("tau must be positive")
        if self.steps < 1:
            raise ConfigurationError("steps must be >= 1")
        if self.callables is None:
            self.callables = manufactured(self.hierarchy.dim)

    @property
    def u_exact(self):
        return self.callables[0]

    @property
    def f_source(self):
        return self.callables[1]

    def initial_condition(self):
        """Nodal interpolant of the exact solution at t0."""
        hier = self.hierarchy
        coords = hier.node_coords(hier.max_level)
        return self.u_exact(coords, self.t0)

    def load(self, t):
        """Source load vector on the finest level."""
        hier = self.hierarchy
        return hier.load_vector(hier.max_level, self.f_source, t)

    def error(self, u, t):
        hier = self.hierarchy
        return hier.l2_error(hier.max_level, u, self.u_exact, t)
