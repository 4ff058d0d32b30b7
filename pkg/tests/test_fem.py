import itertools

import numpy as np
import pytest

from spirk.errors import ConfigurationError, DimensionMismatchError
from spirk.fem import build_hierarchy, manufactured, HeatProblem
from spirk.tableau import radau_iia

RNG = np.random.default_rng(7)


def assemble_oracle(dim, level_nodes, h):
    """Element-loop assembly of global M and K for linear elements (oracle).

    Independent of the tensor-product production path: loops cells, uses the
    exact 1D element matrices, accumulates Kronecker products per element.
    """
    m1 = h / 6.0 * np.array([[2.0, 1.0], [1.0, 2.0]])
    k1 = 1.0 / h * np.array([[1.0, -1.0], [-1.0, 1.0]])
    n = level_nodes**dim
    M = np.zeros((n, n))
    K = np.zeros((n, n))

    def flat(idx):
        out = 0
        for d in range(dim):
            out = out * level_nodes + idx[d]
        return out

    for cell in itertools.product(range(level_nodes - 1), repeat=dim):
        corners = list(itertools.product((0, 1), repeat=dim))
        gidx = [flat(tuple(cell[d] + c[d] for d in range(dim))) for c in corners]
        for a, ca in enumerate(corners):
            for b, cb in enumerate(corners):
                mm = 1.0
                for d in range(dim):
                    mm *= m1[ca[d], cb[d]]
                kk = 0.0
                for dk in range(dim):
                    term = 1.0
                    for d in range(dim):
                        term *= (k1 if d == dk else m1)[ca[d], cb[d]]
                    kk += term
                M[gidx[a], gidx[b]] += mm
                K[gidx[a], gidx[b]] += kk
    return M, K


@pytest.mark.parametrize("dim,level", [(1, 3), (2, 2), (3, 1)])
def test_operators_match_element_assembly(dim, level):
    hier = build_hierarchy(dim, level)
    lvl = hier.levels[level]
    M, K = assemble_oracle(dim, lvl.n_per_axis, lvl.h)
    u = RNG.standard_normal(lvl.n_dofs)
    assert np.allclose(hier.apply_mass(level, u), M @ u, atol=1e-13)
    assert np.allclose(hier.apply_stiffness(level, u), K @ u, atol=1e-12)


def test_mass_interior_stencil_1d():
    hier = build_hierarchy(1, 3)
    lvl = hier.finest
    h = lvl.h
    u = np.zeros(lvl.n_dofs)
    u[4] = 1.0
    v = hier.apply_mass(3, u)
    assert v[3] == pytest.approx(h / 6.0)
    assert v[4] == pytest.approx(4.0 * h / 6.0)
    assert v[5] == pytest.approx(h / 6.0)


def test_stiffness_interior_stencil_1d():
    hier = build_hierarchy(1, 3)
    h = hier.finest.h
    u = np.zeros(hier.n)
    u[4] = 1.0
    v = hier.apply_stiffness(3, u)
    assert v[3] == pytest.approx(-1.0 / h)
    assert v[4] == pytest.approx(2.0 / h)
    assert v[5] == pytest.approx(-1.0 / h)


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_mass_partition_of_unity(dim):
    hier = build_hierarchy(dim, 2)
    ones = np.ones(hier.n)
    assert np.sum(hier.apply_mass(hier.max_level, ones)) == pytest.approx(1.0)


def test_zero_maps_to_zero():
    hier = build_hierarchy(2, 2)
    z = np.zeros(hier.n)
    assert np.all(hier.apply_mass(2, z) == 0.0)
    assert np.all(hier.apply_stiffness(2, z) == 0.0)


def test_stiffness_annihilates_constants_interior():
    hier = build_hierarchy(2, 3)
    v = hier.apply_stiffness(3, np.ones(hier.n))
    assert np.max(np.abs(v[hier.finest.interior_mask])) < 1e-12


def test_stiffness_symmetry():
    hier = build_hierarchy(2, 3)
    u = RNG.standard_normal(hier.n)
    w = RNG.standard_normal(hier.n)
    ku = hier.apply_stiffness(3, u)
    kw = hier.apply_stiffness(3, w)
    assert abs(ku @ w - u @ kw) < 1e-12 * max(1.0, abs(ku @ w))


def test_mass_spd_on_interior():
    hier = build_hierarchy(3, 2)
    mask = hier.finest.interior_mask
    for _ in range(20):
        u = np.where(mask, RNG.standard_normal(hier.n), 0.0)
        assert u @ hier.apply_mass(2, u) > 0.0


def test_stiffness_psd_on_interior():
    hier = build_hierarchy(2, 3)
    mask = hier.finest.interior_mask
    for _ in range(20):
        u = np.where(mask, RNG.standard_normal(hier.n), 0.0)
        assert u @ hier.apply_stiffness(3, u) >= 0.0


def test_dof_and_cell_counts():
    hier = build_hierarchy(3, 4)
    assert hier.finest.n_cells == 4096  # 4.1e3
    assert hier.finest.n_dofs == 4913  # 4.9e3
    hier5 = build_hierarchy(3, 5)
    assert hier5.finest.n_cells == 32768  # 3.3e4
    assert hier5.finest.n_dofs == 35937  # 3.6e4
    hier1 = build_hierarchy(1, 2)
    assert hier1.finest.n_cells == 4
    assert hier1.finest.n_dofs == 5


def test_level_nesting():
    hier = build_hierarchy(2, 3)
    for ell in range(1, 4):
        coarse = hier.node_coords(ell - 1)
        fine = hier.node_coords(ell)
        fine_set = {tuple(np.round(p, 12)) for p in fine}
        assert all(tuple(np.round(p, 12)) in fine_set for p in coarse)


def test_configuration_guards():
    with pytest.raises(ConfigurationError):
        build_hierarchy(4, 2)
    with pytest.raises(ConfigurationError):
        build_hierarchy(2, 0)
    with pytest.raises(ConfigurationError):
        build_hierarchy(2, 8)
    hier = build_hierarchy(1, 2)
    with pytest.raises(DimensionMismatchError):
        hier.apply_mass(2, np.zeros(7))


def test_manufactured_point_values():
    u3, _, _ = manufactured(3)
    assert u3(np.array([[0.25, 0.25, 0.25]]), 0.0)[0] == pytest.approx(1.0)
    assert u3(np.array([[0.0, 0.3, 0.7]]), 1.3)[0] == pytest.approx(0.0, abs=1e-14)
    u1, f1, _ = manufactured(1)
    expected = 4.0 * np.pi**2 + np.pi - 0.5
    assert f1(np.array([[0.25]]), 0.0)[0] == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_source_matches_finite_differences(dim):
    # f = du/dt - lap(u): cross-check the closed form with central differences
    u, f, _ = manufactured(dim)
    x0 = np.full((1, dim), 0.3)
    t0 = 0.7
    eps = 1e-5
    dudt = (u(x0, t0 + eps) - u(x0, t0 - eps))[0] / (2.0 * eps)
    lap = 0.0
    for d in range(dim):
        xp = x0.copy()
        xm = x0.copy()
        xp[0, d] += eps
        xm[0, d] -= eps
        lap += (u(xp, t0) + u(xm, t0) - 2.0 * u(x0, t0))[0] / eps**2
    assert f(x0, t0)[0] == pytest.approx(dudt - lap, rel=1e-6)


def test_constrain_all_boundary_level_zero():
    hier = build_hierarchy(1, 1)
    v = hier.constrain(0, np.array([3.0, 4.0]), boundary_values=1.5)
    assert np.allclose(v, [1.5, 1.5])  # level 0 in 1D: both nodes on boundary


def test_constrain_homogeneous():
    hier = build_hierarchy(2, 2)
    v = hier.constrain(2, np.ones(hier.n))
    assert np.all(v[~hier.finest.interior_mask] == 0.0)
    assert np.all(v[hier.finest.interior_mask] == 1.0)


def test_load_vector_against_quadrature_oracle():
    hier = build_hierarchy(2, 2)
    lvl = hier.finest

    def f(x, t):
        return x[:, 0] ** 2 + 3.0 * x[:, 1]

    g = hier.load_vector(2, f, 0.0)
    # oracle: dense quadrature loop over cells and local corners
    n = lvl.n_per_axis
    h = lvl.h
    xi = 0.5 * (np.array([-1.0, 1.0]) / np.sqrt(3.0) + 1.0)
    oracle = np.zeros((n, n))
    for cx in range(n - 1):
        for cy in range(n - 1):
            for gx in range(2):
                for gy in range(2):
                    px = (cx + xi[gx]) * h
                    py = (cy + xi[gy]) * h
                    fv = px**2 + 3.0 * py
                    w = (0.5 * h) ** 2
                    for lx in range(2):
                        for ly in range(2):
                            shape = (xi[gx] if lx else 1 - xi[gx]) * (
                                xi[gy] if ly else 1 - xi[gy]
                            )
                            oracle[cx + lx, cy + ly] += w * fv * shape
    assert np.allclose(g, oracle.ravel(), atol=1e-14)


def test_prolongation_reproduces_linear_functions():
    hier = build_hierarchy(2, 3)
    coarse = hier.node_coords(2)
    lin_c = 2.0 * coarse[:, 0] - 0.5 * coarse[:, 1] + 0.25
    fine = hier.node_coords(3)
    lin_f = 2.0 * fine[:, 0] - 0.5 * fine[:, 1] + 0.25
    assert np.allclose(hier.prolong(2, lin_c), lin_f, atol=1e-14)


def test_restriction_is_prolongation_transpose():
    hier = build_hierarchy(1, 3)
    nc = hier.levels[2].n_dofs
    nf = hier.levels[3].n_dofs
    P = np.column_stack([hier.prolong(2, e) for e in np.eye(nc)])
    R = np.column_stack([hier.restrict(3, e) for e in np.eye(nf)])
    assert np.allclose(R, P.T, atol=1e-14)


def test_stage_residual_at_interpolant_is_second_order():
    # Plug the nodal interpolants of the exact stage derivatives into the
    # constrained stage system; the interior residual (per unit h) must
    # shrink at second order under refinement on the uniform grid.
    tab = radau_iia(2)
    tau = 1e-6
    u_ex, f_src, _ = manufactured(1)

    def du_dt(x, t, eps=1e-6):
        return (u_ex(x, t + eps) - u_ex(x, t - eps)) / (2.0 * eps)

    norms = []
    for L in (4, 5, 6):
        hier = build_hierarchy(1, L)
        lvl = hier.finest
        coords = hier.node_coords(L)
        u0 = u_ex(coords, 0.0)
        ks = np.stack([du_dt(coords, tab.c[i] * tau) for i in range(2)])
        resid = np.zeros_like(ks)
        for i in range(2):
            g_i = hier.load_vector(L, f_src, tab.c[i] * tau)
            rhs_i = g_i - hier.apply_stiffness(L, u0)
            lhs_i = hier.apply_mass(L, ks[i])
            for j in range(2):
                lhs_i = lhs_i + tau * tab.A[i, j] * hier.apply_stiffness(L, ks[j])
            resid[i] = lhs_i - rhs_i
        interior = lvl.interior_mask
        norms.append(np.max(np.abs(resid[:, interior])) / lvl.h)
    orders = np.log2(np.array(norms[:-1]) / np.array(norms[1:]))
    assert np.all(orders > 1.6)
