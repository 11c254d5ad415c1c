import numpy as np
import pytest
import scipy.linalg

from homoglab import coeff, mesh


def manufactured(n, identity_field):
    dm = mesh.DomainMesh(n)
    op = mesh.assemble(identity_field, dm, mode="dirichlet")
    f = 2 * np.pi ** 2 * np.sin(np.pi * dm.nodes[:, 0]) * np.sin(np.pi * dm.nodes[:, 1])
    u = mesh.solve_dirichlet(op, f[:, None], bdata=0.0)
    exact = np.sin(np.pi * dm.nodes[:, 0]) * np.sin(np.pi * dm.nodes[:, 1])
    op.release()
    return dm, u, exact


def test_boundary_structure():
    dm = mesh.DomainMesh(16)
    assert dm.n_boundary == 4 * dm.n
    assert dm.arc_weights.sum() == pytest.approx(4.0, abs=1e-13)
    mask = dm.noncorner_mask
    assert np.allclose(np.linalg.norm(dm.normals[mask], axis=1), 1.0)
    assert np.isnan(dm.normals[dm.corner_positions]).all()
    # boundary nodes lie on the boundary exactly
    pts = dm.nodes[dm.boundary_nodes]
    on_edge = (pts[:, 0] == 0) | (pts[:, 0] == 1) | (pts[:, 1] == 0) | (pts[:, 1] == 1)
    assert on_edge.all()


def test_torus_element_connectivity():
    grid = mesh.TorusGrid(4)
    assert grid.nnodes == 16 and grid.nelem == 16
    for e in range(grid.nelem):
        assert len(set(grid.elem_dofs[e])) == 4


def test_torus_row_sums_vanish(identity_field):
    grid = mesh.TorusGrid(2)
    op = mesh.assemble(identity_field, grid)
    rowsums = np.asarray(op.matrix.sum(axis=1)).ravel()
    assert np.abs(rowsums).max() < 1e-14


def test_dirichlet_block_positive_definite():
    A = np.diag([np.sqrt(3.0), 2.0])
    dm = mesh.DomainMesh(8)
    op = mesh.assemble(A, dm, mode="dirichlet", m=1)
    Kii = op.interior_matrix().toarray()
    scipy.linalg.cho_factor(Kii)  # raises LinAlgError if not SPD


def test_assembly_symmetric_for_symmetric_coeff(layered_field):
    dm = mesh.DomainMesh(8)
    op = mesh.assemble(coeff.rescale(layered_field, 0.5), dm, mode="dirichlet")
    asym = (op.matrix - op.matrix.T)
    worst = np.abs(asym.data).max() if asym.nnz else 0.0
    assert worst == 0.0


def test_under_resolution_warning(layered_field):
    dm = mesh.DomainMesh(8)
    op = mesh.assemble(coeff.rescale(layered_field, 1 / 4), dm, mode="dirichlet")
    assert op.warnings  # h = 1/8 > eps/8 = 1/32
    op2 = mesh.assemble(coeff.rescale(layered_field, 1.0), dm, mode="dirichlet")
    assert not op2.warnings


def test_dirichlet_affine_data_exact(identity_field):
    dm = mesh.DomainMesh(16)
    op = mesh.assemble(identity_field, dm, mode="dirichlet")
    u = mesh.solve_dirichlet(op, None, bdata=lambda pts: pts[:, :1])
    assert np.abs(u.values[:, 0] - dm.nodes[:, 0]).max() < 1e-12


def test_dirichlet_zero_data_zero(layered_field):
    dm = mesh.DomainMesh(16)
    op = mesh.assemble(coeff.rescale(layered_field, 0.5), dm, mode="dirichlet")
    u = mesh.solve_dirichlet(op, None, bdata=0.0)
    assert np.abs(u.values).max() == 0.0


def test_manufactured_solution_quadratic(identity_field):
    _, u16, e16 = manufactured(16, identity_field)
    _, u32, e32 = manufactured(32, identity_field)
    err16 = np.abs(u16.values[:, 0] - e16).max()
    err32 = np.abs(u32.values[:, 0] - e32).max()
    assert err32 / err16 < 0.3


def test_manufactured_convergence_slopes(identity_field):
    errs_l2, errs_h1 = [], []
    ns = [16, 32, 64, 128]
    for n in ns:
        dm, u, exact = manufactured(n, identity_field)
        diff = mesh.Field(dm, u.values[:, 0] - exact)
        errs_l2.append(mesh.norm(diff, "Lp", 2))
        errs_h1.append(mesh.norm(diff, "W1p", 2))
    h = 1.0 / np.array(ns)
    slope_l2 = np.polyfit(np.log(h), np.log(errs_l2), 1)[0]
    slope_h1 = np.polyfit(np.log(h), np.log(errs_h1), 1)[0]
    assert slope_l2 >= 1.9
    assert slope_h1 >= 0.95


def test_neumann_zero_data(identity_field):
    dm = mesh.DomainMesh(16)
    op = mesh.assemble(identity_field, dm, mode="neumann")
    u = mesh.solve_neumann(op)
    assert np.abs(u.values).max() == 0.0


def test_neumann_incompatible_data_rejected(identity_field):
    dm = mesh.DomainMesh(16)
    op = mesh.assemble(identity_field, dm, mode="neumann")
    f = np.ones((dm.nnodes, 1))  # total source 1, no compensating flux
    with pytest.raises(mesh.SolveError):
        mesh.solve_neumann(op, f)


def test_neumann_pin_and_point_load(identity_field):
    dm = mesh.DomainMesh(32)
    op = mesh.assemble(identity_field, dm, mode="neumann")
    node = int(np.argmin(np.sum((dm.nodes - (0.5, 0.5)) ** 2, axis=1)))
    load = mesh.point_load(dm, node)
    gconst = np.full((dm.n_boundary, 1), -0.25)
    u = mesh.solve_neumann(op, load, flux=gconst)
    pin = (u.values[dm.boundary_nodes, 0] * dm.arc_weights).sum()
    assert abs(pin) < 1e-10


def test_dirichlet_neumann_consistency(layered_field):
    # the Neumann solve with the variational flux of a Dirichlet solution
    # reproduces it up to the pin constant
    dm = mesh.DomainMesh(32)
    sc = coeff.rescale(layered_field, 1 / 4)
    opd = mesh.assemble(sc, dm, mode="dirichlet")
    u_d = mesh.solve_dirichlet(opd, None, bdata=lambda pts: pts[:, :1])
    functional = opd.matrix @ u_d.values.ravel()
    flux_vec = np.zeros(opd.ndof)
    bd = (dm.boundary_nodes[:, None] * 1 + np.arange(1)).ravel()
    flux_vec[bd] = functional[bd]
    opn = mesh.assemble(sc, dm, mode="neumann")
    u_n = mesh.solve_neumann(opn, None, flux=flux_vec)
    diff = u_d.values - u_n.values
    diff -= diff.mean()
    assert np.abs(diff).max() < 1e-8


def test_conormal_affine(identity_field):
    dm = mesh.DomainMesh(16)
    op = mesh.assemble(identity_field, dm, mode="dirichlet")
    u = mesh.Field(dm, dm.nodes[:, 0])
    t = mesh.conormal(u, op)
    n = dm.n
    mask = dm.noncorner_mask
    expected = np.nan_to_num(dm.normals[:, 0])
    assert np.abs(t[mask, 0] - expected[mask]).max() < 1e-12


def test_conormal_anisotropic():
    A = np.diag([np.sqrt(3.0), 2.0])
    dm = mesh.DomainMesh(16)
    op = mesh.assemble(A, dm, mode="dirichlet", m=1)
    u = mesh.Field(dm, dm.nodes[:, 1])
    t = mesh.conormal(u, op)
    mask = dm.noncorner_mask
    expected = 2.0 * np.nan_to_num(dm.normals[:, 1])
    assert np.abs(t[mask, 0] - expected[mask]).max() < 1e-12


def test_conormal_divergence_theorem(layered_field):
    # total variational flux of a unit point source equals -1
    dm = mesh.DomainMesh(32)
    sc = coeff.rescale(layered_field, 1 / 4)
    op = mesh.assemble(sc, dm, mode="dirichlet")
    node = int(np.argmin(np.sum((dm.nodes - (0.5, 0.5)) ** 2, axis=1)))
    load = mesh.point_load(dm, node)
    G = mesh.solve_dirichlet(op, load, bdata=0.0)
    t = mesh.conormal(G, op, source=load)
    total = (t[:, 0] * dm.arc_weights).sum()
    assert total == pytest.approx(-1.0, abs=1e-6)


def test_divergence_theorem_for_volume_source(layered_field):
    dm = mesh.DomainMesh(32)
    sc = coeff.rescale(layered_field, 1 / 4)
    op = mesh.assemble(sc, dm, mode="dirichlet")
    fvals = np.cos(np.pi * dm.nodes[:, 0])[:, None] + 2.0
    load = mesh.volume_load(dm, fvals)
    u = mesh.solve_dirichlet(op, load, bdata=0.0)
    t = mesh.conormal(u, op, source=load)
    total = (t[:, 0] * dm.arc_weights).sum()
    assert total == pytest.approx(-load.sum(), rel=1e-8)


def test_norm_constant_and_gradient(identity_field):
    dm = mesh.DomainMesh(16)
    ones = mesh.Field(dm, np.ones(dm.nnodes))
    assert mesh.norm(ones, "Lp", 2) == pytest.approx(1.0, abs=1e-13)
    x1 = mesh.Field(dm, dm.nodes[:, 0])
    grad_sq = mesh.norm(x1, "W1p", 2) ** 2 - mesh.norm(x1, "Lp", 2) ** 2
    assert grad_sq == pytest.approx(1.0, abs=1e-12)


def test_weighted_grad_exact_integral():
    # integral of dist(x, boundary) over the square is 1/6
    dm = mesh.DomainMesh(64)
    x1 = mesh.Field(dm, dm.nodes[:, 0])
    assert mesh.norm(x1, "weighted_grad") == pytest.approx(np.sqrt(1.0 / 6.0), abs=1e-3)


def test_norm_rejects_nan():
    dm = mesh.DomainMesh(4)
    f = mesh.Field(dm, np.zeros(dm.nnodes))
    f.values[0, 0] = np.nan
    with pytest.raises(ValueError):
        mesh.norm(f, "Lp", 2)


def test_tangential_derivative_constant():
    dm = mesh.DomainMesh(16)
    fb = np.ones(dm.n_boundary)
    dt = mesh.tangential_derivative(dm, fb, 1, 2)
    assert np.abs(dt).max() == 0.0


def test_tangential_derivative_left_edge():
    # f = x2 on the left edge (normal (-1, 0)): df/dt_12 = n1 d2 f = -1
    dm = mesh.DomainMesh(16)
    fb = dm.nodes[dm.boundary_nodes, 1]
    dt = mesh.tangential_derivative(dm, fb, 1, 2)
    left = np.arange(3 * dm.n + 1, 4 * dm.n)
    assert np.abs(dt[left, 0] + 1.0).max() < 1e-12
    assert np.abs(mesh.tangential_derivative(dm, fb, 1, 1)).max() == 0.0
    assert np.array_equal(mesh.tangential_derivative(dm, fb, 2, 1), -dt)


def test_tangential_derivative_sine_second_order():
    errs = []
    for n in (16, 32):
        dm = mesh.DomainMesh(n)
        fb = np.sin(2 * np.pi * dm.boundary_s)
        dt = mesh.tangential_derivative(dm, fb, 1, 2)
        exact = 2 * np.pi * np.cos(2 * np.pi * dm.boundary_s)
        mask = dm.noncorner_mask
        errs.append(np.abs(dt[mask, 0] - exact[mask]).max())
    assert errs[1] / errs[0] < 0.3


def test_nodal_gradient_interior_and_boundary():
    dm = mesh.DomainMesh(32)
    vals = dm.nodes[:, 0] + np.sin(np.pi * dm.nodes[:, 0]) * np.sin(np.pi * dm.nodes[:, 1])
    g = mesh.nodal_gradient(dm, vals)
    gx = 1.0 + np.pi * np.cos(np.pi * dm.nodes[:, 0]) * np.sin(np.pi * dm.nodes[:, 1])
    gy = np.pi * np.sin(np.pi * dm.nodes[:, 0]) * np.cos(np.pi * dm.nodes[:, 1])
    err32 = max(np.abs(g[:, 0, 0] - gx).max(), np.abs(g[:, 1, 0] - gy).max())
    dm2 = mesh.DomainMesh(64)
    vals2 = dm2.nodes[:, 0] + np.sin(np.pi * dm2.nodes[:, 0]) * np.sin(np.pi * dm2.nodes[:, 1])
    g2 = mesh.nodal_gradient(dm2, vals2)
    gx2 = 1.0 + np.pi * np.cos(np.pi * dm2.nodes[:, 0]) * np.sin(np.pi * dm2.nodes[:, 1])
    err64 = np.abs(g2[:, 0, 0] - gx2).max()
    assert err64 / err32 < 0.6  # at least first order; recovery is second order inside


def test_nodal_gradient_exact_on_affine():
    dm = mesh.DomainMesh(8)
    vals = 2.0 * dm.nodes[:, 0] - 3.0 * dm.nodes[:, 1] + 1.0
    g = mesh.nodal_gradient(dm, vals)
    assert np.abs(g[:, 0, 0] - 2.0).max() < 1e-12
    assert np.abs(g[:, 1, 0] + 3.0).max() < 1e-12


def test_interp_torus_wraps():
    grid = mesh.TorusGrid(16)
    table = np.sin(2 * np.pi * grid.nodes[:, 0])
    pts = np.array([[0.25, 0.5], [1.25, 0.5], [-0.75, 7.5]])
    vals = mesh.interp_torus(grid, table, pts)
    assert vals[0] == pytest.approx(vals[1], abs=1e-12)
    assert vals[0] == pytest.approx(vals[2], abs=1e-12)


def test_cg_solver_agrees_with_direct(layered_field):
    dm = mesh.DomainMesh(16)
    sc = coeff.rescale(layered_field, 0.5)
    op = mesh.assemble(sc, dm, mode="dirichlet")
    f = np.ones((dm.nnodes, 1))
    u_direct = mesh.solve_dirichlet(op, f, bdata=0.0)
    op2 = mesh.assemble(sc, dm, mode="dirichlet")
    u_cg = mesh.solve_dirichlet(op2, f, bdata=0.0,
                                options=mesh.SolverOptions(kind="cg", tol=1e-12))
    assert np.abs(u_direct.values - u_cg.values).max() < 1e-8


def test_field_csv_roundtrip(tmp_path):
    dm = mesh.DomainMesh(4)
    f = mesh.Field(dm, dm.nodes[:, 0] * 2.0)
    path = tmp_path / "field.csv"
    f.to_csv(path)
    lines = path.read_text().strip().split("\n")
    assert lines[0] == "node_x,node_y,component,value"
    assert len(lines) == 1 + dm.nnodes
