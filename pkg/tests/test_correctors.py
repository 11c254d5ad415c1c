import numpy as np
import pytest

from homoglab import cell, coeff, correctors, mesh


@pytest.fixture(scope="module")
def const_setup():
    A = np.array([[np.sqrt(3.0), 0.0], [0.0, 2.0]])
    field = coeff.builtin("constant", value=A)
    cs = cell.solve(field, 16)
    dm = mesh.DomainMesh(16)
    cset = correctors.build(coeff.rescale(field, 1 / 4), dm, hatA=cs.hatA)
    return field, cs, dm, cset


def test_constant_dirichlet_correctors_are_monomials(const_setup):
    _, _, _, cset = const_setup
    assert np.abs(cset.phi - cset.monomials()).max() < 1e-12


def test_constant_neumann_correctors_are_monomials(const_setup):
    _, _, _, cset = const_setup
    assert np.abs(cset.psi - cset.monomials()).max() < 1e-12


def test_boundary_exactness_and_pin(layered_field, layered_cell64):
    dm = mesh.DomainMesh(32)
    cset = correctors.build(coeff.rescale(layered_field, 1 / 4), dm,
                            hatA=layered_cell64.hatA)
    P = cset.monomials()
    bnodes = dm.boundary_nodes
    assert np.abs((cset.phi - P)[:, :, bnodes, :]).max() == 0.0
    for j in range(2):
        for beta in range(1):
            assert cset.psi[j, beta, cset.x0, beta] == P[j, beta, cset.x0, beta]


def test_phi_star_equals_phi_for_symmetric(layered_field, layered_cell64):
    dm = mesh.DomainMesh(16)
    cset = correctors.build(coeff.rescale(layered_field, 1 / 2), dm,
                            hatA=layered_cell64.hatA, with_neumann=False)
    assert np.abs(cset.phi_star - cset.phi).max() <= 1e-10


def test_neumann_rejects_nonsymmetric(layered_cell64):
    A = np.array([[2.0, 0.5], [0.0, 1.0]])
    field = coeff.builtin("constant", value=A)
    dm = mesh.DomainMesh(8)
    with pytest.raises(correctors.CorrectorError):
        correctors.neumann_correctors(coeff.rescale(field, 1 / 2),
                                      layered_cell64.hatA, dm)


def test_phi_sup_halves_with_eps(layered_field, layered_cell128):
    sups = []
    for eps in (1 / 8, 1 / 16, 1 / 32):
        dm = mesh.DomainMesh(int(16 / eps))
        cset = correctors.build(coeff.rescale(layered_field, eps), dm,
                                hatA=layered_cell128.hatA, with_neumann=False)
        sups.append(np.abs(cset.phi - cset.monomials()).max())
    for a, b in zip(sups, sups[1:]):
        assert 0.35 <= b / a <= 0.65  # ratio 0.5 +- 0.15


def test_psi_log_bound_stable(layered_field, layered_cell128):
    ratios = []
    for eps in (1 / 8, 1 / 16, 1 / 32):
        dm = mesh.DomainMesh(int(16 / eps))
        cset = correctors.build(coeff.rescale(layered_field, eps), dm,
                                hatA=layered_cell128.hatA)
        sup = np.abs(cset.psi - cset.monomials()).max()
        ratios.append(sup / (eps * np.log(1 / eps + 2)))
    assert max(ratios) / min(ratios) <= 3.0


def test_corrector_report_constant_zero(const_setup):
    _, cs, _, cset = const_setup
    rep = correctors.corrector_report(cset, cs)
    assert rep["phi"]["dist_sup"] < 1e-12
    assert rep["phi"]["layer_grad_sup"] < 1e-12
    assert rep["psi"]["dist_sup"] < 1e-12
    assert rep["phi"]["grad_sup"] == pytest.approx(1.0, abs=1e-10)


def test_corrector_report_layered_bounds(layered_field, layered_cell128):
    reports = []
    for eps in (1 / 8, 1 / 16):
        dm = mesh.DomainMesh(int(16 / eps))
        cset = correctors.build(coeff.rescale(layered_field, eps), dm,
                                hatA=layered_cell128.hatA)
        reports.append(correctors.corrector_report(cset, layered_cell128))
    g0, g1 = (rep["phi"]["grad_sup"] for rep in reports)
    assert abs(g1 - g0) / g0 <= 0.2   # gradient sup stable under eps-halving
    for rep in reports:
        assert rep["phi"]["profile_sup"] <= 10.0
        assert rep["psi"]["profile_sup"] <= 10.0


def test_gradient_recovery_order_on_manufactured_field():
    errs = []
    for n in (32, 64):
        dm = mesh.DomainMesh(n)
        vals = 0.7 * dm.nodes[:, 0] + np.sin(np.pi * dm.nodes[:, 0]) * dm.nodes[:, 1]
        g = mesh.nodal_gradient(dm, vals)
        gx = 0.7 + np.pi * np.cos(np.pi * dm.nodes[:, 0]) * dm.nodes[:, 1]
        gy = np.sin(np.pi * dm.nodes[:, 0])
        errs.append(max(np.abs(g[:, 0, 0] - gx).max(), np.abs(g[:, 1, 0] - gy).max()))
    assert errs[1] / errs[0] <= 0.6   # at least first order


def test_default_pin_is_center(layered_field, layered_cell64):
    dm = mesh.DomainMesh(16)
    psi, x0 = correctors.neumann_correctors(coeff.rescale(layered_field, 1 / 2),
                                            layered_cell64.hatA, dm)
    assert np.allclose(dm.nodes[x0], (0.5, 0.5))


def test_pin_must_be_interior(layered_field, layered_cell64):
    dm = mesh.DomainMesh(16)
    with pytest.raises(correctors.CorrectorError):
        correctors.neumann_correctors(coeff.rescale(layered_field, 1 / 2),
                                      layered_cell64.hatA, dm,
                                      x0=int(dm.boundary_nodes[0]))
