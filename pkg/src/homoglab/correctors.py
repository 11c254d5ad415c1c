"""Dirichlet correctors Phi, adjoint correctors Phi*, and Neumann
correctors Psi on the unit square.

Each corrector matrix is stored as an array (d, m, nnodes, m) indexed
[j, beta, node, alpha]: column (j, beta) is the solution that agrees with
the linear data x_j e_beta on the boundary (Dirichlet) or matches its
homogenized conormal flux (Neumann, pinned at an interior node x0).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import (DomainMesh, Field, assemble, solve_dirichlet, solve_neumann,
                   boundary_flux_load, nodal_gradient, interp_torus,
                   DEFAULT_SOLVER)

__all__ = ["CorrectorError", "CorrectorSet", "dirichlet_correctors",
           "neumann_correctors", "build", "corrector_report"]


class CorrectorError(RuntimeError):
    pass


@dataclass
class CorrectorSet:
    """Boundary correctors for one (coefficient, epsilon, mesh) triple."""

    mesh: DomainMesh
    epsilon: float
    phi: np.ndarray            # (d, m, nnodes, m)
    phi_star: np.ndarray
    psi: np.ndarray | None
    x0: int | None             # pin node index for Psi

    @property
    def d(self):
        return self.phi.shape[0]

    @property
    def m(self):
        return self.phi.shape[1]

    def column(self, which, j, beta=0) -> Field:
        return Field(self.mesh, getattr(self, which)[j, beta])

    def monomials(self):
        """P_j^beta nodal tables with the same layout as the correctors."""
        d, m = self.d, self.m
        P = np.zeros((d, m, self.mesh.nnodes, m))
        for j in range(d):
            for beta in range(m):
                P[j, beta, :, beta] = self.mesh.nodes[:, j]
        return P


def _monomial_boundary(mesh, j, beta, m):
    vals = np.zeros((mesh.n_boundary, m))
    vals[:, beta] = mesh.nodes[mesh.boundary_nodes, j]
    return vals


def dirichlet_correctors(coeff, mesh, options=DEFAULT_SOLVER, op=None, op_star=None,
                         with_adjoint=True):
    """Solve the d*m Dirichlet corrector columns (and the adjoint family).

    For symmetric coefficients the adjoint family coincides with phi and is
    not re-solved.
    """
    d, m = 2, coeff.m
    release = op is None
    if op is None:
        op = assemble(coeff, mesh, mode="dirichlet")
    phi = np.zeros((d, m, mesh.nnodes, m))
    for j in range(d):
        for beta in range(m):
            sol = solve_dirichlet(op, None, bdata=_monomial_boundary(mesh, j, beta, m),
                                  options=options)
            phi[j, beta] = sol.values
    if not with_adjoint:
        if release:
            op.release()
        return phi, None
    if getattr(coeff, "symmetric", False):
        phi_star = phi.copy()
    else:
        release_star = op_star is None
        if op_star is None:
            op_star = assemble(coeff.adjoint(), mesh, mode="dirichlet")
        phi_star = np.zeros((d, m, mesh.nnodes, m))
        for j in range(d):
            for beta in range(m):
                sol = solve_dirichlet(op_star, None,
                                      bdata=_monomial_boundary(mesh, j, beta, m),
                                      options=options)
                phi_star[j, beta] = sol.values
        if release_star:
            op_star.release()
    if release:
        op.release()
    return phi, phi_star


def neumann_correctors(coeff, hatA, mesh, x0=None, options=DEFAULT_SOLVER, op=None):
    """Solve the Neumann corrector columns and pin them at x0.

    Each column solves the zero-source Neumann problem whose boundary flux
    is the homogenized conormal n_i hatA_ij^{.beta} of the linear data;
    after the mean-pinned solve the column is shifted so that
    psi(x0) = x0_j e_beta exactly.  Requires a symmetric coefficient.
    """
    if not getattr(coeff, "symmetric", False):
        raise CorrectorError("Neumann correctors require a symmetric coefficient (A* = A)")
    d, m = 2, coeff.m
    if x0 is None:
        x0 = int(np.argmin(np.sum((mesh.nodes - 0.5) ** 2, axis=1)))
    if mesh.boundary_mask[x0]:
        raise CorrectorError("pin node x0 must be interior")
    release = op is None
    if op is None:
        op = assemble(coeff, mesh, mode="neumann")
    hatA = np.asarray(hatA, dtype=float).reshape(2, 2, m, m)
    psi = np.zeros((d, m, mesh.nnodes, m))
    for j in range(d):
        for beta in range(m):
            flux_col = hatA[:, j, :, beta]                       # (i, alpha)

            def g(pts, normal, col=flux_col):
                vals = np.einsum("i,ia->a", normal, col)
                return np.broadcast_to(vals, (pts.shape[0], m))

            fvec = boundary_flux_load(mesh, g, m=m)
            total = np.abs([fvec[a::m].sum() for a in range(m)]).max()
            scale = np.abs(fvec).sum() + 1e-30
            if total > 1e-6 * scale:
                raise CorrectorError(
                    f"conormal flux of linear data is not compatible: imbalance {total:.3e}")
            sol = solve_neumann(op, None, flux=fvec, options=options, check_compat=False)
            vals = sol.values.copy()
            pin_target = np.zeros(m)
            pin_target[beta] = mesh.nodes[x0, j]
            vals += (pin_target - vals[x0])[None, :]
            psi[j, beta] = vals
    if release:
        op.release()
    return psi, x0


def build(coeff, mesh, hatA=None, options=DEFAULT_SOLVER, x0=None,
          with_neumann=True, ops=None) -> CorrectorSet:
    """Assemble the full corrector set for a scaled coefficient."""
    ops = ops or {}
    phi, phi_star = dirichlet_correctors(coeff, mesh, options=options,
                                         op=ops.get("dirichlet"),
                                         op_star=ops.get("dirichlet_star"))
    psi = None
    if with_neumann:
        if hatA is None:
            raise CorrectorError("Neumann correctors need the homogenized tensor")
        psi, x0 = neumann_correctors(coeff, hatA, mesh, x0=x0, options=options,
                                     op=ops.get("neumann"))
    eps = getattr(coeff, "epsilon", 1.0)
    return CorrectorSet(mesh=mesh, epsilon=eps, phi=phi, phi_star=phi_star,
                        psi=psi, x0=x0)


def trusted_interior_mask(mesh, dist=0.1, corner_margin=None):
    """Interior sample mask: away from the boundary and the corner fans."""
    if corner_margin is None:
        corner_margin = 4 * mesh.h
    pts = mesh.nodes
    d = mesh.dist_to_boundary(pts)
    corners = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    cd = np.min(np.linalg.norm(pts[:, None, :] - corners[None], axis=2), axis=1)
    return (d >= dist - 1e-12) & (cd >= corner_margin - 1e-12)


def chi_on_domain(cell_solution, mesh, epsilon):
    """eps * chi(x/eps) and (grad chi)(x/eps) sampled at the domain nodes.

    Values come from bilinear interpolation of the torus tables at the
    wrapped point x/eps, avoiding per-node cell re-solves.
    Returns (chi_vals (d, m, nnodes, m), chi_grads (d, m, nnodes, 2, m)).
    """
    d, m = cell_solution.chi.shape[0], cell_solution.chi.shape[1]
    grid = cell_solution.grid
    pts = mesh.nodes / epsilon
    chi_vals = np.empty((d, m, mesh.nnodes, m))
    chi_grads = np.empty((d, m, mesh.nnodes, 2, m))
    for j in range(d):
        for beta in range(m):
            chi_vals[j, beta] = interp_torus(grid, cell_solution.chi[j, beta], pts)
            g = interp_torus(grid, cell_solution.chi_grad[j, beta].reshape(grid.nnodes, -1), pts)
            chi_grads[j, beta] = g.reshape(mesh.nnodes, 2, m)
    return chi_vals, chi_grads


def corrector_report(cset: CorrectorSet, cell_solution, dist=0.1):
    """Sup-norm diagnostics for the corrector families.

    All sups are over interior nodes with dist(x, boundary) >= dist and
    outside the corner margin.  The 'profile' entries measure
    |grad{V - P - eps chi(x/eps)}| against min(1, eps/delta(x)).
    """
    mesh, eps = cset.mesh, cset.epsilon
    mask = trusted_interior_mask(mesh, dist=dist)
    delta = mesh.dist_to_boundary(mesh.nodes)
    chi_vals, chi_grads = chi_on_domain(cell_solution, mesh, eps)
    P = cset.monomials()

    def family_stats(V):
        out = {"grad_sup": 0.0, "dist_sup": 0.0, "layer_grad_sup": 0.0, "profile_sup": 0.0}
        for j in range(cset.d):
            for beta in range(cset.m):
                gV = nodal_gradient(mesh, V[j, beta])
                # grad of eps*chi(x/eps) is (grad chi)(x/eps); differentiate the
                # torus table, not the interpolant, to avoid wrap artifacts
                gdiff = nodal_gradient(mesh, V[j, beta] - P[j, beta]) - chi_grads[j, beta]
                gmag = np.sqrt((gV ** 2).sum(axis=(1, 2)))
                dmag = np.sqrt(((V[j, beta] - P[j, beta]) ** 2).sum(axis=1))
                lmag = np.sqrt((gdiff ** 2).sum(axis=(1, 2)))
                prof = lmag * np.maximum(1.0, delta / eps)
                out["grad_sup"] = max(out["grad_sup"], float(gmag[mask].max()))
                out["dist_sup"] = max(out["dist_sup"], float(dmag[mask].max()))
                out["layer_grad_sup"] = max(out["layer_grad_sup"], float(lmag[mask].max()))
                out["profile_sup"] = max(out["profile_sup"], float(prof[mask].max()))
        return out

    report = {"epsilon": eps, "phi": family_stats(cset.phi)}
    report["phi"]["dist_sup_over_eps"] = report["phi"]["dist_sup"] / eps
    if cset.psi is not None:
        report["psi"] = family_stats(cset.psi)
        logfac = eps * np.log(1.0 / eps + 2.0)
        report["psi"]["dist_sup_over_eps"] = report["psi"]["dist_sup"] / eps
        report["psi"]["dist_sup_over_eps_log"] = report["psi"]["dist_sup"] / logfac
    return report
