"""Periodic cell problem, homogenized tensor, discrepancy tensor and the
antisymmetric flux corrector.

All objects live on a TorusGrid.  Index layout:

    chi[j, beta]        -> (nnodes, m) nodal corrector column (comp alpha)
    hatA[i, j, a, b]    -> homogenized tensor
    b[i, j, a, b]       -> discrepancy tensor (nodal table + Gauss values)
    f[i, j, a, b]       -> mean-zero potentials with Laplace(f) = b
    F[k, i, j, a, b]    -> flux corrector, exactly antisymmetric in (k, i)

Integral quantities (hatA, the mean of b, weak divergences) are evaluated
with the same 2x2 Gauss rule used by the assembly, so the identities they
satisfy hold to solver accuracy; the nodal tables use volume-averaged
gradient recovery and carry the usual O(h^2) pointwise error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import mesh as fem
from .mesh import (TorusGrid, Field, assemble, solve_periodic, nodal_gradient,
                   element_gauss_gradients, volume_load_from_gauss,
                   divergence_load_from_gauss, DEFAULT_SOLVER,
                   GAUSS_WEIGHTS)

__all__ = ["CellError", "CellSolution", "solve_cell", "homogenize",
           "discrepancy", "flux_corrector", "solve", "flux_divergence_residual"]


class CellError(RuntimeError):
    pass


@dataclass
class CellSolution:
    """Correctors, homogenized tensor and flux corrector on the torus grid."""

    grid: TorusGrid
    coeff: object
    chi: np.ndarray          # (d, m, nnodes, m)
    hatA: np.ndarray         # (d, d, m, m)
    b_nodal: np.ndarray      # (d, d, m, m, nnodes)
    b_gauss: np.ndarray      # (d, d, m, m, nelem, 4)
    b_mean: np.ndarray       # (d, d, m, m)
    f: np.ndarray            # (d, d, m, m, nnodes)
    F: np.ndarray            # (d, d, d, m, m, nnodes), F[k,i,j] = -F[i,k,j]
    chi_grad: np.ndarray     # (d, m, nnodes, 2, m) recovered nodal gradients

    @property
    def d(self):
        return self.chi.shape[0]

    @property
    def m(self):
        return self.chi.shape[1]

    def chi_column(self, j, beta=0) -> Field:
        return Field(self.grid, self.chi[j, beta])

    def hatA_matrix(self):
        """hatA as a (d*m, d*m) matrix for Rayleigh/eigen diagnostics."""
        d, m = self.hatA.shape[0], self.hatA.shape[2]
        return self.hatA.transpose(0, 2, 1, 3).reshape(d * m, d * m)

    def chi_means(self):
        h2 = self.grid.h ** 2
        return h2 * self.chi.sum(axis=2)

    def stats(self):
        return {
            "hatA": self.hatA.tolist(),
            "chi_mean_max": float(np.abs(self.chi_means()).max()),
            "chi_max": float(np.abs(self.chi).max()),
            "b_mean_max": float(np.abs(self.b_mean).max()),
            "b_max": float(np.abs(self.b_nodal).max()),
            "F_max": float(np.abs(self.F).max()),
            "F_antisymmetry": float(np.abs(self.F + self.F.transpose(1, 0, 2, 3, 4, 5)).max()),
        }


def _coeff_gauss(coeff, grid, m):
    pts = grid.gauss_points().reshape(-1, 2)
    return np.asarray(coeff(pts), dtype=float).reshape(grid.nelem, 4, 2, 2, m, m)


def solve_cell(coeff, n, options=DEFAULT_SOLVER, op=None, A_gauss=None):
    """Solve the d*m periodic cell problems on an n-grid torus.

    Each column chi[j, beta] is the mean-zero periodic weak solution with
    right-hand side -div-form data a_ij^{ab} (the response to linear data
    x_j e_beta).  Returns (grid, chi, A_gauss) for reuse downstream.
    """
    if n < 8:
        raise CellError(f"cell grid needs n >= 8, got {n}")
    grid = TorusGrid(n)
    d, m = 2, coeff.m
    if op is None:
        op = assemble(coeff, grid)
    if A_gauss is None:
        A_gauss = _coeff_gauss(coeff, grid, m)
    chi = np.zeros((d, m, grid.nnodes, m))
    for j in range(d):
        for beta in range(m):
            fg = A_gauss[:, :, :, j, :, beta]          # (nelem, 4, i, alpha)
            load = -divergence_load_from_gauss(grid, fg)
            sol = solve_periodic(op, load, options=options)
            chi[j, beta] = sol.values
    return grid, chi, A_gauss


def homogenize(coeff, grid, chi, A_gauss=None):
    """hatA_ij^{ab} = integral_Y [a_ij^{ab} + a_ik^{ag} d_k chi_j^{gb}] dy.

    Gradients of chi are taken at the quadrature points inside elements.
    """
    m = chi.shape[1]
    if A_gauss is None:
        A_gauss = _coeff_gauss(coeff, grid, m)
    h2w = grid.h ** 2 * GAUSS_WEIGHTS
    hatA = np.einsum("g,egijab->ijab", h2w, A_gauss)
    for j in range(2):
        for beta in range(m):
            gchi = element_gauss_gradients(grid, chi[j, beta])   # (nelem, 4, k, gamma)
            hatA[:, j, :, beta] += np.einsum("g,egikac,egkc->ia", h2w, A_gauss, gchi)
    return hatA


def discrepancy(coeff, grid, chi, hatA, A_gauss=None):
    """b_ij^{ab}(y) = hatA_ij^{ab} - a_ij^{ab}(y) - a_ik^{ag}(y) d_k chi_j^{gb}(y).

    Returns (b_nodal, b_gauss, b_mean, chi_grad, weak_div_residual).  The
    nodal table uses gradient recovery; means and weak divergences are
    evaluated from the Gauss values, where they vanish by construction.
    """
    d, m = chi.shape[0], chi.shape[1]
    if A_gauss is None:
        A_gauss = _coeff_gauss(coeff, grid, m)
    A_nodes = np.asarray(coeff(grid.nodes), dtype=float)         # (nnodes, 2, 2, m, m)

    b_gauss = np.empty((d, d, m, m, grid.nelem, 4))
    b_nodal = np.empty((d, d, m, m, grid.nnodes))
    chi_grad = np.empty((d, m, grid.nnodes, 2, m))
    for j in range(d):
        for beta in range(m):
            gchi_g = element_gauss_gradients(grid, chi[j, beta])     # (nelem, 4, k, gamma)
            gchi_n = nodal_gradient(grid, chi[j, beta])              # (nnodes, k, gamma)
            chi_grad[j, beta] = gchi_n
            flux_g = np.einsum("egikac,egkc->iaeg", A_gauss, gchi_g)
            flux_n = np.einsum("nikac,nkc->ian", A_nodes, gchi_n)
            for i in range(d):
                for alpha in range(m):
                    b_gauss[i, j, alpha, beta] = (hatA[i, j, alpha, beta]
                                                  - A_gauss[:, :, i, j, alpha, beta]
                                                  - flux_g[i, alpha])
                    b_nodal[i, j, alpha, beta] = (hatA[i, j, alpha, beta]
                                                  - A_nodes[:, i, j, alpha, beta]
                                                  - flux_n[i, alpha])
    h2w = grid.h ** 2 * GAUSS_WEIGHTS
    b_mean = np.einsum("g,ijabeg->ijab", h2w, b_gauss)

    # weak divergence d_i(b_ij) tested against periodic hats, per column (j, beta)
    res = 0.0
    for j in range(d):
        for beta in range(m):
            fg = b_gauss[:, j, :, beta].transpose(2, 3, 0, 1)        # (nelem, 4, i, alpha)
            r = divergence_load_from_gauss(grid, fg)
            res = max(res, float(np.linalg.norm(r) / grid.h))
    return b_nodal, b_gauss, b_mean, chi_grad, res


def flux_corrector(grid, b_gauss, b_mean=None, options=DEFAULT_SOLVER):
    """Solve Laplace(f_ij^{ab}) = b_ij^{ab} on the torus and build
    F_kij^{ab} = d_k f_ij^{ab} - d_i f_kj^{ab}, stored antisymmetrized.

    Rejects data whose quadrature mean exceeds 1e-6 per entry.
    """
    d = b_gauss.shape[0]
    m = b_gauss.shape[2]
    if b_mean is None:
        h2w = grid.h ** 2 * GAUSS_WEIGHTS
        b_mean = np.einsum("g,ijabeg->ijab", h2w, b_gauss)
    if np.abs(b_mean).max() > 1e-6:
        raise CellError(f"flux corrector needs mean-zero data, got max mean {np.abs(b_mean).max():.3e}")
    op = assemble(np.eye(2), grid, m=1)
    f = np.zeros((d, d, m, m, grid.nnodes))
    grad_f = np.zeros((d, d, m, m, grid.nnodes, 2))
    for i in range(d):
        for j in range(d):
            for a in range(m):
                for b in range(m):
                    load = -volume_load_from_gauss(grid, b_gauss[i, j, a, b][:, :, None])
                    sol = solve_periodic(op, load, options=options)
                    f[i, j, a, b] = sol.values[:, 0]
                    grad_f[i, j, a, b] = nodal_gradient(grid, sol.values)[:, :, 0]
    op.release()
    F = np.empty((d, d, d, m, m, grid.nnodes))
    for k in range(d):
        for i in range(d):
            for j in range(d):
                F[k, i, j] = grad_f[i, j, :, :, :, k] - grad_f[k, j, :, :, :, i]
    F = 0.5 * (F - F.transpose(1, 0, 2, 3, 4, 5))
    return f, F


def flux_divergence_residual(grid, F, b_gauss):
    """Dual-norm residual of the discrete identity d_k F_kij = b_ij."""
    d = F.shape[0]
    m = F.shape[3]
    worst = 0.0
    for j in range(d):
        for beta in range(m):
            for i in range(d):
                for alpha in range(m):
                    table = F[:, i, j, alpha, beta].T                 # (nnodes, k)
                    fg = fem.element_gauss_values(grid, table)        # (nelem, 4, k)
                    r = -divergence_load_from_gauss(grid, fg[:, :, :, None])
                    r -= volume_load_from_gauss(grid, b_gauss[i, j, alpha, beta][:, :, None])
                    worst = max(worst, float(np.linalg.norm(r) / grid.h))
    return worst


def solve(coeff, n, options=DEFAULT_SOLVER) -> CellSolution:
    """Full cell pipeline: correctors, hatA, discrepancy, flux corrector."""
    op = assemble(coeff, TorusGrid(n))
    grid = op.mesh
    A_gauss = _coeff_gauss(coeff, grid, coeff.m)
    grid, chi, A_gauss = solve_cell(coeff, n, options=options, op=op, A_gauss=A_gauss)
    hatA = homogenize(coeff, grid, chi, A_gauss=A_gauss)
    b_nodal, b_gauss, b_mean, chi_grad, _ = discrepancy(coeff, grid, chi, hatA, A_gauss=A_gauss)
    op.release()
    f, F = flux_corrector(grid, b_gauss, b_mean=b_mean, options=options)
    return CellSolution(grid=grid, coeff=coeff, chi=chi, hatA=hatA,
                        b_nodal=b_nodal, b_gauss=b_gauss, b_mean=b_mean,
                        f=f, F=F, chi_grad=chi_grad)
