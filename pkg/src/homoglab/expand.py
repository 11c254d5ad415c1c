"""Two-scale expansions and the identities they satisfy.

The central object is

    w(x) = u_eps(x) - u0(x) - {V_j^b(x) - P_j^b(x)} d u0^b/dx_j

where the corrector family V is one of: P + eps*chi(x/eps) ('chi'), the
Dirichlet correctors ('dirichlet') or the Neumann correctors ('neumann').
The module assembles both sides of the interior residual identity for w,
the conormal identity on the boundary, and the kernel-driven approximation
experiments (Poisson-weight data, divergence-form data, and the oscillatory
singular-integral combination S_eps).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import (DomainMesh, Field, assemble, solve_dirichlet,
                   nodal_gradient, interp_torus, element_gauss_values,
                   element_gauss_gradients, volume_load_from_gauss,
                   divergence_load_from_gauss, divergence_load, norm,
                   DEFAULT_SOLVER)
from .correctors import CorrectorSet, chi_on_domain

__all__ = ["ExpansionError", "Expansion", "build_expansion",
           "residual_identity_check", "conormal_identity_check",
           "poisson_approx", "divergence_data_approx", "s_epsilon",
           "second_derivatives"]

FAMILIES = ("chi", "dirichlet", "neumann")


class ExpansionError(ValueError):
    pass


def second_derivatives(mesh, values):
    """Nodal second derivatives by double gradient recovery, symmetrized.

    values (nnodes, m) -> (nnodes, 2, 2, m) indexed [node, i, j, comp].
    """
    g = nodal_gradient(mesh, values)                      # (nnodes, 2, m)
    m = g.shape[2]
    D2 = np.empty((mesh.nnodes, 2, 2, m))
    for j in range(2):
        D2[:, :, j, :] = nodal_gradient(mesh, g[:, j, :])
    return 0.5 * (D2 + D2.transpose(0, 2, 1, 3))


@dataclass
class Expansion:
    """u_eps, u0 and the corrector-family expansion remainder w."""

    mesh: DomainMesh
    epsilon: float
    family: str
    u_eps: Field
    u0: Field
    V: np.ndarray              # (d, m, nnodes, m) corrector family
    du0: np.ndarray            # (nnodes, 2, m) recovered gradient of u0
    w: Field

    @property
    def m(self):
        return self.u_eps.m

    def rebuild_w(self):
        """Recompute w from the stored parts (bitwise reproducible)."""
        return _expansion_remainder(self.mesh, self.u_eps, self.u0, self.V, self.du0)

    def grad_comparison(self):
        """d_i u_eps^a - d_i V_j^{ab} d_j u0^b at the nodes: (nnodes, 2, m)."""
        out = nodal_gradient(self.mesh, self.u_eps.values).copy()
        for j in range(2):
            for beta in range(self.m):
                gV = nodal_gradient(self.mesh, self.V[j, beta])    # (nnodes, i, alpha)
                out -= gV * self.du0[:, j, beta][:, None, None]
        return out


def _monomial_table(mesh, d, m):
    P = np.zeros((d, m, mesh.nnodes, m))
    for j in range(d):
        for beta in range(m):
            P[j, beta, :, beta] = mesh.nodes[:, j]
    return P


def _expansion_remainder(mesh, u_eps, u0, V, du0):
    d, m = V.shape[0], V.shape[1]
    P = _monomial_table(mesh, d, m)
    w = u_eps.values - u0.values
    for j in range(d):
        for beta in range(m):
            w = w - (V[j, beta] - P[j, beta]) * du0[:, j, beta][:, None]
    return Field(mesh, w)


def build_expansion(u_eps: Field, u0: Field, family, correctors: CorrectorSet = None,
                    cell_solution=None, epsilon=None) -> Expansion:
    """Assemble the expansion remainder w for the requested corrector family."""
    if family not in FAMILIES:
        raise ExpansionError(f"family must be one of {FAMILIES}, got {family!r}")
    if u_eps.mesh is not u0.mesh:
        raise ExpansionError("u_eps and u0 must share a mesh")
    mesh = u_eps.mesh
    d, m = 2, u_eps.m
    if family == "chi":
        if cell_solution is None or epsilon is None:
            raise ExpansionError("chi family needs a cell solution and epsilon")
        chi_vals, _ = chi_on_domain(cell_solution, mesh, epsilon)
        V = _monomial_table(mesh, d, m) + epsilon * chi_vals
    else:
        if correctors is None:
            raise ExpansionError(f"{family} family needs a corrector set")
        V = correctors.phi if family == "dirichlet" else correctors.psi
        if V is None:
            raise ExpansionError("corrector set has no Neumann columns")
        epsilon = correctors.epsilon
    du0 = nodal_gradient(mesh, u0.values)
    w = _expansion_remainder(mesh, u_eps, u0, V, du0)
    return Expansion(mesh=mesh, epsilon=epsilon, family=family,
                     u_eps=u_eps, u0=u0, V=V, du0=du0, w=w)


# ---------------------------------------------------------------------------
# interior residual identity


def residual_identity_check(exp: Expansion, coeff, cell_solution, op=None,
                            terms=("flux", "low_order", "gradient")):
    """Weak mismatch between L_eps(w) and its divergence-form representation.

    Assembles a_eps(w, phi) and the three right-hand-side terms (the
    eps-scaled flux-corrector divergence, the low-order corrector
    divergence, and the pointwise gradient term) against interior test
    functions, and returns their dual-norm mismatch.  For the chi family
    the gradient term vanishes identically and the first two terms merge
    into a single bounded-kernel divergence.
    """
    if exp.family not in ("chi", "dirichlet"):
        raise ExpansionError("residual identity applies to the chi and dirichlet families")
    mesh, m, eps = exp.mesh, exp.m, exp.epsilon
    grid = cell_solution.grid
    release = op is None
    if op is None:
        op = assemble(coeff, mesh, mode="dirichlet", m=m)

    gauss_pts = mesh.gauss_points().reshape(-1, 2)
    A_g = np.asarray(coeff(gauss_pts)).reshape(mesh.nelem, 4, 2, 2, m, m)
    D2 = second_derivatives(mesh, exp.u0.values)
    D2_g = element_gauss_values(mesh, D2.reshape(mesh.nnodes, -1)).reshape(mesh.nelem, 4, 2, 2, m)

    P = _monomial_table(mesh, 2, m)
    VmP = exp.V - P                                       # (k, gamma_col, nnodes, beta)

    rhs = np.zeros(op.ndof)
    term_loads = {}

    if "flux" in terms:
        # eps d_i { F_jik^{ac}(x/eps) d2 u0^c / dx_j dx_k }
        Ft = cell_solution.F.transpose(5, 0, 1, 2, 3, 4).reshape(grid.nnodes, -1)
        F_g = interp_torus(grid, Ft, gauss_pts / eps).reshape(mesh.nelem, 4, 2, 2, 2, m, m)
        f1 = eps * np.einsum("eqjikac,eqjkc->eqia", F_g, D2_g)
        load = -divergence_load_from_gauss(mesh, f1)
        term_loads["flux"] = load
        rhs += load

    if "low_order" in terms:
        # d_i { a_ij^{ab}(x/eps) [V_k - P_k]^{bc} d2 u0^c / dx_j dx_k }
        VmP_g = element_gauss_values(mesh, VmP.transpose(2, 0, 1, 3).reshape(mesh.nnodes, -1))
        VmP_g = VmP_g.reshape(mesh.nelem, 4, 2, m, m)      # (e, q, k, gamma_col, beta)
        f2 = np.einsum("eqijab,eqkcb,eqjkc->eqia", A_g, VmP_g, D2_g)
        load = -divergence_load_from_gauss(mesh, f2)
        term_loads["low_order"] = load
        rhs += load

    if "gradient" in terms:
        # a_ij^{ab}(x/eps) d_j [V_k - P_k - eps chi_k(x/eps)]^{bc} d2 u0^c / dx_i dx_k
        # eps*chi(x/eps) enters through the same nodal-table representation
        # as V - P, so for the chi family this term vanishes identically
        chi_vals, _ = chi_on_domain(cell_solution, mesh, eps)
        g3 = np.empty((mesh.nelem, 4, 2, m, 2, m))
        for k in range(2):
            for gam in range(m):
                g3[:, :, k, gam] = element_gauss_gradients(
                    mesh, VmP[k, gam] - eps * chi_vals[k, gam])
        vals = np.einsum("eqijab,eqkcjb,eqikc->eqa", A_g, g3, D2_g)
        load = volume_load_from_gauss(mesh, vals)
        term_loads["gradient"] = load
        rhs += load

    lhs = op.matrix @ exp.w.values.ravel()
    inter, _ = op.dof_split()
    res = lhs[inter] - rhs[inter]
    if release:
        op.release()
    return {
        "residual": float(np.linalg.norm(res) / mesh.h),
        "lhs_norm": float(np.linalg.norm(lhs[inter]) / mesh.h),
        "term_loads": term_loads,
    }


# ---------------------------------------------------------------------------
# boundary conormal identity


def conormal_identity_check(exp: Expansion, coeff, hatA):
    """Pointwise boundary residual of the conormal identity for the Neumann
    family: dw/dnu_eps against the u_eps/u0 flux difference minus the
    second-order corrector term, on non-corner boundary nodes.
    """
    if exp.family != "neumann":
        raise ExpansionError("the conormal identity needs the Neumann family")
    mesh, m = exp.mesh, exp.m
    hatA = np.asarray(hatA, dtype=float).reshape(2, 2, m, m)
    bnodes = mesh.boundary_nodes
    mask = mesh.noncorner_mask
    nrm = mesh.normals[mask]
    A_b = np.asarray(coeff(mesh.nodes[bnodes[mask]])).reshape(-1, 2, 2, m, m)

    def conormal_of(values, tensor_b):
        g = nodal_gradient(mesh, values)[bnodes[mask]]     # (nb', j, beta)
        return np.einsum("ni,nijab,njb->na", nrm, tensor_b, g)

    dw = conormal_of(exp.w.values, A_b)
    du_eps = conormal_of(exp.u_eps.values, A_b)
    hat_b = np.broadcast_to(hatA, (mask.sum(), 2, 2, m, m))
    du0 = conormal_of(exp.u0.values, hat_b)

    D2 = second_derivatives(mesh, exp.u0.values)[bnodes[mask]]   # (nb', k, j, gamma)
    P = _monomial_table(mesh, 2, m)
    corr = np.zeros((mask.sum(), m))
    for k in range(2):
        for gam in range(m):
            VmP_b = (exp.V[k, gam] - P[k, gam])[bnodes[mask]]    # (nb', beta)
            corr += np.einsum("ni,nijab,nb,nj->na", nrm, A_b, VmP_b, D2[:, k, :, gam])

    residual = dw - (du_eps - du0 - corr)
    rmag = np.sqrt((residual ** 2).sum(axis=1))
    w = mesh.arc_weights[mask]
    return {
        "max": float(rmag.max()),
        "l2_boundary": float(np.sqrt((w * rmag ** 2).sum())),
    }


# ---------------------------------------------------------------------------
# approximation experiments


def poisson_approx(coeff, mesh_, omega_table, f_eps, ops=None,
                   hatA=None, options=DEFAULT_SOLVER):
    """Solve L_eps with boundary data f, L_0 with data omega*f, and compare.

    f_eps: boundary nodal values (n_boundary,) / (n_boundary, m) or a
    callable of the boundary points.  Returns both solutions and their
    L^1/L^2 differences.
    """
    m = getattr(coeff, "m", 1)
    ops = ops or {}
    if callable(f_eps):
        fb = np.asarray(f_eps(mesh_.nodes[mesh_.boundary_nodes]), dtype=float).reshape(mesh_.n_boundary, m)
    else:
        fb = np.asarray(f_eps, dtype=float).reshape(mesh_.n_boundary, m)
    op_eps = ops.get("dirichlet_eps") or assemble(coeff, mesh_, mode="dirichlet")
    u_eps = solve_dirichlet(op_eps, None, bdata=fb, options=options)
    if "dirichlet_eps" not in ops:
        op_eps.release()
    wvals = omega_table.filled()                           # (nb, m, m)
    vdata = np.einsum("ngb,nb->ng", wvals, fb)
    if "dirichlet_0" in ops:
        op0 = ops["dirichlet_0"]
    else:
        if hatA is None:
            raise ExpansionError("poisson_approx needs hatA when no homogenized operator is given")
        op0 = assemble(np.asarray(hatA).reshape(2, 2, m, m), mesh_, mode="dirichlet", m=m)
    v_eps = solve_dirichlet(op0, None, bdata=vdata, options=options)
    if "dirichlet_0" not in ops:
        op0.release()
    diff = Field(mesh_, u_eps.values - v_eps.values)
    return {
        "u_eps": u_eps, "v_eps": v_eps,
        "l1": norm(diff, "Lp", 1.0), "l2": norm(diff, "Lp", 2.0),
    }


def divergence_data_approx(coeff, phi_star, mesh_, f, ops=None, hatA=None,
                           options=DEFAULT_SOLVER):
    """Compare L_eps(u) = div f with L_0(v) = div F_eps,
    F_eps,i^a = f_j^b d_j{Phi*_i^{ba}}.

    f: nodal (nnodes, 2) for m = 1 or (nnodes, 2, m).
    """
    m = getattr(coeff, "m", 1)
    ops = ops or {}
    f = np.asarray(f, dtype=float).reshape(mesh_.nnodes, 2, m)
    op_eps = ops.get("dirichlet_eps") or assemble(coeff, mesh_, mode="dirichlet")
    u_eps = solve_dirichlet(op_eps, -divergence_load(mesh_, f, m=m), bdata=0.0, options=options)
    if "dirichlet_eps" not in ops:
        op_eps.release()

    grad_star = np.empty((2, m, mesh_.nnodes, 2, m))       # [i, alpha, node, j, beta]
    for i in range(2):
        for alpha in range(m):
            grad_star[i, alpha] = nodal_gradient(mesh_, phi_star[i, alpha])
    F_eps = np.einsum("njb,ianjb->nia", f, grad_star)

    if "dirichlet_0" in ops:
        op0 = ops["dirichlet_0"]
    else:
        if hatA is None:
            raise ExpansionError("divergence_data_approx needs hatA when no homogenized operator is given")
        op0 = assemble(np.asarray(hatA).reshape(2, 2, m, m), mesh_, mode="dirichlet", m=m)
    v_eps = solve_dirichlet(op0, -divergence_load(mesh_, F_eps, m=m), bdata=0.0, options=options)
    if "dirichlet_0" not in ops:
        op0.release()
    diff = Field(mesh_, u_eps.values - v_eps.values)
    return {
        "u_eps": u_eps, "v_eps": v_eps,
        "l1": norm(diff, "Lp", 1.0), "l2": norm(diff, "Lp", 2.0),
    }


def s_epsilon(coeff, phi, phi_star, mesh_, g, i=1, j=1, ops=None, hatA=None,
              options=DEFAULT_SOLVER, qs=(1.5,)):
    """The oscillatory singular-integral combination

        S(g) = T_eps,ij(g) - dPhi_k/dx_i T_0,kl(dPhi*_l/dx_j g)
                           + dPhi_k/dx_i T_0,kl(dPhi*_l/dx_j) g

    where T_eps,ij(g) = d_i of the zero-Dirichlet solve of L_eps(u) = d_j g.
    Scalar case (m = 1); i, j are 1-based.  Returns the field and L^q norms.
    """
    if getattr(coeff, "m", 1) != 1:
        raise ExpansionError("s_epsilon is implemented for the scalar case m = 1")
    ops = ops or {}
    g = np.asarray(g, dtype=float).reshape(mesh_.nnodes)
    ii, jj = i - 1, j - 1

    def t_apply(op, data):
        """d_i of the solve of L(u) = d_j applied to nodal data (nnodes, 2)->sum."""
        fv = np.zeros((mesh_.nnodes, 2, 1))
        fv[:, :, 0] = data
        u = solve_dirichlet(op, -divergence_load(mesh_, fv, m=1), bdata=0.0, options=options)
        return nodal_gradient(mesh_, u.values)[:, :, 0]    # (nnodes, i)

    op_eps = ops.get("dirichlet_eps") or assemble(coeff, mesh_, mode="dirichlet")
    data1 = np.zeros((mesh_.nnodes, 2))
    data1[:, jj] = g
    piece1 = t_apply(op_eps, data1)[:, ii]
    if "dirichlet_eps" not in ops:
        op_eps.release()

    dphi = np.stack([nodal_gradient(mesh_, phi[k, 0])[:, ii, 0] for k in range(2)], axis=1)
    dphistar = np.stack([nodal_gradient(mesh_, phi_star[l, 0])[:, jj, 0] for l in range(2)], axis=1)

    if "dirichlet_0" in ops:
        op0 = ops["dirichlet_0"]
    else:
        if hatA is None:
            raise ExpansionError("s_epsilon needs hatA when no homogenized operator is given")
        op0 = assemble(np.asarray(hatA).reshape(2, 2, 1, 1), mesh_, mode="dirichlet", m=1)
    grad2 = t_apply(op0, dphistar * g[:, None])            # T_0,.l(dPhi*_l g), (nnodes, k)
    grad3 = t_apply(op0, dphistar)                          # T_0,.l(dPhi*_l)
    if "dirichlet_0" not in ops:
        op0.release()

    piece2 = (dphi * grad2).sum(axis=1)
    piece3 = (dphi * grad3).sum(axis=1) * g
    S = Field(mesh_, piece1 - piece2 + piece3)
    return {"field": S, "norms": {q: norm(S, "Lp", q) for q in qs}}
