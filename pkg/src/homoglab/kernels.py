"""Sampled Green functions, Neumann functions, Poisson kernels, the
oscillating boundary weight, the Dirichlet-to-Neumann matrix and its
Leibniz commutators.

Discrete deltas are unit nodal loads (point-evaluation functionals), so a
kernel column is exact for the discrete bilinear form and reciprocity holds
to solver accuracy for symmetric coefficients.  Kernel values are trusted
only off-diagonal: |x - y| >= max(4h, 0.02), and for interior estimates
dist(x, boundary) >= 0.1.  Corner nodes never carry kernel values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import (DomainMesh, Field, assemble, solve_dirichlet, solve_neumann,
                   point_load, conormal, nodal_gradient, DEFAULT_SOLVER)

__all__ = ["KernelError", "KernelTable", "DtNMatrix", "OmegaTable",
           "green", "neumann_fn", "poisson_kernel", "omega", "dtn",
           "apply_dtn_via_solve", "leibniz_commutators",
           "product_commutator", "coordinate_commutator"]


class KernelError(ValueError):
    pass


def _as_node(mesh, y):
    if np.isscalar(y) or isinstance(y, (int, np.integer)):
        return int(y)
    y = np.asarray(y, dtype=float)
    node = int(np.argmin(np.sum((mesh.nodes - y) ** 2, axis=1)))
    if np.linalg.norm(mesh.nodes[node] - y) > 1e-9:
        raise KernelError(f"point {y} is not a mesh node")
    return node


@dataclass
class KernelTable:
    """Sampled kernel columns G(., y) for a list of source points."""

    kind: str                  # 'green' | 'neumann-fn' | 'poisson'
    epsilon: float             # 0 means the homogenized operator
    mesh: DomainMesh
    sources: list              # node ids (green/neumann-fn) or boundary positions (poisson)
    fields: list               # Field per source

    def trusted_mask(self, idx, interior_dist=None):
        """Nodes where the column values are trusted: off-diagonal and finite."""
        mesh = self.mesh
        if self.kind == "poisson":
            ysrc = mesh.nodes[mesh.boundary_nodes[self.sources[idx]]]
        else:
            ysrc = mesh.nodes[self.sources[idx]]
        r = np.linalg.norm(mesh.nodes - ysrc, axis=1)
        mask = r >= max(4 * mesh.h, 0.02)
        if interior_dist is not None:
            mask &= mesh.dist_to_boundary(mesh.nodes) >= interior_dist - 1e-12
        return mask

    def value(self, x, idx=0, alpha=0):
        node = _as_node(self.mesh, x)
        if not self.trusted_mask(idx)[node]:
            raise KernelError("evaluation inside the untrusted diagonal region")
        return float(self.fields[idx].values[node, alpha])

    def to_csv(self, path):
        mesh = self.mesh
        with open(path, "w") as fh:
            fh.write("x,y,source_x,source_y,value\n")
            for idx, fld in enumerate(self.fields):
                if self.kind == "poisson":
                    sx, sy = mesh.nodes[mesh.boundary_nodes[self.sources[idx]]]
                else:
                    sx, sy = mesh.nodes[self.sources[idx]]
                for node in range(mesh.nnodes):
                    x, y = mesh.nodes[node]
                    fh.write(f"{x!r},{y!r},{sx!r},{sy!r},{fld.values[node, 0]!r}\n")


def green(coeff, mesh, y, beta=0, op=None, options=DEFAULT_SOLVER) -> Field:
    """Green column: Dirichlet solve with a unit nodal load at y."""
    node = _as_node(mesh, y)
    if mesh.boundary_mask[node]:
        raise KernelError("Green source must be an interior node")
    m = getattr(coeff, "m", 1)
    release = op is None
    if op is None:
        op = assemble(coeff, mesh, mode="dirichlet")
    sol = solve_dirichlet(op, point_load(mesh, node, beta=beta, m=m), bdata=0.0,
                          options=options)
    if release:
        op.release()
    return sol


def neumann_fn(coeff, mesh, y, beta=0, op=None, options=DEFAULT_SOLVER) -> Field:
    """Neumann-function column: unit nodal load at y, constant compensating
    boundary flux -1/|boundary|, pinned to zero boundary mean."""
    if not getattr(coeff, "symmetric", True):
        raise KernelError("Neumann functions require a symmetric coefficient (A* = A)")
    node = _as_node(mesh, y)
    if mesh.boundary_mask[node]:
        raise KernelError("Neumann source must be an interior node")
    m = getattr(coeff, "m", 1)
    release = op is None
    if op is None:
        op = assemble(coeff, mesh, mode="neumann")
    load = point_load(mesh, node, beta=beta, m=m)
    gconst = np.zeros((mesh.n_boundary, m))
    gconst[:, beta] = -0.25            # -1/|boundary| on the unit square
    sol = solve_neumann(op, load, flux=gconst, options=options)
    if release:
        op.release()
    return sol


def poisson_kernel(coeff, mesh, y, op=None, options=DEFAULT_SOLVER) -> Field:
    """Poisson-kernel column: Dirichlet solve whose boundary data is the hat
    at the boundary node y divided by its arc mass.

    This is the stable equivalent of differentiating the Green function in
    its second argument.  y may be a boundary position index or a point;
    corner nodes are rejected.
    """
    if np.isscalar(y) or isinstance(y, (int, np.integer)):
        pos = int(y)
    else:
        node = _as_node(mesh, y)
        matches = np.flatnonzero(mesh.boundary_nodes == node)
        if len(matches) == 0:
            raise KernelError("Poisson-kernel source must be a boundary node")
        pos = int(matches[0])
    if pos in mesh.corner_positions:
        raise KernelError("Poisson kernel is not evaluated at corner nodes")
    m = getattr(coeff, "m", 1)
    release = op is None
    if op is None:
        op = assemble(coeff, mesh, mode="dirichlet")
    bdata = np.zeros((mesh.n_boundary, m))
    bdata[pos, :] = 1.0 / mesh.arc_weights[pos]
    sol = solve_dirichlet(op, None, bdata=bdata, options=options)
    if release:
        op.release()
    return sol


# ---------------------------------------------------------------------------
# oscillating boundary weight


@dataclass
class OmegaTable:
    """Boundary weight omega_eps^{gb}(y) and the auxiliary inverse h^{ab}(y).

    values: (n_boundary, m, m), NaN at the four corners.  filled() replaces
    corner entries by the mean of the two adjacent edge values, for use as
    boundary data in products.
    """

    mesh: DomainMesh
    epsilon: float
    values: np.ndarray
    hmat: np.ndarray

    def filled(self):
        out = self.values.copy()
        nb = self.mesh.n_boundary
        for pos in self.mesh.corner_positions:
            out[pos] = 0.5 * (out[(pos - 1) % nb] + out[(pos + 1) % nb])
        return out

    def scalar(self, fill_corners=False):
        vals = self.filled() if fill_corners else self.values
        return vals[:, 0, 0]


def omega(coeff, hatA, phi_star, mesh, op=None) -> OmegaTable:
    """Boundary weight built from the adjoint Dirichlet correctors:

        omega^{gb}(y) = h^{gs}(y) dPhi*_k^{rs}/dn(y) n_k(y)
                        n_i(y) n_j(y) a_ij^{rb}(y/eps)

    with h(y) the inverse of the m x m matrix n_i n_j hatA_ij^{ab}.

    When the operator that produced phi_star is supplied, the normal
    derivative is extracted from the variational conormal flux of each
    column (its tangential part is known exactly since Phi* has linear
    boundary values); this is consistent with how the discrete kernels are
    built and tracks them markedly better than recovered gradients.
    Without it, one-sided gradient recovery at the boundary is used.
    """
    m = getattr(coeff, "m", 1)
    hatA = np.asarray(hatA, dtype=float).reshape(2, 2, m, m)
    bnodes = mesh.boundary_nodes
    nb = mesh.n_boundary
    A_b = coeff(mesh.nodes[bnodes])                      # (nb, 2, 2, m, m)
    mask = mesh.noncorner_mask
    nrm = mesh.normals

    # normal derivative of each column: [k, sigma, node, rho]
    dn = np.full((2, m, nb, m), np.nan)
    if op is not None:
        star_op = op
        for k in range(2):
            for sig in range(m):
                flux = conormal(Field(mesh, phi_star[k, sig]), star_op)      # (nb, rho)
                for pos in np.flatnonzero(mask):
                    n = nrm[pos]
                    t = np.array([-n[1], n[0]])
                    nAn = np.einsum("i,j,ijrs->rs", n, n, A_b[pos])
                    nAt = np.einsum("i,j,ijrs->rs", n, t, A_b[pos])
                    # Phi*_k = x_k e_sigma on the boundary: tangential part t_k e_sigma
                    rhs = flux[pos] - nAt[:, sig] * t[k]
                    dn[k, sig, pos] = np.linalg.solve(nAn, rhs)
    else:
        for k in range(2):
            for sig in range(m):
                g = nodal_gradient(mesh, phi_star[k, sig])[bnodes]           # (nb, j, rho)
                dn[k, sig][mask] = np.einsum("njr,nj->nr", g[mask], nrm[mask])

    values = np.full((nb, m, m), np.nan)
    hmat = np.full((nb, m, m), np.nan)
    for pos in np.flatnonzero(mask):
        n = nrm[pos]
        H = np.einsum("i,j,ijab->ab", n, n, hatA)
        hinv = np.linalg.inv(H)
        hmat[pos] = hinv
        # T^{rs} = n_k dPhi*_k^{rs}/dn
        T = np.einsum("k,ksr->rs", n, dn[:, :, pos, :])
        an = np.einsum("i,j,ijrb->rb", n, n, A_b[pos])
        values[pos] = np.einsum("gs,rs,rb->gb", hinv, T, an)
    return OmegaTable(mesh=mesh, epsilon=getattr(coeff, "epsilon", 1.0),
                      values=values, hmat=hmat)


# ---------------------------------------------------------------------------
# Dirichlet-to-Neumann map


@dataclass
class DtNMatrix:
    """Weak-form DtN matrix against boundary hat functions.

    mat[i, j] = <Lambda hat_j, hat_i>; the nodal action on boundary data f
    is apply(f) = W^{-1} (mat @ f) with W the lumped arc weights.  The weak
    matrix is symmetric positive semidefinite when A* = A.
    """

    mesh: DomainMesh
    epsilon: float
    mat: np.ndarray            # (nb*m, nb*m)
    m: int = 1

    def apply(self, fb):
        fb = np.asarray(fb, dtype=float)
        if fb.ndim == 1:
            fb = fb[:, None]
        out = (self.mat @ fb.ravel()).reshape(self.mesh.n_boundary, self.m)
        return out / self.mesh.arc_weights[:, None]

    def constant_action(self):
        return float(np.abs(self.apply(np.ones(self.mesh.n_boundary))).max())

    def to_csv(self, path):
        nb = self.mesh.n_boundary
        with open(path, "w") as fh:
            header = ",".join(str(i) for i in range(nb * self.m))
            fh.write("# boundary nodes counterclockwise from (0,0); weak-form entries\n")
            fh.write(header + "\n")
            for row in self.mat:
                fh.write(",".join(repr(v) for v in row) + "\n")


def dtn(coeff, mesh, op=None, options=DEFAULT_SOLVER, chunk=128) -> DtNMatrix:
    """Dense DtN matrix via the Schur complement of the stiffness matrix.

    Column j is the variational conormal flux of the Dirichlet solve with
    hat data at boundary node j; assembled in chunks over one factorization.
    """
    m = getattr(coeff, "m", 1)
    release = op is None
    if op is None:
        op = assemble(coeff, mesh, mode="dirichlet")
    inter, bd = op.dof_split()
    K = op.matrix
    Kib = K[inter][:, bd].tocsc()
    Kbi = K[bd][:, inter].tocsr()
    Kbb = K[bd][:, bd].toarray()
    lu = op._dirichlet_lu()
    nbd = len(bd)
    S = np.array(Kbb)
    for start in range(0, nbd, chunk):
        cols = np.arange(start, min(start + chunk, nbd))
        X = lu.solve(Kib[:, cols].toarray())
        S[:, cols] -= Kbi @ X
    if release:
        op.release()
    return DtNMatrix(mesh=mesh, epsilon=getattr(coeff, "epsilon", 0.0), mat=S, m=m)


def apply_dtn_via_solve(op, fb, options=DEFAULT_SOLVER):
    """Lambda f by one Dirichlet solve plus variational flux recovery.

    Agrees with DtNMatrix.apply up to solver accuracy; preferred at fine
    resolution where the dense matrix is too expensive.
    """
    u = solve_dirichlet(op, None, bdata=fb, options=options)
    return conormal(u, op)


# ---------------------------------------------------------------------------
# Leibniz commutators for the Laplacian DtN map


def _boundary_l2(mesh, vals, p=2.0):
    mask = mesh.noncorner_mask
    w = mesh.arc_weights[mask]
    mag = np.abs(np.asarray(vals).reshape(mesh.n_boundary, -1))[mask]
    mag = np.sqrt((mag ** 2).sum(axis=1))
    if np.isinf(p):
        return float(mag.max())
    return float((w * mag ** p).sum() ** (1.0 / p))


def product_commutator(dtn_mat: DtNMatrix, f, g):
    """Lambda(fg) - f Lambda(g), nodal on the boundary."""
    f = np.asarray(f, dtype=float).reshape(-1)
    g = np.asarray(g, dtype=float).reshape(-1)
    return dtn_mat.apply(f * g)[:, 0] - f * dtn_mat.apply(g)[:, 0]


def coordinate_commutator(dtn_mat: DtNMatrix, f, i):
    """Lambda(f x_i) - x_i Lambda(f), nodal on the boundary (i is 1-based)."""
    f = np.asarray(f, dtype=float).reshape(-1)
    xi = dtn_mat.mesh.nodes[dtn_mat.mesh.boundary_nodes, i - 1]
    return dtn_mat.apply(f * xi)[:, 0] - xi * dtn_mat.apply(f)[:, 0]


def leibniz_commutators(dtn_mat: DtNMatrix, f, g=None, i=None, ps=(1.5, 2.0, 3.0)):
    """Both Leibniz commutators with their boundary L^p norms.

    Built for the Laplacian DtN map; norms use lumped arc quadrature with
    corner nodes excluded.  Only the p = 2 norms are asserted by the test
    suite; the others are reported.
    """
    mesh = dtn_mat.mesh
    out = {}
    if g is not None:
        field = product_commutator(dtn_mat, f, g)
        out["product"] = field
        out["product_norms"] = {p: _boundary_l2(mesh, field, p) for p in ps}
    if i is not None:
        field = coordinate_commutator(dtn_mat, f, i)
        out["coordinate"] = field
        out["coordinate_norms"] = {p: _boundary_l2(mesh, field, p) for p in ps}
    return out
