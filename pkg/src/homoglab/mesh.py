"""Discretization substrate: periodic unit-cell grid, unit-square grid,
bilinear finite element assembly, linear solves, norms and variational
conormal fluxes.

Both meshes are uniform tensor grids with continuous bilinear elements and
2x2 Gauss quadrature per element.  Degrees of freedom are laid out as
dof = node * m + component.  Meshes and assembled operators are immutable
after construction; solves are pure functions of (operator, data).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "TorusGrid", "DomainMesh", "Field", "AssembledOperator", "SolverOptions",
    "SolveError", "DivergenceLoad", "assemble", "volume_load", "divergence_load",
    "point_load", "boundary_flux_load", "solve_dirichlet", "solve_neumann",
    "solve_periodic", "conormal", "norm", "nodal_gradient", "interp_torus",
    "tangential_derivative", "linear_monomial", "boundary_values",
]

# reference Q1 element on [0,1]^2, local node order (0,0),(1,0),(0,1),(1,1)
_G1 = 0.5 * (1.0 - 1.0 / np.sqrt(3.0))
_G2 = 0.5 * (1.0 + 1.0 / np.sqrt(3.0))
GAUSS_POINTS = np.array([[_G1, _G1], [_G2, _G1], [_G1, _G2], [_G2, _G2]])
GAUSS_WEIGHTS = np.full(4, 0.25)


def _shape(xi, eta):
    return np.array([(1 - xi) * (1 - eta), xi * (1 - eta), (1 - xi) * eta, xi * eta])


def _shape_grad(xi, eta):
    return np.array([[-(1 - eta), (1 - eta), -eta, eta],
                     [-(1 - xi), -xi, (1 - xi), xi]])


PHI = np.stack([_shape(x, y) for x, y in GAUSS_POINTS])          # (4 gauss, 4 nodes)
DPHI = np.stack([_shape_grad(x, y) for x, y in GAUSS_POINTS])    # (4 gauss, 2, 4 nodes)


class SolveError(RuntimeError):
    """A linear solve failed to reach the requested tolerance."""


@dataclass(frozen=True)
class SolverOptions:
    kind: str = "direct"     # "direct" (sparse LU) or "cg" (iterative fallback)
    tol: float = 1e-10

    def __post_init__(self):
        if self.kind not in ("direct", "cg"):
            raise ValueError(f"solver kind must be 'direct' or 'cg', got {self.kind!r}")


DEFAULT_SOLVER = SolverOptions()


class TorusGrid:
    """Uniform n x n grid on the flat unit torus, bilinear elements."""

    def __init__(self, n, d=2):
        if d != 2:
            raise NotImplementedError("grids are implemented for d = 2")
        if n < 2:
            raise ValueError(f"need at least 2 cells per axis, got {n}")
        self.n = int(n)
        self.d = 2
        self.h = 1.0 / n
        self.nnodes = n * n
        self.nelem = n * n
        ix, iy = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
        self.nodes = np.column_stack([(ix.ravel() % n) * self.h, (iy.ravel() % n) * self.h])
        ex, ey = ix.ravel(), iy.ravel()
        exp, eyp = (ex + 1) % n, (ey + 1) % n
        self.elem_dofs = np.column_stack([ey * n + ex, ey * n + exp,
                                          eyp * n + ex, eyp * n + exp]).astype(np.int32)
        self.is_torus = True

    def gauss_points(self):
        corners = self.nodes[self.elem_dofs[:, 0]]
        return corners[:, None, :] + GAUSS_POINTS[None, :, :] * self.h

    def node_id(self, ix, iy):
        return (iy % self.n) * self.n + (ix % self.n)


class DomainMesh:
    """Uniform n x n grid of the unit square with boundary structure.

    Boundary nodes are stored counterclockwise starting at (0,0); each has
    an arc-length coordinate s = k*h, a lumped arc weight h, and a unit
    outward normal (NaN at the four corners, which carry no normal).
    """

    def __init__(self, n):
        if n < 2:
            raise ValueError(f"need at least 2 cells per axis, got {n}")
        self.n = int(n)
        self.d = 2
        self.h = 1.0 / n
        N = n + 1
        self.nnodes = N * N
        self.nelem = n * n
        ix, iy = np.meshgrid(np.arange(N), np.arange(N), indexing="xy")
        self.nodes = np.column_stack([ix.ravel() * self.h, iy.ravel() * self.h])
        ex, ey = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
        ex, ey = ex.ravel(), ey.ravel()
        self.elem_dofs = np.column_stack([ey * N + ex, ey * N + ex + 1,
                                          (ey + 1) * N + ex, (ey + 1) * N + ex + 1]).astype(np.int32)
        self.is_torus = False

        ks = np.arange(n)
        bottom = ks                       # (k, 0)
        right = ks * N + n                # (n, k)
        top = n * N + (n - ks)            # (n-k, n)
        left = (n - ks) * N               # (0, n-k)
        self.boundary_nodes = np.concatenate([bottom, right, top, left]).astype(np.int64)
        self.n_boundary = 4 * n
        self.boundary_s = np.arange(4 * n) * self.h
        self.arc_weights = np.full(4 * n, self.h)
        self.corner_positions = np.array([0, n, 2 * n, 3 * n])
        normals = np.empty((4 * n, 2))
        normals[0:n] = (0.0, -1.0)
        normals[n:2 * n] = (1.0, 0.0)
        normals[2 * n:3 * n] = (0.0, 1.0)
        normals[3 * n:4 * n] = (-1.0, 0.0)
        normals[self.corner_positions] = np.nan
        self.normals = normals
        mask = np.ones(4 * n, dtype=bool)
        mask[self.corner_positions] = False
        self.noncorner_mask = mask

        bmask = np.zeros(self.nnodes, dtype=bool)
        bmask[self.boundary_nodes] = True
        self.boundary_mask = bmask
        self.interior_nodes = np.flatnonzero(~bmask)

    def gauss_points(self):
        corners = self.nodes[self.elem_dofs[:, 0]]
        return corners[:, None, :] + GAUSS_POINTS[None, :, :] * self.h

    def edge_positions(self, edge):
        """Boundary-list positions of the closed edge (both corners included)."""
        n = self.n
        pos = np.arange(edge * n, edge * n + n + 1)
        pos[-1] %= 4 * n
        return pos

    def edge_normal(self, edge):
        return np.array([(0.0, -1.0), (1.0, 0.0), (0.0, 1.0), (-1.0, 0.0)][edge])

    def dist_to_boundary(self, pts):
        pts = np.asarray(pts)
        return np.min(np.stack([pts[..., 0], 1.0 - pts[..., 0],
                                pts[..., 1], 1.0 - pts[..., 1]]), axis=0)


@dataclass
class Field:
    """Nodal values of an m-component field on a mesh."""

    mesh: object
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        if vals.shape[0] != self.mesh.nnodes:
            raise ValueError(f"field has {vals.shape[0]} values for {self.mesh.nnodes} nodes")
        self.values = vals

    @property
    def m(self):
        return self.values.shape[1]

    def copy(self):
        return Field(self.mesh, self.values.copy())

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("node_x,node_y,component,value\n")
            for a in range(self.m):
                for node in range(self.mesh.nnodes):
                    x, y = self.mesh.nodes[node]
                    fh.write(f"{x!r},{y!r},{a},{self.values[node, a]!r}\n")


def linear_monomial(mesh, j, beta=0, m=1):
    """Nodal values of the linear data x_j e_beta."""
    vals = np.zeros((mesh.nnodes, m))
    vals[:, beta] = mesh.nodes[:, j]
    return Field(mesh, vals)


# ---------------------------------------------------------------------------
# assembly


class AssembledOperator:
    """Sparse matrix of the form integral a_ij^{ab} dU^b/dx_j dV^a/dx_i.

    mode 'dirichlet' eliminates boundary dofs at solve time; mode 'neumann'
    (alias 'neumann-with-mean-pin') appends one scalar mean constraint per
    component over the boundary; mode 'periodic' pins the volume mean on the
    torus.  Factorizations are cached behind the handle; release() frees
    them (they are large at fine resolution).
    """

    def __init__(self, mesh, matrix, mode, m, coeff=None, symmetric=False, warnings=()):
        self.mesh = mesh
        self.matrix = matrix
        self.mode = mode
        self.m = m
        self.coeff = coeff
        self.symmetric = symmetric
        self.warnings = list(warnings)
        self._lu = None
        self._interior_dofs = None
        self._boundary_dofs = None
        self._Kii = None

    @property
    def ndof(self):
        return self.mesh.nnodes * self.m

    def dof_split(self):
        """(interior dofs sorted, boundary dofs in boundary order)."""
        if self._interior_dofs is None:
            m = self.m
            bd = (self.mesh.boundary_nodes[:, None] * m + np.arange(m)[None, :]).ravel()
            mask = np.zeros(self.ndof, dtype=bool)
            mask[bd] = True
            self._boundary_dofs = bd
            self._interior_dofs = np.flatnonzero(~mask)
        return self._interior_dofs, self._boundary_dofs

    def interior_matrix(self):
        if self._Kii is None:
            inter, _ = self.dof_split()
            self._Kii = self.matrix[inter][:, inter].tocsr()
        return self._Kii

    def pin_columns(self):
        """Constraint columns for the mean pin (one per component)."""
        m = self.m
        C = np.zeros((self.ndof, m))
        if self.mode == "periodic":
            w = np.full(self.mesh.nnodes, self.mesh.h ** 2)
            nodes = np.arange(self.mesh.nnodes)
        else:
            w = self.mesh.arc_weights
            nodes = self.mesh.boundary_nodes
        for a in range(m):
            C[nodes * m + a, a] = w
        return C

    def release(self):
        self._lu = None
        self._Kii = None

    def _factor(self, matrix):
        return spla.splu(matrix.tocsc(), permc_spec="MMD_AT_PLUS_A")

    def _dirichlet_lu(self):
        if self._lu is None:
            self._lu = self._factor(self.interior_matrix())
        return self._lu

    def _pinned_lu(self):
        if self._lu is None:
            C = self.pin_columns()
            B = sp.bmat([[self.matrix, sp.csr_matrix(C)],
                         [sp.csr_matrix(C.T), None]], format="csc")
            self._lu = self._factor(B)
        return self._lu


def _coefficient_gauss_values(coeff, mesh, m):
    pts = mesh.gauss_points().reshape(-1, 2)
    if callable(coeff):
        vals = coeff(pts)
    else:
        tensor = np.asarray(coeff, dtype=float)
        if tensor.ndim == 0:
            tensor = float(tensor) * np.einsum("ij,ab->ijab", np.eye(2), np.eye(m))
        elif tensor.shape == (2, 2):
            tensor = np.einsum("ij,ab->ijab", tensor, np.eye(m))
        elif tensor.shape != (2, 2, m, m):
            raise ValueError(f"constant tensor has shape {tensor.shape}")
        vals = np.broadcast_to(tensor, (pts.shape[0], 2, 2, m, m))
    return np.asarray(vals).reshape(mesh.nelem, 4, 2, 2, m, m)


def assemble(coeff, mesh, mode="dirichlet", m=None) -> AssembledOperator:
    """Assemble the stiffness matrix of coeff on the mesh.

    coeff may be a CoefficientField / ScaledCoefficient (evaluated at the
    physical Gauss points) or a constant tensor.  An under-resolved
    oscillation (h > eps/8) is recorded as a warning on the operator, not
    a failure.
    """
    if mode == "neumann-with-mean-pin":
        mode = "neumann"
    if mesh.is_torus:
        mode = "periodic"
    elif mode not in ("dirichlet", "neumann"):
        raise ValueError(f"unknown constraint mode {mode!r}")
    if m is None:
        m = getattr(coeff, "m", 1)

    warnings = []
    eps = getattr(coeff, "epsilon", None)
    if eps is not None and mesh.h > eps / 8.0 + 1e-14:
        warnings.append(f"under-resolved oscillation: h={mesh.h:.4g} > eps/8={eps / 8.0:.4g}")

    A = _coefficient_gauss_values(coeff, mesh, m)
    if not np.all(np.isfinite(A)):
        raise ValueError("coefficient evaluated to non-finite values")
    # physical gradients carry 1/h each; the element volume h^2 cancels them in d=2
    Kloc = np.einsum("g,egijab,gip,gjq->epaqb", GAUSS_WEIGHTS, A, DPHI, DPHI, optimize=True)
    del A
    nelem = mesh.nelem
    ldof = (mesh.elem_dofs[:, :, None] * m + np.arange(m)[None, None, :]).reshape(nelem, 4 * m)
    Kloc = Kloc.reshape(nelem, 4 * m, 4 * m)
    rows = np.broadcast_to(ldof[:, :, None], Kloc.shape).ravel()
    cols = np.broadcast_to(ldof[:, None, :], Kloc.shape).ravel()
    ndof = mesh.nnodes * m
    matrix = sp.coo_matrix((Kloc.ravel(), (rows, cols)), shape=(ndof, ndof)).tocsr()
    del Kloc, rows, cols

    if callable(coeff):
        symmetric = bool(getattr(coeff, "symmetric", False))
    else:
        symmetric = _tensor_is_symmetric(coeff, m)
    return AssembledOperator(mesh, matrix, mode, m, coeff=coeff,
                             symmetric=symmetric, warnings=warnings)


def _tensor_is_symmetric(coeff, m):
    tensor = np.asarray(coeff, dtype=float)
    if tensor.ndim == 0:
        return True
    if tensor.shape == (2, 2):
        return bool(np.array_equal(tensor, tensor.T))
    return bool(np.array_equal(tensor, tensor.transpose(1, 0, 3, 2)))


# ---------------------------------------------------------------------------
# load functionals (assembled right-hand-side vectors)


@dataclass
class DivergenceLoad:
    """Divergence-form data: the functional v -> integral f_i^a dv^a/dx_i.

    Solving with load -DivergenceLoad(f) realizes the equation L(u) = div f.
    values: nodal array (nnodes, d, m), or a callable(points) -> (npts, d, m).
    """

    values: object


def _gauss_values(mesh, values, trailing):
    """Evaluate nodal data (or a callable) at the element Gauss points."""
    if callable(values):
        out = values(mesh.gauss_points().reshape(-1, 2))
        return np.asarray(out, dtype=float).reshape((mesh.nelem, 4) + trailing)
    vals = np.asarray(values, dtype=float).reshape((mesh.nnodes,) + trailing)
    at_nodes = vals[mesh.elem_dofs]          # (nelem, 4 local, ...)
    return np.einsum("gp,ep...->eg...", PHI, at_nodes)


def volume_load(mesh, values, m=None):
    """Assemble v -> integral f . v for nodal values (nnodes, m) or callable."""
    if isinstance(values, Field):
        values = values.values
    if m is None:
        m = 1 if callable(values) else np.asarray(values).reshape(mesh.nnodes, -1).shape[1]
    fg = _gauss_values(mesh, values, (m,))
    loc = mesh.h ** 2 * np.einsum("g,ega,gp->epa", GAUSS_WEIGHTS, fg, PHI)
    vec = np.zeros(mesh.nnodes * m)
    np.add.at(vec, (mesh.elem_dofs[:, :, None] * m + np.arange(m)).ravel(), loc.ravel())
    return vec


def divergence_load(mesh, values, m=None):
    """Assemble v -> integral f_i^a dv^a/dx_i for data (nnodes, d, m) or callable."""
    if isinstance(values, DivergenceLoad):
        values = values.values
    if m is None:
        m = 1 if callable(values) else np.asarray(values).reshape(mesh.nnodes, 2, -1).shape[2]
    fg = _gauss_values(mesh, values, (2, m))
    loc = mesh.h * np.einsum("g,egia,gip->epa", GAUSS_WEIGHTS, fg, DPHI)
    vec = np.zeros(mesh.nnodes * m)
    np.add.at(vec, (mesh.elem_dofs[:, :, None] * m + np.arange(m)).ravel(), loc.ravel())
    return vec


def volume_load_from_gauss(mesh, fg):
    """Assemble v -> integral f . v from Gauss-point values fg (nelem, 4, m)."""
    m = fg.shape[2]
    loc = mesh.h ** 2 * np.einsum("g,ega,gp->epa", GAUSS_WEIGHTS, fg, PHI)
    vec = np.zeros(mesh.nnodes * m)
    np.add.at(vec, (mesh.elem_dofs[:, :, None] * m + np.arange(m)).ravel(), loc.ravel())
    return vec


def divergence_load_from_gauss(mesh, fg):
    """Assemble v -> integral f_i^a dv^a/dx_i from Gauss values fg (nelem, 4, 2, m)."""
    m = fg.shape[3]
    loc = mesh.h * np.einsum("g,egia,gip->epa", GAUSS_WEIGHTS, fg, DPHI)
    vec = np.zeros(mesh.nnodes * m)
    np.add.at(vec, (mesh.elem_dofs[:, :, None] * m + np.arange(m)).ravel(), loc.ravel())
    return vec


def element_gauss_values(mesh, values):
    """Nodal table (nnodes, ...) -> values at the element Gauss points (nelem, 4, ...)."""
    vals = np.asarray(values, dtype=float)
    at_nodes = vals[mesh.elem_dofs]
    return np.einsum("gp,ep...->eg...", PHI, at_nodes)


def element_gauss_gradients(mesh, values):
    """Nodal table (nnodes, ...) -> bilinear gradients at Gauss points (nelem, 4, 2, ...)."""
    vals = np.asarray(values, dtype=float)
    at_nodes = vals[mesh.elem_dofs]
    return np.einsum("gip,ep...->egi...", DPHI, at_nodes) / mesh.h


def point_load(mesh, node, beta=0, m=1):
    """Unit nodal load (point-evaluation functional) at a node."""
    vec = np.zeros(mesh.nnodes * m)
    vec[node * m + beta] = 1.0
    return vec


def boundary_flux_load(mesh, g, m=1):
    """Assemble v -> integral_{boundary} g . v dsigma by per-edge trapezoid.

    g is a callable(points, normal) -> (npts, m) evaluated per edge with the
    edge's constant outward normal (corners receive contributions from both
    adjacent edges), or a nodal array (n_boundary, m) in boundary order.
    """
    vec = np.zeros(mesh.nnodes * m)
    nodal = None if callable(g) else np.asarray(g, dtype=float).reshape(mesh.n_boundary, m)
    for edge in range(4):
        pos = mesh.edge_positions(edge)
        nodes = mesh.boundary_nodes[pos]
        if nodal is None:
            gvals = np.asarray(g(mesh.nodes[nodes], mesh.edge_normal(edge)), dtype=float).reshape(-1, m)
        else:
            gvals = nodal[pos]
        w = np.full(len(pos), mesh.h)
        w[0] = w[-1] = 0.5 * mesh.h
        for a in range(m):
            np.add.at(vec, nodes * m + a, w * gvals[:, a])
    return vec


def _as_load_vector(mesh, source, m):
    if source is None:
        return np.zeros(mesh.nnodes * m)
    if isinstance(source, DivergenceLoad):
        return divergence_load(mesh, source, m=m)
    if isinstance(source, Field):
        return volume_load(mesh, source.values, m=m)
    arr = np.asarray(source, dtype=float)
    if arr.ndim == 1 and arr.size == mesh.nnodes * m:
        return arr
    return volume_load(mesh, arr, m=m)


# ---------------------------------------------------------------------------
# solves


def _check_residual(name, matrix, x, rhs, tol):
    res = np.linalg.norm(matrix @ x - rhs)
    scale = np.linalg.norm(rhs) + 1e-300
    # absolute floor for (near-)zero data, tied to the matrix magnitude
    floor = 1e-12 * np.abs(matrix.data).max() * (1.0 + np.linalg.norm(x))
    if not np.isfinite(res) or res > max(tol * scale, 1e-9 * scale, floor):
        raise SolveError(f"{name} solve did not converge: residual {res:.3e} vs data scale {scale:.3e}")


def _solve_linear(matrix, rhs, options, symmetric_posdef=False):
    if options.kind == "direct":
        lu = spla.splu(matrix.tocsc(), permc_spec="MMD_AT_PLUS_A")
        return lu.solve(rhs)
    diag = matrix.diagonal()
    M = sp.diags(np.where(np.abs(diag) > 0, 1.0 / np.where(diag == 0, 1.0, diag), 1.0))
    solver = spla.cg if symmetric_posdef else spla.minres
    x, info = solver(matrix, rhs, M=M, maxiter=20 * matrix.shape[0], rtol=options.tol)
    if info != 0:
        raise SolveError(f"iterative solve returned info={info}")
    return x


def _boundary_data_vector(mesh, bdata, m):
    """Boundary values as an (n_boundary, m) array in boundary order."""
    if isinstance(bdata, Field):
        return bdata.values[mesh.boundary_nodes]
    if callable(bdata):
        return np.asarray(bdata(mesh.nodes[mesh.boundary_nodes]), dtype=float).reshape(mesh.n_boundary, m)
    arr = np.asarray(bdata, dtype=float)
    if arr.ndim == 0:
        return np.full((mesh.n_boundary, m), float(arr))
    if arr.shape == (mesh.n_boundary,) and m == 1:
        return arr[:, None]
    if arr.shape == (mesh.n_boundary, m):
        return arr
    if arr.shape[0] == mesh.nnodes:
        return arr.reshape(mesh.nnodes, m)[mesh.boundary_nodes]
    raise ValueError(f"cannot interpret boundary data of shape {arr.shape}")


def solve_dirichlet(op: AssembledOperator, source=None, bdata=0.0,
                    options: SolverOptions = DEFAULT_SOLVER) -> Field:
    """Solve with Dirichlet data; boundary nodes match bdata exactly."""
    if op.mode != "dirichlet":
        raise ValueError(f"operator assembled in mode {op.mode!r}, need 'dirichlet'")
    mesh, m = op.mesh, op.m
    load = _as_load_vector(mesh, source, m)
    bvals = _boundary_data_vector(mesh, bdata, m)
    inter, bd = op.dof_split()
    u = np.zeros(op.ndof)
    u[bd] = bvals.ravel()
    rhs = load[inter] - (op.matrix @ u)[inter]
    if op._lu is not None or options.kind == "direct":
        x = op._dirichlet_lu().solve(rhs)
    else:
        x = _solve_linear(op.interior_matrix(), rhs, options, symmetric_posdef=op.symmetric)
    u[inter] = x
    _check_residual("dirichlet", op.interior_matrix(), x, rhs, options.tol)
    return Field(mesh, u.reshape(mesh.nnodes, m))


def solve_neumann(op: AssembledOperator, source=None, flux=None,
                  options: SolverOptions = DEFAULT_SOLVER, check_compat=True) -> Field:
    """Solve the Neumann problem with the boundary-mean pin.

    The returned field satisfies integral_{boundary} u dsigma = 0 per
    component.  Data must be compatible: total source + total flux = 0.
    """
    if op.mode != "neumann":
        raise ValueError(f"operator assembled in mode {op.mode!r}, need 'neumann'")
    mesh, m = op.mesh, op.m
    load = _as_load_vector(mesh, source, m)
    if flux is None:
        fvec = np.zeros(op.ndof)
    elif isinstance(flux, np.ndarray) and flux.ndim == 1 and flux.size == op.ndof:
        fvec = flux
    else:
        fvec = boundary_flux_load(mesh, flux, m=m)
    rhs = load + fvec
    if check_compat:
        for a in range(m):
            total = rhs[a::m].sum()
            scale = np.abs(load[a::m]).sum() + np.abs(fvec[a::m]).sum()
            if abs(total) > 1e-8 * max(scale, 1e-30):
                raise SolveError(
                    f"incompatible Neumann data: component {a} imbalance {total:.3e} vs scale {scale:.3e}")
    rhs_full = np.concatenate([rhs, np.zeros(m)])
    if op._lu is not None or options.kind == "direct":
        x = op._pinned_lu().solve(rhs_full)
    else:
        C = op.pin_columns()
        B = sp.bmat([[op.matrix, sp.csr_matrix(C)], [sp.csr_matrix(C.T), None]], format="csr")
        x = _solve_linear(B, rhs_full, options, symmetric_posdef=False)
    u = x[:op.ndof]
    C = op.pin_columns()
    _check_residual("neumann", op.matrix, u, rhs - C @ x[op.ndof:], options.tol)
    return Field(mesh, u.reshape(mesh.nnodes, m))


def solve_periodic(op: AssembledOperator, source=None,
                   options: SolverOptions = DEFAULT_SOLVER) -> Field:
    """Solve on the torus with the volume-mean pin per component."""
    if op.mode != "periodic":
        raise ValueError(f"operator assembled in mode {op.mode!r}, need 'periodic'")
    mesh, m = op.mesh, op.m
    load = _as_load_vector(mesh, source, m)
    rhs_full = np.concatenate([load, np.zeros(m)])
    if op._lu is not None or options.kind == "direct":
        x = op._pinned_lu().solve(rhs_full)
    else:
        C = op.pin_columns()
        B = sp.bmat([[op.matrix, sp.csr_matrix(C)], [sp.csr_matrix(C.T), None]], format="csr")
        x = _solve_linear(B, rhs_full, options, symmetric_posdef=False)
    u = x[:op.ndof]
    C = op.pin_columns()
    _check_residual("periodic", op.matrix, u, load - C @ x[op.ndof:], options.tol)
    return Field(mesh, u.reshape(mesh.nnodes, m))


def conormal(u: Field, op: AssembledOperator, source=None):
    """Variational conormal flux of u on the boundary, in boundary order.

    For every boundary hat function phi, <flux, phi> = a(u, phi) - (source, phi);
    returned as nodal values against the lumped arc weights.  Corner nodes
    receive the mean of the two adjacent edge contributions automatically.
    """
    mesh, m = op.mesh, op.m
    load = _as_load_vector(mesh, source, m)
    functional = op.matrix @ u.values.ravel() - load
    out = functional.reshape(mesh.nnodes, m)[mesh.boundary_nodes]
    return out / mesh.arc_weights[:, None]


# ---------------------------------------------------------------------------
# norms and derivative recovery


def _gauss_field_and_grad(mesh, values):
    at_nodes = values[mesh.elem_dofs]                    # (nelem, 4, m)
    vals = np.einsum("gp,epa->ega", PHI, at_nodes)
    grads = np.einsum("gip,epa->egia", DPHI, at_nodes) / mesh.h
    return vals, grads


def norm(u: Field, kind="Lp", p=2.0):
    """Norms by elementwise Gauss quadrature / lumped arc quadrature.

    kind: 'Lp' (volume), 'W1p' (volume, value + gradient), 'Lp_boundary',
    'H1_boundary' (arc-length tangential differences), 'weighted_grad'
    (gradient squared weighted by dist(x, boundary)).  Boundary norms
    exclude the four corner nodes.
    """
    mesh = u.mesh
    vals = u.values
    if not np.all(np.isfinite(vals)):
        raise ValueError("norm of a field with non-finite entries")
    if p < 1:
        raise ValueError(f"need p >= 1, got {p}")
    h2 = mesh.h ** 2

    if kind in ("Lp", "W1p"):
        vg, gg = _gauss_field_and_grad(mesh, vals)
        if np.isinf(p):
            vmax = np.abs(vals).max()
            if kind == "Lp":
                return float(vmax)
            return float(max(vmax, np.sqrt((gg ** 2).sum(axis=2)).max()))
        vmag = np.sqrt((vg ** 2).sum(axis=2))
        term = h2 * (GAUSS_WEIGHTS[None, :] * vmag ** p).sum()
        if kind == "W1p":
            gmag = np.sqrt((gg ** 2).sum(axis=(2, 3)))
            term += h2 * (GAUSS_WEIGHTS[None, :] * gmag ** p).sum()
        return float(term ** (1.0 / p))

    if kind == "weighted_grad":
        _, gg = _gauss_field_and_grad(mesh, vals)
        dist = mesh.dist_to_boundary(mesh.gauss_points())
        gmag2 = (gg ** 2).sum(axis=(2, 3))
        return float(np.sqrt(h2 * (GAUSS_WEIGHTS[None, :] * gmag2 * dist).sum()))

    if kind in ("Lp_boundary", "H1_boundary"):
        fb = vals[mesh.boundary_nodes]
        mask = mesh.noncorner_mask
        w = mesh.arc_weights[mask]
        fmag = np.sqrt((fb[mask] ** 2).sum(axis=1))
        if kind == "Lp_boundary":
            if np.isinf(p):
                return float(fmag.max())
            return float((w * fmag ** p).sum() ** (1.0 / p))
        dt = tangential_derivative(mesh, fb, 1, 2)
        dmag = np.sqrt((dt[mask] ** 2).sum(axis=1))
        return float(np.sqrt((w * fmag ** 2).sum() + (w * dmag ** 2).sum()))

    raise ValueError(f"unknown norm kind {kind!r}")


def nodal_gradient(mesh, values):
    """Recover nodal gradients: centered differences inside, second-order
    one-sided at the square's boundary, periodic wrap on the torus.

    values (nnodes, m) -> (nnodes, 2, m).
    """
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    m = values.shape[1]
    if mesh.is_torus:
        n = mesh.n
        arr = values.reshape(n, n, m)
        gx = (np.roll(arr, -1, axis=1) - np.roll(arr, 1, axis=1)) / (2 * mesh.h)
        gy = (np.roll(arr, -1, axis=0) - np.roll(arr, 1, axis=0)) / (2 * mesh.h)
    else:
        N = mesh.n + 1
        arr = values.reshape(N, N, m)
        gx = np.gradient(arr, mesh.h, axis=1, edge_order=2)
        gy = np.gradient(arr, mesh.h, axis=0, edge_order=2)
    out = np.stack([gx.reshape(-1, m), gy.reshape(-1, m)], axis=1)
    return out


def interp_torus(grid: TorusGrid, table, pts):
    """Bilinear interpolation of a nodal torus table at wrapped points.

    table: (nnodes,) or (nnodes, K); pts: (npts, 2). Returns (npts,) or (npts, K).
    """
    table = np.asarray(table, dtype=float)
    flat = table.reshape(grid.nnodes, -1)
    pts = np.asarray(pts, dtype=float)
    n = grid.n
    t = (pts / grid.h) % n
    i0 = np.floor(t).astype(np.int64) % n
    frac = t - np.floor(t)
    i1 = (i0 + 1) % n
    fx, fy = frac[:, 0:1], frac[:, 1:2]
    v00 = flat[i0[:, 1] * n + i0[:, 0]]
    v10 = flat[i0[:, 1] * n + i1[:, 0]]
    v01 = flat[i1[:, 1] * n + i0[:, 0]]
    v11 = flat[i1[:, 1] * n + i1[:, 0]]
    out = (v00 * (1 - fx) * (1 - fy) + v10 * fx * (1 - fy)
           + v01 * (1 - fx) * fy + v11 * fx * fy)
    return out.reshape(pts.shape[:-1] + table.shape[1:])


def tangential_derivative(mesh, fb, i, j):
    """df/dt_ij = n_i df/dx_j - n_j df/dx_i on the boundary.

    fb: (n_boundary, m) in boundary order.  On the square this is (for
    (i,j) = (1,2)) the counterclockwise arc-length derivative, computed by
    centered differences along each edge; corner nodes get zero (no normal).
    Indices i, j are 1-based.
    """
    fb = np.asarray(fb, dtype=float)
    if fb.ndim == 1:
        fb = fb[:, None]
    if i == j:
        return np.zeros_like(fb)
    sign = 1.0 if (i, j) == (1, 2) else -1.0 if (i, j) == (2, 1) else None
    if sign is None:
        raise ValueError(f"indices must be in {{1,2}}, got ({i},{j})")
    out = np.zeros_like(fb)
    h = mesh.h
    for edge in range(4):
        pos = mesh.edge_positions(edge)
        vals = fb[pos]
        deriv = np.zeros_like(vals)
        deriv[1:-1] = (vals[2:] - vals[:-2]) / (2 * h)
        out[pos[1:-1]] = deriv[1:-1]
    return sign * out


def boundary_values(mesh, field_or_values):
    vals = field_or_values.values if isinstance(field_or_values, Field) else np.asarray(field_or_values)
    if vals.ndim == 1:
        vals = vals[:, None]
    return vals[mesh.boundary_nodes]
