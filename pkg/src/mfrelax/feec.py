"""Lowest-order tensor-product de Rham subcomplex on a structured hex mesh.

Degrees of freedom:
  H1     vertex values
  Hcurl  edge tangential circulations (lowest-order edge elements)
  Hdiv   face normal fluxes (lowest-order face elements)
  L2     cell indicator coefficients (pointwise value on the cell)

With these DOFs the differential operators act exactly as the signed
incidence matrices of the mesh.  Homogeneous boundary conditions are imposed
by eliminating boundary DOFs; all restricted operators act on interior-DOF
vectors only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import EvaluationError, LinearAlgebraError
from .mesh import StructuredHexMesh


class SpaceKind(Enum):
    H1 = "H1"
    HCURL = "Hcurl"
    HDIV = "Hdiv"
    L2 = "L2"


@dataclass(frozen=True)
class Space:
    kind: SpaceKind
    n_dofs: int
    boundary_mask: np.ndarray  # True on eliminated (boundary) DOFs
    interior: np.ndarray       # indices of retained DOFs

    @property
    def n_interior(self) -> int:
        return len(self.interior)


@dataclass
class FieldCoefficients:
    """Coefficient vector over the constrained (interior) DOFs of a space."""
    kind: SpaceKind
    values: np.ndarray

    def copy(self) -> "FieldCoefficients":
        return FieldCoefficients(self.kind, self.values.copy())


def gauss_rule(q: int) -> tuple[np.ndarray, np.ndarray]:
    """q-point Gauss-Legendre rule on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(q)
    return 0.5 * (x + 1.0), 0.5 * w


def _hat(t: np.ndarray) -> np.ndarray:
    # stacked (2, npts): value of the two 1D linear shape functions
    return np.stack([1.0 - t, t])


def _cell_dof_tables(mesh: StructuredHexMesh):
    """Global DOF indices per cell for each space, lexicographic cell order."""
    nx, ny, nz = mesh.nx, mesh.ny, mesh.nz
    K, J, I = np.meshgrid(np.arange(nz), np.arange(ny), np.arange(nx),
                          indexing="ij")
    i, j, k = I.ravel(), J.ravel(), K.ravel()

    verts = np.stack([mesh.vertex_index(i + a, j + b, k + c)
                      for c in (0, 1) for b in (0, 1) for a in (0, 1)], axis=1)

    # 12 edges: x-family at (y,z) corners (b,c), then y-family (a,c), z-family (a,b)
    edges = np.stack(
        [mesh.edge_index(0, i, j + b, k + c) for (b, c) in
         [(0, 0), (1, 0), (0, 1), (1, 1)]] +
        [mesh.edge_index(1, i + a, j, k + c) for (a, c) in
         [(0, 0), (1, 0), (0, 1), (1, 1)]] +
        [mesh.edge_index(2, i + a, j + b, k) for (a, b) in
         [(0, 0), (1, 0), (0, 1), (1, 1)]], axis=1)

    faces = np.stack(
        [mesh.face_index(0, i, j, k), mesh.face_index(0, i + 1, j, k),
         mesh.face_index(1, i, j, k), mesh.face_index(1, i, j + 1, k),
         mesh.face_index(2, i, j, k), mesh.face_index(2, i, j, k + 1)], axis=1)

    cells = mesh.cell_index(i, j, k)[:, None]
    return verts, edges, faces, cells


def _local_values(mesh: StructuredHexMesh, xi, eta, zeta, kind: SpaceKind):
    """Local basis values at reference points; shape (npts, nldof, ncomp)."""
    hx, hy, hz = mesh.spacing
    lx, ly, lz = _hat(xi), _hat(eta), _hat(zeta)
    npts = len(xi)
    if kind is SpaceKind.H1:
        vals = np.zeros((npts, 8, 1))
        d = 0
        for c in (0, 1):
            for b in (0, 1):
                for a in (0, 1):
                    vals[:, d, 0] = lx[a] * ly[b] * lz[c]
                    d += 1
        return vals
    if kind is SpaceKind.HCURL:
        vals = np.zeros((npts, 12, 3))
        for d, (b, c) in enumerate([(0, 0), (1, 0), (0, 1), (1, 1)]):
            vals[:, d, 0] = ly[b] * lz[c] / hx
        for d, (a, c) in enumerate([(0, 0), (1, 0), (0, 1), (1, 1)]):
            vals[:, 4 + d, 1] = lx[a] * lz[c] / hy
        for d, (a, b) in enumerate([(0, 0), (1, 0), (0, 1), (1, 1)]):
            vals[:, 8 + d, 2] = lx[a] * ly[b] / hz
        return vals
    if kind is SpaceKind.HDIV:
        vals = np.zeros((npts, 6, 3))
        vals[:, 0, 0] = lx[0] / (hy * hz)
        vals[:, 1, 0] = lx[1] / (hy * hz)
        vals[:, 2, 1] = ly[0] / (hz * hx)
        vals[:, 3, 1] = ly[1] / (hz * hx)
        vals[:, 4, 2] = lz[0] / (hx * hy)
        vals[:, 5, 2] = lz[1] / (hx * hy)
        return vals
    # L2: cell indicator
    return np.ones((npts, 1, 1))


@dataclass
class QuadratureEval:
    """Pointwise evaluation operators for one tensor Gauss rule.

    ``op[kind] @ coeffs`` yields field values at all quadrature points,
    flattened as (cell, point, component); ``weights`` holds one integration
    weight per point (Jacobian included).
    """
    npts_per_cell: int
    weights: np.ndarray                      # (ncells * npts_per_cell,)
    points: np.ndarray                       # (ncells * npts_per_cell, 3)
    ops: dict                                 # SpaceKind -> csr matrix (full DOFs)

    def values(self, kind: SpaceKind, coeffs_full: np.ndarray) -> np.ndarray:
        v = self.ops[kind] @ coeffs_full
        ncomp = 1 if kind in (SpaceKind.H1, SpaceKind.L2) else 3
        return v.reshape(-1, ncomp)


def _build_quadrature_eval(mesh: StructuredHexMesh, q: int) -> QuadratureEval:
    t, w = gauss_rule(q)
    Zc, Yc, Xc = np.meshgrid(t, t, t, indexing="ij")
    xi, eta, zeta = Xc.ravel(), Yc.ravel(), Zc.ravel()
    wq = (w[None, None, :] * w[None, :, None] * w[:, None, None]).ravel()
    npc = q ** 3
    hx, hy, hz = mesh.spacing
    vol = hx * hy * hz

    verts, edges, faces, cells = _cell_dof_tables(mesh)
    ncells = mesh.n_cells

    # physical quadrature points
    d = mesh.domain
    K, J, I = np.meshgrid(np.arange(mesh.nz), np.arange(mesh.ny),
                          np.arange(mesh.nx), indexing="ij")
    x0 = d.x_min + I.ravel() * hx
    y0 = d.y_min + J.ravel() * hy
    z0 = d.z_min + K.ravel() * hz
    pts = np.empty((ncells, npc, 3))
    pts[:, :, 0] = x0[:, None] + xi[None, :] * hx
    pts[:, :, 1] = y0[:, None] + eta[None, :] * hy
    pts[:, :, 2] = z0[:, None] + zeta[None, :] * hz

    weights = np.tile(wq * vol, ncells)

    dof_tables = {SpaceKind.H1: verts, SpaceKind.HCURL: edges,
                  SpaceKind.HDIV: faces, SpaceKind.L2: cells}
    sizes = {SpaceKind.H1: mesh.n_vertices, SpaceKind.HCURL: mesh.n_edges,
             SpaceKind.HDIV: mesh.n_faces, SpaceKind.L2: mesh.n_cells}
    ops = {}
    for kind, table in dof_tables.items():
        loc = _local_values(mesh, xi, eta, zeta, kind)  # (npc, nldof, ncomp)
        npts, nldof, ncomp = loc.shape
        nrows = ncells * npc * ncomp
        # row = ((cell * npc + pt) * ncomp + comp), col = table[cell, ldof]
        data = np.broadcast_to(loc.transpose(0, 2, 1)[None],
                               (ncells, npc, ncomp, nldof)).ravel()
        rows = np.repeat(np.arange(nrows), nldof)
        cols = np.broadcast_to(table[:, None, None, :],
                               (ncells, npc, ncomp, nldof)).ravel()
        ops[kind] = sp.csr_matrix((data, (rows, cols)),
                                  shape=(nrows, sizes[kind]))
    return QuadratureEval(npc, weights, pts.reshape(-1, 3), ops)


def _mass(qe: QuadratureEval, kind_test: SpaceKind, kind_trial: SpaceKind):
    ncomp = 1 if kind_test in (SpaceKind.H1, SpaceKind.L2) else 3
    w = np.repeat(qe.weights, ncomp)
    Gt, Gr = qe.ops[kind_test], qe.ops[kind_trial]
    M = (Gt.T @ sp.diags(w) @ Gr).tocsr()
    M.eliminate_zeros()
    return M


@dataclass
class OperatorSet:
    """Incidence and mass matrices of the discrete subcomplex.

    Full operators act on all DOFs; the ``*_int`` variants are restricted to
    interior DOFs (homogeneous boundary conditions by elimination).
    """
    mesh: StructuredHexMesh
    spaces: dict = field(default_factory=dict)

    # populated by assemble_operators
    grad_full: sp.csr_matrix = None
    curl_full: sp.csr_matrix = None
    div_full: sp.csr_matrix = None
    grad_int: sp.csr_matrix = None
    curl_int: sp.csr_matrix = None
    div_int: sp.csr_matrix = None

    mass_h1: sp.csr_matrix = None
    mass_hcurl: sp.csr_matrix = None
    mass_hdiv: sp.csr_matrix = None
    mass_l2: sp.csr_matrix = None
    mass_mixed: sp.csr_matrix = None      # Hcurl-test x Hdiv-trial

    mass_h1_int: sp.csr_matrix = None
    mass_hcurl_int: sp.csr_matrix = None
    mass_hdiv_int: sp.csr_matrix = None
    mass_mixed_int: sp.csr_matrix = None

    quad_mass: QuadratureEval = None
    quad_nl: QuadratureEval = None        # for nonlinear (cross-product) terms

    def space(self, kind: SpaceKind) -> Space:
        return self.spaces[kind]

    def field(self, kind: SpaceKind, values: np.ndarray) -> FieldCoefficients:
        values = np.asarray(values, dtype=float)
        if len(values) != self.space(kind).n_interior:
            raise ValueError(
                f"coefficient length {len(values)} does not match interior "
                f"DOF count {self.space(kind).n_interior} of {kind.value}")
        return FieldCoefficients(kind, values)

    def zero_field(self, kind: SpaceKind) -> FieldCoefficients:
        return FieldCoefficients(kind, np.zeros(self.space(kind).n_interior))

    def expand(self, f: FieldCoefficients) -> np.ndarray:
        """Interior coefficients -> full DOF vector (zeros on boundary)."""
        full = np.zeros(self.space(f.kind).n_dofs)
        full[self.space(f.kind).interior] = f.values
        return full

    def restrict(self, kind: SpaceKind, full: np.ndarray) -> np.ndarray:
        return full[self.space(kind).interior]

    # pointwise evaluation at the nonlinear-quadrature points
    def nl_values(self, f: FieldCoefficients) -> np.ndarray:
        return self.quad_nl.values(f.kind, self.expand(f))


def assemble_operators(mesh: StructuredHexMesh, quad_mass: int = 2,
                       quad_nonlinear: int = 3) -> OperatorSet:
    """Assemble the full operator set for a mesh."""
    ops = OperatorSet(mesh)

    int_v = np.flatnonzero(~mesh.boundary_vertices)
    int_e = np.flatnonzero(~mesh.boundary_edges)
    int_f = np.flatnonzero(~mesh.boundary_faces)
    all_c = np.arange(mesh.n_cells)
    ops.spaces = {
        SpaceKind.H1: Space(SpaceKind.H1, mesh.n_vertices,
                            mesh.boundary_vertices.copy(), int_v),
        SpaceKind.HCURL: Space(SpaceKind.HCURL, mesh.n_edges,
                               mesh.boundary_edges.copy(), int_e),
        SpaceKind.HDIV: Space(SpaceKind.HDIV, mesh.n_faces,
                              mesh.boundary_faces.copy(), int_f),
        SpaceKind.L2: Space(SpaceKind.L2, mesh.n_cells,
                            np.zeros(mesh.n_cells, dtype=bool), all_c),
    }

    ops.grad_full = mesh.grad_incidence
    ops.curl_full = mesh.curl_incidence
    ops.div_full = mesh.div_incidence
    ops.grad_int = mesh.grad_incidence[int_e][:, int_v].astype(float).tocsr()
    ops.curl_int = mesh.curl_incidence[int_f][:, int_e].astype(float).tocsr()
    ops.div_int = mesh.div_incidence[:, int_f].astype(float).tocsr()

    qe = _build_quadrature_eval(mesh, quad_mass)
    ops.quad_mass = qe
    ops.quad_nl = _build_quadrature_eval(mesh, quad_nonlinear)

    ops.mass_h1 = _mass(qe, SpaceKind.H1, SpaceKind.H1)
    ops.mass_hcurl = _mass(qe, SpaceKind.HCURL, SpaceKind.HCURL)
    ops.mass_hdiv = _mass(qe, SpaceKind.HDIV, SpaceKind.HDIV)
    ops.mass_l2 = _mass(qe, SpaceKind.L2, SpaceKind.L2)
    ops.mass_mixed = _mass(qe, SpaceKind.HCURL, SpaceKind.HDIV)

    ops.mass_h1_int = ops.mass_h1[int_v][:, int_v].tocsr()
    ops.mass_hcurl_int = ops.mass_hcurl[int_e][:, int_e].tocsr()
    ops.mass_hdiv_int = ops.mass_hdiv[int_f][:, int_f].tocsr()
    ops.mass_mixed_int = ops.mass_mixed[int_e][:, int_f].tocsr()
    return ops


# ---------------------------------------------------------------------------
# canonical interpolation
# ---------------------------------------------------------------------------

def interpolate(mesh: StructuredHexMesh, analytic_field, kind: SpaceKind,
                q: int = 5) -> np.ndarray:
    """Canonical DOF interpolation of an analytic vector field.

    Hcurl DOFs are tangential line integrals over edges, Hdiv DOFs are
    normal flux integrals over faces; both use q-point Gauss per direction.
    Returns the full (unmasked) DOF vector.
    """
    if kind not in (SpaceKind.HCURL, SpaceKind.HDIV):
        raise ValueError("interpolation implemented for Hcurl and Hdiv only")
    t, w = gauss_rule(q)
    hx, hy, hz = mesh.spacing
    d = mesh.domain
    h = (hx, hy, hz)
    origin = (d.x_min, d.y_min, d.z_min)
    nx, ny, nz = mesh.nx, mesh.ny, mesh.nz

    def axis_coords(n, a):
        return origin[a] + np.arange(n + 1) * h[a]

    def eval_field(pts):
        vals = np.asarray(analytic_field(pts), dtype=float)
        if not np.all(np.isfinite(vals)):
            raise EvaluationError("analytic field returned non-finite values")
        return vals

    if kind is SpaceKind.HCURL:
        out = np.zeros(mesh.n_edges)
        dims = [(nx, ny + 1, nz + 1), (nx + 1, ny, nz + 1),
                (nx + 1, ny + 1, nz)]
        for a in range(3):
            ni, nj, nk = dims[a]
            K, J, I = np.meshgrid(np.arange(nk), np.arange(nj), np.arange(ni),
                                  indexing="ij")
            i, j, k = I.ravel(), J.ravel(), K.ravel()
            base = np.column_stack([axis_coords(nx, 0)[i],
                                    axis_coords(ny, 1)[j],
                                    axis_coords(nz, 2)[k]])
            pts = np.repeat(base, q, axis=0)
            pts[:, a] += np.tile(t * h[a], len(base))
            vals = eval_field(pts)[:, a].reshape(-1, q)
            integ = vals @ (w * h[a])
            out[mesh.edge_index(a, i, j, k)] = integ
        return out

    out = np.zeros(mesh.n_faces)
    fdims = [((nx + 1), ny, nz), (nx, (ny + 1), nz), (nx, ny, (nz + 1))]
    T1, T2 = np.meshgrid(t, t, indexing="ij")
    W2 = np.outer(w, w).ravel()
    for a in range(3):
        b, c = (a + 1) % 3, (a + 2) % 3
        ni, nj, nk = fdims[a]
        K, J, I = np.meshgrid(np.arange(nk), np.arange(nj), np.arange(ni),
                              indexing="ij")
        i, j, k = I.ravel(), J.ravel(), K.ravel()
        base = np.column_stack([axis_coords(nx, 0)[i],
                                axis_coords(ny, 1)[j],
                                axis_coords(nz, 2)[k]])
        nq2 = q * q
        pts = np.repeat(base, nq2, axis=0)
        pts[:, b] += np.tile(T1.ravel() * h[b], len(base))
        pts[:, c] += np.tile(T2.ravel() * h[c], len(base))
        vals = eval_field(pts)[:, a].reshape(-1, nq2)
        integ = vals @ (W2 * h[b] * h[c])
        out[mesh.face_index(a, i, j, k)] = integ
    return out


def interpolate_bc(ops: OperatorSet, analytic_field, kind: SpaceKind,
                   q: int = 5) -> FieldCoefficients:
    """Interpolate and restrict to interior DOFs (zeroing boundary DOFs)."""
    full = interpolate(ops.mesh, analytic_field, kind, q=q)
    return ops.field(kind, ops.restrict(kind, full))


def l2_project_div_to_curl(ops: OperatorSet,
                           B: FieldCoefficients) -> FieldCoefficients:
    """L2 projection of an Hdiv field onto the constrained Hcurl space."""
    if B.kind is not SpaceKind.HDIV:
        raise TypeError("expected Hdiv coefficients")
    rhs = ops.mass_mixed_int @ B.values
    H = spla.spsolve(ops.mass_hcurl_int.tocsc(), rhs)
    res = np.linalg.norm(ops.mass_hcurl_int @ H - rhs)
    if res > 1e-12 * max(1.0, np.linalg.norm(rhs)):
        raise LinearAlgebraError("projection solve residual too large")
    return ops.field(SpaceKind.HCURL, H)
