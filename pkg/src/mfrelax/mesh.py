"""Structured, axis-aligned hexahedral mesh of a cuboid.

Entities are numbered lexicographically with x fastest.  Edges are oriented
along increasing coordinate; faces carry the normal along increasing
coordinate.  With this fixed global convention the discrete grad/curl/div
operators are integer-valued signed incidence matrices (see feec module).

Edge families are ordered x-edges, y-edges, z-edges; face families x-faces
(normal x), y-faces, z-faces.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError


@dataclass(frozen=True)
class CuboidDomain:
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    z_min: float
    z_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max
                and self.z_min < self.z_max):
            raise ConfigError("degenerate cuboid domain: need min < max per axis")

    @property
    def lengths(self) -> tuple[float, float, float]:
        return (self.x_max - self.x_min, self.y_max - self.y_min,
                self.z_max - self.z_min)

    @property
    def volume(self) -> float:
        lx, ly, lz = self.lengths
        return lx * ly * lz


@dataclass(frozen=True)
class EntityRef:
    """A mesh entity with a relative orientation sign."""
    dimension: int
    index: int
    sign: int = 1


def _lex(i, j, k, ni, nj):
    # lexicographic index, x fastest
    return i + ni * (j + nj * k)


@dataclass
class StructuredHexMesh:
    domain: CuboidDomain
    nx: int
    ny: int
    nz: int

    # derived entity counts
    n_vertices: int = field(init=False)
    n_edges: int = field(init=False)
    n_faces: int = field(init=False)
    n_cells: int = field(init=False)

    def __post_init__(self):
        if min(self.nx, self.ny, self.nz) < 1:
            raise ConfigError("cell counts must be positive")
        nx, ny, nz = self.nx, self.ny, self.nz
        self.n_vertices = (nx + 1) * (ny + 1) * (nz + 1)
        self._n_edges_xyz = (nx * (ny + 1) * (nz + 1),
                             (nx + 1) * ny * (nz + 1),
                             (nx + 1) * (ny + 1) * nz)
        self._n_faces_xyz = ((nx + 1) * ny * nz,
                             nx * (ny + 1) * nz,
                             nx * ny * (nz + 1))
        self.n_edges = sum(self._n_edges_xyz)
        self.n_faces = sum(self._n_faces_xyz)
        self.n_cells = nx * ny * nz
        self.spacing = (
            (self.domain.x_max - self.domain.x_min) / nx,
            (self.domain.y_max - self.domain.y_min) / ny,
            (self.domain.z_max - self.domain.z_min) / nz,
        )
        self._build_incidence()
        self._build_boundary_flags()

    # ----- index helpers -------------------------------------------------
    def vertex_index(self, i, j, k):
        return _lex(i, j, k, self.nx + 1, self.ny + 1)

    def edge_index(self, axis, i, j, k):
        nx, ny, nz = self.nx, self.ny, self.nz
        off = int(np.sum(self._n_edges_xyz[:axis]))
        if axis == 0:
            return off + _lex(i, j, k, nx, ny + 1)
        if axis == 1:
            return off + _lex(i, j, k, nx + 1, ny)
        return off + _lex(i, j, k, nx + 1, ny + 1)

    def face_index(self, axis, i, j, k):
        nx, ny, nz = self.nx, self.ny, self.nz
        off = int(np.sum(self._n_faces_xyz[:axis]))
        if axis == 0:
            return off + _lex(i, j, k, nx + 1, ny)
        if axis == 1:
            return off + _lex(i, j, k, nx, ny + 1)
        return off + _lex(i, j, k, nx, ny)

    def cell_index(self, i, j, k):
        return _lex(i, j, k, self.nx, self.ny)

    def vertex_coords(self) -> np.ndarray:
        """(n_vertices, 3) coordinates, lexicographic order."""
        d = self.domain
        xs = np.linspace(d.x_min, d.x_max, self.nx + 1)
        ys = np.linspace(d.y_min, d.y_max, self.ny + 1)
        zs = np.linspace(d.z_min, d.z_max, self.nz + 1)
        Z, Y, X = np.meshgrid(zs, ys, xs, indexing="ij")
        return np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])

    # ----- incidence matrices -------------------------------------------
    def _grids(self, ni, nj, nk):
        K, J, I = np.meshgrid(np.arange(nk), np.arange(nj), np.arange(ni),
                              indexing="ij")
        return I.ravel(), J.ravel(), K.ravel()

    def _build_incidence(self):
        nx, ny, nz = self.nx, self.ny, self.nz

        # grad: edges x vertices, edge = head - tail
        rows, cols, vals = [], [], []
        for axis, (ni, nj, nk) in enumerate([(nx, ny + 1, nz + 1),
                                             (nx + 1, ny, nz + 1),
                                             (nx + 1, ny + 1, nz)]):
            i, j, k = self._grids(ni, nj, nk)
            e = self.edge_index(axis, i, j, k)
            di = [0, 0, 0]
            di[axis] = 1
            tail = self.vertex_index(i, j, k)
            head = self.vertex_index(i + di[0], j + di[1], k + di[2])
            rows += [e, e]
            cols += [tail, head]
            vals += [-np.ones_like(e), np.ones_like(e)]
        self.grad_incidence = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.n_edges, self.n_vertices), dtype=np.int64)

        # curl: faces x edges.  For a face with normal along axis a and
        # in-plane axes (b, c) = cyclic(a), the oriented boundary loop is
        # +E_b(at c low), +E_c(at b high), -E_b(at c high), -E_c(at b low).
        rows, cols, vals = [], [], []
        face_dims = [((nx + 1), ny, nz), (nx, (ny + 1), nz), (nx, ny, (nz + 1))]
        for a in range(3):
            b, c = (a + 1) % 3, (a + 2) % 3
            ni, nj, nk = face_dims[a]
            i, j, k = self._grids(ni, nj, nk)
            f = self.face_index(a, i, j, k)
            ijk = [i, j, k]

            def shifted(axis, by):
                s = [ijk[0].copy(), ijk[1].copy(), ijk[2].copy()]
                s[axis] = s[axis] + by
                return s

            for edge_axis, shift_axis, by, sgn in [
                    (b, c, 0, +1), (c, b, 1, +1), (b, c, 1, -1), (c, b, 0, -1)]:
                s = shifted(shift_axis, by)
                e = self.edge_index(edge_axis, s[0], s[1], s[2])
                rows.append(f)
                cols.append(e)
                vals.append(sgn * np.ones_like(f))
        self.curl_incidence = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.n_faces, self.n_edges), dtype=np.int64)

        # div: cells x faces, outflow positive
        rows, cols, vals = [], [], []
        i, j, k = self._grids(nx, ny, nz)
        cidx = self.cell_index(i, j, k)
        for a in range(3):
            di = [0, 0, 0]
            di[a] = 1
            lo = self.face_index(a, i, j, k)
            hi = self.face_index(a, i + di[0], j + di[1], k + di[2])
            rows += [cidx, cidx]
            cols += [lo, hi]
            vals += [-np.ones_like(cidx), np.ones_like(cidx)]
        self.div_incidence = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.n_cells, self.n_faces), dtype=np.int64)

    # ----- boundary flags ------------------------------------------------
    def _build_boundary_flags(self):
        nx, ny, nz = self.nx, self.ny, self.nz

        vb = np.zeros(self.n_vertices, dtype=bool)
        i, j, k = self._grids(nx + 1, ny + 1, nz + 1)
        vb[self.vertex_index(i, j, k)] = ((i == 0) | (i == nx) | (j == 0)
                                          | (j == ny) | (k == 0) | (k == nz))
        self.boundary_vertices = vb

        eb = np.zeros(self.n_edges, dtype=bool)
        dims = [(nx, ny + 1, nz + 1), (nx + 1, ny, nz + 1), (nx + 1, ny + 1, nz)]
        tmax = [(ny, nz), (nz, nx), (nx, ny)]
        for a in range(3):
            ni, nj, nk = dims[a]
            i, j, k = self._grids(ni, nj, nk)
            ijk = [i, j, k]
            t1, t2 = (a + 1) % 3, (a + 2) % 3
            m1, m2 = tmax[a]
            eb[self.edge_index(a, i, j, k)] = ((ijk[t1] == 0) | (ijk[t1] == m1)
                                               | (ijk[t2] == 0) | (ijk[t2] == m2))
        self.boundary_edges = eb

        fb = np.zeros(self.n_faces, dtype=bool)
        fdims = [((nx + 1), ny, nz), (nx, (ny + 1), nz), (nx, ny, (nz + 1))]
        fmax = [nx, ny, nz]
        for a in range(3):
            ni, nj, nk = fdims[a]
            i, j, k = self._grids(ni, nj, nk)
            ijk = [i, j, k]
            fb[self.face_index(a, i, j, k)] = (ijk[a] == 0) | (ijk[a] == fmax[a])
        self.boundary_faces = fb

    # ----- entity boundary queries --------------------------------------
    def incidence(self, entity: EntityRef) -> list[EntityRef]:
        """Signed boundary entities one dimension down."""
        counts = {0: self.n_vertices, 1: self.n_edges, 2: self.n_faces,
                  3: self.n_cells}
        if entity.dimension not in counts:
            raise IndexError(f"invalid entity dimension {entity.dimension}")
        if not (0 <= entity.index < counts[entity.dimension]):
            raise IndexError(
                f"entity index {entity.index} out of range for dimension "
                f"{entity.dimension}")
        if entity.dimension == 0:
            return []
        mat = {1: self.grad_incidence, 2: self.curl_incidence,
               3: self.div_incidence}[entity.dimension]
        row = mat.getrow(entity.index)
        return [EntityRef(entity.dimension - 1, int(c), entity.sign * int(v))
                for c, v in zip(row.indices, row.data)]

    # ----- misc ----------------------------------------------------------
    def euler_characteristic(self) -> int:
        return self.n_vertices - self.n_edges + self.n_faces - self.n_cells

    def cell_volume(self) -> float:
        hx, hy, hz = self.spacing
        return hx * hy * hz


def build_mesh(domain: CuboidDomain, nx: int, ny: int, nz: int) -> StructuredHexMesh:
    """Build a structured hex mesh; raises ConfigError on invalid input."""
    return StructuredHexMesh(domain, nx, ny, nz)


def box(half_xy: float = 4.0, half_z: float = 10.0) -> CuboidDomain:
    """The (-a, a)^2 x (-Z, Z) computational cuboid."""
    return CuboidDomain(-half_xy, half_xy, -half_xy, half_xy, -half_z, half_z)
