import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mfrelax import ConfigError, CuboidDomain, EntityRef, box, build_mesh

sizes = st.integers(min_value=1, max_value=4)


def test_entity_counts_benchmark(hopf_mesh):
    m = hopf_mesh
    assert (m.n_vertices, m.n_edges, m.n_faces, m.n_cells) == (275, 690,
                                                               576, 160)


def test_boundary_counts_benchmark(hopf_mesh):
    # 2*(4*4) + 2*(4*10) + 2*(4*10) faces on the six sides
    assert int(hopf_mesh.boundary_faces.sum()) == 192
    assert int((~hopf_mesh.boundary_faces).sum()) == 384


@given(nx=sizes, ny=sizes, nz=sizes)
@settings(max_examples=25, deadline=None)
def test_euler_characteristic(nx, ny, nz):
    m = build_mesh(box(1.0, 1.0), nx, ny, nz)
    assert m.euler_characteristic() == 1
    assert m.n_vertices - m.n_edges + m.n_faces - m.n_cells == 1


@given(nx=sizes, ny=sizes, nz=sizes)
@settings(max_examples=15, deadline=None)
def test_complex_exactness(nx, ny, nz):
    m = build_mesh(box(2.0, 3.0), nx, ny, nz)
    cg = m.curl_incidence @ m.grad_incidence
    dc = m.div_incidence @ m.curl_incidence
    assert cg.nnz == 0 or np.all(cg.data == 0)
    assert dc.nnz == 0 or np.all(dc.data == 0)


def test_incidence_entries_are_signed_units(hopf_mesh):
    for mat in (hopf_mesh.grad_incidence, hopf_mesh.curl_incidence,
                hopf_mesh.div_incidence):
        assert set(np.unique(mat.data)) <= {-1, 1}


def test_face_incidence_closes(hopf_mesh):
    # boundary of a face = 4 edges whose signed chain has zero boundary
    face = EntityRef(2, 17, 1)
    edges = hopf_mesh.incidence(face)
    assert len(edges) == 4
    total = np.zeros(hopf_mesh.n_vertices)
    for e in edges:
        for v in hopf_mesh.incidence(EntityRef(1, e.index, e.sign)):
            total[v.index] += v.sign
    assert np.all(total == 0)


def test_degenerate_domain_rejected():
    with pytest.raises(ConfigError):
        CuboidDomain(0.0, 0.0, -1.0, 1.0, -1.0, 1.0)
    with pytest.raises(ConfigError):
        build_mesh(box(1.0, 1.0), 0, 2, 2)


def test_cell_volume(hopf_mesh):
    assert hopf_mesh.cell_volume() == pytest.approx(2.0 * 2.0 * 2.0)
    assert hopf_mesh.domain.volume == pytest.approx(8.0 * 8.0 * 20.0)
