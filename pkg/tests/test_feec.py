import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mfrelax import (SpaceKind, assemble_operators, box, build_mesh,
                     interpolate)
from mfrelax.feec import gauss_rule


def test_gauss_rules_integrate_polynomials():
    for q in (1, 2, 3, 5):
        pts, w = gauss_rule(q)
        assert w.sum() == pytest.approx(1.0, abs=1e-14)
        for p in range(2 * q):  # exact through degree 2q-1 on [0, 1]
            assert w @ pts**p == pytest.approx(1.0 / (p + 1), abs=1e-13)


def test_l2_mass_is_cell_volumes(hopf_ops, hopf_mesh):
    diag = hopf_ops.mass_l2.diagonal()
    assert np.allclose(diag, hopf_mesh.cell_volume())
    assert diag.sum() == pytest.approx(hopf_mesh.domain.volume, rel=1e-14)


@pytest.mark.parametrize("kind", [SpaceKind.H1, SpaceKind.HCURL,
                                  SpaceKind.HDIV, SpaceKind.L2])
def test_mass_matrices_spd(tiny_ops, kind, rng):
    M = {SpaceKind.H1: tiny_ops.mass_h1, SpaceKind.HCURL: tiny_ops.mass_hcurl,
         SpaceKind.HDIV: tiny_ops.mass_hdiv,
         SpaceKind.L2: tiny_ops.mass_l2}[kind]
    asym = abs(M - M.T).max()
    assert asym < 1e-14
    for _ in range(5):
        x = rng.standard_normal(M.shape[0])
        assert x @ (M @ x) > 0


def test_quadrature_order_sufficient(tiny_mesh):
    # the default mass quadrature already integrates every product exactly
    lo = assemble_operators(tiny_mesh, quad_mass=2)
    hi = assemble_operators(tiny_mesh, quad_mass=5)
    for a, b in ((lo.mass_h1, hi.mass_h1), (lo.mass_hcurl, hi.mass_hcurl),
                 (lo.mass_hdiv, hi.mass_hdiv), (lo.mass_mixed, hi.mass_mixed)):
        assert abs(a - b).max() < 1e-13


def test_constant_field_interpolation_exact(hopf_mesh):
    const = np.array([0.3, -1.2, 0.7])
    full = interpolate(hopf_mesh, lambda p: np.broadcast_to(const, p.shape),
                       SpaceKind.HDIV)
    hx = hy = hz = 2.0
    areas = {0: hy * hz, 1: hx * hz, 2: hx * hy}
    nfx = (hopf_mesh.nx + 1) * hopf_mesh.ny * hopf_mesh.nz
    nfy = hopf_mesh.nx * (hopf_mesh.ny + 1) * hopf_mesh.nz
    assert np.allclose(full[:nfx], const[0] * areas[0], atol=1e-12)
    assert np.allclose(full[nfx:nfx + nfy], const[1] * areas[1], atol=1e-12)
    assert np.allclose(full[nfx + nfy:], const[2] * areas[2], atol=1e-12)


def test_curl_of_gradient_interpolant_vanishes(hopf_mesh, hopf_ops):
    # potential phi = x^2 y + z^3: curl(grad phi) = 0 transfers to DOFs
    # (polynomial, so the edge quadrature is exact and only roundoff remains)
    def gradient(p):
        out = np.empty_like(p)
        out[:, 0] = 2 * p[:, 0] * p[:, 1]
        out[:, 1] = p[:, 0] ** 2
        out[:, 2] = 3 * p[:, 2] ** 2
        return out

    circ = interpolate(hopf_mesh, gradient, SpaceKind.HCURL)
    fluxes = hopf_mesh.curl_incidence @ circ
    assert np.abs(fluxes).max() < 1e-12


def test_mixed_mass_curl_symmetry(hopf_ops):
    # (curl a, b)_mixed pairing is symmetric: discrete integration by parts
    K = hopf_ops.mass_mixed_int @ hopf_ops.curl_int
    assert abs(K - K.T).max() < 1e-13


def test_interior_complex_still_exact(hopf_ops):
    cg = hopf_ops.curl_int @ hopf_ops.grad_int
    dc = hopf_ops.div_int @ hopf_ops.curl_int
    assert abs(cg).max() == 0
    assert abs(dc).max() == 0


def test_interior_counts(hopf_ops):
    counts = [hopf_ops.space(k).n_interior
              for k in (SpaceKind.H1, SpaceKind.HCURL, SpaceKind.HDIV,
                        SpaceKind.L2)]
    assert counts == [81, 306, 384, 160]
    # alternating sum = -1: relative cohomology of the solid box
    assert counts[0] - counts[1] + counts[2] - counts[3] == -1


def test_field_length_validation(tiny_ops):
    with pytest.raises(ValueError):
        tiny_ops.field(SpaceKind.HDIV, np.zeros(3))


def test_expand_restrict_roundtrip(tiny_ops, rng):
    x = rng.standard_normal(tiny_ops.space(SpaceKind.HCURL).n_interior)
    f = tiny_ops.field(SpaceKind.HCURL, x)
    assert np.array_equal(
        tiny_ops.restrict(SpaceKind.HCURL, tiny_ops.expand(f)), x)


def test_interpolate_rejects_nonfinite(tiny_mesh):
    from mfrelax import EvaluationError

    def bad(p):
        out = np.ones_like(p)
        out[0, 0] = np.nan
        return out

    with pytest.raises(EvaluationError):
        interpolate(tiny_mesh, bad, SpaceKind.HDIV)


@given(st.integers(0, 1), st.integers(0, 1), st.integers(0, 1))
@settings(max_examples=8, deadline=None)
def test_linear_fields_divergence_free_discretely(px, py, pz):
    # divergence-free linear fields interpolate to solenoidal flux vectors
    mesh = build_mesh(box(1.0, 1.0), 2, 3, 2)
    coef = np.array([px, py, pz], dtype=float)
    coef[2] = -(coef[0] + coef[1])  # make div = 0

    def f(p):
        return p * coef

    full = interpolate(mesh, f, SpaceKind.HDIV)
    assert np.abs(mesh.div_incidence @ full).max() < 1e-12
