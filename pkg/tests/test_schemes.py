import numpy as np
import pytest

from mfrelax import (LagrangeMultiplierScheme, NewtonConfig, NewtonError,
                     NonConservativeScheme, ProjectionScheme, SchemeKind,
                     TimePhase, make_scheme, newton_solve, step_with_retry)
from mfrelax.schemes import _cross_operator


def test_time_phase_validation():
    with pytest.raises(ValueError):
        TimePhase(0.0, 1.0, 10)
    with pytest.raises(ValueError):
        TimePhase(1.0, -1.0, 10)
    with pytest.raises(ValueError):
        TimePhase(1.0, 1.0, 0)


def test_newton_config_validation():
    with pytest.raises(ValueError):
        NewtonConfig(abs_tol=0.0)


def test_newton_solve_quadratic_convergence():
    # scalar root of x^3 - 8: quadratic convergence reaches 1e-11 fast
    res = lambda x: np.array([x[0] ** 3 - 8.0])
    jsolve = lambda x, r: r / (3.0 * x[0] ** 2)
    x, iters = newton_solve(res, jsolve, np.array([3.0]),
                            NewtonConfig(abs_tol=1e-12, rel_tol=1e-14))
    assert x[0] == pytest.approx(2.0, abs=1e-12)
    assert iters <= 7


def test_newton_solve_nonconvergence_raises():
    res = lambda x: np.array([np.cos(x[0]) + 2.0])   # no root
    jsolve = lambda x, r: -r / max(np.sin(x[0]), 0.1)
    with pytest.raises(NewtonError):
        newton_solve(res, jsolve, np.array([0.5]), NewtonConfig(max_iter=5))


def test_cross_operator_algebra(rng):
    v = rng.standard_normal((7, 3))
    w = rng.standard_normal((7, 3))
    C = _cross_operator(v)
    assert np.allclose((C @ w.ravel()).reshape(-1, 3), np.cross(v, w))
    # antisymmetry: v x v = 0
    assert np.abs(C @ v.ravel()).max() < 1e-14


def test_make_scheme_dispatch(tiny_ops):
    assert isinstance(make_scheme(SchemeKind.NONCONSERVATIVE, tiny_ops),
                      NonConservativeScheme)
    assert isinstance(make_scheme(SchemeKind.PROJECTION, tiny_ops),
                      ProjectionScheme)
    lm = make_scheme(SchemeKind.LAGRANGE, tiny_ops, gamma=1e-3)
    assert isinstance(lm, LagrangeMultiplierScheme)
    assert lm.gamma == 1e-3


@pytest.mark.parametrize("cls", [NonConservativeScheme, ProjectionScheme])
def test_jacobian_matches_finite_differences(cls, hopf_ops, hopf_B0, rng):
    sch = cls(hopf_ops)
    n = (sch.nd + 2 * sch.nc if cls is NonConservativeScheme
         else 2 * sch.nd + 3 * sch.nc)
    x = 0.1 * rng.standard_normal(n)
    Bn, dt, tau = hopf_B0.values, 0.7, 0.9
    J = sch.jacobian(x, Bn, dt, tau)
    eps = 1e-5
    for _ in range(3):
        v = rng.standard_normal(n)
        fd = (sch.residual(x + eps * v, Bn, dt, tau)
              - sch.residual(x - eps * v, Bn, dt, tau)) / (2 * eps)
        err = np.abs(J @ v - fd).max() / max(1.0, np.abs(fd).max())
        assert err < 1e-6


@pytest.mark.parametrize("full_mode", [True, False])
def test_lagrange_jacobian_matches_finite_differences(full_mode, hopf_ops,
                                                      hopf_B0, rng):
    import scipy.sparse as sp
    sch = LagrangeMultiplierScheme(hopf_ops)
    st = sch.initial_state(hopf_B0)
    k = 2 if full_mode else 1
    nf = sch.n_fields
    x = np.concatenate([0.1 * rng.standard_normal(nf),
                        0.01 * rng.standard_normal(k)])
    args = (st.A.values, st.energy, st.helicity_ref, 0.7, 0.9, full_mode)
    Asp, Bc, Cr = sch.jacobian_blocks(x, 0.7, 0.9, full_mode)
    J = sp.bmat([[Asp, sp.csr_matrix(Bc)],
                 [sp.csr_matrix(Cr), sp.csr_matrix((k, k))]]).tocsr()
    eps = 1e-5
    for _ in range(3):
        v = rng.standard_normal(nf + k)
        fd = (sch.residual(x + eps * v, *args)
              - sch.residual(x - eps * v, *args)) / (2 * eps)
        err = np.abs(J @ v - fd).max() / max(1.0, np.abs(fd).max())
        assert err < 1e-6


def test_nonconservative_energy_identity(hopf_ops, hopf_B0):
    # per-step discrete energy balance: dE/dt = -2 tau ||j x B_mid||^2
    sch = NonConservativeScheme(hopf_ops)
    st = sch.initial_state(hopf_B0)
    for _ in range(3):
        prev = st
        st, rep = sch.step(st, 1.0, 1.0)
        Bm = 0.5 * (st.B.values + prev.B.values)
        jp = (sch.Gc @ st.j.values).reshape(-1, 3)
        Bp = (sch.Gd @ Bm).reshape(-1, 3)
        cr = np.cross(jp, Bp)
        Q = float(hopf_ops.quad_nl.weights @ np.sum(cr * cr, axis=1))
        # residual-limited: the identity holds to the Newton tolerance
        assert st.energy - prev.energy == pytest.approx(-2.0 * Q, abs=1e-10)
        assert rep.div_norm < 1e-14


def test_projection_conserves_helicity_stepwise(hopf_ops, hopf_B0):
    from mfrelax.diagnostics import helicity, recover_potential
    sch = ProjectionScheme(hopf_ops)
    st = sch.initial_state(hopf_B0)
    h0 = helicity(hopf_ops, recover_potential(hopf_ops, hopf_B0), hopf_B0)
    for _ in range(4):
        st, rep = sch.step(st, 1.0, 1.0)
        assert abs(rep.orthogonality) <= 1e-14 * max(1.0,
                                                     rep.orthogonality_scale)
    h = helicity(hopf_ops, recover_potential(hopf_ops, st.B), st.B)
    assert h == pytest.approx(h0, abs=1e-12)


def test_lagrange_step_conserves_and_reports(hopf_ops, hopf_B0):
    sch = LagrangeMultiplierScheme(hopf_ops)
    st = sch.initial_state(hopf_B0)
    assert st.helicity_ref == pytest.approx(0.08270649355507248, rel=1e-10)
    for _ in range(3):
        st, rep = sch.step(st, 1.0, 1.0)
        assert rep.helicity_residual < 1e-12
        assert rep.div_norm < 1e-14
        assert rep.mode in ("full", "reduced")
    assert st.lambda_H != 0.0


def test_lagrange_switching_modes(hopf_ops, hopf_B0):
    # huge gamma: every step after the first uses the full system
    sch = LagrangeMultiplierScheme(hopf_ops, gamma=1e6)
    st = sch.initial_state(hopf_B0)
    st, rep1 = sch.step(st, 1.0, 1.0)
    assert rep1.mode == "reduced"        # no previous energy rate yet
    st, rep2 = sch.step(st, 1.0, 1.0)
    assert rep2.mode == "full"
    assert rep2.energy_law_residual is not None
    assert abs(rep2.energy_law_residual) < 1e-9


def test_lagrange_literal_switch(hopf_ops, hopf_B0):
    # literal signed comparison: a decaying energy rate (negative) always
    # falls below gamma, so the full system engages from step 2
    sch = LagrangeMultiplierScheme(hopf_ops, gamma=9e-5, literal_switch=True)
    st = sch.initial_state(hopf_B0)
    st, _ = sch.step(st, 1.0, 1.0)
    st, rep = sch.step(st, 1.0, 1.0)
    assert rep.mode == "full"


def test_lagrange_capture(hopf_ops, hopf_B0):
    from mfrelax.linalg import solve_saddle, solve_saddle_monolithic
    sch = LagrangeMultiplierScheme(hopf_ops)
    sch.capture_every = 2
    st = sch.initial_state(hopf_B0)
    for _ in range(4):
        st, _ = sch.step(st, 1.0, 1.0)
    steps = [s for s, _ in sch.captured]
    assert steps == [2, 4]
    for _, sysm in sch.captured:
        x, _ = solve_saddle(sysm)
        y = solve_saddle_monolithic(sysm)
        assert np.abs(x - y).max() <= 1e-9 * max(1.0, np.abs(y).max())


class _FragileScheme:
    """Stub that fails above a dt threshold; exercises the retry logic."""

    def __init__(self, threshold):
        self.threshold = threshold
        self.calls = []

    def step(self, state, dt, tau):
        self.calls.append(dt)
        if dt > self.threshold:
            raise NewtonError("too big")
        from mfrelax.schemes import StepReport
        return state + dt, StepReport(dt, tau, 1, 0.0, 0.0)


def test_step_with_retry_halves():
    sch = _FragileScheme(threshold=0.3)
    state, reports = step_with_retry(sch, 0.0, 1.0, 1.0)
    assert state == pytest.approx(1.0)
    assert len(reports) == 4
    assert all(r.dt == 0.25 for r in reports)


def test_step_with_retry_exhausts():
    sch = _FragileScheme(threshold=0.01)
    with pytest.raises(NewtonError):
        step_with_retry(sch, 0.0, 1.0, 1.0, max_halvings=3)
