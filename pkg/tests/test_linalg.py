import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from mfrelax import (BlockPreconditioner, BlockSaddleSystem, DirectSolver,
                     FactorizationError, LinearOperator, SchurDegeneracyError,
                     SolverConfig, fgmres, solve_saddle,
                     solve_saddle_monolithic)


def test_direct_solver_residual_verified(rng):
    A = rng.standard_normal((30, 30)) + 30 * np.eye(30)
    x = rng.standard_normal(30)
    b = A @ x
    assert np.allclose(DirectSolver(A).solve(b), x, atol=1e-10)


def test_direct_solver_sparse(rng):
    A = sp.diags([2.0] * 50) + sp.random(50, 50, density=0.1,
                                         random_state=np.random.RandomState(0))
    x = rng.standard_normal(50)
    assert np.allclose(DirectSolver(A.tocsc()).solve(A @ x), x, atol=1e-9)


@pytest.mark.filterwarnings("ignore::scipy.linalg.LinAlgWarning")
def test_singular_matrix_raises():
    A = np.zeros((4, 4))
    with pytest.raises(FactorizationError):
        DirectSolver(A).solve(np.ones(4))


def test_nonsquare_rejected():
    with pytest.raises(FactorizationError):
        DirectSolver(np.zeros((3, 4)))


def test_fgmres_three_distinct_eigenvalues(rng):
    # unpreconditioned GMRES terminates in (number of distinct eigenvalues)
    Q, _ = np.linalg.qr(rng.standard_normal((40, 40)))
    lam = np.array([1.0] * 20 + [2.0] * 15 + [5.0] * 5)
    A = Q @ np.diag(lam) @ Q.T
    b = rng.standard_normal(40)
    res = fgmres(LinearOperator.from_matrix(A), LinearOperator.identity(40),
                 b, SolverConfig(outer_tol=1e-12))
    assert res.converged and res.iterations <= 3
    assert np.allclose(A @ res.x, b, atol=1e-9)


def test_fgmres_zero_rhs():
    res = fgmres(LinearOperator.identity(5), LinearOperator.identity(5),
                 np.zeros(5))
    assert res.converged and res.iterations == 0
    assert np.array_equal(res.x, np.zeros(5))


def _random_saddle(rng, n=40, k=2):
    A = sp.csc_matrix(rng.standard_normal((n, n)) + n * np.eye(n))
    B = rng.standard_normal((n, k))
    C = rng.standard_normal((k, n))
    return BlockSaddleSystem(A, B, C, rng.standard_normal(n),
                             rng.standard_normal(k))


def test_saddle_solver_matches_monolithic(rng):
    sysm = _random_saddle(rng)
    x, iters = solve_saddle(sysm)
    y = solve_saddle_monolithic(sysm)
    assert np.allclose(x, y, atol=1e-8)


def test_saddle_no_multipliers_single_iteration(rng):
    # with an empty multiplier block the preconditioner is the exact inverse
    n = 30
    A = sp.csc_matrix(rng.standard_normal((n, n)) + n * np.eye(n))
    sysm = BlockSaddleSystem(A, np.zeros((n, 0)), np.zeros((0, n)),
                             rng.standard_normal(n), np.zeros(0))
    x, iters = solve_saddle(sysm)
    assert iters == 1
    assert np.allclose(A @ x[:n], sysm.rhs_fields, atol=1e-9)


def test_preconditioner_is_linear(rng):
    sysm = _random_saddle(rng)
    pre = BlockPreconditioner(sysm)
    r1, r2 = rng.standard_normal(sysm.n), rng.standard_normal(sysm.n)
    lhs = pre.apply(2.0 * r1 - 3.0 * r2)
    rhs = 2.0 * pre.apply(r1) - 3.0 * pre.apply(r2)
    assert np.allclose(lhs, rhs, atol=1e-10 * max(1, np.abs(rhs).max()))


def test_preconditioner_inverts_exactly(rng):
    # one application of the full block factorization solves the system
    sysm = _random_saddle(rng)
    pre = BlockPreconditioner(sysm)
    x = pre.apply(sysm.full_rhs())
    op = sysm.operator()
    assert np.allclose(op(x), sysm.full_rhs(), atol=1e-8)


def test_degenerate_schur_detected(rng):
    n = 20
    A = sp.csc_matrix(np.eye(n))
    B = rng.standard_normal((n, 1))
    C = np.zeros((1, n))          # Schur complement -C A^-1 B = 0
    sysm = BlockSaddleSystem(A, B, C, rng.standard_normal(n), np.ones(1))
    with pytest.raises(SchurDegeneracyError):
        BlockPreconditioner(sysm).apply(sysm.full_rhs())


def test_shape_validation():
    with pytest.raises(ValueError):
        BlockSaddleSystem(sp.eye(4).tocsc(), np.zeros((4, 2)),
                          np.zeros((1, 4)), np.zeros(4), np.zeros(2))


@given(st.integers(0, 2))
@settings(max_examples=3, deadline=None)
def test_saddle_multiplier_counts(k):
    rng = np.random.default_rng(42 + k)
    n = 25
    A = sp.csc_matrix(rng.standard_normal((n, n)) + n * np.eye(n))
    sysm = BlockSaddleSystem(A, rng.standard_normal((n, k)),
                             rng.standard_normal((k, n)),
                             rng.standard_normal(n), rng.standard_normal(k))
    x, _ = solve_saddle(sysm)
    mono = sysm.assemble_monolithic()
    assert np.allclose(mono @ x, sysm.full_rhs(), atol=1e-8)
