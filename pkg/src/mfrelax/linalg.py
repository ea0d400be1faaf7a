"""Linear solvers: direct factorization, flexible GMRES, and the block
factorization preconditioner for the multiplier saddle system.

The saddle system couples a large "physical field" block with a handful of
scalar multipliers.  The preconditioner factorizes the field block once and
applies the (tiny) Schur complement matrix-free through an inner GMRES
capped at two iterations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import FactorizationError, LinearAlgebraError, SchurDegeneracyError


@dataclass
class SolverConfig:
    outer_tol: float = 1e-10
    outer_maxit: int = 200
    schur_maxit: int = 2
    direct_tol: float = 1e-12

    def __post_init__(self):
        if self.outer_tol <= 0 or self.direct_tol <= 0:
            raise ValueError("tolerances must be positive")


class LinearOperator:
    """Square linear operator given by a matvec callback or stored matrix."""

    def __init__(self, n: int, matvec=None, matrix=None):
        self.n = n
        self._matrix = matrix
        if matvec is not None:
            self._matvec = matvec
        elif matrix is not None:
            self._matvec = lambda x: matrix @ x
        else:
            raise ValueError("need matvec or matrix")

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self._matvec(x))

    @classmethod
    def from_matrix(cls, A) -> "LinearOperator":
        return cls(A.shape[0], matrix=A)

    @classmethod
    def identity(cls, n: int) -> "LinearOperator":
        return cls(n, matvec=lambda x: x)


class DirectSolver:
    """LU factorization of a stored (dense or sparse) matrix.

    The factorization is computed once and reused; solves verify the
    residual against ``tol``.
    """

    def __init__(self, A, tol: float = 1e-12):
        self.tol = tol
        self.n = A.shape[0]
        if A.shape[0] != A.shape[1]:
            raise FactorizationError("matrix must be square")
        try:
            if sp.issparse(A):
                self._A = A.tocsr()
                self._lu = spla.splu(A.tocsc())
                self._solve = self._lu.solve
            else:
                import scipy.linalg as sla
                self._A = np.asarray(A, dtype=float)
                lu, piv = sla.lu_factor(self._A)
                self._solve = lambda b: sla.lu_solve((lu, piv), b)
        except Exception as exc:  # singular matrix, etc.
            raise FactorizationError(f"factorization failed: {exc}") from exc

    def solve(self, b: np.ndarray) -> np.ndarray:
        x = self._solve(np.asarray(b, dtype=float))
        if not np.all(np.isfinite(x)):
            raise FactorizationError("factorization produced non-finite solve")
        nb = np.linalg.norm(b)
        res = np.linalg.norm(self._A @ x - b)
        if res > self.tol * max(1.0, nb):
            cond = _condition_estimate(self._A)
            raise FactorizationError(
                f"direct solve residual {res:.3e} exceeds tolerance "
                f"(cond estimate {cond:.3e})")
        return x


def _condition_estimate(A) -> float:
    try:
        if sp.issparse(A):
            A = A.toarray() if A.shape[0] <= 2000 else None
        if A is None:
            return float("nan")
        return float(np.linalg.cond(A))
    except Exception:
        return float("nan")


def solve_direct(A, b: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """One-shot direct solve with residual verification."""
    return DirectSolver(A, tol=tol).solve(b)


@dataclass
class GmresResult:
    x: np.ndarray
    iterations: int
    converged: bool
    breakdown: bool
    residual: float


def fgmres(op: LinearOperator, precond: LinearOperator, b: np.ndarray,
           cfg: SolverConfig | None = None) -> GmresResult:
    """Flexible GMRES (right preconditioning, no restart).

    Returns the best iterate with convergence/breakdown flags; breakdown
    (zero Arnoldi norm without convergence) is reported distinctly.
    """
    cfg = cfg or SolverConfig()
    n = len(b)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return GmresResult(np.zeros(n), 0, True, False, 0.0)

    maxit = min(cfg.outer_maxit, n)
    V = np.zeros((maxit + 1, n))
    Z = np.zeros((maxit, n))
    H = np.zeros((maxit + 1, maxit))
    g = np.zeros(maxit + 1)
    cs = np.zeros(maxit)
    sn = np.zeros(maxit)

    V[0] = b / bnorm
    g[0] = bnorm
    breakdown = False
    k = 0
    for j in range(maxit):
        Z[j] = precond(V[j])
        w = np.array(op(Z[j]), dtype=float)  # copy: op may alias its input
        for i in range(j + 1):  # modified Gram-Schmidt
            H[i, j] = w @ V[i]
            w -= H[i, j] * V[i]
        H[j + 1, j] = np.linalg.norm(w)
        # apply stored Givens rotations
        for i in range(j):
            t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
            H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
            H[i, j] = t
        rho = np.hypot(H[j, j], H[j + 1, j])
        if rho == 0.0:
            breakdown = True
            k = j
            break
        cs[j], sn[j] = H[j, j] / rho, H[j + 1, j] / rho
        H[j, j] = rho
        g[j + 1] = -sn[j] * g[j]
        g[j] = cs[j] * g[j]
        k = j + 1
        if H[j + 1, j] != 0.0:
            V[j + 1] = w / H[j + 1, j]
        res = abs(g[j + 1])
        if res <= cfg.outer_tol * bnorm:
            break
        if H[j + 1, j] == 0.0:
            breakdown = True
            break

    if k == 0:
        return GmresResult(np.zeros(n), 0, False, breakdown, 1.0)
    y = np.linalg.solve(np.triu(H[:k, :k]), g[:k])
    x = Z[:k].T @ y
    res = np.linalg.norm(b - op(x))
    converged = res <= cfg.outer_tol * bnorm * 10  # slack for roundoff
    return GmresResult(x, k, converged, breakdown and not converged, res / bnorm)


# ---------------------------------------------------------------------------
# saddle system with scalar multipliers
# ---------------------------------------------------------------------------

@dataclass
class BlockSaddleSystem:
    """[[A, B], [C, 0]] with a small multiplier block (1 or 2 columns)."""
    A: sp.spmatrix
    B: np.ndarray          # (n_fields, k)
    C: np.ndarray          # (k, n_fields)
    rhs_fields: np.ndarray
    rhs_multipliers: np.ndarray

    def __post_init__(self):
        self.n_fields = self.A.shape[0]
        self.k = self.B.shape[1]
        if self.C.shape != (self.k, self.n_fields):
            raise ValueError("inconsistent multiplier block shapes")

    @property
    def n(self) -> int:
        return self.n_fields + self.k

    def full_rhs(self) -> np.ndarray:
        return np.concatenate([self.rhs_fields, self.rhs_multipliers])

    def operator(self) -> LinearOperator:
        nf = self.n_fields

        def matvec(x):
            xf, xl = x[:nf], x[nf:]
            return np.concatenate([self.A @ xf + self.B @ xl, self.C @ xf])
        return LinearOperator(self.n, matvec=matvec)

    def assemble_monolithic(self) -> sp.csr_matrix:
        zero = sp.csr_matrix((self.k, self.k))
        return sp.bmat([[self.A, sp.csr_matrix(self.B)],
                        [sp.csr_matrix(self.C), zero]]).tocsr()


class BlockPreconditioner:
    """Full block factorization preconditioner for a BlockSaddleSystem.

    P^-1 = [I, 0; C A^-1, I]^-1 applied as the exact inverse of the block
    LDU factorization: the field block uses a cached direct factorization,
    the Schur complement S = -C A^-1 B acts matrix-free through an inner
    GMRES capped at ``schur_maxit`` iterations (exact for <= 2 multipliers).
    """

    def __init__(self, system: BlockSaddleSystem, cfg: SolverConfig | None = None):
        self.sys = system
        self.cfg = cfg or SolverConfig()
        self.field_solver = DirectSolver(system.A, tol=self.cfg.direct_tol)
        if system.k:
            self._AinvB = np.column_stack(
                [self.field_solver.solve(system.B[:, i])
                 for i in range(system.k)])
        else:
            self._AinvB = np.zeros((system.n_fields, 0))

    def schur_matvec(self, y: np.ndarray) -> np.ndarray:
        # S y = -C A^-1 B y, via the cached A^-1 B columns
        return -self.sys.C @ (self._AinvB @ y)

    def solve_schur(self, r: np.ndarray) -> np.ndarray:
        k = self.sys.k
        if k == 0:
            return np.zeros(0)
        op = LinearOperator(k, matvec=self.schur_matvec)
        inner_cfg = SolverConfig(outer_tol=1e-12,
                                 outer_maxit=self.cfg.schur_maxit)
        res = fgmres(op, LinearOperator.identity(k), r, inner_cfg)
        if not np.all(np.isfinite(res.x)):
            raise SchurDegeneracyError("Schur solve produced non-finite values")
        check = np.linalg.norm(self.schur_matvec(res.x) - r)
        if check > 1e-6 * max(1.0, np.linalg.norm(r)):
            raise SchurDegeneracyError(
                f"Schur complement numerically singular (residual {check:.3e})")
        return res.x

    def apply(self, r: np.ndarray) -> np.ndarray:
        nf = self.sys.n_fields
        rf, rl = r[:nf], r[nf:]
        u = self.field_solver.solve(rf)
        y = self.solve_schur(rl - self.sys.C @ u)
        xf = u - self._AinvB @ y
        return np.concatenate([xf, y])

    def as_operator(self) -> LinearOperator:
        return LinearOperator(self.sys.n, matvec=self.apply)


def apply_block_preconditioner(system: BlockSaddleSystem, r: np.ndarray,
                               cfg: SolverConfig | None = None) -> np.ndarray:
    """One preconditioner application (builds the factorization each call)."""
    return BlockPreconditioner(system, cfg).apply(r)


def solve_saddle(system: BlockSaddleSystem,
                 cfg: SolverConfig | None = None,
                 precond: BlockPreconditioner | None = None
                 ) -> tuple[np.ndarray, int]:
    """Solve the saddle system by preconditioned FGMRES.

    Raises SchurDegeneracyError for a singular multiplier block and
    LinearAlgebraError on non-convergence.
    """
    cfg = cfg or SolverConfig()
    pre = precond or BlockPreconditioner(system, cfg)
    res = fgmres(system.operator(), pre.as_operator(), system.full_rhs(), cfg)
    if not res.converged:
        raise LinearAlgebraError(
            f"FGMRES did not converge (relres {res.residual:.3e}, "
            f"breakdown={res.breakdown})")
    return res.x, res.iterations


def solve_saddle_monolithic(system: BlockSaddleSystem) -> np.ndarray:
    """Oracle path: direct solve of the assembled saddle matrix."""
    return solve_direct(system.assemble_monolithic(), system.full_rhs())
