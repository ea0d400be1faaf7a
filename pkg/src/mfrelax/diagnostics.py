"""Conserved-quantity and residual diagnostics.

Includes discrete vector-potential recovery (gauge-fixed against discrete
gradients), helicity and energy functionals, the Lorentz-force residual and
least-squares force-free coefficient, the discrete Poincare constant on the
gradient-orthogonal complement, and variational-derivative consistency
checks of the quadratic energy/helicity functionals.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import LinearAlgebraError, PreconditionError
from .feec import FieldCoefficients, OperatorSet, SpaceKind
from .linalg import DirectSolver


@dataclass
class DiagnosticsRecord:
    t: float
    energy: float
    helicity: float
    lorentz: float
    div_norm: float
    lambda_E: float = 0.0
    lambda_H: float = 0.0
    alpha0: float = float("nan")
    newton_iters: int = 0


def energy(ops: OperatorSet, B: FieldCoefficients) -> float:
    """Magnetic energy (B, B)."""
    if B.kind is not SpaceKind.HDIV:
        raise TypeError("energy expects an Hdiv field")
    return float(B.values @ (ops.mass_hdiv_int @ B.values))


def helicity(ops: OperatorSet, A: FieldCoefficients,
             B: FieldCoefficients) -> float:
    """Helicity (A, B) for A in Hcurl, B in Hdiv."""
    if A.kind is not SpaceKind.HCURL or B.kind is not SpaceKind.HDIV:
        raise TypeError("helicity expects (Hcurl, Hdiv) fields")
    return float(A.values @ (ops.mass_mixed_int @ B.values))


def div_norm(ops: OperatorSet, B: FieldCoefficients) -> float:
    return float(np.abs(ops.div_int @ B.values).max())


class PotentialRecovery:
    """Cached saddle factorization for recovering A with curl A = B.

    Gauge fixed by (A, grad q) = 0 for all interior nodal q; realized as a
    curl-curl system with a gradient multiplier.
    """

    def __init__(self, ops: OperatorSet):
        self.ops = ops
        K = (ops.curl_int.T @ ops.mass_hdiv_int @ ops.curl_int).tocsr()
        G = (ops.mass_hcurl_int @ ops.grad_int).tocsr()
        self.K = K
        self.G = G
        n_e = K.shape[0]
        n_v = G.shape[1]
        self.n_edges = n_e
        self.n_vertices = n_v
        saddle = sp.bmat([[K, G], [G.T, None]]).tocsc()
        self.solver = DirectSolver(saddle)

    def solve(self, rhs_curl: np.ndarray) -> np.ndarray:
        """Returns A with K A + G p = rhs, G^T A = 0."""
        rhs = np.concatenate([rhs_curl, np.zeros(self.n_vertices)])
        return self.solver.solve(rhs)[:self.n_edges]


def recover_potential(ops: OperatorSet, B: FieldCoefficients,
                      cache: PotentialRecovery | None = None
                      ) -> FieldCoefficients:
    """Gauge-fixed discrete potential A in Hcurl with curl A = B exactly."""
    if B.kind is not SpaceKind.HDIV:
        raise TypeError("expected Hdiv coefficients")
    nb = np.linalg.norm(B.values)
    if len(B.values) and np.abs(ops.div_int @ B.values).max() > 1e-11 * max(1.0, nb):
        raise PreconditionError("potential recovery needs a solenoidal field")
    rec = cache or PotentialRecovery(ops)
    A = rec.solve(ops.curl_int.T @ (ops.mass_hdiv_int @ B.values))
    curl_res = np.abs(ops.curl_int @ A - B.values).max() if len(A) else 0.0
    if curl_res > 1e-9 * max(1.0, nb):
        raise LinearAlgebraError(
            f"potential recovery residual {curl_res:.3e} too large")
    return ops.field(SpaceKind.HCURL, A)


def lorentz_and_alpha(ops: OperatorSet, B: FieldCoefficients,
                      j: FieldCoefficients) -> tuple[float, float]:
    """L2 norm of j x B and the least-squares force-free coefficient.

    alpha0 = (j, B) / (B, B); returned as nan when B = 0.
    """
    jv = ops.nl_values(j)
    Bv = ops.nl_values(B)
    w = ops.quad_nl.weights
    cross = np.cross(jv, Bv)
    lorentz = float(np.sqrt(np.sum(w * np.sum(cross * cross, axis=1))))
    bb = energy(ops, B)
    if bb == 0.0:
        return lorentz, float("nan")
    jb = float(j.values @ (ops.mass_mixed_int @ B.values))
    return lorentz, jb / bb


def poincare_constant(ops: OperatorSet, tol: float = 1e-12,
                      maxit: int = 2000) -> float:
    """Discrete Poincare constant C with ||A|| <= C ||curl A|| on the
    gradient-orthogonal complement of the constrained Hcurl space.

    Inverse iteration on the curl-curl operator with the gradient kernel
    deflated through the saddle solve; C = lambda_min^{-1/2}.
    """
    rec = PotentialRecovery(ops)
    Mc = ops.mass_hcurl_int
    n = rec.n_edges
    rng = np.random.default_rng(1234)
    x = rng.standard_normal(n)
    # project x onto the gradient-orthogonal complement (Mc inner product)
    GtMc = rec.G.T  # = grad^T Mc
    gram = (ops.grad_int.T @ ops.mass_hcurl_int @ ops.grad_int).tocsc()
    gram_solver = DirectSolver(gram)
    x -= ops.grad_int @ gram_solver.solve(GtMc @ x)
    lam_prev = np.inf
    for it in range(maxit):
        y = rec.solve(Mc @ x)
        ny = np.sqrt(y @ (Mc @ y))
        if ny == 0.0:
            raise LinearAlgebraError("inverse iteration stagnated")
        x = y / ny
        lam = float(x @ (rec.K @ x)) / float(x @ (Mc @ x))
        if abs(lam - lam_prev) <= tol * max(1.0, abs(lam)):
            return 1.0 / np.sqrt(lam)
        lam_prev = lam
    raise LinearAlgebraError("eigenvalue iteration did not converge")


def variational_check(ops: OperatorSet, A: FieldCoefficients,
                      direction: FieldCoefficients,
                      eps: float) -> tuple[float, float]:
    """Consistency of the discrete energy/helicity variational derivatives.

    Central differences of E(A) = (curl A, curl A) and H(A) = (A, curl A)
    against 2(j, d) and 2(B, d); both functionals are quadratic, so the
    residuals are pure roundoff.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    Mc, Md, Mcd = ops.mass_hcurl_int, ops.mass_hdiv_int, ops.mass_mixed_int
    curl = ops.curl_int

    def efun(a):
        c = curl @ a
        return c @ (Md @ c)

    def hfun(a):
        return a @ (Mcd @ (curl @ a))

    a, d = A.values, direction.values
    cd_e = (efun(a + eps * d) - efun(a - eps * d)) / (2 * eps)
    cd_h = (hfun(a + eps * d) - hfun(a - eps * d)) / (2 * eps)

    # discrete realizations: Mc j = curl^T Md curl A,  B = curl A
    j = DirectSolver(Mc.tocsc()).solve(curl.T @ (Md @ (curl @ a)))
    B = curl @ a
    res_e = abs(cd_e - 2.0 * (j @ (Mc @ d)))
    res_h = abs(cd_h - 2.0 * (d @ (Mcd @ B)))
    return res_e, res_h
