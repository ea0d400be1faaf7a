"""Analytic initial magnetic configurations and discrete initialization.

Two configurations: a braided field of six alternating Gaussian twists on a
uniform background (zero net helicity), and a knotted Hopf-fibration field
with winding numbers (nonzero helicity).  Initialization interpolates face
fluxes, zeroes the boundary fluxes, and divergence-cleans with an
L2-minimal correction so the discrete Gauss law holds exactly from step 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, InitializationError
from .feec import (FieldCoefficients, OperatorSet, SpaceKind, interpolate)
from .linalg import DirectSolver
from .mesh import StructuredHexMesh


@dataclass(frozen=True)
class E3Params:
    """Braided-field parameters: background + six Gaussian twists."""
    B0: float = 1.0
    k: float = 5.0
    a: float = np.sqrt(2.0)
    l: float = 2.0
    centers: tuple = ((1.0, 0.0, -20.0), (-1.0, 0.0, -12.0), (1.0, 0.0, -4.0),
                      (-1.0, 0.0, 4.0), (1.0, 0.0, 12.0), (-1.0, 0.0, 20.0))

    def __post_init__(self):
        if self.a <= 0 or self.l <= 0:
            raise ConfigError("twist radius and length must be positive")
        if len(self.centers) != 6:
            raise ConfigError("exactly 6 twist centers required")

    @property
    def background(self) -> np.ndarray:
        return np.array([0.0, 0.0, self.B0])


@dataclass(frozen=True)
class HopfParams:
    """Knotted-field parameters: winding numbers and scaling."""
    omega1: float = 3.0
    omega2: float = 2.0
    s: float = 1.0

    def __post_init__(self):
        if self.omega1 == 0.0 and self.omega2 == 0.0:
            raise ConfigError("winding numbers must not both vanish")
        if self.s < 0:
            raise ConfigError("scaling parameter must be >= 0")


def eval_e3(points: np.ndarray, p: E3Params) -> np.ndarray:
    """Braided field: uniform z background plus six Gaussian twists."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    out = np.zeros_like(pts)
    out[:, 2] = p.B0
    amp = 2.0 * p.k * p.B0 / p.a
    for (xc, yc, zc) in p.centers:
        g = np.exp(-((x - xc) ** 2) / p.a ** 2 - ((y - yc) ** 2) / p.a ** 2
                   - ((z - zc) ** 2) / p.l ** 2)
        out[:, 0] += amp * (-(y - yc)) * g
        out[:, 1] += amp * (x - xc) * g
    return out if np.ndim(points) == 2 else out[0]


def eval_hopf(points: np.ndarray, p: HopfParams) -> np.ndarray:
    """Hopf-fibration field with winding numbers (omega1, omega2)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    r2 = x * x + y * y + z * z
    pref = 4.0 * np.sqrt(p.s) / (np.pi * (1.0 + r2) ** 3
                                 * np.hypot(p.omega1, p.omega2))
    out = np.empty_like(pts)
    out[:, 0] = pref * 2.0 * (p.omega2 * y - p.omega1 * x * z)
    out[:, 1] = pref * (-2.0) * (p.omega2 * x + p.omega1 * y * z)
    out[:, 2] = pref * p.omega1 * (-1.0 + x * x + y * y - z * z)
    return out if np.ndim(points) == 2 else out[0]


def divergence_clean(ops: OperatorSet, fluxes: np.ndarray) -> np.ndarray:
    """L2-minimal correction making the interior-flux vector solenoidal.

    Solves the KKT system of  min ||dB||_M  s.t.  div(B + dB) = 0,
    with a zero-mean constraint on the cell multiplier to remove the
    constant nullspace of the divergence operator's adjoint.
    """
    Md = ops.mass_hdiv_int
    D = ops.div_int
    vols = ops.mass_l2.diagonal()
    nf, nc = Md.shape[0], D.shape[0]
    K = sp.bmat([
        [Md, D.T, None],
        [D, None, sp.csr_matrix(vols[:, None])],
        [None, sp.csr_matrix(vols[None, :]), None],
    ]).tocsc()
    rhs = np.concatenate([np.zeros(nf), -(D @ fluxes), [0.0]])
    try:
        sol = DirectSolver(K).solve(rhs)
    except Exception as exc:
        raise InitializationError(f"divergence cleaning failed: {exc}") from exc
    return fluxes + sol[:nf]


def init_divfree_field(mesh: StructuredHexMesh, ops: OperatorSet, analytic,
                       subtract_background: np.ndarray | None = None,
                       q: int = 5) -> FieldCoefficients:
    """Discretize an analytic field into the constrained Hdiv space.

    Optionally subtracts a constant background first (re-added only at
    output time); the result satisfies the discrete Gauss law and the
    zero-normal-flux boundary condition exactly.
    """
    if subtract_background is not None:
        bg = np.asarray(subtract_background, dtype=float)

        def f(pts):
            return np.asarray(analytic(pts)) - bg
    else:
        f = analytic
    full = interpolate(mesh, f, SpaceKind.HDIV, q=q)
    interior = ops.restrict(SpaceKind.HDIV, full)
    cleaned = divergence_clean(ops, interior)
    B = ops.field(SpaceKind.HDIV, cleaned)
    div_inf = np.abs(ops.div_int @ cleaned).max() if len(cleaned) else 0.0
    norm = np.linalg.norm(cleaned)
    if div_inf > 1e-12 * max(1.0, norm):
        raise InitializationError(
            f"post-clean divergence {div_inf:.3e} too large")
    return B
