"""The three fully discrete relaxation schemes with Newton linearization.

* NonConservative: Crank-Nicolson discretization of the magneto-frictional
  system in (B, E, j); preserves the Gauss law and energy decay only.
* Projection: adds the velocity and the curl-conforming projection of the
  magnetic field as unknowns; conserves helicity through the orthogonality
  of the electric field to the projected magnetic field.
* LagrangeMultiplier: implicit-Euler potential formulation with two scalar
  multipliers enforcing the energy law and global helicity; solved with the
  block-preconditioned FGMRES saddle solver.

All nonlinear (cross-product) terms are integrated with 3-point Gauss per
direction, which is exact for the lowest-order tensor-product spaces and
keeps the discrete conservation identities at machine precision.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.sparse as sp

from .errors import (LinearAlgebraError, NewtonError, SchurDegeneracyError)
from .feec import FieldCoefficients, OperatorSet, SpaceKind
from .linalg import (BlockSaddleSystem, DirectSolver, SolverConfig,
                     solve_saddle)


class SchemeKind(Enum):
    NONCONSERVATIVE = "nonconservative"
    PROJECTION = "projection"
    LAGRANGE = "lagrange"


@dataclass(frozen=True)
class TimePhase:
    dt: float
    tau: float
    n_steps: int

    def __post_init__(self):
        if self.dt <= 0 or self.tau <= 0 or self.n_steps < 1:
            raise ValueError("need dt > 0, tau > 0, n_steps >= 1")


@dataclass
class NewtonConfig:
    abs_tol: float = 1e-11
    rel_tol: float = 1e-10
    max_iter: int = 50
    damping: bool = False

    def __post_init__(self):
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ValueError("tolerances must be positive")


@dataclass
class SchemeState:
    """Per-scheme bundle of current fields and bookkeeping."""
    t: float
    B: FieldCoefficients
    u: FieldCoefficients | None = None
    A: FieldCoefficients | None = None
    E: FieldCoefficients | None = None
    j: FieldCoefficients | None = None
    H: FieldCoefficients | None = None
    lambda_E: float = 0.0
    lambda_H: float = 0.0
    helicity_ref: float | None = None
    energy: float = 0.0
    energy_rate: float | None = None   # (E^n - E^{n-1}) / dt of last step

    def copy(self) -> "SchemeState":
        clone = SchemeState(self.t, self.B.copy())
        for name in ("u", "A", "E", "j", "H"):
            f = getattr(self, name)
            setattr(clone, name, f.copy() if f is not None else None)
        clone.lambda_E, clone.lambda_H = self.lambda_E, self.lambda_H
        clone.helicity_ref = self.helicity_ref
        clone.energy, clone.energy_rate = self.energy, self.energy_rate
        return clone


@dataclass
class StepReport:
    dt: float
    tau: float
    newton_iters: int
    energy: float
    div_norm: float
    orthogonality: float | None = None        # (E, H) of the projection step
    orthogonality_scale: float | None = None  # ||E|| * ||H||
    energy_law_residual: float | None = None  # LM, when the energy row is on
    helicity_residual: float | None = None    # LM
    mode: str | None = None                   # LM: "full" or "reduced"
    fallback: bool = False                    # LM: degenerate Schur fallback


def newton_solve(residual, jacobian_solve, x0: np.ndarray, cfg: NewtonConfig):
    """Generic Newton iteration.

    ``jacobian_solve(x, r)`` must return dx with J(x) dx = r.  Returns
    (x, iterations); raises NewtonError on non-convergence.
    """
    x = np.array(x0, dtype=float)
    r = residual(x)
    r0 = np.linalg.norm(r)
    tol = max(cfg.abs_tol, cfg.rel_tol * r0)
    if r0 <= tol:
        return x, 0
    rn = r0
    for it in range(1, cfg.max_iter + 1):
        dx = jacobian_solve(x, -r)
        if cfg.damping:
            alpha = 1.0
            for _ in range(6):
                trial = x + alpha * dx
                rt = residual(trial)
                if np.linalg.norm(rt) < rn or alpha < 1e-2:
                    break
                alpha *= 0.5
            x, r = trial, rt
        else:
            x = x + dx
            r = residual(x)
        rn = np.linalg.norm(r)
        if not np.isfinite(rn):
            raise NewtonError(f"Newton diverged at iteration {it}")
        if rn <= tol:
            return x, it
    raise NewtonError(
        f"Newton failed to converge in {cfg.max_iter} iterations "
        f"(residual {rn:.3e}, target {tol:.3e})")


# ---------------------------------------------------------------------------
# pointwise cross-product machinery on the nonlinear quadrature
# ---------------------------------------------------------------------------

def _cross_operator(vals: np.ndarray) -> sp.bsr_matrix:
    """Block-diagonal operator w -> v x w from per-point vectors v."""
    npts = len(vals)
    data = np.zeros((npts, 3, 3))
    x, y, z = vals[:, 0], vals[:, 1], vals[:, 2]
    data[:, 0, 1] = -z
    data[:, 0, 2] = y
    data[:, 1, 0] = z
    data[:, 1, 2] = -x
    data[:, 2, 0] = -y
    data[:, 2, 1] = x
    return sp.bsr_matrix((data, np.arange(npts), np.arange(npts + 1)),
                         shape=(3 * npts, 3 * npts))


class Scheme:
    """Shared operators and the Newton/step driver for one discretization."""

    kind: SchemeKind = None

    def __init__(self, ops: OperatorSet, newton: NewtonConfig | None = None):
        self.ops = ops
        self.newton = newton or NewtonConfig()
        int_e = ops.space(SpaceKind.HCURL).interior
        int_f = ops.space(SpaceKind.HDIV).interior
        self.nc = len(int_e)
        self.nd = len(int_f)
        self.Mc = ops.mass_hcurl_int.tocsr()
        self.Md = ops.mass_hdiv_int.tocsr()
        self.Mcd = ops.mass_mixed_int.tocsr()
        self.Dc = ops.curl_int.tocsr()
        self.MdDc = (self.Md @ self.Dc).tocsr()
        self.DcT_Md = (self.Dc.T @ self.Md).tocsr()
        self.Gc = ops.quad_nl.ops[SpaceKind.HCURL][:, int_e].tocsr()
        self.Gd = ops.quad_nl.ops[SpaceKind.HDIV][:, int_f].tocsr()
        self.w3 = np.repeat(ops.quad_nl.weights, 3)
        W3 = sp.diags(self.w3)
        self.GcT_W = (self.Gc.T @ W3).tocsr()
        self.GdT_W = (self.Gd.T @ W3).tocsr()

    # -- pointwise helpers -------------------------------------------------
    def _pts(self, G, coeffs):
        return (G @ coeffs).reshape(-1, 3)

    def _wcross(self, Gtest_T_W, a_pts, b_pts):
        """Test vector of (a x b, basis) on the nonlinear quadrature."""
        return Gtest_T_W @ np.cross(a_pts, b_pts).ravel()

    # -- interface ---------------------------------------------------------
    def initial_state(self, B0: FieldCoefficients) -> SchemeState:
        raise NotImplementedError

    def step(self, state: SchemeState, dt: float, tau: float
             ) -> tuple[SchemeState, StepReport]:
        raise NotImplementedError

    def _divnorm(self, Bvals: np.ndarray) -> float:
        return float(np.abs(self.ops.div_int @ Bvals).max())

    def _energy(self, Bvals: np.ndarray) -> float:
        return float(Bvals @ (self.Md @ Bvals))


class NonConservativeScheme(Scheme):
    """Crank-Nicolson scheme in (B, E, j) with no helicity constraint."""

    kind = SchemeKind.NONCONSERVATIVE

    def initial_state(self, B0: FieldCoefficients) -> SchemeState:
        st = SchemeState(0.0, B0.copy(),
                         E=self.ops.zero_field(SpaceKind.HCURL),
                         j=self.ops.zero_field(SpaceKind.HCURL))
        st.energy = self._energy(B0.values)
        return st

    def _split(self, x):
        nd, nc = self.nd, self.nc
        return x[:nd], x[nd:nd + nc], x[nd + nc:]

    def residual(self, x, Bn, dt, tau):
        B, E, j = self._split(x)
        Bm = 0.5 * (B + Bn)
        jp = self._pts(self.Gc, j)
        Bp = self._pts(self.Gd, Bm)
        force = np.cross(np.cross(jp, Bp), Bp)
        r1 = self.Md @ ((B - Bn) / dt) + self.MdDc @ E
        r2 = self.Mc @ E + tau * (self.GcT_W @ force.ravel())
        r3 = self.Mc @ j - self.DcT_Md @ Bm
        return np.concatenate([r1, r2, r3])

    def jacobian(self, x, Bn, dt, tau):
        B, E, j = self._split(x)
        Bm = 0.5 * (B + Bn)
        jp = self._pts(self.Gc, j)
        Bp = self._pts(self.Gd, Bm)
        Cb = _cross_operator(Bp)
        Cj = _cross_operator(jp)
        Cjb = _cross_operator(np.cross(jp, Bp))
        d_dj = tau * (self.GcT_W @ ((Cb @ Cb) @ self.Gc))
        d_dB = 0.5 * tau * (self.GcT_W @ ((Cjb - Cb @ Cj) @ self.Gd))
        rows = [
            [self.Md / dt, self.MdDc, None],
            [d_dB, self.Mc, d_dj],
            [-0.5 * self.DcT_Md, None, self.Mc],
        ]
        return sp.bmat(rows).tocsc()

    def step(self, state, dt, tau):
        Bn = state.B.values
        x0 = np.concatenate([Bn, state.E.values, state.j.values])
        res = lambda x: self.residual(x, Bn, dt, tau)

        def jsolve(x, r):
            return DirectSolver(self.jacobian(x, Bn, dt, tau)).solve(r)

        x, iters = newton_solve(res, jsolve, x0, self.newton)
        _, E, j = self._split(x)
        Bnew = Bn - dt * (self.Dc @ E)  # exact flux update: Gauss law intact
        new = state.copy()
        new.t = state.t + dt
        new.B = self.ops.field(SpaceKind.HDIV, Bnew)
        new.E = self.ops.field(SpaceKind.HCURL, E)
        new.j = self.ops.field(SpaceKind.HCURL, j)
        en = self._energy(Bnew)
        new.energy_rate = (en - state.energy) / dt
        new.energy = en
        rep = StepReport(dt, tau, iters, en, self._divnorm(Bnew))
        return new, rep


class ProjectionScheme(Scheme):
    """Mixed scheme with the curl-conforming projected magnetic field."""

    kind = SchemeKind.PROJECTION

    def initial_state(self, B0: FieldCoefficients) -> SchemeState:
        zc = lambda: self.ops.zero_field(SpaceKind.HCURL)
        st = SchemeState(0.0, B0.copy(), u=self.ops.zero_field(SpaceKind.HDIV),
                         E=zc(), j=zc(), H=zc())
        st.energy = self._energy(B0.values)
        return st

    def _split(self, x):
        nd, nc = self.nd, self.nc
        o = 0
        B = x[o:o + nd]; o += nd
        u = x[o:o + nd]; o += nd
        E = x[o:o + nc]; o += nc
        j = x[o:o + nc]; o += nc
        H = x[o:o + nc]
        return B, u, E, j, H

    def residual(self, x, Bn, dt, tau):
        B, u, E, j, H = self._split(x)
        Bm = 0.5 * (B + Bn)
        up = self._pts(self.Gd, u)
        jp = self._pts(self.Gc, j)
        Hp = self._pts(self.Gc, H)
        r1 = self.Md @ ((B - Bn) / dt) + self.MdDc @ E
        r2 = self.Mc @ E + self._wcross(self.GcT_W, up, Hp)
        r3 = self.Mc @ j - self.DcT_Md @ Bm
        r4 = self.Md @ u - tau * self._wcross(self.GdT_W, jp, Hp)
        r5 = self.Mc @ H - self.Mcd @ Bm
        return np.concatenate([r1, r2, r3, r4, r5])

    def jacobian(self, x, Bn, dt, tau):
        B, u, E, j, H = self._split(x)
        up = self._pts(self.Gd, u)
        jp = self._pts(self.Gc, j)
        Hp = self._pts(self.Gc, H)
        Cu = _cross_operator(up)
        Cj = _cross_operator(jp)
        Ch = _cross_operator(Hp)
        rows = [
            [self.Md / dt, None, self.MdDc, None, None],
            [None, -self.GcT_W @ (Ch @ self.Gd), self.Mc, None,
             self.GcT_W @ (Cu @ self.Gc)],
            [-0.5 * self.DcT_Md, None, None, self.Mc, None],
            [None, self.Md, None, tau * (self.GdT_W @ (Ch @ self.Gc)),
             -tau * (self.GdT_W @ (Cj @ self.Gc))],
            [-0.5 * self.Mcd, None, None, None, self.Mc],
        ]
        return sp.bmat(rows).tocsc()

    def step(self, state, dt, tau):
        Bn = state.B.values
        x0 = np.concatenate([Bn, state.u.values, state.E.values,
                             state.j.values, state.H.values])
        res = lambda x: self.residual(x, Bn, dt, tau)

        def jsolve(x, r):
            return DirectSolver(self.jacobian(x, Bn, dt, tau)).solve(r)

        x, iters = newton_solve(res, jsolve, x0, self.newton)
        _, u, E, j, H = self._split(x)
        Bnew = Bn - dt * (self.Dc @ E)
        new = state.copy()
        new.t = state.t + dt
        new.B = self.ops.field(SpaceKind.HDIV, Bnew)
        new.u = self.ops.field(SpaceKind.HDIV, u)
        new.E = self.ops.field(SpaceKind.HCURL, E)
        new.j = self.ops.field(SpaceKind.HCURL, j)
        new.H = self.ops.field(SpaceKind.HCURL, H)
        en = self._energy(Bnew)
        new.energy_rate = (en - state.energy) / dt
        new.energy = en
        norm_e = float(np.sqrt(E @ (self.Mc @ E)))
        norm_h = float(np.sqrt(H @ (self.Mc @ H)))
        rep = StepReport(dt, tau, iters, en, self._divnorm(Bnew),
                         orthogonality=float(E @ (self.Mc @ H)),
                         orthogonality_scale=norm_e * norm_h)
        return new, rep


class LagrangeMultiplierScheme(Scheme):
    """Implicit-Euler potential scheme with scalar multipliers.

    The full system enforces both the energy law and global helicity; the
    switching rule drops the energy multiplier when the energy change rate
    exceeds ``gamma`` (magnitude reading; ``literal_switch`` recovers the
    signed comparison).  A degenerate Schur complement near force-free
    states triggers an automatic fallback to the reduced system.
    """

    kind = SchemeKind.LAGRANGE

    def __init__(self, ops, newton=None, gamma: float = 9e-5,
                 literal_switch: bool = False,
                 solver: SolverConfig | None = None):
        super().__init__(ops, newton)
        self.gamma = gamma
        self.literal_switch = literal_switch
        self.solver_cfg = solver or SolverConfig()
        self.capture_every: int | None = None
        self.captured: list = []          # (step_index, BlockSaddleSystem)
        self._step_count = 0

    def initial_state(self, B0: FieldCoefficients,
                      A0: FieldCoefficients | None = None) -> SchemeState:
        from .diagnostics import recover_potential
        A = A0 if A0 is not None else recover_potential(self.ops, B0)
        B = self.ops.field(SpaceKind.HDIV, self.Dc @ A.values)
        zc = lambda: self.ops.zero_field(SpaceKind.HCURL)
        st = SchemeState(0.0, B, u=self.ops.zero_field(SpaceKind.HDIV),
                         A=A, E=zc(), j=zc())
        st.helicity_ref = float(A.values @ (self.Mcd @ B.values))
        st.energy = self._energy(B.values)
        return st

    # field vector x = [B, u, A, E, j]; multipliers lam (len 1 or 2)
    def _split(self, x):
        nd, nc = self.nd, self.nc
        o = 0
        B = x[o:o + nd]; o += nd
        u = x[o:o + nd]; o += nd
        A = x[o:o + nc]; o += nc
        E = x[o:o + nc]; o += nc
        j = x[o:o + nc]
        return B, u, A, E, j

    @property
    def n_fields(self):
        return 2 * self.nd + 3 * self.nc

    def residual(self, xfull, An, En_energy, href, dt, tau, full_mode):
        nf = self.n_fields
        x, lam = xfull[:nf], xfull[nf:]
        lam_E = lam[0] if full_mode else 0.0
        lam_H = lam[-1]
        B, u, A, E, j = self._split(x)
        Bp = self._pts(self.Gd, B)
        up = self._pts(self.Gd, u)
        jp = self._pts(self.Gc, j)
        rA = (self.Mc @ ((A - An) / dt) + self.Mc @ E
              + lam_H * (self.Mcd @ B) + lam_E * (self.Mc @ j))
        rB = self.Md @ B - self.MdDc @ A
        ru = self.Md @ u - tau * self._wcross(self.GdT_W, jp, Bp)
        rE = self.Mc @ E + self._wcross(self.GcT_W, up, Bp)
        rj = self.Mc @ j - self.DcT_Md @ B
        parts = [rA, rB, ru, rE, rj]
        mult = []
        if full_mode:
            cr = np.cross(Bp, jp)
            Q = float(self.w3.reshape(-1, 3)[:, 0] @ np.sum(cr * cr, axis=1))
            mult.append((self._energy(B) - En_energy) / dt + 2.0 * tau * Q)
        mult.append(float(A @ (self.Mcd @ B)) - href)
        return np.concatenate([np.concatenate(parts), np.array(mult)])

    def jacobian_blocks(self, xfull, dt, tau, full_mode):
        nf = self.n_fields
        x, lam = xfull[:nf], xfull[nf:]
        lam_E = lam[0] if full_mode else 0.0
        lam_H = lam[-1]
        B, u, A, E, j = self._split(x)
        Bp = self._pts(self.Gd, B)
        up = self._pts(self.Gd, u)
        jp = self._pts(self.Gc, j)
        Cb = _cross_operator(Bp)
        Cu = _cross_operator(up)
        Cj = _cross_operator(jp)
        rows = [
            [lam_H * self.Mcd, None, self.Mc / dt, self.Mc, lam_E * self.Mc],
            [self.Md, None, -self.MdDc, None, None],
            [-tau * (self.GdT_W @ (Cj @ self.Gd)), self.Md, None, None,
             tau * (self.GdT_W @ (Cb @ self.Gc))],
            [self.GcT_W @ (Cu @ self.Gd), -self.GcT_W @ (Cb @ self.Gd),
             None, self.Mc, None],
            [-self.DcT_Md, None, None, None, self.Mc],
        ]
        Asp = sp.bmat(rows).tocsc()

        # multiplier columns act on the potential-evolution rows, which sit
        # first in the row order [rA, rB, ru, rE, rj]
        k = 2 if full_mode else 1
        Bcols = np.zeros((nf, k))
        if full_mode:
            Bcols[:self.nc, 0] = self.Mc @ j
        Bcols[:self.nc, k - 1] = self.Mcd @ B

        Crows = np.zeros((k, nf))
        nd, nc = self.nd, self.nc
        if full_mode:
            qflat = self.w3 * np.cross(Bp, jp).ravel()
            dQ_dB = -2.0 * ((Cj.T @ qflat) @ self.Gd)
            dQ_dj = 2.0 * ((Cb.T @ qflat) @ self.Gc)
            row = Crows[0]
            row[:nd] = (2.0 / dt) * (self.Md @ B) + 2.0 * tau * dQ_dB
            row[2 * nd + 2 * nc:] = 2.0 * tau * dQ_dj
        hrow = Crows[k - 1]
        hrow[:nd] = self.Mcd.T @ A
        hrow[2 * nd:2 * nd + nc] = self.Mcd @ B
        return Asp, Bcols, Crows

    def _try_step(self, state, dt, tau, full_mode, capture):
        An = state.A.values
        En = state.energy
        href = state.helicity_ref
        k = 2 if full_mode else 1
        lam0 = np.zeros(k)
        x0 = np.concatenate([state.B.values, state.u.values, An,
                             state.E.values, state.j.values, lam0])
        res = lambda x: self.residual(x, An, En, href, dt, tau, full_mode)

        def jsolve(x, rhs):
            Asp, Bc, Cr = self.jacobian_blocks(x, dt, tau, full_mode)
            nf = self.n_fields
            system = BlockSaddleSystem(Asp, Bc, Cr, rhs[:nf], rhs[nf:])
            if capture is not None:
                capture.append(system)
            dx, _ = solve_saddle(system, self.solver_cfg)
            return dx

        x, iters = newton_solve(res, jsolve, x0, self.newton)
        return x, iters

    def step(self, state, dt, tau):
        if state.helicity_ref is None:
            raise ValueError("state not initialized through initial_state")
        self._step_count += 1
        capture = None
        if (self.capture_every and
                self._step_count % self.capture_every == 0):
            capture = []

        rate = state.energy_rate
        if self.literal_switch:
            full_mode = rate is not None and rate < self.gamma
        else:
            full_mode = rate is not None and abs(rate) < self.gamma

        fallback = False
        try:
            x, iters = self._try_step(state, dt, tau, full_mode, capture)
        except (SchurDegeneracyError, LinearAlgebraError, NewtonError):
            if not full_mode:
                raise
            # degenerate multiplier block near steady state: reduced system
            fallback = True
            full_mode = False
            if capture is not None:
                capture.clear()
            x, iters = self._try_step(state, dt, tau, full_mode, capture)

        nf = self.n_fields
        lam = x[nf:]
        B, u, A, E, j = self._split(x[:nf])
        Bnew = self.Dc @ A                   # exact: B = curl A
        new = state.copy()
        new.t = state.t + dt
        new.B = self.ops.field(SpaceKind.HDIV, Bnew)
        new.u = self.ops.field(SpaceKind.HDIV, u)
        new.A = self.ops.field(SpaceKind.HCURL, A)
        new.E = self.ops.field(SpaceKind.HCURL, E)
        new.j = self.ops.field(SpaceKind.HCURL, j)
        new.lambda_E = float(lam[0]) if full_mode else 0.0
        new.lambda_H = float(lam[-1])
        en = self._energy(Bnew)
        new.energy_rate = (en - state.energy) / dt
        new.energy = en

        # per-step identity residuals, evaluated on the accepted solution
        Bp = self._pts(self.Gd, Bnew)
        jp = self._pts(self.Gc, j)
        cr = np.cross(Bp, jp)
        Q = float(self.ops.quad_nl.weights @ np.sum(cr * cr, axis=1))
        elaw = ((en - state.energy) / dt + 2.0 * tau * Q) if full_mode else None
        hres = abs(float(A @ (self.Mcd @ Bnew)) - state.helicity_ref)

        if capture is not None:
            self.captured.extend((self._step_count, s) for s in capture[-1:])

        rep = StepReport(dt, tau, iters, en, self._divnorm(Bnew),
                         energy_law_residual=elaw, helicity_residual=hres,
                         mode="full" if full_mode else "reduced",
                         fallback=fallback)
        return new, rep


def make_scheme(kind: SchemeKind, ops: OperatorSet,
                newton: NewtonConfig | None = None, **kwargs) -> Scheme:
    if kind is SchemeKind.NONCONSERVATIVE:
        return NonConservativeScheme(ops, newton)
    if kind is SchemeKind.PROJECTION:
        return ProjectionScheme(ops, newton)
    return LagrangeMultiplierScheme(ops, newton, **kwargs)


def step_with_retry(scheme: Scheme, state: SchemeState, dt: float, tau: float,
                    max_halvings: int = 3):
    """Advance by dt; on Newton failure halve the step and retry (depth 3).

    Returns (state, [StepReport...]) covering the full interval dt.
    """
    try:
        new, rep = scheme.step(state, dt, tau)
        return new, [rep]
    except NewtonError:
        if max_halvings <= 0:
            raise
    half = dt / 2.0
    mid, reps1 = step_with_retry(scheme, state, half, tau, max_halvings - 1)
    end, reps2 = step_with_retry(scheme, mid, half, tau, max_halvings - 1)
    return end, reps1 + reps2
