"""Run orchestration and serialization.

Parses flat key=value configs, drives scheme x initial-field x phase-schedule
simulations, and writes the diagnostics time series (CSV), legacy-ASCII VTK
field snapshots, and the resolved configuration for provenance.  Outputs are
deterministic: an identical config reproduces timeseries.csv byte for byte.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, field as dc_field, replace
from pathlib import Path

import numpy as np

from .diagnostics import (DiagnosticsRecord, PotentialRecovery, helicity,
                          lorentz_and_alpha, recover_potential)
from .errors import ConfigError, MfrelaxError
from .feec import OperatorSet, SpaceKind, assemble_operators
from .fields import (E3Params, HopfParams, eval_e3, eval_hopf,
                     init_divfree_field)
from .linalg import DirectSolver
from .mesh import StructuredHexMesh, box, build_mesh
from .schemes import (NewtonConfig, Scheme, SchemeKind, SchemeState,
                      StepReport, TimePhase, make_scheme, step_with_retry)

_FIELD_DEFAULTS = {
    "hopf": dict(nx=4, ny=4, nz=10, half_z=10.0,
                 phases=(TimePhase(1.0, 1.0, 100), TimePhase(100.0, 0.1, 99))),
    "e3": dict(nx=4, ny=4, nz=24, half_z=24.0,
               phases=(TimePhase(0.1, 1.0, 100), TimePhase(100.0, 0.1, 100))),
}


@dataclass
class RunConfig:
    scheme: SchemeKind
    field: str
    nx: int = 4
    ny: int = 4
    nz: int = 10
    half_xy: float = 4.0
    half_z: float = 10.0
    phases: tuple[TimePhase, ...] = ()
    gamma: float = 9e-5
    literal_switch: bool = False
    newton: NewtonConfig = dc_field(default_factory=NewtonConfig)
    output_dir: str = "output"
    cadence: int = 10
    write_csv: bool = True
    write_vtk: bool = True
    seed: int = 1234
    hopf_omega1: float = 3.0
    hopf_omega2: float = 2.0
    hopf_s: float = 1.0
    e3_B0: float = 1.0
    e3_k: float = 5.0

    def __post_init__(self):
        if self.field not in _FIELD_DEFAULTS:
            raise ConfigError(f"unknown value for key 'field': {self.field!r}")
        if not self.phases:
            raise ConfigError("at least one time phase is required")
        if min(self.nx, self.ny, self.nz) < 1 or self.half_xy <= 0 \
                or self.half_z <= 0:
            raise ConfigError("mesh keys must be positive")
        if self.cadence < 1:
            raise ConfigError("key 'cadence' must be >= 1")

    def items(self):
        """Resolved flat key=value pairs, defaults expanded."""
        phases = ";".join(f"{p.dt:g},{p.tau:g},{p.n_steps}"
                          for p in self.phases)
        return [
            ("scheme", self.scheme.value), ("field", self.field),
            ("nx", self.nx), ("ny", self.ny), ("nz", self.nz),
            ("half_xy", self.half_xy), ("half_z", self.half_z),
            ("phases", phases), ("gamma", self.gamma),
            ("literal_switch", self.literal_switch),
            ("newton_abs_tol", self.newton.abs_tol),
            ("newton_rel_tol", self.newton.rel_tol),
            ("newton_max_iter", self.newton.max_iter),
            ("output_dir", self.output_dir), ("cadence", self.cadence),
            ("write_csv", self.write_csv), ("write_vtk", self.write_vtk),
            ("seed", self.seed),
            ("hopf_omega1", self.hopf_omega1),
            ("hopf_omega2", self.hopf_omega2), ("hopf_s", self.hopf_s),
            ("e3_B0", self.e3_B0), ("e3_k", self.e3_k),
        ]


def _parse_phases(text: str) -> tuple[TimePhase, ...]:
    phases = []
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        bits = part.split(",")
        if len(bits) != 3:
            raise ConfigError(
                f"key 'phases': expected 'dt,tau,n_steps' triple, got {part!r}")
        try:
            phases.append(TimePhase(float(bits[0]), float(bits[1]),
                                    int(bits[2])))
        except ValueError as exc:
            raise ConfigError(f"key 'phases': {exc}") from exc
    return tuple(phases)


def _parse_bool(key: str, raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"key {key!r}: expected a boolean, got {raw!r}")


_INT_KEYS = {"nx", "ny", "nz", "cadence", "seed", "newton_max_iter"}
_FLOAT_KEYS = {"half_xy", "half_z", "gamma", "newton_abs_tol",
               "newton_rel_tol", "hopf_omega1", "hopf_omega2", "hopf_s",
               "e3_B0", "e3_k"}
_BOOL_KEYS = {"write_csv", "write_vtk", "literal_switch"}
_STR_KEYS = {"scheme", "field", "phases", "output_dir"}
_ALL_KEYS = _INT_KEYS | _FLOAT_KEYS | _BOOL_KEYS | _STR_KEYS


def parse_config(text: str) -> RunConfig:
    """Parse a flat key=value document into a validated RunConfig.

    Missing optional keys take field-dependent defaults; unknown keys are
    fatal and named in the error.
    """
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected key=value, "
                              f"got {stripped!r}")
        key, _, value = stripped.partition("=")
        key = key.strip()
        if key not in _ALL_KEYS:
            raise ConfigError(f"unknown key {key!r}")
        if key in raw:
            raise ConfigError(f"duplicate key {key!r}")
        raw[key] = value.strip()

    for required in ("scheme", "field"):
        if required not in raw:
            raise ConfigError(f"missing required key {required!r}")
    scheme_raw = raw.pop("scheme")
    try:
        scheme = SchemeKind(scheme_raw)
    except ValueError:
        raise ConfigError(
            f"unknown value for key 'scheme': {scheme_raw!r}") from None
    fieldname = raw.pop("field")
    if fieldname not in _FIELD_DEFAULTS:
        raise ConfigError(f"unknown value for key 'field': {fieldname!r}")
    defaults = _FIELD_DEFAULTS[fieldname]

    kwargs: dict = dict(scheme=scheme, field=fieldname,
                        nx=defaults["nx"], ny=defaults["ny"],
                        nz=defaults["nz"], half_z=defaults["half_z"],
                        phases=defaults["phases"])
    newton_kwargs: dict = {}
    for key, value in raw.items():
        try:
            if key in _INT_KEYS:
                parsed = int(value)
            elif key in _FLOAT_KEYS:
                parsed = float(value)
            elif key in _BOOL_KEYS:
                parsed = _parse_bool(key, value)
            elif key == "phases":
                parsed = _parse_phases(value)
            else:
                parsed = value
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"key {key!r}: {exc}") from exc
        if key.startswith("newton_"):
            newton_kwargs[key[len("newton_"):]] = parsed
        else:
            kwargs[key] = parsed
    if newton_kwargs:
        kwargs["newton"] = NewtonConfig(**newton_kwargs)
    return RunConfig(**kwargs)


# ---------------------------------------------------------------------------
# simulation driver
# ---------------------------------------------------------------------------

@dataclass
class RunResult:
    config: RunConfig
    mesh: StructuredHexMesh
    ops: OperatorSet
    scheme: Scheme
    state: SchemeState
    initial_state: SchemeState
    records: list[DiagnosticsRecord]
    reports: list[StepReport]
    files: list[Path]
    poincare: float | None = None


def _analytic_field(cfg: RunConfig):
    if cfg.field == "hopf":
        p = HopfParams(cfg.hopf_omega1, cfg.hopf_omega2, cfg.hopf_s)
        return (lambda pts: eval_hopf(pts, p)), None
    p = E3Params(B0=cfg.e3_B0, k=cfg.e3_k)
    return (lambda pts: eval_e3(pts, p)), p.background


class _Monitor:
    """Builds DiagnosticsRecords with cached factorizations."""

    def __init__(self, ops: OperatorSet):
        self.ops = ops
        self.potential = PotentialRecovery(ops)
        self._mc_solver = DirectSolver(ops.mass_hcurl_int.tocsc())
        self._weak_curl = (ops.curl_int.T @ ops.mass_hdiv_int).tocsr()

    def record(self, state: SchemeState, newton_iters: int
               ) -> DiagnosticsRecord:
        ops = self.ops
        B = state.B
        # a single consistent current density for all schemes: Mc j = curl' B
        j = ops.field(SpaceKind.HCURL,
                      self._mc_solver.solve(self._weak_curl @ B.values))
        A = state.A if state.A is not None else \
            recover_potential(ops, B, cache=self.potential)
        lorentz, alpha0 = lorentz_and_alpha(ops, B, j)
        div = float(np.abs(ops.div_int @ B.values).max())
        return DiagnosticsRecord(
            t=state.t, energy=state.energy,
            helicity=helicity(ops, A, B), lorentz=lorentz, div_norm=div,
            lambda_E=state.lambda_E, lambda_H=state.lambda_H,
            alpha0=alpha0, newton_iters=newton_iters)


def run_simulation(cfg: RunConfig, write: bool = True,
                   capture_every: int | None = None) -> RunResult:
    """Execute a configured run; returns in-memory results and output paths.

    ``capture_every`` retains every n-th saddle system of the multiplier
    scheme on the returned scheme object for solver cross-checks.
    """
    mesh = build_mesh(box(cfg.half_xy, cfg.half_z), cfg.nx, cfg.ny, cfg.nz)
    ops = assemble_operators(mesh)
    analytic, background = _analytic_field(cfg)
    B0 = init_divfree_field(mesh, ops, analytic,
                            subtract_background=background)
    scheme = make_scheme(cfg.scheme, ops, cfg.newton,
                         **({"gamma": cfg.gamma,
                             "literal_switch": cfg.literal_switch}
                            if cfg.scheme is SchemeKind.LAGRANGE else {}))
    if capture_every and cfg.scheme is SchemeKind.LAGRANGE:
        scheme.capture_every = capture_every
    state = scheme.initial_state(B0)
    initial = state.copy()
    monitor = _Monitor(ops)
    records = [monitor.record(state, 0)]
    reports: list[StepReport] = []
    snapshots = [(state.t, state.B.values.copy())]

    step_no = 0
    for phase_no, phase in enumerate(cfg.phases):
        for i in range(phase.n_steps):
            step_no += 1
            try:
                state, reps = step_with_retry(scheme, state, phase.dt,
                                              phase.tau)
            except MfrelaxError as exc:
                raise type(exc)(
                    f"step {step_no} (phase {phase_no + 1}, sub-step "
                    f"{i + 1}) failed: {exc}") from exc
            reports.extend(reps)
            iters = sum(r.newton_iters for r in reps)
            if step_no % cfg.cadence == 0:
                records.append(monitor.record(state, iters))
                snapshots.append((state.t, state.B.values.copy()))
        if step_no % cfg.cadence != 0:  # phase boundary / final sample
            records.append(monitor.record(
                state, sum(r.newton_iters for r in reports[-1:])))
            snapshots.append((state.t, state.B.values.copy()))

    result = RunResult(cfg, mesh, ops, scheme, state, initial, records,
                       reports, [])
    if write:
        result.files = write_outputs(records, snapshots, cfg, mesh, ops,
                                     background)
    return result


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

CSV_HEADER = ("t,energy,helicity,lorentz,div_norm,"
              "lambda_E,lambda_H,alpha0,newton_iters")


def _fmt(v: float) -> str:
    return f"{v:.17g}"


def records_to_csv(records: list[DiagnosticsRecord]) -> str:
    lines = [CSV_HEADER]
    for r in records:
        lines.append(",".join(
            [_fmt(r.t), _fmt(r.energy), _fmt(r.helicity), _fmt(r.lorentz),
             _fmt(r.div_norm), _fmt(r.lambda_E), _fmt(r.lambda_H),
             _fmt(r.alpha0), str(r.newton_iters)]))
    return "\n".join(lines) + "\n"


def cell_centered_field(mesh: StructuredHexMesh, ops: OperatorSet,
                        interior_fluxes: np.ndarray,
                        background: np.ndarray | None = None) -> np.ndarray:
    """Average the two opposing face fluxes per axis into cell vectors."""
    full = np.zeros(ops.space(SpaceKind.HDIV).n_dofs)
    full[ops.space(SpaceKind.HDIV).interior] = interior_fluxes
    nx, ny, nz = mesh.nx, mesh.ny, mesh.nz
    lx, ly, lz = mesh.domain.lengths
    hx, hy, hz = lx / nx, ly / ny, lz / nz
    areas = (hy * hz, hx * hz, hx * hy)
    out = np.zeros((nx * ny * nz, 3))
    for k in range(nz):
        for j in range(ny):
            for i in range(nx):
                c = mesh.cell_index(i, j, k)
                lo = (mesh.face_index(0, i, j, k),
                      mesh.face_index(1, i, j, k),
                      mesh.face_index(2, i, j, k))
                hi = (mesh.face_index(0, i + 1, j, k),
                      mesh.face_index(1, i, j + 1, k),
                      mesh.face_index(2, i, j, k + 1))
                for ax in range(3):
                    out[c, ax] = 0.5 * (full[lo[ax]] + full[hi[ax]]) \
                        / areas[ax]
    if background is not None:
        out += background
    return out


def write_vtk(path: Path, mesh: StructuredHexMesh, cell_vectors: np.ndarray,
              title: str = "magnetic field snapshot") -> None:
    """Legacy ASCII VTK with hexahedral cells and cell-centered vectors."""
    coords = mesh.vertex_coords()
    nx, ny, nz = mesh.nx, mesh.ny, mesh.nz
    ncell = nx * ny * nz
    lines = ["# vtk DataFile Version 3.0", title, "ASCII",
             "DATASET UNSTRUCTURED_GRID",
             f"POINTS {len(coords)} double"]
    lines.extend(" ".join(_fmt(v) for v in p) for p in coords)
    lines.append(f"CELLS {ncell} {9 * ncell}")
    for k in range(nz):
        for j in range(ny):
            for i in range(nx):
                v = [mesh.vertex_index(i, j, k),
                     mesh.vertex_index(i + 1, j, k),
                     mesh.vertex_index(i + 1, j + 1, k),
                     mesh.vertex_index(i, j + 1, k),
                     mesh.vertex_index(i, j, k + 1),
                     mesh.vertex_index(i + 1, j, k + 1),
                     mesh.vertex_index(i + 1, j + 1, k + 1),
                     mesh.vertex_index(i, j + 1, k + 1)]
                lines.append("8 " + " ".join(str(x) for x in v))
    lines.append(f"CELL_TYPES {ncell}")
    lines.extend(["12"] * ncell)
    lines.append(f"CELL_DATA {ncell}")
    lines.append("VECTORS B double")
    lines.extend(" ".join(_fmt(v) for v in row) for row in cell_vectors)
    try:
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise MfrelaxError(f"failed to write {path}: {exc}") from exc


def write_outputs(records, snapshots, cfg: RunConfig,
                  mesh: StructuredHexMesh, ops: OperatorSet,
                  background: np.ndarray | None) -> list[Path]:
    if not records:
        raise ValueError("no records to serialize")
    outdir = Path(cfg.output_dir)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise MfrelaxError(f"cannot create {outdir}: {exc}") from exc
    files = []
    if cfg.write_csv:
        csv_path = outdir / "timeseries.csv"
        try:
            csv_path.write_text(records_to_csv(records))
        except OSError as exc:
            raise MfrelaxError(f"failed to write {csv_path}: {exc}") from exc
        files.append(csv_path)
    if cfg.write_vtk:
        for t, fluxes in snapshots:
            vec = cell_centered_field(mesh, ops, fluxes, background)
            path = outdir / f"field_{t:g}.vtk"
            write_vtk(path, mesh, vec)
            files.append(path)
    resolved = outdir / "resolved_config.txt"
    resolved.write_text(
        "\n".join(f"{k}={v}" for k, v in cfg.items()) + "\n")
    files.append(resolved)
    return files


# ---------------------------------------------------------------------------
# command line
# ---------------------------------------------------------------------------

def _load_config(path: str, overrides: list[str]) -> RunConfig:
    text = Path(path).read_text() if path else ""
    if overrides:
        text += "\n" + "\n".join(overrides)
    return parse_config(text)


def _cmd_run(args) -> int:
    cfg = _load_config(args.config, args.set or [])
    result = run_simulation(cfg)
    final = result.records[-1]
    print(f"scheme={cfg.scheme.value} field={cfg.field} "
          f"t={final.t:g} energy={final.energy:.12g} "
          f"helicity={final.helicity:.12g} steps={len(result.reports)}")
    for f in result.files[:1] + result.files[-1:]:
        print(f"wrote {f}")
    return 0


def _cmd_check(args) -> int:
    cfg = _load_config(args.config, args.set or [])
    n = args.steps
    phases, total = [], 0
    for p in cfg.phases:
        take = min(p.n_steps, n - total)
        if take > 0:
            phases.append(TimePhase(p.dt, p.tau, take))
            total += take
    cfg = replace(cfg, phases=tuple(phases), write_vtk=False,
                  write_csv=False)
    result = run_simulation(cfg, write=False)
    ok = True

    def report(name, passed, detail):
        nonlocal ok
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'} {name}: {detail}")

    max_div = max(r.div_norm for r in result.reports)
    bnorm = max(1.0, float(np.linalg.norm(result.state.B.values)))
    report("gauss-law", max_div <= 1e-11 * bnorm, f"max div {max_div:.3e}")
    energies = [result.initial_state.energy] + \
        [r.energy for r in result.reports]
    worst = max(e1 - e0 for e0, e1 in zip(energies, energies[1:]))
    report("energy-monotone",
           worst <= 1e-9 * max(1.0, max(energies)), f"worst rise {worst:.3e}")
    if cfg.scheme is not SchemeKind.NONCONSERVATIVE:
        h = [r.helicity for r in result.records]
        drift = max(abs(x - h[0]) for x in h)
        report("helicity-conservation",
               drift <= 1e-8 * max(1.0, abs(h[0])), f"drift {drift:.3e}")
    if cfg.scheme is SchemeKind.PROJECTION:
        worst_o = max(abs(r.orthogonality) for r in result.reports)
        report("orthogonality", worst_o <= 1e-12, f"max |(E,H)| {worst_o:.3e}")
    return 0 if ok else 1


def _cmd_compare(args) -> int:
    base = _load_config(args.config, args.set or []) if args.config else None
    fieldname = args.field or (base.field if base else "hopf")
    rows = []
    for kind in SchemeKind:
        text = f"scheme={kind.value}\nfield={fieldname}\n"
        if args.set:
            text += "\n".join(s for s in args.set
                              if not s.startswith("scheme=")) + "\n"
        cfg = parse_config(text)
        cfg = replace(cfg, output_dir=str(Path(cfg.output_dir) / kind.value))
        result = run_simulation(cfg, write=not args.no_write)
        r0, r1 = result.records[0], result.records[-1]
        rows.append((kind.value, r1.t, r0.energy, r1.energy, r0.helicity,
                     r1.helicity))
    print("scheme t_final energy_0 energy_final helicity_0 helicity_final")
    for row in rows:
        print(f"{row[0]} {row[1]:g} " + " ".join(f"{v:.9g}"
                                                 for v in row[2:]))
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mfrelax",
        description="Structure-preserving magneto-frictional relaxation")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a configured simulation")
    p_run.add_argument("config", help="path to a key=value config file")
    p_run.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config key")
    p_run.set_defaults(func=_cmd_run)

    p_check = sub.add_parser(
        "check", help="run the invariant suite on a config for N steps")
    p_check.add_argument("config", help="path to a key=value config file")
    p_check.add_argument("--steps", type=int, default=10)
    p_check.add_argument("--set", action="append", metavar="KEY=VALUE")
    p_check.set_defaults(func=_cmd_check)

    p_cmp = sub.add_parser(
        "compare", help="run all three schemes on one field")
    p_cmp.add_argument("--field", choices=sorted(_FIELD_DEFAULTS))
    p_cmp.add_argument("--config", default=None)
    p_cmp.add_argument("--set", action="append", metavar="KEY=VALUE")
    p_cmp.add_argument("--no-write", action="store_true")
    p_cmp.set_defaults(func=_cmd_compare)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except MfrelaxError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
