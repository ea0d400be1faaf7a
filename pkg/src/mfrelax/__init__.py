"""Structure-preserving finite-element magneto-frictional relaxation."""

from .errors import (ConfigError, EvaluationError, FactorizationError,
                     InitializationError, LinearAlgebraError, MfrelaxError,
                     NewtonError, PreconditionError, SchurDegeneracyError)
from .mesh import CuboidDomain, EntityRef, StructuredHexMesh, box, build_mesh
from .feec import (FieldCoefficients, OperatorSet, Space, SpaceKind,
                   assemble_operators, interpolate, l2_project_div_to_curl)
from .linalg import (BlockPreconditioner, BlockSaddleSystem, DirectSolver,
                     GmresResult, LinearOperator, SolverConfig, fgmres,
                     solve_direct, solve_saddle, solve_saddle_monolithic)
from .fields import (E3Params, HopfParams, divergence_clean, eval_e3,
                     eval_hopf, init_divfree_field)
from .schemes import (LagrangeMultiplierScheme, NewtonConfig,
                      NonConservativeScheme, ProjectionScheme, Scheme,
                      SchemeKind, SchemeState, StepReport, TimePhase,
                      make_scheme, newton_solve, step_with_retry)
from .diagnostics import (DiagnosticsRecord, PotentialRecovery, div_norm,
                          energy, helicity, lorentz_and_alpha,
                          poincare_constant, recover_potential,
                          variational_check)
from .cli import RunConfig, RunResult, main, parse_config, run_simulation

__version__ = "0.1.0"
