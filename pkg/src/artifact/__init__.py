"""Two-species Vlasov-Poisson-Landau perturbation solver on a bounded box with specular walls."""

from .diagnostics import Diagnostics, EnergyReport, boundary_compatibility, fit_decay, fluid_residuals
from .errors import ConfigError, SolvabilityError, SolverError, TableError
from .field import FieldState, PoissonSolver, solve_poisson
from .geometry import Box, DistState, SpatialDomain, VelocityGrid, build_domain, reflect
from .integrator import StepConfig, Stepper, run
from .landau import LandauOperator, PotentialParams, SplitParams, WeightSpec
from .maxwellian import Projector, gauss_moment, project_P
from .transport import Transport, check_cfl

__all__ = [
    "Box",
    "ConfigError",
    "Diagnostics",
    "DistState",
    "EnergyReport",
    "FieldState",
    "LandauOperator",
    "PoissonSolver",
    "PotentialParams",
    "Projector",
    "SolvabilityError",
    "SolverError",
    "SpatialDomain",
    "SplitParams",
    "StepConfig",
    "Stepper",
    "TableError",
    "Transport",
    "VelocityGrid",
    "WeightSpec",
    "boundary_compatibility",
    "build_domain",
    "check_cfl",
    "fit_decay",
    "fluid_residuals",
    "gauss_moment",
    "project_P",
    "reflect",
    "run",
    "solve_poisson",
]
