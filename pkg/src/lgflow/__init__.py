"""Certified gradient flows of convex linear-growth energies on staggered grids.

Each implicit time step is solved through its Fenchel-Rockafellar dual and
ships with a duality-gap certificate plus pointwise residuals for the
weak-solution conditions (subgradient inclusion, divergence equation,
boundary behaviour).
"""

from .certify import CertificateReport, certify_dirichlet, certify_neumann, certify_step
from .flow import FlowProblem, NonConvergedStepError, Trajectory, evolve, steady_state
from .grid import (
    BoundaryCondition,
    FluxField,
    GridSpec,
    ScalarField,
    boundary_trace,
    divergence,
    face_inner_product,
    gradient,
    inner_product,
    read_flux,
    read_scalar,
    write_flux,
    write_scalar,
)
from .lagrangian import ExtendedValue, LagrangianSpec, ProxSolveError
from .resolvent import (
    ResolventProblem,
    ResolventSolution,
    SolverOptions,
    dual_energy,
    primal_energy,
    solve,
)

__all__ = [
    "BoundaryCondition",
    "CertificateReport",
    "ExtendedValue",
    "FlowProblem",
    "FluxField",
    "GridSpec",
    "LagrangianSpec",
    "NonConvergedStepError",
    "ProxSolveError",
    "ResolventProblem",
    "ResolventSolution",
    "ScalarField",
    "SolverOptions",
    "Trajectory",
    "boundary_trace",
    "certify_dirichlet",
    "certify_neumann",
    "certify_step",
    "divergence",
    "dual_energy",
    "evolve",
    "face_inner_product",
    "gradient",
    "inner_product",
    "primal_energy",
    "read_flux",
    "read_scalar",
    "solve",
    "steady_state",
    "write_flux",
    "write_scalar",
]

__version__ = "0.1.0"
