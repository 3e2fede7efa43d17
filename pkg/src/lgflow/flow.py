"""Implicit-Euler evolution: chained certified resolvent steps.

The abstract Cauchy problem u' + dF(u) = 0 is discretised by pure implicit
Euler: each state minimises F(v) + ||v - u_prev||^2/(2 tau), solved by the
resolvent module and certified step by step. The chaining inherits the
resolvent's contractivity, so energies decay, consecutive increments shrink
for constant step sizes, and the Neumann mean is conserved along the way.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import certify as _certify
from .grid import (
    BoundaryCondition,
    FluxField,
    GridSpec,
    ScalarField,
    cell_norm,
)
from .lagrangian import LagrangianSpec
from .resolvent import ProblemKernel, ResolventProblem, SolverOptions

DEFAULT_STEP_COUNT = 256


@dataclass(frozen=True)
class FlowProblem:
    """Initial state, horizon, and the per-step setting (fixed tau or schedule)."""

    grid: GridSpec
    lagrangian: LagrangianSpec
    bc: BoundaryCondition
    u0: ScalarField
    horizon: float
    tau: Optional[float] = None
    schedule: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        if not np.isfinite(self.horizon) or self.horizon <= 0:
            raise ValueError("horizon must be a positive real")
        if self.u0.grid != self.grid:
            raise ValueError("u0 lives on a different grid")
        if self.tau is not None and self.schedule is not None:
            raise ValueError("give either a fixed tau or a schedule, not both")
        if self.tau is not None and self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.schedule is not None:
            sched = tuple(float(t) for t in self.schedule)
            if any(t <= 0 for t in sched):
                raise ValueError("schedule entries must be positive")
            if sum(sched) < self.horizon * (1.0 - 1e-12):
                raise ValueError("schedule does not cover the horizon")
            object.__setattr__(self, "schedule", sched)

    def step_sizes(self) -> list[float]:
        """The tau sequence actually run; covers the horizon, may overshoot."""
        if self.schedule is not None:
            steps, t = [], 0.0
            for tau in self.schedule:
                if t >= self.horizon * (1.0 - 1e-12):
                    break
                steps.append(tau)
                t += tau
            return steps
        tau = self.tau if self.tau is not None else self.horizon / DEFAULT_STEP_COUNT
        count = max(1, math.ceil(self.horizon / tau - 1e-9))
        return [tau] * count


@dataclass(frozen=True)
class Trajectory:
    """Certified discrete evolution: states at times, energies, diagnostics."""

    times: tuple[float, ...]
    states: tuple[ScalarField, ...]
    fluxes: Optional[tuple[FluxField, ...]]
    energies: tuple[float, ...]
    step_norms: tuple[float, ...]
    certificates: tuple

    def energy_monotone(self, slack: float = 0.0) -> bool:
        return all(
            self.energies[k + 1] <= self.energies[k] + slack
            for k in range(len(self.energies) - 1)
        )

    def step_norms_monotone(self, slack: float = 0.0) -> bool:
        return all(
            self.step_norms[k + 1] <= self.step_norms[k] + slack
            for k in range(len(self.step_norms) - 1)
        )


class NonConvergedStepError(RuntimeError):
    """A resolvent step hit the iteration cap; carries the partial trajectory."""

    def __init__(self, step_index: int, solution, partial: Trajectory):
        super().__init__(
            f"step {step_index} did not converge "
            f"(gap {solution.gap:.3e} after {solution.iterations} iterations)"
        )
        self.step_index = step_index
        self.solution = solution
        self.partial = partial


def evolve(
    problem: FlowProblem,
    opts: SolverOptions | None = None,
    store_flux: bool = True,
) -> Trajectory:
    """Run the implicit-Euler chain, certifying every step.

    Certificates are always computed; fluxes are only retained when
    ``store_flux`` is set. A non-converged step aborts with the partial
    trajectory attached to the raised error.
    """
    opts = opts if opts is not None else SolverOptions()
    kern = ProblemKernel(problem.grid, problem.lagrangian, problem.bc)

    times = [0.0]
    states = [problem.u0]
    fluxes: list[FluxField] = []
    energies = [kern.functional(problem.u0.values)]
    step_norms: list[float] = []
    certificates = []

    def assemble(partial_ok: bool) -> Trajectory:
        return Trajectory(
            times=tuple(times),
            states=tuple(states),
            fluxes=tuple(fluxes) if store_flux else None,
            energies=tuple(energies),
            step_norms=tuple(step_norms),
            certificates=tuple(certificates),
        )

    warm = None
    t = 0.0
    for k, tau in enumerate(problem.step_sizes()):
        g = states[-1].values
        sol = kern.solve(g, tau, opts, warm=warm)
        if not sol.converged:
            raise NonConvergedStepError(k, sol, assemble(False))
        z_bd = [list(pair) for pair in sol.z.boundary]
        cert = _certify._report_from_kernel(
            kern,
            g,
            tau,
            sol.u.values,
            list(sol.z.interior),
            z_bd,
            opts.tolerance,
        )
        t += tau
        times.append(t)
        states.append(sol.u)
        if store_flux:
            fluxes.append(sol.z)
        energies.append(kern.functional(sol.u.values))
        step_norms.append(cell_norm(problem.grid, sol.u.values - g) / tau)
        certificates.append(cert)
        warm = (
            sol.u.values,
            [np.array(a) for a in sol.z.interior],
            None
            if problem.bc.kind == "neumann"
            else [[np.array(lo), np.array(hi)] for lo, hi in sol.z.boundary],
        )
    return assemble(True)


def steady_state(
    trajectory: Trajectory, opts: SolverOptions
) -> Optional[tuple[ScalarField, float]]:
    """First state whose increment rate drops below tolerance, if any."""
    if not trajectory.states:
        raise ValueError("empty trajectory")
    for k, rate in enumerate(trajectory.step_norms):
        u_prev = trajectory.states[k]
        scale = 1.0 + cell_norm(u_prev.grid, u_prev.values)
        if rate <= opts.tolerance * scale:
            return trajectory.states[k + 1], trajectory.times[k + 1]
    return None
