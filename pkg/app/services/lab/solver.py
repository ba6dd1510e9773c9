"""
Time Stepper

Advances the coupled (omega_theta, rho) system

    d_t omega + u.grad omega = Delta_h omega - omega/r^2 - d_r rho + (u^r/r) omega
    d_t rho   + u.grad rho   = Delta_h rho

with implicit horizontal diffusion and explicit advection, buoyancy torque
and vortex stretching. Two schemes are available: CNAB2 (Crank-Nicolson +
Adams-Bashforth 2, Euler bootstrap) and the three-stage low-storage
RK3-IMEX of Spalart, Moser and Rogers.

Dissipation acts only horizontally, so the implicit operators do not depend
on the z wavenumber: one factorization per field serves every z column.
"""

import enum
import logging
import math
from functools import lru_cache
from pathlib import Path
from typing import Callable, Iterable, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.core.errors import CFLViolation, NonFiniteFieldError, NumericalAbort, SimulationAbort
from app.services.lab.diagnostics import DiagnosticsRecord, observe
from app.services.lab.fields import (
    Boundary,
    MeridianGrid,
    Parity,
    ScalarField2D,
    VelocityField2D,
    check_same_grid,
    d_r,
    dealias_values,
    radial_laplacian,
    spectral_dz,
    write_snapshot,
)
from app.services.lab.poisson import solve_streamfunction, velocity_from_streamfunction
from app.services.lab.tridiagonal import TridiagonalFactorization

logger = logging.getLogger(__name__)

ForcingFn = Callable[[float], np.ndarray]

# Low-storage RK3 coefficients (explicit gamma/zeta, implicit alpha/beta)
RK3_GAMMA = (8.0 / 15.0, 5.0 / 12.0, 3.0 / 4.0)
RK3_ZETA = (0.0, -17.0 / 60.0, -5.0 / 12.0)
RK3_ALPHA = (29.0 / 96.0, -3.0 / 40.0, 1.0 / 6.0)
RK3_BETA = (37.0 / 160.0, 5.0 / 24.0, 1.0 / 6.0)


class Scheme(str, enum.Enum):
    CNAB2 = "CNAB2"
    RK3_IMEX = "RK3-IMEX"


class StepConfig(BaseModel):
    """Per-run stepping parameters.

    Attributes:
        dt: time step
        scheme: CNAB2 or RK3-IMEX
        dealias: apply the 2/3 rule in z to nonlinear products
        forcing_omega: optional f(t) -> samples added to the vorticity tendency
        forcing_rho: optional f(t) -> samples added to the density tendency
        explicit_terms: when False, advection, buoyancy and stretching are off
        cfl_limit: largest admissible advective CFL number
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    dt: float = Field(gt=0)
    scheme: Scheme = Scheme.CNAB2
    dealias: bool = True
    forcing_omega: Optional[ForcingFn] = None
    forcing_rho: Optional[ForcingFn] = None
    explicit_terms: bool = True
    cfl_limit: float = Field(default=0.5, gt=0)


class SimState(BaseModel):
    """Time-stamped (omega_theta, rho) with the derived streamfunction and velocity.

    Build states with `from_fields`, which keeps the velocity cache coherent.
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    t: float
    omega: ScalarField2D
    rho: ScalarField2D
    psi: ScalarField2D
    velocity: VelocityField2D
    prev_tendencies: Optional[Tuple[ScalarField2D, ScalarField2D]] = None

    @model_validator(mode="after")
    def _check_state(self) -> "SimState":
        check_same_grid(self.omega, self.rho, self.psi, self.velocity.ur)
        if self.omega.parity is not Parity.ODD or self.rho.parity is not Parity.EVEN:
            raise ValueError("state requires odd omega and even rho")
        if not math.isfinite(self.t):
            raise NonFiniteFieldError("t")
        return self

    @classmethod
    def from_fields(cls, t: float, omega: ScalarField2D, rho: ScalarField2D,
                    prev_tendencies: Optional[Tuple[ScalarField2D, ScalarField2D]] = None) -> "SimState":
        psi = solve_streamfunction(omega)
        return cls(t=t, omega=omega, rho=rho, psi=psi,
                   velocity=velocity_from_streamfunction(psi),
                   prev_tendencies=prev_tendencies)

    @property
    def grid(self) -> MeridianGrid:
        return self.omega.grid

    def is_coherent(self, rtol: float = 1e-12) -> bool:
        """Recompute the velocity from omega and compare with the cache."""
        fresh = velocity_from_streamfunction(solve_streamfunction(self.omega))
        scale = max(float(np.max(np.abs(fresh.ur.values))), float(np.max(np.abs(fresh.uz.values))), 1e-300)
        diff = max(float(np.max(np.abs(fresh.ur.values - self.velocity.ur.values))),
                   float(np.max(np.abs(fresh.uz.values - self.velocity.uz.values))))
        return diff <= rtol * scale or diff == 0.0


# =============================================================================
# Explicit terms
# =============================================================================

def cfl_number(velocity: VelocityField2D, dt: float) -> float:
    grid = velocity.grid
    return dt * max(float(np.max(np.abs(velocity.ur.values))) / grid.dr,
                    float(np.max(np.abs(velocity.uz.values))) / grid.dz)


def _advection_values(velocity: VelocityField2D, f: ScalarField2D) -> np.ndarray:
    grid = f.grid
    r = grid.r_nodes[:, None]
    v = f.values

    # face mass fluxes U_{i+1/2}; the axis and wall faces carry none
    ru = r * velocity.ur.values
    flux = np.zeros((grid.nr + 1, grid.nz))
    flux[1:-1] = 0.5 * (ru[:-1] + ru[1:])
    outward, inward = flux[1:], flux[:-1]

    below = np.empty_like(v)
    below[0] = f.parity.sign * v[0]
    below[1:] = v[:-1]
    above = np.empty_like(v)
    above[:-1] = v[1:]
    above[-1] = v[-1]

    conservative = (outward * (v + above) - inward * (below + v)) / (2.0 * r * grid.dr)
    advective = (outward * (above - v) + inward * (v - below)) / (2.0 * r * grid.dr)
    radial = 0.5 * (conservative + advective)

    uz = velocity.uz.values
    vertical = 0.5 * (uz * spectral_dz(v, grid) + spectral_dz(uz * v, grid))
    return radial + vertical


def advection(velocity: VelocityField2D, f: ScalarField2D, dealias: bool = False) -> ScalarField2D:
    """Skew-symmetric advection 1/2 [u.grad f + div(u f)].

    Energy neutral in the weighted inner product for any face fluxes; with
    dealias=True it stays neutral for fields already free of the truncated modes.
    """
    check_same_grid(velocity.ur, f)
    out = _advection_values(velocity, f)
    if dealias:
        out = dealias_values(out, f.grid)
    return f.with_values(out, label=f"adv_{f.label}")


def explicit_tendency(state: SimState, cfg: Optional[StepConfig] = None) -> Tuple[ScalarField2D, ScalarField2D]:
    """Explicit right-hand sides (T_omega, T_rho) at state.t.

    T_omega = -adv(u, omega) - d_r rho + (u^r/r) omega + F_omega
    T_rho   = -adv(u, rho) + F_rho
    """
    grid = state.grid
    dealias = True if cfg is None else cfg.dealias
    if cfg is not None and cfg.explicit_terms:
        cfl = cfl_number(state.velocity, cfg.dt)
        if cfl > cfg.cfl_limit:
            raise CFLViolation(cfl, cfg.cfl_limit)

    if cfg is None or cfg.explicit_terms:
        r = grid.r_nodes[:, None]
        nonlinear_omega = -_advection_values(state.velocity, state.omega) \
            + (state.velocity.ur.values / r) * state.omega.values
        nonlinear_rho = -_advection_values(state.velocity, state.rho)
        if dealias:
            nonlinear_omega = dealias_values(nonlinear_omega, grid)
            nonlinear_rho = dealias_values(nonlinear_rho, grid)
        t_omega = nonlinear_omega - d_r(state.rho).values
        t_rho = nonlinear_rho
    else:
        t_omega = np.zeros((grid.nr, grid.nz))
        t_rho = np.zeros((grid.nr, grid.nz))

    if cfg is not None and cfg.forcing_omega is not None:
        t_omega = t_omega + cfg.forcing_omega(state.t)
    if cfg is not None and cfg.forcing_rho is not None:
        t_rho = t_rho + cfg.forcing_rho(state.t)

    return (
        ScalarField2D(grid=grid, values=t_omega, parity=Parity.ODD, label="T_omega"),
        ScalarField2D(grid=grid, values=t_rho, parity=Parity.EVEN, label="T_rho"),
    )


# =============================================================================
# Implicit operators
# =============================================================================

class ImplicitOperators:
    """Diffusion operators and their shifted factorizations for one (grid, dt, scheme)."""

    def __init__(self, grid: MeridianGrid, dt: float, scheme: Scheme):
        self.omega_op = radial_laplacian(grid, Boundary.DIRICHLET, shift_inverse_r2=True)
        self.rho_op = radial_laplacian(grid, Boundary.NEUMANN)
        if scheme is Scheme.CNAB2:
            shifts = (0.5 * dt,)
        else:
            shifts = tuple(beta * dt for beta in RK3_BETA)
        self.omega_solvers: Tuple[TridiagonalFactorization, ...] = tuple(
            self.omega_op.shifted(s).factorize() for s in shifts)
        self.rho_solvers: Tuple[TridiagonalFactorization, ...] = tuple(
            self.rho_op.shifted(s).factorize() for s in shifts)
        logger.info(f"Implicit operators factorized: scheme={scheme.value}, dt={dt}, nr={grid.nr}")


@lru_cache(maxsize=16)
def implicit_operators(grid: MeridianGrid, dt: float, scheme: Scheme) -> ImplicitOperators:
    return ImplicitOperators(grid, dt, scheme)


def _cnab2(state: SimState, cfg: StepConfig) -> SimState:
    dt = cfg.dt
    ops = implicit_operators(state.grid, dt, cfg.scheme)
    t_omega, t_rho = explicit_tendency(state, cfg)
    if state.prev_tendencies is None:
        e_omega, e_rho = t_omega.values, t_rho.values
    else:
        p_omega, p_rho = state.prev_tendencies
        e_omega = 1.5 * t_omega.values - 0.5 * p_omega.values
        e_rho = 1.5 * t_rho.values - 0.5 * p_rho.values

    omega = state.omega.values
    rho = state.rho.values
    rhs_omega = omega + 0.5 * dt * ops.omega_op.apply(omega) + dt * e_omega
    rhs_rho = rho + 0.5 * dt * ops.rho_op.apply(rho) + dt * e_rho
    new_omega = state.omega.with_values(ops.omega_solvers[0].solve(rhs_omega))
    new_rho = state.rho.with_values(ops.rho_solvers[0].solve(rhs_rho))
    return SimState.from_fields(state.t + dt, new_omega, new_rho, prev_tendencies=(t_omega, t_rho))


def _rk3_imex(state: SimState, cfg: StepConfig) -> SimState:
    dt = cfg.dt
    ops = implicit_operators(state.grid, dt, cfg.scheme)
    stage = state
    t_stage = state.t
    previous = None
    for k in range(3):
        t_omega, t_rho = explicit_tendency(stage, cfg)
        omega = stage.omega.values
        rho = stage.rho.values
        rhs_omega = omega + dt * (RK3_ALPHA[k] * ops.omega_op.apply(omega) + RK3_GAMMA[k] * t_omega.values)
        rhs_rho = rho + dt * (RK3_ALPHA[k] * ops.rho_op.apply(rho) + RK3_GAMMA[k] * t_rho.values)
        if previous is not None:
            rhs_omega = rhs_omega + dt * RK3_ZETA[k] * previous[0].values
            rhs_rho = rhs_rho + dt * RK3_ZETA[k] * previous[1].values
        t_stage = t_stage + (RK3_GAMMA[k] + RK3_ZETA[k]) * dt
        stage = SimState.from_fields(
            t_stage,
            stage.omega.with_values(ops.omega_solvers[k].solve(rhs_omega)),
            stage.rho.with_values(ops.rho_solvers[k].solve(rhs_rho)),
        )
        previous = (t_omega, t_rho)
    # land exactly on t + dt
    return stage.model_copy(update={"t": state.t + dt})


def step(state: SimState, cfg: StepConfig) -> SimState:
    """Advance one time step; raises CFLViolation or NonFiniteFieldError."""
    if cfg.scheme is Scheme.CNAB2:
        return _cnab2(state, cfg)
    return _rk3_imex(state, cfg)


# =============================================================================
# Run loop
# =============================================================================

Observer = Callable[[SimState, DiagnosticsRecord], None]


def run(initial: SimState, cfg: StepConfig, t_end: float,
        observers: Iterable[Observer] = (),
        observe_every: int = 1,
        snapshot_every: int = 0,
        snapshot_dir: Optional[Path] = None) -> DiagnosticsRecord:
    """Step until t >= t_end, recording diagnostics at the observer cadence.

    Args:
        initial: starting state
        cfg: stepping parameters
        t_end: final time (t_end == initial.t gives an empty record)
        observers: callbacks invoked after each recorded row
        observe_every: record every this many steps (the final step is always recorded)
        snapshot_every: write a snapshot every this many steps (0 disables)
        snapshot_dir: destination of snapshots and abort dumps

    Returns:
        DiagnosticsRecord of the run
    """
    if t_end < initial.t:
        raise ValueError(f"t_end {t_end} precedes the initial time {initial.t}")
    record = DiagnosticsRecord()
    if t_end == initial.t:
        return record

    observers = list(observers)
    n_steps = max(1, math.ceil((t_end - initial.t) / cfg.dt - 1e-9))
    logger.info(f"Run start: t={initial.t}, t_end={t_end}, dt={cfg.dt}, steps={n_steps}, scheme={cfg.scheme.value}")

    def _observe(state: SimState) -> None:
        record.append(observe(state, cfl_number(state.velocity, cfg.dt)))
        for callback in observers:
            callback(state, record)

    state = initial
    _observe(state)
    for index in range(1, n_steps + 1):
        try:
            state = step(state, cfg)
        except NumericalAbort as exc:
            dump = None
            if snapshot_dir is not None:
                dump = write_snapshot(Path(snapshot_dir) / f"abort_{index:06d}.axbq", state.t, state.omega, state.rho)
            record.mark_abort(index, state.t, str(exc))
            logger.error(f"Run aborted at step {index} (t={state.t}): {exc}")
            raise SimulationAbort(index, exc, record, dump) from exc
        if index % observe_every == 0 or index == n_steps:
            _observe(state)
        if snapshot_every and snapshot_dir is not None and index % snapshot_every == 0:
            write_snapshot(Path(snapshot_dir) / f"snap_{index:06d}.axbq", state.t, state.omega, state.rho)

    logger.info(f"Run finished: t={state.t}, rows={len(record.rows)}")
    return record
