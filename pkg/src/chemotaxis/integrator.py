"""Time stepping: explicit Euler or IMEX (explicit transport/reaction, implicit diffusion).

The run loop stops on whichever comes first: the final time, a sup-norm above
the blow-up threshold (the discrete face of the extensibility criterion
||u||_inf + ||v||_{W^{1,inf}} -> inf), a breach of the v floor, or a step size
that would have to drop below ``dt_min``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

import numpy as np

from .model import Grid, Params, State, ValidationError
from .operators import (
    VFloorBreach,
    VFloorPolicy,
    FaceVelocity,
    chemo_divergence,
    face_drift,
    helmholtz_solve,
    laplacian_neumann,
)

log = logging.getLogger(__name__)

SCHEMES = ("explicit-euler", "imex-diffusion")

COMPLETED = "completed"
BLOWUP = "blowup-detected"
FLOOR_BREACH = "v-floor-breached"
DT_UNDERFLOW = "dt-underflow"

# forcing(t) -> (f_u, f_v) evaluated on the grid at time t
Forcing = Callable[[float], "tuple[np.ndarray, np.ndarray]"]


class DtUnderflow(RuntimeError):
    pass


class BlowupDetected(RuntimeError):
    pass


@dataclass(frozen=True)
class SchemeConfig:
    scheme: str = "imex-diffusion"
    t_end: float = 1.0
    dt_max: float = 0.05
    dt_min: float = 1e-12
    cfl_diffusion: float = 0.9
    cfl_advection: float = 0.5
    blowup_threshold: float = 1e6
    helmholtz_tol: float = 1e-10

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if not 0.0 < self.dt_min <= self.dt_max:
            raise ValueError("need 0 < dt_min <= dt_max")
        if not self.t_end > 0.0:
            raise ValueError("t_end must be positive")
        if not self.blowup_threshold > 0.0:
            raise ValueError("blowup_threshold must be positive")
        for name in ("cfl_diffusion", "cfl_advection"):
            if not 0.0 < getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1]")


@dataclass
class RunOutcome:
    status: str
    state: State
    steps: int
    detected_time: Optional[float] = None
    message: str = ""
    records: list = field(default_factory=list)

    @property
    def completed(self) -> bool:
        return self.status == COMPLETED


def stable_dt(state: State, drift: FaceVelocity, grid: Grid, cfg: SchemeConfig,
              params: Params, u_max: float | None = None) -> float:
    d = grid.dim
    h = grid.h_min
    limits = [cfg.dt_max]
    if cfg.scheme == "explicit-euler":
        limits.append(cfg.cfl_diffusion * h * h / (2.0 * d))
    vmax = drift.max_abs()
    if vmax > 0.0:
        limits.append(cfg.cfl_advection * h / (2.0 * d * vmax))
    if u_max is None:
        u_max = float(state.u.max())
    limits.append(0.5 / (params.r + params.mu * u_max + params.alpha + params.beta))
    dt = min(limits)
    if dt < cfg.dt_min:
        raise DtUnderflow(f"stable dt {dt:.3e} below dt_min {cfg.dt_min:.3e}")
    return dt


def _reaction_u(u: np.ndarray, transport: np.ndarray, dt: float, params: Params) -> np.ndarray:
    """u + dt*transport + dt*(r u - μ u²), with the Patankar form where that goes negative."""
    out = params.r - params.mu * u
    out *= u
    out += transport
    out *= dt
    out += u
    if out.min() < 0.0:
        safe = u * (1.0 + dt * params.r) / (1.0 + dt * params.mu * u) + dt * transport
        out = np.where(out < 0.0, safe, out)
    return out


def step(state: State, dt: float, params: Params, cfg: SchemeConfig, floor: VFloorPolicy,
         grid: Grid, forcing: Forcing | None = None, drift: FaceVelocity | None = None) -> State:
    """Advance one step of size ``dt``; raises VFloorBreach or BlowupDetected."""
    u, v = state.u, state.v
    if drift is None:
        drift = face_drift(v, params, floor, grid)
    if forcing is not None:
        f_u, f_v = forcing(state.t)
    else:
        f_u = f_v = None

    # transport part of u: (Δu) - div(u drift) + f_u
    tr = chemo_divergence(u, drift, grid)
    tr *= -1.0
    # explicit v right-hand side without diffusion: -αv + βu + f_v
    rv = params.beta * u
    rv -= params.alpha * v
    if f_v is not None:
        tr += f_u
        rv += f_v

    if cfg.scheme == "explicit-euler":
        tr += laplacian_neumann(u, grid)
        rv += laplacian_neumann(v, grid)
        u_new = _reaction_u(u, tr, dt, params)
        rv *= dt
        rv += v
        v_new = rv
    else:
        u_half = _reaction_u(u, tr, dt, params)
        rv *= dt
        rv += v
        u_new = helmholtz_solve(u_half, dt, grid, cfg.helmholtz_tol)
        v_new = helmholtz_solve(rv, dt, grid, cfg.helmholtz_tol)

    if not (np.isfinite(u_new.max()) and np.isfinite(v_new.max())):
        raise BlowupDetected(f"non-finite field after step at t={state.t:.6g}")
    return State(u_new, v_new, state.t + dt)


def sup_norms(state: State, grid: Grid) -> tuple[float, float]:
    """(||u||_inf, ||v||_inf + max face |∂v|) used by the blow-up detector."""
    from .diagnostics import max_face_gradient

    return float(np.max(np.abs(state.u))), float(np.max(np.abs(state.v))) + max_face_gradient(state.v, grid)


def run(initial: State, params: Params, cfg: SchemeConfig, floor: VFloorPolicy, grid: Grid,
        diag=None, sinks: Iterable[Callable] = (), forcing: Forcing | None = None,
        keep_records: bool = False) -> RunOutcome:
    """Step from ``initial`` to ``cfg.t_end`` unless an abort condition trips first.

    ``diag`` is a :class:`~chemotaxis.diagnostics.DiagSpec` (or None for no
    records). Every record goes to each sink callable; with ``keep_records``
    they are also collected on the outcome. Aborts are reported through
    ``RunOutcome.status``; nothing is raised for them.
    """
    from .diagnostics import DiagnosticOverflow, eval_record

    sinks = list(sinks)
    collected: list = []
    state = initial.copy()
    steps = 0
    last_dt = 0.0
    emitted_step = -1
    overflow: list[str] = []
    every_steps = diag.every_steps if diag is not None else 0
    every_time = diag.every_time if diag is not None else None
    next_diag_t = state.t if every_time else None
    threshold = cfg.blowup_threshold

    def emit(force=False):
        nonlocal next_diag_t, emitted_step
        if diag is None or emitted_step == steps:
            return
        due = force or (every_steps and steps % every_steps == 0)
        if next_diag_t is not None and state.t >= next_diag_t * (1.0 - 1e-12):
            due = True
            while next_diag_t <= state.t * (1.0 + 1e-12):
                next_diag_t += every_time
        if not due:
            return
        try:
            rec = eval_record(state, grid, diag.functional, params, dt=last_dt, step=steps)
        except (DiagnosticOverflow, ValidationError) as exc:
            overflow.append(str(exc))
            return
        emitted_step = steps
        if keep_records:
            collected.append(rec)
        for sink in sinks:
            sink(rec)

    def finish(status, message=""):
        if status != COMPLETED:
            log.info("run aborted (%s) at t=%.6g after %d steps: %s", status, state.t, steps, message)
            emit(force=True)
        detected = None if status == COMPLETED else state.t
        return RunOutcome(status, state, steps, detected, message, collected)


    while True:
        try:
            drift = face_drift(state.v, params, floor, grid)
        except VFloorBreach as exc:
            return finish(FLOOR_BREACH, str(exc))
        u_max = float(state.u.max())
        if u_max > threshold or float(state.v.max()) + drift.grad_max > threshold:
            return finish(BLOWUP, f"sup-norm above {threshold:g}")
        emit(force=steps == 0 or state.t >= cfg.t_end)
        if overflow:
            return finish(BLOWUP, overflow[0])
        if state.t >= cfg.t_end:
            return finish(COMPLETED)

        try:
            dt = stable_dt(state, drift, grid, cfg, params, u_max)
        except DtUnderflow as exc:
            return finish(DT_UNDERFLOW, str(exc))
        # land exactly on the final time and on timed diagnostic instants
        target = cfg.t_end
        if next_diag_t is not None and state.t < next_diag_t < target:
            target = next_diag_t
        last_step = state.t + dt >= target
        if last_step:
            dt = target - state.t
        # step rejection: halve dt until u stays nonnegative
        while True:
            try:
                new = step(state, dt, params, cfg, floor, grid, forcing, drift)
            except BlowupDetected as exc:
                return finish(BLOWUP, str(exc))
            if new.u.min() >= 0.0:
                break
            dt *= 0.5
            last_step = False
            if dt < cfg.dt_min:
                return finish(DT_UNDERFLOW, "negative density persists below dt_min")
        if last_step:
            new.t = target
        state = new
        steps += 1
        last_dt = dt
