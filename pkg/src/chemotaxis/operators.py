"""Finite-volume operators on the cell-centred grid with ghost-cell Neumann closure.

Mirroring the adjacent interior cell into the ghost layer makes every
boundary-face difference vanish, so all operators below are written in flux
form over interior faces only, with zero flux on the walls. That keeps the
discrete integrals of the Laplacian and of the chemotactic divergence at
zero up to roundoff.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Grid, Params


class VFloorBreach(RuntimeError):
    """Signal concentration fell to or below the hard floor."""


class SolverError(RuntimeError):
    """Iterative Helmholtz solve did not reach the requested tolerance."""

    def __init__(self, message: str, iterations: int, residual: float):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


@dataclass(frozen=True)
class VFloorPolicy:
    eps_v: float = 1e-10
    hard_floor: float = 1e-12

    def __post_init__(self):
        if not 0.0 < self.hard_floor <= self.eps_v:
            raise ValueError("need 0 < hard_floor <= eps_v")


@dataclass(frozen=True)
class FaceVelocity:
    """Drift χ v^{-k} ∂_a v on interior faces normal to each axis.

    ``components[a]`` has ``cells[a] - 1`` entries along axis ``a``; wall
    faces carry zero flux and are not stored. ``grad_max`` is the largest
    face difference |∂_a v| seen while building the drift.
    """

    components: tuple[np.ndarray, ...]
    grad_max: float = 0.0
    drift_max: float | None = None

    def max_abs(self) -> float:
        if self.drift_max is not None:
            return self.drift_max
        return max((float(abs(c).max()) for c in self.components if c.size), default=0.0)


def face_gradients(w: np.ndarray, grid: Grid) -> list[np.ndarray]:
    """Interior-face differences (w_{i+1} - w_i)/h per axis."""
    return [(w[hi] - w[lo]) / h for (lo, hi), h in zip(grid.slabs, grid.spacing)]


def laplacian_neumann(w: np.ndarray, grid: Grid) -> np.ndarray:
    out = np.zeros(w.shape)
    for (lo, hi), h in zip(grid.slabs, grid.spacing):
        flux = w[hi] - w[lo]
        flux *= 1.0 / (h * h)
        out[lo] += flux
        out[hi] -= flux
    return out


def face_drift(v: np.ndarray, params: Params, floor: VFloorPolicy, grid: Grid) -> FaceVelocity:
    """Face drift χ · max(v̄, eps_v)^{-k} · (v_{i+1} - v_i)/h with v̄ the arithmetic mean."""
    vmin = float(v.min())
    if not vmin > floor.hard_floor:
        raise VFloorBreach(f"v-floor breached: min v = {vmin:.3e} <= {floor.hard_floor:.1e}")
    comps = []
    gmax = 0.0
    dmax = 0.0
    for (lo, hi), h in zip(grid.slabs, grid.spacing):
        a, b = v[lo], v[hi]
        grad = b - a
        grad *= 1.0 / h
        vbar = a + b
        vbar *= 0.5
        np.maximum(vbar, floor.eps_v, out=vbar)
        np.power(vbar, -params.k, out=vbar)
        vbar *= grad
        vbar *= params.chi
        comps.append(vbar)
        if grad.size:
            gmax = max(gmax, float(abs(grad).max()))
            dmax = max(dmax, float(abs(vbar).max()))
    return FaceVelocity(tuple(comps), gmax, dmax)


def upwind_fluxes(u: np.ndarray, drift: FaceVelocity, grid: Grid) -> list[np.ndarray]:
    """Donor-cell fluxes drift * u_upstream on interior faces."""
    out = []
    for (lo, hi), d in zip(grid.slabs, drift.components):
        out.append(np.where(d > 0.0, d * u[lo], d * u[hi]))
    return out


def chemo_divergence(u: np.ndarray, drift: FaceVelocity, grid: Grid) -> np.ndarray:
    """Conservative divergence of the upwinded flux; the caller subtracts it."""
    out = np.zeros(u.shape)
    for (lo, hi), f, h in zip(grid.slabs, upwind_fluxes(u, drift, grid), grid.spacing):
        f *= 1.0 / h
        out[lo] += f
        out[hi] -= f
    return out


def helmholtz_solve(rhs: np.ndarray, a: float, grid: Grid, tol: float = 1e-10,
                    max_iter: int = 10_000, x0: np.ndarray | None = None) -> np.ndarray:
    """Solve (I - a Δ_h) w = rhs by unpreconditioned conjugate gradients.

    Stops once ||residual||_inf <= tol * ||rhs||_inf. Starting from a guess
    with the same mean as ``rhs`` keeps every search direction mean-free, so
    the mean of the solution matches that of ``rhs`` up to roundoff.
    """
    if a <= 0.0:
        raise ValueError("Helmholtz coefficient must be positive")
    if tol <= 0.0:
        raise ValueError("tolerance must be positive")
    bnorm = float(np.max(np.abs(rhs)))
    if bnorm == 0.0:
        return np.zeros_like(rhs)
    target = tol * bnorm

    def apply(w):
        Aw = laplacian_neumann(w, grid)
        Aw *= -a
        Aw += w
        return Aw

    x = rhs.copy() if x0 is None else x0.copy()
    r = rhs - apply(x)
    res = float(np.max(np.abs(r)))
    it = 0
    if res > target:
        p = r.copy()
        rr = float(np.vdot(r, r))
        while it < max_iter:
            it += 1
            Ap = apply(p)
            alpha = rr / float(np.vdot(p, Ap))
            x += alpha * p
            r -= alpha * Ap
            res = float(np.max(np.abs(r)))
            if res <= target:
                break
            rr_new = float(np.vdot(r, r))
            p *= rr_new / rr
            p += r
            rr = rr_new
        else:
            raise SolverError(
                f"Helmholtz CG did not converge in {it} iterations (residual {res:.3e})", it, res)
    if x0 is None:
        drift = abs(float(np.mean(x)) - float(np.mean(rhs)))
        if drift > max(tol, 1e-13) * bnorm:
            raise SolverError(f"Helmholtz solve lost the mean (drift {drift:.3e})", it, res)
    return x
