"""Parameters, mesh, state containers and initial data for the chemotaxis system

    u_t = Δu - χ ∇·(u v^{-k} ∇v) + r u - μ u²
    v_t = Δv - α v + β u

on a rectangular box with homogeneous Neumann walls.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np


class ValidationError(ValueError):
    """Raised when a parameter set, functional spec or initial datum is inadmissible."""


@dataclass(frozen=True)
class Params:
    chi: float
    r: float
    mu: float
    alpha: float
    beta: float
    k: float
    dim: int
    lengths: tuple[float, ...]
    cells: tuple[int, ...]

    @property
    def volume(self) -> float:
        return math.prod(self.lengths)


def validate_params(raw: dict) -> Params:
    """Build :class:`Params` from a mapping, rejecting the first violated constraint.

    ``lengths`` and ``cells`` may be scalars (broadcast to every axis) or
    sequences of length ``dim``.
    """
    try:
        dim = int(raw["dim"])
    except KeyError:
        raise ValidationError("dim is required") from None
    if dim not in (1, 2, 3):
        raise ValidationError("dim must be 1, 2 or 3")

    values = {}
    for name in ("chi", "r", "mu", "alpha", "beta", "k"):
        if name not in raw:
            raise ValidationError(f"{name} is required")
        x = float(raw[name])
        if not math.isfinite(x):
            raise ValidationError(f"{name} must be finite")
        values[name] = x
    for name in ("chi", "r", "mu", "alpha", "beta"):
        if values[name] <= 0.0:
            raise ValidationError(f"{name} must be positive")
    if not 0.0 < values["k"] < 1.0:
        raise ValidationError("k must lie in (0,1)")

    lengths = _per_axis(raw.get("lengths", 1.0), dim, "lengths", float)
    cells = _per_axis(raw.get("cells", 32), dim, "cells", int)
    if any(not (L > 0.0 and math.isfinite(L)) for L in lengths):
        raise ValidationError("lengths must be positive")
    if any(n < 4 for n in cells):
        raise ValidationError("cells must be at least 4 per axis")
    return Params(dim=dim, lengths=lengths, cells=cells, **values)


def _per_axis(value, dim, name, cast):
    if np.isscalar(value):
        return (cast(value),) * dim
    seq = tuple(cast(x) for x in value)
    if len(seq) != dim:
        raise ValidationError(f"{name} needs exactly {dim} entries, got {len(seq)}")
    return seq


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centred Cartesian mesh on [0, L_0] x ... x [0, L_{d-1}].

    Fields are numpy arrays of shape ``cells``; axis 0 is x. Flattening in C
    order gives the row-major layout used on disk.
    """

    lengths: tuple[float, ...]
    cells: tuple[int, ...]

    def __post_init__(self):
        if len(self.lengths) != len(self.cells):
            raise ValidationError("lengths and cells must have equal rank")
        if any(n < 1 for n in self.cells) or any(L <= 0 for L in self.lengths):
            raise ValidationError("grid needs positive lengths and cell counts")

    @classmethod
    def from_params(cls, params: Params) -> Grid:
        return cls(tuple(params.lengths), tuple(params.cells))

    @property
    def dim(self) -> int:
        return len(self.cells)

    @cached_property
    def spacing(self) -> tuple[float, ...]:
        return tuple(L / n for L, n in zip(self.lengths, self.cells))

    @cached_property
    def h_min(self) -> float:
        return min(self.spacing)

    @cached_property
    def cell_volume(self) -> float:
        return math.prod(self.spacing)

    @cached_property
    def slabs(self) -> tuple[tuple[tuple, tuple], ...]:
        """Per axis, index tuples selecting the low and high cell of every interior face."""
        out = []
        for a in range(self.dim):
            lo = [slice(None)] * self.dim
            hi = [slice(None)] * self.dim
            lo[a] = slice(None, -1)
            hi[a] = slice(1, None)
            out.append((tuple(lo), tuple(hi)))
        return tuple(out)

    @property
    def volume(self) -> float:
        return math.prod(self.lengths)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.cells)

    @property
    def size(self) -> int:
        return math.prod(self.cells)

    def centers(self, axis: int) -> np.ndarray:
        h = self.spacing[axis]
        return (np.arange(self.cells[axis]) + 0.5) * h

    def mesh(self) -> tuple[np.ndarray, ...]:
        """Cell-centre coordinates broadcast to the field shape."""
        return tuple(np.meshgrid(*(self.centers(a) for a in range(self.dim)), indexing="ij"))

    def integrate(self, w: np.ndarray) -> float:
        return float(np.sum(w)) * self.cell_volume

    def full(self, value: float) -> np.ndarray:
        return np.full(self.shape, float(value))


@dataclass
class State:
    u: np.ndarray
    v: np.ndarray
    t: float = 0.0

    def copy(self) -> State:
        return State(self.u.copy(), self.v.copy(), self.t)

    def check(self) -> None:
        """Raise :class:`ValidationError` unless u >= 0, v > 0 and both are finite."""
        if not (np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.v))):
            raise ValidationError("state contains non-finite values")
        if self.u.min() < 0.0:
            raise ValidationError(f"u must be nonnegative (min u = {self.u.min():.3e})")
        if self.v.min() <= 0.0:
            raise ValidationError(f"v must be positive (min v = {self.v.min():.3e})")


@dataclass(frozen=True)
class FunctionalSpec:
    """Exponents of the monitored functionals ∫u^p + ∫u^p v^{-q} + ∫v^{p+1}."""

    p: float
    q: float
    singular_eligible: bool = field(default=False)


def validate_functional_spec(p: float, q: float, params: Params) -> FunctionalSpec:
    p = float(p)
    q = float(q)
    if not p > 2.0:
        raise ValidationError(f"p must exceed 2 (got p={p})")
    if not q >= 1.0:
        raise ValidationError(f"q must be at least 1 (got q={q})")
    if not q < p - 1.0:
        raise ValidationError(f"q < p - 1 violated (q={q}, p-1={p - 1.0})")
    k = params.k
    needed = max(params.dim, 1.0 / (1.0 - k), 1.0 / k)
    return FunctionalSpec(p, q, singular_eligible=p > needed)


def steady_state(params: Params) -> tuple[float, float]:
    """Spatially homogeneous positive equilibrium (r/μ, βr/(αμ))."""
    u_star = params.r / params.mu
    return u_star, params.beta * u_star / params.alpha


SMOOTHING_PASSES = 5


def smooth_noise(rng: np.random.Generator, grid: Grid, passes: int = SMOOTHING_PASSES) -> np.ndarray:
    """White noise smoothed by explicit discrete-Laplacian passes, rescaled to [0, 1]."""
    from .operators import laplacian_neumann

    w = rng.standard_normal(grid.shape)
    # stable diffusion weight: coefficient * 2 * sum(1/h^2) = 1/2
    coeff = 0.25 / sum(1.0 / h**2 for h in grid.spacing)
    for _ in range(passes):
        w = w + coeff * laplacian_neumann(w, grid)
    lo, hi = w.min(), w.max()
    if hi - lo <= 0.0:
        return np.zeros(grid.shape)
    return (w - lo) / (hi - lo)


def make_initial_condition(kind: str, grid: Grid, params: Params | None = None,
                           seed: int | None = None, **opts) -> State:
    """Initial data for one of ``constant``, ``gaussian-bump``, ``random-smooth``, ``from-snapshot``.

    constant:       u0, v0
    gaussian-bump:  center (per axis, default box centre), width, amplitude, floor;
                    u = floor + amplitude*g, v = floor + amplitude*g with
                    g = exp(-|x - center|^2 / (2 width^2))
    random-smooth:  amplitude, floor; independent smoothed noise for u and v
    from-snapshot:  path
    """
    if kind == "constant":
        u0 = float(opts.get("u0", 0.5))
        v0 = float(opts.get("v0", 1.0))
        state = State(grid.full(u0), grid.full(v0), 0.0)
    elif kind == "gaussian-bump":
        width = float(opts.get("width", 1.0))
        amplitude = float(opts.get("amplitude", 1.0))
        floor = float(opts.get("floor", 0.1))
        center = opts.get("center")
        if center is None:
            center = tuple(0.5 * L for L in grid.lengths)
        center = _per_axis(center, grid.dim, "center", float)
        if width <= 0.0 or amplitude < 0.0:
            raise ValidationError("gaussian-bump needs width > 0 and amplitude >= 0")
        r2 = sum((x - c) ** 2 for x, c in zip(grid.mesh(), center))
        g = np.exp(-r2 / (2.0 * width**2))
        state = State(floor + amplitude * g, floor + amplitude * g, 0.0)
    elif kind == "random-smooth":
        amplitude = float(opts.get("amplitude", 1.0))
        floor = float(opts.get("floor", 0.1))
        if amplitude < 0.0:
            raise ValidationError("random-smooth needs amplitude >= 0")
        rng = np.random.default_rng(0 if seed is None else int(seed))
        su = smooth_noise(rng, grid)
        sv = smooth_noise(rng, grid)
        state = State(floor + amplitude * su, floor + amplitude * sv, 0.0)
    elif kind == "from-snapshot":
        from .io import read_snapshot

        path = opts.get("path")
        if path is None:
            raise ValidationError("from-snapshot needs a path")
        state, snap_grid = read_snapshot(Path(path), expected=grid)
    else:
        raise ValidationError(f"unknown initial condition kind {kind!r}")

    if state.v.min() <= 0.0:
        raise ValidationError("initial v must be strictly positive (raise the floor)")
    if state.u.min() < 0.0:
        raise ValidationError("initial u must be nonnegative")
    if grid.integrate(state.u) <= 0.0:
        raise ValidationError("initial mass of u must be positive")
    state.check()
    return state
