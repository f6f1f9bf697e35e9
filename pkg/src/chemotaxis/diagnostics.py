"""Per-step monitored quantities and offline checks of the a-priori bounds.

Quadratures are cell sums times the cell volume. The cell value of |∇w| is
the Euclidean norm of the per-axis averages of the two adjacent face
differences, with wall faces contributing zero.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import Iterable, Optional, Sequence

import numpy as np

from .model import FunctionalSpec, Grid, Params, State, ValidationError
from .operators import laplacian_neumann


class DiagnosticOverflow(ArithmeticError):
    def __init__(self, quantity: str, value: float):
        super().__init__(f"diagnostic overflow in {quantity} ({value!r})")
        self.quantity = quantity


class Inconclusive(RuntimeError):
    """A check or experiment could not reach a verdict; ``evidence`` carries what was seen."""

    def __init__(self, message: str, evidence=None):
        super().__init__(message)
        self.evidence = evidence


@dataclass(frozen=True)
class DiagSpec:
    functional: FunctionalSpec
    every_steps: int = 10
    every_time: Optional[float] = None


@dataclass(frozen=True)
class DiagRecord:
    t: float
    mass_u: float
    mass_v: float
    linf_u: float
    linf_v: float
    min_u: float
    min_v: float
    linf_grad_v: float
    y_pq: float
    h_pq: float
    sing_p: Optional[float]
    dt: float
    step: int

    @classmethod
    def columns(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    def as_dict(self) -> dict:
        return asdict(self)


def cell_gradient_norm(w: np.ndarray, grid: Grid) -> np.ndarray:
    sq = np.zeros(w.shape)
    for (lo, hi), h in zip(grid.slabs, grid.spacing):
        g = (w[hi] - w[lo]) * (0.5 / h)
        avg = np.zeros(w.shape)
        avg[lo] += g
        avg[hi] += g
        sq += avg * avg
    return np.sqrt(sq)


def max_face_gradient(w: np.ndarray, grid: Grid) -> float:
    out = 0.0
    for (lo, hi), h in zip(grid.slabs, grid.spacing):
        g = w[hi] - w[lo]
        if g.size:
            out = max(out, float(np.max(np.abs(g))) / h)
    return out


def _finite(name: str, value: float) -> float:
    if not math.isfinite(value):
        raise DiagnosticOverflow(name, value)
    return value


def eval_record(state: State, grid: Grid, spec: FunctionalSpec, params: Params,
                dt: float = 0.0, step: int = 0) -> DiagRecord:
    u, v = state.u, state.v
    if v.min() <= 0.0:
        raise ValidationError(f"diagnostics need v > 0 (min v = {v.min():.3e})")
    p, q = spec.p, spec.q
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        up = u**p
        y = grid.integrate(up) + grid.integrate(up * v ** (-q))
        h_pq = y + grid.integrate(v ** (p + 1.0))
        sing = None
        if spec.singular_eligible:
            gv = cell_gradient_norm(v, grid)
            sing = _finite("sing_p", grid.integrate(up * gv**p * v ** (-params.k * p)))
    return DiagRecord(
        t=state.t,
        mass_u=_finite("mass_u", grid.integrate(u)),
        mass_v=_finite("mass_v", grid.integrate(v)),
        linf_u=_finite("linf_u", float(np.max(np.abs(u)))),
        linf_v=_finite("linf_v", float(np.max(np.abs(v)))),
        min_u=_finite("min_u", float(u.min())),
        min_v=_finite("min_v", float(v.min())),
        linf_grad_v=_finite("linf_grad_v", max_face_gradient(v, grid)),
        y_pq=_finite("y_pq", y),
        h_pq=_finite("h_pq", h_pq),
        sing_p=sing,
        dt=float(dt),
        step=int(step),
    )


@dataclass(frozen=True)
class CheckReport:
    passed: bool
    worst_margin: float
    first_violation_t: Optional[float] = None
    bound: Optional[float] = None

    def __bool__(self) -> bool:
        return self.passed


def mass_bound(params: Params, volume: float, u0_mass: float) -> float:
    """max{ r|Ω|/μ, ∫u0 }: the logistic comparison bound on ∫u(t)."""
    return max(params.r * volume / params.mu, u0_mass)


def check_mass_bound(records: Iterable[DiagRecord], params: Params, grid: Grid, u0_mass: float,
                     base_tol: float = 1e-6) -> CheckReport:
    """Every record must satisfy mass_u <= c1 (1 + base_tol + 2 dt r).

    The margin reported is the smallest relative headroom c1(1+tol) - mass_u
    over c1; negative means a violation.
    """
    if not u0_mass > 0.0:
        raise ValidationError("initial mass of u must be positive")
    c1 = mass_bound(params, grid.volume, u0_mass)
    worst = math.inf
    first = None
    for rec in records:
        tol = base_tol + 2.0 * rec.dt * params.r
        margin = (c1 * (1.0 + tol) - rec.mass_u) / c1
        worst = min(worst, margin)
        if margin < 0.0 and first is None:
            first = rec.t
    return CheckReport(first is None, worst, first, c1)


def v_floor(t: float, alpha: float, v0_min: float) -> float:
    # decay rate alpha: what the comparison argument gives for v_t = Δv - αv + βu
    return math.exp(-alpha * t) * v0_min


def check_v_floor(records: Iterable[DiagRecord], params: Params, v0_min: float,
                  tol: float = 1e-8) -> CheckReport:
    worst = math.inf
    first = None
    for rec in records:
        floor = v_floor(rec.t, params.alpha, v0_min)
        margin = rec.min_v - floor * (1.0 - tol)
        worst = min(worst, margin / floor if floor > 0 else margin)
        if margin < 0.0 and first is None:
            first = rec.t
    return CheckReport(first is None, worst, first)


BOUNDED = "bounded"
GROWING = "growing"
ABORTED = "aborted"


def classify_boundedness(records: Sequence[DiagRecord] | Sequence[float], status: str = "completed",
                         window_fraction: float = 0.2, growth_tol: float = 1.05) -> str:
    """Compare max ||u||_inf over the trailing window with the window before it.

    ``records`` may also be a plain sequence of sup-norm values.
    """
    if status != "completed":
        return ABORTED
    values = [r.linf_u if isinstance(r, DiagRecord) else float(r) for r in records]
    n = len(values)
    if n < 10:
        raise Inconclusive(f"need at least 10 records to classify, got {n}", values)
    w = max(1, int(round(window_fraction * n)))
    last = max(values[n - w:])
    prev = max(values[n - 2 * w:n - w])
    return GROWING if last > growth_tol * prev else BOUNDED


@dataclass(frozen=True)
class InequalityEntry:
    p: float
    lhs: float
    laplace_term: float
    mass_term: float

    @property
    def ratio(self) -> float:
        return self.lhs / (self.laplace_term + self.mass_term)


def inequality_ratio(w: np.ndarray, p: float, grid: Grid) -> InequalityEntry:
    """Discrete ∫|∇w|^{2p}/w^p against ∫|Δw|^p + ∫w^p for a positive Neumann field."""
    if p <= 1.0:
        raise ValueError("p must exceed 1")
    if not np.all(w > 0.0):
        raise ValidationError("w must be strictly positive")
    g = cell_gradient_norm(w, grid)
    lhs = grid.integrate(g ** (2.0 * p) / w**p)
    lap = grid.integrate(np.abs(laplacian_neumann(w, grid)) ** p)
    mass = grid.integrate(w**p)
    return InequalityEntry(float(p), lhs, lap, mass)


def smooth_cosine_field(seed: int, grid: Grid, modes: int = 6, amplitude: float = 1.0,
                        floor: float = 0.2) -> np.ndarray:
    """Random positive cosine series sum_j c_j prod_a cos(j_a π x_a / L_a), j_a < modes.

    Coefficients depend only on the seed, so the same continuous field is
    sampled at any resolution; each mode satisfies the Neumann condition.
    Coefficients decay like 1/(1 + |j|^2).
    """
    rng = np.random.default_rng(seed)
    shape = (modes,) * grid.dim
    idx = np.indices(shape).reshape(grid.dim, -1).T
    coeffs = rng.standard_normal(len(idx))
    x = grid.mesh()
    w = np.zeros(grid.shape)
    for c, j in zip(coeffs, idx):
        if not np.any(j):
            continue
        term = np.ones(grid.shape)
        for a, ja in enumerate(j):
            term = term * np.cos(ja * math.pi * x[a] / grid.lengths[a])
        w += c / (1.0 + float(np.dot(j, j))) * term
    # normalise by a resolution-independent bound: sum |c_j|/(1+|j|^2)
    bound = sum(abs(c) / (1.0 + float(np.dot(j, j))) for c, j in zip(coeffs, idx) if np.any(j))
    return floor + amplitude * (1.0 + w / bound)


@dataclass(frozen=True)
class CorpusSummary:
    dim: int
    p: float
    cells: int
    max_ratio: float
    entries: tuple[InequalityEntry, ...]

    @property
    def ratios(self) -> tuple[float, ...]:
        return tuple(e.ratio for e in self.entries)


def inequality_corpus(dim: int, cells: int, p: float, samples: int = 100, seed0: int = 0,
                   length: float = 1.0) -> CorpusSummary:
    grid = Grid((length,) * dim, (cells,) * dim)
    entries = tuple(inequality_ratio(smooth_cosine_field(seed0 + s, grid), p, grid)
                    for s in range(samples))
    return CorpusSummary(dim, p, cells, max(e.ratio for e in entries), entries)
