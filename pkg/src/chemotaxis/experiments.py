"""Drivers: single runs from a config, manufactured-solution convergence studies,
(μ, χ, k) sweeps and bisection for an empirical μ threshold."""
from __future__ import annotations

import itertools
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .config import RunConfig, build_config
from .diagnostics import (
    ABORTED,
    BOUNDED,
    Inconclusive,
    classify_boundedness,
)
from .integrator import RunOutcome, SchemeConfig, run
from .model import Grid, Params, State, make_initial_condition, steady_state
from .operators import VFloorPolicy

log = logging.getLogger(__name__)


def initial_state(cfg: RunConfig) -> State:
    return make_initial_condition(cfg.ic_kind, cfg.grid, cfg.params, cfg.seed, **cfg.ic_options)


def simulate(cfg: RunConfig, sinks: Iterable[Callable] = (), keep_records: bool = True,
             initial: State | None = None) -> RunOutcome:
    if initial is None:
        initial = initial_state(cfg)
    return run(initial, cfg.params, cfg.scheme, cfg.floor, cfg.grid, cfg.diag, sinks,
               keep_records=keep_records)


@dataclass(frozen=True)
class SteadyCheck:
    scheme: str
    status: str
    deviation_u: float
    deviation_v: float

    @property
    def deviation(self) -> float:
        return max(self.deviation_u, self.deviation_v)


def steady_check(cfg: RunConfig, schemes: Sequence[str] = ("explicit-euler", "imex-diffusion")
                 ) -> list[SteadyCheck]:
    """Start each scheme at the homogeneous equilibrium and report the max drift from it."""
    u_star, v_star = steady_state(cfg.params)
    out = []
    for scheme in schemes:
        c = cfg.with_values(scheme=scheme, ic_kind="constant", ic_u0=u_star, ic_v0=v_star)
        res = simulate(c, keep_records=False)
        out.append(SteadyCheck(scheme, res.status, float(np.max(np.abs(res.state.u - u_star))),
                               float(np.max(np.abs(res.state.v - v_star)))))
    return out


# ---------------------------------------------------------------------------
# manufactured solutions

@dataclass(frozen=True)
class MmsSpec:
    """u = 2 + a_u cos(ωt) cos(πx/L), v = 2 + a_v cos(ωt) cos(πx/L), x the first axis."""

    a_u: float = 0.5
    a_v: float = 0.5
    omega: float = 1.0
    length: float = 1.0
    levels: tuple[int, ...] = (64, 128, 256)
    t_end: float = 0.25
    dim: int = 1

    def __post_init__(self):
        if not (0.0 <= self.a_u < 2.0 and 0.0 <= self.a_v < 2.0):
            raise ValueError("amplitudes must lie in [0, 2) to keep the exact solution positive")
        if len(self.levels) < 3:
            raise ValueError("a convergence study needs at least 3 refinement levels")


def mms_exact(spec: MmsSpec, x: np.ndarray, t: float) -> tuple[np.ndarray, np.ndarray]:
    mode = math.cos(spec.omega * t) * np.cos(math.pi * x / spec.length)
    return 2.0 + spec.a_u * mode, 2.0 + spec.a_v * mode


def mms_forcing(spec: MmsSpec, params: Params, x: np.ndarray, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Residuals of both equations at the exact solution (closed form)."""
    K = math.pi / spec.length
    c = np.cos(K * x)
    s = np.sin(K * x)
    T = math.cos(spec.omega * t)
    dT = -spec.omega * math.sin(spec.omega * t)
    u = 2.0 + spec.a_u * T * c
    v = 2.0 + spec.a_v * T * c
    u_t = spec.a_u * dT * c
    v_t = spec.a_v * dT * c
    u_x = -spec.a_u * T * K * s
    v_x = -spec.a_v * T * K * s
    u_xx = -spec.a_u * T * K * K * c
    v_xx = -spec.a_v * T * K * K * c
    k = params.k
    vk = v ** (-k)
    # ∂x(u v^{-k} v_x)
    flux_div = u_x * vk * v_x - k * u * vk / v * v_x * v_x + u * vk * v_xx
    f_u = u_t - u_xx + params.chi * flux_div - params.r * u + params.mu * u * u
    f_v = v_t - v_xx + params.alpha * v - params.beta * u
    return f_u, f_v


@dataclass(frozen=True)
class ConvergenceRow:
    cells: int
    h: float
    err_u: float
    err_v: float
    order_u: Optional[float]
    order_v: Optional[float]


def _order(e_coarse, e_fine, h_coarse, h_fine):
    if e_fine <= 0.0 or e_coarse <= 0.0:
        return None
    return math.log(e_coarse / e_fine) / math.log(h_coarse / h_fine)


def run_convergence(spec: MmsSpec, params: Params, scheme: str = "explicit-euler",
                    dt_factor: float = 0.4) -> list[ConvergenceRow]:
    """Forced runs at each level, L2 errors at t_end against the exact pair.

    The step is capped at dt_factor * h^2 / dim on every level so the first
    order temporal error scales like the spatial one.
    """
    rows: list[ConvergenceRow] = []
    floor = VFloorPolicy()
    prev = None
    for n in spec.levels:
        cells = (n,) * spec.dim
        lengths = (spec.length,) * spec.dim
        grid = Grid(lengths, cells)
        lvl_params = Params(params.chi, params.r, params.mu, params.alpha, params.beta, params.k,
                            spec.dim, lengths, cells)
        h = grid.spacing[0]
        x = grid.mesh()[0]
        u0, v0 = mms_exact(spec, x, 0.0)
        dt_cap = dt_factor * h * h / spec.dim
        cfg = SchemeConfig(scheme=scheme, t_end=spec.t_end, dt_max=dt_cap, dt_min=1e-14)

        def forcing(t, x=x, p=lvl_params):
            return mms_forcing(spec, p, x, t)

        out = run(State(u0, v0, 0.0), lvl_params, cfg, floor, grid, None, forcing=forcing)
        if not out.completed:
            raise RuntimeError(f"MMS run at {n} cells aborted: {out.status} ({out.message})")
        ue, ve = mms_exact(spec, x, out.state.t)
        err_u = math.sqrt(grid.integrate((out.state.u - ue) ** 2))
        err_v = math.sqrt(grid.integrate((out.state.v - ve) ** 2))
        if prev is None:
            rows.append(ConvergenceRow(n, h, err_u, err_v, None, None))
        else:
            rows.append(ConvergenceRow(n, h, err_u, err_v, _order(prev.err_u, err_u, prev.h, h),
                                       _order(prev.err_v, err_v, prev.h, h)))
        prev = rows[-1]
    return rows


# ---------------------------------------------------------------------------
# sweeps

@dataclass(frozen=True)
class SweepSpec:
    base: RunConfig
    mu: tuple[float, ...]
    chi: tuple[float, ...] = ()
    k: tuple[float, ...] = ()
    workers: int = 1

    def cells(self) -> list[tuple[float, float, float]]:
        chis = self.chi or (self.base.params.chi,)
        ks = self.k or (self.base.params.k,)
        return list(itertools.product(self.mu, chis, ks))

    @classmethod
    def from_config(cls, cfg: RunConfig) -> SweepSpec:
        return cls(cfg, cfg.sweep_mu or (cfg.params.mu,), cfg.sweep_chi, cfg.sweep_k, cfg.workers)


@dataclass(frozen=True)
class SweepRow:
    index: int
    mu: float
    chi: float
    k: float
    status: str
    classification: str
    sup_linf_u: float
    sup_h_pq: float
    sup_sing_p: Optional[float]
    abort_time: Optional[float]
    steps: int


SWEEP_COLUMNS = tuple(SweepRow.__dataclass_fields__)


@dataclass
class SweepResult:
    rows: list[SweepRow] = field(default_factory=list)

    def write_csv(self, path: Path | str) -> None:
        from .io import _fmt

        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as fh:
            fh.write(",".join(SWEEP_COLUMNS) + "\n")
            for row in self.rows:
                vals = []
                for name in SWEEP_COLUMNS:
                    x = getattr(row, name)
                    vals.append(x if isinstance(x, str) else _fmt(x))
                fh.write(",".join(vals) + "\n")

    def summary(self) -> dict:
        counts: dict = {}
        for row in self.rows:
            counts[row.classification] = counts.get(row.classification, 0) + 1
        return {"cells": len(self.rows), "classification_counts": counts,
                "rows": [asdict(r) for r in self.rows]}

    def write_summary(self, path: Path | str) -> None:
        Path(path).write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")


def _run_cell(task) -> SweepRow:
    index, values, mu, chi, k, out_dir = task
    cfg = build_config({**values, "mu": mu, "chi": chi, "k": k})
    if out_dir is not None:
        from .io import CsvSink

        with CsvSink(Path(out_dir) / f"cell_{index:04d}.csv") as sink:
            out = simulate(cfg, sinks=[sink])
    else:
        out = simulate(cfg)
    recs = out.records
    if out.completed:
        label = classify_boundedness(recs, out.status)
    else:
        label = ABORTED
    sing = [r.sing_p for r in recs if r.sing_p is not None]
    return SweepRow(
        index=index, mu=mu, chi=chi, k=k, status=out.status, classification=label,
        sup_linf_u=max((r.linf_u for r in recs), default=float(out.state.u.max())),
        sup_h_pq=max((r.h_pq for r in recs), default=math.nan),
        sup_sing_p=max(sing) if sing else None,
        abort_time=out.detected_time, steps=out.steps)


def run_sweep(spec: SweepSpec, out_dir: Path | str | None = None) -> SweepResult:
    """Every (μ, χ, k) cell as an independent run; rows ordered by cell index."""
    values = dict(spec.base.values)
    for key in ("sweep_mu", "sweep_chi", "sweep_k"):
        values.pop(key, None)
    tasks = [(i, values, mu, chi, k, None if out_dir is None else str(out_dir))
             for i, (mu, chi, k) in enumerate(spec.cells())]
    if spec.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            rows = list(pool.map(_run_cell, tasks))
    else:
        rows = [_run_cell(t) for t in tasks]
    rows.sort(key=lambda r: r.index)
    result = SweepResult(rows)
    if out_dir is not None:
        result.write_csv(Path(out_dir) / "sweep.csv")
        result.write_summary(Path(out_dir) / "sweep.json")
    return result


@dataclass(frozen=True)
class ThresholdResult:
    mu_low: float
    mu_high: float
    iterations: int
    transcript: tuple[tuple[float, str], ...]

    @property
    def width(self) -> float:
        return self.mu_high - self.mu_low


def bisect_threshold(spec: SweepSpec, max_iters: int = 6,
                     out_dir: Path | str | None = None) -> ThresholdResult:
    """Bisect on classification between the largest non-bounded and smallest bounded μ.

    Raises :class:`Inconclusive` (with the transcript as evidence) when the
    μ list gives no bracket or classification is not monotone in μ. The
    interval depends on horizon and mesh; it is an observation, not an
    estimate of any analytic threshold.
    """
    if len(spec.chi) > 1 or len(spec.k) > 1:
        raise ValueError("threshold bisection runs along the μ axis only")
    mus = tuple(sorted(spec.mu))
    sweep = run_sweep(SweepSpec(spec.base, mus, spec.chi, spec.k, spec.workers), out_dir)
    transcript = [(row.mu, row.classification) for row in sweep.rows]
    bounded = [row.classification == BOUNDED for row in sweep.rows]
    if all(bounded):
        raise Inconclusive("no lower bracket: every μ classified bounded", transcript)
    if not any(bounded):
        raise Inconclusive("no upper bracket: no μ classified bounded", transcript)
    first = bounded.index(True)
    if not all(bounded[first:]):
        raise Inconclusive("classification not monotone in μ", transcript)
    lo, hi = mus[first - 1], mus[first]

    values = dict(spec.base.values)
    for key in ("sweep_mu", "sweep_chi", "sweep_k"):
        values.pop(key, None)
    chi = spec.chi[0] if spec.chi else spec.base.params.chi
    k = spec.k[0] if spec.k else spec.base.params.k
    it = 0
    for it in range(1, max_iters + 1):
        mid = 0.5 * (lo + hi)
        row = _run_cell((len(transcript), values, mid, chi, k, None))
        transcript.append((mid, row.classification))
        if row.classification == BOUNDED:
            hi = mid
        else:
            lo = mid
    return ThresholdResult(lo, hi, it, tuple(transcript))
