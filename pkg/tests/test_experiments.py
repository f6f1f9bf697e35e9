import json
import math

import numpy as np
import pytest
import sympy as sp

from chemotaxis.diagnostics import BOUNDED, GROWING, Inconclusive
from chemotaxis.experiments import (
    MmsSpec,
    SweepSpec,
    bisect_threshold,
    mms_exact,
    mms_forcing,
    run_convergence,
    run_sweep,
    steady_check,
)
from chemotaxis.model import Params
from conftest import make_config


def test_mms_forcing_matches_symbolic_residual():
    x, t = sp.symbols("x t")
    chi, r, mu, al, be, k = 1.3, 0.7, 1.1, 0.9, 1.4, 0.35
    spec = MmsSpec(a_u=0.4, a_v=0.6, omega=2.0, length=1.5)
    mode = sp.cos(spec.omega * t) * sp.cos(sp.pi * x / spec.length)
    u = 2 + spec.a_u * mode
    v = 2 + spec.a_v * mode
    fu = sp.diff(u, t) - sp.diff(u, x, 2) + chi * sp.diff(u * v ** (-k) * sp.diff(v, x), x) - r * u + mu * u**2
    fv = sp.diff(v, t) - sp.diff(v, x, 2) + al * v - be * u
    fu_num = sp.lambdify((x, t), fu, "numpy")
    fv_num = sp.lambdify((x, t), fv, "numpy")
    params = Params(chi, r, mu, al, be, k, 1, (1.5,), (8,))
    xs = np.linspace(0.0, 1.5, 17)
    for tt in (0.0, 0.3, 1.7):
        f_u, f_v = mms_forcing(spec, params, xs, tt)
        np.testing.assert_allclose(f_u, fu_num(xs, tt), rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(f_v, fv_num(xs, tt), rtol=1e-12, atol=1e-12)


def test_mms_exact_pair():
    spec = MmsSpec()
    u, v = mms_exact(spec, np.array([0.0, 0.5, 1.0]), 0.0)
    np.testing.assert_allclose(u, [2.5, 2.0, 1.5], atol=1e-15)
    with pytest.raises(ValueError):
        MmsSpec(a_u=2.5)
    with pytest.raises(ValueError):
        MmsSpec(levels=(8, 16))


def test_pure_reaction_diffusion_converges_at_second_order():
    spec = MmsSpec(levels=(16, 32, 64), t_end=0.1)
    rows = run_convergence(spec, Params(0.0, 1.0, 1.0, 1.0, 1.0, 0.5, 1, (1.0,), (16,)))
    assert rows[0].order_u is None
    for row in rows[1:]:
        assert row.order_u > 1.9 and row.order_v > 1.9


def test_chemotactic_study_is_upwind_limited_in_u():
    spec = MmsSpec(levels=(32, 64, 128), t_end=0.1)
    rows = run_convergence(spec, Params(1.0, 1.0, 1.0, 1.0, 1.0, 0.5, 1, (1.0,), (32,)))
    assert all(0.8 < row.order_u < 1.2 for row in rows[1:])
    assert rows[-1].err_u < rows[0].err_u


def test_steady_check_both_schemes():
    cfg = make_config(dim=2, cells_x=8, mu=2.0, alpha=0.5, t_end=1.0)
    results = steady_check(cfg)
    assert [r.scheme for r in results] == ["explicit-euler", "imex-diffusion"]
    assert all(r.status == "completed" and r.deviation <= 1e-12 for r in results)


def sweep_base(**kw):
    vals = dict(cells_x=8, t_end=3.0, ic_kind="constant", ic_u0=0.5, diag_every_steps=2)
    vals.update(kw)
    return make_config(**vals)


def test_sweep_grid_and_outputs(tmp_path):
    spec = SweepSpec(sweep_base(), mu=(0.5, 2.0), chi=(1.0, 2.0))
    assert len(spec.cells()) == 4
    res = run_sweep(spec, tmp_path)
    assert [r.index for r in res.rows] == [0, 1, 2, 3]
    assert [(r.mu, r.chi) for r in res.rows] == [(0.5, 1.0), (0.5, 2.0), (2.0, 1.0), (2.0, 2.0)]
    # constant data follow the logistic law: growing towards r/mu = 2 for mu = 0.5
    assert [r.classification for r in res.rows] == [GROWING, GROWING, BOUNDED, BOUNDED]
    assert (tmp_path / "sweep.csv").read_text().count("\n") == 5
    summary = json.loads((tmp_path / "sweep.json").read_text())
    assert summary["classification_counts"] == {GROWING: 2, BOUNDED: 2}
    assert sorted(p.name for p in tmp_path.glob("cell_*.csv")) == [f"cell_{i:04d}.csv" for i in range(4)]


def test_parallel_sweep_matches_serial():
    base = sweep_base(t_end=1.0)
    serial = run_sweep(SweepSpec(base, mu=(0.5, 1.0, 2.0)))
    parallel = run_sweep(SweepSpec(base, mu=(0.5, 1.0, 2.0), workers=2))
    assert serial.rows == parallel.rows


def test_bisection_brackets_and_halves(tmp_path):
    # logistic growth from 0.5 towards r/mu: "growing" iff r/mu is far above 0.5
    res = bisect_threshold(SweepSpec(sweep_base(), mu=(0.5, 2.0)), max_iters=3, out_dir=tmp_path)
    assert res.iterations == 3
    assert res.width == pytest.approx(1.5 / 8)
    assert res.transcript[:2] == ((0.5, GROWING), (2.0, BOUNDED))
    assert len(res.transcript) == 5


def test_bisection_without_bracket():
    with pytest.raises(Inconclusive, match="no lower bracket") as info:
        bisect_threshold(SweepSpec(sweep_base(), mu=(2.0, 4.0)), max_iters=2)
    assert info.value.evidence == [(2.0, BOUNDED), (4.0, BOUNDED)]
    with pytest.raises(Inconclusive, match="no upper bracket"):
        bisect_threshold(SweepSpec(sweep_base(), mu=(0.25, 0.5)), max_iters=2)
    with pytest.raises(ValueError):
        bisect_threshold(SweepSpec(sweep_base(), mu=(0.5, 2.0), chi=(1.0, 2.0)))
