import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chemotaxis.cli import main
from chemotaxis.config import ConfigError, build_config, format_config, parse_config, read_pairs
from chemotaxis.diagnostics import DiagRecord
from chemotaxis.experiments import simulate
from chemotaxis.io import CsvSink, SnapshotError, read_csv, read_snapshot, write_csv, write_snapshot
from chemotaxis.model import Grid, State

MINIMAL = """\
# steady state of the logistic/decay pair
dim = 2
cells_x = 8
chi = 1
r = 1
mu = 2
alpha = 0.5
beta = 1
k = 0.5
t_end = 0.5
ic_kind = constant
"""

finite = st.floats(allow_nan=False, allow_infinity=False)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(finite, finite, finite, st.one_of(st.none(), finite), st.integers(0, 10**9)),
                max_size=5))
def test_csv_round_trip_is_exact(tmp_path_factory, rows):
    recs = [DiagRecord(a, b, c, a, b, c, a, b, c, a, s, b, n) for a, b, c, s, n in rows]
    path = tmp_path_factory.mktemp("csv") / "d.csv"
    write_csv(recs, path)
    assert read_csv(path) == recs


def test_empty_stream_gives_header_only(tmp_path):
    write_csv([], tmp_path / "e.csv")
    text = (tmp_path / "e.csv").read_text()
    assert text == ",".join(DiagRecord.columns()) + "\n"
    assert len(text.strip().split(",")) == len(DiagRecord.columns())


@pytest.mark.parametrize("shape", [(5,), (4, 3), (2, 3, 4)])
def test_snapshot_round_trip_is_bit_exact(tmp_path, shape):
    g = Grid(tuple(1.0 + i for i in range(len(shape))), shape)
    rng = np.random.default_rng(2)
    s = State(rng.random(shape), rng.random(shape) + 0.1, 0.1 + 0.2)
    write_snapshot(s, g, tmp_path / "s.bin")
    back, grid = read_snapshot(tmp_path / "s.bin", expected=g)
    assert grid == g and back.t == s.t
    assert back.u.tobytes() == s.u.tobytes() and back.v.tobytes() == s.v.tobytes()
    size = (tmp_path / "s.bin").stat().st_size
    assert size == 5 + 4 + 16 * len(shape) + 8 + 2 * 8 * g.size


def test_snapshot_layout(tmp_path):
    g = Grid((2.0,), (4,))
    write_snapshot(State(np.arange(4.0), np.arange(4.0) + 1, 0.5), g, tmp_path / "s.bin")
    data = (tmp_path / "s.bin").read_bytes()
    assert data[:5] == b"CHTX1"
    assert struct.unpack_from("<Iqdd", data, 5) == (1, 4, 2.0, 0.5)
    assert struct.unpack_from("<8d", data, 5 + 4 + 8 + 8 + 8) == (0, 1, 2, 3, 1, 2, 3, 4)


def test_snapshot_errors(tmp_path):
    g = Grid((1.0, 1.0), (4, 4))
    write_snapshot(State(np.ones((4, 4)), np.ones((4, 4))), g, tmp_path / "s.bin")
    data = (tmp_path / "s.bin").read_bytes()
    (tmp_path / "t.bin").write_bytes(data[:-8])
    with pytest.raises(SnapshotError, match="truncated payload"):
        read_snapshot(tmp_path / "t.bin")
    (tmp_path / "m.bin").write_bytes(b"XXXX1" + data[5:])
    with pytest.raises(SnapshotError, match="not a CHTX1 snapshot"):
        read_snapshot(tmp_path / "m.bin")
    (tmp_path / "x.bin").write_bytes(data + b"\0")
    with pytest.raises(SnapshotError, match="trailing"):
        read_snapshot(tmp_path / "x.bin")
    with pytest.raises(SnapshotError, match="dimension mismatch"):
        read_snapshot(tmp_path / "s.bin", expected=Grid((1.0, 1.0), (4, 5)))


def test_minimal_config_gets_defaults(tmp_path):
    (tmp_path / "c.cfg").write_text(MINIMAL)
    cfg = parse_config(tmp_path / "c.cfg")
    assert cfg.params.cells == (8, 8) and cfg.params.lengths == (1.0, 1.0)
    assert cfg.scheme.scheme == "imex-diffusion" and cfg.scheme.dt_max == 0.05
    assert cfg.functional.p == 4.0 and cfg.functional.q == 2.0
    assert cfg.diag.every_steps == 10 and cfg.seed == 0
    assert cfg.floor.eps_v == 1e-10 and cfg.out_csv == "diagnostics.csv"
    echo = format_config(cfg)
    assert "scheme = imex-diffusion" in echo and "dt_max = 0.05" in echo


@pytest.mark.parametrize("line,key,fragment", [
    ("k = 1.5", "k", "(0,1)"),
    ("mu = -1", "mu", "positive"),
    ("scheme = rk4", "scheme", "scheme must be"),
    ("p = 2", "p", "p must exceed 2"),
    ("q = 3", "q", "q < p - 1"),
    ("cells_z = 4", "cells_z", "axis z"),
    ("ic_kind = from-snapshot", "ic_path", "ic_path"),
    ("sweep_mu = 1, -2", "sweep_mu", "mu must be positive"),
])
def test_invalid_values_name_the_key(line, key, fragment):
    text = "\n".join(x for x in MINIMAL.splitlines() if x.split("=")[0].strip() != line.split("=")[0].strip())
    with pytest.raises(ConfigError) as info:
        build_config(read_pairs(text + "\n" + line))
    assert info.value.key == key and fragment in str(info.value)


def test_config_grammar_errors():
    with pytest.raises(ConfigError, match="missing required key") as info:
        build_config(read_pairs(MINIMAL.replace("chi = 1\n", "")))
    assert info.value.key == "chi"
    with pytest.raises(ConfigError, match="lines 3 and 12") as info:
        read_pairs(MINIMAL + "cells_x = 9\n")
    assert info.value.key == "cells_x"
    with pytest.raises(ConfigError, match="unknown key"):
        read_pairs(MINIMAL + "gamma = 1\n")
    with pytest.raises(ConfigError, match="line 2"):
        read_pairs("dim = 1\nnonsense\n")
    with pytest.raises(ConfigError, match="cannot parse"):
        read_pairs("dim = two\n")


def test_echoed_config_reproduces_run(tmp_path):
    text = MINIMAL.replace("ic_kind = constant", "ic_kind = random-smooth\nseed = 11\nscheme = explicit-euler")
    cfg = build_config(read_pairs(text))
    (tmp_path / "echo.cfg").write_text(format_config(cfg))
    again = parse_config(tmp_path / "echo.cfg")
    assert again.values == cfg.values
    for c, name in ((cfg, "a.csv"), (again, "b.csv")):
        with CsvSink(tmp_path / name) as sink:
            simulate(c, sinks=[sink])
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def write_cfg(tmp_path, extra=""):
    path = tmp_path / "c.cfg"
    path.write_text(MINIMAL + extra)
    return str(path)


def test_cli_run_success(tmp_path):
    cfg = write_cfg(tmp_path, "out_snapshot = final.bin\n")
    out = tmp_path / "out"
    assert main(["run", "--config", cfg, "--out-dir", str(out), "--quiet"]) == 0
    recs = read_csv(out / "diagnostics.csv")
    assert recs[-1].t == 0.5
    state, grid = read_snapshot(out / "final.bin")
    assert np.allclose(state.u, 0.5)
    assert parse_config(out / "resolved.cfg").values == parse_config(cfg).values


def test_cli_exit_codes(tmp_path, capsys):
    bad = write_cfg(tmp_path, "").replace("c.cfg", "bad.cfg")
    (tmp_path / "bad.cfg").write_text(MINIMAL.replace("k = 0.5", "k = 1.5"))
    assert main(["run", "--config", bad, "--out-dir", str(tmp_path)]) == 1
    assert "k must lie in (0,1)" in capsys.readouterr().err
    (tmp_path / "hot.cfg").write_text(MINIMAL + "blowup_threshold = 0.1\n")
    assert main(["run", "--config", str(tmp_path / "hot.cfg"), "--out-dir", str(tmp_path)]) == 2
    assert "blowup-detected" in capsys.readouterr().err
    assert main(["run", "--config", str(tmp_path / "missing.cfg")]) == 3
    (tmp_path / "snap.cfg").write_text(MINIMAL.replace("ic_kind = constant", "ic_kind = from-snapshot\nic_path = nope.bin"))
    assert main(["run", "--config", str(tmp_path / "snap.cfg"), "--out-dir", str(tmp_path)]) == 3


def test_cli_seed_override(tmp_path):
    cfg = write_cfg(tmp_path, "").replace("c.cfg", "r.cfg")
    (tmp_path / "r.cfg").write_text(MINIMAL.replace("ic_kind = constant", "ic_kind = random-smooth"))
    main(["run", "--config", cfg, "--out-dir", str(tmp_path / "a"), "--seed", "5", "--quiet"])
    assert "seed = 5" in (tmp_path / "a" / "resolved.cfg").read_text()


def test_cli_other_subcommands(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "sweep_mu = 0.5, 2\ndiag_every_steps = 1\n")
    assert main(["steady-check", "--config", cfg]) == 0
    assert main(["sweep", "--config", cfg, "--out-dir", str(tmp_path / "s"), "--quiet"]) == 0
    assert (tmp_path / "s" / "sweep.csv").exists()
    assert main(["bisect", "--config", cfg, "--out-dir", str(tmp_path / "b"), "--quiet"]) == 0
    assert (tmp_path / "b" / "bisect.txt").read_text()
    assert main(["mms", "--chi", "0", "--levels", "8", "16", "32", "--t-end", "0.05",
                 "--out-dir", str(tmp_path / "m")]) == 0
    assert "order_u" in capsys.readouterr().out
    assert (tmp_path / "m" / "mms.csv").read_text().count("\n") == 4
    assert main(["verify-lemma24", "--dims", "1", "--cells", "16", "--p", "2", "--samples", "3",
                 "--out-dir", str(tmp_path / "l"), "--quiet"]) == 0
    assert (tmp_path / "l" / "inequality.csv").read_text().count("\n") == 4
