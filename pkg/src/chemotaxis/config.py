"""Flat ``key = value`` run configuration.

One pair per line, ``#`` starts a comment. Unknown and duplicate keys are
errors. Every optional key has a default, and :func:`format_config` echoes
the fully resolved configuration so a run can be reproduced from its echo.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .diagnostics import DiagSpec
from .integrator import SCHEMES, SchemeConfig
from .model import (
    FunctionalSpec,
    Grid,
    Params,
    ValidationError,
    validate_functional_spec,
    validate_params,
)
from .operators import VFloorPolicy

AXES = ("x", "y", "z")
IC_KINDS = ("constant", "gaussian-bump", "random-smooth", "from-snapshot")


class ConfigError(ValidationError):
    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key '{key}'")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.key = key
        self.line = line


REQUIRED = object()


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.replace(",", " ").split())


# key -> (converter, default)
KEYS: dict[str, tuple] = {
    "dim": (int, REQUIRED),
    "cells_x": (int, REQUIRED),
    "cells_y": (int, None),
    "cells_z": (int, None),
    "length_x": (float, 1.0),
    "length_y": (float, None),
    "length_z": (float, None),
    "chi": (float, REQUIRED),
    "r": (float, REQUIRED),
    "mu": (float, REQUIRED),
    "alpha": (float, REQUIRED),
    "beta": (float, REQUIRED),
    "k": (float, REQUIRED),
    "scheme": (str, "imex-diffusion"),
    "t_end": (float, REQUIRED),
    "dt_max": (float, 0.05),
    "dt_min": (float, 1e-12),
    "cfl_diffusion": (float, 0.9),
    "cfl_advection": (float, 0.5),
    "blowup_threshold": (float, 1e6),
    "helmholtz_tol": (float, 1e-10),
    "ic_kind": (str, REQUIRED),
    "ic_u0": (float, 0.5),
    "ic_v0": (float, 1.0),
    "ic_center_x": (float, None),
    "ic_center_y": (float, None),
    "ic_center_z": (float, None),
    "ic_width": (float, 1.0),
    "ic_amplitude": (float, 1.0),
    "ic_floor": (float, 0.1),
    "ic_path": (str, None),
    "seed": (int, 0),
    "p": (float, 4.0),
    "q": (float, 2.0),
    "diag_every_steps": (int, 10),
    "diag_every_time": (float, None),
    "out_csv": (str, "diagnostics.csv"),
    "out_snapshot": (str, None),
    "eps_v": (float, 1e-10),
    "hard_floor": (float, 1e-12),
    "sweep_mu": (_floats, None),
    "sweep_chi": (_floats, None),
    "sweep_k": (_floats, None),
    "bisect_iters": (int, 6),
    "workers": (int, 1),
}


@dataclass(frozen=True)
class RunConfig:
    params: Params
    scheme: SchemeConfig
    floor: VFloorPolicy
    ic_kind: str
    ic_options: dict
    seed: int
    functional: FunctionalSpec
    diag: DiagSpec
    out_csv: str = "diagnostics.csv"
    out_snapshot: Optional[str] = None
    sweep_mu: tuple[float, ...] = ()
    sweep_chi: tuple[float, ...] = ()
    sweep_k: tuple[float, ...] = ()
    bisect_iters: int = 6
    workers: int = 1
    values: dict = field(default_factory=dict, compare=False)

    @property
    def grid(self) -> Grid:
        return Grid.from_params(self.params)

    def with_values(self, **overrides) -> RunConfig:
        """Rebuild from the resolved key table with some keys replaced."""
        vals = dict(self.values)
        vals.update(overrides)
        return build_config(vals)


def read_pairs(text: str, source: str = "<config>") -> dict:
    pairs: dict = {}
    lines: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}: expected 'key = value'", line=lineno)
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError(f"{source}: empty key", line=lineno)
        if key in lines:
            raise ConfigError(f"duplicate key (lines {lines[key]} and {lineno})", key=key, line=lineno)
        if key not in KEYS:
            raise ConfigError("unknown key", key=key, line=lineno)
        conv = KEYS[key][0]
        try:
            pairs[key] = conv(value)
        except ValueError:
            raise ConfigError(f"cannot parse value {value!r}", key=key, line=lineno) from None
        lines[key] = lineno
    return pairs


def parse_config(path: Path | str, overrides: dict | None = None) -> RunConfig:
    path = Path(path)
    text = path.read_text()
    pairs = read_pairs(text, str(path))
    if overrides:
        pairs.update(overrides)
    return build_config(pairs)


def build_config(pairs: dict) -> RunConfig:
    unknown = set(pairs) - set(KEYS)
    if unknown:
        raise ConfigError("unknown key", key=sorted(unknown)[0])
    vals = {}
    for key, (conv, default) in KEYS.items():
        if key in pairs and pairs[key] is not None:
            vals[key] = pairs[key]
        elif default is REQUIRED:
            raise ConfigError("missing required key", key=key)
        else:
            vals[key] = default

    dim = vals["dim"]
    if dim not in (1, 2, 3):
        raise ConfigError("dim must be 1, 2 or 3", key="dim")
    for a, ax in enumerate(AXES):
        ckey, lkey = f"cells_{ax}", f"length_{ax}"
        if a < dim:
            if vals.get(ckey) is None:
                vals[ckey] = vals["cells_x"]
            if vals.get(lkey) is None:
                vals[lkey] = vals["length_x"]
        else:
            for key in (ckey, lkey, f"ic_center_{ax}"):
                if vals.get(key) is not None:
                    raise ConfigError(f"axis {ax} not present for dim={dim}", key=key)

    raw = {name: vals[name] for name in ("chi", "r", "mu", "alpha", "beta", "k")}
    raw["dim"] = dim
    raw["cells"] = tuple(vals[f"cells_{ax}"] for ax in AXES[:dim])
    raw["lengths"] = tuple(vals[f"length_{ax}"] for ax in AXES[:dim])
    try:
        params = validate_params(raw)
    except ValidationError as exc:
        key = str(exc).split()[0]
        key = {"cells": "cells_x", "lengths": "length_x"}.get(key, key)
        raise ConfigError(str(exc), key=key) from None

    try:
        functional = validate_functional_spec(vals["p"], vals["q"], params)
    except ValidationError as exc:
        key = "q" if "q" in str(exc).split()[0] else "p"
        raise ConfigError(str(exc), key=key) from None

    if vals["scheme"] not in SCHEMES:
        raise ConfigError(f"scheme must be one of {', '.join(SCHEMES)}", key="scheme")
    try:
        scheme = SchemeConfig(
            scheme=vals["scheme"], t_end=vals["t_end"], dt_max=vals["dt_max"],
            dt_min=vals["dt_min"], cfl_diffusion=vals["cfl_diffusion"],
            cfl_advection=vals["cfl_advection"], blowup_threshold=vals["blowup_threshold"],
            helmholtz_tol=vals["helmholtz_tol"])
    except ValueError as exc:
        raise ConfigError(str(exc), key=_scheme_key(str(exc))) from None
    try:
        floor = VFloorPolicy(eps_v=vals["eps_v"], hard_floor=vals["hard_floor"])
    except ValueError as exc:
        raise ConfigError(str(exc), key="hard_floor") from None

    if vals["ic_kind"] not in IC_KINDS:
        raise ConfigError(f"ic_kind must be one of {', '.join(IC_KINDS)}", key="ic_kind")
    if vals["diag_every_steps"] < 0:
        raise ConfigError("must be >= 0", key="diag_every_steps")
    if vals["diag_every_time"] is not None and not vals["diag_every_time"] > 0:
        raise ConfigError("must be positive", key="diag_every_time")
    if not vals["diag_every_steps"] and vals["diag_every_time"] is None:
        raise ConfigError("no diagnostic cadence (set diag_every_steps or diag_every_time)",
                          key="diag_every_steps")
    if vals["workers"] < 1:
        raise ConfigError("must be >= 1", key="workers")
    if vals["bisect_iters"] < 0:
        raise ConfigError("must be >= 0", key="bisect_iters")

    ic_options = _ic_options(vals, dim)
    for name, key in (("sweep_mu", "mu"), ("sweep_chi", "chi"), ("sweep_k", "k")):
        for x in vals[name] or ():
            try:
                validate_params({**raw, key: x})
            except ValidationError as exc:
                raise ConfigError(f"entry {x!r}: {exc}", key=name) from None

    return RunConfig(
        params=params, scheme=scheme, floor=floor, ic_kind=vals["ic_kind"],
        ic_options=ic_options, seed=vals["seed"], functional=functional,
        diag=DiagSpec(functional, vals["diag_every_steps"], vals["diag_every_time"]),
        out_csv=vals["out_csv"], out_snapshot=vals["out_snapshot"],
        sweep_mu=tuple(vals["sweep_mu"] or ()), sweep_chi=tuple(vals["sweep_chi"] or ()),
        sweep_k=tuple(vals["sweep_k"] or ()), bisect_iters=vals["bisect_iters"],
        workers=vals["workers"], values=vals)


def _scheme_key(message: str) -> str:
    for key in ("dt_min", "dt_max", "t_end", "blowup_threshold", "cfl_diffusion", "cfl_advection"):
        if key in message:
            return key
    return "scheme"


def _ic_options(vals: dict, dim: int) -> dict:
    kind = vals["ic_kind"]
    if kind == "constant":
        return {"u0": vals["ic_u0"], "v0": vals["ic_v0"]}
    if kind == "gaussian-bump":
        centers = [vals.get(f"ic_center_{ax}") for ax in AXES[:dim]]
        opts = {"width": vals["ic_width"], "amplitude": vals["ic_amplitude"], "floor": vals["ic_floor"]}
        if any(c is not None for c in centers):
            lengths = [vals[f"length_{ax}"] for ax in AXES[:dim]]
            opts["center"] = tuple(0.5 * L if c is None else c for c, L in zip(centers, lengths))
        return opts
    if kind == "random-smooth":
        return {"amplitude": vals["ic_amplitude"], "floor": vals["ic_floor"]}
    if vals["ic_path"] is None:
        raise ConfigError("from-snapshot needs ic_path", key="ic_path")
    return {"path": vals["ic_path"]}


def _render(value) -> str:
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(repr(float(x)) for x in value)
    return str(value)


def format_config(cfg: RunConfig) -> str:
    """Resolved configuration as parseable text (floats via repr, so exact)."""
    lines = ["# resolved configuration"]
    for key in KEYS:
        value = cfg.values.get(key)
        if value is None or value == ():
            continue
        lines.append(f"{key} = {_render(value)}")
    return "\n".join(lines) + "\n"
