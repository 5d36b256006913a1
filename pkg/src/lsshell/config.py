"""Run configuration: TOML schema, defaults and validation."""

from __future__ import annotations

import copy
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

import numpy as np

try:  # python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from .errors import ConfigError
from .grid import Box

PRESET_DIR = Path(__file__).with_name("presets")

REQUIRED = object()

# Nested schema: leaf values are defaults, REQUIRED marks mandatory keys.
SCHEMA: dict = {
    "name": "run",
    "domain": {"extents": REQUIRED, "origin": [0.0, 0.0, 0.0], "h_grid": REQUIRED},
    "initial": REQUIRED,  # free-form table checked by _check_initial
    "material": {"E": REQUIRED, "nu": REQUIRED, "thickness": REQUIRED, "kappa": 5.0 / 6.0},
    "filter": {"R": REQUIRED, "R_sens": None, "h": 0.5, "d_norm": None, "solver": "direct", "rtol": 1e-8},
    "mesh": {"snap_eps": 0.05, "hmin": 0.025, "min_angle": 10.0},
    "supports": {"clamp": [], "symmetry": [], "dirichlet": [], "tolerance": None},
    "loads": {"area": None, "line": []},
    "optimizer": {
        "alpha": REQUIRED, "c": 15.0, "max_iters": 50, "G_max": None,
        "normalize": "relative", "step_scale": 3e-3, "fd_step": 1e-4, "stationary_tol": 1e-4, "stationary_window": 5,
        "halving_rate": 1e-3, "halving_G": -0.01, "gamma_floor": 1e-12, "max_retries": 5,
        "mitc": True,
    },
    "output": {"dir": "out", "export_every": 1, "vtk": True, "obj": True, "fields": True},
    "runtime": {"threads": 0, "seed": 0},
}

_INITIAL_KEYS = {
    "plane": {"kind", "z0", "axis", "bump"},
    "sphere": {"kind", "center", "radius"},
    "dome": {"kind", "center", "radius"},
    "cylinder": {"kind", "point", "axis", "radius"},
}


@dataclass
class RunConfig:
    """Validated configuration; ``raw`` keeps the merged nested tables."""

    raw: dict
    source: Optional[Path] = None

    def __getitem__(self, key):
        return self.raw[key]

    @property
    def name(self) -> str:
        return self.raw["name"]

    @property
    def constrained(self) -> bool:
        return self.raw["optimizer"]["G_max"] is not None

    def boxes(self, key: str):
        return [Box.from_bounds(b) for b in self.raw["supports"][key]]

    def line_loads(self):
        from .fem import LineLoad

        return [LineLoad(Box.from_bounds(ll["box"]), np.asarray(ll["total"], dtype=float))
                for ll in self.raw["loads"]["line"]]

    @property
    def tolerance(self) -> float:
        tol = self.raw["supports"]["tolerance"]
        return 1e-6 * self.raw["domain"]["h_grid"] if tol is None else tol


def _merge(schema: dict, data: dict, path: str = "") -> dict:
    out = {}
    unknown = set(data) - set(schema)
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError(f"unknown config key '{path}{key}'")
    for key, default in schema.items():
        name = f"{path}{key}"
        if key in data:
            value = data[key]
            if isinstance(default, dict):
                if not isinstance(value, dict):
                    raise ConfigError(f"config key '{name}' must be a table")
                out[key] = _merge(default, value, name + ".")
            else:
                out[key] = copy.deepcopy(value)
        elif default is REQUIRED:
            raise ConfigError(f"missing required config key '{name}'")
        elif isinstance(default, dict):
            out[key] = _merge(default, {}, name + ".")
        else:
            out[key] = copy.deepcopy(default)
    return out


def _positive(value: Any, name: str, allow_zero: bool = False) -> None:
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ConfigError(f"config key '{name}' must be a number, got {value!r}")
    if value < 0 or (value == 0 and not allow_zero):
        raise ConfigError(f"config key '{name}' must be {'nonnegative' if allow_zero else 'positive'}, got {value}")


def _vector(value: Any, name: str, n: int = 3) -> None:
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"config key '{name}' must be a list of {n} numbers") from None
    if arr.shape != (n,) or not np.all(np.isfinite(arr)):
        raise ConfigError(f"config key '{name}' must be a list of {n} finite numbers, got {value!r}")


def _check_box(b: Any, name: str) -> None:
    try:
        Box.from_bounds(b)
    except (ConfigError, ValueError, TypeError) as exc:
        raise ConfigError(f"config key '{name}': {exc}") from None


def _check_initial(init: Any) -> None:
    if not isinstance(init, dict):
        raise ConfigError("config key 'initial' must be a table")
    kind = init.get("kind")
    if kind not in _INITIAL_KEYS:
        raise ConfigError(f"config key 'initial.kind' must be one of {sorted(_INITIAL_KEYS)}, got {kind!r}")
    unknown = set(init) - _INITIAL_KEYS[kind]
    if unknown:
        raise ConfigError(f"unknown config key 'initial.{sorted(unknown)[0]}' for kind {kind!r}")
    required = {"plane": ["z0"], "sphere": ["center", "radius"], "dome": ["center", "radius"],
                "cylinder": ["point", "axis", "radius"]}[kind]
    for key in required:
        if key not in init:
            raise ConfigError(f"missing required config key 'initial.{key}'")
    if "radius" in init:
        _positive(init["radius"], "initial.radius")
    for key in ("center", "point", ):
        if key in init:
            _vector(init[key], f"initial.{key}")
    if kind == "cylinder":
        _vector(init["axis"], "initial.axis")
    if kind == "plane" and init.get("axis", 2) not in (0, 1, 2):
        raise ConfigError("config key 'initial.axis' must be 0, 1 or 2")


def validate(raw: dict) -> dict:
    d = raw["domain"]
    _vector(d["extents"], "domain.extents")
    _vector(d["origin"], "domain.origin")
    for i, e in enumerate(d["extents"]):
        _positive(e, f"domain.extents[{i}]")
    _positive(d["h_grid"], "domain.h_grid")
    _check_initial(raw["initial"])
    m = raw["material"]
    _positive(m["E"], "material.E")
    _positive(m["thickness"], "material.thickness")
    _positive(m["kappa"], "material.kappa")
    if not isinstance(m["nu"], (int, float)) or not -1.0 < m["nu"] < 0.5:
        raise ConfigError(f"config key 'material.nu' must lie in (-1, 0.5), got {m['nu']!r}")
    f = raw["filter"]
    _positive(f["R"], "filter.R", allow_zero=True)
    if f["R"] < d["h_grid"]:
        raise ConfigError(f"config key 'filter.R' must be >= domain.h_grid ({d['h_grid']}), got {f['R']}")
    if f["R_sens"] is None:
        f["R_sens"] = f["R"]
    _positive(f["R_sens"], "filter.R_sens", allow_zero=True)
    _positive(f["h"], "filter.h")
    if f["d_norm"] is None:
        f["d_norm"] = 2.0 * f["R"]
    _positive(f["d_norm"], "filter.d_norm")
    if f["solver"] not in ("direct", "cg"):
        raise ConfigError(f"config key 'filter.solver' must be 'direct' or 'cg', got {f['solver']!r}")
    _positive(f["rtol"], "filter.rtol")
    me = raw["mesh"]
    _positive(me["snap_eps"], "mesh.snap_eps", allow_zero=True)
    _positive(me["hmin"], "mesh.hmin", allow_zero=True)
    _positive(me["min_angle"], "mesh.min_angle", allow_zero=True)
    if me["min_angle"] >= 60:
        raise ConfigError("config key 'mesh.min_angle' must be below 60 degrees")
    s = raw["supports"]
    for key in ("clamp", "dirichlet"):
        if not isinstance(s[key], list):
            raise ConfigError(f"config key 'supports.{key}' must be a list of boxes")
        for i, b in enumerate(s[key]):
            _check_box(b, f"supports.{key}[{i}]")
    planes = []
    for i, p in enumerate(s["symmetry"]):
        if not isinstance(p, dict) or set(p) - {"axis", "value"} or "axis" not in p:
            raise ConfigError(f"config key 'supports.symmetry[{i}]' must be a table with 'axis' and 'value'")
        axis = {"x": 0, "y": 1, "z": 2}.get(p["axis"], p["axis"])
        if axis not in (0, 1, 2):
            raise ConfigError(f"config key 'supports.symmetry[{i}].axis' must be x, y or z")
        planes.append({"axis": axis, "value": float(p.get("value", 0.0))})
    s["symmetry"] = planes
    if s["tolerance"] is not None:
        _positive(s["tolerance"], "supports.tolerance")
    lo = raw["loads"]
    if lo["area"] is not None:
        _vector(lo["area"], "loads.area")
    for i, ll in enumerate(lo["line"]):
        if not isinstance(ll, dict) or set(ll) != {"box", "total"}:
            raise ConfigError(f"config key 'loads.line[{i}]' must be a table with 'box' and 'total'")
        _check_box(ll["box"], f"loads.line[{i}].box")
        _vector(ll["total"], f"loads.line[{i}].total")
    if lo["area"] is None and not lo["line"]:
        raise ConfigError("config needs at least one load ('loads.area' or 'loads.line')")
    if not s["clamp"]:
        raise ConfigError("config key 'supports.clamp' must list at least one box")
    o = raw["optimizer"]
    _positive(o["alpha"], "optimizer.alpha")
    _positive(o["c"], "optimizer.c")
    if not isinstance(o["max_iters"], int) or o["max_iters"] < 1:
        raise ConfigError(f"config key 'optimizer.max_iters' must be a positive integer, got {o['max_iters']!r}")
    if o["G_max"] is not None:
        _positive(o["G_max"], "optimizer.G_max")
    if o["normalize"] not in ("none", "initial", "relative"):
        raise ConfigError(f"config key 'optimizer.normalize' must be none, initial or relative, got {o['normalize']!r}")
    for key in ("step_scale", "fd_step", "stationary_tol", "halving_rate", "gamma_floor"):
        _positive(o[key], f"optimizer.{key}")
    for key in ("stationary_window", "max_retries"):
        if not isinstance(o[key], int) or o[key] < 1:
            raise ConfigError(f"config key 'optimizer.{key}' must be a positive integer")
    out = raw["output"]
    if not isinstance(out["export_every"], int) or out["export_every"] < 0:
        raise ConfigError("config key 'output.export_every' must be a nonnegative integer")
    rt = raw["runtime"]
    if not isinstance(rt["threads"], int) or rt["threads"] < 0:
        raise ConfigError("config key 'runtime.threads' must be a nonnegative integer")
    return raw


def from_dict(data: dict, source: Optional[Path] = None) -> RunConfig:
    return RunConfig(validate(_merge(SCHEMA, data)), source)


def preset_path(name: str) -> Path:
    return PRESET_DIR / f"{name}.toml"


def parse_config(path) -> RunConfig:
    """Load a TOML file; a bare preset name (``dome``) resolves to the bundled file."""
    p = Path(path)
    if not p.exists() and not p.suffix and preset_path(str(path)).exists():
        p = preset_path(str(path))
    if not p.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(p, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {p}: {exc}") from None
    return from_dict(data, p)


def set_threads(n: int) -> None:
    """Cap the numba thread pool; 0 keeps the default (all cores)."""
    if n <= 0:
        return
    os.environ.setdefault("OMP_NUM_THREADS", str(n))
    try:
        import numba

        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
    except ImportError:  # pragma: no cover
        pass
