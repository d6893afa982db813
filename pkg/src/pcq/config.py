"""JSON experiment configuration.

Schema (all keys except ``domain``, ``coefficient`` and ``nu`` optional)::

    {
      "domain": {"dim": 1, "extents": [0, 1], "resolution": 64},
      "b": 1.0,
      "coefficient": {"breakpoints": [0.1], "pieces": [[0.1, -1], [-0.1, 1]],
                      "working_range": [-3, 3]},
      "nu": 1e-3,
      "bounds": {"alpha": -6, "beta": 6},
      "target": {"sine": {"amplitude": 0.5, "modes": [2]}},
      "control": 0.0,
      "stationary_point": "optimize",
      "state": {"tol": 1e-12, "method": "picard"},
      "optimizer": {"tol": 1e-8, "max_iter": 500},
      "soc": {"directions": 20},
      "checks": {"directions": 10, "fd_steps": [1e-2, 1e-3, 1e-4, 1e-5],
                 "taylor_sizes": [1e-1, 1e-2, 1e-3], "gradient_tol": 1e-6,
                 "taylor_tol": 1e-9, "pontryagin_tol": 1e-6},
      "seed": 0
    }

Nodal fields (``b``, bounds, ``target``, ``control``) accept a number, or one
of ``{"constant": c}``, ``{"affine": [c0, c1, c2]}`` (``c0 + c1 x + c2 y``),
``{"sine": {"amplitude": A, "modes": [k1, k2]}}`` (``A prod sin(k pi x)``) or
``{"csv": "path"}`` (node table, path relative to the config file).
``target`` also accepts the string ``"state_of_zero"``.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields

import numpy as np

from .coefficient import PC2Coefficient
from .exceptions import ConfigError, PCQError
from .mesh import build_mesh
from .problem import BoxBounds, OptimizeConfig, ProblemSpec, TrackingObjective, state_of
from .second_order import SOCConfig
from .solvers import StateSolveConfig

TOP_KEYS = {
    "domain", "b", "coefficient", "nu", "bounds", "target", "control",
    "stationary_point", "state", "optimizer", "soc", "checks", "seed",
}
CHECK_DEFAULTS = {
    "directions": 10,
    "fd_steps": [1e-2, 1e-3, 1e-4, 1e-5],
    "taylor_sizes": [1e-1, 1e-2, 1e-3],
    "gradient_tol": 1e-6,
    "taylor_tol": 1e-9,
    "pontryagin_tol": 1e-6,
}


def _require(obj, key, where):
    if not isinstance(obj, dict):
        raise ConfigError("expected an object", where)
    if key not in obj:
        raise ConfigError("missing required key", f"{where}.{key}" if where else key)
    return obj[key]


def _dataclass_from(cls, data, key, **overrides):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("expected an object", key)
    names = {f.name for f in fields(cls)}
    for k in data:
        if k not in names:
            raise ConfigError(f"unknown option (allowed: {sorted(names)})", f"{key}.{k}")
    try:
        return cls(**{**data, **overrides})
    except (PCQError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc), key) from exc


@dataclass
class ExperimentConfig:
    domain: dict
    coefficient: dict
    nu: float
    b: object = 1.0
    bounds: dict = field(default_factory=lambda: {"alpha": -1e3, "beta": 1e3})
    target: object = "state_of_zero"
    control: object = 0.0
    stationary_point: str = "optimize"
    state: dict = field(default_factory=dict)
    optimizer: dict = field(default_factory=dict)
    soc: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    seed: int = 0
    base_dir: str = "."

    @classmethod
    def from_dict(cls, data, base_dir="."):
        if not isinstance(data, dict):
            raise ConfigError("config root must be a JSON object")
        for k in data:
            if k not in TOP_KEYS:
                raise ConfigError("unknown top-level key", k)
        for k in ("domain", "coefficient", "nu"):
            _require(data, k, "")
        return cls(**data, base_dir=base_dir)

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON at line {exc.lineno}: {exc.msg}") from exc
        return cls.from_dict(data, os.path.dirname(os.path.abspath(path)))

    # -- building blocks ---------------------------------------------------------

    def mesh(self, resolution=None):
        d = self.domain
        dim = _require(d, "dim", "domain")
        extents = _require(d, "extents", "domain")
        res = resolution if resolution is not None else _require(d, "resolution", "domain")
        for k in d:
            if k not in ("dim", "extents", "resolution"):
                raise ConfigError("unknown option", f"domain.{k}")
        try:
            if dim == 1:
                extents = tuple(float(v) for v in extents)
            else:
                extents = tuple(tuple(float(v) for v in e) for e in extents)
            return build_mesh(dim, extents, res)
        except (PCQError, TypeError, ValueError) as exc:
            raise ConfigError(str(exc), "domain") from exc

    def nodal_field(self, mesh, spec, key):
        """Evaluate a nodal field description."""
        if isinstance(spec, bool):
            raise ConfigError("expected a number or field object", key)
        if isinstance(spec, (int, float)):
            return mesh.constant(spec)
        if not isinstance(spec, dict) or len(spec) != 1:
            raise ConfigError("field needs exactly one of constant/affine/sine/csv", key)
        (kind, val), = spec.items()
        x = mesh.nodes
        try:
            if kind == "constant":
                return mesh.constant(float(val))
            if kind == "affine":
                c = [float(v) for v in val]
                if len(c) != mesh.dim + 1:
                    raise ConfigError(f"affine field needs {mesh.dim + 1} coefficients", f"{key}.affine")
                return c[0] + x @ np.asarray(c[1:])
            if kind == "sine":
                amp = float(_require(val, "amplitude", f"{key}.sine"))
                modes = [float(k) for k in _require(val, "modes", f"{key}.sine")]
                if len(modes) != mesh.dim:
                    raise ConfigError(f"need {mesh.dim} modes", f"{key}.sine.modes")
                return amp * np.prod(np.sin(np.pi * x * np.asarray(modes)), axis=1)
            if kind == "csv":
                path = val if os.path.isabs(val) else os.path.join(self.base_dir, val)
                return mesh.from_csv(path)
        except ConfigError:
            raise
        except (PCQError, OSError, TypeError, ValueError) as exc:
            raise ConfigError(str(exc), f"{key}.{kind}") from exc
        raise ConfigError(f"unknown field kind {kind!r}", key)

    def state_config(self):
        return _dataclass_from(
            StateSolveConfig, {"tol": 1e-12, **self.state} if isinstance(self.state, dict) else self.state, "state"
        )

    def optimize_config(self):
        return _dataclass_from(OptimizeConfig, self.optimizer, "optimizer")

    def soc_config(self, seed=None):
        # precedence: explicit argument, then soc.seed, then the top-level seed
        opts = dict(self.soc) if isinstance(self.soc, dict) else self.soc
        if isinstance(opts, dict):
            opts.setdefault("seed", self.seed)
            if seed is not None:
                opts["seed"] = seed
        return _dataclass_from(SOCConfig, opts, "soc")

    def check_options(self):
        if not isinstance(self.checks, dict):
            raise ConfigError("expected an object", "checks")
        for k in self.checks:
            if k not in CHECK_DEFAULTS:
                raise ConfigError(f"unknown option (allowed: {sorted(CHECK_DEFAULTS)})", f"checks.{k}")
        return {**CHECK_DEFAULTS, **self.checks}

    def build(self, resolution=None):
        """Validate everything and return ``(spec, u0)``."""
        mesh = self.mesh(resolution)
        try:
            coef = PC2Coefficient.from_dict(self.coefficient)
        except (PCQError, KeyError, TypeError, ValueError) as exc:
            raise ConfigError(str(exc), "coefficient") from exc
        b = self.nodal_field(mesh, self.b, "b")
        if not isinstance(self.bounds, dict):
            raise ConfigError("expected an object", "bounds")
        for k in self.bounds:
            if k not in ("alpha", "beta", "gamma"):
                raise ConfigError("unknown option", f"bounds.{k}")
        try:
            bounds = BoxBounds(
                self.nodal_field(mesh, _require(self.bounds, "alpha", "bounds"), "bounds.alpha"),
                self.nodal_field(mesh, _require(self.bounds, "beta", "bounds"), "bounds.beta"),
                self.bounds.get("gamma"),
            )
        except ConfigError:
            raise
        except PCQError as exc:
            raise ConfigError(str(exc), "bounds") from exc
        if not isinstance(self.nu, (int, float)) or isinstance(self.nu, bool):
            raise ConfigError("must be a number", "nu")
        if self.stationary_point not in ("optimize", "control"):
            raise ConfigError("must be 'optimize' or 'control'", "stationary_point")
        state_cfg = self.state_config()
        self.optimize_config()
        self.soc_config()
        self.check_options()
        u0 = self.nodal_field(mesh, self.control, "control")
        try:
            spec = ProblemSpec(mesh, b, coef, float(self.nu), bounds,
                               TrackingObjective(mesh.constant(0.0)), state_cfg)
        except PCQError as exc:
            raise ConfigError(str(exc), "nu" if "nu" in str(exc) else "b") from exc
        if self.target == "state_of_zero":
            y_d = state_of(spec, mesh.constant(0.0))
        elif isinstance(self.target, str):
            raise ConfigError(f"unknown target {self.target!r}", "target")
        else:
            y_d = self.nodal_field(mesh, self.target, "target")
        spec.objective = TrackingObjective(y_d)
        return spec, u0
