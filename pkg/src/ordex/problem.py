"""Problem specifications: JSON configs, builtin coefficient families, reference solutions."""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import jsonschema
import numpy as np

from .grid import TimeGrid, make_grid
from .oracle import expm
from .starlan import MatrixFn, Tolerances

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
BUILTINS = ("constant", "commuting", "rotation", "jordan", "rabi", "airy")


class ConfigError(ValueError):
    pass


_complex = {
    "oneOf": [
        {"type": "number"},
        {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
    ]
}
_cvec = {"type": "array", "items": _complex, "minItems": 1}
_ctab = {"type": "array", "items": {"type": "array", "items": _cvec, "minItems": 1}, "minItems": 1}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["schema", "model", "interval", "n", "m"],
    "properties": {
        "schema": {"const": SCHEMA_VERSION},
        "name": {"type": "string"},
        "model": {
            "oneOf": [
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["type", "builtin"],
                    "properties": {
                        "type": {"const": "builtin"},
                        "builtin": {"enum": list(BUILTINS)},
                        "params": {"type": "object"},
                    },
                },
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["type", "coeffs"],
                    "properties": {"type": {"const": "polynomial"}, "coeffs": _ctab},
                },
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["type", "omega", "cos"],
                    "properties": {
                        "type": {"const": "fourier"},
                        "omega": {"type": "number"},
                        "cos": _ctab,
                        "sin": _ctab,
                    },
                },
            ]
        },
        "interval": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
        "n": {"type": "integer", "minimum": 8},
        "m": {"type": "integer", "minimum": 1},
        "w": _cvec,
        "v": _cvec,
        "oracle_rtol": {"type": "number", "minimum": 1e-12},
        "tolerances": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "null": {"type": "number", "exclusiveMinimum": 0},
                "mm": {"type": "number", "exclusiveMinimum": 0},
                "diag": {"type": "number", "exclusiveMinimum": 0},
                "bio": {"type": "number", "exclusiveMinimum": 0},
                "probe": {"type": "number", "exclusiveMinimum": 0},
                "smooth_proj": {"type": "number", "exclusiveMinimum": 0},
                "max_order": {"type": "integer", "minimum": 3},
            },
        },
    },
}

_BUILTIN_PARAMS = {
    "constant": {"matrix"},
    "commuting": {"matrix", "size", "seed", "omega"},
    "rotation": {"theta"},
    "jordan": {"size", "eigenvalue"},
    "rabi": {"Delta", "Omega", "omega"},
    "airy": {"epsilon"},
}


def _c(x) -> complex:
    return complex(x[0], x[1]) if isinstance(x, (list, tuple)) else complex(x)


def _cnest(x, depth: int) -> np.ndarray:
    """Complex array of the given nesting depth; leaves are numbers or [re, im]."""
    if depth == 0:
        return np.asarray(_c(x), dtype=np.complex128)
    return np.array([_cnest(e, depth - 1) for e in x], dtype=np.complex128)


@dataclass
class Problem:
    name: str
    N: int
    func: Callable = field(repr=False)
    a: float
    b: float
    n: int
    w: np.ndarray
    v: np.ndarray
    m: int
    tols: Tolerances
    oracle_rtol: float = 1e-10
    #: closed form ``t_nodes -> w^H U(t, a) v`` when one exists
    exact: Callable | None = field(default=None, repr=False)

    def grid(self, n: int | None = None) -> TimeGrid:
        return make_grid(self.a, self.b, n or self.n)

    def matrix_fn(self, n: int | None = None) -> MatrixFn:
        return MatrixFn.from_callable(self.func, self.grid(n))

    def reference(self, grid: TimeGrid) -> np.ndarray:
        """``w^H U(t_i, a) v``: closed form when available, else the ODE oracle."""
        if self.exact is not None:
            return self.exact(grid.nodes)
        from .oracle import ode_propagator

        sol = ode_propagator(self.func, self.N, grid, rtol=self.oracle_rtol,
                             atol=self.oracle_rtol * 1e-2, v=self.v, check=False)
        return sol.bilinear(self.w)


def _const_exact(M, a, w, v):
    def exact(t):
        return np.array([np.conj(w) @ expm(M * (x - a)) @ v for x in t])
    return exact


def _builtin(name: str, p: dict, a: float):
    """Returns ``(N, func, exact_factory, default_w, default_v)``."""
    unknown = set(p) - _BUILTIN_PARAMS[name]
    if unknown:
        raise ConfigError(f"model.params: unknown key(s) for builtin '{name}': {sorted(unknown)}")
    if name == "constant":
        M = _cnest(p.get("matrix", [[1, 2], [3, 4]]), 2)
        _square(M, "model.params.matrix")
        return len(M), (lambda t: M), (lambda w, v: _const_exact(M, a, w, v)), None, None
    if name == "rotation":
        th = float(p.get("theta", 1.0))
        M = np.array([[0, th], [-th, 0]], dtype=np.complex128)
        return 2, (lambda t: M), (lambda w, v: _const_exact(M, a, w, v)), None, None
    if name == "jordan":
        size = int(p.get("size", 2))
        if size < 2:
            raise ConfigError("model.params.size: jordan block needs size >= 2")
        M = np.eye(size, k=1, dtype=np.complex128) + _c(p.get("eigenvalue", 0)) * np.eye(size)
        return size, (lambda t: M), (lambda w, v: _const_exact(M, a, w, v)), None, None
    if name == "commuting":
        om = float(p.get("omega", 1.0))
        if om == 0:
            raise ConfigError("model.params.omega: must be nonzero")
        if "matrix" in p:
            M = _cnest(p["matrix"], 2)
            _square(M, "model.params.matrix")
        else:
            M = np.random.default_rng(int(p.get("seed", 0))).standard_normal(
                (int(p.get("size", 3)),) * 2).astype(np.complex128)

        def exact_factory(w, v):
            def exact(t):
                s = (np.sin(om * np.asarray(t)) - np.sin(om * a)) / om
                return np.array([np.conj(w) @ expm(M * x) @ v for x in s])
            return exact

        return len(M), (lambda t: np.cos(om * t) * M), exact_factory, None, None
    if name == "rabi":
        D = float(p.get("Delta", 1.0))
        Om = float(p.get("Omega", 1.0))
        om = float(p.get("omega", 2.0))

        def rabi(t):
            c = Om * np.cos(om * t)
            return np.array([[D / 2, c], [c, -D / 2]], dtype=np.complex128)

        s = 1 / np.sqrt(2)
        return 2, rabi, None, [s, s], [s, s]
    if name == "airy":
        eps = float(p.get("epsilon", 1.0))
        return 2, (lambda t: np.array([[0, 1], [eps * t, 0]], dtype=np.complex128)), None, \
            [1, 0], [1, 2]
    raise ConfigError(f"unknown builtin {name}")  # pragma: no cover


def _square(M, where):
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ConfigError(f"{where}: expected a square matrix, got shape {M.shape}")


def _table(raw, where) -> np.ndarray:
    try:
        tab = _cnest(raw, 3)
    except ValueError as exc:
        raise ConfigError(f"{where}: ragged coefficient table ({exc})") from None
    if tab.ndim != 3 or tab.shape[0] != tab.shape[1]:
        raise ConfigError(f"{where}: expected an N x N x K table, got shape {tab.shape}")
    return tab


def _normalize(w, v):
    pairing = np.vdot(w, v)
    if abs(pairing) < 1e-300:
        raise ConfigError("w, v: w^H v = 0, vectors cannot be normalized")
    if abs(pairing - 1) > 1e-12:
        warnings.warn(f"w^H v = {pairing:.6g}; rescaling v to make it 1", stacklevel=3)
        v = v / pairing
    return w, v


def problem_from_dict(cfg: dict) -> Problem:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        path = "$" + "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in e.absolute_path)
        raise ConfigError(f"config error at {path}: {e.message}")
    a, b = (float(x) for x in cfg["interval"])
    if not b > a:
        raise ConfigError("config error at $.interval: need b > a")
    model = cfg["model"]
    default_w = default_v = None
    exact_factory = None
    if model["type"] == "builtin":
        N, func, exact_factory, default_w, default_v = _builtin(
            model["builtin"], model.get("params", {}), a)
    elif model["type"] == "polynomial":
        tab = _table(model["coeffs"], "$.model.coeffs")
        N = tab.shape[0]
        powers = np.arange(tab.shape[2])

        def func(t, tab=tab):
            return tab @ (float(t) ** powers)
    else:
        ctab = _table(model["cos"], "$.model.cos")
        stab = _table(model["sin"], "$.model.sin") if "sin" in model else np.zeros_like(ctab)
        if ctab.shape != stab.shape:
            raise ConfigError("config error at $.model.sin: shape differs from $.model.cos")
        N = ctab.shape[0]
        om = float(model["omega"])
        ks = np.arange(ctab.shape[2])

        def func(t, ctab=ctab, stab=stab):
            return ctab @ np.cos(ks * om * float(t)) + stab @ np.sin(ks * om * float(t))

    def vec(key, default):
        if key in cfg:
            x = _cnest(cfg[key], 1)
        elif default is not None:
            x = np.asarray(default, dtype=np.complex128)
        else:
            x = np.eye(N, dtype=np.complex128)[0]
        if x.shape != (N,):
            raise ConfigError(f"config error at $.{key}: expected length {N}, got {x.shape[0]}")
        return x

    w = vec("w", default_w)
    v = vec("v", default_v)
    w, v = _normalize(w, v)
    m = int(cfg["m"])
    if m > N:
        raise ConfigError(f"config error at $.m: m={m} exceeds dimension N={N}")
    tols = Tolerances(**cfg.get("tolerances", {}))
    exact = exact_factory(w, v) if exact_factory is not None else None
    return Problem(cfg.get("name", model.get("builtin", model["type"])), N, func, a, b,
                   int(cfg["n"]), w, v, m, tols, float(cfg.get("oracle_rtol", 1e-10)), exact)


def load_problem(path) -> Problem:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from None
    return problem_from_dict(cfg)
