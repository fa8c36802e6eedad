"""Declarative augmentation pipelines.

A spec is a JSON document::

    {"version": 1,
     "master_seed": 7,
     "ops": [{"name": "elastic_deform", "params": {"alpha": 4, "sigma": {"uniform": [4, 8]}}},
             {"name": "add_noise", "params": {"kind": {"choice": ["gaussian", "speckle"]}, "sigma": 0.05}}]}

Any parameter may be given as ``{"uniform": [lo, hi]}``, ``{"randint": [lo, hi]}``
(inclusive) or ``{"choice": [...]}``; these are drawn once per run from the
op's own seed. Op ``i`` runs with seed ``derive_seed(master_seed, i)``.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from ..image import check_image
from ..io import load_image
from ..seeding import derive_seed
from . import transforms as T
from .perlin import perlin

__all__ = ["SCHEMA_VERSION", "OpSpec", "AugmentSpec", "OPS", "run_pipeline", "load_spec", "resolve_params"]

SCHEMA_VERSION = 1
INF = math.inf


@dataclass(frozen=True)
class Rule:
    kind: str  # float | int | odd_int | choice | subset | int_pair | float_pair | path
    default: Any
    lo: float = -INF
    hi: float = INF
    lo_open: bool = False
    options: tuple = ()

    def check(self, op: str, name: str, v) -> Any:
        where = f"{op}.{name}"
        if self.kind == "path":
            if v is not None and not isinstance(v, str):
                raise T.AugmentError(f"{where} must be a file path or null")
            return v
        if self.kind == "choice":
            if v not in self.options:
                raise T.AugmentError(f"{where}={v!r} is not one of {list(self.options)}")
            return v
        if self.kind == "subset":
            if isinstance(v, str) or not isinstance(v, (list, tuple)) or not v or any(s not in self.options for s in v):
                raise T.AugmentError(f"{where} must be a nonempty subset of {list(self.options)}")
            return list(v)
        if self.kind in ("int_pair", "float_pair"):
            if not isinstance(v, (list, tuple)) or len(v) != 2:
                raise T.AugmentError(f"{where} must be a [lo, hi] pair")
            cast = int if self.kind == "int_pair" else float
            lo, hi = (self._num(where, x, cast) for x in v)
            if lo > hi:
                raise T.AugmentError(f"{where} has lo > hi")
            return [lo, hi]
        cast = float if self.kind == "float" else int
        x = self._num(where, v, cast)
        if self.kind == "odd_int" and x % 2 == 0:
            raise T.AugmentError(f"{where} must be odd")
        return x

    def _num(self, where, v, cast):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise T.AugmentError(f"{where} must be a number, got {v!r}")
        if cast is int and float(v) != int(v):
            raise T.AugmentError(f"{where} must be an integer")
        x = cast(v)
        if not math.isfinite(x) or x < self.lo or x > self.hi or (self.lo_open and x <= self.lo):
            bracket = "(" if self.lo_open else "["
            raise T.AugmentError(f"{where}={x} is outside {bracket}{self.lo}, {self.hi}]")
        return x


def _texture_blend(img, p, seed, trace):
    h, w = img.shape
    tex = load_image(p["texture"]) if p["texture"] else perlin(w, h, p["texture_cell"], 4, derive_seed(seed, 1))
    mask = load_image(p["texture_mask"]) if p["texture_mask"] else None
    return T.texture_blend(img, tex, p["alpha"], p["region_frac"], seed, p["cell"], mask)


OPS: dict[str, tuple[Callable, dict[str, Rule]]] = {
    "texture_blend": (_texture_blend, {
        "alpha": Rule("float", 0.5, 0, 1),
        "region_frac": Rule("float", 0.5, 0, 1),
        "cell": Rule("float", 16.0, 2),
        "texture": Rule("path", None),
        "texture_cell": Rule("float", 8.0, 2),
        "texture_mask": Rule("path", None),
    }),
    "elastic_deform": (lambda img, p, seed, trace: T.elastic_deform(img, p["alpha"], p["sigma"], seed), {
        "alpha": Rule("float", 4.0, 0),
        "sigma": Rule("float", 8.0, 0, lo_open=True),
    }),
    "add_noise": (lambda img, p, seed, trace: T.add_noise(img, p["kind"], seed, p["sigma"], p["p"]), {
        "kind": Rule("choice", "gaussian", options=T.NOISE_KINDS),
        "sigma": Rule("float", 0.05, 0),
        "p": Rule("float", 0.05, 0, 1),
    }),
    "dusting_powder": (lambda img, p, seed, trace: T.dusting_powder(img, p["cell"], p["intensity"], seed,
                                                                    p["octaves"]), {
        "cell": Rule("float", 16.0, 2),
        "intensity": Rule("float", 0.3, 0, 1),
        "octaves": Rule("int", 4, 1, 8),
    }),
    "adjust_brightness": (lambda img, p, seed, trace: T.adjust_brightness(img, p["factor"]), {
        "factor": Rule("float", 1.0, 0, lo_open=True),
    }),
    "occlude": (lambda img, p, seed, trace: T.occlude(img, p["shapes"], p["count_range"], seed, p["intensities"],
                                                      p["size_range"]), {
        "shapes": Rule("subset", list(T.SHAPES), options=T.SHAPES),
        "count_range": Rule("int_pair", [1, 5], 0),
        "intensities": Rule("subset", list(T.INTENSITIES), options=T.INTENSITIES),
        "size_range": Rule("float_pair", [0.05, 0.3], 0, 1),
    }),
    "smear": (lambda img, p, seed, trace: T.smear(img, p["kmax"], p["ellipse_count_range"], p["drag_range"], seed,
                                                  p["axis_range"], p["drag_weight"], trace), {
        "kmax": Rule("odd_int", 9, 3),
        "ellipse_count_range": Rule("int_pair", [1, 3], 0),
        "drag_range": Rule("int_pair", [1, 4], 0),
        "axis_range": Rule("float_pair", [0.05, 0.25], 0, 1),
        "drag_weight": Rule("float", 0.5, 0, 1),
    }),
    "moisture": (lambda img, p, seed, trace: T.moisture(img, p["m"], p["c"], p["b"], p["e"]), {
        "m": Rule("float", 0.5, 0, 1),
        "c": Rule("float", 1.0, 0),
        "b": Rule("float", 1.0, 0),
        "e": Rule("float", 1.0, 0),
    }),
}


def _is_sampler(v) -> bool:
    return isinstance(v, dict) and len(v) == 1 and next(iter(v)) in ("uniform", "randint", "choice")


def _sample(where: str, v, rng):
    (kind, arg), = v.items()
    if kind == "choice":
        if not isinstance(arg, list) or not arg:
            raise T.AugmentError(f"{where}: choice needs a nonempty list")
        return arg[int(rng.integers(len(arg)))]
    if not isinstance(arg, list) or len(arg) != 2 or arg[0] > arg[1]:
        raise T.AugmentError(f"{where}: {kind} needs a [lo, hi] pair with lo <= hi")
    if kind == "uniform":
        return float(rng.uniform(arg[0], arg[1]))
    return int(rng.integers(int(arg[0]), int(arg[1]) + 1))


def _rules(name: str) -> dict[str, Rule]:
    if name not in OPS:
        raise T.AugmentError(f"unknown augmentation {name!r}; expected one of {sorted(OPS)}")
    return OPS[name][1]


def resolve_params(name: str, params: dict, seed: int) -> dict:
    """Fill defaults, draw sampled values from ``seed`` and range-check everything."""
    rules = _rules(name)
    unknown = set(params) - set(rules)
    if unknown:
        raise T.AugmentError(f"{name}: unknown parameters {sorted(unknown)}")
    rng = np.random.default_rng(derive_seed(seed, 0))
    out = {}
    for key in sorted(rules):
        v = params.get(key, rules[key].default)
        if _is_sampler(v):
            v = _sample(f"{name}.{key}", v, rng)
        out[key] = rules[key].check(name, key, v)
    return out


@dataclass(frozen=True)
class OpSpec:
    name: str
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class AugmentSpec:
    ops: tuple[OpSpec, ...]
    master_seed: int = 0

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < 2**64:
            raise T.AugmentError("master_seed must be a 64-bit unsigned integer")
        for op in self.ops:
            rules = _rules(op.name)
            unknown = set(op.params) - set(rules)
            if unknown:
                raise T.AugmentError(f"{op.name}: unknown parameters {sorted(unknown)}")
            for key, v in op.params.items():
                if not _is_sampler(v):
                    rules[key].check(op.name, key, v)

    def with_seed(self, seed: int) -> "AugmentSpec":
        return AugmentSpec(self.ops, seed)

    def to_dict(self) -> dict:
        return {"version": SCHEMA_VERSION, "master_seed": int(self.master_seed),
                "ops": [{"name": o.name, "params": dict(o.params)} for o in self.ops]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "AugmentSpec":
        if not isinstance(d, dict):
            raise T.AugmentError("spec must be a JSON object")
        if d.get("version") != SCHEMA_VERSION:
            raise T.AugmentError(f"unsupported spec version {d.get('version')!r} (expected {SCHEMA_VERSION})")
        ops = d.get("ops", [])
        if not isinstance(ops, list) or any(not isinstance(o, dict) or "name" not in o for o in ops):
            raise T.AugmentError("ops must be a list of {name, params} objects")
        seed = d.get("master_seed", 0)
        if isinstance(seed, bool) or not isinstance(seed, int):
            raise T.AugmentError("master_seed must be an integer")
        return cls(tuple(OpSpec(o["name"], dict(o.get("params", {}))) for o in ops), seed)

    @classmethod
    def from_json(cls, text: str) -> "AugmentSpec":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise T.AugmentError(f"spec is not valid JSON: {exc}") from exc


def load_spec(path: str | os.PathLike) -> AugmentSpec:
    """Read a spec file; relative texture paths are resolved against its directory."""
    with open(path, encoding="utf-8") as fh:
        spec = AugmentSpec.from_json(fh.read())
    base = os.path.dirname(os.path.abspath(path))
    ops = []
    for op in spec.ops:
        params = dict(op.params)
        for key in ("texture", "texture_mask"):
            if isinstance(params.get(key), str) and not os.path.isabs(params[key]):
                params[key] = os.path.join(base, params[key])
        ops.append(OpSpec(op.name, params))
    return AugmentSpec(tuple(ops), spec.master_seed)


def run_pipeline(img: np.ndarray, spec: AugmentSpec) -> tuple[np.ndarray, list[dict]]:
    """Apply ``spec`` in order. Returns the image and one log entry per op."""
    out = check_image(img).copy()
    log = []
    for i, op in enumerate(spec.ops):
        seed = derive_seed(spec.master_seed, i)
        params = resolve_params(op.name, op.params, seed)
        trace: list = []
        out = OPS[op.name][0](out, params, seed, trace)
        entry = {"index": i, "name": op.name, "seed": seed, "params": params}
        if trace:
            entry["trace"] = trace
        log.append(entry)
    return out, log
