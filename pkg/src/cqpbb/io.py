"""JSON instance and result files.

Complex numbers are written as ``[re, im]`` pairs and angles as radians.
Keys are emitted in a fixed order so files diff cleanly; floats use Python's
shortest round-trip representation, so reading a file back reproduces the
instance bit for bit.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict
from typing import Any, Optional

import numpy as np

from . import apps
from .model import Discrete, Interval, ModulusBounds, ProblemCQP

FORMAT = "cqpbb-instance"
RESULT_FORMAT = "cqpbb-result"
VERSION = 1
RNG_NAME = "numpy-PCG64/SeedSequence(seed).spawn"
KINDS = ("raw-cqp", "mimo", "radar", "vb")


def _cx(z) -> list:
    z = complex(z)
    return [z.real, z.imag]


def _cx_vec(v) -> list:
    return [_cx(z) for z in np.asarray(v).reshape(-1)]


def _from_cx(pair) -> complex:
    return complex(float(pair[0]), float(pair[1]))


def problem_to_dict(p: ProblemCQP) -> dict:
    args = []
    for a in p.args:
        if isinstance(a, Interval):
            args.append({"type": "interval", "lo": a.lo, "hi": a.hi})
        else:
            args.append({"type": "discrete", "angles": list(a.angles)})
    return {
        "n": p.n,
        "Q": [_cx_vec(row) for row in p.Q],
        "c": _cx_vec(p.c),
        "bounds": [[b.lo, b.hi] for b in p.bounds],
        "args": args,
    }


def problem_from_dict(d: dict) -> ProblemCQP:
    n = int(d["n"])
    Q = np.array([[_from_cx(z) for z in row] for row in d["Q"]], dtype=complex).reshape(n, n)
    c = np.array([_from_cx(z) for z in d["c"]], dtype=complex)
    bounds = tuple(ModulusBounds(float(lo), float(hi)) for lo, hi in d["bounds"])
    args = []
    for a in d["args"]:
        if a["type"] == "interval":
            args.append(Interval(float(a["lo"]), float(a["hi"])))
        elif a["type"] == "discrete":
            args.append(Discrete(tuple(float(t) for t in a["angles"])))
        else:
            raise ValueError(f"unknown argument set type {a['type']!r}")
    return ProblemCQP(Q, c, bounds, tuple(args)).validated()


def spec_to_dict(spec) -> dict:
    d = asdict(spec)
    for k, v in d.items():
        if isinstance(v, tuple):
            d[k] = list(v)
    return d


def spec_from_dict(kind: str, d: dict):
    d = dict(d)
    for k, v in d.items():
        if isinstance(v, list):
            d[k] = tuple(v)
    cls = {"mimo": apps.MimoSpec, "radar": apps.RadarSpec, "vb": apps.VbSpec}[kind]
    return cls(**d)


def realize(kind: str, spec) -> tuple[ProblemCQP, dict]:
    """Problem and ground-truth metadata for a generator spec."""
    if kind == "mimo":
        p, gt = apps.gen_mimo(spec)
        return p, {"offset": gt.offset, "sigma": gt.sigma, "planted": _cx_vec(gt.planted)}
    if kind == "radar":
        return apps.gen_radar(spec), {}
    if kind == "vb":
        return apps.gen_vb(spec), {}
    raise ValueError(f"unknown generator kind {kind!r}")


class Instance:
    def __init__(self, kind: str, problem: ProblemCQP, spec=None, truth: Optional[dict] = None):
        if kind not in KINDS:
            raise ValueError(f"unknown instance kind {kind!r}")
        self.kind = kind
        self.problem = problem
        self.spec = spec
        self.truth = truth or {}

    @classmethod
    def generate(cls, kind: str, spec) -> "Instance":
        p, truth = realize(kind, spec)
        return cls(kind, p, spec, truth)

    def __eq__(self, other):
        return (isinstance(other, Instance) and self.kind == other.kind and self.problem == other.problem
                and self.spec == other.spec and self.truth == other.truth)

    @property
    def sense(self) -> str:
        """Objective direction used for display: radar and beamforming maximize ``-F``."""
        return "max" if self.kind in ("radar", "vb") else "min"

    @property
    def offset(self) -> float:
        return float(self.truth.get("offset", 0.0))

    def display(self, value: float) -> float:
        """Map a value of F to the application's reported objective."""
        if value is None or (isinstance(value, float) and math.isnan(value)):
            return value
        return -value if self.sense == "max" else value + self.offset

    def to_dict(self) -> dict:
        d = {"format": FORMAT, "version": VERSION, "kind": self.kind, "rng": RNG_NAME}
        d["spec"] = spec_to_dict(self.spec) if self.spec is not None else None
        d["problem"] = problem_to_dict(self.problem)
        d["truth"] = self.truth
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Instance":
        if d.get("format") != FORMAT:
            raise ValueError("not an instance file")
        if d.get("version") != VERSION:
            raise ValueError(f"unsupported instance version {d.get('version')!r}")
        kind = d["kind"]
        spec = spec_from_dict(kind, d["spec"]) if d.get("spec") is not None else None
        if d.get("problem") is not None:
            return cls(kind, problem_from_dict(d["problem"]), spec, d.get("truth") or {})
        if spec is None:
            raise ValueError("instance file has neither a problem nor a spec")
        return cls.generate(kind, spec)

    def identity(self) -> str:
        blob = json.dumps(problem_to_dict(self.problem), separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def dumps(obj: dict) -> str:
    return json.dumps(obj, indent=1, allow_nan=True) + "\n"


def write_json(path: Optional[str], obj: dict):
    text = dumps(obj)
    if path is None or path == "-":
        import sys
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def read_instance(path: str) -> Instance:
    with open(path) as fh:
        return Instance.from_dict(json.load(fh))


def finite_or_none(v: Any):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v
