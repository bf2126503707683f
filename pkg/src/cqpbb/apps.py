"""Seeded instance generators and an exhaustive oracle.

Three problem families are produced:

* MIMO maximum-likelihood detection over an M-PSK constellation,
* unimodular radar code design with a similarity constraint,
* virtual beamforming (received power maximization) with per-antenna power.

Randomness comes from numpy's PCG64 seeded through ``SeedSequence(seed)``;
each tensor draws from its own spawned child stream, in a fixed order, so an
instance depends only on its spec.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .model import TWO_PI, Discrete, Interval, ModulusBounds, ProblemCQP, hermitize

BARKER7 = (1, 1, 1, -1, -1, 1, -1)
ENUMERATION_LIMIT = 10**7


def _streams(seed: int, k: int) -> list[np.random.Generator]:
    return [np.random.Generator(np.random.PCG64(s)) for s in np.random.SeedSequence(int(seed)).spawn(k)]


def complex_gaussian(rng: np.random.Generator, shape) -> np.ndarray:
    """Unit-variance circular complex Gaussian samples."""
    z = rng.standard_normal(shape + (2,) if isinstance(shape, tuple) else (shape, 2))
    return (z[..., 0] + 1j * z[..., 1]) / math.sqrt(2.0)


@dataclass(frozen=True)
class MimoSpec:
    m: int
    n: int
    M: int = 4
    snr_db: float = 15.0
    seed: int = 0

    def __post_init__(self):
        if not (self.m >= self.n >= 1):
            raise ValueError("MIMO spec needs m >= n >= 1")
        if self.M < 2:
            raise ValueError("constellation order must be at least 2")


@dataclass(frozen=True)
class RadarSpec:
    n: int = 7
    rho: Optional[float] = None
    fdTr: float = 0.15
    delta_angle: float = math.pi / 6
    seed: int = 0
    x0: Optional[tuple] = None

    def __post_init__(self):
        if self.rho is not None and not (0.0 < self.rho < 1.0):
            raise ValueError("rho must lie in (0, 1)")
        if not (0.0 < self.delta_angle <= math.pi / 2):
            raise ValueError("delta_angle must lie in (0, pi/2]")
        if self.x0 is None and self.n != 7:
            raise ValueError("codes of length other than 7 need an explicit x0")
        if self.x0 is not None and len(self.x0) != self.n:
            raise ValueError("x0 length does not match n")


@dataclass(frozen=True)
class VbSpec:
    m: int
    n: int
    power: Optional[tuple] = None
    seed: int = 0

    def __post_init__(self):
        if self.m < 1 or self.n < 1:
            raise ValueError("VB spec needs m, n >= 1")
        if self.power is not None and len(self.power) != self.n:
            raise ValueError("power list length must equal n")


@dataclass
class GroundTruth:
    planted: Optional[np.ndarray] = None
    value: Optional[float] = None
    minimizer: Optional[np.ndarray] = None
    offset: float = 0.0
    points: int = 0
    sigma: Optional[float] = None


def gen_mimo(spec: MimoSpec) -> tuple[ProblemCQP, GroundTruth]:
    g_h, g_x, g_v = _streams(spec.seed, 3)
    H = complex_gaussian(g_h, (spec.m, spec.n))
    k = g_x.integers(0, spec.M, size=spec.n)
    x_star = np.exp(1j * TWO_PI * k / spec.M)
    v = complex_gaussian(g_v, (spec.m,))
    signal = float(np.linalg.norm(H @ x_star) ** 2)
    if math.isinf(spec.snr_db) and spec.snr_db > 0:
        sigma = 0.0
    else:
        sigma = math.sqrt(signal / (spec.n * 10.0 ** (spec.snr_db / 10.0)))
    r = H @ x_star + sigma * v
    Q = hermitize(H.conj().T @ H)
    c = -H.conj().T @ r
    psk = Discrete.psk(spec.M)
    p = ProblemCQP(Q, c, tuple(ModulusBounds(1.0, 1.0) for _ in range(spec.n)), tuple(psk for _ in range(spec.n)))
    return p, GroundTruth(planted=x_star, offset=0.5 * float(np.vdot(r, r).real), sigma=sigma)


def radar_steering(n: int, fdTr: float) -> np.ndarray:
    return np.exp(1j * TWO_PI * fdTr * np.arange(n))


def gen_radar(spec: RadarSpec) -> ProblemCQP:
    (g_rho,) = _streams(spec.seed, 1)
    rho = spec.rho if spec.rho is not None else float(g_rho.uniform(0.2, 0.8))
    n = spec.n
    x0 = np.asarray(spec.x0 if spec.x0 is not None else BARKER7, dtype=complex)
    idx = np.arange(n)
    Mcov = rho ** np.abs(idx[:, None] - idx[None, :])
    p = radar_steering(n, spec.fdTr)
    R = np.linalg.inv(Mcov) * np.conj(np.outer(p, p.conj()))
    Q = hermitize(-2.0 * R)
    d = spec.delta_angle
    args = tuple(Interval(a - d, a + d) for a in np.angle(x0))
    bounds = tuple(ModulusBounds(1.0, 1.0) for _ in range(n))
    return ProblemCQP(Q, np.zeros(n, dtype=complex), bounds, args)


def gen_vb(spec: VbSpec) -> ProblemCQP:
    (g_h,) = _streams(spec.seed, 1)
    G = complex_gaussian(g_h, (spec.m, spec.n))
    Q = hermitize(-2.0 * G.conj().T @ G)
    power = spec.power if spec.power is not None else (1.0,) * spec.n
    bounds = tuple(ModulusBounds(0.0, math.sqrt(P)) for P in power)
    args = tuple(Interval(0.0, TWO_PI) for _ in range(spec.n))
    return ProblemCQP(Q, np.zeros(spec.n, dtype=complex), bounds, args)


def enumeration_size(p: ProblemCQP) -> int:
    size = 1
    for a in p.args:
        size *= len(a) if isinstance(a, Discrete) else 0
    return size


def brute_force(p: ProblemCQP, chunk: int = 1 << 16) -> GroundTruth:
    """Exact minimum over every feasible point of a fully discrete instance.

    Points are scanned in lexicographic order of their angle indices; among
    values within a relative 1e-12 of the minimum the first one wins.
    """
    for i, (a, b) in enumerate(zip(p.args, p.bounds)):
        if not isinstance(a, Discrete):
            raise ValueError("oracle requires discrete arguments")
        if b.lo != b.hi:
            raise ValueError(f"oracle requires fixed modulus (coordinate {i})")
    sizes = [len(a) for a in p.args]
    total = math.prod(sizes)
    if total > ENUMERATION_LIMIT:
        raise ValueError(f"enumeration size {total} exceeds limit {ENUMERATION_LIMIT}")
    points = [b.lo * np.exp(1j * np.asarray(a.angles)) for a, b in zip(p.args, p.bounds)]
    Qt = p.Q.T
    cc = p.c.conj()
    values = np.empty(total)
    for start in range(0, total, chunk):
        ids = np.arange(start, min(total, start + chunk))
        digits = np.unravel_index(ids, sizes)
        X = np.stack([pts[d] for pts, d in zip(points, digits)], axis=1)
        quad = np.einsum("ki,ki->k", X.conj(), X @ Qt).real
        values[ids] = 0.5 * quad + (X @ cc).real
    best = float(values.min())
    first = int(np.argmax(values <= best + 1e-12 * (1.0 + abs(best))))
    digits = np.unravel_index(first, sizes)
    x = np.array([pts[d] for pts, d in zip(points, digits)])
    return GroundTruth(value=float(values[first]), minimizer=x, points=total)
