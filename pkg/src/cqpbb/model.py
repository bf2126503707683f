"""Problem data for nonconvex complex quadratic programs.

A problem instance minimizes

    F(x) = 1/2 x^H Q x + Re(c^H x)

over x in C^n subject to per-coordinate modulus bounds ``lo <= |x_i| <= hi``
and argument constraints ``arg(x_i) in A_i``, where each ``A_i`` is either a
closed interval of angles or a finite set of angles.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

TWO_PI = 2.0 * math.pi
# Angles closer than this are treated as equal.
ANGLE_TOL = 1e-12
HERMITIAN_TOL = 1e-12


def normalize_angle(theta: float) -> float:
    """Map an angle to [0, 2*pi)."""
    t = math.fmod(float(theta), TWO_PI)
    if t < 0.0:
        t += TWO_PI
    if t >= TWO_PI:
        t = 0.0
    return t


def circular_distance(a: float, b: float) -> float:
    d = abs(normalize_angle(a) - normalize_angle(b))
    return min(d, TWO_PI - d)


@dataclass(frozen=True)
class Interval:
    """Closed arc of angles ``[lo, hi]`` with ``0 <= hi - lo <= 2*pi``.

    ``lo`` is normalized to [0, 2*pi); ``hi`` keeps the original width and may
    therefore exceed 2*pi for arcs that wrap past zero.
    """

    lo: float
    hi: float

    def __post_init__(self):
        lo, hi = float(self.lo), float(self.hi)
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise ValueError("interval endpoints must be finite")
        width = hi - lo
        if width < -ANGLE_TOL:
            raise ValueError(f"interval endpoints reversed: [{lo}, {hi}]")
        if width > TWO_PI + 1e-9:
            raise ValueError(f"interval wider than 2*pi: [{lo}, {hi}]")
        width = min(max(width, 0.0), TWO_PI)
        if 0.0 <= lo < TWO_PI and hi - lo == width:
            # Already normalized; keep the exact endpoints.
            object.__setattr__(self, "lo", lo)
            object.__setattr__(self, "hi", hi)
            return
        start = normalize_angle(lo)
        object.__setattr__(self, "lo", start)
        object.__setattr__(self, "hi", start + width)

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def midpoint(self) -> float:
        return normalize_angle(0.5 * (self.lo + self.hi))

    @property
    def is_singleton(self) -> bool:
        return self.width <= ANGLE_TOL

    @property
    def is_full_circle(self) -> bool:
        return self.width >= TWO_PI - ANGLE_TOL

    def contains(self, theta: float, tol: float = ANGLE_TOL) -> bool:
        offset = normalize_angle(theta - self.lo)
        return offset <= self.width + tol or TWO_PI - offset <= tol

    def split(self) -> tuple["Interval", "Interval"]:
        mid = 0.5 * (self.lo + self.hi)
        return Interval(self.lo, mid), Interval(mid, self.hi)


@dataclass(frozen=True)
class Discrete:
    """Finite, strictly increasing set of angles in [0, 2*pi)."""

    angles: tuple[float, ...]

    def __post_init__(self):
        vals = sorted(normalize_angle(a) for a in self.angles)
        if not vals:
            raise ValueError("discrete argument set must be nonempty")
        if any(not math.isfinite(a) for a in vals):
            raise ValueError("discrete angles must be finite")
        for a, b in zip(vals, vals[1:]):
            if b - a <= ANGLE_TOL:
                raise ValueError(f"duplicate angles after normalization: {a}, {b}")
        if len(vals) > 1 and vals[0] + TWO_PI - vals[-1] <= ANGLE_TOL:
            raise ValueError("duplicate angles after normalization (wrap-around)")
        object.__setattr__(self, "angles", tuple(vals))

    @classmethod
    def psk(cls, order: int) -> "Discrete":
        """The M-PSK angle set {2 k pi / M : k = 0..M-1}."""
        if order < 1:
            raise ValueError("constellation order must be positive")
        return cls(tuple(TWO_PI * k / order for k in range(order)))

    def __len__(self) -> int:
        return len(self.angles)

    @property
    def width(self) -> float:
        return self.angles[-1] - self.angles[0]

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.angles[0] + self.angles[-1])

    @property
    def is_singleton(self) -> bool:
        return len(self.angles) == 1

    def contains(self, theta: float, tol: float = ANGLE_TOL) -> bool:
        return any(circular_distance(theta, a) <= tol for a in self.angles)

    def split(self) -> tuple["Discrete", "Discrete"]:
        mid = self.midpoint
        low = tuple(a for a in self.angles if a <= mid)
        high = tuple(a for a in self.angles if a > mid)
        return Discrete(low), Discrete(high)


ArgumentSet = Union[Interval, Discrete]


@dataclass(frozen=True)
class ModulusBounds:
    """Bounds ``lo <= |x_i| <= hi``. Ordering is checked by :func:`validate`."""

    lo: float
    hi: float

    def __post_init__(self):
        object.__setattr__(self, "lo", float(self.lo))
        object.__setattr__(self, "hi", float(self.hi))

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def is_fixed(self) -> bool:
        return self.hi - self.lo <= 0.0

    def split(self) -> tuple["ModulusBounds", "ModulusBounds"]:
        mid = 0.5 * (self.lo + self.hi)
        return ModulusBounds(self.lo, mid), ModulusBounds(mid, self.hi)


@dataclass(frozen=True, eq=False)
class ProblemCQP:
    Q: np.ndarray
    c: np.ndarray
    bounds: tuple[ModulusBounds, ...]
    args: tuple[ArgumentSet, ...]

    def __post_init__(self):
        Q = np.array(self.Q, dtype=complex)
        c = np.array(self.c, dtype=complex).reshape(-1)
        Q.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "bounds", tuple(self.bounds))
        object.__setattr__(self, "args", tuple(self.args))

    @property
    def n(self) -> int:
        return int(self.c.shape[0])

    def __eq__(self, other):
        if not isinstance(other, ProblemCQP):
            return NotImplemented
        return (
            self.Q.shape == other.Q.shape
            and np.array_equal(self.Q, other.Q)
            and np.array_equal(self.c, other.c)
            and self.bounds == other.bounds
            and self.args == other.args
        )

    __hash__ = None

    def validated(self) -> "ProblemCQP":
        """Return self, raising ``ValueError`` listing every violated invariant."""
        errors = validate(self)
        if errors:
            raise ValueError("invalid problem: " + "; ".join(errors))
        return self


def evaluate_objective(p: ProblemCQP, x: Sequence[complex]) -> float:
    x = np.asarray(x, dtype=complex).reshape(-1)
    if x.shape[0] != p.n:
        raise ValueError(f"dimension mismatch: x has {x.shape[0]} entries, problem has n={p.n}")
    quad = np.vdot(x, p.Q @ x)
    return float(0.5 * quad.real + np.vdot(p.c, x).real)


def validate(p: ProblemCQP) -> list[str]:
    """List every violated invariant of ``p``; an empty list means valid."""
    errors: list[str] = []
    Q, c = p.Q, p.c
    n = c.shape[0]
    if n < 1:
        errors.append("problem dimension must be positive")
    if Q.ndim != 2 or Q.shape != (n, n):
        errors.append(f"Q has shape {Q.shape}, expected ({n}, {n})")
    else:
        if not np.all(np.isfinite(Q)):
            errors.append("Q has non-finite entries")
        elif np.max(np.abs(Q - Q.conj().T), initial=0.0) > HERMITIAN_TOL:
            errors.append("Q is not Hermitian")
        elif np.max(np.abs(np.diag(Q).imag), initial=0.0) > HERMITIAN_TOL:
            errors.append("Q is not Hermitian (complex diagonal)")
    if not np.all(np.isfinite(c)):
        errors.append("c has non-finite entries")
    if len(p.bounds) != n:
        errors.append(f"expected {n} modulus bounds, got {len(p.bounds)}")
    if len(p.args) != n:
        errors.append(f"expected {n} argument sets, got {len(p.args)}")
    for i, b in enumerate(p.bounds):
        if not isinstance(b, ModulusBounds):
            errors.append(f"bounds[{i}] is not a ModulusBounds")
            continue
        if not (math.isfinite(b.lo) and math.isfinite(b.hi)):
            errors.append(f"modulus bounds {i} not finite")
        elif b.lo < 0:
            errors.append(f"modulus bounds {i} negative: lo={b.lo}")
        if b.lo > b.hi:
            errors.append(f"modulus bounds reversed at {i}: lo={b.lo} > hi={b.hi}")
    for i, a in enumerate(p.args):
        if not isinstance(a, (Interval, Discrete)):
            errors.append(f"args[{i}] is not an argument set")
    return errors


@dataclass(frozen=True)
class ComplexityConstants:
    u_max: float
    m_f: float
    m1: float
    m2: float
    kappa1: float
    kappa2: float
    epsilon: float = field(default=0.0)


def compute_constants(p: ProblemCQP, epsilon: float) -> ComplexityConstants:
    """Constants controlling the bound gap and the worst-case iteration count.

    ``m_f`` is the Lipschitz constant ``||Q||_F sqrt(n) u_max + ||c||_2`` of F
    over the box ``|x_i| <= u_max``.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    n = p.n
    u_max = max(b.hi for b in p.bounds)
    norm_q = float(np.linalg.norm(p.Q, "fro"))
    norm_c = float(np.linalg.norm(p.c))
    m_f = norm_q * math.sqrt(n) * u_max + norm_c
    m1 = math.sqrt(n) * m_f + n**1.5 * u_max * norm_q
    m2 = 0.5 * n**1.5 * norm_q
    total = m1 + m2
    kappa1 = math.sqrt(8.0 * epsilon / (u_max * total)) if u_max * total > 0 else math.inf
    kappa2 = math.sqrt(4.0 * epsilon / total) if total > 0 else math.inf
    return ComplexityConstants(u_max, m_f, m1, m2, kappa1, kappa2, float(epsilon))


def hermitize(A: np.ndarray) -> np.ndarray:
    A = np.asarray(A, dtype=complex)
    return 0.5 * (A + A.conj().T)
