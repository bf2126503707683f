"""Convex hulls of the polar-coordinate constraint sets.

For one coordinate with argument set ``A`` the hull of
``{(r e^{i theta}, r) : r >= 0, theta in A}`` is a convex cone described by a
few halfspaces in ``(Re x, Im x, r)`` plus the disk ``|x| <= r``.  For modulus
bounds ``[lo, hi]`` the hull of ``{(r^2, r) : lo <= r <= hi}`` is the region
between the parabola ``X = r^2`` and its chord.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .model import TWO_PI, ArgumentSet, Discrete, Interval, ModulusBounds

GE, LE, EQ = ">=", "<=", "="
DEFAULT_TOL = 1e-8


@dataclass(frozen=True)
class HalfspaceCut:
    """``alpha Re(x) + beta Im(x)  {sense}  gamma r``."""

    alpha: float
    beta: float
    gamma: float
    sense: str

    def __post_init__(self):
        if self.sense not in (GE, LE, EQ):
            raise ValueError(f"unknown cut sense {self.sense!r}")

    def residual(self, x: complex, r: float) -> float:
        """Signed violation; positive means the cut is violated."""
        lhs = self.alpha * x.real + self.beta * x.imag - self.gamma * r
        if self.sense == GE:
            return -lhs
        if self.sense == LE:
            return lhs
        return abs(lhs)


@dataclass(frozen=True)
class ArgumentEnvelope:
    cuts: tuple[HalfspaceCut, ...]
    include_disk: bool


@dataclass(frozen=True)
class ModulusEnvelope:
    lo: float
    hi: float

    def violation(self, X: float, r: float) -> float:
        below = r * r - X
        chord = X - (self.lo + self.hi) * r + self.lo * self.hi
        return max(below, chord)

    def contains(self, X: float, r: float, tol: float = DEFAULT_TOL) -> bool:
        return self.violation(X, r) <= tol


def _pin(theta: float) -> tuple[HalfspaceCut, ...]:
    return (
        HalfspaceCut(1.0, 0.0, math.cos(theta), EQ),
        HalfspaceCut(0.0, 1.0, math.sin(theta), EQ),
    )


def _chord(a: float, b: float, sense: str) -> HalfspaceCut:
    # Line through e^{ia} and e^{ib}; normal along the bisector.
    mid = 0.5 * (a + b)
    return HalfspaceCut(math.cos(mid), math.sin(mid), math.cos(0.5 * (b - a)), sense)


def build_argument_envelope(a: ArgumentSet) -> ArgumentEnvelope:
    if isinstance(a, Interval):
        if a.is_singleton:
            return ArgumentEnvelope(_pin(a.lo), include_disk=False)
        if a.is_full_circle:
            return ArgumentEnvelope((), include_disk=True)
        # For widths above pi the same chord cut has gamma < 0 and still
        # describes the hull of the arc exactly.
        return ArgumentEnvelope((_chord(a.lo, a.hi, GE),), include_disk=True)
    if isinstance(a, Discrete):
        th = a.angles
        if len(th) == 1:
            return ArgumentEnvelope(_pin(th[0]), include_disk=False)
        if len(th) == 2:
            # The hull of two rays is a flat sector: the chord holds with equality.
            return ArgumentEnvelope((_chord(th[0], th[1], EQ),), include_disk=True)
        pairs = list(zip(th, th[1:])) + [(th[-1], th[0] + TWO_PI)]
        return ArgumentEnvelope(tuple(_chord(p, q, LE) for p, q in pairs), include_disk=True)
    raise TypeError(f"not an argument set: {a!r}")


def argument_violation(e: ArgumentEnvelope, x: complex, r: float) -> float:
    x = complex(x)
    worst = max((c.residual(x, r) for c in e.cuts), default=-math.inf)
    if e.include_disk:
        worst = max(worst, abs(x) - r)
    return worst


def argument_membership(e: ArgumentEnvelope, x: complex, r: float, tol: float = DEFAULT_TOL) -> bool:
    return argument_violation(e, x, r) <= tol


def build_modulus_envelope(b: ModulusBounds) -> ModulusEnvelope:
    return ModulusEnvelope(b.lo, b.hi)


def width_argument(a: ArgumentSet) -> float:
    return a.width


def width_modulus(b: ModulusBounds) -> float:
    return b.hi - b.lo


def tightness_bounds(a: ArgumentSet, b: ModulusBounds) -> tuple[float, float]:
    """Guaranteed ratio ``|x| / r`` and bound on ``X - r^2`` for any hull member."""
    w = width_argument(a)
    ratio = math.cos(0.5 * w) if w <= math.pi else 0.0
    return max(ratio, 0.0), 0.25 * width_modulus(b) ** 2
