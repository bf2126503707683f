"""Semidefinite relaxations of a CQP as real block-diagonal conic programs.

A relaxation lifts ``x`` to the Hermitian matrix ``H = [[1, x^H], [x, X]]``
and stores its real embedding ``T(H) = [[Re H, -Im H], [Im H, Re H]]`` as one
PSD block.  The enhanced relaxation adds, for every coordinate, a modulus
variable ``r``, the argument hull cuts, the disk ``|x| <= r`` as a 3x3 arrow
block, and the modulus hull through a 2x2 block ``[[X_ii, r], [r, 1]]``.

Coordinates whose value is forced (``lo == hi`` with a single admissible
angle, or ``lo == hi == 0``) are substituted out before the program is built.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import envelope as env
from .model import ArgumentSet, Discrete, Interval, ModulusBounds, ProblemCQP

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
NUMERICAL_FAILURE = "numerical-failure"

EMBEDDING_TOL = 1e-5
CORNER_TOL = 1e-6


@dataclass(frozen=True)
class SearchBox:
    args: tuple[ArgumentSet, ...]
    bounds: tuple[ModulusBounds, ...]

    def __post_init__(self):
        object.__setattr__(self, "args", tuple(self.args))
        object.__setattr__(self, "bounds", tuple(self.bounds))
        if len(self.args) != len(self.bounds):
            raise ValueError("argument sets and modulus bounds differ in length")

    @classmethod
    def of(cls, p: ProblemCQP) -> "SearchBox":
        return cls(p.args, p.bounds)

    @property
    def n(self) -> int:
        return len(self.args)

    def replace(self, i: int, arg: Optional[ArgumentSet] = None, bound: Optional[ModulusBounds] = None) -> "SearchBox":
        args, bounds = list(self.args), list(self.bounds)
        if arg is not None:
            args[i] = arg
        if bound is not None:
            bounds[i] = bound
        return SearchBox(tuple(args), tuple(bounds))


@dataclass(frozen=True, eq=False)
class ConicProgram:
    """``min <C, Z> + offset  s.t.  <A_k, Z> = b_k,  Z in PSD blocks x R^n_lp_+``.

    Coefficients are stored as triplets over the upper triangle: an entry
    ``(row, blk, i, j, v)`` with ``i <= j`` adds ``v * Z_blk[i, j]`` to the
    left-hand side of ``row``.  Equivalently the symmetric coefficient matrix
    holds ``v`` on the diagonal and ``v / 2`` in both off-diagonal positions.
    """

    psd_orders: tuple[int, ...]
    n_lp: int
    b: np.ndarray
    a_row: np.ndarray
    a_blk: np.ndarray
    a_i: np.ndarray
    a_j: np.ndarray
    a_val: np.ndarray
    l_row: np.ndarray
    l_idx: np.ndarray
    l_val: np.ndarray
    c_blk: np.ndarray
    c_i: np.ndarray
    c_j: np.ndarray
    c_val: np.ndarray
    c_lp: np.ndarray
    offset: float = 0.0
    layout: object = None
    presolve: object = None

    @property
    def m(self) -> int:
        return int(self.b.shape[0])

    def _dense(self, blk, i, j, val, lp_idx, lp_val):
        mats = [np.zeros((o, o)) for o in self.psd_orders]
        for bk, p, q, v in zip(blk, i, j, val):
            if p == q:
                mats[bk][p, p] += v
            else:
                mats[bk][p, q] += 0.5 * v
                mats[bk][q, p] += 0.5 * v
        lp = np.zeros(self.n_lp)
        np.add.at(lp, lp_idx, lp_val)
        return mats, lp

    def constraint_matrices(self, k: int) -> tuple[list[np.ndarray], np.ndarray]:
        """Dense symmetric coefficient blocks of equality ``k``."""
        s = self.a_row == k
        t = self.l_row == k
        return self._dense(self.a_blk[s], self.a_i[s], self.a_j[s], self.a_val[s], self.l_idx[t], self.l_val[t])

    def objective_matrices(self) -> tuple[list[np.ndarray], np.ndarray]:
        mats, _ = self._dense(self.c_blk, self.c_i, self.c_j, self.c_val, [], [])
        return mats, np.array(self.c_lp, dtype=float)


class ProgramBuilder:
    def __init__(self):
        self.psd_orders: list[int] = []
        self.n_lp = 0
        self.b: list[float] = []
        self._a: list[tuple[int, int, int, int, float]] = []
        self._l: list[tuple[int, int, float]] = []
        self._c: list[tuple[int, int, int, float]] = []
        self._c_lp: dict[int, float] = {}

    def psd(self, order: int) -> int:
        self.psd_orders.append(int(order))
        return len(self.psd_orders) - 1

    def lp(self) -> int:
        self.n_lp += 1
        return self.n_lp - 1

    def row(self, psd_terms=(), lp_terms=(), rhs: float = 0.0) -> int:
        k = len(self.b)
        for blk, i, j, v in psd_terms:
            if i > j:
                i, j = j, i
            self._a.append((k, blk, i, j, float(v)))
        for idx, v in lp_terms:
            self._l.append((k, idx, float(v)))
        self.b.append(float(rhs))
        return k

    def objective(self, blk: int, i: int, j: int, v: float):
        if i > j:
            i, j = j, i
        self._c.append((blk, i, j, float(v)))

    def objective_lp(self, idx: int, v: float):
        self._c_lp[idx] = self._c_lp.get(idx, 0.0) + float(v)

    def build(self, offset: float = 0.0, layout=None) -> ConicProgram:
        a = np.array(self._a, dtype=float).reshape(-1, 5)
        l = np.array(self._l, dtype=float).reshape(-1, 3)
        c = np.array(self._c, dtype=float).reshape(-1, 4)
        c_lp = np.zeros(self.n_lp)
        for idx, v in self._c_lp.items():
            c_lp[idx] += v
        ints = lambda col: col.astype(np.int64)
        return ConicProgram(
            psd_orders=tuple(self.psd_orders),
            n_lp=self.n_lp,
            b=np.array(self.b, dtype=float),
            a_row=ints(a[:, 0]), a_blk=ints(a[:, 1]), a_i=ints(a[:, 2]), a_j=ints(a[:, 3]), a_val=a[:, 4].copy(),
            l_row=ints(l[:, 0]), l_idx=ints(l[:, 1]), l_val=l[:, 2].copy(),
            c_blk=ints(c[:, 0]), c_i=ints(c[:, 1]), c_j=ints(c[:, 2]), c_val=c[:, 3].copy(),
            c_lp=c_lp,
            offset=float(offset),
            layout=layout,
        )


@dataclass
class CoordinateSlots:
    """Where one free coordinate's auxiliary variables live in the program."""

    r: Optional[int] = None
    s_lo: Optional[int] = None
    s_hi: Optional[int] = None
    cuts: list = field(default_factory=list)  # (HalfspaceCut, slack index or None)
    arrow: Optional[int] = None
    square: Optional[int] = None
    s_chord: Optional[int] = None


@dataclass(frozen=True)
class RelaxationLayout:
    kind: str
    n: int
    free: tuple[int, ...]
    fixed_values: np.ndarray
    big: int
    slots: tuple[CoordinateSlots, ...] = ()

    @property
    def r_lp(self) -> tuple[int, ...]:
        return tuple(s.r for s in self.slots)


@dataclass
class RelaxationSolution:
    x: np.ndarray
    X: np.ndarray
    r: np.ndarray
    value: float
    status: str
    raw: object = None
    solve_time: float = 0.0

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


def embed_hermitian(H: np.ndarray) -> np.ndarray:
    H = np.asarray(H, dtype=complex)
    re, im = H.real, H.imag
    return np.block([[re, -im], [im, re]])


def _fixed_value(arg: ArgumentSet, b: ModulusBounds) -> Optional[complex]:
    if b.hi > b.lo:
        return None
    if b.lo == 0.0:
        return 0j
    if isinstance(arg, Discrete) and arg.is_singleton:
        return b.lo * complex(math.cos(arg.angles[0]), math.sin(arg.angles[0]))
    if isinstance(arg, Interval) and arg.is_singleton:
        return b.lo * complex(math.cos(arg.lo), math.sin(arg.lo))
    return None


def _reduce(p: ProblemCQP, box: SearchBox, use_args: bool):
    """Split coordinates into free and fixed; return reduced data and constant."""
    n = p.n
    fixed_values = np.zeros(n, dtype=complex)
    free = []
    for i in range(n):
        v = _fixed_value(box.args[i], box.bounds[i]) if use_args else (
            0j if box.bounds[i].hi == 0.0 else None)
        if v is None:
            free.append(i)
        else:
            fixed_values[i] = v
    free = tuple(free)
    fixed = [i for i in range(n) if i not in free]
    Q, c = p.Q, p.c
    xf = fixed_values[fixed]
    Qff = Q[np.ix_(fixed, fixed)]
    offset = float(0.5 * np.vdot(xf, Qff @ xf).real + np.vdot(c[fixed], xf).real) if fixed else 0.0
    Qr = Q[np.ix_(free, free)]
    cr = c[list(free)] + (Q[np.ix_(free, fixed)] @ xf if fixed else 0.0)
    return free, fixed_values, Qr, cr, offset


def _lifted_block(bld: ProgramBuilder, Qr: np.ndarray, cr: np.ndarray) -> int:
    nf = Qr.shape[0]
    N = nf + 1
    big = bld.psd(2 * N)
    bld.row([(big, 0, 0, 1.0)], rhs=1.0)
    for a in range(N):
        for b in range(a, N):
            bld.row([(big, a, b, 1.0), (big, N + a, N + b, -1.0)])
    for a in range(N):
        for b in range(a + 1, N):
            bld.row([(big, a, N + b, 1.0), (big, b, N + a, 1.0)])
        bld.row([(big, a, N + a, 1.0)])
    C = np.zeros((N, N), dtype=complex)
    C[1:, 1:] = Qr
    C[1:, 0] = cr
    C[0, 1:] = cr.conj()
    T = embed_hermitian(C)
    for i in range(2 * N):
        if T[i, i] != 0.0:
            bld.objective(big, i, i, 0.25 * T[i, i])
        for j in range(i + 1, 2 * N):
            if T[i, j] != 0.0:
                bld.objective(big, i, j, 0.5 * T[i, j])
    return big


def build_csdr(p: ProblemCQP) -> ConicProgram:
    box = SearchBox.of(p)
    free, fixed_values, Qr, cr, offset = _reduce(p, box, use_args=False)
    bld = ProgramBuilder()
    big = _lifted_block(bld, Qr, cr)
    slots = []
    for k, i in enumerate(free):
        kk = k + 1
        lo, hi = box.bounds[i].lo, box.bounds[i].hi
        s = CoordinateSlots(s_lo=bld.lp(), s_hi=bld.lp())
        bld.row([(big, kk, kk, 1.0)], [(s.s_lo, -1.0)], rhs=lo * lo)
        bld.row(lp_terms=[(s.s_lo, 1.0), (s.s_hi, 1.0)], rhs=hi * hi - lo * lo)
        slots.append(s)
    layout = RelaxationLayout("csdr", p.n, free, fixed_values, big, tuple(slots))
    return bld.build(offset, layout)


def build_ecsdr(p: ProblemCQP, d: Optional[SearchBox] = None) -> ConicProgram:
    box = d if d is not None else SearchBox.of(p)
    if box.n != p.n:
        raise ValueError("search box dimension does not match the problem")
    free, fixed_values, Qr, cr, offset = _reduce(p, box, use_args=True)
    N = len(free) + 1
    bld = ProgramBuilder()
    big = _lifted_block(bld, Qr, cr)
    slots = []
    for k, i in enumerate(free):
        kk = k + 1
        lo, hi = box.bounds[i].lo, box.bounds[i].hi
        s = CoordinateSlots(r=bld.lp(), s_lo=bld.lp(), s_hi=bld.lp())
        r = s.r
        bld.row(lp_terms=[(r, 1.0), (s.s_lo, -1.0)], rhs=lo)
        bld.row(lp_terms=[(s.s_lo, 1.0), (s.s_hi, 1.0)], rhs=hi - lo)

        e = env.build_argument_envelope(box.args[i])
        for cut in e.cuts:
            terms = [(r, -cut.gamma)]
            slack = None
            if cut.sense != env.EQ:
                slack = bld.lp()
                terms.append((slack, -1.0 if cut.sense == env.GE else 1.0))
            psd = [(big, 0, kk, cut.alpha), (big, 0, N + kk, cut.beta)]
            bld.row([t for t in psd if t[3] != 0.0], terms)
            s.cuts.append((cut, slack))
        if e.include_disk:
            s.arrow = arrow = bld.psd(3)
            for t in range(3):
                bld.row([(arrow, t, t, 1.0)], [(r, -1.0)])
            bld.row([(arrow, 0, 1, 1.0), (big, 0, kk, -1.0)])
            bld.row([(arrow, 0, 2, 1.0), (big, 0, N + kk, -1.0)])
            bld.row([(arrow, 1, 2, 1.0)])

        if hi > lo:
            s.square = sq = bld.psd(2)
            s.s_chord = bld.lp()
            bld.row([(sq, 0, 0, 1.0), (big, kk, kk, -1.0)])
            bld.row([(sq, 0, 1, 1.0)], [(r, -1.0)])
            bld.row([(sq, 1, 1, 1.0)], rhs=1.0)
            bld.row([(big, kk, kk, 1.0)], [(r, -(lo + hi)), (s.s_chord, 1.0)], rhs=-lo * hi)
        else:
            bld.row([(big, kk, kk, 1.0)], rhs=lo * lo)
        slots.append(s)
    layout = RelaxationLayout("ecsdr", p.n, free, fixed_values, big, tuple(slots))
    return bld.build(offset, layout)


def _hermitian_from_embedding(W: np.ndarray):
    N = W.shape[0] // 2
    A, B = W[:N, :N], W[N:, N:]
    L, U = W[N:, :N], W[:N, N:]
    sym = max(np.max(np.abs(A - B)), np.max(np.abs(L + L.T)), np.max(np.abs(U + U.T)))
    H = 0.5 * (A + B) + 0.5j * (L - L.T)
    return 0.5 * (H + H.conj().T), float(sym)


def _assemble(layout: RelaxationLayout, xf: np.ndarray, Xf: np.ndarray):
    n = layout.n
    free = list(layout.free)
    x = layout.fixed_values.copy()
    x[free] = xf
    X = np.outer(x, x.conj())
    X[np.ix_(free, free)] = Xf
    return x, X


def extract_solution(prog: ConicProgram, raw) -> RelaxationSolution:
    layout: RelaxationLayout = prog.layout
    n = layout.n
    nan = np.full(n, np.nan)
    failed = lambda status: RelaxationSolution(nan.astype(complex), np.full((n, n), np.nan, dtype=complex), nan, math.nan, status, raw)
    if raw.status != OPTIMAL:
        status = INFEASIBLE if raw.status == INFEASIBLE else NUMERICAL_FAILURE
        return failed(status)
    H, sym = _hermitian_from_embedding(np.asarray(raw.Z[layout.big]))
    if sym > EMBEDDING_TOL or abs(H[0, 0] - 1.0) > CORNER_TOL:
        return failed(NUMERICAL_FAILURE)
    x, X = _assemble(layout, H[1:, 0], H[1:, 1:])
    if layout.kind == "ecsdr":
        r = np.abs(layout.fixed_values).astype(float)
        r[list(layout.free)] = np.asarray(raw.z_lp)[list(layout.r_lp)]
        r = np.maximum(r, 0.0)
    else:
        r = np.sqrt(np.maximum(np.diag(X).real, 0.0))
    return RelaxationSolution(x, X, r, float(raw.primal_objective), OPTIMAL, raw)


def lift_point(prog: ConicProgram, box: SearchBox, x: Sequence[complex], X: np.ndarray, r: Sequence[float]):
    """Primal assignment of ``prog`` that corresponds to ``(x, X, r)``.

    Slacks are set so every equality holds; cone membership of the result
    is left for the caller to check.  The returned solution is marked optimal
    so it can be passed to :func:`extract_solution`.
    """
    from .sdpsolver import ConicSolution, evaluate_objective

    layout: RelaxationLayout = prog.layout
    x = np.asarray(x, dtype=complex)
    X = np.asarray(X, dtype=complex)
    r = np.asarray(r, dtype=float)
    free = list(layout.free)
    N = len(free) + 1
    H = np.empty((N, N), dtype=complex)
    H[0, 0] = 1.0
    H[1:, 0] = x[free]
    H[0, 1:] = x[free].conj()
    H[1:, 1:] = X[np.ix_(free, free)]
    Z = [np.zeros((o, o)) for o in prog.psd_orders]
    Z[layout.big] = embed_hermitian(H)
    z = np.zeros(prog.n_lp)
    for k, i in enumerate(free):
        s = layout.slots[k]
        lo, hi = box.bounds[i].lo, box.bounds[i].hi
        Xii = X[i, i].real
        if layout.kind == "csdr":
            z[s.s_lo] = Xii - lo * lo
            z[s.s_hi] = hi * hi - Xii
            continue
        z[s.r] = r[i]
        z[s.s_lo] = r[i] - lo
        z[s.s_hi] = hi - r[i]
        for cut, slack in s.cuts:
            if slack is not None:
                z[slack] = abs(cut.alpha * x[i].real + cut.beta * x[i].imag - cut.gamma * r[i])
        if s.arrow is not None:
            Z[s.arrow] = np.array([[r[i], x[i].real, x[i].imag], [x[i].real, r[i], 0.0], [x[i].imag, 0.0, r[i]]])
        if s.square is not None:
            Z[s.square] = np.array([[Xii, r[i]], [r[i], 1.0]])
            z[s.s_chord] = -lo * hi - Xii + (lo + hi) * r[i]
    value = evaluate_objective(prog, Z, z)
    return ConicSolution(
        status=OPTIMAL, Z=Z, z_lp=z, y=np.zeros(prog.m), S=[np.zeros_like(m) for m in Z],
        s_lp=np.zeros_like(z), primal_objective=value, dual_objective=math.nan,
        primal_residual=math.nan, dual_residual=math.nan, gap=math.nan, iterations=0,
    )


def check_tightness(p: ProblemCQP, s: RelaxationSolution, tol: float) -> bool:
    if not s.optimal:
        return False
    if math.isinf(tol):
        return True
    gap_mod = float(np.max(s.r - np.abs(s.x)))
    gap_sq = float(np.max(np.diag(s.X).real - s.r**2))
    return gap_mod <= tol and gap_sq <= tol


def solve_relaxation(p: ProblemCQP, box: Optional[SearchBox] = None, kind: str = "ecsdr", cfg=None) -> RelaxationSolution:
    from .sdpsolver import SolverConfig, solve

    if kind == "ecsdr":
        prog = build_ecsdr(p, box)
    elif kind == "csdr":
        if box is not None:
            p = ProblemCQP(p.Q, p.c, box.bounds, box.args)
        prog = build_csdr(p)
    else:
        raise ValueError(f"unknown relaxation {kind!r}")
    t0 = time.perf_counter()
    if not prog.layout.free:
        sol = _closed_form(prog)
    else:
        raw = solve(prog, cfg or SolverConfig())
        sol = extract_solution(prog, raw)
    sol.solve_time = time.perf_counter() - t0
    return sol


def _closed_form(prog: ConicProgram) -> RelaxationSolution:
    layout = prog.layout
    x = layout.fixed_values.copy()
    return RelaxationSolution(x, np.outer(x, x.conj()), np.abs(x).astype(float), float(prog.offset), OPTIMAL)
