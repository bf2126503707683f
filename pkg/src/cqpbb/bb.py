"""Best-first branch-and-bound over polar boxes with enhanced SDP bounds.

Every node holds a box of argument sets and modulus intervals, the solution
``(x, X, r)`` of its enhanced relaxation, and the feasible point obtained by
keeping each ``r_i`` and snapping ``arg(x_i)`` to the nearest admissible
angle.  The node with the smallest lower bound is expanded next; the search
stops once the incumbent is within ``epsilon`` of that bound.
"""
from __future__ import annotations

import heapq
import itertools
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .conic import OPTIMAL, INFEASIBLE, RelaxationSolution, SearchBox, solve_relaxation
from .model import (
    ANGLE_TOL, TWO_PI, ArgumentSet, ComplexityConstants, Discrete, Interval, ModulusBounds,
    ProblemCQP, circular_distance, compute_constants, evaluate_objective, normalize_angle,
)
from .sdpsolver import SolverConfig

EPSILON_OPTIMAL = "epsilon-optimal"
ITERATION_LIMIT = "iteration-limit"
TIME_LIMIT = "time-limit"

INSERT_TOL = 1e-12
LEMMA1_TOL = 1e-6
LEMMA2_TOL = 1e-6
ZERO_MODULUS = 1e-12


class DegenerateBranch(ValueError):
    pass


@dataclass
class BBNode:
    box: SearchBox
    relax: RelaxationSolution
    scaled: np.ndarray
    lower: float
    depth: int = 0


@dataclass(frozen=True)
class BranchScore:
    i1: int
    s1: float
    i2: int
    s2: float


@dataclass
class Limits:
    max_iter: Optional[int] = None
    time_limit: Optional[float] = None


@dataclass
class BBState:
    active: list = field(default_factory=list)   # heap of (lower, seq, node)
    upper: float = math.inf
    incumbent: Optional[np.ndarray] = None
    k: int = 0
    constants: Optional[ComplexityConstants] = None
    epsilon: float = 1e-4
    started: float = 0.0
    _seq: itertools.count = field(default_factory=itertools.count)

    def push(self, node: BBNode):
        heapq.heappush(self.active, (node.lower, next(self._seq), node))

    def pop(self) -> BBNode:
        return heapq.heappop(self.active)[2]

    def purge(self):
        keep = [e for e in self.active if e[0] < self.upper - INSERT_TOL]
        heapq.heapify(keep)
        self.active = keep


@dataclass
class RunReport:
    status: str
    objective: float
    x: np.ndarray
    lower: float
    lbd_e: float
    lbd_c: float
    cld_gap: float
    cld_gap_raw: float
    iterations: int
    nodes: int
    theoretical_k: int
    times: dict
    verify_log: list = field(default_factory=list)
    solver_audit: dict = field(default_factory=dict)
    history: list = field(default_factory=list)

    @property
    def gap(self) -> float:
        return self.objective - self.lower

    @property
    def violations(self) -> list:
        return [v for v in self.verify_log if not v["ok"]]


# ---------------------------------------------------------------------------
# scaling and branching

def _nearest(theta: float, a: ArgumentSet) -> float:
    if isinstance(a, Discrete):
        cand = a.angles
    else:
        if a.contains(theta, 0.0):
            return normalize_angle(theta)
        cand = sorted((a.lo, normalize_angle(a.hi)))
    best, best_d = cand[0], circular_distance(theta, cand[0])
    for c in cand[1:]:
        d = circular_distance(theta, c)
        if d < best_d - ANGLE_TOL:
            best, best_d = c, d
    return best


def scale(x: Sequence[complex], r: Sequence[float], args: Sequence[ArgumentSet]) -> np.ndarray:
    """Keep each modulus ``r_i`` and move ``arg(x_i)`` to the nearest angle in ``args[i]``."""
    out = np.empty(len(args), dtype=complex)
    for i, (xi, ri, a) in enumerate(zip(x, r, args)):
        xi = complex(xi)
        theta = a.midpoint if abs(xi) <= ZERO_MODULUS else math.atan2(xi.imag, xi.real)
        t = _nearest(theta, a)
        out[i] = ri * complex(math.cos(t), math.sin(t))
    return out


def branch_score(node: BBNode) -> BranchScore:
    x, X, r = node.relax.x, node.relax.X, node.relax.r
    d1 = np.abs(node.scaled - x)
    d2 = np.diag(X).real - r**2
    i1, i2 = int(np.argmax(d1)), int(np.argmax(d2))
    return BranchScore(i1, float(d1[i1]), i2, float(d2[i2]))


def splittable_arg(a: ArgumentSet) -> bool:
    return len(a) >= 2 if isinstance(a, Discrete) else a.width > ANGLE_TOL


def splittable_bound(b: ModulusBounds) -> bool:
    return b.hi > b.lo


def branch(box: SearchBox, score: BranchScore) -> tuple[SearchBox, SearchBox]:
    if score.s1 >= score.s2:
        i = score.i1
        if not splittable_arg(box.args[i]):
            raise DegenerateBranch(f"degenerate branch: argument set {i} cannot be split")
        lo, hi = box.args[i].split()
        return box.replace(i, arg=lo), box.replace(i, arg=hi)
    i = score.i2
    if not splittable_bound(box.bounds[i]):
        raise DegenerateBranch(f"degenerate branch: modulus bounds {i} cannot be split")
    lo, hi = box.bounds[i].split()
    return box.replace(i, bound=lo), box.replace(i, bound=hi)


def _fallback_branch(node: BBNode) -> Optional[tuple[SearchBox, SearchBox]]:
    """Split the coordinate with the largest per-coordinate score that can be split."""
    x, X, r = node.relax.x, node.relax.X, node.relax.r
    d1 = np.abs(node.scaled - x)
    d2 = np.diag(X).real - r**2
    options = [(d1[i], 0, i) for i in range(len(d1)) if splittable_arg(node.box.args[i])]
    options += [(d2[i], 1, i) for i in range(len(d2)) if splittable_bound(node.box.bounds[i])]
    if not options:
        return None
    _, kind, i = max(options, key=lambda t: (t[0], -t[1], -t[2]))
    if kind == 0:
        return branch(node.box, BranchScore(i, 1.0, 0, 0.0))
    return branch(node.box, BranchScore(0, 0.0, i, 1.0))


# ---------------------------------------------------------------------------
# iteration bound and verification

def theoretical_k(p: ProblemCQP, constants: ComplexityConstants) -> int:
    k1 = min(constants.kappa1, math.pi)
    total = 1
    for a, b in zip(p.args, p.bounds):
        if isinstance(a, Discrete):
            mu = len(a)
        else:
            mu = max(math.ceil(2.0 * a.width / k1), 1)
        w = b.hi - b.lo
        nb = 1 if math.isinf(constants.kappa2) else max(math.ceil(2.0 * w / constants.kappa2), 1)
        total *= mu * nb
    return total


def lemma2_condition(box: SearchBox, score: BranchScore, constants: ComplexityConstants) -> Optional[str]:
    if score.s1 >= score.s2:
        a = box.args[score.i1]
        if isinstance(a, Interval) and a.width <= min(constants.kappa1, math.pi):
            return "C1"
        if (isinstance(a, Discrete) and len(a) == 1) or (isinstance(a, Interval) and a.is_singleton):
            return "C2"
        return None
    b = box.bounds[score.i2]
    if b.hi - b.lo <= constants.kappa2:
        return "C3"
    return None


def verify_iteration(p: ProblemCQP, node: BBNode, state: BBState, constants: ComplexityConstants,
                     k_bound: Optional[int] = None) -> list[dict]:
    """Check the gap bound, the termination conditions and the iteration bound at one node."""
    score = branch_score(node)
    f_hat = evaluate_objective(p, node.scaled)
    lhs = f_hat - node.lower
    rhs = constants.m1 * score.s1 + constants.m2 * score.s2
    out = [dict(check="gap-bound", k=state.k, lhs=lhs, rhs=rhs, ok=bool(lhs <= rhs + LEMMA1_TOL))]
    cond = lemma2_condition(node.box, score, constants)
    if cond is not None:
        gap = state.upper - node.lower
        out.append(dict(check="termination-condition", k=state.k, condition=cond, gap=gap,
                        ok=bool(gap <= constants.epsilon + LEMMA2_TOL)))
    if k_bound is not None:
        out.append(dict(check="iteration-bound", k=state.k, bound=k_bound, ok=bool(state.k <= k_bound)))
    return out


# ---------------------------------------------------------------------------
# driver

def _closed_gap(obj: float, lbd_e: float, lbd_c: float) -> float:
    if obj > lbd_c + 1e-12:
        return (lbd_e - lbd_c) / (obj - lbd_c) * 100.0
    return 100.0


class _Engine:
    def __init__(self, p: ProblemCQP, cfg: SolverConfig):
        self.p = p
        self.cfg = cfg
        self.solves = 0
        self.failures = 0
        self.max_residual = 0.0
        self.min_eig = math.inf
        self.time = 0.0

    def relax(self, box: SearchBox, kind: str = "ecsdr", refine: bool = False) -> RelaxationSolution:
        t0 = time.perf_counter()
        sol = None
        if refine:
            # Reported root bounds get one extra digit so the two relaxations compare within 1e-7
            # even when |F| is large; node solves keep the configured tolerances.
            sol = solve_relaxation(self.p, box, kind, self.cfg.loosened(0.1))
            if sol.status not in (OPTIMAL, INFEASIBLE):
                sol = None
        if sol is None:
            sol = solve_relaxation(self.p, box, kind, self.cfg)
        if sol.status not in (OPTIMAL, INFEASIBLE):
            self.failures += 1
            sol = solve_relaxation(self.p, box, kind, self.cfg.loosened(10.0))
        self.time += time.perf_counter() - t0
        self.solves += 1
        raw = sol.raw
        cert = getattr(raw, "certificate", None)
        if sol.status == OPTIMAL and cert is not None:
            self.max_residual = max(self.max_residual, cert.primal_residual, cert.dual_residual, cert.gap)
            self.min_eig = min(self.min_eig, cert.min_eig_primal, cert.min_eig_dual)
        return sol

    def node(self, box: SearchBox, sol: RelaxationSolution, fallback_lower: float, depth: int) -> BBNode:
        if sol.status == OPTIMAL:
            r = np.clip(sol.r, [b.lo for b in box.bounds], [b.hi for b in box.bounds])
            scaled = scale(sol.x, r, box.args)
            return BBNode(box, sol, scaled, sol.value, depth)
        if sol.status == INFEASIBLE:
            return BBNode(box, sol, np.full(box.n, np.nan, dtype=complex), math.inf, depth)
        return BBNode(box, sol, np.full(box.n, np.nan, dtype=complex), fallback_lower, depth)


def phase_invariant(p: ProblemCQP) -> bool:
    """True when F and the feasible set are unchanged by ``x -> e^{i phi} x``."""
    return not np.any(p.c) and all(isinstance(a, Interval) and a.is_full_circle for a in p.args)


def run(p: ProblemCQP, epsilon: float = 1e-4, limits: Optional[Limits] = None, verify: bool = False,
        solver: Optional[SolverConfig] = None, progress: Optional[Callable[[dict], None]] = None,
        fix_phase: bool = False) -> RunReport:
    """Find an ``epsilon``-optimal solution of ``p``.

    The report carries the final sandwich ``lower <= optimum <= objective``;
    with ``verify`` set, every expanded node is audited against the gap bound,
    the termination conditions and the worst-case iteration count.

    ``fix_phase`` pins ``arg(x_0) = 0`` when the problem is invariant under a
    common rotation of all coordinates (``c = 0``, full-circle arguments).
    Every feasible point has a rotated copy with that phase, so the optimum is
    unchanged, while the search no longer has to cover a continuum of
    equivalent optima.  Off by default.
    """
    p.validated()
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    limits = limits or Limits()
    eng = _Engine(p, solver or SolverConfig())
    constants = compute_constants(p, epsilon)
    k_bound = theoretical_k(p, constants)
    state = BBState(constants=constants, epsilon=epsilon, started=time.perf_counter())
    root_box = SearchBox.of(p)
    if fix_phase and phase_invariant(p):
        root_box = root_box.replace(0, arg=Interval(0.0, 0.0))

    t0 = time.perf_counter()
    csdr = eng.relax(root_box, "csdr", refine=True)
    time_c = time.perf_counter() - t0
    t0 = time.perf_counter()
    root_sol = eng.relax(root_box, "ecsdr", refine=True)
    time_e = time.perf_counter() - t0
    lbd_c = csdr.value if csdr.status == OPTIMAL else -math.inf
    if root_sol.status != OPTIMAL:
        if csdr.status != OPTIMAL:
            raise RuntimeError("root relaxation failed")
        # Fall back to the plain relaxation; its bound is weaker but valid.
        root_sol = csdr
    root = eng.node(root_box, root_sol, lbd_c, 0)
    lbd_e = root.lower
    state.upper = evaluate_objective(p, root.scaled)
    state.incumbent = root.scaled
    state.push(root)
    nodes = 1
    log: list[dict] = []
    history: list[dict] = []
    status = EPSILON_OPTIMAL
    lower = root.lower

    while True:
        if not state.active:
            lower = state.upper
            break
        if limits.max_iter is not None and state.k >= limits.max_iter:
            status = ITERATION_LIMIT
            lower = state.active[0][0]
            break
        if limits.time_limit is not None and time.perf_counter() - state.started > limits.time_limit:
            status = TIME_LIMIT
            lower = state.active[0][0]
            break
        node = state.pop()
        state.k += 1
        lower = node.lower
        if verify and node.relax.status == OPTIMAL:
            log.extend(verify_iteration(p, node, state, constants, k_bound))
        history.append(dict(k=state.k, lower=node.lower, upper=state.upper, active=len(state.active)))
        if progress is not None:
            progress(dict(iteration=state.k, lower=node.lower, upper=state.upper, nodes=nodes))
        if state.upper - node.lower <= epsilon:
            break
        if node.relax.status != OPTIMAL:
            children = _fallback_branch_box(node)
        else:
            try:
                children = branch(node.box, branch_score(node))
            except DegenerateBranch:
                children = _fallback_branch(node)
        if children is None:
            continue
        improved = False
        for box in children:
            sol = eng.relax(box)
            child = eng.node(box, sol, node.lower, node.depth + 1)
            nodes += 1
            if sol.status == OPTIMAL:
                f = evaluate_objective(p, child.scaled)
                if f < state.upper:
                    state.upper, state.incumbent = f, child.scaled
                    improved = True
            if child.lower < state.upper - INSERT_TOL:
                state.push(child)
        if improved:
            state.purge()

    if verify:
        log.append(dict(check="iteration-bound", k=state.k, bound=k_bound, ok=bool(state.k <= k_bound)))
    obj = state.upper
    raw_gap = _closed_gap(obj, lbd_e, lbd_c)
    return RunReport(
        status=status,
        objective=obj,
        x=state.incumbent,
        lower=lower,
        lbd_e=lbd_e,
        lbd_c=lbd_c,
        cld_gap=min(max(raw_gap, 0.0), 100.0),
        cld_gap_raw=raw_gap,
        iterations=state.k,
        nodes=nodes,
        theoretical_k=k_bound,
        times=dict(total=time.perf_counter() - state.started, ecsdr=time_e, csdr=time_c, solver=eng.time),
        verify_log=log,
        solver_audit=dict(solves=eng.solves, retries=eng.failures, max_residual=eng.max_residual,
                          min_eigenvalue=eng.min_eig),
        history=history,
    )


def _fallback_branch_box(node: BBNode):
    """Children for a node whose relaxation could not be solved: split the widest set."""
    box = node.box
    options = [(a.width / math.pi, 0, i) for i, a in enumerate(box.args) if splittable_arg(a)]
    options += [(b.hi - b.lo, 1, i) for i, b in enumerate(box.bounds) if splittable_bound(b)]
    if not options:
        return None
    _, kind, i = max(options, key=lambda t: (t[0], -t[1], -t[2]))
    if kind == 0:
        lo, hi = box.args[i].split()
        return box.replace(i, arg=lo), box.replace(i, arg=hi)
    lo, hi = box.bounds[i].split()
    return box.replace(i, bound=lo), box.replace(i, bound=hi)
