"""Primal-dual interior-point solver for block-diagonal semidefinite programs.

Solves the standard-form pair::

    minimize   <C, Z> + offset           maximize   b'y + offset
    s.t.       <A_k, Z> = b_k            s.t.       sum_k y_k A_k + S = C
               Z in K                               S in K

where ``K`` is a product of PSD cones and one nonnegative orthant.  Iterates
live on the homogeneous self-dual embedding, so infeasible and unbounded
programs are detected from the certificate that the embedding converges to.
Each iteration uses Nesterov-Todd scaling and a Mehrotra predictor-corrector
step; the Schur complement system is formed densely and factored by Cholesky.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration-limit"
NUMERICAL_FAILURE = "numerical-failure"

RANK_TOL = 1e-10
FIX_TOL = 1e-12


@dataclass(frozen=True)
class SolverConfig:
    feas_tol: float = 1e-8
    gap_tol: float = 1e-8
    max_iter: int = 100
    step_fraction: float = 0.98
    infeas_tol: float = 1e-8
    trace: Optional[Callable[[dict], None]] = field(default=None, compare=False)

    def __post_init__(self):
        for name in ("feas_tol", "gap_tol", "infeas_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.step_fraction < 1:
            raise ValueError("step_fraction must lie in (0, 1)")
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")

    def loosened(self, factor: float = 10.0) -> "SolverConfig":
        return replace(self, feas_tol=self.feas_tol * factor, gap_tol=self.gap_tol * factor,
                       infeas_tol=self.infeas_tol * factor)


@dataclass
class ConicSolution:
    status: str
    Z: list
    z_lp: np.ndarray
    y: np.ndarray
    S: list
    s_lp: np.ndarray
    primal_objective: float
    dual_objective: float
    primal_residual: float
    dual_residual: float
    gap: float
    iterations: int
    certificate: Optional["Certificate"] = None


@dataclass
class Certificate:
    primal_residual: float
    dual_residual: float
    gap: float
    min_eig_primal: float
    min_eig_dual: float
    primal_objective: float
    dual_objective: float

    def ok(self, tol: float = 1e-7) -> bool:
        return (self.primal_residual <= tol and self.dual_residual <= tol and self.gap <= tol
                and self.min_eig_primal >= -tol and self.min_eig_dual >= -tol)


# ---------------------------------------------------------------------------
# independent evaluation helpers

def _apply(rows, blk, i, j, val, m, Z):
    out = np.zeros(m)
    for k in range(len(Z)):
        s = blk == k
        if np.any(s):
            np.add.at(out, rows[s], val[s] * Z[k][i[s], j[s]])
    return out


def evaluate_primal(prog, Z, z) -> np.ndarray:
    """Left-hand sides ``<A_k, Z>`` of every equality."""
    out = _apply(prog.a_row, prog.a_blk, prog.a_i, prog.a_j, prog.a_val, prog.m, Z)
    np.add.at(out, prog.l_row, prog.l_val * np.asarray(z)[prog.l_idx])
    return out


def evaluate_objective(prog, Z, z) -> float:
    val = 0.0
    for k in range(len(Z)):
        s = prog.c_blk == k
        val += float(np.sum(prog.c_val[s] * Z[k][prog.c_i[s], prog.c_j[s]]))
    return val + float(prog.c_lp @ np.asarray(z)) + prog.offset


def adjoint(prog, y):
    """``sum_k y_k A_k`` as dense blocks plus the orthant part."""
    mats = [np.zeros((o, o)) for o in prog.psd_orders]
    w = prog.a_val * y[prog.a_row]
    off = prog.a_i != prog.a_j
    for k in range(len(mats)):
        s = prog.a_blk == k
        np.add.at(mats[k], (prog.a_i[s], prog.a_j[s]), np.where(off[s], 0.5, 1.0) * w[s])
        so = s & off
        np.add.at(mats[k], (prog.a_j[so], prog.a_i[so]), 0.5 * w[so])
    lp = np.zeros(prog.n_lp)
    np.add.at(lp, prog.l_idx, prog.l_val * y[prog.l_row])
    return mats, lp


def certify(prog, sol: ConicSolution) -> Certificate:
    """Recompute residuals and cone floors of ``sol`` from the program data."""
    Cm, clp = prog.objective_matrices()
    AZ = evaluate_primal(prog, sol.Z, sol.z_lp)
    pres = float(np.linalg.norm(AZ - prog.b) / (1.0 + np.linalg.norm(prog.b)))
    AtY, atl = adjoint(prog, sol.y)
    num = sum(float(np.sum((C - A - S) ** 2)) for C, A, S in zip(Cm, AtY, sol.S))
    num += float(np.sum((clp - atl - sol.s_lp) ** 2))
    cnorm = math.sqrt(sum(float(np.sum(C**2)) for C in Cm) + float(clp @ clp))
    dres = math.sqrt(num) / (1.0 + cnorm)
    pobj = evaluate_objective(prog, sol.Z, sol.z_lp)
    dobj = float(prog.b @ sol.y) + prog.offset
    gap = abs(pobj - dobj) / (1.0 + abs(pobj))
    floor = lambda mats, vec: min([float(np.linalg.eigvalsh(0.5 * (M + M.T))[0]) for M in mats if M.size]
                                  + ([float(np.min(vec))] if len(vec) else []), default=0.0)
    return Certificate(pres, dres, gap, floor(sol.Z, sol.z_lp), floor(sol.S, sol.s_lp), pobj, dobj)


# ---------------------------------------------------------------------------
# presolve

@dataclass
class PresolveInfo:
    original: object
    kept_rows: np.ndarray        # original indices of rows left in the reduced program
    free_lp: np.ndarray          # original indices of orthant variables left free
    fixed_lp: dict               # original orthant index -> value
    events: list                 # (row, kind, [(var, coef), ...]) in elimination order
    empty_rows: list             # rows reduced to 0 = 0
    infeasible: bool = False
    reason: str = ""


def _row_lists(prog):
    psd_rows = np.zeros(prog.m, dtype=bool)
    psd_rows[prog.a_row] = True
    lp_terms = [dict() for _ in range(prog.m)]
    for r, j, v in zip(prog.l_row.tolist(), prog.l_idx.tolist(), prog.l_val.tolist()):
        lp_terms[r][j] = lp_terms[r].get(j, 0.0) + v
    return psd_rows, lp_terms


def preprocess(prog):
    """Eliminate forced orthant variables and dependent rows.

    Rows that involve only orthant variables are used to fix variables when
    they force them: a single-variable row fixes that variable, and a
    homogeneous row whose coefficients share one sign fixes all of its
    variables at zero.  Remaining rows are filtered for linear dependence by
    pivoted QR.  The returned program carries a :class:`PresolveInfo` record
    for mapping solutions back.
    """
    m = prog.m
    psd_rows, lp_terms = _row_lists(prog)
    fixed: dict[int, float] = {}
    events, empty = [], []
    done = np.zeros(m, dtype=bool)
    bscale = 1.0 + float(np.max(np.abs(prog.b), initial=0.0))

    def fail(reason):
        info = PresolveInfo(prog, np.arange(0), np.arange(0), fixed, events, empty, True, reason)
        return replace(prog, presolve=info)

    changed = True
    while changed:
        changed = False
        for k in range(m):
            if done[k] or psd_rows[k]:
                continue
            rhs = prog.b[k] - sum(a * fixed[j] for j, a in lp_terms[k].items() if j in fixed)
            live = {j: a for j, a in lp_terms[k].items() if j not in fixed and a != 0.0}
            tol = FIX_TOL * bscale
            if not live:
                if abs(rhs) > tol:
                    return fail(f"row {k} reduces to 0 = {rhs:g}")
                done[k] = True
                empty.append(k)
                continue
            if len(live) == 1:
                (j, a), = live.items()
                v = rhs / a
                if v < -tol:
                    return fail(f"row {k} forces a negative orthant variable")
                fixed[j] = max(v, 0.0)
                events.append((k, "single", [(j, a)]))
            else:
                signs = {a > 0 for a in live.values()}
                if len(signs) != 1:
                    continue
                positive = signs.pop()
                if abs(rhs) <= tol:
                    for j in live:
                        fixed[j] = 0.0
                    events.append((k, "zero", list(live.items())))
                elif (rhs > 0) != positive:
                    return fail(f"row {k} cannot be met by nonnegative variables")
                else:
                    continue
            done[k] = True
            changed = True

    free_lp = np.array([j for j in range(prog.n_lp) if j not in fixed], dtype=np.int64)
    cand = np.nonzero(~done)[0]
    # Substitute fixed values into the remaining rows.
    fixed_idx = np.array(sorted(fixed), dtype=np.int64)
    fixed_val = np.array([fixed[j] for j in fixed_idx])
    b = prog.b.astype(float).copy()
    if fixed_idx.size:
        vals = np.zeros(prog.n_lp)
        vals[fixed_idx] = fixed_val
        np.add.at(b, prog.l_row, -prog.l_val * vals[prog.l_idx])

    # Rank filter on the candidate rows.
    kept = cand
    if cand.size:
        A = _dense_rows(prog, cand, free_lp)
        if A.shape[1] == 0:
            rank = 0
            piv = np.arange(cand.size)
        else:
            _, R, piv = sla.qr(A.T, mode="economic", pivoting=True)
            d = np.abs(np.diag(R))
            rank = int(np.sum(d > RANK_TOL * d[0])) if d.size and d[0] > 0 else 0
        keep_pos = np.sort(piv[:rank])
        drop_pos = np.sort(piv[rank:])
        if drop_pos.size:
            Ak, Ad = A[keep_pos], A[drop_pos]
            coef = np.linalg.lstsq(Ak.T, Ad.T, rcond=None)[0] if rank else np.zeros((0, drop_pos.size))
            implied = coef.T @ b[cand[keep_pos]] if rank else np.zeros(drop_pos.size)
            if np.any(np.abs(implied - b[cand[drop_pos]]) > 1e-9 * bscale):
                return fail("inconsistent dependent equalities")
            empty.extend(cand[drop_pos].tolist())
        kept = cand[keep_pos]

    info = PresolveInfo(prog, kept, free_lp, fixed, events, empty)
    return _restrict(prog, kept, free_lp, b, fixed_idx, fixed_val, info)


def _dense_rows(prog, rows, free_lp):
    pos = -np.ones(prog.m, dtype=np.int64)
    pos[rows] = np.arange(rows.size)
    cols = []
    offsets = np.concatenate([[0], np.cumsum([o * (o + 1) // 2 for o in prog.psd_orders])]).astype(np.int64)
    lp_pos = -np.ones(prog.n_lp, dtype=np.int64)
    lp_pos[free_lp] = offsets[-1] + np.arange(free_lp.size)
    A = np.zeros((rows.size, offsets[-1] + free_lp.size))
    sel = pos[prog.a_row] >= 0
    orders = np.array(prog.psd_orders, dtype=np.int64)
    if np.any(sel):
        blk, i, j = prog.a_blk[sel], prog.a_i[sel], prog.a_j[sel]
        o = orders[blk]
        col = offsets[blk] + i * o - i * (i - 1) // 2 + (j - i)
        np.add.at(A, (pos[prog.a_row[sel]], col), prog.a_val[sel])
    sel = (pos[prog.l_row] >= 0) & (lp_pos[prog.l_idx] >= 0)
    np.add.at(A, (pos[prog.l_row[sel]], lp_pos[prog.l_idx[sel]]), prog.l_val[sel])
    return A


def _restrict(prog, rows, free_lp, b, fixed_idx, fixed_val, info):
    row_map = -np.ones(prog.m, dtype=np.int64)
    row_map[rows] = np.arange(rows.size)
    lp_map = -np.ones(prog.n_lp, dtype=np.int64)
    lp_map[free_lp] = np.arange(free_lp.size)
    sa = row_map[prog.a_row] >= 0
    sl = (row_map[prog.l_row] >= 0) & (lp_map[prog.l_idx] >= 0)
    offset = prog.offset + float(prog.c_lp[fixed_idx] @ fixed_val) if fixed_idx.size else prog.offset
    return replace(
        prog,
        n_lp=int(free_lp.size),
        b=b[rows],
        a_row=row_map[prog.a_row[sa]], a_blk=prog.a_blk[sa], a_i=prog.a_i[sa], a_j=prog.a_j[sa], a_val=prog.a_val[sa],
        l_row=row_map[prog.l_row[sl]], l_idx=lp_map[prog.l_idx[sl]], l_val=prog.l_val[sl],
        c_lp=prog.c_lp[free_lp],
        offset=offset,
        presolve=info,
    )


def _recover(info: PresolveInfo, red: ConicSolution) -> ConicSolution:
    """Map a reduced solution back onto the original program."""
    prog = info.original
    z = np.zeros(prog.n_lp)
    z[info.free_lp] = red.z_lp
    for j, v in info.fixed_lp.items():
        z[j] = v
    y = np.zeros(prog.m)
    y[info.kept_rows] = red.y
    s = np.zeros(prog.n_lp)
    s[info.free_lp] = red.s_lp
    # Duals of elimination rows, latest first, keeping fixed variables' slacks >= 0.
    col_rows = [[] for _ in range(prog.n_lp)]
    for r, j, v in zip(prog.l_row.tolist(), prog.l_idx.tolist(), prog.l_val.tolist()):
        col_rows[j].append((r, v))
    known = np.zeros(prog.m, dtype=bool)
    known[info.kept_rows] = True
    known[info.empty_rows] = True
    for k, _, _ in info.events:
        known[k] = False

    def base(j):
        return prog.c_lp[j] - sum(v * y[r] for r, v in col_rows[j] if known[r])

    for k, kind, terms in reversed(info.events):
        ratios = [base(j) / a for j, a in terms]
        if kind == "single":
            y[k] = ratios[0]
        else:
            y[k] = min(ratios) if terms[0][1] > 0 else max(ratios)
        known[k] = True
    for j in info.fixed_lp:
        s[j] = max(base(j), 0.0)
    sol = replace(red, z_lp=z, y=y, s_lp=s)
    sol.dual_objective = float(prog.b @ y) + prog.offset
    return sol


# ---------------------------------------------------------------------------
# core iteration

class _Data:
    """Flat representation: PSD blocks grouped by order into stacks."""

    def __init__(self, prog):
        orders = list(prog.psd_orders)
        self.m = prog.m
        self.n_lp = prog.n_lp
        uniq = sorted(set(orders), key=orders.index)
        self.g_order = uniq
        self.g_blocks = [[k for k, o in enumerate(orders) if o == u] for u in uniq]
        blk_g = np.zeros(len(orders), dtype=np.int64)
        blk_t = np.zeros(len(orders), dtype=np.int64)
        for g, blocks in enumerate(self.g_blocks):
            for t, k in enumerate(blocks):
                blk_g[k], blk_t[k] = g, t
        sizes = [len(bl) * o * o for bl, o in zip(self.g_blocks, uniq)]
        self.g_off = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        self.lp_off = int(self.g_off[-1])
        self.D = self.lp_off + self.n_lp
        g_off_arr = self.g_off[:-1]
        ordarr = np.array(uniq, dtype=np.int64)

        def flat(blk, i, j):
            g = blk_g[blk]
            o = ordarr[g]
            return g_off_arr[g] + blk_t[blk] * o * o + i * o + j

        def expand(rows, blk, i, j, val):
            off = i != j
            r = np.concatenate([rows, rows[off]])
            c = np.concatenate([flat(blk, i, j), flat(blk[off], j[off], i[off])])
            v = np.concatenate([np.where(off, 0.5 * val, val), 0.5 * val[off]])
            return r, c, v

        r, c, v = expand(prog.a_row, prog.a_blk, prog.a_i, prog.a_j, prog.a_val)
        r = np.concatenate([r, prog.l_row])
        c = np.concatenate([c, self.lp_off + prog.l_idx])
        v = np.concatenate([v, prog.l_val])
        A = sp.csr_matrix((v, (r, c)), shape=(self.m, self.D))
        A.sum_duplicates()
        A.eliminate_zeros()
        self.A = A
        self.At = A.T.tocsr()
        self.A_lp = A[:, self.lp_off:].tocsr()
        z = np.zeros(len(prog.c_blk), dtype=np.int64)
        _, cc, cv = expand(z, prog.c_blk, prog.c_i, prog.c_j, prog.c_val)
        C = np.zeros(self.D)
        np.add.at(C, cc, cv)
        C[self.lp_off:] += prog.c_lp
        self.C = C
        self.b = prog.b.astype(float).copy()

        # Schur complement gather plans, one per group.
        coo = A[:, :self.lp_off].tocoo()
        self.plans = []
        for g, o in enumerate(uniq):
            s = (coo.col >= self.g_off[g]) & (coo.col < self.g_off[g + 1])
            col = coo.col[s] - self.g_off[g]
            t, rem = np.divmod(col, o * o)
            p, q = np.divmod(rem, o)
            E = int(s.sum())
            Smat = sp.csr_matrix((coo.data[s], (coo.row[s], np.arange(E))), shape=(self.m, E))
            mask = None if len(self.g_blocks[g]) == 1 else (t[:, None] == t[None, :])
            self.plans.append((t, p, q, Smat, mask))
        self.nu = sum(orders) + self.n_lp

    def split(self, v):
        out = []
        for g, o in enumerate(self.g_order):
            k = len(self.g_blocks[g])
            out.append(v[self.g_off[g]:self.g_off[g + 1]].reshape(k, o, o))
        return out, v[self.lp_off:]

    def join(self, stacks, lp):
        return np.concatenate([s.ravel() for s in stacks] + [lp])


def _sym(M):
    return 0.5 * (M + np.swapaxes(M, -1, -2))


def _factor(M):
    try:
        return np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        w, V = np.linalg.eigh(_sym(M))
        return V * np.sqrt(np.maximum(w, 1e-300))[..., None, :]


def _max_step(Lam, dT):
    """Largest ``a`` with ``Lam + a dT`` PSD for diagonal ``Lam`` (stack)."""
    isq = 1.0 / np.sqrt(Lam)
    M = isq[..., :, None] * dT * isq[..., None, :]
    lo = np.linalg.eigvalsh(_sym(M))[..., 0].min() if M.size else 0.0
    return math.inf if lo >= 0 else -1.0 / lo


def _ratio(v, dv):
    neg = dv < 0
    return float(np.min(-v[neg] / dv[neg])) if np.any(neg) else math.inf


def _core(d: _Data, cfg: SolverConfig):
    bs = max(1.0, float(np.max(np.abs(d.b), initial=0.0)))
    cs = max(1.0, float(np.max(np.abs(d.C), initial=0.0)))
    b, C = d.b / bs, d.C / cs
    Cs, Cl = d.split(C)
    bnorm, cnorm = float(np.linalg.norm(b)), float(np.linalg.norm(C))

    X = [np.broadcast_to(np.eye(o), (len(bl), o, o)).copy() for o, bl in zip(d.g_order, d.g_blocks)]
    S = [x.copy() for x in X]
    xl = np.ones(d.n_lp)
    sl = np.ones(d.n_lp)
    y = np.zeros(d.m)
    tau = kappa = 1.0
    status = ITERATION_LIMIT
    stats = {}
    stall = 0
    it = 0

    for it in range(cfg.max_iter + 1):
        xf = d.join(X, xl)
        sf = d.join(S, sl)
        AX = d.A @ xf
        Aty = d.At @ y
        rp = b * tau - AX
        rd = C * tau - Aty - sf
        cx, by = float(C @ xf), float(b @ y)
        rg = kappa + cx - by
        mu = (float(xf @ sf) + tau * kappa) / (d.nu + 1)

        pres = float(np.linalg.norm(rp)) / tau / (1.0 + bnorm)
        dres = float(np.linalg.norm(rd)) / tau / (1.0 + cnorm)
        pobj, dobj = cx / tau, by / tau
        gap = abs(pobj - dobj) / (1.0 + abs(pobj))
        stats = dict(iteration=it, pres=pres, dres=dres, gap=gap, pobj=pobj * cs * bs, dobj=dobj * cs * bs,
                     tau=tau, kappa=kappa, mu=mu)
        if cfg.trace is not None:
            cfg.trace(dict(stats))
        if pres <= cfg.feas_tol and dres <= cfg.feas_tol and gap <= cfg.gap_tol:
            status = OPTIMAL
            break
        if by > 0 and np.linalg.norm(Aty + sf) / by <= cfg.infeas_tol:
            status = INFEASIBLE
            break
        if cx < 0 and np.linalg.norm(AX) / -cx <= cfg.infeas_tol:
            status = UNBOUNDED
            break
        if it == cfg.max_iter:
            break

        # NT scaling per stack.
        R, Wm, lam = [], [], []
        for Xg, Sg in zip(X, S):
            Lx, Ls = _factor(Xg), _factor(Sg)
            _, sv, Vt = np.linalg.svd(np.swapaxes(Ls, -1, -2) @ Lx)
            Rg = Lx @ np.swapaxes(Vt, -1, -2) / np.sqrt(sv)[..., None, :]
            R.append(Rg)
            Wm.append(Rg @ np.swapaxes(Rg, -1, -2))
            lam.append(sv)
        wl = np.sqrt(xl / sl)
        laml = np.sqrt(xl * sl)

        # Schur complement.
        M = np.zeros((d.m, d.m))
        for (t, p, q, Smat, mask), Wg in zip(d.plans, Wm):
            if Smat.shape[1] == 0:
                continue
            if mask is None:
                W0 = Wg[0]
                B = W0[np.ix_(p, p)] * W0[np.ix_(q, q)]
            else:
                B = Wg[t[:, None], p[:, None], p[None, :]] * Wg[t[:, None], q[:, None], q[None, :]]
                B *= mask
            M += (Smat @ (Smat @ B).T)
        if d.n_lp:
            M += (d.A_lp.multiply(wl * wl) @ d.A_lp.T).toarray()
        M = 0.5 * (M + M.T)
        try:
            fac = _cholesky(M)
        except np.linalg.LinAlgError:
            status = NUMERICAL_FAILURE
            break

        WCW = [Wg @ Cg @ Wg for Wg, Cg in zip(Wm, Cs)]
        wcw_f = d.join(WCW, wl * wl * Cl)
        a = d.A @ wcw_f
        q_ = sla.cho_solve(fac, a + b)
        c_wcw = float(C @ wcw_f)
        bma = b - a
        den = float(bma @ q_) + c_wcw + kappa / tau

        def direction(eta, rc_stack, rc_lp, r4):
            r1, r2, r3 = eta * rp, eta * rd, eta * rg
            r2s, r2l = d.split(r2)
            U = [rc / (lg[..., :, None] + lg[..., None, :]) * 2.0 for rc, lg in zip(rc_stack, lam)]
            RUR = [Rg @ Ug @ np.swapaxes(Rg, -1, -2) for Rg, Ug in zip(R, U)]
            T = [ru - Wg @ r2g @ Wg for ru, Wg, r2g in zip(RUR, Wm, r2s)]
            ul = rc_lp / laml
            Tl = wl * ul - wl * wl * r2l
            Tf = d.join(T, Tl)
            p_ = sla.cho_solve(fac, r1 - d.A @ Tf)
            dtau = (r3 + float(C @ Tf) + r4 / tau - float(bma @ p_)) / den
            dy = p_ + q_ * dtau
            dS_f = r2 - d.At @ dy + C * dtau
            dSs, dSl = d.split(dS_f)
            dXs = [ru - Wg @ _sym(ds) @ Wg for ru, Wg, ds in zip(RUR, Wm, dSs)]
            dXl = wl * ul - wl * wl * dSl
            dkappa = (r4 - kappa * dtau) / tau
            # Scaled directions for step lengths and the corrector.
            dSt = [np.swapaxes(Rg, -1, -2) @ _sym(ds) @ Rg for Rg, ds in zip(R, dSs)]
            dXt = [Ug - st for Ug, st in zip(U, dSt)]
            return dict(dX=[_sym(v) for v in dXs], dXl=dXl, dy=dy, dS=[_sym(v) for v in dSs], dSl=dSl,
                        dtau=dtau, dkappa=dkappa, dXt=dXt, dSt=dSt, dXlt=dXl / wl, dSlt=dSl * wl)

        def max_step(dd):
            amax = math.inf
            for lg, dx, ds in zip(lam, dd["dXt"], dd["dSt"]):
                amax = min(amax, _max_step(lg, dx), _max_step(lg, ds))
            amax = min(amax, _ratio(xl, dd["dXl"]), _ratio(sl, dd["dSl"]))
            amax = min(amax, _ratio(np.array([tau]), np.array([dd["dtau"]])),
                       _ratio(np.array([kappa]), np.array([dd["dkappa"]])))
            return amax

        lam2 = [np.einsum("...i,ij->...ij", lg ** 2, np.eye(lg.shape[-1])) for lg in lam]
        pred = direction(1.0, [-l2 for l2 in lam2], -laml ** 2, -tau * kappa)
        alpha_a = min(1.0, max_step(pred))
        sigma = (1.0 - alpha_a) ** 3
        rc = []
        for l2, dx, ds, lg in zip(lam2, pred["dXt"], pred["dSt"], lam):
            I = np.broadcast_to(np.eye(lg.shape[-1]), l2.shape)
            rc.append(sigma * mu * I - l2 - _sym(dx @ ds))
        rcl = sigma * mu - laml ** 2 - pred["dXlt"] * pred["dSlt"]
        r4 = sigma * mu - tau * kappa - pred["dtau"] * pred["dkappa"]
        corr = direction(1.0 - sigma, rc, rcl, r4)
        alpha = min(1.0, cfg.step_fraction * max_step(corr))
        if not math.isfinite(alpha) or alpha <= 0:
            status = NUMERICAL_FAILURE
            break

        X = [_sym(Xg + alpha * dx) for Xg, dx in zip(X, corr["dX"])]
        S = [_sym(Sg + alpha * ds) for Sg, ds in zip(S, corr["dS"])]
        xl = xl + alpha * corr["dXl"]
        sl = sl + alpha * corr["dSl"]
        y = y + alpha * corr["dy"]
        tau += alpha * corr["dtau"]
        kappa += alpha * corr["dkappa"]
        if tau <= 0 or kappa < 0:
            status = NUMERICAL_FAILURE
            break
        stall = stall + 1 if alpha < 1e-6 else 0
        if stall >= 3:
            status = NUMERICAL_FAILURE
            break

    if status in (OPTIMAL, ITERATION_LIMIT, NUMERICAL_FAILURE):
        scale_p, scale_d = bs / tau, cs / tau
    else:
        scale_p, scale_d = bs, cs
    Xs = [x * scale_p for x in X]
    Ss = [s * scale_d for s in S]
    return dict(status=status, X=Xs, xl=xl * scale_p, y=y * scale_d, S=Ss, sl=sl * scale_d,
                iterations=it, stats=stats)


def _cholesky(M):
    diag = np.diag(M)
    scale = float(np.max(np.abs(diag), initial=1.0))
    for reg in (0.0, 1e-14, 1e-12, 1e-10):
        try:
            return sla.cho_factor(M + reg * scale * np.eye(M.shape[0]), check_finite=False)
        except (np.linalg.LinAlgError, sla.LinAlgError):
            continue
    raise np.linalg.LinAlgError("Schur complement is singular")


def solve(prog, cfg: Optional[SolverConfig] = None) -> ConicSolution:
    cfg = cfg or SolverConfig()
    red = prog if prog.presolve is not None else preprocess(prog)
    info: PresolveInfo = red.presolve
    original = info.original
    if info.infeasible:
        return _empty(original, INFEASIBLE)
    if red.m == 0:
        raise ValueError("program has no equality constraints left to solve")

    d = _Data(red)
    out = _core(d, cfg)
    Zs, zl = out["X"], out["xl"]
    Ss, sl = out["S"], out["sl"]
    Z = [None] * len(red.psd_orders)
    S = [None] * len(red.psd_orders)
    for g, blocks in enumerate(d.g_blocks):
        for t, k in enumerate(blocks):
            Z[k] = Zs[g][t]
            S[k] = Ss[g][t]
    sol = ConicSolution(
        status=out["status"], Z=Z, z_lp=zl, y=out["y"], S=S, s_lp=sl,
        primal_objective=evaluate_objective(red, Z, zl),
        dual_objective=float(red.b @ out["y"]) + red.offset,
        primal_residual=out["stats"].get("pres", math.nan),
        dual_residual=out["stats"].get("dres", math.nan),
        gap=out["stats"].get("gap", math.nan),
        iterations=out["iterations"],
    )
    full = _recover(info, sol)
    full.primal_objective = evaluate_objective(original, full.Z, full.z_lp)
    if full.status == OPTIMAL:
        cert = certify(original, full)
        full.primal_residual, full.dual_residual, full.gap = cert.primal_residual, cert.dual_residual, cert.gap
        full.certificate = cert
    return full


def _empty(prog, status) -> ConicSolution:
    return ConicSolution(
        status=status, Z=[np.zeros((o, o)) for o in prog.psd_orders], z_lp=np.zeros(prog.n_lp),
        y=np.zeros(prog.m), S=[np.zeros((o, o)) for o in prog.psd_orders], s_lp=np.zeros(prog.n_lp),
        primal_objective=math.nan, dual_objective=math.nan, primal_residual=math.nan,
        dual_residual=math.nan, gap=math.nan, iterations=0,
    )
