"""Interior-point solver for block-diagonal SDPs with free variables.

The standard form matches what assembly produces:

    minimize    c_f . u
    subject to  sum_k <A_ik, X_k> + (B u)_i = b_i,   i = 1..m
                X_k PSD,  u free.

The method is a primal-dual path follower with Nesterov-Todd scaling and a
Mehrotra predictor-corrector step.  The Schur complement is formed densely
(problems here stay at a few thousand constraints) and free variables are
kept free through an augmented KKT system, which avoids the conditioning
loss of nonnegative splitting on coefficient-matching equalities.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .relax import SdpProblem

STATUSES = ("optimal", "near_optimal", "max_iter", "infeasible_flag")

# scaled-space values below this count as zero when capping step lengths
_STEP_EIG_FLOOR = 1e-13
_DIVERGENCE_LIMIT = 1e10
_NEAR_OPTIMAL_FACTOR = 1e3


class SolverBreakdown(RuntimeError):
    """Unrecoverable numerical failure; carries the iteration trace."""

    def __init__(self, message: str, trace: list) -> None:
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class SolverTolerances:
    gap: float = 1e-7
    feasibility: float = 1e-7
    max_iterations: int = 200
    step_fraction: float = 0.99

    def __post_init__(self) -> None:
        if self.gap <= 0 or self.feasibility <= 0:
            raise ValueError("tolerances must be positive")
        if not 0 < self.step_fraction < 1:
            raise ValueError("step_fraction must lie in (0, 1)")
        if self.max_iterations < 1:
            raise ValueError("need at least one iteration")


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    mu: float
    primal_objective: float
    dual_objective: float
    primal_infeasibility: float
    dual_infeasibility: float
    relative_gap: float
    duality_slack: float
    step_primal: float
    step_dual: float
    sigma: float


@dataclass
class SdpSolution:
    status: str
    objective: float
    dual_objective: float
    block_values: list[np.ndarray]
    free_values: np.ndarray
    y: np.ndarray
    residuals: dict[str, float]
    iterations: int
    trace: list[IterationRecord] = field(repr=False, default_factory=list)


class BlockProblem:
    """Standard-form data with per-block sparse constraint matrices.

    The objective is <C, X> + c_free . u + objective_offset; C defaults to
    zero, which is what direct assembly produces.  Eliminating pinned free
    variables moves their weights into C and the offset.
    """

    def __init__(
        self,
        block_sizes,
        equality_entries,
        B,
        b,
        c_free,
        C=None,
        objective_offset: float = 0.0,
    ) -> None:
        self.block_sizes = tuple(int(n) for n in block_sizes)
        if any(n < 1 for n in self.block_sizes):
            raise ValueError("block sizes must be positive")
        self.m = len(b)
        self.b = np.asarray(b, dtype=float)
        self.B = np.asarray(B, dtype=float).reshape(self.m, -1)
        self.c_free = np.asarray(c_free, dtype=float)
        self.n_free = self.B.shape[1]
        if self.c_free.shape != (self.n_free,):
            raise ValueError("c_free length does not match B")
        if C is None:
            self.C = None
        else:
            if len(C) != len(self.block_sizes):
                raise ValueError("need one cost matrix per block")
            mats = []
            for n, Ck in zip(self.block_sizes, C):
                arr = np.asarray(Ck, dtype=float)
                if arr.shape != (n, n):
                    raise ValueError("cost block shape mismatch")
                mats.append(0.5 * (arr + arr.T))
            self.C = tuple(mats)
        self.objective_offset = float(objective_offset)
        self.cost_norm = float(np.linalg.norm(self.c_free))
        if self.C is not None:
            self.cost_norm += float(
                np.sqrt(sum(np.sum(Ck**2) for Ck in self.C))
            )
        if len(equality_entries) != self.m:
            raise ValueError("need one entry list per equality")
        self.equality_entries = tuple(
            tuple((int(k), int(r), int(c), float(v)) for k, r, c, v in row)
            for row in equality_entries
        )

        # per-block COO accumulation in full-symmetric form
        per_block: list[dict[tuple[int, int, int], float]] = [
            {} for _ in self.block_sizes
        ]
        for i, entries in enumerate(equality_entries):
            for k, r, c, coef in entries:
                if not 0 <= k < len(self.block_sizes):
                    raise ValueError("entry references an unknown block")
                n = self.block_sizes[k]
                if not (0 <= r <= c < n):
                    raise ValueError("entry outside the upper triangle")
                acc = per_block[k]
                acc[(i, r, c)] = acc.get((i, r, c), 0.0) + float(coef)

        self.P: list[sp.csr_matrix] = []
        self.PT: list[sp.csc_matrix] = []
        self.gather: list[tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]] = []
        for k, n in enumerate(self.block_sizes):
            items = sorted(per_block[k].items())
            rows_eq, pos_r, pos_c, vals = [], [], [], []
            for (i, r, c), coef in items:
                rows_eq.append(i)
                pos_r.append(r)
                pos_c.append(c)
                vals.append(coef)
                if r != c:
                    rows_eq.append(i)
                    pos_r.append(c)
                    pos_c.append(r)
                    vals.append(coef)
            rows_eq = np.asarray(rows_eq, dtype=np.int64)
            pos_r = np.asarray(pos_r, dtype=np.int64)
            pos_c = np.asarray(pos_c, dtype=np.int64)
            vals = np.asarray(vals, dtype=float)
            P = sp.csr_matrix(
                (vals, (rows_eq, pos_r * n + pos_c)),
                shape=(self.m, n * n),
            )
            self.P.append(P)
            self.PT.append(P.T.tocsc())
            # equality ids touching this block, with slices into flat arrays
            order = np.argsort(rows_eq, kind="stable")
            re_s, rr_s = rows_eq[order], pos_r[order]
            rc_s, rv_s = pos_c[order], vals[order]
            eq_ids, starts = np.unique(re_s, return_index=True)
            ptr = np.append(starts, len(re_s))
            self.gather.append((eq_ids, ptr, rr_s, rc_s, rv_s))

        self.constraint_norms = np.zeros(self.m)
        for P in self.P:
            sq = P.multiply(P).sum(axis=1)
            self.constraint_norms += np.asarray(sq).ravel()
        self.constraint_norms = np.sqrt(
            self.constraint_norms + (self.B**2).sum(axis=1)
        )

    @property
    def total_dimension(self) -> int:
        return sum(self.block_sizes)

    def cost_blocks(self) -> tuple[np.ndarray, ...]:
        if self.C is not None:
            return self.C
        return tuple(np.zeros((n, n)) for n in self.block_sizes)

    def apply_A(self, mats) -> np.ndarray:
        out = np.zeros(self.m)
        for P, mat in zip(self.P, mats):
            out += P @ mat.ravel()
        return out

    def apply_At(self, y) -> list[np.ndarray]:
        return [
            (PT @ y).reshape(n, n)
            for PT, n in zip(self.PT, self.block_sizes)
        ]

    def projections_as(self, dtype) -> list[sp.csr_matrix]:
        cached = getattr(self, "_projection_cache", None)
        if cached is None or cached[0] != dtype:
            cached = (dtype, [P.astype(dtype) for P in self.P])
            self._projection_cache = cached
        return cached[1]


def standardize(problem: SdpProblem) -> BlockProblem:
    """Convert assembled equality data into solver-ready standard form."""
    m = len(problem.equalities)
    f = problem.free_count
    B = np.zeros((m, f))
    b = np.zeros(m)
    entries = []
    for i, eq in enumerate(problem.equalities):
        b[i] = eq.rhs
        for col, coef in eq.free_entries:
            B[i, col] = coef
        entries.append([(k, r, c, coef) for k, r, c, coef in eq.block_entries])
    return BlockProblem(
        [blk.dimension for blk in problem.blocks],
        entries,
        B,
        b,
        np.asarray(problem.objective_free, dtype=float),
    )


def _equilibrated(bp: BlockProblem) -> tuple[BlockProblem, np.ndarray, np.ndarray]:
    """Rescale rows to unit norm and free columns to unit norm afterwards.

    Returns the scaled problem together with the row scales s and column
    scales t; a solution of the scaled problem maps back through u = t * u',
    y = y' / s while the PSD blocks are untouched.
    """
    s = np.maximum(bp.constraint_norms, 1e-12)
    B1 = bp.B / s[:, None]
    if bp.n_free:
        col_norms = np.sqrt((B1**2).sum(axis=0))
        t = 1.0 / np.maximum(col_norms, 1e-12)
    else:
        t = np.ones(0)
    entries = [
        [(k, r, c, v / s[i]) for k, r, c, v in row]
        for i, row in enumerate(bp.equality_entries)
    ]
    scaled = BlockProblem(
        bp.block_sizes,
        entries,
        B1 * t[None, :] if bp.n_free else B1,
        bp.b / s,
        bp.c_free * t,
        C=bp.C,
        objective_offset=bp.objective_offset,
    )
    return scaled, s, t


class FreeReduction:
    """Maps a solution of the reduced problem back to the original one.

    Pivot rows pin the eliminated variables, so their values follow from
    the block values; the pivot-row multipliers follow from dual
    feasibility of the eliminated columns.  Both are triangular solves.
    """

    def __init__(self, original, pivot_rows, elim_cols, kept_rows, rem_cols):
        self.original = original
        self.pivot_rows = np.asarray(pivot_rows, dtype=np.int64)
        self.elim_cols = np.asarray(elim_cols, dtype=np.int64)
        self.kept_rows = np.asarray(kept_rows, dtype=np.int64)
        self.rem_cols = np.asarray(rem_cols, dtype=np.int64)
        B = original.B
        self._B_pe = sp.csc_matrix(B[np.ix_(self.pivot_rows, self.elim_cols)])
        self._lu_pe = spla.splu(self._B_pe)
        self._B_ke = B[np.ix_(self.kept_rows, self.elim_cols)]
        self._B_pr = B[np.ix_(self.pivot_rows, self.rem_cols)]

    def recover(self, X, u_rem, y_red):
        bp = self.original
        u = np.zeros(bp.n_free)
        y = np.zeros(bp.m)
        u[self.rem_cols] = u_rem
        y[self.kept_rows] = y_red
        ax = bp.apply_A(X)
        rhs = bp.b[self.pivot_rows] - ax[self.pivot_rows] - self._B_pr @ u_rem
        u[self.elim_cols] = self._lu_pe.solve(rhs)
        c_e = bp.c_free[self.elim_cols]
        y[self.pivot_rows] = self._lu_pe.solve(c_e - self._B_ke.T @ y_red, trans="T")
        return u, y


def reduce_free_variables(
    bp: BlockProblem,
) -> tuple[BlockProblem, FreeReduction | None]:
    """Eliminate free variables that single equalities pin to the blocks.

    A row whose free part touches exactly one not-yet-eliminated variable
    acts as a pivot: the variable is substituted everywhere, the row
    leaves the constraint set, and its objective weight becomes an affine
    cost on the blocks.  Scanning repeats until no such row remains, so
    chains resolve (one elimination exposing the next).  Variables without
    a pivot row stay free.  Returns the reduced problem and the recovery
    map, or ``(bp, None)`` when nothing can be eliminated.
    """
    m, f = bp.m, bp.n_free
    if f == 0:
        return bp, None
    col_scale = np.maximum(np.abs(bp.B).max(axis=0), 1e-30)
    Bw = bp.B.copy()
    live_row = np.ones(m, dtype=bool)
    live_col = np.ones(f, dtype=bool)
    pivot_rows: list[int] = []
    elim_cols: list[int] = []
    while True:
        active = np.abs(Bw) > 1e-12 * col_scale[None, :]
        active[~live_row, :] = False
        active[:, ~live_col] = False
        candidates = np.nonzero(live_row & (active.sum(axis=1) == 1))[0]
        progressed = False
        for i in candidates:
            cols = np.nonzero(active[i])[0]
            if len(cols) != 1:
                continue
            j = int(cols[0])
            pivot = Bw[i, j]
            if abs(pivot) < 1e-8 * col_scale[j]:
                continue  # too small to divide by safely
            touching = np.nonzero(
                live_row & (np.abs(Bw[:, j]) > 1e-12 * col_scale[j])
            )[0]
            for r in touching:
                if r != i:
                    Bw[r] -= (Bw[r, j] / pivot) * Bw[i]
                    Bw[r, j] = 0.0
            live_row[i] = False
            live_col[j] = False
            active[:, j] = False
            active[i, :] = False
            pivot_rows.append(int(i))
            elim_cols.append(int(j))
            progressed = True
        if not progressed:
            break
    if not elim_cols:
        return bp, None

    kept_rows = np.nonzero(live_row)[0]
    rem_cols = np.nonzero(live_col)[0]
    red = FreeReduction(bp, pivot_rows, elim_cols, kept_rows, rem_cols)
    piv = red.pivot_rows

    # F = B_KE inv(B_PE); in elimination order B_PE is lower triangular, so
    # both F and the substituted rows keep the sparsity of short chains
    if len(kept_rows):
        Ft = spla.spsolve(
            sp.csc_matrix(red._B_pe.T), sp.csc_matrix(red._B_ke.T)
        )
        if not sp.issparse(Ft):
            Ft = sp.csc_matrix(np.atleast_2d(Ft))
        F = sp.csr_matrix(Ft.T)
    else:
        F = sp.csr_matrix((0, len(elim_cols)))
    g = red._lu_pe.solve(bp.c_free[red.elim_cols], trans="T")

    n_kept = len(kept_rows)
    entries_red: list[list[tuple[int, int, int, float]]] = [
        [] for _ in range(n_kept)
    ]
    cost = [np.array(Ck, dtype=float) for Ck in bp.cost_blocks()]
    for k, P in enumerate(bp.P):
        n = bp.block_sizes[k]
        Pr = (P[kept_rows] - F @ P[piv]).tocsr()
        Pr.sum_duplicates()
        Pr.eliminate_zeros()
        for i in range(n_kept):
            lo, hi = Pr.indptr[i], Pr.indptr[i + 1]
            for pos, v in zip(Pr.indices[lo:hi], Pr.data[lo:hi]):
                r, c = divmod(int(pos), n)
                if r <= c:
                    entries_red[i].append((k, r, c, float(v)))
        cost[k] -= (P[piv].T @ g).reshape(n, n)

    b_red = bp.b[kept_rows] - F @ bp.b[piv]
    if len(rem_cols):
        B_red = bp.B[np.ix_(kept_rows, rem_cols)] - F @ red._B_pr
        c_red = bp.c_free[rem_cols] - red._B_pr.T @ g
    else:
        B_red = np.zeros((n_kept, 0))
        c_red = np.zeros(0)
    offset = float(g @ bp.b[piv]) + bp.objective_offset

    # a substituted row can cancel to nothing; with a nonzero right-hand
    # side that means the equalities were inconsistent to begin with
    empty = np.array(
        [
            not entries_red[i] and not np.any(B_red[i])
            for i in range(n_kept)
        ],
        dtype=bool,
    )
    if np.any(empty):
        bad = np.abs(b_red[empty]) > 1e-9 * (1.0 + np.abs(bp.b).max())
        if np.any(bad):
            raise ValueError("free-variable elimination exposed an inconsistency")
        keep = ~empty
        entries_red = [row for row, k_ in zip(entries_red, keep) if k_]
        b_red = b_red[keep]
        B_red = B_red[keep]
        red.kept_rows = red.kept_rows[keep]
        # dropped rows carry multiplier zero, so recovery only balances
        # the surviving rows against the eliminated columns
        red._B_ke = bp.B[np.ix_(red.kept_rows, red.elim_cols)]

    reduced = BlockProblem(
        bp.block_sizes,
        entries_red,
        B_red,
        b_red,
        c_red,
        C=cost,
        objective_offset=offset,
    )
    return reduced, red


def _with_trace_bound(bp: BlockProblem, bound: float) -> BlockProblem:
    """Append the constraint sum_k tr(X_k) + s = bound with a slack s >= 0.

    The assembled relaxations have unbounded optimal faces (multiplier
    blocks can grow along zero-objective rays), which leaves the dual
    without a strictly feasible point and the central path undefined.  A
    generous aggregate trace cap restores strict dual feasibility without
    moving the optimum as long as it stays inactive, which the caller can
    check through the slack and the bound's multiplier.
    """
    if bound <= 0:
        raise ValueError("trace bound must be positive")
    sizes = list(bp.block_sizes) + [1]
    slack = len(bp.block_sizes)
    row = [(k, i, i, 1.0) for k, n in enumerate(bp.block_sizes) for i in range(n)]
    row.append((slack, 0, 0, 1.0))
    entries = [list(r) for r in bp.equality_entries] + [row]
    B = np.vstack([bp.B, np.zeros((1, bp.n_free))])
    b = np.append(bp.b, bound)
    C = None
    if bp.C is not None:
        C = list(bp.C) + [np.zeros((1, 1))]
    return BlockProblem(
        sizes, entries, B, b, bp.c_free, C=C,
        objective_offset=bp.objective_offset,
    )


def _chol_lower(mat: np.ndarray, label: str, trace: list) -> np.ndarray:
    jitter = 0.0
    base = max(np.trace(mat) / max(len(mat), 1), 1.0)
    for _ in range(4):
        try:
            if jitter:
                return sla.cholesky(
                    mat + jitter * np.eye(len(mat)), lower=True
                )
            return sla.cholesky(mat, lower=True)
        except sla.LinAlgError:
            jitter = base * 1e-14 if jitter == 0.0 else jitter * 100.0
    raise SolverBreakdown(f"Cholesky failed on {label} iterate", trace)


def _max_step(lam: np.ndarray, delta_hat: np.ndarray) -> float:
    scale = 1.0 / np.sqrt(lam)
    scaled = delta_hat * scale[:, None] * scale[None, :]
    nu = float(np.linalg.eigvalsh(scaled)[0])
    if nu >= -_STEP_EIG_FLOOR:
        return np.inf
    return -1.0 / nu


def _primal_objective(bp: BlockProblem, X, u) -> float:
    value = float(bp.c_free @ u) + bp.objective_offset
    if bp.C is not None:
        value += sum(float(np.sum(Ck * Xk)) for Ck, Xk in zip(bp.C, X))
    return value


def _residuals(bp: BlockProblem, X, u, y, S, dual_shift: float = 0.0) -> dict[str, float]:
    r_p = bp.b - bp.apply_A(X) - bp.B @ u
    At = bp.apply_At(y)
    C = bp.cost_blocks()
    dual_sq = 0.0
    for Ck, Sk, Ak in zip(C, S, At):
        dual_sq += float(np.sum((Ck - Sk - Ak) ** 2))
    r_f = bp.c_free - bp.B.T @ y
    dual_sq += float(np.sum(r_f**2))
    pobj = _primal_objective(bp, X, u)
    dobj = float(bp.b @ y) + bp.objective_offset + dual_shift
    gap = sum(float(np.sum(Xk * Sk)) for Xk, Sk in zip(X, S))
    return {
        "primal_infeasibility": float(np.linalg.norm(r_p))
        / (1.0 + float(np.linalg.norm(bp.b))),
        "dual_infeasibility": np.sqrt(dual_sq) / (1.0 + bp.cost_norm),
        "relative_gap": (pobj - dobj) / (1.0 + abs(pobj) + abs(dobj)),
        "complementarity": gap / max(bp.total_dimension, 1),
    }


def _schur(bp: BlockProblem, W, M: np.ndarray, chunk_budget: int = 8_000_000):
    M.fill(0.0)
    dtype = M.dtype
    projections = bp.P if dtype == np.float64 else bp.projections_as(dtype)
    for k, (Wk, P) in enumerate(zip(W, projections)):
        eq_ids, ptr, rows, cols, vals = bp.gather[k]
        if len(eq_ids) == 0:
            continue
        n = bp.block_sizes[k]
        Wk = np.asarray(Wk, dtype=dtype)
        vals = np.asarray(vals, dtype=dtype)
        chunk = max(1, chunk_budget // (n * n))
        for start in range(0, len(eq_ids), chunk):
            ids = eq_ids[start : start + chunk]
            U = np.empty((len(ids), n * n), dtype=dtype)
            for t, local in enumerate(range(start, start + len(ids))):
                sl = slice(ptr[local], ptr[local + 1])
                left = Wk[:, rows[sl]] * vals[sl]
                U[t] = (left @ Wk[cols[sl], :]).ravel()
            M[:, ids] += P @ U.T


def _lu_extended(A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Outer-product LU with partial pivoting in extended precision.

    LAPACK only covers float32/float64, so the endgame factorization is
    done by hand; at the sizes the reduced Schur systems reach this costs
    a few seconds and resolves pivots double precision cannot.
    """
    lu = np.array(A, dtype=np.longdouble)
    n = lu.shape[0]
    piv = np.arange(n)
    tiny = np.longdouble(np.finfo(np.longdouble).tiny)
    for k in range(n - 1):
        p = k + int(np.argmax(np.abs(lu[k:, k])))
        if p != k:
            lu[[k, p]] = lu[[p, k]]
            piv[k], piv[p] = piv[p], piv[k]
        if lu[k, k] == 0:
            lu[k, k] = tiny
        lu[k + 1 :, k] /= lu[k, k]
        lu[k + 1 :, k + 1 :] -= np.outer(lu[k + 1 :, k], lu[k, k + 1 :])
    if n and lu[n - 1, n - 1] == 0:
        lu[n - 1, n - 1] = tiny
    return lu, piv


def _lu_extended_solve(lu: np.ndarray, piv: np.ndarray, rhs) -> np.ndarray:
    x = np.asarray(rhs, dtype=np.longdouble)[piv].copy()
    n = len(x)
    for k in range(1, n):
        x[k] -= lu[k, :k] @ x[:k]
    for k in range(n - 1, -1, -1):
        x[k] = (x[k] - lu[k, k + 1 :] @ x[k + 1 :]) / lu[k, k]
    return x


def solve_block_problem(
    bp: BlockProblem,
    tol: SolverTolerances | None = None,
    verbose: bool = False,
    equilibrate: bool = True,
    initial_scale: float | None = None,
    presolve: bool = True,
    trace_bound: float | None = None,
) -> SdpSolution:
    tol = tol or SolverTolerances()
    original = bp
    reduction = None
    if presolve and bp.n_free:
        # coefficient-matching equalities pin most free variables; solving
        # without them removes the indefinite part of the KKT system and
        # roughly halves the Schur complement
        bp, reduction = reduce_free_variables(bp)
    bounded = trace_bound is not None
    if bounded:
        bp = _with_trace_bound(bp, float(trace_bound))
    if equilibrate:
        # assembled identities mix coefficients across several orders of
        # magnitude; unit row and free-column norms keep the Schur system
        # solvable all the way to the central-path endgame
        bp, row_scale, col_scale = _equilibrated(bp)
    else:
        row_scale = np.ones(bp.m)
        col_scale = np.ones(bp.n_free)
    m, f = bp.m, bp.n_free
    sizes = bp.block_sizes
    N = max(bp.total_dimension, 1)
    C = bp.cost_blocks()

    if initial_scale is not None:
        if initial_scale <= 0:
            raise ValueError("initial_scale must be positive")
        tau_p = tau_d = float(initial_scale)
    else:
        # identity-scaled cold start with magnitudes taken from the data;
        # the trace-bound row is excluded since its right-hand side is a
        # deliberately generous cap, not a magnitude to start from
        m_data = m - 1 if bounded else m
        denom = 1.0 + bp.constraint_norms[:m_data]
        tau_p = max(
            10.0,
            np.sqrt(N),
            float(np.max(N * (1.0 + np.abs(bp.b[:m_data])) / denom)) if m_data else 10.0,
        )
        tau_d = max(
            10.0,
            np.sqrt(N),
            (1.0 + bp.cost_norm + float(np.max(bp.constraint_norms[:m_data], initial=0.0))) / np.sqrt(N),
        )
        tau_p = min(tau_p, 1e6)
        tau_d = min(tau_d, 1e6)
    X = [tau_p * np.eye(n) for n in sizes]
    S = [tau_d * np.eye(n) for n in sizes]
    if bounded:
        # start the slack on its row so the cap begins satisfied
        X[-1][0, 0] = max(float(trace_bound) - tau_p * (N - 1), tau_p)
    y = np.zeros(m)
    u = np.zeros(f)

    trace: list[IterationRecord] = []
    M = np.zeros((m, m))
    kkt = np.zeros((m + f, m + f))
    M_ext = None
    use_extended = False
    kkt_strained = False
    best = None
    best_score = np.inf
    best_iteration = 0
    status = "max_iter"
    iterations = 0

    for it in range(1, tol.max_iterations + 1):
        iterations = it
        AX = bp.apply_A(X)
        r_p = bp.b - AX - bp.B @ u
        At = bp.apply_At(y)
        r_d = [Ck - Sk - Ak for Ck, Sk, Ak in zip(C, S, At)]
        r_f = bp.c_free - bp.B.T @ y
        mu = sum(float(np.sum(Xk * Sk)) for Xk, Sk in zip(X, S)) / N
        pobj = _primal_objective(bp, X, u)
        dobj = float(bp.b @ y) + bp.objective_offset
        pinf = float(np.linalg.norm(r_p)) / (1.0 + float(np.linalg.norm(bp.b)))
        dual_sq = sum(float(np.sum(rd**2)) for rd in r_d) + float(np.sum(r_f**2))
        dinf = np.sqrt(dual_sq) / (1.0 + bp.cost_norm)
        relgap = (pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
        slack = (
            abs(float(r_p @ y))
            + sum(abs(float(np.sum(Xk * rdk))) for Xk, rdk in zip(X, r_d))
            + abs(float(u @ r_f))
        )

        if verbose:
            print(
                f"it {it:3d} mu={mu:+.3e} pobj={pobj:+.6e} dobj={dobj:+.6e} "
                f"pinf={pinf:.2e} dinf={dinf:.2e} gap={relgap:+.2e}"
            )
        score = max(pinf, dinf, abs(relgap))
        if score < 0.99 * best_score:
            best_iteration = it
        if score < best_score:
            best_score = score
            best = ([Xk.copy() for Xk in X], u.copy(), y.copy(), [Sk.copy() for Sk in S])

        record = IterationRecord(
            iteration=it,
            mu=mu,
            primal_objective=pobj,
            dual_objective=dobj,
            primal_infeasibility=pinf,
            dual_infeasibility=dinf,
            relative_gap=relgap,
            duality_slack=slack,
            step_primal=0.0,
            step_dual=0.0,
            sigma=0.0,
        )

        if max(pinf, dinf, abs(relgap)) <= max(tol.gap, tol.feasibility) and (
            pinf <= tol.feasibility and dinf <= tol.feasibility and abs(relgap) <= tol.gap
        ):
            trace.append(record)
            status = "optimal"
            break
        if not use_extended and mu < 1e-2 and trace:
            # double precision exhausts itself once the Schur system's
            # conditioning outruns it: steps collapse or the factorization
            # stops reproducing its own right-hand sides; switch the
            # factorization to extended precision and keep walking the path
            last = trace[-1]
            stalled = max(last.step_primal, last.step_dual) < 0.02
            if stalled or kkt_strained:
                use_extended = True
                best_iteration = it
        if it - best_iteration >= 30:
            # no meaningful progress for 30 iterations: the central path has
            # collapsed numerically, keep the best iterate seen so far
            trace.append(record)
            break
        norms = [float(np.abs(Xk).max()) for Xk in X]
        if (
            max(
                float(np.abs(y).max(initial=0.0)),
                float(np.abs(u).max(initial=0.0)),
                max(norms),
            )
            > _DIVERGENCE_LIMIT
        ):
            trace.append(record)
            status = "infeasible_flag"
            break

        # Nesterov-Todd scaling per block
        R, W, lam = [], [], []
        for k, n in enumerate(sizes):
            Lx = _chol_lower(X[k], "primal", trace)
            Ls = _chol_lower(S[k], "dual", trace)
            try:
                Usvd, sig, Vt = np.linalg.svd(Ls.T @ Lx)
            except np.linalg.LinAlgError as exc:
                raise SolverBreakdown(f"SVD breakdown: {exc}", trace) from exc
            if sig.min() <= 0:
                raise SolverBreakdown("singular scaling point", trace)
            Rk = Lx @ Vt.T / np.sqrt(sig)
            R.append(Rk)
            W.append(Rk @ Rk.T)
            lam.append(sig)

        if use_extended:
            if M_ext is None:
                M_ext = np.zeros((m + f, m + f), dtype=np.longdouble)
            _schur(bp, W, M_ext[:m, :m])
            if f:
                M_ext[:m, m:] = bp.B
                M_ext[m:, :m] = bp.B.T
                M_ext[m:, m:] = 0.0
            lu_ext, piv_ext = _lu_extended(M_ext)

            def kkt_solve(rhs_top, rhs_bot):
                rhs = np.concatenate([rhs_top, rhs_bot]).astype(np.longdouble)
                sol = _lu_extended_solve(lu_ext, piv_ext, rhs)
                scale = 1.0 + float(np.linalg.norm(rhs))
                for _ in range(2):
                    resid = rhs - M_ext @ sol
                    if float(np.linalg.norm(resid)) <= 1e-17 * scale:
                        break
                    sol += _lu_extended_solve(lu_ext, piv_ext, resid)
                if verbose:
                    err = float(np.linalg.norm(rhs - M_ext @ sol)) / scale
                    print(
                        f"    kkt solve[ext]: |dy|={float(np.linalg.norm(sol[:m])):.3e} "
                        f"|du|={float(np.linalg.norm(sol[m:])):.3e} rel_err={err:.3e}"
                    )
                return (
                    np.asarray(sol[:m], dtype=float),
                    np.asarray(sol[m:], dtype=float),
                )

        else:
            _schur(bp, W, M)
            # M is positive definite (full-rank constraints, PD scaling), so
            # the augmented system needs no static regularization; a tiny
            # shift is added only if the factorization comes back unusable
            kkt[:m, :m] = M
            kkt[:m, m:] = bp.B
            kkt[m:, :m] = bp.B.T
            kkt[m:, m:] = 0.0
            lu = None
            shift = 0.0
            diag_scale = 1.0 + float(np.abs(np.diag(M)).mean()) if m else 1.0
            for _ in range(4):
                try:
                    lu = sla.lu_factor(kkt + shift * np.eye(m + f) if shift else kkt)
                except (sla.LinAlgError, ValueError) as exc:
                    raise SolverBreakdown(
                        f"KKT factorization failed: {exc}", trace
                    ) from exc
                probe = sla.lu_solve(lu, np.ones(m + f))
                if np.all(np.isfinite(probe)):
                    break
                shift = 1e-12 * diag_scale if shift == 0.0 else shift * 1e3
            else:
                raise SolverBreakdown("KKT system numerically singular", trace)

            def kkt_solve(rhs_top, rhs_bot):
                nonlocal kkt_strained
                rhs = np.concatenate([rhs_top, rhs_bot])
                sol = sla.lu_solve(lu, rhs)
                scale = 1.0 + float(np.linalg.norm(rhs))
                # refine against the exact KKT matrix so the regularization
                # and factorization error never leak into the step equations
                for _ in range(3):
                    resid = rhs - kkt @ sol
                    if float(np.linalg.norm(resid)) <= 1e-13 * scale:
                        break
                    sol += sla.lu_solve(lu, resid)
                err = float(np.linalg.norm(rhs - kkt @ sol)) / scale
                if err > 1e-9:
                    kkt_strained = True
                if verbose:
                    print(
                        f"    kkt solve: |dy|={np.linalg.norm(sol[:m]):.3e} "
                        f"|du|={np.linalg.norm(sol[m:]):.3e} rel_err={err:.3e}"
                    )
                return sol[:m], sol[m:]

        WrdW = [Wk @ rdk @ Wk for Wk, rdk in zip(W, r_d)]
        A_WrdW = bp.apply_A(WrdW)

        def direction(K, rhs_corr):
            """Solve for (dy, du, dX, dS, dXhat, dShat) given the scaled
            complementarity target K per block."""
            RTKRt = []
            for Rk, lamk, Kk in zip(R, lam, K):
                TK = 2.0 * Kk / (lamk[:, None] + lamk[None, :])
                RTKRt.append((Rk @ TK @ Rk.T, TK))
            h1 = r_p - bp.apply_A([p for p, _ in RTKRt]) + A_WrdW
            dy, du = kkt_solve(h1, rhs_corr)
            Atdy = bp.apply_At(dy)
            dS = [rdk - Ak for rdk, Ak in zip(r_d, Atdy)]
            dShat = [Rk.T @ dSk @ Rk for Rk, dSk in zip(R, dS)]
            dXhat = [TK - dsh for (_, TK), dsh in zip(RTKRt, dShat)]
            dX = [Rk @ dxh @ Rk.T for Rk, dxh in zip(R, dXhat)]
            # the sandwich products above lose O(eps * cond(W)) digits, which
            # caps how far primal feasibility can fall; push the measured
            # violation of the primal Newton equation back through the same
            # factorization (the (dX, dS) correction pair cancels inside the
            # scaled complementarity equation, so that equation stays intact)
            r_p_norm = 1.0 + float(np.linalg.norm(r_p))
            for _ in range(3):
                r_lin = r_p - bp.apply_A(dX) - bp.B @ du
                if float(np.linalg.norm(r_lin)) <= 1e-12 * r_p_norm:
                    break
                dy2, du2 = kkt_solve(r_lin, np.zeros(f))
                At2 = bp.apply_At(dy2)
                dy = dy + dy2
                du = du + du2
                for k, Ak in enumerate(At2):
                    half = R[k].T @ Ak @ R[k]
                    dXhat[k] = dXhat[k] + half
                    dShat[k] = dShat[k] - half
                    dX[k] = dX[k] + W[k] @ Ak @ W[k]
                    dS[k] = dS[k] - Ak
            return dy, du, dX, dS, dXhat, dShat

        # predictor: drive mu to zero
        K_aff = [-np.diag(lamk**2) for lamk in lam]
        dy_a, du_a, dX_a, dS_a, dXh_a, dSh_a = direction(K_aff, r_f)
        ap = min(
            1.0,
            tol.step_fraction
            * min(_max_step(lamk, dxh) for lamk, dxh in zip(lam, dXh_a)),
        )
        ad = min(
            1.0,
            tol.step_fraction
            * min(_max_step(lamk, dsh) for lamk, dsh in zip(lam, dSh_a)),
        )
        mu_aff = sum(
            float(np.sum((Xk + ap * dXk) * (Sk + ad * dSk)))
            for Xk, dXk, Sk, dSk in zip(X, dX_a, S, dS_a)
        ) / N
        mu_aff = max(mu_aff, 0.0)
        sigma = min(1.0, max(0.0, (mu_aff / mu) ** 3)) if mu > 0 else 0.0

        # near the end of the path the affine system can turn numerically
        # singular and return enormous directions; folding their product
        # into the corrector would poison it, so fall back to a plain
        # centering step and let the iterate recover
        cross_sq = sum(
            float(np.sum((dxh @ dsh) ** 2))
            for dxh, dsh in zip(dXh_a, dSh_a)
        )
        use_cross = min(ap, ad) >= 0.01 and np.sqrt(cross_sq) <= 1e2 * mu * N
        if not use_cross:
            sigma = max(sigma, 0.8)

        # corrector: recentre and fold in the second-order term
        K_corr = []
        for lamk, dxh, dsh in zip(lam, dXh_a, dSh_a):
            term = sigma * mu * np.eye(len(lamk)) - np.diag(lamk**2)
            if use_cross:
                cross = dxh @ dsh
                term = term - 0.5 * (cross + cross.T)
            K_corr.append(term)
        dy, du, dX, dS, dXh, dSh = direction(K_corr, r_f)
        ap = min(
            1.0,
            tol.step_fraction
            * min(_max_step(lamk, dxh) for lamk, dxh in zip(lam, dXh)),
        )
        ad = min(
            1.0,
            tol.step_fraction
            * min(_max_step(lamk, dsh) for lamk, dsh in zip(lam, dSh)),
        )

        X = [0.5 * ((Xk + ap * dXk) + (Xk + ap * dXk).T) for Xk, dXk in zip(X, dX)]
        S = [0.5 * ((Sk + ad * dSk) + (Sk + ad * dSk).T) for Sk, dSk in zip(S, dS)]
        y = y + ad * dy
        u = u + ap * du
        trace.append(
            IterationRecord(
                iteration=it,
                mu=mu,
                primal_objective=pobj,
                dual_objective=dobj,
                primal_infeasibility=pinf,
                dual_infeasibility=dinf,
                relative_gap=relgap,
                duality_slack=slack,
                step_primal=ap,
                step_dual=ad,
                sigma=sigma,
            )
        )

    if status == "max_iter" and best is not None:
        X, u, y, S = best
    # map back to the unscaled data and judge the final status against it
    u = col_scale * u
    y = y / row_scale
    bound_diag = {}
    dual_shift = 0.0
    if bounded:
        used = sum(float(np.trace(Xk)) for Xk in X[:-1])
        # keep the cap row's contribution to the dual objective: dropping it
        # would misstate the gap by |y_T| * bound even when the cap is inert
        dual_shift = float(trace_bound) * float(y[-1])
        bound_diag["trace_bound_fraction"] = used / float(trace_bound)
        bound_diag["trace_bound_multiplier"] = float(y[-1])
        X = X[:-1]
        S = S[:-1]
        y = y[:-1]
    if reduction is not None:
        u, y = reduction.recover(X, u, y)
        At_full = original.apply_At(y)
        S = [
            Ck - Ak for Ck, Ak in zip(original.cost_blocks(), At_full)
        ]
    residuals = _residuals(original, X, u, y, S, dual_shift=dual_shift)
    residuals.update(bound_diag)
    if status != "infeasible_flag":
        feas = max(
            residuals["primal_infeasibility"], residuals["dual_infeasibility"]
        )
        gap = abs(residuals["relative_gap"])
        if feas <= tol.feasibility and gap <= tol.gap:
            status = "optimal"
        elif status == "optimal" or max(
            feas / tol.feasibility, gap / tol.gap
        ) <= _NEAR_OPTIMAL_FACTOR:
            status = "near_optimal"
        else:
            status = "max_iter"
    return SdpSolution(
        status=status,
        objective=_primal_objective(original, X, u),
        dual_objective=float(original.b @ y) + original.objective_offset + dual_shift,
        block_values=[Xk.copy() for Xk in X],
        free_values=u.copy(),
        y=y.copy(),
        residuals=residuals,
        iterations=iterations,
        trace=trace,
    )


def solve(problem: SdpProblem, tol: SolverTolerances | None = None) -> SdpSolution:
    """Solve an assembled relaxation.

    Solves under an aggregate trace cap, enlarging it if the solution ever
    presses against it, so the reported optimum is the uncapped one.
    """
    bp = standardize(problem)
    bound = 1e6
    solution = None
    for _ in range(3):
        solution = solve_block_problem(bp, tol, trace_bound=bound)
        fraction = solution.residuals.get("trace_bound_fraction", 0.0)
        multiplier = abs(solution.residuals.get("trace_bound_multiplier", 0.0))
        # a filled cap is normal here (flat directions absorb any headroom);
        # only a multiplier above noise level says the cap moved the optimum
        scale = 1.0 + abs(solution.objective)
        if fraction <= 0.99 or multiplier * bound <= 1e-3 * scale:
            break
        bound *= 1e4
    return solution


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def export_sdpa(problem) -> str:
    """Serialize to SDPA sparse format (.dat-s).

    Free variables become one trailing diagonal block of size 2f (declared
    negative, the standard diagonal-block convention) holding the split
    u = u_plus - u_minus.  Costs, both the free weights and any block cost
    matrices, enter F_0 with a sign flip since SDPA maximizes <F_0, Y> on
    that side.  With this encoding the exporting problem's optimum theta
    corresponds to an SDPA-reported optimum of -theta.
    """
    bp = problem if isinstance(problem, BlockProblem) else standardize(problem)
    if bp.objective_offset != 0.0:
        raise ValueError("SDPA format cannot carry a constant objective offset")
    m, f = bp.m, bp.n_free
    sizes = list(bp.block_sizes)
    if f:
        sizes.append(-2 * f)
    lines = [str(m), str(len(sizes))]
    lines.append(" ".join(str(n) for n in sizes))
    lines.append(" ".join(_fmt(v) for v in bp.b))

    entries: list[tuple[int, int, int, int, float]] = []
    free_blk = len(bp.block_sizes) + 1
    for j, cost in enumerate(bp.c_free):
        if cost != 0.0:
            entries.append((0, free_blk, j + 1, j + 1, -cost))
            entries.append((0, free_blk, f + j + 1, f + j + 1, cost))
    if bp.C is not None:
        for k, Ck in enumerate(bp.C):
            for r in range(bp.block_sizes[k]):
                for c in range(r, bp.block_sizes[k]):
                    v = float(Ck[r, c])
                    if v != 0.0:
                        entries.append((0, k + 1, r + 1, c + 1, -v))
    for k, P in enumerate(bp.P):
        coo = P.tocoo()
        for i, pos, v in zip(coo.row, coo.col, coo.data):
            r, c = divmod(int(pos), bp.block_sizes[k])
            if r <= c and v != 0.0:
                entries.append((int(i) + 1, k + 1, r + 1, c + 1, float(v)))
    rows_B, cols_B = np.nonzero(bp.B)
    for i, j in zip(rows_B, cols_B):
        v = float(bp.B[i, j])
        entries.append((int(i) + 1, free_blk, int(j) + 1, int(j) + 1, v))
        entries.append((int(i) + 1, free_blk, f + int(j) + 1, f + int(j) + 1, -v))
    entries.sort(key=lambda e: e[:4])
    for matno, blk, i, j, v in entries:
        lines.append(f"{matno} {blk} {i} {j} {_fmt(v)}")
    return "\n".join(lines) + "\n"


def solution_report(problem: SdpProblem, solution: SdpSolution) -> str:
    """Human-readable solve summary with per-block spectra."""
    lines = [
        f"status: {solution.status}",
        f"objective: {solution.objective:.12g}",
        f"dual objective: {solution.dual_objective:.12g}",
        f"iterations: {solution.iterations}",
    ]
    for name, value in sorted(solution.residuals.items()):
        lines.append(f"residual {name}: {value:.3e}")
    for block, mat in zip(problem.blocks, solution.block_values):
        eigs = np.linalg.eigvalsh(mat)
        lines.append(
            f"block {block.label} dim {block.dimension}: "
            f"eig [{eigs[0]:.6g}, {eigs[-1]:.6g}]"
        )
    return "\n".join(lines)
