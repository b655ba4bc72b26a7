"""Self-contained LP solving.

Two engines behind one ``solve`` entry point:

* a bounded-variable two-phase revised simplex (dense basis inverse with
  product-form updates, Dantzig pricing, Bland's rule after a degeneracy
  streak) — exact vertex solutions, used for small instances and for
  equality-constrained problems such as the population oracle;
* a primal-dual interior-point method (Mehrotra predictor-corrector, normal
  equations factored with SuperLU) — used when the instance is too large for
  a dense basis inverse.

Free variables are handled natively by both: the simplex keeps them as
nonbasic-at-zero columns with infinite bounds, the interior-point method
simply gives them no barrier term (plus a tiny diagonal regularization,
which also absorbs the gauge null direction of the epigraph LPs).

Both engines are deterministic: no randomness enters anywhere, so identical
inputs produce bit-identical solutions.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import CertificateFailure
from .lp import SparseLP

_PIVOT_TOL = 1e-10
_REFACTOR_EVERY = 128


class Status(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITERATION_LIMIT = "iteration_limit"


@dataclass(frozen=True)
class SolveOptions:
    feas_tol: float = 1e-9
    opt_tol: float = 1e-9
    max_iter: Optional[int] = None  # default 50 * (rows + cols)
    engine: str = "auto"  # auto | simplex | interior
    simplex_row_limit: int = 600


@dataclass(frozen=True)
class LPSolution:
    y: np.ndarray
    objective: float
    status: Status
    iterations: int
    max_violation: float


# --------------------------------------------------------------------------
# revised simplex on  min c.x  s.t.  A x = b,  lo <= x <= up
# --------------------------------------------------------------------------


class _VarState(enum.IntEnum):
    BASIC = 0
    AT_LO = 1
    AT_UP = 2
    FREE = 3  # nonbasic free variable, parked at zero


class _SimplexCore:
    """Two-phase bounded-variable revised simplex with artificial columns."""

    def __init__(self, c, A: sp.csc_matrix, b, lo, up, slack_of_row, feas_tol, opt_tol, max_iter):
        self.m, n_struct = A.shape
        self.n_struct = n_struct
        self.feas_tol = feas_tol
        self.opt_tol = opt_tol
        self.max_iter = max_iter
        self.iterations = 0

        # nonbasic starting values: finite lower bound, else finite upper, else 0
        x0 = np.where(np.isfinite(lo), lo, np.where(np.isfinite(up), up, 0.0))
        resid = b - A @ x0

        # initial basis: the row's slack when it is feasible there, else an
        # artificial column signed to make the artificial value nonnegative
        basis = np.full(self.m, -1, dtype=np.int64)
        art_rows = []
        for i in range(self.m):
            j = slack_of_row[i]
            if j >= 0 and resid[i] >= 0.0:
                basis[i] = j
            else:
                art_rows.append(i)
        n_art = len(art_rows)
        art_sign = np.sign(resid[art_rows])
        art_sign[art_sign == 0.0] = 1.0
        A_art = sp.csc_matrix(
            (art_sign, (art_rows, np.arange(n_art))), shape=(self.m, n_art)
        )
        self.A = sp.hstack([A, A_art], format="csc")
        self.nv = n_struct + n_art
        self.art = np.zeros(self.nv, dtype=bool)
        self.art[n_struct:] = True
        self.lo = np.concatenate([lo, np.zeros(n_art)])
        self.up = np.concatenate([up, np.full(n_art, np.inf)])
        self.b = np.asarray(b, dtype=np.float64)
        self.c = np.concatenate([c, np.zeros(n_art)])
        for k, i in enumerate(art_rows):
            basis[i] = n_struct + k
        self.basis = basis

        self.state = np.full(self.nv, _VarState.AT_LO, dtype=np.int8)
        self.state[~np.isfinite(self.lo) & np.isfinite(self.up)] = _VarState.AT_UP
        self.state[~np.isfinite(self.lo) & ~np.isfinite(self.up)] = _VarState.FREE
        self.x = np.where(
            np.isfinite(self.lo), self.lo, np.where(np.isfinite(self.up), self.up, 0.0)
        )
        self.state[self.basis] = _VarState.BASIC
        self._refactor()

    # -- linear algebra helpers ------------------------------------------

    def _refactor(self):
        Bmat = self.A[:, self.basis].toarray()
        self.Binv = np.linalg.inv(Bmat)
        xt = self.x.copy()
        xt[self.basis] = 0.0
        self.x[self.basis] = self.Binv @ (self.b - self.A @ xt)
        self._pivots_since_refactor = 0

    def _column(self, j):
        col = self.A[:, [j]].toarray().ravel()
        return self.Binv @ col

    # -- the phase loop ---------------------------------------------------

    def run_phase(self, cost) -> Status:
        cB = cost[self.basis]
        bland = False
        degenerate_streak = 0
        while True:
            if self.iterations >= self.max_iter:
                return Status.ITERATION_LIMIT
            self.iterations += 1

            yrow = self.Binv.T @ cB
            d = cost - self.A.T @ yrow
            st = self.state
            want_up = ((st == _VarState.AT_LO) | (st == _VarState.FREE)) & (
                d < -self.opt_tol
            )
            want_dn = ((st == _VarState.AT_UP) | (st == _VarState.FREE)) & (
                d > self.opt_tol
            )
            eligible = (want_up | want_dn) & ~self._blocked
            if not eligible.any():
                return Status.OPTIMAL

            idx = np.flatnonzero(eligible)
            if bland:
                j = int(idx[0])
            else:
                j = int(idx[np.argmax(np.abs(d[idx]))])
            sigma = 1.0 if want_up[j] else -1.0

            w = self._column(j)
            den = sigma * w
            xB = self.x[self.basis]
            loB, upB = self.lo[self.basis], self.up[self.basis]

            with np.errstate(divide="ignore", invalid="ignore"):
                ratios = np.full(self.m, np.inf)
                dec = den > _PIVOT_TOL
                ratios[dec] = np.where(
                    np.isfinite(loB[dec]), (xB[dec] - loB[dec]) / den[dec], np.inf
                )
                inc = den < -_PIVOT_TOL
                ratios[inc] = np.where(
                    np.isfinite(upB[inc]), (xB[inc] - upB[inc]) / den[inc], np.inf
                )
            t_rows = ratios.min() if self.m else np.inf
            t_bound = self.up[j] - self.lo[j]  # inf unless both bounds finite
            t = min(t_rows, t_bound)
            if not np.isfinite(t):
                return Status.UNBOUNDED
            t = max(t, 0.0)

            improvement = abs(d[j]) * t
            if improvement <= 1e-12 * (1.0 + abs(float(cB @ xB))):
                degenerate_streak += 1
                if degenerate_streak >= 2 * self.m:
                    bland = True
            else:
                degenerate_streak = 0
                bland = False

            if t_bound < t_rows - 1e-15:
                # bound flip: no basis change
                self.x[self.basis] = xB - sigma * t * w
                self.x[j] = self.up[j] if sigma > 0 else self.lo[j]
                self.state[j] = (
                    _VarState.AT_UP if sigma > 0 else _VarState.AT_LO
                )
                continue

            # leaving row: smallest ratio; prefer kicking artificials out,
            # then the largest pivot magnitude, then the lowest variable index
            cand = np.flatnonzero(ratios <= t + 1e-12)
            art_flag = self.art[self.basis[cand]]
            if art_flag.any():
                cand = cand[art_flag]
            pivot_mag = np.abs(w[cand])
            best = pivot_mag >= pivot_mag.max() - 1e-12
            cand = cand[best]
            r = int(cand[np.argmin(self.basis[cand])])

            leaving = self.basis[r]
            self.x[self.basis] = xB - sigma * t * w
            self.x[j] = self.x[j] + sigma * t
            self.x[leaving] = self.lo[leaving] if den[r] > 0 else self.up[leaving]
            self.state[leaving] = (
                _VarState.AT_LO if den[r] > 0 else _VarState.AT_UP
            )
            self.state[j] = _VarState.BASIC
            self.basis[r] = j
            cB = cost[self.basis]

            # product-form update of the basis inverse
            pivot_row = self.Binv[r] / w[r]
            self.Binv -= np.outer(w, pivot_row)
            self.Binv[r] = pivot_row

            self._pivots_since_refactor += 1
            if self._pivots_since_refactor >= _REFACTOR_EVERY:
                self._refactor()

    def solve(self):
        # Phase 1: minimize the artificial mass
        self._blocked = np.zeros(self.nv, dtype=bool)
        cost1 = np.zeros(self.nv)
        cost1[self.art] = 1.0
        if self.art.any():
            status = self.run_phase(cost1)
            if status is not Status.OPTIMAL:
                return self.x[: self.n_struct], status
            art_mass = float(np.sum(self.x[self.art]))
            if art_mass > self.feas_tol * (1.0 + float(np.abs(self.b).max(initial=0.0))):
                return self.x[: self.n_struct], Status.INFEASIBLE
            self._pin_artificials()

        status = self.run_phase(self.c)
        self._refactor()  # snap basic values before reporting
        return self.x[: self.n_struct], status

    def _pin_artificials(self):
        """Freeze artificials at zero and try to pivot basic ones out."""
        self.up[self.art] = 0.0
        self.x[self.art & (self.state != _VarState.BASIC)] = 0.0
        self._blocked = self.art.copy()
        if not self.art[self.basis].any():
            return
        A_struct = self.A[:, : self.n_struct].toarray()
        for r in range(self.m):
            jb = self.basis[r]
            if not self.art[jb]:
                continue
            row = self.Binv[r] @ A_struct
            row[self.state[: self.n_struct] == _VarState.BASIC] = 0.0
            k = int(np.argmax(np.abs(row)))
            if abs(row[k]) <= 1e-7:
                continue  # redundant row; artificial stays basic at zero
            w = self._column(k)
            self.state[jb] = _VarState.AT_LO
            self.x[jb] = 0.0
            self.state[k] = _VarState.BASIC
            self.basis[r] = k
            pivot_row = self.Binv[r] / w[r]
            self.Binv -= np.outer(w, pivot_row)
            self.Binv[r] = pivot_row


def solve_standard_form(
    c,
    A: sp.spmatrix,
    b,
    lo,
    up,
    opts: SolveOptions = SolveOptions(),
    slack_of_row=None,
) -> LPSolution:
    """Simplex on an explicit standard-form LP (equalities plus bounds).

    ``slack_of_row`` optionally names a +1-coefficient slack column per row
    that can serve as the initial basic variable when feasible there.
    """
    c = np.asarray(c, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    lo = np.asarray(lo, dtype=np.float64)
    up = np.asarray(up, dtype=np.float64)
    A = sp.csc_matrix(A)
    m = A.shape[0]
    if slack_of_row is None:
        slack_of_row = np.full(m, -1, dtype=np.int64)
    max_iter = opts.max_iter or 50 * (m + A.shape[1])
    core = _SimplexCore(c, A, b, lo, up, slack_of_row, opts.feas_tol, opts.opt_tol, max_iter)
    x, status = core.solve()
    resid = np.asarray(A @ x - b).ravel()
    max_violation = float(
        max(
            np.abs(resid).max(initial=0.0),
            np.maximum(lo - x, 0.0).max(initial=0.0),
            np.maximum(x - up, 0.0).max(initial=0.0),
        )
    )
    return LPSolution(
        y=x,
        objective=float(math.fsum(c * x)),
        status=status,
        iterations=core.iterations,
        max_violation=max_violation,
    )


# --------------------------------------------------------------------------
# primal-dual interior point on  min c.y  s.t.  A y <= b, y_N >= 0
# --------------------------------------------------------------------------


def _ipm_inequality(lp: SparseLP, opts: SolveOptions):
    m, nv, nn = lp.num_rows, lp.num_vars, lp.num_nonneg
    A = sp.csr_matrix((lp.vals, (lp.rows, lp.cols)), shape=(m, nv))
    At = sp.csr_matrix(A.T)
    b = lp.b.astype(np.float64)
    c = lp.c.astype(np.float64)
    N = np.arange(nn)

    y = np.zeros(nv)
    y[N] = 1.0
    s = np.maximum(b - A @ y, 1.0)
    z = np.ones(m)
    g = np.zeros(nv)
    g[N] = 1.0

    sb = 1.0 + float(np.abs(b).max(initial=0.0))
    sc = 1.0 + float(np.abs(c).max(initial=0.0))
    denom = m + nn
    max_iter = min(300, opts.max_iter or 300)
    status = Status.ITERATION_LIMIT
    iters = 0

    for iters in range(1, max_iter + 1):
        rp = b - A @ y - s
        rdvec = c + At @ z - g
        zs = z * s
        gy = g[N] * y[N]
        gap = float(zs.sum() + gy.sum())
        obj = float(c @ y)
        if (
            np.abs(rp).max(initial=0.0) <= opts.feas_tol * sb
            and np.abs(rdvec).max(initial=0.0) <= opts.feas_tol * sc
            and gap <= opts.opt_tol * (1.0 + abs(obj))
        ):
            status = Status.OPTIMAL
            break

        mu = gap / denom
        zos = z / s
        dg_diag = np.zeros(nv)
        dg_diag[N] = g[N] / y[N]
        AtD = At @ sp.diags(zos)
        M0 = (AtD @ A) + sp.diags(dg_diag)
        scale = float(np.abs(M0.diagonal()).max(initial=1.0))
        lu = None
        rho = 1e-12 * scale
        for _ in range(4):
            try:
                lu = spla.splu(sp.csc_matrix(M0 + sp.diags(np.full(nv, rho))))
                break
            except RuntimeError:
                rho *= 1e4
        if lu is None:
            break

        def newton(rzs, rgy):
            rhs = -rdvec.copy()
            rhs[N] += rgy / y[N]
            rhs += At @ (zos * rp - rzs / s)
            dy = lu.solve(rhs)
            dz = zos * (A @ dy) + rzs / s - zos * rp
            ds = (rzs - s * dz) / z
            dgN = (rgy - g[N] * dy[N]) / y[N]
            return dy, ds, dz, dgN

        def max_step(v, dv):
            neg = dv < 0
            if not neg.any():
                return 1.0
            return float(min(1.0, np.min(-v[neg] / dv[neg])))

        # affine-scaling predictor
        dy_a, ds_a, dz_a, dg_a = newton(-zs, -gy)
        ap = min(max_step(s, ds_a), max_step(y[N], dy_a[N]))
        ad = min(max_step(z, dz_a), max_step(g[N], dg_a))
        mu_aff = (
            float(
                np.dot(z + ad * dz_a, s + ap * ds_a)
                + np.dot(g[N] + ad * dg_a, y[N] + ap * dy_a[N])
            )
            / denom
        )
        sig = (mu_aff / mu) ** 3 if mu > 0 else 0.0

        # corrector
        dy, ds, dz, dgN = newton(
            sig * mu - zs - dz_a * ds_a, sig * mu - gy - dg_a * dy_a[N]
        )
        ap = 0.99995 * min(max_step(s, ds), max_step(y[N], dy[N]))
        ad = 0.99995 * min(max_step(z, dz), max_step(g[N], dgN))
        y += ap * dy
        s += ap * ds
        z += ad * dz
        g[N] += ad * dgN

    viol = float(
        max(
            np.maximum(A @ y - b, 0.0).max(initial=0.0),
            np.maximum(-y[N], 0.0).max(initial=0.0),
        )
    )
    return LPSolution(
        y=y,
        objective=float(math.fsum(c * y)),
        status=status,
        iterations=iters,
        max_violation=viol,
    )


# --------------------------------------------------------------------------
# public entry points
# --------------------------------------------------------------------------


def solve(lp: SparseLP, opts: SolveOptions = SolveOptions()) -> LPSolution:
    """Solve an assembled inequality-form LP with the configured engine."""
    engine = opts.engine
    if engine == "auto":
        engine = "simplex" if lp.num_rows <= opts.simplex_row_limit else "interior"
    if engine == "interior":
        return _ipm_inequality(lp, opts)
    if engine != "simplex":
        raise ValueError(f"unknown engine {opts.engine!r}")

    # A y <= b  ->  A y + s = b with slack block I
    m, nv = lp.num_rows, lp.num_vars
    A = sp.hstack(
        [
            sp.csc_matrix((lp.vals, (lp.rows, lp.cols)), shape=(m, nv)),
            sp.eye(m, format="csc"),
        ],
        format="csc",
    )
    c = np.concatenate([lp.c, np.zeros(m)])
    lo = np.concatenate([np.zeros(lp.num_nonneg), np.full(nv - lp.num_nonneg, -np.inf), np.zeros(m)])
    up = np.full(nv + m, np.inf)
    slack_of_row = nv + np.arange(m)
    sol = solve_standard_form(c, A, lp.b, lo, up, opts, slack_of_row)
    y = sol.y[:nv]
    viol = float(
        max(
            np.maximum(_matvec(lp, y) - lp.b, 0.0).max(initial=0.0),
            np.maximum(-y[: lp.num_nonneg], 0.0).max(initial=0.0),
        )
    )
    return LPSolution(
        y=y,
        objective=float(math.fsum(lp.c * y)),
        status=sol.status,
        iterations=sol.iterations,
        max_violation=viol,
    )


def _matvec(lp: SparseLP, y: np.ndarray) -> np.ndarray:
    out = np.zeros(lp.num_rows)
    np.add.at(out, lp.rows, lp.vals * y[lp.cols])
    return out


def check_certificate(lp: SparseLP, sol: LPSolution, opts: SolveOptions = SolveOptions()) -> dict:
    """Recompute feasibility and objective with compensated summation.

    Raises CertificateFailure (with the offending row when applicable) if the
    recomputed violation exceeds 10x feas_tol or the recomputed objective
    drifts from the reported one by more than 10x opt_tol (relative).
    """
    if sol.status is not Status.OPTIMAL:
        raise CertificateFailure(f"solution status is {sol.status.value}, not optimal")
    y = np.asarray(sol.y, dtype=np.float64)

    terms_by_row: list[list[float]] = [[] for _ in range(lp.num_rows)]
    for r, col, v in zip(lp.rows, lp.cols, lp.vals):
        terms_by_row[r].append(v * y[col])
    worst_row, worst = -1, 0.0
    for r in range(lp.num_rows):
        viol = math.fsum(terms_by_row[r]) - lp.b[r]
        if viol > worst:
            worst_row, worst = r, viol
    bound_viol = float(np.maximum(-y[: lp.num_nonneg], 0.0).max(initial=0.0))
    max_violation = max(worst, bound_viol)
    if max_violation > 10.0 * opts.feas_tol:
        raise CertificateFailure(
            f"constraint violation {max_violation:g} exceeds {10 * opts.feas_tol:g}",
            row=worst_row if worst >= bound_viol else None,
        )

    objective = math.fsum(cv * yv for cv, yv in zip(lp.c, y))
    delta = abs(objective - sol.objective)
    if delta > 10.0 * opts.opt_tol * max(1.0, abs(objective)):
        raise CertificateFailure(
            f"objective recomputation drifts by {delta:g} (reported {sol.objective!r},"
            f" recomputed {objective!r})"
        )
    return {
        "max_violation": max_violation,
        "objective_delta": delta,
        "rows_checked": lp.num_rows,
    }
