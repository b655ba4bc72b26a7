"""Sparse LP assembly: the epigraph form of the empirical dual problem.

Variables are ordered y = (zeta_1..zeta_n, lambda_1..lambda_K, gamma_1..gamma_K);
the first n are nonnegative slacks, the 2K multiplier variables are free.
Each sample contributes two inequality rows (A y <= b), so the matrix is
2n x (n + 2K) with at most 4n + nK structural nonzeros — explicit zero
coefficients are omitted from storage.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import Multipliers, ProblemConfig, validate_config
from .dual import WeightedSample, weighted_arrays
from .errors import DimensionMismatch, NonUniformWeights


@dataclass(frozen=True)
class SparseLP:
    """min c.y  s.t.  A y <= b,  y_j >= 0 for j < num_nonneg, y_j free otherwise.

    A is stored in coordinate form (rows/cols/vals).  Row i and row n+i are
    the two epigraph constraints of sample i, with samples ordered by
    ascending group and, within a group, input order; ``sample_groups`` and
    ``sample_scores`` record that row-ordered view, and ``order`` maps row
    position back to the caller's input index.
    """

    n: int
    K: int
    c: np.ndarray
    b: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    sample_groups: Optional[np.ndarray] = None
    sample_scores: Optional[np.ndarray] = None
    order: Optional[np.ndarray] = None

    @property
    def num_vars(self) -> int:
        return self.n + 2 * self.K

    @property
    def num_rows(self) -> int:
        return 2 * self.n

    @property
    def num_nonneg(self) -> int:
        return self.n

    @property
    def nnz(self) -> int:
        return len(self.vals)


def assemble(
    samples: Sequence[WeightedSample],
    cfg: ProblemConfig,
    weighted_objective: bool = False,
) -> SparseLP:
    """Build the epigraph LP from weighted samples.

    With uniform weights the objective slack coefficients are exactly 1/n_s;
    ``weighted_objective`` admits non-uniform weights (discrete-population
    atoms), scaling the objective accordingly.
    """
    validate_config(cfg)
    scores, groups, weights = weighted_arrays(samples, cfg.K)

    # row-order: groups ascending, input order within each group
    order = np.argsort(groups, kind="stable")
    scores, groups, weights = scores[order], groups[order], weights[order]

    if not weighted_objective:
        for s in range(cfg.K):
            w = weights[groups == s]
            if w.max() - w.min() > 1e-15:
                raise NonUniformWeights(
                    f"group {s} weights are not uniform; pass weighted_objective=True"
                )

    n, K = len(scores), cfg.K
    alpha, p, abar = cfg.alpha_arr, cfg.p_arr, cfg.alpha_bar
    ratio = p / abar  # p_s / alpha_bar, the score scaling per group

    c = np.concatenate([weights, alpha, np.zeros(K)])
    b = np.concatenate([ratio[groups] * scores, ratio[groups] * (1.0 - scores)])

    rows, cols, vals = [], [], []

    def put(r, col, v):
        rows.append(r)
        cols.append(col)
        vals.append(v)

    # gamma coefficient in a type-2 row of group s, on gamma_{s'}:
    #   p_s/abar - 1{s'==s}/alpha_s   (zero entries omitted)
    gamma_coef = ratio[:, None] - np.diag(1.0 / alpha)

    for i in range(n):
        s = int(groups[i])
        put(i, i, -1.0)
        put(i, n + s, -1.0)
        put(n + i, i, -1.0)
        put(n + i, n + s, -1.0)
        for sp in range(K):
            coef = gamma_coef[s, sp]
            if coef != 0.0:
                put(n + i, n + K + sp, coef)

    lp = SparseLP(
        n=n,
        K=K,
        c=c,
        b=b,
        rows=np.array(rows, dtype=np.int64),
        cols=np.array(cols, dtype=np.int64),
        vals=np.array(vals, dtype=np.float64),
        sample_groups=groups,
        sample_scores=scores,
        order=order,
    )
    if lp.nnz > 4 * n + n * K:
        raise AssertionError(f"assembled nnz {lp.nnz} exceeds 4n + nK")  # pragma: no cover
    return lp


def extract(lp: SparseLP, y: np.ndarray) -> tuple[Multipliers, np.ndarray]:
    """Split a solution vector into (Multipliers, zeta slacks)."""
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (lp.num_vars,):
        raise DimensionMismatch(
            f"solution has shape {y.shape}, expected ({lp.num_vars},)"
        )
    n, K = lp.n, lp.K
    m = Multipliers(lam=tuple(y[n : n + K]), gamma=tuple(y[n + K : n + 2 * K]))
    return m, y[:n].copy()


def dump_lp(lp: SparseLP) -> str:
    """Text dump: header "n K", then c, then b, then COO triples."""
    fmt = lambda x: format(float(x), ".17g")  # noqa: E731
    lines = [f"{lp.n} {lp.K}"]
    lines.append(" ".join(fmt(v) for v in lp.c))
    lines.append(" ".join(fmt(v) for v in lp.b))
    for r, col, v in zip(lp.rows, lp.cols, lp.vals):
        lines.append(f"{r} {col} {fmt(v)}")
    return "\n".join(lines) + "\n"


def load_lp(text: str) -> SparseLP:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    n, K = (int(tok) for tok in lines[0].split())
    c = np.array([float(t) for t in lines[1].split()])
    b = np.array([float(t) for t in lines[2].split()])
    if c.shape != (n + 2 * K,) or b.shape != (2 * n,):
        raise DimensionMismatch("dump header does not match vector lengths")
    rows, cols, vals = [], [], []
    for ln in lines[3:]:
        r, col, v = ln.split()
        rows.append(int(r))
        cols.append(int(col))
        vals.append(float(v))
    return SparseLP(
        n=n,
        K=K,
        c=c,
        b=b,
        rows=np.array(rows, dtype=np.int64),
        cols=np.array(cols, dtype=np.int64),
        vals=np.array(vals, dtype=np.float64),
    )
