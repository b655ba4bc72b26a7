"""The decision function G, the empirical dual objective, and a grid-search
minimizer used as an independent cross-check of the LP pipeline (K <= 2).

Samples carry an explicit per-group weight so the same code evaluates both
the uniform empirical measure (weight 1/n_s) and exact discrete populations
(weight = atom mass).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import Multipliers, ProblemConfig, ScoredSample, validate_config
from .errors import ConfigError, GridTooCoarse, MissingGroup

# Convergence thresholds for grid_minimize refinement.
REFINE_TOL = 1e-10
KINK_TOL = 1e-7


@dataclass(frozen=True)
class WeightedSample:
    """A sample as the dual objective sees it: group, score + noise, mass."""

    group: int
    effective_score: float
    weight: float


def weighted_from_scored(samples: Sequence[ScoredSample]) -> list[WeightedSample]:
    """Uniform 1/n_s weights over each group's samples."""
    counts = {}
    for s in samples:
        counts[s.group] = counts.get(s.group, 0) + 1
    return [
        WeightedSample(s.group, s.effective, 1.0 / counts[s.group]) for s in samples
    ]


def weighted_arrays(samples: Sequence[WeightedSample], K: int):
    """(scores, groups, weights) arrays; validates group coverage and weights."""
    scores = np.array([s.effective_score for s in samples], dtype=np.float64)
    groups = np.array([s.group for s in samples], dtype=np.int64)
    weights = np.array([s.weight for s in samples], dtype=np.float64)
    check_weights(scores, groups, weights, K)
    return scores, groups, weights


def check_weights(scores, groups, weights, K: int) -> None:
    if len(groups) and (groups.min() < 0 or groups.max() >= K):
        raise ConfigError(f"group index outside [0, {K})")
    for s in range(K):
        mask = groups == s
        if not mask.any():
            raise MissingGroup(s)
        total = math.fsum(weights[mask])
        if abs(total - 1.0) > 1e-12:
            raise ConfigError(f"weights: group {s} weights sum to {total!r}, expected 1")
    if np.any(weights <= 0):
        raise ConfigError("weights: must be positive")


def g_value(score: float, s: int, m: Multipliers, cfg: ProblemConfig) -> float:
    """G at one effective score: reject when <= 0, classify when > 0."""
    a = cfg.p_arr[s] / (2.0 * cfg.alpha_bar)
    gsum = math.fsum(m.gamma)
    half_gamma = m.gamma[s] / (2.0 * cfg.alpha[s])
    inner = a * (1.0 - 2.0 * score - gsum) + half_gamma
    return abs(inner) - a * (1.0 - gsum) - m.lam[s] - half_gamma


def g_values(scores, groups, m: Multipliers, cfg: ProblemConfig) -> np.ndarray:
    """Vectorized ``g_value`` over effective scores with per-sample groups."""
    scores = np.asarray(scores, dtype=np.float64)
    groups = np.asarray(groups, dtype=np.int64)
    a = (cfg.p_arr / (2.0 * cfg.alpha_bar))[groups]
    gsum = math.fsum(m.gamma)
    half_gamma = (m.gamma_arr / (2.0 * cfg.alpha_arr))[groups]
    inner = a * (1.0 - 2.0 * scores - gsum) + half_gamma
    return np.abs(inner) - a * (1.0 - gsum) - m.lam_arr[groups] - half_gamma


def inner_values(scores, groups, m: Multipliers, cfg: ProblemConfig) -> np.ndarray:
    """The absolute-value argument inside G (its sign picks the 0/1 branch)."""
    scores = np.asarray(scores, dtype=np.float64)
    groups = np.asarray(groups, dtype=np.int64)
    a = (cfg.p_arr / (2.0 * cfg.alpha_bar))[groups]
    half_gamma = (m.gamma_arr / (2.0 * cfg.alpha_arr))[groups]
    return a * (1.0 - 2.0 * scores - math.fsum(m.gamma)) + half_gamma


def is_kink(score: float, s: int, m: Multipliers, cfg: ProblemConfig, tol: float = KINK_TOL) -> bool:
    """True when (score, s) sits within ``tol`` of a non-differentiable seam."""
    g = g_value(score, s, m, cfg)
    inner = inner_values([score], [s], m, cfg)[0]
    return abs(g) < tol or abs(inner) < tol


def dual_objective(samples: Sequence[WeightedSample], m: Multipliers, cfg: ProblemConfig) -> float:
    """<lambda, alpha> + sum_s sum_{i in s} w_i * max(0, G_i)."""
    validate_config(cfg)
    scores, groups, weights = weighted_arrays(samples, cfg.K)
    return _objective_arrays(scores, groups, weights, m, cfg)


def _objective_arrays(scores, groups, weights, m: Multipliers, cfg: ProblemConfig) -> float:
    g = g_values(scores, groups, m, cfg)
    relu = np.maximum(g, 0.0) * weights
    # fixed summation order (input order) for bit-reproducibility
    return float(np.dot(m.lam_arr, cfg.alpha_arr) + math.fsum(relu))


def dual_gradient(samples: Sequence[WeightedSample], m: Multipliers, cfg: ProblemConfig):
    """Gradient of the dual objective where it is differentiable.

    At kinks (some |G_i| or inner argument ~ 0) this returns one particular
    subgradient; callers doing finite-difference checks should exclude those
    points via ``is_kink``.
    """
    scores, groups, weights = weighted_arrays(samples, cfg.K)
    g = g_values(scores, groups, m, cfg)
    inner = inner_values(scores, groups, m, cfg)
    active = g > 0.0
    a = cfg.p_arr / (2.0 * cfg.alpha_bar)

    grad_lam = np.empty(cfg.K)
    grad_gam = np.zeros(cfg.K)
    sign_minus = active & (inner < 0.0)  # the branch where gamma enters
    for s in range(cfg.K):
        in_s = groups == s
        grad_lam[s] = cfg.alpha[s] - math.fsum(weights[in_s & active])
        # (sign(inner) - 1) * (-a_{s'} + 1{s'=s}/(2 alpha_s)) summed over active i
        contrib = weights[sign_minus] * (2.0 * a[groups[sign_minus]])
        grad_gam[s] = math.fsum(contrib) - math.fsum(
            weights[sign_minus & in_s] / cfg.alpha[s]
        )
    return grad_lam, grad_gam


# --- grid search ------------------------------------------------------------


def _lambda_box(cfg: ProblemConfig) -> tuple[np.ndarray, np.ndarray]:
    bound = np.maximum(cfg.p_arr / cfg.alpha_bar, 2.0 / cfg.alpha_arr) + 1.0
    return -bound, bound


def _golden(f, lo: float, hi: float, tol: float = 1e-13, max_iter: int = 200):
    """Golden-section minimum of a unimodal f on [lo, hi]."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a < tol * (1.0 + abs(a) + abs(b)):
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


def _lambda_line_minimum(v: np.ndarray, w: np.ndarray, alpha_s: float) -> float:
    """Exact minimizer over lambda_s of  lambda*alpha_s + sum w*(v - lambda)_+.

    The subdifferential is alpha_s - weight{v > lambda}, so any weighted
    (1 - alpha_s)-quantile of v is optimal; we return the order statistic
    where the cumulative weight first reaches alpha_s.
    """
    order = np.argsort(v)[::-1]  # descending
    cum = np.cumsum(w[order])
    k = int(np.searchsorted(cum, alpha_s - 1e-15))
    k = min(k, len(v) - 1)
    return float(v[order[k]])


def _min_over_lambda(scores, groups, weights, gamma, cfg: ProblemConfig):
    """(best lambda vector, objective) for a fixed gamma.

    The objective separates across groups in lambda, and each 1-D section
    has a closed-form quantile minimizer, so this is exact.
    """
    gsum = math.fsum(gamma)
    lam = np.empty(cfg.K)
    total = 0.0
    for s in range(cfg.K):
        mask = groups == s
        e, w = scores[mask], weights[mask]
        a = cfg.p_arr[s] / (2.0 * cfg.alpha_bar)
        half_gamma = gamma[s] / (2.0 * cfg.alpha[s])
        # G_i = v_i - lambda_s
        v = np.abs(a * (1.0 - 2.0 * e - gsum) + half_gamma) - a * (1.0 - gsum) - half_gamma
        lam[s] = _lambda_line_minimum(v, w, cfg.alpha[s])
        total += lam[s] * cfg.alpha[s] + float(
            np.dot(np.maximum(v - lam[s], 0.0), w)
        )
    return lam, total


def grid_minimize(
    samples: Sequence[WeightedSample],
    cfg: ProblemConfig,
    grid_points: int = 129,
) -> Multipliers:
    """Minimize the dual objective by grid search plus refinement (K <= 2).

    This is the test oracle, not the production path: cost grows
    exponentially in K, so it guards against K > 2.  gamma is searched on the
    zero-sum slice gamma = (g, -g), which meets every gauge orbit exactly
    once.  Refinement is coordinate descent in disguise, with the lambda
    coordinates minimized exactly (weighted-quantile line searches) and the
    remaining gamma coordinate refined by golden section; since
    phi(g) = min_lambda objective(lambda, g) is a 1-D convex function, the
    refinement cannot stall and converges to the global minimum.
    """
    validate_config(cfg)
    if cfg.K > 2:
        raise ConfigError(f"K: grid search is limited to K <= 2, got {cfg.K}")
    scores, groups, weights = weighted_arrays(samples, cfg.K)
    lam_lo, lam_hi = _lambda_box(cfg)

    if cfg.K == 1:
        # gamma cancels from G when K = 1 (p = 1 makes both gamma terms equal),
        # so the objective is a 1-D piecewise-linear convex function of lambda.
        lam, _ = _min_over_lambda(scores, groups, weights, np.zeros(1), cfg)
        if not lam_lo[0] + 1e-9 < lam[0] < lam_hi[0] - 1e-9:
            raise GridTooCoarse("lambda optimum pinned at the search-box edge")
        return Multipliers(lam=(lam[0],), gamma=(0.0,))

    # K == 2: scan g on [-2, 2], minimizing over lambda exactly at each point,
    # then golden-section refine g around the best grid cell.
    def phi(g):
        return _min_over_lambda(
            scores, groups, weights, np.array([g, -g]), cfg
        )[1]

    grid = np.linspace(-2.0, 2.0, grid_points)
    vals = np.array([phi(g) for g in grid])
    j = int(np.argmin(vals))
    if j in (0, grid.size - 1):
        raise GridTooCoarse("gamma optimum pinned at the search-box edge")
    g_best, _ = _golden(phi, grid[j - 1], grid[j + 1], tol=1e-14)
    lam, _ = _min_over_lambda(scores, groups, weights, np.array([g_best, -g_best]), cfg)
    if np.any(lam < lam_lo + 1e-9) or np.any(lam > lam_hi - 1e-9):
        raise GridTooCoarse("lambda optimum pinned at the search-box edge")
    return Multipliers(lam=tuple(lam), gamma=(g_best, -g_best))
