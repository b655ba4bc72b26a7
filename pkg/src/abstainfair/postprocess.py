"""End-to-end post-processing: randomize scores, fit multipliers, predict.

The pipeline turns any base scorer into an abstaining classifier: add a small
uniform perturbation to the scores (to break ties), minimize the empirical
dual over the multipliers (lambda, gamma), and classify new points by the sign
of G and a group-dependent threshold on the (perturbed) score.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .core import (
    Decision,
    Multipliers,
    ProblemConfig,
    ScoredSample,
    dumps_17g,
    normalize_gauge,
    validate_config,
)
from .dual import dual_objective, g_value, g_values, weighted_from_scored
from .errors import (
    ConfigError,
    ConstraintWarning,
    GroupOutOfRange,
    SolverFailure,
)
from .lp import assemble, extract
from .rng import NOISE_TAG, PREDICT_TAG, block_uniforms
from .solver import SolveOptions, Status, check_certificate, solve

BOUNDARY_TOL = 1e-9


@dataclass(frozen=True)
class FittedModel:
    """Gauge-normalized multipliers plus the configuration they were fit under.

    ``group_sizes`` records the per-group fitting sample sizes (None when the
    model was loaded from disk), ``provenance`` the solver route, its
    objective value, and the noise seed.
    """

    multipliers: Multipliers
    cfg: ProblemConfig
    group_sizes: Optional[tuple] = None
    provenance: Optional[dict] = None

    def validate(self) -> "FittedModel":
        """Re-check the multiplier bounds; raises ConfigError on violation."""
        validate_config(self.cfg)
        m = self.multipliers
        if m.K != self.cfg.K:
            raise ConfigError(f"model has {m.K} multiplier pairs for K={self.cfg.K}")
        if math.fsum(np.abs(m.gamma_arr)) > 2.0 + 1e-6:
            raise ConfigError(f"gamma out of bounds: ||gamma||_1 = {math.fsum(np.abs(m.gamma_arr))}")
        # The sigma term covers effective scores reaching 1 + sigma, which can
        # push the optimal lambda quantile slightly past the noiseless cap.
        lam_cap = (
            np.maximum(
                self.cfg.p_arr / self.cfg.alpha_bar,
                np.abs(m.gamma_arr) / self.cfg.alpha_arr,
            )
            + 1e-6
            + self.cfg.sigma * self.cfg.p_arr / self.cfg.alpha_bar
        )
        if np.any(np.abs(m.lam_arr) > lam_cap):
            raise ConfigError(f"lambda out of bounds: {m.lam}")
        return self


def randomize(samples: Sequence[ScoredSample], sigma: float, seed: int) -> list[ScoredSample]:
    """Attach independent U[0, sigma] noise to each sample, keyed by index.

    Deterministic: sample i always receives the same draw for a given seed,
    independent of batch size or order of generation.
    """
    if sigma < 0:
        raise ConfigError(f"sigma < 0: {sigma}")
    u = block_uniforms(seed, NOISE_TAG, 0, len(samples))
    return [replace(s, noise=sigma * u[i]) for i, s in enumerate(samples)]


def _group_sizes(samples: Sequence[ScoredSample], K: int) -> np.ndarray:
    groups = np.fromiter((s.group for s in samples), dtype=np.int64, count=len(samples))
    return np.bincount(groups, minlength=K)


def fit(
    samples: Sequence[ScoredSample],
    cfg: ProblemConfig,
    method: str = "lp",
    options: SolveOptions = SolveOptions(),
) -> FittedModel:
    """Minimize the empirical dual and package the result as a FittedModel.

    ``method`` selects the production LP route ("lp") or the slow grid-search
    oracle ("grid", K <= 2 only).  If cfg.p is unset, group proportions are
    estimated from the sample.  The fitted multipliers are gauge-normalized;
    for groups with alpha_s = 1 the optimal lambda_s is a half-line and the
    returned point is moved strictly inside it so that every sample is
    accepted, matching the no-abstention limit.
    """
    if method not in ("lp", "grid"):
        raise ConfigError(f"method: expected 'lp' or 'grid', got {method!r}")
    if cfg.p is None:
        sizes = _group_sizes(samples, cfg.K)
        cfg = cfg.with_p(sizes / len(samples))
    validate_config(cfg)
    weighted = weighted_from_scored(samples)  # raises MissingGroup on empty groups

    if method == "grid":
        from .dual import grid_minimize

        m = grid_minimize(weighted, cfg)
        objective = dual_objective(weighted, m, cfg)
        solver_name = "grid"
    else:
        lp = assemble(weighted, cfg)
        sol = solve(lp, options)
        if sol.status is not Status.OPTIMAL:
            raise SolverFailure(sol.status.value, f"dual LP ended {sol.status.value}")
        check_certificate(lp, sol, options)
        m, _ = extract(lp, sol.y)
        objective = sol.objective
        solver_name = "simplex" if lp.num_rows <= options.simplex_row_limit else "interior"
        if options.engine != "auto":
            solver_name = options.engine

    m = normalize_gauge(m, cfg)

    sizes = _group_sizes(samples, cfg.K)
    # alpha_s = 1: any lambda_s below the smallest G-kink is optimal (the dual
    # is flat there) and only interior points accept the whole group; nudge the
    # reported vertex inside, preserving optimality and the objective value.
    lam = list(m.lam)
    for s in range(cfg.K):
        if cfg.alpha[s] == 1.0:
            lam[s] -= 1e-7 * (1.0 + abs(lam[s]))
    m = Multipliers(lam=tuple(lam), gamma=m.gamma)

    _post_fit_checks(samples, m, cfg, sizes)
    model = FittedModel(
        multipliers=m,
        cfg=cfg,
        group_sizes=tuple(int(v) for v in sizes),
        provenance={"solver": solver_name, "objective": float(objective), "seed": cfg.seed},
    )
    return model


def _post_fit_checks(samples, m, cfg, sizes) -> None:
    """Soft sanity checks: accept counts within 2/n_s, few boundary samples."""
    scores = np.fromiter((s.effective for s in samples), dtype=np.float64, count=len(samples))
    groups = np.fromiter((s.group for s in samples), dtype=np.int64, count=len(samples))
    g = g_values(scores, groups, m, cfg)
    for s in range(cfg.K):
        in_s = groups == s
        n_s = int(sizes[s])
        accepted = int(np.sum(g[in_s] > 0.0))
        if abs(accepted / n_s - cfg.alpha[s]) > 2.0 / n_s + 1e-12:
            warnings.warn(
                f"group {s}: accept rate {accepted / n_s:.6f} deviates from "
                f"alpha={cfg.alpha[s]} by more than 2/n_s (tied scores?)",
                ConstraintWarning,
                stacklevel=3,
            )
        boundary = int(np.sum(np.abs(g[in_s]) <= BOUNDARY_TOL))
        if boundary > 2:
            warnings.warn(
                f"group {s}: {boundary} samples on the decision boundary",
                ConstraintWarning,
                stacklevel=3,
            )


def threshold_shift(model: FittedModel, s: int) -> float:
    """The additive threshold shift c_s: predict One iff score > 1/2 + c_s."""
    cfg, m = model.cfg, model.multipliers
    if not 0 <= s < cfg.K:
        raise GroupOutOfRange(s, cfg.K)
    return 0.5 * (
        cfg.alpha_bar * m.gamma[s] / (cfg.alpha[s] * cfg.p[s]) - math.fsum(m.gamma)
    )


def _decide(e: float, g: float, tau: float) -> Decision:
    if g <= 0.0:
        return Decision.REJECT
    return Decision.ONE if e > tau else Decision.ZERO


def predict(
    model: FittedModel,
    score: float,
    s: int,
    fresh_noise: bool = True,
    rng: Optional[Callable[[], float] | np.random.Generator] = None,
) -> Decision:
    """Classify one point: Reject if G <= 0, else One iff score > 1/2 + c_s.

    With ``fresh_noise`` the score is perturbed by an independent U[0, sigma]
    draw, mirroring the perturbation applied when fitting; ``rng`` supplies
    the uniform (a Generator or a zero-argument callable; defaults to a fresh
    stream keyed by the model's seed).
    """
    cfg = model.cfg
    if not 0 <= s < cfg.K:
        raise GroupOutOfRange(s, cfg.K)
    e = float(score)
    if not (math.isfinite(e) and 0.0 <= e <= 1.0):
        raise ConfigError(f"score must lie in [0, 1], got {score!r}")
    if fresh_noise and cfg.sigma > 0:
        if rng is None:
            u = float(np.random.default_rng().random())
        elif isinstance(rng, np.random.Generator):
            u = float(rng.random())
        else:
            u = float(rng())
        e = e + cfg.sigma * u
    g = g_value(e, s, model.multipliers, cfg)
    return _decide(e, g, 0.5 + threshold_shift(model, s))


def predict_batch(
    model: FittedModel,
    samples: Sequence[ScoredSample],
    fresh_noise: bool = True,
    seed: Optional[int] = None,
) -> list[Decision]:
    """Vectorized predict with deterministic per-index noise.

    Sample i receives the i-th draw of the prediction stream keyed by ``seed``
    (default: the model's seed), so results are independent of batch splits.
    With ``fresh_noise=False`` the samples' stored effective scores are used
    as-is.
    """
    if not samples:
        return []
    cfg = model.cfg
    groups = np.fromiter((s.group for s in samples), dtype=np.int64, count=len(samples))
    if groups.min() < 0 or groups.max() >= cfg.K:
        bad = groups.min() if groups.min() < 0 else groups.max()
        raise GroupOutOfRange(int(bad), cfg.K)
    if fresh_noise:
        base = np.fromiter((s.score for s in samples), dtype=np.float64, count=len(samples))
        u = block_uniforms(cfg.seed if seed is None else seed, PREDICT_TAG, 0, len(samples))
        e = base + cfg.sigma * u
    else:
        e = np.fromiter((s.effective for s in samples), dtype=np.float64, count=len(samples))
    g = g_values(e, groups, model.multipliers, cfg)
    tau = np.array([0.5 + threshold_shift(model, s) for s in range(cfg.K)])
    out = np.where(g <= 0.0, int(Decision.REJECT), np.where(e > tau[groups], 1, 0))
    return [Decision(int(v)) for v in out]


def reject_strip(model: FittedModel, s: int) -> tuple[float, float]:
    """The score interval [lo, hi] on which group s is rejected.

    G(e) <= 0 is equivalent to |e - tau_s| <= h_s where tau_s = 1/2 + c_s is
    also the One/Zero threshold; an empty strip is returned as the degenerate
    interval (tau_s, tau_s).
    """
    cfg, m = model.cfg, model.multipliers
    if not 0 <= s < cfg.K:
        raise GroupOutOfRange(s, cfg.K)
    a = cfg.p[s] / (2.0 * cfg.alpha_bar)
    gsum = math.fsum(m.gamma)
    t = a * (1.0 - gsum) + m.lam[s] + m.gamma[s] / (2.0 * cfg.alpha[s])
    h = max(t, 0.0) / (2.0 * a)
    tau = 0.5 + threshold_shift(model, s)
    return (tau - h, tau + h)


def decision_probabilities(
    model: FittedModel, score: float, s: int, fresh_noise: bool = True
) -> tuple[float, float, float]:
    """(P[Zero], P[One], P[Reject]) under the prediction-time U[0, sigma] draw.

    Closed form: the noise window [score, score + sigma] is intersected with
    the three decision regions (below the strip, the strip, above it).  With
    sigma = 0 or ``fresh_noise=False`` this is the deterministic decision.
    """
    cfg = model.cfg
    if not 0 <= s < cfg.K:
        raise GroupOutOfRange(s, cfg.K)
    sigma = cfg.sigma if fresh_noise else 0.0
    if sigma == 0.0:
        e = float(score)
        d = _decide(e, g_value(e, s, model.multipliers, cfg), 0.5 + threshold_shift(model, s))
        return (
            1.0 if d is Decision.ZERO else 0.0,
            1.0 if d is Decision.ONE else 0.0,
            1.0 if d is Decision.REJECT else 0.0,
        )
    lo, hi = reject_strip(model, s)
    w0, w1 = float(score), float(score) + sigma
    p_reject = max(0.0, min(w1, hi) - max(w0, lo)) / sigma
    p_one = max(0.0, w1 - max(w0, hi)) / sigma
    p_one = min(p_one, 1.0 - p_reject)  # guard rounding when the strip is empty
    return (max(0.0, 1.0 - p_reject - p_one), p_one, p_reject)


# --- model file ---------------------------------------------------------------


def model_to_json(model: FittedModel) -> str:
    prov = model.provenance or {}
    cfg = model.cfg
    payload = {
        "lambda": list(model.multipliers.lam),
        "gamma": list(model.multipliers.gamma),
        "p": list(cfg.p),
        "alpha": list(cfg.alpha),
        "sigma": cfg.sigma,
        "seed": cfg.seed,
        "objective": prov.get("objective"),
        "solver": prov.get("solver"),
    }
    return dumps_17g(payload) + "\n"


def model_from_json(text: str) -> FittedModel:
    try:
        raw = json.loads(text)
        lam = [float(v) for v in raw["lambda"]]
        gamma = [float(v) for v in raw["gamma"]]
        cfg = ProblemConfig(
            K=len(lam),
            alpha=tuple(float(v) for v in raw["alpha"]),
            p=tuple(float(v) for v in raw["p"]),
            sigma=float(raw["sigma"]),
            seed=int(raw["seed"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed model file: {exc}") from exc
    provenance = {
        "solver": raw.get("solver"),
        "objective": raw.get("objective"),
        "seed": cfg.seed,
    }
    model = FittedModel(
        multipliers=Multipliers(lam=tuple(lam), gamma=tuple(gamma)),
        cfg=cfg,
        group_sizes=None,
        provenance=provenance,
    )
    return model.validate()


def save_model(model: FittedModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(model_to_json(model))


def load_model(path) -> FittedModel:
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_json(fh.read())
