"""Domain types shared by every module: problem configuration, samples,
multipliers, decisions, and the finite-sample guarantee bounds."""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError
from .rng import check_seed

# |sum(p) - 1| tolerance and the numerical slack on the multiplier bounds.
SIMPLEX_SUM_TOL = 1e-12
MULTIPLIER_SLACK = 1e-6


class Decision(enum.IntEnum):
    """Classifier output: predict 0, predict 1, or abstain."""

    ZERO = 0
    ONE = 1
    REJECT = -1

    @property
    def label(self) -> str:
        return _DECISION_LABELS[int(self)]

    @classmethod
    def from_label(cls, text: str) -> "Decision":
        try:
            return _LABEL_DECISIONS[text.strip()]
        except KeyError:
            raise ValueError(f"not a decision label: {text!r}") from None


_DECISION_LABELS = {0: "0", 1: "1", -1: "r"}
_LABEL_DECISIONS = {"0": Decision.ZERO, "1": Decision.ONE, "r": Decision.REJECT}


@dataclass(frozen=True)
class ProblemConfig:
    """Problem-level constants: group count, accept-rate targets, group masses,
    randomization magnitude, confidence level, and the master seed.

    ``p`` may be ``None``, meaning "estimate group masses from the sample";
    operations that need masses require a resolved config.
    """

    K: int
    alpha: tuple
    p: Optional[tuple] = None
    sigma: float = 1e-3
    delta: float = 0.05
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "K", int(self.K))
        object.__setattr__(self, "alpha", tuple(float(a) for a in np.atleast_1d(self.alpha)))
        if self.p is not None:
            object.__setattr__(self, "p", tuple(float(q) for q in np.atleast_1d(self.p)))
        object.__setattr__(self, "sigma", float(self.sigma))
        object.__setattr__(self, "delta", float(self.delta))
        object.__setattr__(self, "seed", int(self.seed))
        validate_config(self)

    @cached_property
    def alpha_arr(self) -> np.ndarray:
        a = np.asarray(self.alpha, dtype=np.float64)
        a.flags.writeable = False
        return a

    @cached_property
    def p_arr(self) -> np.ndarray:
        if self.p is None:
            raise ConfigError("p: group masses are unresolved (fit estimates them from data)")
        q = np.asarray(self.p, dtype=np.float64)
        q.flags.writeable = False
        return q

    @cached_property
    def alpha_bar(self) -> float:
        """The acceptance mass sum(p_s * alpha_s)."""
        return float(np.dot(self.p_arr, self.alpha_arr))

    def with_p(self, p) -> "ProblemConfig":
        return validate_config(replace(self, p=tuple(float(q) for q in p)))


def validate_config(cfg: ProblemConfig) -> ProblemConfig:
    """Check every ProblemConfig invariant; returns the config unchanged.

    Raises ConfigError naming the violated field.
    """
    if cfg.K < 1:
        raise ConfigError(f"K: must be a positive integer, got {cfg.K}")
    if len(cfg.alpha) != cfg.K:
        raise ConfigError(f"alpha: expected {cfg.K} entries, got {len(cfg.alpha)}")
    for s, a in enumerate(cfg.alpha):
        if not (math.isfinite(a) and 0.0 < a <= 1.0):
            raise ConfigError(f"alpha out of range: alpha[{s}]={a} not in (0, 1]")
    if cfg.p is not None:
        if len(cfg.p) != cfg.K:
            raise ConfigError(f"p: expected {cfg.K} entries, got {len(cfg.p)}")
        for s, q in enumerate(cfg.p):
            if not (math.isfinite(q) and q > 0.0):
                raise ConfigError(f"p: p[{s}]={q} must be positive")
        if abs(math.fsum(cfg.p) - 1.0) > SIMPLEX_SUM_TOL:
            raise ConfigError(f"p not simplex: sums to {math.fsum(cfg.p)!r}")
        abar = cfg.alpha_bar
        if not (0.0 < abar <= 1.0 + SIMPLEX_SUM_TOL):
            raise ConfigError(f"alpha out of range: derived acceptance mass {abar} not in (0, 1]")
    if not (math.isfinite(cfg.sigma) and cfg.sigma >= 0.0):
        raise ConfigError(f"sigma < 0: got {cfg.sigma}")
    if not (math.isfinite(cfg.delta) and 0.0 < cfg.delta < 1.0):
        raise ConfigError(f"delta not in (0,1): got {cfg.delta}")
    try:
        check_seed(cfg.seed)
    except ValueError as exc:
        raise ConfigError(f"seed: {exc}") from None
    return cfg


@dataclass(frozen=True)
class ScoredSample:
    """One observation: group, base score, optional realized noise and label."""

    group: int
    score: float
    noise: Optional[float] = None
    label: Optional[int] = None

    @property
    def effective(self) -> float:
        return self.score + (self.noise or 0.0)


def samples_to_arrays(samples: Sequence[ScoredSample]):
    """(scores, groups, noise-or-None, labels-or-None) as numpy arrays."""
    scores = np.array([s.score for s in samples], dtype=np.float64)
    groups = np.array([s.group for s in samples], dtype=np.int64)
    noise = None
    if samples and all(s.noise is not None for s in samples):
        noise = np.array([s.noise for s in samples], dtype=np.float64)
    labels = None
    if samples and all(s.label is not None for s in samples):
        labels = np.array([s.label for s in samples], dtype=np.int64)
    return scores, groups, noise, labels


@dataclass(frozen=True)
class Multipliers:
    """The learned model: dual variables (lambda, gamma), K values each."""

    lam: tuple
    gamma: tuple

    def __post_init__(self):
        object.__setattr__(self, "lam", tuple(float(v) for v in np.atleast_1d(self.lam)))
        object.__setattr__(self, "gamma", tuple(float(v) for v in np.atleast_1d(self.gamma)))
        if len(self.lam) != len(self.gamma):
            raise ConfigError(
                f"multipliers: lambda has {len(self.lam)} entries, gamma {len(self.gamma)}"
            )

    @property
    def K(self) -> int:
        return len(self.lam)

    @cached_property
    def lam_arr(self) -> np.ndarray:
        v = np.asarray(self.lam, dtype=np.float64)
        v.flags.writeable = False
        return v

    @cached_property
    def gamma_arr(self) -> np.ndarray:
        v = np.asarray(self.gamma, dtype=np.float64)
        v.flags.writeable = False
        return v


def normalize_gauge(m: Multipliers, cfg: ProblemConfig) -> Multipliers:
    """Shift gamma along the null direction so that sum(gamma) = 0.

    gamma'_s = gamma_s + (p_s * alpha_s / alpha_bar) * c with c = -sum(gamma).
    The shift direction has unit coordinate sum, so the result sums to zero
    up to a few ulps of ||gamma||; sums already at that level are left
    untouched, which makes the operation exactly idempotent.  lambda is never
    modified, and both the dual objective and every induced decision are
    invariant under the shift.
    """
    total = math.fsum(m.gamma)
    scale = max(1.0, math.fsum(abs(g) for g in m.gamma))
    if abs(total) <= scale * 2.0**-48:
        return m
    w = cfg.p_arr * cfg.alpha_arr / cfg.alpha_bar
    gamma = m.gamma_arr - w * total
    # Absorb the residual rounding error into the heaviest coordinate; one
    # pass leaves at most an ulp-level remainder, below the no-op threshold.
    j = int(np.argmax(w))
    r = math.fsum(gamma)
    if r != 0.0:
        gamma[j] -= r
    return Multipliers(lam=m.lam, gamma=tuple(gamma))


@dataclass(frozen=True)
class GuaranteeBounds:
    """Finite-sample bounds evaluated at the fitted sample sizes.

    ``u`` bounds the per-group accept-rate deviation |NAB_s - alpha_s|;
    ``dp_bound`` bounds the per-group parity deviation |PT_s - PT|;
    ``risk_slack`` is the non-approximation part of the excess-risk bound.
    """

    u: tuple
    reject_bound: tuple
    dp_bound: tuple
    risk_slack: float


def _u_term(K: int, delta: float, n: np.ndarray) -> np.ndarray:
    return np.sqrt(2.0 * math.log(2.0 * K / delta) / n) + 2.0 / n


def guarantee_bounds(cfg: ProblemConfig, n: Sequence[int]) -> GuaranteeBounds:
    """Evaluate the guarantee bounds at per-group sample sizes ``n``."""
    validate_config(cfg)
    n = np.asarray(n, dtype=np.float64)
    if n.shape != (cfg.K,) or np.any(n < 1):
        raise ConfigError(f"n: expected {cfg.K} sizes >= 1, got {n}")
    alpha, p, abar = cfg.alpha_arr, cfg.p_arr, cfg.alpha_bar

    u = _u_term(cfg.K, cfg.delta, n)
    # Union-bound confidence delta' = delta / (2K), i.e. log(2/delta') = log(4K/delta).
    v = 3.0 * np.sqrt(math.log(4.0 * cfg.K / cfg.delta) / (2.0 * n)) + 4.0 / n
    dp = v / alpha + (2.0 / abar) * float(np.dot(p, v))
    risk_slack = 6.0 * float(np.dot(p / abar + 1.0 / alpha, u))
    return GuaranteeBounds(
        u=tuple(u), reject_bound=tuple(u), dp_bound=tuple(dp), risk_slack=risk_slack
    )


def u_main_text(cfg: ProblemConfig, n: Sequence[int]) -> np.ndarray:
    """Alternative accept-rate bound constant, exposed for comparison only.

    The package's operative bound is ``guarantee_bounds(...).u``; this variant
    uses the looser-logarithm/smaller-denominator form that appears alongside
    it, so the two can be compared numerically.
    """
    n = np.asarray(n, dtype=np.float64)
    return np.sqrt(2.0 * math.log(4.0 * cfg.K / cfg.delta) / (2.0 * n)) + 2.0 / n


# --- canonical JSON ---------------------------------------------------------
#
# All files the package writes use this serializer: doubles carry 17
# significant digits so every value round-trips bit-exactly and repeated runs
# are byte-identical.


def dumps_17g(obj) -> str:
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            raise ValueError(f"cannot serialize non-finite value {x}")
        return format(x, ".17g")
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ", ".join(dumps_17g(v) for v in obj) + "]"
    if isinstance(obj, dict):
        items = (f"{json.dumps(str(k))}: {dumps_17g(v)}" for k, v in obj.items())
        return "{" + ", ".join(items) + "}"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def config_to_json(cfg: ProblemConfig) -> str:
    validate_config(cfg)
    return dumps_17g(
        {
            "K": cfg.K,
            "alpha": list(cfg.alpha),
            "p": None if cfg.p is None else list(cfg.p),
            "sigma": cfg.sigma,
            "delta": cfg.delta,
            "seed": cfg.seed,
        }
    )


def config_from_json(text: str) -> ProblemConfig:
    raw = json.loads(text)
    try:
        cfg = ProblemConfig(
            K=raw["K"],
            alpha=raw["alpha"],
            p=raw.get("p"),
            sigma=raw.get("sigma", 1e-3),
            delta=raw.get("delta", 0.05),
            seed=raw.get("seed", 0),
        )
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"config JSON missing or malformed field: {exc}") from None
    return validate_config(cfg)
