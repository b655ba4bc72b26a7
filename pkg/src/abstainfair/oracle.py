"""Ground-truth machinery: discrete populations, an exact LP oracle, and
synthetic data families with known regression functions.

The oracle solves the population problem over *randomized* classifiers
(per-atom probabilities of predicting 0, 1, or rejecting), which is the
correct relaxation on discrete supports where deterministic thresholds cannot
hit the accept-rate constraints exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .core import Decision, ProblemConfig, ScoredSample
from .errors import ConfigError, ScoreFileError, SolverFailure, ZeroMassEvent
from .rng import LABEL_TAG, MC_TAG, SCORE_TAG, block_uniforms, sequential
from .solver import SolveOptions, Status, solve_standard_form

_MASS_TOL = 1e-9


@dataclass(frozen=True)
class DiscretePopulation:
    """Atoms (group, eta, conditional mass) plus group marginals p."""

    groups: tuple
    etas: tuple
    masses: tuple  # conditional within group; each group sums to 1
    p: tuple

    def __post_init__(self):
        object.__setattr__(self, "groups", tuple(int(g) for g in self.groups))
        object.__setattr__(self, "etas", tuple(float(e) for e in self.etas))
        object.__setattr__(self, "masses", tuple(float(m) for m in self.masses))
        object.__setattr__(self, "p", tuple(float(v) for v in self.p))
        K = len(self.p)
        if not (len(self.groups) == len(self.etas) == len(self.masses)):
            raise ConfigError("population: atom fields have unequal lengths")
        if abs(math.fsum(self.p) - 1.0) > _MASS_TOL or min(self.p) <= 0:
            raise ConfigError(f"population: p not a simplex point: {self.p}")
        for s in range(K):
            total = math.fsum(m for g, m in zip(self.groups, self.masses) if g == s)
            if abs(total - 1.0) > _MASS_TOL:
                raise ConfigError(f"population: group {s} masses sum to {total}")
        if any(not 0.0 <= e <= 1.0 for e in self.etas):
            raise ConfigError("population: eta outside [0, 1]")
        if any(m < 0 for m in self.masses):
            raise ConfigError("population: negative mass")
        if any(not 0 <= g < K for g in self.groups):
            raise ConfigError("population: group index outside range")

    @property
    def K(self) -> int:
        return len(self.p)

    @property
    def n_atoms(self) -> int:
        return len(self.groups)


def population_to_csv(pop: DiscretePopulation, zero_indexed: bool = False) -> str:
    """Serialize as "group,eta,mass" rows; mass is the *joint* atom mass."""
    base = 0 if zero_indexed else 1
    lines = ["group,eta,mass"]
    for g, e, m in zip(pop.groups, pop.etas, pop.masses):
        lines.append(f"{g + base},{format(e, '.17g')},{format(pop.p[g] * m, '.17g')}")
    return "\n".join(lines) + "\n"


def population_from_csv(text: str, zero_indexed: bool = False) -> DiscretePopulation:
    """Parse "group,eta,mass" rows (joint masses; groups contiguous from 1)."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].strip().lower().replace(" ", "") != "group,eta,mass":
        raise ScoreFileError("expected header 'group,eta,mass'", row=1)
    base = 0 if zero_indexed else 1
    groups, etas, joint = [], [], []
    for r, ln in enumerate(lines[1:], start=2):
        parts = ln.split(",")
        if len(parts) != 3:
            raise ScoreFileError(f"expected 3 fields, got {len(parts)}", row=r)
        try:
            g = int(parts[0]) - base
            e = float(parts[1])
            m = float(parts[2])
        except ValueError as exc:
            raise ScoreFileError(str(exc), row=r) from exc
        if not math.isfinite(e) or not math.isfinite(m):
            raise ScoreFileError("non-finite value", row=r)
        groups.append(g)
        etas.append(e)
        joint.append(m)
    K = max(groups) + 1 if groups else 0
    if sorted(set(groups)) != list(range(K)):
        raise ScoreFileError(f"groups must form a contiguous range starting at {base}")
    joint_arr = np.asarray(joint)
    p = np.array([joint_arr[np.asarray(groups) == s].sum() for s in range(K)])
    total = p.sum()
    if abs(total - 1.0) > 1e-6:
        raise ScoreFileError(f"joint masses sum to {total}, expected 1")
    p = p / total
    masses = [joint[i] / (total * p[groups[i]]) for i in range(len(groups))]
    return DiscretePopulation(groups=groups, etas=etas, masses=masses, p=tuple(p))


@dataclass(frozen=True)
class OracleSolution:
    risk: float
    table: np.ndarray  # (n_atoms, 3) columns q0, q1, q_reject
    pos_rate: float  # the common positive rate among accepted points


def oracle_solve(
    pop: DiscretePopulation,
    alpha: Sequence[float],
    options: SolveOptions = SolveOptions(),
) -> OracleSolution:
    """Exact minimum risk over randomized abstaining classifiers on ``pop``.

    Variables per atom: q0, q1, qr >= 0 with q0 + q1 + qr = 1; constraints fix
    each group's accept mass to alpha_s and equalize the positive rate among
    accepted points across groups (through one shared free variable).
    """
    alpha = tuple(float(a) for a in alpha)
    K, n = pop.K, pop.n_atoms
    if len(alpha) != K:
        raise ConfigError(f"alpha: expected {K} values, got {len(alpha)}")
    if any(not 0.0 < a <= 1.0 for a in alpha):
        raise ConfigError(f"alpha out of range: {alpha}")
    abar = math.fsum(pop.p[s] * alpha[s] for s in range(K))
    g = np.asarray(pop.groups)
    eta = np.asarray(pop.etas)
    mass = np.asarray(pop.masses)
    p_atom = np.asarray(pop.p)[g]

    nv = 3 * n + 1  # q0 | q1 | qr | t
    c = np.zeros(nv)
    c[:n] = p_atom * mass * eta / abar  # predicting 0 errs with prob eta
    c[n : 2 * n] = p_atom * mass * (1.0 - eta) / abar
    m_rows = n + 2 * K
    A = np.zeros((m_rows, nv))
    b = np.zeros(m_rows)
    A[np.arange(n), np.arange(n)] = 1.0
    A[np.arange(n), n + np.arange(n)] = 1.0
    A[np.arange(n), 2 * n + np.arange(n)] = 1.0
    b[:n] = 1.0
    for s in range(K):
        in_s = g == s
        A[n + s, :n][in_s] = mass[in_s]
        A[n + s, n : 2 * n][in_s] = mass[in_s]
        b[n + s] = alpha[s]
        A[n + K + s, n : 2 * n][in_s] = mass[in_s]
        A[n + K + s, 3 * n] = -alpha[s]
    lo = np.zeros(nv)
    up = np.ones(nv)
    sol = solve_standard_form(c, A, b, lo, up, options)
    if sol.status is not Status.OPTIMAL:
        raise SolverFailure(sol.status.value, f"oracle LP ended {sol.status.value}")
    table = np.stack([sol.y[:n], sol.y[n : 2 * n], sol.y[2 * n : 3 * n]], axis=1)
    return OracleSolution(risk=sol.objective, table=table, pos_rate=float(sol.y[3 * n]))


def population_metrics(
    pop,
    classify: Callable,
    m: Optional[int] = None,
    seed: int = 0,
    strict: bool = True,
) -> dict:
    """Population quantities {R, NAB_s, NAB, PT_s, PT} of a classifier.

    Exact mode: ``pop`` is a DiscretePopulation and ``classify(eta, s)``
    returns per-atom decision probabilities (p0, p1, p_reject); conditional
    quantities are exact finite sums.

    Sampled mode: ``pop`` is a sampler ``pop(m, seed) -> (scores, groups,
    etas)`` and ``classify(scores, groups)`` returns hard decisions; labels
    are drawn Y ~ Bernoulli(eta) and all quantities are Monte-Carlo estimates
    with standard error <= (4m)^{-1/2}.

    Zero-mass conditioning events raise ZeroMassEvent when ``strict``,
    otherwise the affected entries are NaN.
    """
    if isinstance(pop, DiscretePopulation):
        return _exact_metrics(pop, classify, strict)
    if m is None or m < 1:
        raise ConfigError(f"m: Monte-Carlo size must be >= 1, got {m}")
    return _sampled_metrics(pop, classify, m, seed, strict)


def _guard(num: float, den: float, what: str, strict: bool) -> float:
    if den <= 0.0:
        if strict:
            raise ZeroMassEvent(f"{what} conditions on a zero-mass event")
        return math.nan
    return float(num) / float(den)


def _exact_metrics(pop: DiscretePopulation, classify, strict: bool) -> dict:
    K = pop.K
    acc = np.zeros(K)  # per-group accept mass (conditional)
    pos = np.zeros(K)  # per-group positive mass
    err = np.zeros(K)  # per-group misclassified mass
    for g, e, mass in zip(pop.groups, pop.etas, pop.masses):
        p0, p1, pr = classify(e, g)
        if min(p0, p1, pr) < -1e-12 or abs(p0 + p1 + pr - 1.0) > 1e-9:
            raise ConfigError(f"classify returned a non-distribution: {(p0, p1, pr)}")
        acc[g] += mass * (p0 + p1)
        pos[g] += mass * p1
        err[g] += mass * (e * p0 + (1.0 - e) * p1)
    p = np.asarray(pop.p)
    nab = float(p @ acc)
    return {
        "R": _guard(float(p @ err), nab, "R", strict),
        "NAB_s": [float(a) for a in acc],
        "NAB": nab,
        "PT_s": [_guard(pos[s], acc[s], f"PT_{s}", strict) for s in range(K)],
        "PT": _guard(float(p @ pos), nab, "PT", strict),
    }


def _sampled_metrics(sampler, classify, m: int, seed: int, strict: bool) -> dict:
    scores, groups, etas = sampler(m, seed)
    scores = np.asarray(scores, dtype=np.float64)
    groups = np.asarray(groups, dtype=np.int64)
    etas = np.asarray(etas, dtype=np.float64)
    labels = (block_uniforms(seed, LABEL_TAG, 0, m) < etas).astype(np.int64)
    decisions = np.asarray([int(d) for d in classify(scores, groups)], dtype=np.int64)
    K = int(groups.max()) + 1
    accepted = decisions != int(Decision.REJECT)
    out_nab, out_pt = [], []
    for s in range(K):
        in_s = groups == s
        out_nab.append(_guard(float(np.sum(in_s & accepted)), float(np.sum(in_s)), f"NAB_{s}", strict))
        out_pt.append(
            _guard(float(np.sum(in_s & accepted & (decisions == 1))), float(np.sum(in_s & accepted)), f"PT_{s}", strict)
        )
    n_acc = float(np.sum(accepted))
    return {
        "R": _guard(float(np.sum(accepted & (decisions != labels))), n_acc, "R", strict),
        "NAB_s": out_nab,
        "NAB": float(np.mean(accepted)),
        "PT_s": out_pt,
        "PT": _guard(float(np.sum(accepted & (decisions == 1))), n_acc, "PT", strict),
    }


# --- synthetic families -------------------------------------------------------


@dataclass(frozen=True)
class SyntheticGenerator:
    """Deterministic data families with known eta.

    families:
      - "uniform": one group, eta = score ~ U[0, 1];
      - "logistic2": two groups, eta = sigmoid(z), z ~ N(mean_s, 1);
      - "table": atoms drawn from an explicit DiscretePopulation.
    ``bias`` shifts the *reported* score to clip(eta + bias, 0, 1) while
    labels still follow eta, exercising misspecified score models; bias = 0
    is the well-specified case (score == eta exactly).
    """

    family: str
    seed: int = 0
    means: tuple = (0.3, -0.6)
    table: Optional[DiscretePopulation] = None
    bias: float = 0.0

    def __post_init__(self):
        if self.family not in ("uniform", "logistic2", "table"):
            raise ConfigError(f"family: unknown synthetic family {self.family!r}")
        if self.family == "table" and self.table is None:
            raise ConfigError("family 'table' needs a DiscretePopulation")

    @property
    def K(self) -> int:
        if self.family == "uniform":
            return 1
        if self.family == "logistic2":
            return 2
        return self.table.K

    @property
    def p(self) -> tuple:
        if self.family == "uniform":
            return (1.0,)
        if self.family == "logistic2":
            return (0.5, 0.5)
        return self.table.p

    @property
    def well_specified(self) -> bool:
        return self.bias == 0.0


@dataclass(frozen=True)
class GeneratedData:
    unlabeled: list
    test: list
    unlabeled_eta: np.ndarray
    test_eta: np.ndarray
    p: tuple
    l1_misspec: float  # exact (uniform/table) or MC estimate (logistic2)


def _draw_part(gen: SyntheticGenerator, n_per_group: int, part: int):
    """(scores, groups, etas) for one part; parts use disjoint RNG blocks."""
    K = gen.K
    etas = np.empty(K * n_per_group)
    groups = np.empty(K * n_per_group, dtype=np.int64)
    for s in range(K):
        sl = slice(s * n_per_group, (s + 1) * n_per_group)
        groups[sl] = s
        # Each (part, group) pair owns a disjoint 2^30-block range of the
        # counter space, so part sizes never interact.
        base = part * (1 << 40) + s * (1 << 30)
        if gen.family == "uniform":
            etas[sl] = block_uniforms(gen.seed, SCORE_TAG, base, n_per_group)
        elif gen.family == "logistic2":
            z = sequential(gen.seed, SCORE_TAG, block=base).standard_normal(n_per_group)
            etas[sl] = 1.0 / (1.0 + np.exp(-(z + gen.means[s])))
        else:
            u = block_uniforms(gen.seed, SCORE_TAG, base, n_per_group)
            in_s = np.asarray(gen.table.groups) == s
            cum = np.cumsum(np.asarray(gen.table.masses)[in_s])
            idx = np.searchsorted(cum, u, side="right").clip(max=int(in_s.sum()) - 1)
            etas[sl] = np.asarray(gen.table.etas)[in_s][idx]
    scores = np.clip(etas + gen.bias, 0.0, 1.0)
    return scores, groups, etas


def _exact_l1(gen: SyntheticGenerator) -> Optional[float]:
    b = abs(gen.bias)
    if b == 0.0:
        return 0.0
    if gen.family == "uniform":
        # E|clip(e + b) - e| over e ~ U[0,1]  (b in [0,1])
        return b * (1.0 - b) + b * b / 2.0
    if gen.family == "table":
        total = 0.0
        for g, e, m in zip(gen.table.groups, gen.table.etas, gen.table.masses):
            total += gen.table.p[g] * m * abs(np.clip(e + gen.bias, 0.0, 1.0) - e)
        return total
    return None  # logistic2: estimated from the drawn sample


def generate(
    gen: SyntheticGenerator, n_per_group: int, n_test_per_group: Optional[int] = None
) -> GeneratedData:
    """Draw an unlabeled fitting part and a labeled test part.

    Deterministic in ``gen.seed``; the two parts use disjoint counter blocks
    so growing one part never changes the other.
    """
    if n_test_per_group is None:
        n_test_per_group = n_per_group
    u_scores, u_groups, u_etas = _draw_part(gen, n_per_group, part=0)
    t_scores, t_groups, t_etas = _draw_part(gen, n_test_per_group, part=1)
    labels = (block_uniforms(gen.seed, LABEL_TAG, 0, len(t_etas)) < t_etas).astype(int)
    unlabeled = [
        ScoredSample(group=int(s), score=float(e)) for e, s in zip(u_scores, u_groups)
    ]
    test = [
        ScoredSample(group=int(s), score=float(e), label=int(y))
        for e, s, y in zip(t_scores, t_groups, labels)
    ]
    l1 = _exact_l1(gen)
    if l1 is None:
        both = np.concatenate([u_etas, t_etas])
        l1 = float(np.mean(np.abs(np.clip(both + gen.bias, 0.0, 1.0) - both)))
    return GeneratedData(
        unlabeled=unlabeled,
        test=test,
        unlabeled_eta=u_etas,
        test_eta=t_etas,
        p=gen.p,
        l1_misspec=l1,
    )


def sampler_of(gen: SyntheticGenerator, part: int = 2) -> Callable:
    """Adapter for population_metrics' sampled mode: fresh draws per seed.

    The returned sampler ignores group balance requests below K and draws
    ceil(m / K) per group, truncated to m points.
    """

    def draw(m: int, seed: int):
        per = -(-m // gen.K)
        g2 = SyntheticGenerator(
            family=gen.family, seed=seed, means=gen.means, table=gen.table, bias=gen.bias
        )
        scores, groups, etas = _draw_part(g2, per, part=part)
        order = sequential(seed, MC_TAG).permutation(len(scores))[:m]
        return scores[order], groups[order], etas[order]

    return draw
