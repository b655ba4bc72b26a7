"""Shared generators for randomized tests.

Instances are built from a seeded numpy Generator so every test run sees the
same sequence; tests that need several independent draws take the `rng`
fixture and consume it in order.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest

from abstainfair.core import ProblemConfig, ScoredSample
from abstainfair.dual import WeightedSample, weighted_from_scored
from abstainfair.oracle import DiscretePopulation


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_instance(rng, k_max=3, n_lo=20, n_hi=200, sigma=1e-3, alpha_lo=0.3,
                    alpha_hi=0.99, lumpy=False, seed=0):
    """A random fitting problem: ScoredSample list plus its ProblemConfig."""
    K = int(rng.integers(1, k_max + 1))
    sizes = rng.integers(n_lo, n_hi + 1, size=K)
    groups = np.repeat(np.arange(K), sizes)
    n = len(groups)
    if lumpy:
        atoms = rng.uniform(0.05, 0.95, size=6)
        scores = np.where(
            rng.uniform(size=n) < 0.5,
            rng.choice(atoms, size=n),
            rng.uniform(0, 1, size=n),
        )
    else:
        scores = rng.uniform(0, 1, size=n)
    alpha = tuple(float(a) for a in np.round(rng.uniform(alpha_lo, alpha_hi, K), 3))
    cfg = ProblemConfig(K=K, alpha=alpha, p=None, sigma=sigma, seed=seed)
    samples = [
        ScoredSample(group=int(g), score=float(e)) for g, e in zip(groups, scores)
    ]
    return samples, cfg


def random_weighted(rng, **kw):
    """Same instance shape but as uniformly weighted dual samples."""
    samples, cfg = random_instance(rng, **kw)
    p = np.bincount([s.group for s in samples], minlength=cfg.K)
    p = p / p.sum()
    cfg_p = ProblemConfig(
        K=cfg.K, alpha=cfg.alpha, p=tuple(float(x) for x in p),
        sigma=cfg.sigma, seed=cfg.seed,
    )
    return weighted_from_scored(samples), cfg_p


def random_multipliers(rng, K, scale=1.0):
    from abstainfair.core import Multipliers

    lam = tuple(float(x) for x in rng.normal(0, scale, K))
    gamma = tuple(float(x) for x in rng.normal(0, scale / 2, K))
    return Multipliers(lam=lam, gamma=gamma)


def random_population(rng, k_max=3, atoms_max=25):
    """Discrete population with exactly representable (rational) masses."""
    K = int(rng.integers(1, k_max + 1))
    groups, etas, masses = [], [], []
    for s in range(K):
        m = int(rng.integers(2, max(3, atoms_max // K) + 1))
        # rational masses j/denominator that sum to 1 exactly
        parts = rng.integers(1, 10, size=m)
        den = int(parts.sum())
        fracs = [Fraction(int(p), den) for p in parts]
        assert sum(fracs) == 1
        groups += [s] * m
        etas += [float(x) for x in rng.uniform(0, 1, size=m)]
        masses += [float(f) for f in fracs]
    pw = rng.integers(1, 10, size=K)
    p = tuple(float(Fraction(int(w), int(pw.sum()))) for w in pw)
    # float rounding of the fractions can leave a ~1e-17 residue; the
    # population type tolerates that
    return DiscretePopulation(
        groups=tuple(groups), etas=tuple(etas), masses=tuple(masses), p=p
    )


def accept_fraction(g_vals, groups, s):
    in_s = groups == s
    return float(np.sum(g_vals[in_s] > 0) / np.sum(in_s))
