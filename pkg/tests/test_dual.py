import math

import numpy as np
import pytest

from abstainfair.core import Multipliers, ProblemConfig, ScoredSample
from abstainfair.dual import (
    WeightedSample,
    check_weights,
    dual_gradient,
    dual_objective,
    g_value,
    g_values,
    grid_minimize,
    is_kink,
    weighted_from_scored,
)
from abstainfair.errors import ConfigError, NonUniformWeights

from conftest import random_multipliers, random_weighted

CFG1 = ProblemConfig(K=1, alpha=(0.8,), p=(1.0,), sigma=0.0, seed=0)
ZERO1 = Multipliers(lam=(0.0,), gamma=(0.0,))


def uniform_weighted(scores, group=0):
    w = 1.0 / len(scores)
    return [WeightedSample(group=group, effective_score=float(e), weight=w) for e in scores]


class TestGValue:
    def test_frozen_origin_example(self):
        # a = 1/(2*0.8) = 0.625; |0.625*(1-0.6)| - 0.625 = -0.375
        assert g_value(0.3, 0, ZERO1, CFG1) == pytest.approx(-0.375, abs=1e-15)

    def test_frozen_shifted_example(self):
        m = Multipliers(lam=(-0.5,), gamma=(0.0,))
        assert g_value(0.75, 0, m, CFG1) == pytest.approx(0.1875, abs=1e-15)

    def test_origin_rejects_everywhere(self, rng):
        for e in rng.uniform(0, 1, 500):
            assert g_value(float(e), 0, ZERO1, CFG1) <= 0

    def test_vectorized_matches_scalar(self, rng):
        samples, cfg = random_weighted(rng)
        m = random_multipliers(rng, cfg.K)
        scores = np.array([s.effective_score for s in samples])
        groups = np.array([s.group for s in samples])
        vec = g_values(scores, groups, m, cfg)
        for i in range(0, len(samples), 7):
            assert vec[i] == pytest.approx(
                g_value(float(scores[i]), int(groups[i]), m, cfg), abs=1e-15
            )


class TestDualObjective:
    def test_zero_multipliers_give_zero(self, rng):
        samples = uniform_weighted(rng.uniform(0, 1, 50))
        assert dual_objective(samples, ZERO1, CFG1) == 0.0

    def test_matches_direct_sum(self):
        samples = uniform_weighted([0.1, 0.4, 0.9])
        m = Multipliers(lam=(-0.3,), gamma=(0.0,))
        a = 1 / 1.6
        expected = -0.3 * 0.8 + math.fsum(
            max(abs(a * (1 - 2 * e)) - a + 0.3, 0.0) / 3 for e in (0.1, 0.4, 0.9)
        )
        assert dual_objective(samples, m, CFG1) == pytest.approx(expected, abs=1e-15)

    def test_uniform_grid_at_half_lambda(self):
        scores = np.linspace(0, 1, 10001)
        samples = uniform_weighted(scores)
        m = Multipliers(lam=(-0.5,), gamma=(0.0,))
        assert dual_objective(samples, m, CFG1) == pytest.approx(-0.2, abs=1e-3)

    def test_convexity(self, rng):
        samples, cfg = random_weighted(rng, n_hi=60)
        for _ in range(1000):
            m1 = random_multipliers(rng, cfg.K)
            m2 = random_multipliers(rng, cfg.K)
            mid = Multipliers(
                lam=tuple((a + b) / 2 for a, b in zip(m1.lam, m2.lam)),
                gamma=tuple((a + b) / 2 for a, b in zip(m1.gamma, m2.gamma)),
            )
            f1 = dual_objective(samples, m1, cfg)
            f2 = dual_objective(samples, m2, cfg)
            fm = dual_objective(samples, mid, cfg)
            assert fm <= (f1 + f2) / 2 + 1e-12


class TestDualGradient:
    def test_matches_finite_differences_off_kinks(self, rng):
        for _ in range(10):
            samples, cfg = random_weighted(rng, n_hi=80)
            m = random_multipliers(rng, cfg.K, scale=0.4)
            if any(
                is_kink(s.effective_score, s.group, m, cfg) for s in samples
            ):
                continue
            glam, ggam = dual_gradient(samples, m, cfg)
            h = 1e-7
            for s in range(cfg.K):
                lam_hi = list(m.lam)
                lam_hi[s] += h
                lam_lo = list(m.lam)
                lam_lo[s] -= h
                fd = (
                    dual_objective(samples, Multipliers(tuple(lam_hi), m.gamma), cfg)
                    - dual_objective(samples, Multipliers(tuple(lam_lo), m.gamma), cfg)
                ) / (2 * h)
                assert glam[s] == pytest.approx(fd, abs=1e-5)


class TestGridMinimize:
    def test_uniform_scores_recover_half(self):
        scores = np.linspace(0, 1, 10001)
        m = grid_minimize(uniform_weighted(scores), CFG1)
        assert -0.55 <= m.lam[0] <= -0.45
        obj = dual_objective(uniform_weighted(scores), m, CFG1)
        assert -0.21 <= obj <= -0.19

    def test_alpha_one_flat_ray_value(self):
        # with no abstention budget the optimum sits on a flat ray and the
        # value is minus the empirical Bayes risk of the plug-in scores
        scores = np.linspace(0.01, 0.99, 201)
        cfg = ProblemConfig(K=1, alpha=(1.0,), p=(1.0,), sigma=0.0, seed=0)
        samples = uniform_weighted(scores)
        m = grid_minimize(samples, cfg)
        bayes = float(np.mean(np.minimum(scores, 1 - scores)))
        assert dual_objective(samples, m, cfg) == pytest.approx(-bayes, abs=1e-12)
        assert m.lam[0] <= 0

    def test_duplication_invariance(self, rng):
        samples, cfg = random_weighted(rng, k_max=2, n_hi=60)
        doubled = [
            WeightedSample(s.group, s.effective_score, s.weight / 2)
            for s in samples
            for _ in range(2)
        ]
        m1 = grid_minimize(samples, cfg)
        m2 = grid_minimize(doubled, cfg)
        assert m1.lam == pytest.approx(m2.lam, abs=1e-9)
        assert m1.gamma == pytest.approx(m2.gamma, abs=1e-9)

    def test_local_perturbations_never_improve(self, rng):
        for _ in range(6):
            samples, cfg = random_weighted(rng, k_max=2, n_hi=100)
            m = grid_minimize(samples, cfg)
            base = dual_objective(samples, m, cfg)
            for s in range(cfg.K):
                for d in (1e-4, -1e-4):
                    lam = list(m.lam)
                    lam[s] += d
                    assert (
                        dual_objective(samples, Multipliers(tuple(lam), m.gamma), cfg)
                        >= base - 1e-12
                    )
                    gam = list(m.gamma)
                    gam[s] += d
                    assert (
                        dual_objective(samples, Multipliers(m.lam, tuple(gam)), cfg)
                        >= base - 1e-12
                    )

    def test_three_groups_unsupported(self, rng):
        samples, cfg = random_weighted(rng, k_max=3)
        while cfg.K < 3:
            samples, cfg = random_weighted(rng, k_max=3)
        with pytest.raises(ConfigError):
            grid_minimize(samples, cfg)


class TestWeights:
    def test_weighted_from_scored_sums_to_one_per_group(self, rng):
        n0, n1 = 13, 29
        samples = [ScoredSample(group=0, score=0.5)] * n0 + [
            ScoredSample(group=1, score=0.5)
        ] * n1
        ws = weighted_from_scored(samples)
        for s, n_s in ((0, n0), (1, n1)):
            total = math.fsum(w.weight for w in ws if w.group == s)
            assert total == pytest.approx(1.0, abs=1e-12)
            assert all(
                w.weight == pytest.approx(1 / n_s) for w in ws if w.group == s
            )

    def test_check_weights_rejects_bad_sums(self):
        scores = np.array([0.2, 0.4, 0.6])
        groups = np.array([0, 0, 0])
        with pytest.raises(ConfigError):
            check_weights(scores, groups, np.array([0.5, 0.3, 0.1]), K=1)
        # summing to one is enough here; uniformity is the LP assembler's rule
        check_weights(scores, groups, np.array([0.5, 0.3, 0.2]), K=1)
        check_weights(scores, groups, np.array([1 / 3] * 3), K=1)
