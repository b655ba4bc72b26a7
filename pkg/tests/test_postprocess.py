import json
import math
import warnings

import numpy as np
import pytest

from abstainfair.core import Decision, Multipliers, ProblemConfig, ScoredSample
from abstainfair.dual import dual_objective, weighted_from_scored
from abstainfair.errors import (
    ConfigError,
    ConstraintWarning,
    GroupOutOfRange,
)
from abstainfair.postprocess import (
    FittedModel,
    decision_probabilities,
    fit,
    load_model,
    model_from_json,
    model_to_json,
    predict,
    predict_batch,
    randomize,
    reject_strip,
    save_model,
    threshold_shift,
)
from abstainfair.rng import NOISE_TAG, block_uniforms

from conftest import random_instance

CFG1 = ProblemConfig(K=1, alpha=(0.8,), p=(1.0,), sigma=0.0, seed=0)


def hand_model(lam=(-0.5,), gamma=(0.0,), cfg=CFG1):
    return FittedModel(multipliers=Multipliers(lam=lam, gamma=gamma), cfg=cfg)


def uniform_samples(n, group=0):
    return [ScoredSample(group=group, score=float(e)) for e in np.linspace(0, 1, n)]


class TestRandomize:
    def test_sigma_zero_is_identity(self):
        samples = uniform_samples(50)
        out = randomize(samples, 0.0, seed=3)
        assert all(o.noise == 0.0 for o in out)
        assert [o.effective for o in out] == [s.score for s in samples]

    def test_deterministic(self):
        samples = uniform_samples(10_000)
        a = randomize(samples, 1e-3, seed=5)
        b = randomize(samples, 1e-3, seed=5)
        assert [x.noise for x in a] == [x.noise for x in b]

    def test_ties_become_distinct(self):
        samples = [ScoredSample(group=0, score=0.5) for _ in range(10_000)]
        out = randomize(samples, 1e-3, seed=0)
        eff = [s.effective for s in out]
        assert len(set(eff)) == len(eff)
        assert all(0.5 <= e < 0.5 + 1e-3 for e in eff)

    def test_noise_stream_is_the_noise_tag(self):
        samples = uniform_samples(8)
        out = randomize(samples, 1e-3, seed=11)
        expected = 1e-3 * block_uniforms(11, NOISE_TAG, 0, 8)
        assert [s.noise for s in out] == pytest.approx(list(expected), abs=0)

    def test_negative_sigma_rejected(self):
        with pytest.raises(ConfigError):
            randomize(uniform_samples(3), -1e-6, seed=0)


class TestFit:
    def test_uniform_grid_recovers_analytic_optimum(self):
        samples = uniform_samples(10_001)
        model = fit(samples, CFG1)
        assert -0.55 <= model.multipliers.lam[0] <= -0.45
        assert -0.21 <= model.provenance["objective"] <= -0.19

    def test_uniform_grid_regression_values(self):
        # pinned output of the deterministic interior-point path
        model = fit(uniform_samples(401), CFG1)
        assert model.multipliers.lam[0] == pytest.approx(-0.5000000000250439, abs=1e-12)
        assert model.provenance["objective"] == pytest.approx(-0.1992518703138916, abs=1e-12)
        assert model.provenance["solver"] == "interior"

    def test_alpha_one_accepts_everything_exactly(self):
        cfg = ProblemConfig(K=1, alpha=(1.0,), p=(1.0,), sigma=0.0, seed=0)
        samples = uniform_samples(399)
        model = fit(samples, cfg)
        decisions = predict_batch(model, samples, fresh_noise=False)
        assert sum(d != Decision.REJECT for d in decisions) == 399

    def test_identical_groups_have_no_parity_shift(self):
        base = np.random.default_rng(9).uniform(0, 1, 120)
        samples = [ScoredSample(group=0, score=float(e)) for e in base]
        samples += [ScoredSample(group=1, score=float(e)) for e in base]
        cfg = ProblemConfig(K=2, alpha=(0.8, 0.8), p=(0.5, 0.5), sigma=0.0, seed=0)
        model = fit(samples, cfg)
        assert abs(model.multipliers.gamma[0]) < 1e-6
        assert abs(model.multipliers.gamma[1]) < 1e-6

    def test_count_identity_and_boundary(self, rng):
        from abstainfair.dual import g_values

        for trial in range(10):
            samples, cfg = random_instance(rng, lumpy=True, seed=trial)
            noisy = randomize(samples, cfg.sigma, cfg.seed)
            model = fit(noisy, cfg)
            scores = np.array([s.effective for s in noisy])
            groups = np.array([s.group for s in noisy])
            g = g_values(scores, groups, model.multipliers, model.cfg)
            for s in range(cfg.K):
                in_s = groups == s
                n_s = int(in_s.sum())
                accept = float(np.sum(g[in_s] > 0)) / n_s
                assert abs(accept - cfg.alpha[s]) <= 2 / n_s + 1e-12
                assert int(np.sum(np.abs(g[in_s]) <= 1e-9)) <= 2

    def test_grid_method_matches_lp(self, rng):
        for trial in range(5):
            samples, cfg = random_instance(rng, k_max=2, n_hi=120, seed=trial)
            noisy = randomize(samples, cfg.sigma, cfg.seed)
            via_lp = fit(noisy, cfg, method="lp")
            via_grid = fit(noisy, cfg, method="grid")
            ws = weighted_from_scored(noisy)
            assert via_grid.provenance["solver"] == "grid"
            assert dual_objective(ws, via_grid.multipliers, via_grid.cfg) == pytest.approx(
                dual_objective(ws, via_lp.multipliers, via_lp.cfg), abs=1e-6
            )

    def test_p_estimated_from_sample_when_missing(self):
        samples = uniform_samples(30, group=0) + uniform_samples(90, group=1)
        cfg = ProblemConfig(K=2, alpha=(0.8, 0.8), p=None, sigma=0.0, seed=0)
        model = fit(samples, cfg)
        assert model.cfg.p == pytest.approx((0.25, 0.75))

    def test_unknown_method_rejected(self):
        with pytest.raises(ConfigError):
            fit(uniform_samples(10), CFG1, method="newton")

    def test_empty_and_out_of_range_groups_rejected(self):
        from abstainfair.errors import MissingGroup

        with pytest.raises((ConfigError, MissingGroup)):
            fit([], CFG1)
        bad = [ScoredSample(group=1, score=0.5)]
        with pytest.raises((ConfigError, GroupOutOfRange)):
            fit(bad, CFG1)

    def test_tied_scores_without_noise_warn(self):
        # ten distinct score values shared by 2000 points: the LP parks whole
        # atoms on the boundary and the exact count identity breaks
        rng = np.random.default_rng(4)
        atoms = np.linspace(0.05, 0.95, 10)
        scores = rng.choice(atoms, size=2000)
        samples = [ScoredSample(group=0, score=float(e)) for e in scores]
        with pytest.warns(ConstraintWarning):
            fit(samples, CFG1)


class TestValidate:
    def test_gamma_l1_cap(self):
        cfg = ProblemConfig(K=2, alpha=(0.8, 0.8), p=(0.5, 0.5), sigma=0.0, seed=0)
        with pytest.raises(ConfigError):
            FittedModel(
                multipliers=Multipliers(lam=(0.0, 0.0), gamma=(1.5, -1.5)), cfg=cfg
            ).validate()

    def test_lambda_cap(self):
        with pytest.raises(ConfigError):
            FittedModel(
                multipliers=Multipliers(lam=(9.0,), gamma=(0.0,)), cfg=CFG1
            ).validate()

    def test_k_mismatch(self):
        with pytest.raises(ConfigError):
            FittedModel(
                multipliers=Multipliers(lam=(0.0, 0.0), gamma=(0.0, 0.0)), cfg=CFG1
            ).validate()

    def test_fitted_models_always_validate(self, rng):
        for trial in range(5):
            samples, cfg = random_instance(rng, seed=trial)
            model = fit(randomize(samples, cfg.sigma, cfg.seed), cfg)
            model.validate()
            l1 = sum(abs(g) for g in model.multipliers.gamma)
            assert l1 <= 2.0 + 1e-6


class TestThresholds:
    def test_zero_gamma_threshold_is_half(self):
        model = hand_model()
        assert threshold_shift(model, 0) == 0.0

    def test_frozen_two_group_shift(self):
        cfg = ProblemConfig(K=2, alpha=(0.8, 0.8), p=(0.5, 0.5), sigma=0.0, seed=0)
        model = hand_model(lam=(0.0, 0.0), gamma=(0.1, -0.1), cfg=cfg)
        assert threshold_shift(model, 0) == pytest.approx(0.1, abs=1e-15)
        assert threshold_shift(model, 1) == pytest.approx(-0.1, abs=1e-15)

    def test_strip_is_centered_on_shifted_threshold(self, rng):
        for trial in range(5):
            samples, cfg = random_instance(rng, seed=trial)
            model = fit(randomize(samples, cfg.sigma, cfg.seed), cfg)
            for s in range(cfg.K):
                lo, hi = reject_strip(model, s)
                center = 0.5 + threshold_shift(model, s)
                if hi > lo:
                    assert (lo + hi) / 2 == pytest.approx(center, abs=1e-12)

    def test_uniform_fit_strip_half_width(self):
        model = fit(uniform_samples(10_001), CFG1)
        lo, hi = reject_strip(model, 0)
        assert 0.09 <= (hi - lo) / 2 <= 0.11

    def test_group_out_of_range(self):
        model = hand_model()
        with pytest.raises(GroupOutOfRange):
            threshold_shift(model, 1)
        with pytest.raises(GroupOutOfRange):
            reject_strip(model, -1)


class TestPredict:
    def test_frozen_decisions(self):
        model = hand_model()  # strip [0.4, 0.6], threshold 1/2
        assert predict(model, 0.55, 0) is Decision.REJECT
        assert predict(model, 0.75, 0) is Decision.ONE
        assert predict(model, 0.05, 0) is Decision.ZERO

    def test_score_out_of_unit_interval_rejected(self):
        model = hand_model()
        with pytest.raises(ConfigError):
            predict(model, 1.5, 0)

    def test_batch_empty(self):
        assert predict_batch(hand_model(), []) == []

    def test_batch_matches_elementwise_with_shared_stream(self):
        cfg = ProblemConfig(K=1, alpha=(0.8,), p=(1.0,), sigma=1e-3, seed=21)
        model = hand_model(cfg=cfg)
        samples = uniform_samples(500)
        batch = predict_batch(model, samples, fresh_noise=True, seed=77)
        from abstainfair.rng import PREDICT_TAG

        u = block_uniforms(77, PREDICT_TAG, 0, len(samples))
        single = [
            predict(model, s.score, s.group, fresh_noise=True, rng=lambda i=i: float(u[i]))
            for i, s in enumerate(samples)
        ]
        assert batch == single

    def test_gauge_shift_leaves_decisions_unchanged(self):
        cfg = ProblemConfig(K=2, alpha=(0.8, 0.9), p=(0.3, 0.7), sigma=0.0, seed=0)
        m = Multipliers(lam=(-0.4, -0.2), gamma=(0.15, -0.05))
        c = 0.37
        shift = tuple(
            g + cfg.p[s] * cfg.alpha[s] / cfg.alpha_bar * c
            for s, g in enumerate(m.gamma)
        )
        a = FittedModel(multipliers=m, cfg=cfg)
        b = FittedModel(multipliers=Multipliers(lam=m.lam, gamma=shift), cfg=cfg)
        rng = np.random.default_rng(0)
        scores = rng.uniform(0, 1, 100_000)
        groups = rng.integers(0, 2, 100_000)
        samples = [
            ScoredSample(group=int(g), score=float(e)) for g, e in zip(scores, groups)
        ]
        da = predict_batch(a, samples, fresh_noise=False)
        db = predict_batch(b, samples, fresh_noise=False)
        assert da == db

    def test_batch_group_out_of_range(self):
        model = hand_model()
        with pytest.raises(GroupOutOfRange):
            predict_batch(model, [ScoredSample(group=2, score=0.5)])

    def test_fresh_noise_changes_boundary_scores_only(self):
        # with sigma large enough to matter, a score just inside the strip
        # edge flips under some noise draws but a score far away never does
        cfg = ProblemConfig(K=1, alpha=(0.8,), p=(1.0,), sigma=5e-2, seed=0)
        model = hand_model(cfg=cfg)
        near = [
            predict(model, 0.59, 0, rng=np.random.default_rng(k)) for k in range(200)
        ]
        far = [
            predict(model, 0.95, 0, rng=np.random.default_rng(k)) for k in range(200)
        ]
        assert len(set(near)) == 2  # Reject vs One, depending on the draw
        assert set(far) == {Decision.ONE}


class TestDecisionProbabilities:
    def test_point_mass_when_no_noise(self):
        model = hand_model()
        assert decision_probabilities(model, 0.55, 0) == (0.0, 0.0, 1.0)
        assert decision_probabilities(model, 0.75, 0) == (0.0, 1.0, 0.0)

    def test_sums_to_one_and_matches_monte_carlo(self):
        cfg = ProblemConfig(K=1, alpha=(0.8,), p=(1.0,), sigma=2e-2, seed=0)
        model = hand_model(cfg=cfg)
        gen = np.random.default_rng(123)
        for score in (0.39, 0.41, 0.585, 0.6, 0.61):
            p0, p1, pr = decision_probabilities(model, score, 0)
            assert p0 + p1 + pr == pytest.approx(1.0, abs=1e-12)
            draws = [
                predict(model, score, 0, rng=gen)
                for _ in range(4000)
            ]
            freq1 = sum(d is Decision.ONE for d in draws) / 4000
            freqr = sum(d is Decision.REJECT for d in draws) / 4000
            assert freq1 == pytest.approx(p1, abs=0.03)
            assert freqr == pytest.approx(pr, abs=0.03)

    def test_stale_noise_is_a_point_evaluation(self):
        cfg = ProblemConfig(K=1, alpha=(0.8,), p=(1.0,), sigma=2e-2, seed=0)
        model = hand_model(cfg=cfg)
        probs = decision_probabilities(model, 0.55, 0, fresh_noise=False)
        assert probs == (0.0, 0.0, 1.0)


class TestModelJson:
    def test_key_order_and_format(self):
        model = fit(uniform_samples(401), CFG1)
        text = model_to_json(model)
        keys = list(json.loads(text).keys())
        assert keys == [
            "lambda", "gamma", "p", "alpha", "sigma", "seed", "objective", "solver",
        ]
        assert text.endswith("\n")

    def test_round_trip_preserves_decisions(self):
        model = fit(uniform_samples(401), CFG1)
        back = model_from_json(model_to_json(model))
        assert back.multipliers == model.multipliers
        assert back.cfg.alpha == model.cfg.alpha
        assert back.cfg.p == model.cfg.p
        samples = uniform_samples(500)
        assert predict_batch(back, samples, fresh_noise=False) == predict_batch(
            model, samples, fresh_noise=False
        )

    def test_byte_stable(self):
        model = fit(uniform_samples(401), CFG1)
        assert model_to_json(model) == model_to_json(
            model_from_json(model_to_json(model))
        )

    @pytest.mark.parametrize(
        "text",
        [
            "{}",
            '{"lambda": [0.1]}',
            '{"lambda": [0], "gamma": [0], "p": [1], "alpha": [2], "sigma": 0, "seed": 0}',
            "not json",
        ],
    )
    def test_malformed_rejected(self, text):
        with pytest.raises(ConfigError):
            model_from_json(text)

    def test_save_load_files(self, tmp_path):
        model = fit(uniform_samples(101), CFG1)
        path = tmp_path / "model.json"
        save_model(model, path)
        again = load_model(path)
        assert again.multipliers == model.multipliers
