"""scikit-learn style wrapper around the post-processing pipeline.

``AbstainingClassifier`` consumes a two-column array ``X = [score, group]``
(the output of any base probability estimator plus the sensitive attribute)
and predicts in ``{0, 1, -1}`` where ``-1`` means "abstain".
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .core import ProblemConfig, ScoredSample
from .postprocess import FittedModel, fit, predict_batch, randomize


class AbstainingClassifier(BaseEstimator):
    """Post-processes scores into an abstaining group-fair classifier.

    Parameters mirror ProblemConfig: ``alpha`` is the per-group accept rate
    (a scalar is broadcast to all groups), ``p`` optional group weights
    (estimated from the data when None), ``sigma`` the tie-breaking noise
    level, ``seed`` the RNG seed, and ``method`` the solver route
    ("lp" or "grid").
    """

    def __init__(
        self,
        alpha=0.9,
        p=None,
        sigma: float = 1e-3,
        delta: float = 0.05,
        seed: int = 0,
        method: str = "lp",
        fresh_noise: bool = True,
    ):
        self.alpha = alpha
        self.p = p
        self.sigma = sigma
        self.delta = delta
        self.seed = seed
        self.method = method
        self.fresh_noise = fresh_noise

    def _split_X(self, X) -> tuple[np.ndarray, np.ndarray]:
        # sklearn convention: malformed X is a ValueError, not a library error
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != 2:
            raise ValueError(f"X must be (n, 2) = [score, group], got shape {X.shape}")
        groups = X[:, 1]
        if not np.all(groups == np.round(groups)):
            raise ValueError("group column must be integral")
        return X[:, 0], groups.astype(np.int64)

    def fit(self, X, y=None) -> "AbstainingClassifier":
        """Fit multipliers on scores X[:, 0] with groups X[:, 1]; y is unused."""
        scores, groups = self._split_X(X)
        K = int(groups.max()) + 1 if len(groups) else 0
        alpha = self.alpha
        if np.isscalar(alpha):
            alpha = (float(alpha),) * K
        cfg = ProblemConfig(
            K=K,
            alpha=tuple(alpha),
            p=None if self.p is None else tuple(self.p),
            sigma=self.sigma,
            delta=self.delta,
            seed=self.seed,
        )
        samples = [ScoredSample(group=int(s), score=float(e)) for e, s in zip(scores, groups)]
        samples = randomize(samples, cfg.sigma, cfg.seed)
        self.model_: FittedModel = fit(samples, cfg, method=self.method)
        self.n_features_in_ = 2
        return self

    def predict(self, X) -> np.ndarray:
        """Decisions in {0, 1, -1}; -1 denotes abstention."""
        check_is_fitted(self, "model_")
        scores, groups = self._split_X(X)
        samples = [ScoredSample(group=int(s), score=float(e)) for e, s in zip(scores, groups)]
        decisions = predict_batch(self.model_, samples, fresh_noise=self.fresh_noise)
        return np.array([int(d) for d in decisions], dtype=np.int64)
