"""Post-process any scored binary classifier into an abstaining classifier
with group-wise accept-rate control and demographic parity.

Typical use::

    from abstainfair import ProblemConfig, fit, predict_batch, randomize

    cfg = ProblemConfig(K=2, alpha=(0.85, 0.85), sigma=1e-3, seed=0)
    model = fit(randomize(samples, cfg.sigma, cfg.seed), cfg)
    decisions = predict_batch(model, fresh_samples)
"""

from .core import (
    Decision,
    GuaranteeBounds,
    Multipliers,
    ProblemConfig,
    ScoredSample,
    guarantee_bounds,
    normalize_gauge,
    validate_config,
)
from .data import (
    BaseModel,
    ScoreFile,
    read_score_file,
    split_indices,
    split_samples,
    train_base,
    write_score_file,
)
from .dual import dual_gradient, dual_objective, g_value, grid_minimize
from .errors import (
    AbstainFairError,
    CertificateFailure,
    ConfigError,
    ConstraintWarning,
    EmptyPartition,
    GridTooCoarse,
    GroupOutOfRange,
    LengthMismatch,
    MissingGroup,
    NoLabelColumn,
    NonNumericFeature,
    NonUniformWeights,
    ScoreFileError,
    SolverFailure,
    ZeroMassEvent,
)
from .estimator import AbstainingClassifier
from .lp import SparseLP, assemble, extract
from .metrics import GroupMetrics, evaluate, guarantee_report, metrics_to_json
from .oracle import (
    DiscretePopulation,
    SyntheticGenerator,
    generate,
    oracle_solve,
    population_metrics,
)
from .postprocess import (
    FittedModel,
    decision_probabilities,
    fit,
    load_model,
    predict,
    predict_batch,
    randomize,
    reject_strip,
    save_model,
)
from .solver import LPSolution, SolveOptions, Status, check_certificate, solve

__version__ = "0.1.0"

__all__ = [
    "AbstainFairError",
    "AbstainingClassifier",
    "BaseModel",
    "CertificateFailure",
    "ConfigError",
    "ConstraintWarning",
    "Decision",
    "DiscretePopulation",
    "EmptyPartition",
    "FittedModel",
    "GridTooCoarse",
    "GroupMetrics",
    "GroupOutOfRange",
    "GuaranteeBounds",
    "LPSolution",
    "LengthMismatch",
    "MissingGroup",
    "Multipliers",
    "NoLabelColumn",
    "NonNumericFeature",
    "NonUniformWeights",
    "ProblemConfig",
    "ScoreFile",
    "ScoreFileError",
    "ScoredSample",
    "SolveOptions",
    "SolverFailure",
    "SparseLP",
    "Status",
    "SyntheticGenerator",
    "ZeroMassEvent",
    "assemble",
    "check_certificate",
    "decision_probabilities",
    "dual_gradient",
    "dual_objective",
    "evaluate",
    "extract",
    "fit",
    "g_value",
    "generate",
    "grid_minimize",
    "guarantee_bounds",
    "guarantee_report",
    "load_model",
    "metrics_to_json",
    "normalize_gauge",
    "oracle_solve",
    "population_metrics",
    "predict",
    "predict_batch",
    "randomize",
    "read_score_file",
    "reject_strip",
    "save_model",
    "solve",
    "split_indices",
    "split_samples",
    "train_base",
    "validate_config",
    "write_score_file",
]
