"""File formats, the train/unlabeled/test split, and a built-in base scorer.

Score files are CSV with header ``id,group,score[,label]``; groups are
1-indexed on disk by default (0-indexed with a flag) and always 0-indexed in
memory.  Decisions serialize as "0"/"1"/"r".
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import Decision, ScoredSample, dumps_17g
from .errors import (
    ConfigError,
    EmptyPartition,
    NoLabelColumn,
    NonNumericFeature,
    ScoreFileError,
)
from .rng import SPLIT_TAG, sequential


@dataclass(frozen=True)
class ScoreFile:
    """Parsed score CSV: row ids, samples (groups 0-indexed), disk group base."""

    ids: tuple
    samples: tuple  # ScoredSample per row
    base: int  # 0 or 1: what group index 0 is written as on disk

    @property
    def K(self) -> int:
        return max(s.group for s in self.samples) + 1 if self.samples else 0

    @property
    def has_labels(self) -> bool:
        return bool(self.samples) and all(s.label is not None for s in self.samples)


def _parse_score(value: str, row: int) -> float:
    try:
        x = float(value)
    except ValueError as exc:
        raise ScoreFileError(f"score {value!r} is not a number", row=row) from exc
    if not math.isfinite(x) or not 0.0 <= x <= 1.0:
        raise ScoreFileError(f"score {x} outside [0, 1]", row=row)
    return x


def read_score_file(path, zero_indexed: bool = False) -> ScoreFile:
    """Parse a score CSV; raises ScoreFileError with the offending 1-based row."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ScoreFileError("empty file", row=1) from None
    header = [h.strip().lower() for h in header]
    expected = ["id", "group", "score"]
    if header[: len(expected)] != expected or header not in (expected, expected + ["label"]):
        raise ScoreFileError(f"expected header id,group,score[,label], got {','.join(header)}", row=1)
    with_label = header == expected + ["label"]
    base = 0 if zero_indexed else 1

    ids, samples = [], []
    for r, row in enumerate(reader, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != len(header):
            raise ScoreFileError(f"expected {len(header)} fields, got {len(row)}", row=r)
        try:
            group = int(row[1])
        except ValueError as exc:
            raise ScoreFileError(f"group {row[1]!r} is not an integer", row=r) from exc
        score = _parse_score(row[2], r)
        label: Optional[int] = None
        if with_label and row[3].strip() != "":
            if row[3].strip() not in ("0", "1"):
                raise ScoreFileError(f"label {row[3]!r} is not 0/1", row=r)
            label = int(row[3])
        if group - base < 0:
            raise ScoreFileError(f"group {group} below the base index {base}", row=r)
        ids.append(row[0])
        samples.append(ScoredSample(group=group - base, score=score, label=label))
    groups = sorted({s.group for s in samples})
    if groups and groups != list(range(groups[-1] + 1)):
        missing = next(i for i in range(groups[-1] + 1) if i not in groups)
        raise ScoreFileError(
            f"groups must form a contiguous range starting at {base}; {missing + base} is missing"
        )
    if not samples:
        raise ScoreFileError("no data rows", row=1)
    return ScoreFile(ids=tuple(ids), samples=tuple(samples), base=base)


def write_score_file(path, ids, samples: Sequence[ScoredSample], base: int = 1) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        with_label = all(s.label is not None for s in samples) and len(samples) > 0
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "group", "score"] + (["label"] if with_label else []))
        for i, s in zip(ids, samples):
            row = [i, s.group + base, format(s.score, ".17g")]
            if with_label:
                row.append(s.label)
            w.writerow(row)


def write_decisions(path, ids, groups, decisions: Sequence[Decision], base: int = 1) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "group", "decision"])
        for i, g, d in zip(ids, groups, decisions):
            w.writerow([i, g + base, d.label])


def read_decisions(path, zero_indexed: bool = False):
    """-> (ids, groups 0-indexed, decisions)."""
    base = 0 if zero_indexed else 1
    with open(path, "r", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != ["id", "group", "decision"]:
            raise ScoreFileError("expected header id,group,decision", row=1)
        ids, groups, decisions = [], [], []
        for r, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise ScoreFileError(f"expected 3 fields, got {len(row)}", row=r)
            try:
                groups.append(int(row[1]) - base)
            except ValueError as exc:
                raise ScoreFileError(f"group {row[1]!r} is not an integer", row=r) from exc
            if row[2] not in ("0", "1", "r"):
                raise ScoreFileError(f"decision {row[2]!r} not in 0/1/r", row=r)
            ids.append(row[0])
            decisions.append(Decision.from_label(row[2]))
    return ids, groups, decisions


# --- split --------------------------------------------------------------------


def split_indices(groups, fractions=(0.6, 0.2, 0.2), seed: int = 0):
    """Stratified-by-group shuffle split into len(fractions) parts.

    Returns index arrays, one per part; every group must be represented in
    every part or EmptyPartition is raised.
    """
    if abs(math.fsum(fractions) - 1.0) > 1e-9:
        raise ConfigError(f"fractions sum to {math.fsum(fractions)}, expected 1")
    groups = np.asarray(groups, dtype=np.int64)
    n = len(groups)
    perm = sequential(seed, SPLIT_TAG).permutation(n)
    parts = [[] for _ in fractions]
    for s in np.unique(groups):
        order = perm[groups[perm] == s]
        n_s = len(order)
        cuts = [int(round(n_s * math.fsum(fractions[: j + 1]))) for j in range(len(fractions))]
        start = 0
        for j, stop in enumerate(cuts):
            parts[j].extend(order[start:stop].tolist())
            start = stop
    out = []
    for j, part in enumerate(parts):
        if len(part) == 0 or len(np.unique(groups[np.asarray(part, dtype=np.int64)])) != len(
            np.unique(groups)
        ):
            raise EmptyPartition(f"part {j} lost a group; resplit with more data")
        out.append(np.sort(np.asarray(part, dtype=np.int64)))
    return tuple(out)


def split_samples(samples: Sequence[ScoredSample], fractions=(0.6, 0.2, 0.2), seed: int = 0):
    """(train, unlabeled, test) sample lists; labels stripped from part 2."""
    idx = split_indices([s.group for s in samples], fractions, seed)
    train = [samples[i] for i in idx[0]]
    unlabeled = [
        ScoredSample(group=samples[i].group, score=samples[i].score) for i in idx[1]
    ]
    test = [samples[i] for i in idx[2]]
    return train, unlabeled, test


# --- base scorer ----------------------------------------------------------------


@dataclass(frozen=True)
class BaseModel:
    """Logistic scorer over standardized numeric features."""

    weights: tuple
    bias: float
    mean: tuple
    std: tuple
    feature_names: tuple

    def scores(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != len(self.weights):
            raise ConfigError(
                f"X must be (n, {len(self.weights)}), got {X.shape}"
            )
        z = (X - np.asarray(self.mean)) / np.asarray(self.std)
        raw = 1.0 / (1.0 + np.exp(-(z @ np.asarray(self.weights) + self.bias)))
        return np.clip(raw, 0.0, 1.0)


def train_base(
    X,
    y,
    feature_names: Optional[Sequence[str]] = None,
    l2: float = 1e-4,
    max_iter: int = 10_000,
    tol: float = 1e-6,
) -> BaseModel:
    """Full-batch gradient descent on L2-regularized logistic loss.

    Deterministic (zero init, fixed step from the curvature bound); stops when
    the gradient norm drops below ``tol`` or after ``max_iter`` steps.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2:
        X = X.reshape(len(y), -1)
    n, d = X.shape
    if len(y) != n:
        raise ConfigError(f"{n} rows but {len(y)} labels")
    mean = X.mean(axis=0) if d else np.zeros(0)
    std = X.std(axis=0) if d else np.zeros(0)
    std = np.where(std > 0, std, 1.0)
    Z = (X - mean) / std if d else X

    w = np.zeros(d)
    b = 0.0
    # Lipschitz constant of the gradient: ||Z'||^2/(4n) + l2, with the bias
    # column contributing 1 to the row norm.
    row_sq = (Z * Z).sum(axis=1) + 1.0
    lip = float(row_sq.sum()) / (4.0 * n) + l2
    step = 1.0 / lip
    for _ in range(max_iter):
        p = 1.0 / (1.0 + np.exp(-(Z @ w + b)))
        resid = p - y
        grad_w = Z.T @ resid / n + l2 * w
        grad_b = float(resid.mean())
        norm = math.hypot(float(np.linalg.norm(grad_w)), grad_b)
        if norm < tol:
            break
        w -= step * grad_w
        b -= step * grad_b
    names = tuple(feature_names) if feature_names is not None else tuple(
        f"x{j}" for j in range(d)
    )
    return BaseModel(
        weights=tuple(w), bias=b, mean=tuple(mean), std=tuple(std), feature_names=names
    )


def base_model_to_json(model: BaseModel) -> str:
    return (
        dumps_17g(
            {
                "weights": list(model.weights),
                "bias": model.bias,
                "mean": list(model.mean),
                "std": list(model.std),
                "features": list(model.feature_names),
            }
        )
        + "\n"
    )


def base_model_from_json(text: str) -> BaseModel:
    try:
        raw = json.loads(text)
        return BaseModel(
            weights=tuple(float(v) for v in raw["weights"]),
            bias=float(raw["bias"]),
            mean=tuple(float(v) for v in raw["mean"]),
            std=tuple(float(v) for v in raw["std"]),
            feature_names=tuple(str(v) for v in raw["features"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed base-model file: {exc}") from exc


def read_feature_file(path, zero_indexed: bool = False):
    """Parse a feature CSV: id, group, numeric features..., label.

    -> (ids, groups 0-indexed, X, labels-or-None, feature names).
    """
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None:
        raise ScoreFileError("empty file", row=1)
    header = [h.strip() for h in header]
    lower = [h.lower() for h in header]
    if lower[:2] != ["id", "group"]:
        raise ScoreFileError(f"expected columns id,group,..., got {','.join(header)}", row=1)
    has_label = "label" in lower
    label_col = lower.index("label") if has_label else -1
    feature_cols = [
        j for j in range(2, len(header)) if j != label_col
    ]
    base = 0 if zero_indexed else 1

    ids, groups, rows, labels = [], [], [], []
    for r, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise ScoreFileError(f"expected {len(header)} fields, got {len(row)}", row=r)
        ids.append(row[0])
        try:
            groups.append(int(row[1]) - base)
        except ValueError as exc:
            raise ScoreFileError(f"group {row[1]!r} is not an integer", row=r) from exc
        feats = []
        for j in feature_cols:
            try:
                v = float(row[j])
            except ValueError as exc:
                raise NonNumericFeature(
                    f"row {r}: feature {header[j]!r} value {row[j]!r} is not numeric"
                ) from exc
            if not math.isfinite(v):
                raise NonNumericFeature(f"row {r}: feature {header[j]!r} is not finite")
            feats.append(v)
        rows.append(feats)
        if has_label:
            if row[label_col] not in ("0", "1"):
                raise ScoreFileError(f"label {row[label_col]!r} is not 0/1", row=r)
            labels.append(int(row[label_col]))
    X = np.asarray(rows, dtype=np.float64)
    return (
        ids,
        np.asarray(groups, dtype=np.int64),
        X,
        np.asarray(labels, dtype=np.int64) if has_label else None,
        [header[j] for j in feature_cols],
    )


def require_labels(labels, what: str = "training"):
    if labels is None:
        raise NoLabelColumn(f"{what} data has no label column")
    return labels
