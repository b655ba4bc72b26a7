"""Command-line surface.

Exit codes: 0 success, 1 validation/usage error, 2 solver failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np

from .core import ProblemConfig, ScoredSample, dumps_17g, guarantee_bounds
from .data import (
    base_model_from_json,
    base_model_to_json,
    read_decisions,
    read_feature_file,
    read_score_file,
    require_labels,
    train_base,
    write_decisions,
    write_score_file,
)
from .errors import (
    AbstainFairError,
    CertificateFailure,
    ConfigError,
    LengthMismatch,
    SolverFailure,
)
from .metrics import evaluate as evaluate_metrics
from .metrics import guarantee_report, metrics_to_json, sweep_header, sweep_row
from .oracle import SyntheticGenerator, generate, oracle_solve, population_from_csv
from .postprocess import fit, load_model, predict_batch, randomize, save_model

THREADS_VAR = "ABSTAINFAIR_THREADS"


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the contract here is exit 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _log(args, event: str, **kv) -> None:
    if getattr(args, "json_logs", False):
        print(dumps_17g({"event": event, **kv}), file=sys.stderr)
    else:
        detail = " ".join(f"{k}={v}" for k, v in kv.items())
        print(f"{event} {detail}".rstrip(), file=sys.stderr)


def _parse_floats(text: str, flag: str) -> tuple:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise ConfigError(f"{flag}: expected comma-separated numbers, got {text!r}") from None


def _resolve_alpha(args, K: int) -> tuple:
    if args.alpha is not None:
        alpha = _parse_floats(args.alpha, "--alpha")
        if len(alpha) != K:
            raise ConfigError(f"--alpha: expected {K} values, got {len(alpha)}")
        return alpha
    return (float(args.alpha_shared),) * K


def _cmd_train_base(args) -> int:
    ids, groups, X, labels, names = read_feature_file(args.features, args.zero_indexed)
    labels = require_labels(labels)
    model = train_base(X, labels, feature_names=names)
    with open(args.output, "w", encoding="utf-8") as fh:
        fh.write(base_model_to_json(model))
    _log(args, "trained", rows=len(ids), features=len(names), output=args.output)
    return 0


def _cmd_score(args) -> int:
    with open(args.model, "r", encoding="utf-8") as fh:
        model = base_model_from_json(fh.read())
    ids, groups, X, labels, names = read_feature_file(args.features, args.zero_indexed)
    if tuple(names) != model.feature_names:
        raise ConfigError(
            f"feature columns {names} do not match the model's {list(model.feature_names)}"
        )
    scores = model.scores(X)
    samples = [
        ScoredSample(group=int(g), score=float(e), label=None if labels is None else int(y))
        for g, e, y in zip(groups, scores, labels if labels is not None else np.zeros(len(ids)))
    ]
    write_score_file(args.output, ids, samples, base=0 if args.zero_indexed else 1)
    _log(args, "scored", rows=len(ids), output=args.output)
    return 0


def _cmd_postprocess(args) -> int:
    sf = read_score_file(args.scores, args.zero_indexed)
    alpha = _resolve_alpha(args, sf.K)
    p = None if args.p is None else _parse_floats(args.p, "--p")
    cfg = ProblemConfig(
        K=sf.K, alpha=alpha, p=p, sigma=args.sigma, delta=args.delta, seed=args.seed
    )
    samples = randomize(sf.samples, cfg.sigma, cfg.seed)
    model = fit(samples, cfg, method=args.method)
    save_model(model, args.output)
    _log(
        args,
        "fitted",
        objective=model.provenance["objective"],
        solver=model.provenance["solver"],
        output=args.output,
    )
    return 0


def _cmd_predict(args) -> int:
    model = load_model(args.model)
    sf = read_score_file(args.scores, args.zero_indexed)
    decisions = predict_batch(model, list(sf.samples), fresh_noise=not args.no_fresh_noise)
    write_decisions(
        args.output, sf.ids, [s.group for s in sf.samples], decisions, base=sf.base
    )
    _log(args, "predicted", rows=len(decisions), output=args.output)
    return 0


def _cmd_evaluate(args) -> int:
    ids_d, groups_d, decisions = read_decisions(args.decisions, args.zero_indexed)
    sf = read_score_file(args.scores, args.zero_indexed)
    if list(ids_d) != list(sf.ids):
        raise LengthMismatch("decision ids do not match score-file ids (same order required)")
    if not sf.has_labels:
        raise ConfigError("evaluate needs a score file with labels")
    pairs = [(s.group, s.label) for s in sf.samples]
    metrics = evaluate_metrics(decisions, pairs, K=sf.K)
    bounds = report = None
    if args.model is not None:
        model = load_model(args.model)
        if model.cfg.K != sf.K:
            raise ConfigError(f"model has K={model.cfg.K}, data has K={sf.K}")
        cfg = replace(model.cfg, delta=args.delta) if args.delta is not None else model.cfg
        sizes = [c.size for c in metrics.counts]
        bounds = guarantee_bounds(cfg, sizes)
        report = guarantee_report(metrics, bounds, cfg.alpha)
    with open(args.output, "w", encoding="utf-8") as fh:
        fh.write(metrics_to_json(metrics, bounds, report))
    _log(args, "evaluated", rows=len(decisions), output=args.output)
    return 0


def _parse_grid(text: str) -> np.ndarray:
    parts = text.split(":")
    if len(parts) != 3:
        raise ConfigError(f"--alpha-grid: expected lo:hi:count, got {text!r}")
    try:
        lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise ConfigError(f"--alpha-grid: expected lo:hi:count, got {text!r}") from None
    if count < 1:
        raise ConfigError(f"--alpha-grid: count must be >= 1, got {count}")
    return np.linspace(lo, hi, count)


def _cmd_sweep(args) -> int:
    sf = read_score_file(args.scores, args.zero_indexed)
    eval_sf = sf if args.test is None else read_score_file(args.test, args.zero_indexed)
    if not eval_sf.has_labels:
        raise ConfigError("sweep needs labels on the evaluation file")
    grid = _parse_grid(args.alpha_grid)
    p = None if args.p is None else _parse_floats(args.p, "--p")

    def one(alpha: float):
        cfg = ProblemConfig(
            K=sf.K,
            alpha=(float(alpha),) * sf.K,
            p=p,
            sigma=args.sigma,
            delta=args.delta,
            seed=args.seed,
        )
        model = fit(randomize(sf.samples, cfg.sigma, cfg.seed), cfg, method=args.method)
        decisions = predict_batch(model, list(eval_sf.samples), fresh_noise=True)
        pairs = [(s.group, s.label) for s in eval_sf.samples]
        return evaluate_metrics(decisions, pairs, K=sf.K)

    workers = max(1, int(os.environ.get(THREADS_VAR, "1")))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, grid))
    else:
        results = [one(a) for a in grid]
    lines = [",".join(sweep_header(sf.K))]
    for alpha, metrics in zip(grid, results):
        lines.append(",".join(sweep_row(float(alpha), metrics)))
        _log(args, "sweep-point", alpha=float(alpha))
    with open(args.output, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")
    _log(args, "swept", points=len(grid), output=args.output)
    return 0


def _cmd_oracle(args) -> int:
    with open(args.population, "r", encoding="utf-8") as fh:
        pop = population_from_csv(fh.read(), args.zero_indexed)
    if args.alpha is not None:
        alpha = _parse_floats(args.alpha, "--alpha")
        if len(alpha) != pop.K:
            raise ConfigError(f"--alpha: expected {pop.K} values, got {len(alpha)}")
    else:
        alpha = (float(args.alpha_shared),) * pop.K
    sol = oracle_solve(pop, alpha)
    base = 0 if args.zero_indexed else 1
    payload = {
        "risk": sol.risk,
        "pos_rate": sol.pos_rate,
        "alpha": list(alpha),
        "table": [
            {
                "group": pop.groups[i] + base,
                "eta": pop.etas[i],
                "mass": pop.masses[i],
                "q0": float(sol.table[i, 0]),
                "q1": float(sol.table[i, 1]),
                "qr": float(sol.table[i, 2]),
            }
            for i in range(pop.n_atoms)
        ],
    }
    with open(args.output, "w", encoding="utf-8") as fh:
        fh.write(dumps_17g(payload) + "\n")
    _log(args, "oracle", risk=sol.risk, output=args.output)
    return 0


def _cmd_synth(args) -> int:
    gen = SyntheticGenerator(family=args.family, seed=args.seed, bias=args.bias)
    data = generate(gen, args.n, args.n_test)
    os.makedirs(args.output, exist_ok=True)
    base = 0 if args.zero_indexed else 1
    u_path = os.path.join(args.output, "unlabeled.csv")
    t_path = os.path.join(args.output, "test.csv")
    write_score_file(u_path, [f"u{i + 1}" for i in range(len(data.unlabeled))], data.unlabeled, base=base)
    write_score_file(t_path, [f"t{i + 1}" for i in range(len(data.test))], data.test, base=base)
    _log(args, "generated", unlabeled=u_path, test=t_path, l1_misspec=data.l1_misspec)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="abstainfair", description=__doc__)
    parser.add_argument("--json-logs", action="store_true", help="machine-readable progress on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, output=True):
        p.add_argument("--zero-indexed", action="store_true", help="groups start at 0 on disk")
        if output:
            p.add_argument("-o", "--output", required=True)

    p = sub.add_parser("train-base", help="fit the built-in logistic scorer")
    p.add_argument("features")
    common(p)
    p.set_defaults(func=_cmd_train_base)

    p = sub.add_parser("score", help="apply a base model to features")
    p.add_argument("model")
    p.add_argument("features")
    common(p)
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("postprocess", help="fit abstention multipliers on scores")
    p.add_argument("scores")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--alpha", help="per-group accept rates a1,...,aK")
    g.add_argument("--alpha-shared", type=float, help="one accept rate for all groups")
    p.add_argument("--p", help="group weights p1,...,pK (default: estimated)")
    p.add_argument("--sigma", type=float, default=1e-3)
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--method", choices=("lp", "grid"), default="lp")
    common(p)
    p.set_defaults(func=_cmd_postprocess)

    p = sub.add_parser("predict", help="classify a score file with a fitted model")
    p.add_argument("model")
    p.add_argument("scores")
    p.add_argument("--no-fresh-noise", action="store_true")
    common(p)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("evaluate", help="group metrics of decisions against labels")
    p.add_argument("decisions")
    p.add_argument("scores")
    p.add_argument("--model", help="fitted model JSON; adds guarantee bounds")
    p.add_argument("--delta", type=float, default=None, help="override the bound confidence")
    common(p)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("sweep", help="refit across an accept-rate grid")
    p.add_argument("scores")
    p.add_argument("--alpha-grid", default="0.8:0.99:20", help="lo:hi:count")
    p.add_argument("--test", help="separate evaluation score file")
    p.add_argument("--p", help="group weights p1,...,pK")
    p.add_argument("--sigma", type=float, default=1e-3)
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--method", choices=("lp", "grid"), default="lp")
    common(p)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("oracle", help="exact population optimum for a discrete table")
    p.add_argument("population")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--alpha", help="per-group accept rates a1,...,aK")
    g.add_argument("--alpha-shared", type=float)
    common(p)
    p.set_defaults(func=_cmd_oracle)

    p = sub.add_parser("synth", help="generate synthetic score files")
    p.add_argument("--family", choices=("uniform", "logistic2"), required=True)
    p.add_argument("--n", type=int, required=True, help="unlabeled samples per group")
    p.add_argument("--n-test", type=int, default=None, help="test samples per group")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--bias", type=float, default=0.0, help="score misspecification shift")
    common(p)
    p.set_defaults(func=_cmd_synth)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (SolverFailure, CertificateFailure) as exc:
        print(f"abstainfair: solver failure: {exc}", file=sys.stderr)
        return 2
    except AbstainFairError as exc:
        print(f"abstainfair: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"abstainfair: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
