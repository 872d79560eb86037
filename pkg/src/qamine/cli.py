"""Command-line entry point: ``qamine <subcommand> ...``.

Each subcommand is one file-to-file stage. ``pipeline`` runs every stage on
simulated data and writes the same artifacts the individual subcommands
would. Failures exit with status 1 and a single ``qamine <stage>: <Code>:
<message>`` line on stderr.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import io, qa
from .config import default_config_path, dumps_config, load_config
from .errors import DegenerateLabels, EmptyDataset, QamineError
from .features import FEATURE_NAMES, AggregationConfig, BehaviorFeatures, aggregate, feature_matrix
from .feedback import (
    FeedbackModel,
    dumps_model,
    extract_rules,
    feature_importance,
    loads_model,
    predict,
    split_indices,
    train_named,
)
from .metrics import evaluate_scores, pr_curve
from .pipeline import PipelineConfig, PipelineResult, run_pipeline
from .session import TerminalClickPolicy, impressions_from_lines
from .simulator import gen_gold_labels, gen_pairs, iter_session_lines
from .weak import WeakLabelConfig, weak_label


# -- shared stage writers ------------------------------------------------------


def write_features(path, feats: Sequence[BehaviorFeatures], head: list[str]) -> None:
    io.write_lines(path, head, io.feature_lines(feats))


def write_feedback_model(path, model: FeedbackModel, head: list[str]) -> None:
    io.write_json(path, head, dumps_model(model))


def read_feedback_model(path) -> FeedbackModel:
    return loads_model(io.read_text_body(path))


def write_qa_model(path, model: qa.RelevanceModel, head: list[str]) -> None:
    io.write_json(path, head, qa.dumps_model(model))


def read_qa_model(path) -> qa.RelevanceModel:
    return qa.loads_model(io.read_text_body(path))


def join_gold(feats: Sequence[BehaviorFeatures], gold: dict[str, bool]) -> tuple[list[BehaviorFeatures], np.ndarray]:
    rows = [f for f in feats if f.qp_id in gold]
    return rows, np.array([gold[f.qp_id] for f in rows], dtype=bool)


def feedback_report(model: FeedbackModel, X: np.ndarray, y: np.ndarray, parts: dict[str, np.ndarray]) -> list[str]:
    lines = ["#split\tauc\tacc\tf1\tn"]
    for name, idx in parts.items():
        if idx.size == 0 or y[idx].all() or not y[idx].any():
            lines.append(f"{name}\tnan\tnan\tnan\t{idx.size}")
            continue
        m = evaluate_scores(model.predict_proba(X[idx]), y[idx])
        lines.append(f"{name}\t{m['auc']!r}\t{m['acc']!r}\t{m['f1']!r}\t{idx.size}")
    return lines


def train_feedback_rows(feats, y, kind: str, seed: int):
    """Seeded 7:1:1 split, fit on the first part. Returns model, X, split dict."""
    if y.size == 0:
        raise EmptyDataset("no feature rows have a gold label")
    if y.all() or not y.any():
        raise DegenerateLabels("gold labels contain a single class")
    X = feature_matrix(feats)
    train, dev, test = split_indices(len(feats), seed)
    model = train_named(kind, X[train], y[train], seed=seed)
    return model, X, {"train": train, "dev": dev, "test": test}


def weak_outputs(model: FeedbackModel, feats, cfg: WeakLabelConfig, max_labels: int | None):
    scores = predict(model, feats) if feats else np.zeros(0)
    res = weak_label(zip((f.qp_id for f in feats), np.asarray(scores).tolist()), cfg)
    labels = res.labels if max_labels is None else res.labels[:max_labels]
    return labels, res.discarded


def labeled_pairs(labels, pairs_by_id: dict[str, qa.QAPair], soft: bool):
    missing = [w.qp_id for w in labels if w.qp_id not in pairs_by_id]
    if missing:
        raise QamineError(f"{len(missing)} labelled pairs have no text, first {missing[0]!r}")
    out = [replace(pairs_by_id[w.qp_id], label=w.label) for w in labels]
    return out, ([w.score for w in labels] if soft else None)


def qa_train_config(base: qa.TrainConfig, args) -> qa.TrainConfig:
    over = {}
    for name, attr in (("epochs", "epochs"), ("lr", "learning_rate"), ("l2", "l2"), ("batch_size", "batch_size"), ("seed", "seed")):
        value = getattr(args, name, None)
        if value is not None:
            over[attr] = value
    if args.loss is not None:
        over["loss"] = qa.Loss(args.loss)
    return replace(base, **over)


# -- subcommands -----------------------------------------------------------------


def cmd_simulate(args) -> None:
    base = load_config(args.config) if args.config else PipelineConfig()
    seed = args.seed if args.seed is not None else base.seed
    sim = replace(base.sim, n_pairs=args.n_pairs, seed=seed)
    pairs = gen_pairs(sim, start=args.start)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    head = io.header("simulate", seed, start=args.start, n_pairs=args.n_pairs)
    io.write_lines(out / "log.jsonl", head, iter_session_lines(pairs, sim))
    io.write_lines(out / "truth.tsv", head, io.label_lines("truth", ((sp.pair.qp_id, sp.truth) for sp in pairs)))
    gold = gen_gold_labels(pairs, sim)
    io.write_lines(out / "gold.tsv", head, io.label_lines("gold", gold))
    labelled = qa.with_labels([sp.pair for sp in pairs], [g for _, g in gold])
    io.write_lines(out / "pairs.tsv", head, io.pair_lines(labelled))


def _log_lines(path):
    # header lines become blanks so reported line numbers match the file
    with open(path, encoding="utf-8") as fh:
        in_header = True
        for raw in fh:
            if in_header and raw.startswith("#"):
                yield ""
                continue
            in_header = False
            yield raw


def cmd_aggregate(args) -> None:
    cfg = AggregationConfig(sat_threshold_ms=args.sat_ms, min_impressions=args.min_impressions)
    policy = TerminalClickPolicy(args.terminal_click_policy)
    imps = impressions_from_lines(_log_lines(args.log), cfg.sat_threshold_ms, policy)
    res = aggregate(imps, cfg)
    head = io.header(
        "aggregate",
        inputs={"log": io.file_digest(args.log)},
        sat_ms=cfg.sat_threshold_ms,
        min_impressions=cfg.min_impressions,
        terminal_click_policy=policy.value,
        dropped=res.n_dropped,
    )
    write_features(args.out, io.round_features(res.features), head)


def cmd_train_feedback(args) -> None:
    feats, y = join_gold(io.read_features(args.features), io.read_labels(args.gold))
    model, X, parts = train_feedback_rows(feats, y, args.model, args.seed)
    inputs = {"features": io.file_digest(args.features), "gold": io.file_digest(args.gold)}
    write_feedback_model(args.out, model, io.header("train-feedback", args.seed, inputs, model=args.model))
    report = feedback_report(model, X, y, parts)
    if args.report:
        io.write_lines(args.report, io.header("train-feedback", args.seed, inputs, model=args.model), report)
    else:
        print("\n".join(report))


def _scored_rows(args):
    model = read_feedback_model(args.model)
    feats, y = join_gold(io.read_features(args.features), io.read_labels(args.gold))
    if not feats:
        raise EmptyDataset("no feature rows have a gold label")
    scores = predict(model, feats)
    inputs = {"model": io.file_digest(args.model), "features": io.file_digest(args.features), "gold": io.file_digest(args.gold)}
    return np.asarray(scores), y, inputs


def _emit(args, stage: str, head: list[str], body: list[str]) -> None:
    if getattr(args, "out", None):
        io.write_lines(args.out, head, body)
    else:
        print("\n".join(body))


def cmd_eval_feedback(args) -> None:
    scores, y, inputs = _scored_rows(args)
    m = evaluate_scores(scores, y, args.threshold)
    body = list(io.kv_lines([("auc", m["auc"]), ("acc", m["acc"]), ("f1", m["f1"]), ("n", int(y.size))]))
    _emit(args, "eval-feedback", io.header("eval-feedback", inputs=inputs), body)


def cmd_pr_curve(args) -> None:
    scores, y, inputs = _scored_rows(args)
    body = ["#threshold\tprecision\trecall"]
    body += [f"{p.threshold!r}\t{p.precision!r}\t{p.recall!r}" for p in pr_curve(scores, y)]
    _emit(args, "pr-curve", io.header("pr-curve", inputs=inputs), body)


def cmd_importance(args) -> None:
    model = read_feedback_model(args.model)
    ranked = feature_importance(model)
    names = FEATURE_NAMES if len(ranked) == len(FEATURE_NAMES) else [str(i) for i in range(len(ranked))]
    body = ["#rank\tfeature_index\tfeature\tweight"]
    body += [f"{r}\t{i}\t{names[i]}\t{w!r}" for r, (i, w) in enumerate(ranked, start=1)]
    _emit(args, "importance", io.header("importance", inputs={"model": io.file_digest(args.model)}), body)


def cmd_rules(args) -> None:
    model = read_feedback_model(args.model)
    body = extract_rules(model, args.min_purity)
    _emit(args, "rules", io.header("rules", inputs={"model": io.file_digest(args.model)}), body)


def cmd_weak_label(args) -> None:
    cfg = WeakLabelConfig(args.tau_high, args.tau_low, not args.no_balance, args.seed)
    model = read_feedback_model(args.model)
    feats = io.read_features(args.features)
    labels, discarded = weak_outputs(model, feats, cfg, args.max_labels)
    inputs = {"model": io.file_digest(args.model), "features": io.file_digest(args.features)}
    extra = {"tau_high": cfg.tau_high, "tau_low": cfg.tau_low, "balance": cfg.balance}
    io.write_lines(args.out, io.header("weak-label", cfg.seed, inputs, **extra), io.weak_lines(labels))
    sidecar = args.discarded or f"{args.out}.discarded.tsv"
    io.write_lines(sidecar, io.header("weak-label", cfg.seed, inputs, **extra), io.score_lines(discarded))
    if args.pairs:
        if not args.pairs_out:
            raise QamineError("--pairs needs --pairs-out")
        text, _ = io.read_pairs(args.pairs)
        out, targets = labeled_pairs(labels, {p.qp_id: p for p in text}, args.soft)
        inputs["pairs"] = io.file_digest(args.pairs)
        io.write_lines(args.pairs_out, io.header("weak-label", cfg.seed, inputs, **extra), io.pair_lines(out, targets))


def _train_targets(pairs, targets, loss: qa.Loss):
    if any(t is None for t in targets):
        raise EmptyDataset("training pairs need a label or score in every row")
    if loss is qa.Loss.CE:
        return None if all(p.label is not None for p in pairs) else np.array(targets, dtype=np.float64)
    return np.array(targets, dtype=np.float64)


def cmd_train_qa(args) -> None:
    base = qa.PRETRAIN_DEFAULTS if args.stage == "pretrain" else qa.FINETUNE_DEFAULTS
    cfg = qa_train_config(base, args)
    model = read_qa_model(args.model_in) if args.model_in else qa.RelevanceModel()
    pairs, targets = io.read_pairs(args.pairs)
    if not pairs:
        raise EmptyDataset("no training pairs")
    trained = qa.train(model, pairs, cfg, args.stage, _train_targets(pairs, targets, cfg.loss))
    inputs = {"pairs": io.file_digest(args.pairs)}
    if args.model_in:
        inputs["model_in"] = io.file_digest(args.model_in)
    write_qa_model(args.model_out, trained, io.header("train-qa", cfg.seed, inputs, qa_stage=args.stage, loss=cfg.loss.value))


def cmd_eval_qa(args) -> None:
    model = read_qa_model(args.model)
    pairs, _ = io.read_pairs(args.pairs)
    a, acc = qa.evaluate(model, pairs, args.threshold)
    body = list(io.kv_lines([("auc", a), ("acc", acc), ("n", len(pairs))]))
    inputs = {"model": io.file_digest(args.model), "pairs": io.file_digest(args.pairs)}
    _emit(args, "eval-qa", io.header("eval-qa", inputs=inputs), body)


# -- pipeline -------------------------------------------------------------------


def write_pipeline(result: PipelineResult, out: Path, write_logs: bool = False) -> None:
    cfg = result.config
    cfg_text = dumps_config(cfg)
    seed = cfg.seed
    inputs = {"config": io.text_digest(cfg_text)}

    def head(stage: str, **extra) -> list[str]:
        return io.header(stage, seed, inputs, **extra)

    out.mkdir(parents=True, exist_ok=True)
    io.write_lines(out / "config.cfg", head("pipeline"), cfg_text.splitlines())

    if write_logs:
        pairs = gen_pairs(replace(cfg.sim, n_pairs=cfg.n_total))
        for role in ("feedback", "pool"):
            start = cfg.role_start(role)
            chunk = pairs[start:start + getattr(cfg, f"n_{role}")]
            io.write_lines(out / f"{role}.log.jsonl", head("simulate", role=role), iter_session_lines(chunk, cfg.sim))

    fb = result.feedback
    write_features(out / "feedback.features.tsv", fb.features, head("aggregate", role="feedback", dropped=fb.n_dropped))
    gold_rows = [(f.qp_id, bool(g)) for f, g in zip(fb.features, fb.gold)]
    io.write_lines(out / "feedback.gold.tsv", head("simulate", role="feedback"), io.label_lines("gold", gold_rows))
    write_feedback_model(out / "feedback.model.json", fb.model, head("train-feedback", model=cfg.feedback_model))
    X = feature_matrix(fb.features)
    train, dev, test = split_indices(len(fb.features), seed)
    report = feedback_report(fb.model, X, fb.gold, {"train": train, "dev": dev, "test": test})
    io.write_lines(out / "feedback.report.tsv", head("train-feedback", model=cfg.feedback_model), report)

    ws = result.weak
    weak_extra = {"tau_high": cfg.weak.tau_high, "tau_low": cfg.weak.tau_low, "balance": cfg.weak.balance}
    io.write_lines(out / "weak.tsv", head("weak-label", **weak_extra), io.weak_lines(ws.labels))
    io.write_lines(out / "weak.discarded.tsv", head("weak-label", **weak_extra), io.score_lines(ws.discarded))
    io.write_lines(out / "weak.pairs.tsv", head("weak-label", **weak_extra), io.pair_lines(result.pretrain_pairs))
    io.write_lines(out / "finetune.pairs.tsv", head("simulate", role="finetune"), io.pair_lines(result.finetune_pairs))
    io.write_lines(out / "test.pairs.tsv", head("simulate", role="test"), io.pair_lines(result.test_pairs))

    if result.pretrained_model is not None:
        write_qa_model(out / "qa.pretrained.json", result.pretrained_model, head("train-qa", qa_stage="pretrain"))
    write_qa_model(out / "qa.two_stage.json", result.two_stage_model, head("train-qa", qa_stage="finetune"))
    write_qa_model(out / "qa.finetune_only.json", result.finetune_only_model, head("train-qa", qa_stage="finetune"))
    io.write_lines(out / "summary.tsv", head("pipeline"), io.kv_lines(result.summary().items()))


def cmd_pipeline(args) -> None:
    cfg = load_config(args.config or default_config_path())
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    result = run_pipeline(cfg)
    write_pipeline(result, Path(args.out_dir), args.write_logs)
    print("\n".join(io.kv_lines(result.summary().items())))


# -- argument parsing ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qamine", description="Search-log mining and weak supervision for QA relevance.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate pairs, a session log, truth and gold labels")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--n-pairs", type=int, default=5000)
    s.add_argument("--start", type=int, default=0, help="index of the first pair")
    s.add_argument("--seed", type=int)
    s.add_argument("--config", help="pipeline config whose sim.* keys are used")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("aggregate", help="session log to per-pair behavior features")
    s.add_argument("--log", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--sat-ms", type=int, default=30_000)
    s.add_argument("--min-impressions", type=int, default=10)
    s.add_argument("--terminal-click-policy", choices=[t.value for t in TerminalClickPolicy], default="satisfied")
    s.set_defaults(func=cmd_aggregate)

    s = sub.add_parser("train-feedback", help="fit a feedback classifier on features and gold labels")
    s.add_argument("--features", required=True)
    s.add_argument("--gold", required=True)
    s.add_argument("--model", required=True, help="lr, dt, rf, gbdt or baseline:INDEX")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--report", help="write the split metrics here instead of stdout")
    s.set_defaults(func=cmd_train_feedback)

    for name, func, help_text in (
        ("eval-feedback", cmd_eval_feedback, "AUC, ACC and F1 of a feedback model"),
        ("pr-curve", cmd_pr_curve, "precision-recall points of a feedback model"),
    ):
        s = sub.add_parser(name, help=help_text)
        s.add_argument("--model", required=True)
        s.add_argument("--features", required=True)
        s.add_argument("--gold", required=True)
        s.add_argument("--out")
        if name == "eval-feedback":
            s.add_argument("--threshold", type=float, default=0.5)
        s.set_defaults(func=func)

    s = sub.add_parser("importance", help="normalized split gain per feature")
    s.add_argument("--model", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_importance)

    s = sub.add_parser("rules", help="decision-tree paths as readable rules")
    s.add_argument("--model", required=True)
    s.add_argument("--min-purity", type=float, default=0.0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_rules)

    s = sub.add_parser("weak-label", help="threshold feedback scores into weak labels")
    s.add_argument("--model", required=True)
    s.add_argument("--features", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--tau-high", type=float, default=0.6)
    s.add_argument("--tau-low", type=float, default=0.4)
    s.add_argument("--no-balance", action="store_true")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--max-labels", type=int)
    s.add_argument("--discarded", help="sidecar path (default: OUT.discarded.tsv)")
    s.add_argument("--pairs", help="pair text file to join onto the kept labels")
    s.add_argument("--pairs-out")
    s.add_argument("--soft", action="store_true", help="write scores instead of 0/1 into --pairs-out")
    s.set_defaults(func=cmd_weak_label)

    s = sub.add_parser("train-qa", help="one SGD stage of the relevance model")
    s.add_argument("--pairs", required=True)
    s.add_argument("--stage", choices=["pretrain", "finetune"], required=True)
    s.add_argument("--model-in")
    s.add_argument("--model-out", required=True)
    s.add_argument("--loss", choices=[x.value for x in qa.Loss])
    s.add_argument("--epochs", type=int)
    s.add_argument("--lr", type=float)
    s.add_argument("--l2", type=float)
    s.add_argument("--batch-size", type=int)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_train_qa)

    s = sub.add_parser("eval-qa", help="AUC and ACC of a relevance model on labelled pairs")
    s.add_argument("--model", required=True)
    s.add_argument("--pairs", required=True)
    s.add_argument("--threshold", type=float, default=0.5)
    s.add_argument("--out")
    s.set_defaults(func=cmd_eval_qa)

    s = sub.add_parser("pipeline", help="run every stage on simulated data")
    s.add_argument("--config", help=f"flat key=value file (default: {default_config_path().name})")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--write-logs", action="store_true", help="also write the simulated session logs")
    s.set_defaults(func=cmd_pipeline)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except QamineError as exc:
        print(f"qamine {args.command}: {exc.code}: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"qamine {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
