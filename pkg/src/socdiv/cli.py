"""Command-line entry points for the experiment pipeline.

Commands: gen-synth, train-teacher, train-student, evaluate, rerank,
sweep-beta, compare-social, dump-embeddings. All outputs are line-oriented
UTF-8 tables; report paths also render matplotlib figures next to them.
"""

from __future__ import annotations

import argparse
import hashlib
import os
import sys

import numpy as np

from . import plots
from .config import ConfigError, TrainConfig, parse_config_pairs, read_config_file
from .data import DataError, load_dataset, split_holdout
from .metrics import EvalReport, MetricError, evaluate, recommend_topk
from .models import (GraphContext, ModelError, forward, load_checkpoint,
                     save_checkpoint)
from .optim import OptimizerError
from .rerank import RerankError, build_candidates, dpp_rerank, mmr_rerank
from .synthetic import SyntheticConfig, write_synthetic
from .training import TrainingError, train_student, train_teacher, write_epoch_log

DEFAULT_TEST_FRACTION = 0.2
DEFAULT_BETA_GRID = "2.0,1.0,0.5,0.1,0.05,0.01,0.005,0.001,5e-4,1e-4"

SWEEP_COLUMNS = ("beta", "recall", "ndcg", "coverage", "entropy")
COMPARE_COLUMNS = ("backbone", "variant", "recall", "ndcg", "coverage", "entropy")


class CliError(RuntimeError):
    pass


def file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        h.update(fh.read())
    return h.hexdigest()


def _build_config(args) -> TrainConfig:
    cfg = TrainConfig()
    if getattr(args, "config", None):
        if not os.path.exists(args.config):
            raise CliError(f"config file not found: {args.config}")
        cfg = read_config_file(args.config, cfg)
    pairs = []
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise CliError(f"--set expects KEY=VALUE, got {item!r}")
        key, _, val = item.partition("=")
        pairs.append((key.strip(), val.strip()))
    return parse_config_pairs(pairs, cfg)


def _load_split(args, cfg, out_dir=None):
    if not os.path.exists(args.interactions):
        raise CliError(f"interactions file not found: {args.interactions}")
    social_path = getattr(args, "social", None)
    if social_path and not os.path.exists(social_path):
        raise CliError(f"social file not found: {social_path}")
    g, social, dropped = load_dataset(args.interactions, social_path, out_dir)
    if dropped:
        print(f"dropped {dropped} self-loop social edge(s)", file=sys.stderr)
    split = split_holdout(g, args.test_fraction, cfg.seed)
    return split, social


def _write_table(path, columns, rows):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(columns) + "\n")
        for row in rows:
            fh.write("\t".join(
                f"{row[c]:.6g}" if isinstance(row[c], float) else str(row[c])
                for c in columns) + "\n")


def _mean_rows(rows, keys):
    return {k: float(np.mean([r[k] for r in rows])) for k in keys}


def _report_row(report: EvalReport):
    return {"recall": report.recall, "ndcg": report.ndcg,
            "coverage": report.coverage, "entropy": report.entropy}


# ---------------------------------------------------------------------------
# command implementations

def cmd_gen_synth(args):
    cfg = SyntheticConfig(
        num_users=args.users, num_items=args.items, communities=args.communities,
        p_in=args.p_in, p_out=args.p_out, social_degree=args.social_degree,
        homophily=args.homophily, popularity_skew=args.popularity_skew,
        subgenres=args.subgenres, taste_alpha=args.taste_alpha, seed=args.seed,
    )
    ipath, spath = write_synthetic(cfg, args.out)
    print(f"wrote {ipath}")
    print(f"wrote {spath}")
    return 0


def cmd_train_teacher(args):
    cfg = _build_config(args)
    os.makedirs(args.out, exist_ok=True)
    split, _social = _load_split(args, cfg, args.out)
    result = train_teacher(cfg, split)
    ckpt = os.path.join(args.out, "teacher.npz")
    save_checkpoint(result.model, ckpt)
    log_path = os.path.join(args.out, "teacher_log.tsv")
    write_epoch_log(result.log, log_path)
    if not args.no_plot:
        plots.plot_training_trajectory(
            result.log, os.path.join(args.out, "teacher_training.png"))
    print(f"checkpoint {ckpt}")
    print(f"epoch log {log_path} (best epoch {result.best_epoch})")
    return 0


def cmd_train_student(args):
    cfg = _build_config(args)
    os.makedirs(args.out, exist_ok=True)
    if not getattr(args, "social", None):
        raise CliError("train-student requires --social")
    split, social = _load_split(args, cfg, args.out)
    teacher = None
    teacher_digest = None
    needs_teacher = cfg.teacher_strategy in ("same-family", "cross-model") and cfg.beta > 0
    if args.teacher:
        if not os.path.exists(args.teacher):
            raise CliError(f"teacher checkpoint not found: {args.teacher}")
        teacher_digest = file_digest(args.teacher)
        teacher = load_checkpoint(args.teacher)
    elif needs_teacher:
        raise CliError(
            f"teacher strategy {cfg.teacher_strategy!r} requires --teacher")
    result = train_student(cfg, split, social, teacher)
    if teacher_digest is not None and file_digest(args.teacher) != teacher_digest:
        raise CliError("teacher checkpoint changed during student training")
    ckpt = os.path.join(args.out, "student.npz")
    save_checkpoint(result.model, ckpt)
    log_path = os.path.join(args.out, "student_log.tsv")
    write_epoch_log(result.log, log_path)
    if not args.no_plot:
        plots.plot_training_trajectory(
            result.log, os.path.join(args.out, "student_training.png"))
    print(f"checkpoint {ckpt}")
    print(f"epoch log {log_path} (best epoch {result.best_epoch})")
    return 0


def _percent(x):
    return f"{100.0 * x:.3f}"


def cmd_evaluate(args):
    cfg = _build_config(args)
    if not os.path.exists(args.checkpoint):
        raise CliError(f"checkpoint not found: {args.checkpoint}")
    model = load_checkpoint(args.checkpoint)
    split, social = _load_split(args, cfg)
    fo = forward(model, split.train, social if model.social_enabled else None)
    report = evaluate(fo, split.train, split.test, args.k, social)
    # display follows the percentage convention; entropy and sim stay raw
    print(f"recall\t{_percent(report.recall)}")
    print(f"ndcg\t{_percent(report.ndcg)}")
    print(f"coverage\t{_percent(report.coverage)}")
    print(f"entropy\t{report.entropy:.4f}")
    print(f"sim\t{report.sim:.4f}")
    print(f"k\t{report.k}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, "eval_report.tsv")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(EvalReport.header() + "\n")
            fh.write(report.to_record() + "\n")
        print(f"report {path}")
    return 0


def cmd_rerank(args):
    cfg = _build_config(args)
    if not os.path.exists(args.checkpoint):
        raise CliError(f"checkpoint not found: {args.checkpoint}")
    model = load_checkpoint(args.checkpoint)
    split, social = _load_split(args, cfg)
    fo = forward(model, split.train, social if model.social_enabled else None)
    os.makedirs(args.out, exist_ok=True)
    lists = recommend_topk(fo, split.train, args.k)
    for u in range(split.train.num_users):
        cands = build_candidates(fo, u, split.train.item_sets[u], args.k,
                                 args.pool_factor)
        if len(cands) < args.k:
            continue  # tiny catalogs: keep the plain top-k
        if args.method == "mmr":
            picked = mmr_rerank(cands, args.k, args.trade_off)
        else:
            picked = dpp_rerank(cands, args.k, args.theta)
        lists.lists[u] = picked.tolist()
    lists_path = os.path.join(args.out, f"{args.method}_lists.tsv")
    with open(lists_path, "w", encoding="utf-8") as fh:
        for u in sorted(lists.lists):
            fh.write(f"{u}\t{','.join(map(str, lists.lists[u]))}\n")
    from .metrics import (coverage_at_k, entropy_at_k, ndcg_at_k, recall_at_k,
                          user_friend_similarity)
    report = EvalReport(
        recall=recall_at_k(lists, split.test),
        ndcg=ndcg_at_k(lists, split.test),
        coverage=coverage_at_k(lists, split.train.num_items),
        entropy=entropy_at_k(lists),
        sim=user_friend_similarity(fo, social) if social else float("nan"),
        k=args.k,
    )
    report_path = os.path.join(args.out, f"{args.method}_report.tsv")
    with open(report_path, "w", encoding="utf-8") as fh:
        fh.write(EvalReport.header() + "\n")
        fh.write(report.to_record() + "\n")
    print(f"lists {lists_path}")
    print(f"report {report_path}")
    return 0


def run_sweep(cfg: TrainConfig, split, social, betas, reps, k):
    """Train teacher+student across the beta grid; rows averaged over seeds."""
    rows = []
    teachers = {}
    for rep in range(reps):
        seed = cfg.seed + rep
        rep_cfg = cfg.replace(seed=seed)
        teachers[rep] = train_teacher(rep_cfg, split).model
    for beta in betas:
        per_rep = []
        for rep in range(reps):
            seed = cfg.seed + rep
            run_cfg = cfg.replace(seed=seed, beta=beta, social_enabled=True)
            result = train_student(run_cfg, split, social, teachers[rep])
            fo = forward(result.model, split.train,
                         social if run_cfg.social_enabled else None)
            per_rep.append(_report_row(evaluate(fo, split.train, split.test, k, social)))
        row = {"beta": beta}
        row.update(_mean_rows(per_rep, ("recall", "ndcg", "coverage", "entropy")))
        rows.append(row)
    return rows


def cmd_sweep_beta(args):
    cfg = _build_config(args)
    os.makedirs(args.out, exist_ok=True)
    split, social = _load_split(args, cfg, args.out)
    if social is None:
        raise CliError("sweep-beta requires --social")
    betas = [float(b) for b in args.betas.split(",") if b.strip()]
    if not betas:
        raise CliError("empty beta grid")
    rows = run_sweep(cfg, split, social, betas, args.reps, args.k)
    table = os.path.join(args.out, "beta_sweep.tsv")
    _write_table(table, SWEEP_COLUMNS, rows)
    if not args.no_plot:
        plots.plot_beta_sweep(rows, os.path.join(args.out, "beta_sweep.png"))
    print(f"table {table}")
    return 0


def run_compare(cfg: TrainConfig, split, social, backbones, reps, k):
    """Non-social / base / distilled rows per backbone, averaged over seeds."""
    rows = []
    for backbone in backbones:
        per_variant = {"nonsocial": [], "base": [], "distilled": []}
        for rep in range(reps):
            seed = cfg.seed + rep
            bb_cfg = cfg.replace(backbone=backbone, seed=seed)
            teacher = train_teacher(bb_cfg, split)
            t_fo = forward(teacher.model, split.train, None)
            per_variant["nonsocial"].append(
                _report_row(evaluate(t_fo, split.train, split.test, k, social)))
            base = train_student(
                bb_cfg.replace(beta=0.0, social_enabled=True), split, social, None)
            b_fo = forward(base.model, split.train, social)
            per_variant["base"].append(
                _report_row(evaluate(b_fo, split.train, split.test, k, social)))
            div = train_student(
                bb_cfg.replace(social_enabled=True), split, social, teacher.model)
            d_fo = forward(div.model, split.train, social)
            per_variant["distilled"].append(
                _report_row(evaluate(d_fo, split.train, split.test, k, social)))
        for variant in ("nonsocial", "base", "distilled"):
            row = {"backbone": backbone, "variant": variant}
            row.update(_mean_rows(per_variant[variant],
                                  ("recall", "ndcg", "coverage", "entropy")))
            rows.append(row)
    return rows


def cmd_compare_social(args):
    cfg = _build_config(args)
    os.makedirs(args.out, exist_ok=True)
    split, social = _load_split(args, cfg, args.out)
    if social is None:
        raise CliError("compare-social requires --social")
    backbones = [b.strip() for b in args.backbones.split(",") if b.strip()]
    rows = run_compare(cfg, split, social, backbones, args.reps, args.k)
    table = os.path.join(args.out, "compare_social.tsv")
    _write_table(table, COMPARE_COLUMNS, rows)
    if not args.no_plot:
        plots.plot_compare_social(rows, os.path.join(args.out, "compare_social.png"))
    print(f"table {table}")
    return 0


def cmd_dump_embeddings(args):
    cfg = _build_config(args)
    if not os.path.exists(args.checkpoint):
        raise CliError(f"checkpoint not found: {args.checkpoint}")
    model = load_checkpoint(args.checkpoint)
    split, social = _load_split(args, cfg)
    fo = forward(model, split.train, social if model.social_enabled else None)
    with open(args.out, "w", encoding="utf-8") as fh:
        for u in range(fo.user_embeddings.shape[0]):
            vec = ",".join(f"{v:.6g}" for v in fo.user_embeddings[u])
            fh.write(f"{u}\t{vec}\n")
    print(f"embeddings {args.out}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing

def _add_config_args(p):
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config key (repeatable)")


def _add_data_args(p, social_required=False):
    p.add_argument("--interactions", required=True, help="user-item edge list")
    p.add_argument("--social", required=social_required,
                   help="user-friend edge list")
    p.add_argument("--test-fraction", type=float, default=DEFAULT_TEST_FRACTION)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="socdiv",
        description="Social recommendation training, diversity evaluation and re-ranking")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synth", help="generate a planted-partition dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--users", type=int, default=300)
    p.add_argument("--items", type=int, default=500)
    p.add_argument("--communities", type=int, default=5)
    p.add_argument("--p-in", type=float, default=0.08)
    p.add_argument("--p-out", type=float, default=0.005)
    p.add_argument("--social-degree", type=int, default=10)
    p.add_argument("--homophily", type=float, default=0.9)
    p.add_argument("--popularity-skew", type=float, default=0.8)
    p.add_argument("--subgenres", type=int, default=4)
    p.add_argument("--taste-alpha", type=float, default=0.3)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_synth)

    p = sub.add_parser("train-teacher", help="train the non-social model")
    _add_data_args(p)
    _add_config_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_train_teacher)

    p = sub.add_parser("train-student", help="train the social model (optionally distilled)")
    _add_data_args(p, social_required=True)
    _add_config_args(p)
    p.add_argument("--teacher", help="teacher checkpoint (.npz)")
    p.add_argument("--out", required=True)
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_train_student)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint")
    _add_data_args(p)
    _add_config_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--k", type=int, default=100)
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("rerank", help="diversified re-ranking of a checkpoint's lists")
    _add_data_args(p)
    _add_config_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--method", choices=("mmr", "dpp"), default="mmr")
    p.add_argument("--k", type=int, default=100)
    p.add_argument("--trade-off", type=float, default=0.7)
    p.add_argument("--theta", type=float, default=0.7)
    p.add_argument("--pool-factor", type=int, default=5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_rerank)

    p = sub.add_parser("sweep-beta", help="train/evaluate across distillation weights")
    _add_data_args(p, social_required=True)
    _add_config_args(p)
    p.add_argument("--betas", default=DEFAULT_BETA_GRID)
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--k", type=int, default=100)
    p.add_argument("--out", required=True)
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_sweep_beta)

    p = sub.add_parser("compare-social",
                       help="non-social vs base vs distilled per backbone")
    _add_data_args(p, social_required=True)
    _add_config_args(p)
    p.add_argument("--backbones", default="socialmf,diffnet")
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--k", type=int, default=100)
    p.add_argument("--out", required=True)
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_compare_social)

    p = sub.add_parser("dump-embeddings",
                       help="write final user embeddings for external visualization")
    _add_data_args(p)
    _add_config_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dump_embeddings)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, ConfigError, DataError, MetricError, ModelError,
            TrainingError, OptimizerError, RerankError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
