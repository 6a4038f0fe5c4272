"""Command-line entry points.

Subcommands: generate (config -> dataset files), train (config + dataset ->
checkpoint + training log), eval (checkpoint + dataset -> report file), and
report (training log -> schedule trace and per-predicate table). Output
files are written atomically after the computation succeeds, so a failing
run leaves no partial artifacts.
"""

import argparse
import os
import sys

from . import config as config_mod
from .datagen import build_prior_bias, generate_dataset, load_dataset, save_dataset
from .metrics import format_report
from .model import DualBranchModel, load_checkpoint, save_checkpoint
from .training import evaluate, parse_log, train, write_log


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="dualrel",
        description="curriculum training for long-tailed relation prediction",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a synthetic dataset")
    gen.add_argument("--config", required=True, help="key=value generator config")
    gen.add_argument("--out", required=True, help="output dataset directory")

    tr = sub.add_parser("train", help="train on a generated dataset")
    tr.add_argument("--config", required=True, help="key=value training config")
    tr.add_argument("--data", required=True, help="dataset directory")
    tr.add_argument("--out", required=True, help="output directory")

    ev = sub.add_parser("eval", help="evaluate a checkpoint")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--data", required=True, help="dataset directory")
    ev.add_argument("--ks", default="20,50,100", help="comma-separated K values")
    ev.add_argument("--out", required=True, help="report file")

    rep = sub.add_parser("report", help="summarize a training log")
    rep.add_argument("--log", required=True)
    rep.add_argument("--out", required=True)
    return parser


def _write_atomic(path, text):
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _cmd_generate(args):
    cfg = config_mod.generator_config_from(config_mod.parse_kv_file(args.config))
    vocab, train_split, test_split = generate_dataset(cfg)
    save_dataset(args.out, cfg, vocab, train_split, test_split)
    counts = vocab.train_counts
    print(
        f"wrote {len(train_split)} train / {len(test_split)} test relations, "
        f"{vocab.num_predicates} predicates (max count {int(counts.max())}, "
        f"min {int(counts[1:].min())}) to {args.out}"
    )
    return 0


def _cmd_train(args):
    cfg = config_mod.train_config_from(config_mod.parse_kv_file(args.config))
    vocab, train_split, test_split, n_obj, feature_dim = load_dataset(args.data)
    prior = build_prior_bias(train_split, vocab)
    model = DualBranchModel.build(
        num_object_classes=n_obj,
        num_predicates=vocab.num_predicates,
        feature_dim=feature_dim,
        hidden_dim=cfg.hidden_dim,
        context_dim=cfg.context_dim,
        prior_table=prior.table,
        seed=cfg.seed,
    )
    log = train(cfg, vocab, train_split, model, eval_instances=test_split)
    os.makedirs(args.out, exist_ok=True)
    save_checkpoint(os.path.join(args.out, "model.ckpt"), model)
    write_log(os.path.join(args.out, "train.log"), log, vocab)
    final = log.eval_snapshots[-1][1]
    k = final.ks[0]
    print(
        f"trained {cfg.total_iterations} iterations; final "
        f"r@{k}={final.r_at_k[k]:.4f} mr@{k}={final.mr_at_k[k]:.4f}; "
        f"artifacts in {args.out}"
    )
    return 0


def _cmd_eval(args):
    ks = tuple(int(part) for part in args.ks.split(",") if part)
    if not ks:
        raise ValueError("--ks must name at least one K")
    model = load_checkpoint(args.checkpoint)
    vocab, _, test_split, _, _ = load_dataset(args.data)
    report = evaluate(model, test_split, vocab, ks)
    _write_atomic(args.out, format_report(report, vocab))
    k = ks[0]
    print(
        f"r@{k}={report.r_at_k[k]:.4f} mr@{k}={report.mr_at_k[k]:.4f} "
        f"m@{k}={report.m_at_k[k]:.4f}; report in {args.out}"
    )
    return 0


def _cmd_report(args):
    iters, evals, evalpreds = parse_log(args.log)
    lines = ["schedule trace", "iteration\talpha\tlambda_head"]
    for row in iters:
        lines.append(f"{row['iteration']}\t{row['alpha']!r}\t{row['lambda_head']!r}")
    if evals:
        lines.append("")
        lines.append("evaluation snapshots")
        lines.append("iteration\tK\tr\tmr\tm\tmany\tmedium\tfew")
        for row in evals:
            cells = [str(row["iteration"]), str(row["K"])]
            for key in ("r", "mr", "m", "many", "medium", "few"):
                value = row[key]
                cells.append("absent" if value is None else f"{value:.6f}")
            lines.append("\t".join(cells))
    if evalpreds:
        last_iter = max(row["iteration"] for row in evalpreds)
        ks = sorted({row["K"] for row in evalpreds if row["iteration"] == last_iter})
        lines.append("")
        lines.append(f"per-predicate recall at iteration {last_iter} "
                     "(descending train count)")
        lines.append("predicate\ttrain_count" + "".join(f"\trecall@{k}" for k in ks))
        rows = {}
        for row in evalpreds:
            if row["iteration"] == last_iter:
                rows.setdefault(row["index"], {})[row["K"]] = row
        order = sorted(
            rows,
            key=lambda i: (-rows[i][ks[0]]["train_count"], i),
        )
        for i in order:
            first = rows[i][ks[0]]
            cells = [first["name"], str(first["train_count"])]
            for k in ks:
                recall = rows[i][k]["recall"]
                cells.append("absent" if recall is None else f"{recall:.6f}")
            lines.append("\t".join(cells))
    _write_atomic(args.out, "\n".join(lines) + "\n")
    print(f"report written to {args.out}")
    return 0


_COMMANDS = {
    "generate": _cmd_generate,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "report": _cmd_report,
}


def run_command(argv):
    """Run one subcommand; returns the process exit status."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(run_command(sys.argv[1:]))
