"""Command-line interface.

Subcommands: split | train | eval | baseline | export-scores. Options
come from an optional key-value config file plus flags; flags win. Exit
codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import __version__
from .config import (ExperimentConfig, TRAINED_MODES, config_to_text,
                     load_config)
from .enhancer import (EnhancerConfig, load_params, save_params,
                       select_augmentation_pairs, assemble_enhanced)
from .errors import ConfigError, DataError, GelatoError, NumericError
from .evaluator import (biased_sample_metrics, compute_report, rank_summary,
                        report_to_json, write_pr_csv)
from .graph import Graph, add_self_loops, build_graph
from .io import load_graph, read_attributes
from .scorers import (AutocovarianceScorer, CosineScorer,
                      LocalHeuristicScorer, MlpScorer)
from .splits import (negative_pool_size, read_split, split_edges,
                     write_split)
from .trainer import TrainConfig, train

_OVERRIDE_FLAGS = [
    ("edges", str), ("attributes", str), ("split", str),
    ("split_seed", int), ("eta", float), ("alpha", float), ("beta", float),
    ("self_loop_mode", str), ("self_loop_weight", float), ("hidden", int),
    ("mode", str), ("loss", str), ("regime", str), ("lr", float),
    ("epochs", int), ("batch_count", int), ("neg_cap", int),
    ("dropout", float), ("t", int), ("seed", int),
    ("valid_subsample", int), ("phase", str), ("biased_neg_per_pos", int),
    ("eval_seed", int), ("block_size", int), ("workers", int),
]


def _add_common(parser):
    parser.add_argument("--config", help="key-value config file")
    for name, kind in _OVERRIDE_FLAGS:
        parser.add_argument(f"--{name.replace('_', '-')}", dest=name,
                            type=kind, default=None)
    parser.add_argument("--ratios", nargs=3, type=float, default=None)
    parser.add_argument("--prec", nargs="+", type=float, default=None,
                        help="prec@k fractions to report")
    parser.add_argument("--hits", nargs="+", type=int, default=None,
                        help="hits@k ranks to report")


def _resolve_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if args.config:
        cfg = load_config(args.config, cfg)
    for name, _ in _OVERRIDE_FLAGS:
        value = getattr(args, name, None)
        if value is not None:
            setattr(cfg, name, value)
    for name in ("ratios", "prec", "hits"):
        value = getattr(args, name, None)
        if value is not None:
            setattr(cfg, name, tuple(value))
    return cfg.validate()


def _workers(cfg) -> int:
    return cfg.workers if cfg.workers > 0 else (os.cpu_count() or 1)


def _load_inputs(cfg, need_attrs: bool):
    if not cfg.edges:
        raise ConfigError("no edge-list file configured (--edges)")
    g = load_graph(cfg.edges)
    X = None
    if need_attrs:
        if not cfg.attributes:
            raise ConfigError("this mode needs --attributes")
        X = read_attributes(cfg.attributes)
        if X.n != g.n:
            raise DataError(f"attribute rows ({X.n}) != node count ({g.n})")
    return g, X


def _load_split(cfg, g):
    if not cfg.split:
        raise ConfigError("no split file configured (--split)")
    split = read_split(cfg.split)
    if split.n != g.n:
        raise DataError(f"split node count ({split.n}) != graph ({g.n})")
    return split


def _train_graph(g, split) -> Graph:
    return build_graph(
        np.column_stack([split.train_pos, g.pair_weights(split.train_pos)]),
        split.n, undirected=True)


def _enhancer_cfg(cfg) -> EnhancerConfig:
    return EnhancerConfig(eta=cfg.eta, alpha=cfg.alpha, beta=cfg.beta,
                          self_loop_mode=cfg.self_loop_mode,
                          self_loop_weight=cfg.self_loop_weight)


def _train_cfg(cfg, direct_mlp=False) -> TrainConfig:
    return TrainConfig(loss=cfg.loss, regime=cfg.regime, lr=cfg.lr,
                       epochs=cfg.epochs, batch_count=cfg.batch_count,
                       neg_cap=cfg.neg_cap, seed=cfg.seed,
                       dropout=cfg.dropout, ac_t=cfg.t, hidden=cfg.hidden,
                       valid_subsample=cfg.valid_subsample,
                       direct_mlp=direct_mlp)


def _needs_attributes(mode: str) -> bool:
    return mode not in ("ac-only", "heuristic:cn", "heuristic:aa",
                        "heuristic:ra")


def _build_scorer(cfg, g, X, split, checkpoint):
    """(scorer, structure graph) over the training edges, per mode."""
    g_train = _train_graph(g, split)
    mode = cfg.mode
    if mode.startswith("heuristic:"):
        kind = mode.split(":", 1)[1]
        if kind == "cos":
            return CosineScorer(X), g_train
        return LocalHeuristicScorer(kind, g_train), g_train
    if mode == "ac-only":
        looped = add_self_loops(g_train, cfg.self_loop_mode,
                                cfg.self_loop_weight)
        return AutocovarianceScorer(looped, cfg.t), looped

    enh = _enhancer_cfg(cfg)
    params = None
    if mode in TRAINED_MODES:
        if not checkpoint:
            raise ConfigError(f"mode {mode} needs --checkpoint")
        params = load_params(checkpoint)
    if mode == "mlp-only":
        return MlpScorer(params, X), g_train
    if mode == "cos-ac":
        enh = EnhancerConfig(eta=cfg.eta, alpha=cfg.alpha, beta=0.0,
                             self_loop_mode=cfg.self_loop_mode,
                             self_loop_weight=cfg.self_loop_weight)
    added = np.empty((0, 2), dtype=np.int64)
    if enh.eta > 0.0:
        added, _ = select_augmentation_pairs(X, g_train, enh.eta)
    base_pairs, base_weights = g_train.edge_pairs(return_weights=True)
    eg = assemble_enhanced(X, params, enh, g.n, base_pairs, base_weights,
                           added, training=False)
    return AutocovarianceScorer(eg.graph, cfg.t), eg.graph


# -- subcommands ---------------------------------------------------------------

def cmd_split(args) -> int:
    cfg = _resolve_config(args)
    g, _ = _load_inputs(cfg, need_attrs=False)
    split = split_edges(g, cfg.ratios, cfg.split_seed)
    write_split(args.out, split)
    print(f"wrote {args.out}")
    print(f"n {split.n}  edges {split.num_edges}")
    print(f"train {len(split.train_pos)}  valid {len(split.valid_pos)}"
          f"  test {len(split.test_pos)}")
    for phase in ("train", "valid", "test"):
        print(f"{phase} negative pool {negative_pool_size(g, split, phase)}")
    return 0


def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    if cfg.mode in ("ac-only", "cos-ac") or cfg.mode.startswith("heuristic:"):
        print(f"mode {cfg.mode} has no trainable parameters; nothing to do "
              "(run eval directly)")
        return 0
    g, X = _load_inputs(cfg, need_attrs=True)
    split = _load_split(cfg, g)
    direct = cfg.mode in ("mlp-only", "mlp-ac-two-stage")
    params, history = train(g, X, split, _enhancer_cfg(cfg),
                            _train_cfg(cfg, direct_mlp=direct))
    save_params(args.out_checkpoint, params)
    lines = ["# epoch loss valid_prec skipped"]
    for rec in history:
        lines.append(f"{rec.epoch} {rec.loss!r} {rec.valid_prec!r} "
                     f"{rec.skipped}")
    text = "\n".join(lines) + "\n"
    if args.out_history:
        with open(args.out_history, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        print(text, end="")
    skipped = sum(rec.skipped for rec in history)
    best = max((rec.valid_prec for rec in history
                if not np.isnan(rec.valid_prec)), default=float("nan"))
    print(f"wrote {args.out_checkpoint}; best valid prec@100% {best!r}; "
          f"{skipped} invalid-gradient batches skipped")
    return 0


def _report(cfg, g, X, split, checkpoint):
    scorer, _ = _build_scorer(cfg, g, X, split, checkpoint)
    if cfg.biased_neg_per_pos > 0:
        return biased_sample_metrics(
            scorer, g, split, cfg.biased_neg_per_pos, cfg.eval_seed,
            phase=cfg.phase, prec_fractions=cfg.prec, hits_ks=cfg.hits)
    rs = rank_summary(scorer, g, split, cfg.phase,
                      block_size=cfg.block_size, workers=_workers(cfg))
    return compute_report(rs, cfg.prec, cfg.hits,
                          meta={"phase": cfg.phase, "mode": cfg.mode})


def cmd_eval(args) -> int:
    cfg = _resolve_config(args)
    g, X = _load_inputs(cfg, need_attrs=_needs_attributes(cfg.mode))
    split = _load_split(cfg, g)
    report = _report(cfg, g, X, split, args.checkpoint)
    if report.biased:
        print("=" * 60)
        print("==  BIASED evaluation: negatives were downsampled.      ==")
        print("==  Metrics overestimate unbiased performance.          ==")
        print("=" * 60)
    print(report_to_json(report), end="")
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            fh.write(report_to_json(report))
    if args.pr_csv:
        write_pr_csv(args.pr_csv, report)
    return 0


def cmd_baseline(args) -> int:
    args.mode = {"ac": "ac-only"}.get(args.kind, f"heuristic:{args.kind}")
    args.checkpoint = None
    return cmd_eval(args)


def cmd_export_scores(args) -> int:
    cfg = _resolve_config(args)
    g, X = _load_inputs(cfg, need_attrs=_needs_attributes(cfg.mode))
    split = _load_split(cfg, g)
    nodes = np.asarray(sorted(set(args.nodes)), dtype=np.int64)
    if len(nodes) == 0:
        raise ConfigError("no nodes given")
    if nodes.min() < 0 or nodes.max() >= g.n:
        raise DataError("node id out of range")
    if len(nodes) > cfg.block_size:
        raise ConfigError(
            f"subset of {len(nodes)} exceeds the memory budget "
            f"({cfg.block_size} rows); raise --block-size deliberately")
    scorer, structure = _build_scorer(cfg, g, X, split, args.checkpoint)
    rows = scorer.rows(nodes)
    _write_dense_csv(args.out_scores, nodes, rows)
    adj = structure.adjacency()[nodes].toarray()
    _write_dense_csv(args.out_weights, nodes, adj)
    print(f"wrote {args.out_scores} and {args.out_weights} "
          f"({len(nodes)} rows x {g.n} columns)")
    return 0


def _write_dense_csv(path, nodes, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for node, row in zip(nodes, rows):
            fh.write(str(node) + "," + ",".join("%.17g" % x for x in row)
                     + "\n")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gelato",
        description="Link prediction via attribute-enhanced graphs and "
                    "random-walk similarity, with unbiased evaluation.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("split", help="generate a train/valid/test edge split")
    _add_common(p)
    p.add_argument("--out", required=True, help="split file to write")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train the enhancement MLP end-to-end")
    _add_common(p)
    p.add_argument("--out-checkpoint", required=True)
    p.add_argument("--out-history", default=None,
                   help="write per-epoch records here instead of stdout")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="rank-based evaluation (unbiased default)")
    _add_common(p)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--report", default=None, help="write JSON report here")
    p.add_argument("--pr-csv", default=None, help="write PR curve CSV here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("baseline", help="evaluate an untrained heuristic")
    _add_common(p)
    p.add_argument("--kind", required=True,
                   choices=("cn", "aa", "ra", "cos", "ac"))
    p.add_argument("--report", default=None)
    p.add_argument("--pr-csv", default=None)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("export-scores",
                       help="dump dense score and weight rows for a node subset")
    _add_common(p)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--nodes", nargs="+", type=int, required=True)
    p.add_argument("--out-scores", required=True)
    p.add_argument("--out-weights", required=True)
    p.set_defaults(func=cmd_export_scores)

    p = sub.add_parser("show-config", help="print the resolved configuration")
    _add_common(p)
    p.set_defaults(func=cmd_show_config)
    return parser


def cmd_show_config(args) -> int:
    print(config_to_text(_resolve_config(args)), end="")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4
    except GelatoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
