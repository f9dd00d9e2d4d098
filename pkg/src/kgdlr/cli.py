"""Command-line front end: ``kgdlr train|eval|sample-stats|export``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from .dataset import DataError, VocabularyError, build_filter_index, compute_bern_stats, load_dataset
from .evaluation import default_workers, evaluate
from .models import CheckpointError, ConfigError, load_checkpoint
from .pipeline import resolve_config, run_training
from .sampling import choose_slots, slot_probabilities

logger = logging.getLogger("kgdlr")


def _add_train(sub):
    p = sub.add_parser("train", help="train a model with DLR/DLR2 scheduling")
    p.add_argument("--data", dest="data_dir", help="directory with train/valid/test.txt")
    p.add_argument("--output", dest="output_dir")
    p.add_argument("--name", dest="run_name")
    p.add_argument("--preset", choices=["fb15k", "wn18"])
    p.add_argument("--config", dest="config_file", help="JSON config file")
    p.add_argument("--model", type=str.lower, choices=["transe", "transh", "transr", "transd"])
    p.add_argument("--dim", type=int)
    p.add_argument("--dim-relation", type=int)
    p.add_argument("--margin", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--dis", type=str.upper, choices=["L1", "L2"])
    g = p.add_mutually_exclusive_group()
    g.add_argument("--dlr", dest="schedule", action="store_const", const="dlr")
    g.add_argument("--dlr2", dest="schedule", action="store_const", const="dlr2")
    p.add_argument("--lr", type=float)
    p.add_argument("--lr1", type=float)
    p.add_argument("--lr2", type=float)
    p.add_argument("--lr-factor", type=float)
    p.add_argument("--eval-every", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--max-decreases", type=int)
    p.add_argument("--epochs", dest="max_epochs", type=int)
    p.add_argument("--sampler", type=str.lower, choices=["nse", "nser"])
    p.add_argument("--bern", action="store_const", const=True)
    p.add_argument("--max-resample", type=int)
    p.add_argument("--filter-scope", choices=["all", "train"])
    p.add_argument("--val-sample", type=int)
    p.add_argument("--pretrain", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--pretrain-epochs", dest="pretrain_max_epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_train)


def _add_eval(sub):
    p = sub.add_parser("eval", help="filtered MeanRank / hits@10 of a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test", choices=["train", "valid", "test"])
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--engine", default="parallel", choices=["naive", "parallel"])
    p.add_argument("--compare", action="store_true", help="run both engines and check their ranks agree")
    p.add_argument("--limit", type=int, default=None, help="evaluate only the first N triples")
    p.add_argument("--log", help="append the record to this JSON-lines file")
    p.set_defaults(func=cmd_eval)


def _add_stats(sub):
    p = sub.add_parser("sample-stats", help="negative-sampling slot probabilities and Bern statistics")
    p.add_argument("--data")
    p.add_argument("--entities", type=int)
    p.add_argument("--relations", type=int)
    p.add_argument("--draws", type=int, default=0, help="also report empirical frequencies")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_sample_stats)


def _add_export(sub):
    p = sub.add_parser("export", help="dump embeddings as text")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", help="output file (default: stdout)")
    p.set_defaults(func=cmd_export)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kgdlr", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_train(sub)
    _add_eval(sub)
    _add_stats(sub)
    _add_export(sub)
    return parser


def cmd_train(args) -> int:
    keys = ("data_dir", "output_dir", "run_name", "dim", "dim_relation", "margin", "batch_size", "dis",
            "schedule", "lr", "lr1", "lr2", "lr_factor", "eval_every", "patience", "max_decreases",
            "max_epochs", "sampler", "bern", "max_resample", "filter_scope", "val_sample", "pretrain",
            "pretrain_max_epochs", "seed", "workers", "model", "preset")
    overrides = {k: getattr(args, k) for k in keys}
    cfg = resolve_config(config_file=args.config_file, overrides=overrides)
    if not cfg.data_dir:
        raise ConfigError("--data is required")
    run_dir = run_training(cfg)
    print(json.dumps({"run_dir": run_dir}))
    return 0


def _compare(a, b) -> bool:
    return np.array_equal(a.head_ranks, b.head_ranks) and np.array_equal(a.tail_ranks, b.tail_ranks)


def cmd_eval(args) -> int:
    if not os.path.exists(args.checkpoint):
        raise FileNotFoundError(f"checkpoint not found: {args.checkpoint}")
    params, dis = load_checkpoint(args.checkpoint)
    data = load_dataset(args.data)
    if (params.n_entities, params.n_relations) != (data.vocab.n_entities, data.vocab.n_relations):
        raise ConfigError(f"checkpoint has {params.n_entities} entities / {params.n_relations} relations, "
                          f"dataset has {data.vocab.n_entities} / {data.vocab.n_relations}")
    split = data.split(args.split)
    if args.limit:
        split = split.subset(slice(0, args.limit))
    filt = build_filter_index([data.train, data.valid, data.test], data.vocab)
    workers = args.workers if args.workers is not None else default_workers()
    if args.compare:
        naive = evaluate(params, dis, split, filt, "naive")
        par = evaluate(params, dis, split, filt, "parallel", workers)
        agree = _compare(naive, par)
        record = par.to_record()
        record.update(engine="compare", engines_agree=agree, naive_ms_per_triple=naive.ms_per_triple,
                      parallel_ms_per_triple=par.ms_per_triple, workers=workers, split=args.split)
        print("engines agree" if agree else "ENGINES DISAGREE", file=sys.stderr)
    else:
        m = evaluate(params, dis, split, filt, args.engine, workers)
        record = m.to_record()
        record.update(engine=args.engine, workers=workers, split=args.split)
        agree = True
    print(json.dumps(record))
    if args.log:
        with open(args.log, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record) + "\n")
    return 0 if agree else 3


def cmd_sample_stats(args) -> int:
    bern = None
    if args.data:
        data = load_dataset(args.data)
        n_ent, n_rel = data.vocab.n_entities, data.vocab.n_relations
        if not len(data.train):
            raise DataError("empty dataset")
        bern = compute_bern_stats(data.train)
    elif args.entities is not None and args.relations is not None:
        n_ent, n_rel = args.entities, args.relations
    else:
        raise ConfigError("give --data or both --entities and --relations")
    if n_ent < 1:
        raise DataError("empty dataset")
    p_head, p_rel, p_tail = slot_probabilities("nser", n_ent, n_rel)
    record = {"entities": n_ent, "relations": n_rel, "total": 2 * n_ent + n_rel,
              "nser": {"head": p_head, "relation": p_rel, "tail": p_tail}}
    if bern is not None:
        tph = np.array(list(bern.tph.values()))
        hpt = np.array(list(bern.hpt.values()))
        record["bern"] = {"relations": len(tph), "tph_mean": float(tph.mean()), "hpt_mean": float(hpt.mean()),
                          "head_prob_mean": float(np.mean(tph / (tph + hpt)))}
    if args.draws:
        slots = choose_slots("nser", n_ent, n_rel, np.random.default_rng(args.seed), args.draws)
        freq = np.bincount(slots, minlength=3) / args.draws
        record["empirical"] = {"draws": args.draws, "head": float(freq[0]), "relation": float(freq[1]),
                               "tail": float(freq[2])}
    print(json.dumps(record, indent=2))
    return 0


def cmd_export(args) -> int:
    params, _ = load_checkpoint(args.checkpoint)
    fh = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        for table in (params.entity, params.relation):
            for row in table.astype(np.float32):
                fh.write(" ".join(f"{x:.9g}" for x in row) + "\n")
    finally:
        if args.out:
            fh.close()
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (FileNotFoundError, DataError, VocabularyError, ConfigError, CheckpointError, ValueError) as exc:
        print(f"kgdlr {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
