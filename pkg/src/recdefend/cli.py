"""Command-line interface.

Verbs: ingest, train, attack, defend, evaluate, grid, sweep. Most flags
mirror the experiment config fields; `--config` points at a YAML file whose
keys the flags override. Environment variables: RECDEFEND_OUT overrides the
output directory, RECDEFEND_THREADS caps the BLAS thread count.
"""

from __future__ import annotations

import argparse
import os
import sys


def _apply_env():
    threads = os.environ.get("RECDEFEND_THREADS")
    if threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, threads)


_apply_env()

import numpy as np  # noqa: E402

from . import attacks as atk  # noqa: E402
from .cotrain import CoTrainConfig, cotrain, write_round_log  # noqa: E402
from .data import SplitConfig, filter_cold_start, load_ratings, split_dataset  # noqa: E402
from .defenses import PerturbConfig, at_train, rat_train  # noqa: E402
from .metrics import hit_ratio_targets, hit_ratio_test, quartiles, rank_shift  # noqa: E402
from .mf import TrainConfig, fit, init_model, load_model, save_model  # noqa: E402
from .runner import (ATTACKS, DEFENSES, ExperimentConfig, emit_tables,  # noqa: E402
                     load_config, run_cell, run_grid, run_sweep)


def _add_data_args(p):
    p.add_argument("--data", required=True, help="rating file path")
    p.add_argument("--format", default="tab", choices=["tab", "double-colon", "comma", "space"])
    p.add_argument("--min-ratings", type=int, default=0,
                   help="cold-start filter threshold (0 = keep everyone)")


def _add_train_args(p):
    p.add_argument("--d", type=int, default=128, help="latent dimension")
    p.add_argument("--epochs", type=int, default=40)
    p.add_argument("--batch-size", type=int, default=2048)
    p.add_argument("--l2", type=float, default=0.005)
    p.add_argument("--lr", type=float, default=0.005)
    p.add_argument("--seed", type=int, default=0)


def _load(args):
    ds = load_ratings(args.data, args.format)
    if args.min_ratings > 0:
        ds = filter_cold_start(ds, args.min_ratings)
    return ds


def _split(ds, args):
    return split_dataset(ds, SplitConfig(rng_seed=args.seed))


def _train_cfg(args) -> TrainConfig:
    return TrainConfig(epochs=args.epochs, batch_size=args.batch_size,
                       l2=args.l2, learning_rate=args.lr, rng_seed=args.seed)


def _out_dir(args):
    return os.environ.get("RECDEFEND_OUT", getattr(args, "out_dir", None) or "results")


def cmd_ingest(args):
    ds = _load(args)
    print(ds.summary(), end="")


def cmd_train(args):
    ds = _split(_load(args), args)
    model = init_model(ds.n_users, ds.n_items, args.d, rng_seed=args.seed)
    best, history = fit(model, ds.triples(0), ds.triples(1), _train_cfg(args))
    for epoch, (tr, va) in enumerate(history):
        print(f"epoch {epoch:3d}  train_mse {tr:.6f}  val_mse {va:.6f}")
    save_model(best, args.out)
    print(f"saved best-validation checkpoint to {args.out}")


def cmd_attack(args):
    ds = _split(_load(args), args)
    targets = atk.select_targets(ds, args.target_mode, args.n_targets, rng_seed=args.seed)
    tm = atk.ThreatModel(target_items=targets,
                         filler_budget=atk.average_filler_budget(ds),
                         knowledge_cost=args.knowledge_cost,
                         attack_size=args.attack_size,
                         target_mode=args.target_mode, rng_seed=args.seed)
    captured, surrogate = atk.build_surrogate(ds, tm, _train_cfg(args), d=args.d)
    if args.attack == "random":
        fp = atk.random_attack(captured, tm)
    elif args.attack == "average":
        fp = atk.average_attack(captured, tm)
    elif args.attack == "pga":
        fp = atk.pga_attack(surrogate, captured, tm, steps=args.steps,
                            step_size=args.step_size)
    else:
        subset = max(1, int(round(args.tna_subset_fraction * ds.n_real_users)))
        fp = atk.tna_attack(surrogate, captured, tm, subset_size=subset,
                            top_k_items=args.tna_top_k, steps=args.steps,
                            step_size=args.step_size)
    atk.save_profiles(fp, args.out)
    print(f"wrote {len(fp)} {args.attack} profiles (targets: {targets.tolist()}) to {args.out}")


def cmd_defend(args):
    ds = _split(_load(args), args)
    if args.profiles:
        fp = atk.load_profiles(args.profiles, ds.n_items)
        ds = atk.inject(ds, fp)
        print(f"injected {len(fp)} fake profiles")
    cfg = _train_cfg(args)
    if args.defense == "at":
        model, _ = at_train(ds, cfg, PerturbConfig(epsilon=args.epsilon), d=args.d)
        save_model(model, args.out)
    elif args.defense == "rat":
        model, _ = rat_train(ds, cfg, PerturbConfig(noise_std=args.noise_std), d=args.d)
        save_model(model, args.out)
    else:
        cc = CoTrainConfig(total_epochs=args.epochs, pretrain_epochs=args.pretrain_epochs,
                           pseudo_fraction=args.pseudo_fraction, rng_seed=args.seed)
        models, log = cotrain(ds, cc, cfg, d=args.d)
        base, ext = os.path.splitext(args.out)
        for j, m in enumerate(models):
            save_model(m, f"{base}_{j}{ext}")
        write_round_log(log, f"{base}_rounds.csv")
        print(f"saved three checkpoints {base}_[012]{ext} and round log {base}_rounds.csv")
    print(f"defense {args.defense} done")


def cmd_evaluate(args):
    ds = _split(_load(args), args)
    model = load_model(args.model)
    hr = hit_ratio_test(model, ds, args.k)
    print(f"test_hr@{args.k}: {hr:.4f}")
    if args.targets:
        targets = np.array([int(t) for t in args.targets.split(",")])
        print(f"target_hr@{args.k}: {hit_ratio_targets(model, ds, targets, args.k):.4f}")
        if args.model_b:
            other = load_model(args.model_b)
            q1, q2, q3 = quartiles(rank_shift(model, other, targets, ds))
            print(f"rank_shift quartiles (model -> model-b): {q1:.1f} {q2:.1f} {q3:.1f}")


def cmd_grid(args):
    cfg = load_config(args.config, out_dir=_out_dir(args),
                      repeats=args.repeats, base_seed=args.base_seed)
    attacks = args.attacks.split(",") if args.attacks else list(ATTACKS)
    defenses = args.defenses.split(",") if args.defenses else list(DEFENSES)
    reports = run_grid(cfg, attacks, defenses)
    paths = emit_tables(reports, cfg.out_dir)
    for name, path in paths.items():
        print(f"{name}: {path}")


def cmd_sweep(args):
    cfg = load_config(args.config, out_dir=_out_dir(args),
                      repeats=args.repeats, base_seed=args.base_seed)
    values = [float(v) for v in args.values.split(",")]
    run_sweep(cfg, args.axis, values)
    print(f"sweep written to {os.path.join(cfg.out_dir, f'sweep_{args.axis}.csv')}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="recdefend", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="load a rating file and print a summary")
    _add_data_args(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", help="fit a plain MF model, save a checkpoint")
    _add_data_args(p)
    _add_train_args(p)
    p.add_argument("--out", required=True, help="checkpoint path (.npz)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("attack", help="generate fake profiles as CSV")
    _add_data_args(p)
    _add_train_args(p)
    p.add_argument("--attack", required=True, choices=[a for a in ATTACKS if a != "none"])
    p.add_argument("--out", required=True, help="profile CSV path")
    p.add_argument("--knowledge-cost", type=float, default=0.4)
    p.add_argument("--attack-size", type=float, default=0.03)
    p.add_argument("--n-targets", type=int, default=5)
    p.add_argument("--target-mode", default="random", choices=["random", "unpopular"])
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--step-size", type=float, default=0.1)
    p.add_argument("--tna-subset-fraction", type=float, default=0.1)
    p.add_argument("--tna-top-k", type=int, default=10)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("defend", help="train a defended model (optionally on injected data)")
    _add_data_args(p)
    _add_train_args(p)
    p.add_argument("--defense", required=True, choices=[d for d in DEFENSES if d != "none"])
    p.add_argument("--profiles", help="fake-profile CSV to inject before training")
    p.add_argument("--out", required=True, help="checkpoint path (.npz)")
    p.add_argument("--epsilon", type=float, default=0.03)
    p.add_argument("--noise-std", type=float, default=0.01)
    p.add_argument("--pretrain-epochs", type=int, default=4)
    p.add_argument("--pseudo-fraction", type=float, default=1.0)
    p.set_defaults(func=cmd_defend)

    p = sub.add_parser("evaluate", help="hit-ratio metrics for a checkpoint")
    _add_data_args(p)
    p.add_argument("--model", required=True)
    p.add_argument("--model-b", help="second checkpoint for rank-shift comparison")
    p.add_argument("--targets", help="comma-separated target item indices")
    p.add_argument("--k", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("grid", help="attack x defense grid from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--attacks", help="comma-separated subset (default: all)")
    p.add_argument("--defenses", help="comma-separated subset (default: all)")
    p.add_argument("--repeats", type=int)
    p.add_argument("--base-seed", type=int, dest="base_seed")
    p.add_argument("-o", "--out-dir", dest="out_dir")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("sweep", help="sweep one axis of the experiment config")
    p.add_argument("--config", required=True)
    p.add_argument("--axis", required=True,
                   choices=["knowledge_cost", "pseudo_fraction", "attack_size"])
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--repeats", type=int)
    p.add_argument("--base-seed", type=int, dest="base_seed")
    p.add_argument("-o", "--out-dir", dest="out_dir")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    args.func(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
