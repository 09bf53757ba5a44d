"""Train a matrix-factorization recommender on synthetic ratings.

Generates a low-rank synthetic rating matrix, splits it 7:1:2 into
train/validation/test, fits user and item factors with mini-batch Adam,
and reports leave-one-out style hit ratio on the held-out test ratings.

Run:  python3 demos/01_train_recommender.py
"""

import argparse

import numpy as np

from recdefend import (SplitConfig, TrainConfig, fit, hit_ratio_test,
                       init_model, split_dataset, synthetic_dataset, top_k)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--users", type=int, default=200)
    ap.add_argument("--items", type=int, default=300)
    ap.add_argument("--d", type=int, default=16, help="latent dimension")
    ap.add_argument("--epochs", type=int, default=30)
    ap.add_argument("--k", type=int, default=20, help="recommendation list length")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    print(f"generating {args.users}x{args.items} synthetic dataset ...")
    ds = synthetic_dataset(args.users, args.items, d=4, ratings_per_user=20,
                           rng_seed=1, noise=0.2)
    sp = split_dataset(ds, SplitConfig(rng_seed=args.seed))
    for name, part in (("train", 0), ("validation", 1), ("test", 2)):
        print(f"  {name:<10} {sp.triples(part)[0].size:6d} ratings")

    cfg = TrainConfig(epochs=args.epochs, batch_size=256, learning_rate=0.01,
                      rng_seed=args.seed)
    model = init_model(sp.n_users, sp.n_items, args.d, rng_seed=args.seed)
    print(f"\ntraining d={args.d} model for {cfg.epochs} epochs ...")
    model, history = fit(model, sp.triples(0), sp.triples(1), cfg)
    step = max(1, len(history) // 6)
    for epoch in range(0, len(history), step):
        train_mse, val_mse = history[epoch]
        print(f"  epoch {epoch:3d}  train_mse {train_mse:.4f}"
              f"  val_mse {val_mse:.4f}")

    hr = hit_ratio_test(model, sp, args.k)
    print(f"\ntest HR@{args.k}: {hr:.4f}")

    u = 0
    seen = sp.items[sp.users == u]
    recs = top_k(model, u, 10, exclude=seen)
    print(f"top-10 unseen items for user {u}: {np.array2string(recs)}")


if __name__ == "__main__":
    main()
