"""Poison a recommender with fake user profiles and measure target exposure.

Trains a clean victim model, then injects fake profiles from four
generators -- random, average, projected gradient ascent (PGA), and the
top-k-gap variant restricted to influential users (TNA) -- and retrains.
The attack succeeds when unpopular target items start appearing in
top-K recommendation lists (target HR rises from ~0).

The attacker only sees a `knowledge-cost` fraction of the ratings and is
limited to an `attack-size` fraction of fake users, each rating the
targets plus an average-profile-length filler set.

Note: on this low-rank synthetic generator the gradient-crafted profiles
transfer much more weakly to the retrained victim than the heuristic
ones; on real rating data the relationship reverses.

Run:  python3 demos/02_poisoning_attacks.py
"""

import argparse

from recdefend import (SplitConfig, ThreatModel, TrainConfig, average_attack,
                       average_filler_budget, build_surrogate, fit,
                       hit_ratio_targets, hit_ratio_test, init_model, inject,
                       pga_attack, random_attack, select_targets,
                       split_dataset, synthetic_dataset, tna_attack)
from recdefend.attacks import capture_data


def refit(ds, d, cfg):
    model, _ = fit(init_model(ds.n_users, ds.n_items, d, rng_seed=cfg.rng_seed),
                   ds.triples(0), ds.triples(1), cfg)
    return model


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--d", type=int, default=16)
    ap.add_argument("--k", type=int, default=20)
    ap.add_argument("--attack-size", type=float, default=0.05,
                    help="fake users as a fraction of real users")
    ap.add_argument("--knowledge-cost", type=float, default=0.5,
                    help="fraction of ratings the attacker observes")
    ap.add_argument("--n-targets", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    ds = synthetic_dataset(200, 300, d=4, ratings_per_user=20, rng_seed=1,
                           noise=0.2)
    sp = split_dataset(ds, SplitConfig(rng_seed=args.seed))
    cfg = TrainConfig(epochs=30, batch_size=256, learning_rate=0.01,
                      rng_seed=args.seed)

    targets = select_targets(sp, "unpopular", args.n_targets, rng_seed=args.seed)
    print(f"target items (unpopular): {targets.tolist()}")

    tm = ThreatModel(target_items=targets,
                     filler_budget=average_filler_budget(sp),
                     attack_size=args.attack_size,
                     knowledge_cost=args.knowledge_cost,
                     rng_seed=args.seed)
    captured = capture_data(sp, tm)
    print(f"attacker sees {captured.users.size} of {sp.users.size} ratings; "
          f"filler budget {tm.filler_budget} items per fake profile")

    origin = refit(sp, args.d, cfg)
    h0 = hit_ratio_targets(origin, sp, targets, args.k)
    print(f"\nclean model:  target HR@{args.k} {h0:.4f}  "
          f"test HR@{args.k} {hit_ratio_test(origin, sp, args.k):.4f}")

    _, surrogate = build_surrogate(sp, tm, cfg, d=args.d)
    attacks = {
        "random": random_attack(captured, tm),
        "average": average_attack(captured, tm),
        "pga": pga_attack(surrogate, captured, tm, steps=30),
        "tna": tna_attack(surrogate, captured, tm, subset_size=20, steps=30),
    }
    print(f"\n{'attack':<10} {'fakes':>6} {'target HR':>10} {'test HR':>9}")
    for name, profiles in attacks.items():
        poisoned = inject(sp, profiles)
        model = refit(poisoned, args.d, cfg)
        print(f"{name:<10} {len(profiles):>6d}"
              f" {hit_ratio_targets(model, poisoned, targets, args.k):>10.4f}"
              f" {hit_ratio_test(model, poisoned, args.k):>9.4f}")


if __name__ == "__main__":
    main()
