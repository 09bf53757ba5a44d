"""Three-model co-training defense with consistency-checked pseudo-labels.

Three factor models are pre-trained on the labeled ratings, then per round
each model additionally trains on unrated pairs that the other two models
label identically after projection onto the discrete rating grid.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .data import RatingDataset, SPLIT_TRAIN, SPLIT_VALIDATION, sample_unrated_pairs
from .mf import AdamState, MfModel, TrainConfig, init_model, mse, top_k, train_epoch


@dataclass(frozen=True)
class Projection:
    """Snap continuous scores to the nearest legal grid rating.

    Exact midpoints round to the larger grid value; out-of-range inputs
    clamp to the grid ends.
    """

    grid: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=np.float64)
        if grid.size == 0:
            raise ValueError("projection grid must be nonempty")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("projection grid must be strictly increasing")
        object.__setattr__(self, "grid", grid)

    def __call__(self, x):
        mids = (self.grid[:-1] + self.grid[1:]) / 2.0
        idx = np.searchsorted(mids, x, side="right")
        out = self.grid[idx]
        return float(out) if np.isscalar(x) else out


@dataclass(frozen=True)
class CoTrainConfig:
    total_epochs: int = 40
    pretrain_epochs: int = 4
    pseudo_fraction: float = 1.0
    resample_each_round: bool = True
    pseudo_cap_factor: float = 20.0
    rng_seed: int = 0

    def __post_init__(self):
        if not 1 <= self.pretrain_epochs <= self.total_epochs:
            raise ValueError("need 1 <= pretrain_epochs <= total_epochs")
        if not 0.0 < self.pseudo_fraction <= 1.0:
            raise ValueError("pseudo_fraction must lie in (0, 1]")


def model_seeds(cfg: CoTrainConfig, train_cfg: TrainConfig):
    """(init_seed, shuffle_seed) per model; diversity comes from these alone."""
    return [(cfg.rng_seed + j, train_cfg.rng_seed + j) for j in range(3)]


def consistent_labels(h_a: MfModel, h_b: MfModel, cand_users, cand_items,
                      proj: Projection):
    """Candidates where both models project to the same grid rating.

    Returns (users, items, labels); labels are the agreed grid values.
    """
    cand_users = np.asarray(cand_users, dtype=np.int64)
    cand_items = np.asarray(cand_items, dtype=np.int64)
    pa = proj(h_a.predict_pairs(cand_users, cand_items))
    pb = proj(h_b.predict_pairs(cand_users, cand_items))
    agree = pa == pb
    return cand_users[agree], cand_items[agree], pa[agree]


def cotrain(ds: RatingDataset, cfg: CoTrainConfig, train_cfg: TrainConfig,
            d: int = 128):
    """Run the full co-training procedure on a split dataset.

    Pre-trains three models (distinct seeds, same labeled data) for
    `pretrain_epochs`, then for every remaining epoch trains each model j on
    the labeled triples plus the pseudo-labels that models j+1 and j+2 agree
    on over sampled unrated pairs. Pseudo-label batches beyond
    `pseudo_cap_factor * |labeled|` are subsampled.

    Returns (models, log): the three best-validation snapshots and a list of
    per-round dicts (round, model_index, candidate_count, pseudo_count,
    agreement_rate, validation_mse).
    """
    if ds.split is None:
        raise ValueError("dataset must be split before co-training")
    train = ds.triples(SPLIT_TRAIN)
    validation = ds.triples(SPLIT_VALIDATION)
    proj = Projection(ds.rating_grid)
    cap = int(cfg.pseudo_cap_factor * train[0].size)

    seeds = model_seeds(cfg, train_cfg)
    models = [init_model(ds.n_users, ds.n_items, d, rng_seed=s_init) for s_init, _ in seeds]
    adams = [AdamState.zeros(m) for m in models]
    rngs = [np.random.default_rng(s_shuf) for _, s_shuf in seeds]
    cand_rng = np.random.default_rng(np.random.SeedSequence([cfg.rng_seed, 0x5EED]))

    best = [m.copy() for m in models]
    best_val = [np.inf] * 3

    def step(j, triples):
        train_epoch(models[j], triples, train_cfg, adams[j], rngs[j])
        val = mse(models[j], validation)
        if val < best_val[j]:
            best_val[j] = val
            best[j] = models[j].copy()
        return val

    log = []
    for epoch in range(cfg.pretrain_epochs):
        for j in range(3):
            step(j, train)

    candidates = None
    for epoch in range(cfg.pretrain_epochs, cfg.total_epochs):
        for j in range(3):
            if candidates is None or cfg.resample_each_round:
                candidates = sample_unrated_pairs(
                    ds, cfg.pseudo_fraction,
                    rng_seed=int(cand_rng.integers(2**63)))
            pu, pi, pr = consistent_labels(
                models[(j + 1) % 3], models[(j + 2) % 3],
                candidates[0], candidates[1], proj)
            n_agree = pu.size
            if n_agree > cap:
                keep = cand_rng.choice(n_agree, size=cap, replace=False)
                pu, pi, pr = pu[keep], pi[keep], pr[keep]
            merged = (
                np.concatenate([train[0], pu]),
                np.concatenate([train[1], pi]),
                np.concatenate([train[2], pr]),
            )
            val = step(j, merged)
            log.append({
                "round": epoch,
                "model_index": j,
                "candidate_count": int(candidates[0].size),
                "pseudo_count": int(pu.size),
                "agreement_rate": n_agree / max(1, candidates[0].size),
                "validation_mse": val,
            })
    return best, log


def recommend(models, u: int, k: int, exclude=None, model_index: int = 0) -> np.ndarray:
    """Top-k list from one designated model; no ensembling at inference."""
    return top_k(models[model_index], u, k, exclude=exclude)


def write_round_log(log, path) -> None:
    fields = ["round", "model_index", "candidate_count", "pseudo_count",
              "agreement_rate", "validation_mse"]
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=fields)
        w.writeheader()
        w.writerows(log)
