"""Synthetic rating data with low-rank structure, for demos and fast tests."""

from __future__ import annotations

import numpy as np

from .data import RatingDataset

DEFAULT_GRID = np.array([0.2, 0.4, 0.6, 0.8, 1.0])


def synthetic_dataset(n_users: int = 200, n_items: int = 300, d: int = 8,
                      ratings_per_user: int = 20, rng_seed: int = 0,
                      noise: float = 0.1, grid=DEFAULT_GRID) -> RatingDataset:
    """Generate an unsplit dataset from latent user/item factors.

    Each user rates `ratings_per_user` items sampled with popularity skew;
    the rating is an affine transform of the factor dot product plus noise,
    snapped to the grid. Deterministic given the seed.
    """
    grid = np.asarray(grid, dtype=np.float64)
    rng = np.random.default_rng(rng_seed)
    U = rng.normal(0.0, 1.0, size=(n_users, d))
    V = rng.normal(0.0, 1.0, size=(n_items, d))
    # popularity skew so "unpopular" item selection has candidates
    pop = rng.dirichlet(np.full(n_items, 0.3))

    raw = U @ V.T
    lo, hi = np.percentile(raw, [5, 95])
    scaled = (raw - lo) / max(hi - lo, 1e-9)

    mids = (grid[:-1] + grid[1:]) / 2.0
    users, items, ratings = [], [], []
    for u in range(n_users):
        n_u = min(ratings_per_user, n_items)
        its = rng.choice(n_items, size=n_u, replace=False, p=pop)
        vals = scaled[u, its] * (grid[-1] - grid[0]) + grid[0]
        vals = vals + rng.normal(0.0, noise, size=n_u)
        snapped = grid[np.searchsorted(mids, vals, side="right")]
        users.append(np.full(n_u, u, dtype=np.int64))
        items.append(its.astype(np.int64))
        ratings.append(snapped)
    users = np.concatenate(users)
    items = np.concatenate(items)
    ratings = np.concatenate(ratings)
    return RatingDataset(n_users, n_items, users, items, ratings, grid)
