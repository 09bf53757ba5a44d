"""Rating data ingestion, normalization, splitting, and unrated-pair sampling."""

from __future__ import annotations

import io
from dataclasses import dataclass, field, replace

import numpy as np

SPLIT_TRAIN = 0
SPLIT_VALIDATION = 1
SPLIT_TEST = 2

_SEPARATORS = {
    "tab": "\t",
    "tsv": "\t",
    "double-colon": "::",
    "::": "::",
    "comma": ",",
    "csv": ",",
    "space": None,  # any-whitespace split
}


class DataFormatError(ValueError):
    """Raised when a rating file cannot be parsed."""


@dataclass(frozen=True)
class SplitConfig:
    test_per_user: int = 1
    train_validation_ratio: float = 0.9
    rng_seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_validation_ratio < 1.0:
            raise ValueError("train_validation_ratio must lie in (0, 1)")
        if self.test_per_user < 0:
            raise ValueError("test_per_user must be >= 0")


@dataclass
class RatingDataset:
    """Sparse rating triples with dense indices and a discrete rating grid.

    Ratings are normalized to [0, 1]; `rating_grid` is the sorted set of
    legal values. `split` is None until `split_dataset` assigns tags.
    Users with index >= `n_real_users` are injected fake profiles.
    Instances are treated as immutable after construction.
    """

    n_users: int
    n_items: int
    users: np.ndarray
    items: np.ndarray
    ratings: np.ndarray
    rating_grid: np.ndarray
    split: np.ndarray | None = None
    n_real_users: int = -1

    def __post_init__(self):
        if self.n_real_users < 0:
            self.n_real_users = self.n_users
        self.users = np.asarray(self.users, dtype=np.int64)
        self.items = np.asarray(self.items, dtype=np.int64)
        self.ratings = np.asarray(self.ratings, dtype=np.float64)
        self.rating_grid = np.asarray(self.rating_grid, dtype=np.float64)
        if self.users.size:
            if self.users.min() < 0 or self.users.max() >= self.n_users:
                raise ValueError("user index out of range")
            if self.items.min() < 0 or self.items.max() >= self.n_items:
                raise ValueError("item index out of range")
        if np.any(np.diff(self.rating_grid) <= 0):
            raise ValueError("rating_grid must be strictly increasing")
        codes = self.users * self.n_items + self.items
        if np.unique(codes).size != codes.size:
            raise ValueError("duplicate (user, item) pair")

    def __len__(self):
        return self.users.size

    @property
    def sparsity(self) -> float:
        return 1.0 - len(self) / (self.n_users * self.n_items)

    def pair_codes(self) -> np.ndarray:
        return self.users * self.n_items + self.items

    def triples(self, splits=None):
        """Return (users, items, ratings) restricted to the given split tags."""
        if splits is None or self.split is None:
            return self.users, self.items, self.ratings
        if isinstance(splits, int):
            splits = (splits,)
        mask = np.isin(self.split, splits)
        return self.users[mask], self.items[mask], self.ratings[mask]

    def rated_items_by_user(self, splits=None) -> list[np.ndarray]:
        """Per-user arrays of item indices rated in the given splits."""
        us, its, _ = self.triples(splits)
        out = [[] for _ in range(self.n_users)]
        for u, i in zip(us.tolist(), its.tolist()):
            out[u].append(i)
        return [np.asarray(lst, dtype=np.int64) for lst in out]

    def test_item_by_user(self) -> dict[int, int]:
        """Map real user -> withheld test item (users without one are absent)."""
        if self.split is None:
            raise ValueError("dataset is not split")
        us, its, _ = self.triples(SPLIT_TEST)
        return {int(u): int(i) for u, i in zip(us, its) if u < self.n_real_users}

    def summary(self) -> str:
        buf = io.StringIO()
        buf.write(f"users:    {self.n_users}")
        if self.n_real_users != self.n_users:
            buf.write(f" ({self.n_users - self.n_real_users} injected)")
        buf.write("\n")
        buf.write(f"items:    {self.n_items}\n")
        buf.write(f"ratings:  {len(self)}\n")
        buf.write(f"sparsity: {100.0 * self.sparsity:.2f}%\n")
        buf.write("grid:     " + " ".join(f"{g:g}" for g in self.rating_grid) + "\n")
        if self.split is not None:
            for name, tag in (("train", SPLIT_TRAIN), ("validation", SPLIT_VALIDATION), ("test", SPLIT_TEST)):
                buf.write(f"{name}: {int(np.sum(self.split == tag))}\n")
        return buf.getvalue()


def load_ratings(path, fmt: str = "tab") -> RatingDataset:
    """Load a rating file into an unsplit, densely reindexed dataset.

    Records are `user<sep>item<sep>rating[<sep>timestamp]`. Raw ratings are
    normalized by the maximum observed value; duplicate (user, item) records
    keep the last occurrence.
    """
    if fmt not in _SEPARATORS:
        raise ValueError(f"unknown format {fmt!r}; expected one of {sorted(_SEPARATORS)}")
    sep = _SEPARATORS[fmt]
    last: dict[tuple[int, int], float] = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(sep) if sep is not None else line.split()
            if len(parts) < 3:
                raise DataFormatError(f"{path}:{lineno}: expected at least 3 fields, got {len(parts)}")
            try:
                u, i, r = int(parts[0]), int(parts[1]), float(parts[2])
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}") from None
            last[(u, i)] = r
    if not last:
        raise DataFormatError(f"{path}: no rating records found")

    raw_u = np.array([k[0] for k in last], dtype=np.int64)
    raw_i = np.array([k[1] for k in last], dtype=np.int64)
    raw_r = np.array(list(last.values()), dtype=np.float64)
    uniq_u, users = np.unique(raw_u, return_inverse=True)
    uniq_i, items = np.unique(raw_i, return_inverse=True)
    r_max = raw_r.max()
    if r_max <= 0:
        raise DataFormatError(f"{path}: maximum raw rating must be positive")
    ratings = raw_r / r_max
    grid = np.unique(ratings)
    return RatingDataset(len(uniq_u), len(uniq_i), users, items, ratings, grid)


def filter_cold_start(ds: RatingDataset, min_ratings: int) -> RatingDataset:
    """Drop users with fewer than `min_ratings` ratings; recompact indices.

    Items left unrated by the surviving users are dropped as well.
    """
    if min_ratings < 0:
        raise ValueError("min_ratings must be >= 0")
    if min_ratings == 0:
        return ds
    counts = np.bincount(ds.users, minlength=ds.n_users)
    keep_users = counts >= min_ratings
    if not keep_users.any():
        raise ValueError("cold-start filter removed every user")
    mask = keep_users[ds.users]
    uniq_u, users = np.unique(ds.users[mask], return_inverse=True)
    uniq_i, items = np.unique(ds.items[mask], return_inverse=True)
    return RatingDataset(
        len(uniq_u), len(uniq_i), users, items, ds.ratings[mask], ds.rating_grid,
    )


def split_dataset(ds: RatingDataset, cfg: SplitConfig) -> RatingDataset:
    """Assign train/validation/test tags.

    Per user, up to `test_per_user` positive triples (rating at or above the
    grid midpoint) are withheld for test; users without a positive rating get
    no test triple. Remaining triples are partitioned train:validation at
    `train_validation_ratio` uniformly at random. Deterministic given the seed.
    """
    rng = np.random.default_rng(cfg.rng_seed)
    n = len(ds)
    split = np.full(n, SPLIT_TRAIN, dtype=np.int8)
    threshold = (ds.rating_grid[0] + ds.rating_grid[-1]) / 2.0

    order = np.argsort(ds.users, kind="stable")
    bounds = np.searchsorted(ds.users[order], np.arange(ds.n_users + 1))
    for u in range(ds.n_users):
        idx = order[bounds[u]:bounds[u + 1]]
        if idx.size < 2:
            continue
        pos = idx[ds.ratings[idx] >= threshold]
        if pos.size == 0:
            continue
        n_test = min(cfg.test_per_user, pos.size, idx.size - 1)
        if n_test > 0:
            chosen = rng.choice(pos, size=n_test, replace=False)
            split[chosen] = SPLIT_TEST

    rest = np.flatnonzero(split != SPLIT_TEST)
    perm = rng.permutation(rest.size)
    n_train = int(round(cfg.train_validation_ratio * rest.size))
    split[rest[perm[n_train:]]] = SPLIT_VALIDATION
    return replace(ds, split=split)


def sample_unrated_pairs(ds: RatingDataset, fraction: float, rng_seed: int):
    """Sample `round(fraction * |unrated|)` (user, item) pairs without replacement.

    Pairs are drawn uniformly from the cells absent from all splits.
    Returns (users, items) arrays; empty when the complement is empty.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must lie in (0, 1]")
    total = ds.n_users * ds.n_items
    unrated = np.setdiff1d(np.arange(total, dtype=np.int64), ds.pair_codes(), assume_unique=False)
    if unrated.size == 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    k = int(round(fraction * unrated.size))
    if k < unrated.size:
        rng = np.random.default_rng(rng_seed)
        unrated = unrated[rng.choice(unrated.size, size=k, replace=False)]
    return unrated // ds.n_items, unrated % ds.n_items
