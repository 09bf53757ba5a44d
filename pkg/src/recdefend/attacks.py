"""Low-knowledge poisoning attacks on matrix-factorization recommenders.

The attacker samples a fraction of the training ratings (knowledge cost),
fits a local surrogate model on it, crafts fake profiles under a filler
budget, and injects them into the victim's training data.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .data import RatingDataset, SPLIT_TRAIN
from .mf import MfModel, TrainConfig, fit, init_model

MAX_ATTACK_SIZE = 0.05


@dataclass(frozen=True)
class ThreatModel:
    target_items: np.ndarray
    filler_budget: int
    knowledge_cost: float = 0.4
    attack_size: float = 0.03
    target_mode: str = "random"
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "target_items",
                           np.asarray(self.target_items, dtype=np.int64))
        if not 0.0 < self.knowledge_cost <= 1.0:
            raise ValueError("knowledge_cost must lie in (0, 1]")
        if not 0.0 < self.attack_size <= MAX_ATTACK_SIZE:
            raise ValueError(f"attack_size must lie in (0, {MAX_ATTACK_SIZE}]")
        if self.filler_budget < 1:
            raise ValueError("filler_budget must be >= 1")
        if self.target_items.size == 0:
            raise ValueError("target_items must be nonempty")


@dataclass
class CapturedData:
    """The training triples visible to the attacker, plus victim context."""

    users: np.ndarray
    items: np.ndarray
    ratings: np.ndarray
    n_items: int
    n_real_users: int
    grid: np.ndarray

    def __len__(self):
        return self.users.size


@dataclass
class FakeProfileSet:
    """One sparse rating vector per fake user: (item indices, grid ratings)."""

    profiles: list
    attack_name: str
    n_items: int

    def __len__(self):
        return len(self.profiles)


def average_filler_budget(ds: RatingDataset) -> int:
    """Filler budget = average number of ratings per real user, rounded."""
    real = ds.users < ds.n_real_users
    return max(1, int(round(np.count_nonzero(real) / ds.n_real_users)))


def n_fake_profiles(tm: ThreatModel, n_real_users: int) -> int:
    return int(round(tm.attack_size * n_real_users))


def capture_data(ds: RatingDataset, tm: ThreatModel) -> CapturedData:
    """Uniformly sample knowledge_cost of the training triples (seeded)."""
    us, its, rs = ds.triples(SPLIT_TRAIN)
    real = us < ds.n_real_users
    us, its, rs = us[real], its[real], rs[real]
    k = int(round(tm.knowledge_cost * us.size))
    if k == 0:
        raise ValueError("captured subset is empty")
    rng = np.random.default_rng(tm.rng_seed)
    sel = rng.choice(us.size, size=k, replace=False) if k < us.size else np.arange(us.size)
    return CapturedData(us[sel], its[sel], rs[sel], ds.n_items,
                        ds.n_real_users, ds.rating_grid)


def build_surrogate(ds: RatingDataset, tm: ThreatModel, train_cfg: TrainConfig,
                    d: int = 128):
    """Capture data and fit the attacker's local simulator on it.

    The surrogate uses the victim's hyperparameters; a 10% holdout of the
    captured triples drives its best-epoch selection.
    """
    cap = capture_data(ds, tm)
    rng = np.random.default_rng(tm.rng_seed + 1)
    perm = rng.permutation(len(cap))
    n_train = max(1, int(round(0.9 * len(cap))))
    tr = perm[:n_train]
    va = perm[n_train:] if n_train < len(cap) else perm[:1]
    model = init_model(ds.n_users, ds.n_items, d, rng_seed=train_cfg.rng_seed)
    surrogate, _ = fit(
        model,
        (cap.users[tr], cap.items[tr], cap.ratings[tr]),
        (cap.users[va], cap.items[va], cap.ratings[va]),
        train_cfg,
    )
    return cap, surrogate


def select_targets(ds: RatingDataset, mode: str, n: int = 5, rng_seed: int = 0) -> np.ndarray:
    """Pick n distinct target items, uniformly at random.

    mode="random" draws from all items; mode="unpopular" from items with
    fewer than 5 training ratings.
    """
    if mode == "random":
        candidates = np.arange(ds.n_items)
    elif mode == "unpopular":
        us, its, _ = ds.triples(SPLIT_TRAIN)
        counts = np.bincount(its, minlength=ds.n_items)
        candidates = np.flatnonzero(counts < 5)
    else:
        raise ValueError(f"unknown target mode {mode!r}")
    if candidates.size < n:
        raise ValueError(f"only {candidates.size} items qualify for mode {mode!r}, need {n}")
    rng = np.random.default_rng(rng_seed)
    return np.sort(rng.choice(candidates, size=n, replace=False))


def _project(grid: np.ndarray, x):
    mids = (grid[:-1] + grid[1:]) / 2.0
    return grid[np.searchsorted(mids, x, side="right")]


def _filler_pool(captured: CapturedData, tm: ThreatModel) -> np.ndarray:
    """Non-target items the attacker has seen; fakes never rate unseen items."""
    seen = np.unique(captured.items)
    pool = seen[~np.isin(seen, tm.target_items)]
    if pool.size < tm.filler_budget:
        raise ValueError("captured data exposes fewer items than the filler budget")
    return pool


def _assemble(items_f: np.ndarray, ratings_f: np.ndarray, tm: ThreatModel,
              grid: np.ndarray):
    items = np.concatenate([tm.target_items, items_f])
    ratings = np.concatenate([np.full(tm.target_items.size, grid[-1]), ratings_f])
    order = np.argsort(items)
    return items[order], ratings[order]


def random_attack(captured: CapturedData, tm: ThreatModel) -> FakeProfileSet:
    """Targets at grid max; fillers rated from the global rating distribution.

    Filler items are sampled uniformly from the non-target items seen in the
    captured data; each filler rating is drawn from Normal(mean, std) of all
    captured ratings and projected to the grid.
    """
    rng = np.random.default_rng(tm.rng_seed + 2)
    pool = _filler_pool(captured, tm)
    mu = float(np.mean(captured.ratings))
    sigma = float(np.std(captured.ratings))
    profiles = []
    for _ in range(n_fake_profiles(tm, captured.n_real_users)):
        fillers = rng.choice(pool, size=tm.filler_budget, replace=False)
        ratings = _project(captured.grid, rng.normal(mu, sigma, size=fillers.size))
        profiles.append(_assemble(fillers, ratings, tm, captured.grid))
    return FakeProfileSet(profiles, "random", captured.n_items)


def average_attack(captured: CapturedData, tm: ThreatModel) -> FakeProfileSet:
    """As random_attack, but filler ratings follow each item's own distribution.

    Items without captured statistics fall back to the global mean/std.
    """
    rng = np.random.default_rng(tm.rng_seed + 3)
    pool = _filler_pool(captured, tm)
    mu = float(np.mean(captured.ratings))
    sigma = float(np.std(captured.ratings))
    counts = np.bincount(captured.items, minlength=captured.n_items)
    sums = np.bincount(captured.items, weights=captured.ratings, minlength=captured.n_items)
    sq_sums = np.bincount(captured.items, weights=captured.ratings**2, minlength=captured.n_items)
    seen = counts > 0
    item_mu = np.where(seen, sums / np.maximum(counts, 1), mu)
    item_var = np.where(seen, sq_sums / np.maximum(counts, 1) - item_mu**2, sigma**2)
    item_sd = np.sqrt(np.maximum(item_var, 0.0))
    profiles = []
    for _ in range(n_fake_profiles(tm, captured.n_real_users)):
        fillers = rng.choice(pool, size=tm.filler_budget, replace=False)
        raw = rng.normal(item_mu[fillers], item_sd[fillers])
        profiles.append(_assemble(fillers, _project(captured.grid, raw), tm, captured.grid))
    return FakeProfileSet(profiles, "average", captured.n_items)


class _ResponseObjective:
    """Attack objective through a differentiable surrogate response.

    The fake user's latent factor is the ridge least-squares response of the
    surrogate's item factors to the fake rating vector; target item factors
    then take one gradient step toward the fake ratings, and the objective is
    the summed predicted target rating over a weighted set of real users.
    Gradients are exact for this relaxation.
    """

    def __init__(self, surrogate: MfModel, opt_items: np.ndarray,
                 targets: np.ndarray, user_weight: np.ndarray,
                 ridge: float = 0.01, response_step: float = 1.0,
                 constant: float = 0.0):
        self.items = opt_items                       # rated item universe, targets included
        self.targets = targets
        self.t_pos = np.searchsorted(opt_items, targets)
        self.Qs = surrogate.Q[opt_items]             # n_opt x d
        H = self.Qs.T @ self.Qs + ridge * np.eye(surrogate.d)
        self.A = np.linalg.solve(H, self.Qs.T)       # d x n_opt, p_f = A @ x
        self.s = user_weight                         # d vector, sum of user factors
        self.eta = response_step
        self.constant = constant
        self.q_t = surrogate.Q[targets]              # n_targets x d

    def value(self, x: np.ndarray) -> float:
        p_f = self.A @ x
        resid = x[self.t_pos] - self.q_t @ p_f
        base = float(np.sum(self.q_t @ self.s))
        return base + 2.0 * self.eta * float(np.sum(resid) * (self.s @ p_f)) - self.constant

    def grad(self, x: np.ndarray) -> np.ndarray:
        p_f = self.A @ x
        resid = x[self.t_pos] - self.q_t @ p_f
        sp = float(self.s @ p_f)
        At_s = self.A.T @ self.s
        g = 2.0 * self.eta * (float(np.sum(resid)) * At_s - sp * (self.A.T @ self.q_t.T) @ np.ones(self.targets.size))
        e = np.zeros_like(x)
        e[self.t_pos] = 1.0
        g += 2.0 * self.eta * sp * e
        return g


def _project_feasible(x: np.ndarray, fixed: np.ndarray, lo: float, hi: float,
                      mass_budget: float | None) -> np.ndarray:
    """Clip free coordinates to [lo, hi]; enforce the rating-mass budget.

    The budget caps the total above-minimum rating mass sum(x - lo) of the
    free coordinates. When exceeded, a uniform shift (found by bisection) is
    subtracted before clipping, which keeps ascent from saturating every
    coordinate to the grid maximum and producing identical clone profiles.
    """
    y = np.clip(x, lo, hi)
    free = ~fixed
    if mass_budget is None or float(np.sum(y[free] - lo)) <= mass_budget:
        return y
    mu_lo, mu_hi = 0.0, float(np.max(x[free])) - lo
    for _ in range(60):
        mu = 0.5 * (mu_lo + mu_hi)
        if float(np.sum(np.clip(x[free] - mu, lo, hi) - lo)) > mass_budget:
            mu_lo = mu
        else:
            mu_hi = mu
    y[free] = np.clip(x[free] - mu_hi, lo, hi)
    return y


def _optimize_profile(obj: _ResponseObjective, x0: np.ndarray, fixed: np.ndarray,
                      lo: float, hi: float, steps: int, step_size: float,
                      mass_budget: float | None = None):
    """Projected gradient ascent with backtracking; fixed coords never move.

    Returns (x, objective trace over accepted steps).
    """
    x = _project_feasible(x0, fixed, lo, hi, mass_budget)
    x[fixed] = x0[fixed]
    trace = [obj.value(x)]
    lr = step_size
    for _ in range(steps):
        g = obj.grad(x)
        g[fixed] = 0.0
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite gradient in profile optimization")
        accepted = False
        for _ in range(20):
            x_new = _project_feasible(x + lr * g, fixed, lo, hi, mass_budget)
            x_new[fixed] = x[fixed]
            v = obj.value(x_new)
            if v >= trace[-1] - 1e-12:
                x = x_new
                trace.append(v)
                accepted = True
                break
            lr /= 2.0
        if not accepted:
            break
    return x, trace


def _finish_profile(x: np.ndarray, opt_items: np.ndarray, t_pos: np.ndarray,
                    tm: ThreatModel, grid: np.ndarray):
    """Keep the filler-budget largest non-target ratings, projected to the grid."""
    mask = np.ones(x.size, dtype=bool)
    mask[t_pos] = False
    cand = np.flatnonzero(mask)
    order = cand[np.argsort(-x[cand], kind="stable")][:tm.filler_budget]
    return _assemble(opt_items[order], _project(grid, x[order]), tm, grid)


def _gradient_profiles(surrogate: MfModel, captured: CapturedData, tm: ThreatModel,
                       user_weight: np.ndarray, steps: int, step_size: float,
                       ridge: float, response_step: float, constant: float,
                       name: str) -> FakeProfileSet:
    pool = _filler_pool(captured, tm)
    opt_items = np.unique(np.concatenate([pool, tm.target_items]))
    t_pos = np.searchsorted(opt_items, np.sort(tm.target_items))
    obj = _ResponseObjective(surrogate, opt_items, np.sort(tm.target_items),
                             user_weight, ridge=ridge, response_step=response_step,
                             constant=constant)
    lo, hi = float(captured.grid[0]), float(captured.grid[-1])
    # cap the above-minimum rating mass at m' fully intense fillers so the
    # ascent concentrates on the most useful items instead of saturating all
    mass_budget = tm.filler_budget * (hi - lo)
    fixed = np.zeros(opt_items.size, dtype=bool)
    fixed[t_pos] = True
    rng = np.random.default_rng(tm.rng_seed + 4)
    profiles = []
    for _ in range(n_fake_profiles(tm, captured.n_real_users)):
        x0 = rng.uniform(lo, hi, size=opt_items.size)
        x0[t_pos] = hi
        x, _ = _optimize_profile(obj, x0, fixed, lo, hi, steps, step_size,
                                 mass_budget=mass_budget)
        profiles.append(_finish_profile(x, opt_items, t_pos, tm, captured.grid))
    return FakeProfileSet(profiles, name, captured.n_items)


def pga_attack(surrogate: MfModel, captured: CapturedData, tm: ThreatModel,
               steps: int = 50, step_size: float = 0.1, ridge: float = 0.01,
               response_step: float = 1.0) -> FakeProfileSet:
    """Projected gradient ascent on predicted target ratings over all users."""
    s = np.sum(surrogate.P[:captured.n_real_users], axis=0)
    return _gradient_profiles(surrogate, captured, tm, s, steps, step_size,
                              ridge, response_step, 0.0, "pga")


def influence_ranking(captured: CapturedData) -> np.ndarray:
    """Users ordered by captured rating count, descending, ties by index."""
    counts = np.bincount(captured.users, minlength=captured.n_real_users)
    return np.argsort(-counts, kind="stable")


def tna_attack(surrogate: MfModel, captured: CapturedData, tm: ThreatModel,
               subset_size: int, top_k_items: int = 10, steps: int = 50,
               step_size: float = 0.1, ridge: float = 0.01,
               response_step: float = 1.0) -> FakeProfileSet:
    """Optimize the gap between targets and the influential users' top-k items.

    The influential subset holds the `subset_size` users with the most
    captured ratings; the gap's top-k term is constant in the fake vector, so
    the ascent direction matches pga_attack restricted to that subset.
    """
    if subset_size > captured.n_real_users:
        raise ValueError("subset_size exceeds the number of users")
    if subset_size < 1:
        raise ValueError("subset_size must be >= 1")
    subset = influence_ranking(captured)[:subset_size]
    s = np.sum(surrogate.P[subset], axis=0)
    scores = surrogate.P[subset] @ surrogate.Q.T
    part = np.partition(scores, scores.shape[1] - top_k_items, axis=1)
    top_k_mean = float(np.mean(part[:, -top_k_items:], axis=1).sum())
    constant = tm.target_items.size * top_k_mean
    return _gradient_profiles(surrogate, captured, tm, s, steps, step_size,
                              ridge, response_step, constant, "tna")


def inject(ds: RatingDataset, fp: FakeProfileSet) -> RatingDataset:
    """Append fake users as new rows; their triples are train-only.

    Real users' split tags are unchanged, and fake user indices start at
    ds.n_real_users so metrics can exclude them.
    """
    if len(fp) == 0:
        return ds
    if fp.n_items != ds.n_items:
        raise ValueError("profile item space does not match the dataset")
    fu, fi, fr = [], [], []
    for k, (items, ratings) in enumerate(fp.profiles):
        fu.append(np.full(items.size, ds.n_users + k, dtype=np.int64))
        fi.append(items)
        fr.append(ratings)
    users = np.concatenate([ds.users] + fu)
    items = np.concatenate([ds.items] + fi)
    ratings = np.concatenate([ds.ratings] + fr)
    split = None
    if ds.split is not None:
        n_new = sum(a.size for a in fu)
        split = np.concatenate([ds.split, np.full(n_new, SPLIT_TRAIN, dtype=np.int8)])
    return RatingDataset(ds.n_users + len(fp), ds.n_items, users, items, ratings,
                         ds.rating_grid, split=split, n_real_users=ds.n_real_users)


def save_profiles(fp: FakeProfileSet, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["fake_user_local_id", "item_id", "rating"])
        for k, (items, ratings) in enumerate(fp.profiles):
            for i, r in zip(items.tolist(), ratings.tolist()):
                w.writerow([k, i, repr(r)])


def load_profiles(path, n_items: int, attack_name: str = "replayed") -> FakeProfileSet:
    rows: dict[int, list] = {}
    with open(path, "r", newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        if header[:3] != ["fake_user_local_id", "item_id", "rating"]:
            raise ValueError(f"{path}: unexpected profile CSV header {header}")
        for k, i, r in reader:
            rows.setdefault(int(k), []).append((int(i), float(r)))
    profiles = []
    for k in sorted(rows):
        pairs = sorted(rows[k])
        items = np.array([p[0] for p in pairs], dtype=np.int64)
        ratings = np.array([p[1] for p in pairs], dtype=np.float64)
        profiles.append((items, ratings))
    return FakeProfileSet(profiles, attack_name, n_items)
