"""Matrix-factorization recommender with mini-batch Adam training."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 40
    batch_size: int = 2048
    l2: float = 0.005
    learning_rate: float = 0.005
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    rng_seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.l2 < 0:
            raise ValueError("l2 must be >= 0")


@dataclass
class MfModel:
    """Plain dot-product factor model: prediction = P[u] . Q[i]."""

    P: np.ndarray
    Q: np.ndarray

    @property
    def n_users(self) -> int:
        return self.P.shape[0]

    @property
    def n_items(self) -> int:
        return self.Q.shape[0]

    @property
    def d(self) -> int:
        return self.P.shape[1]

    def predict(self, u: int, i: int) -> float:
        return float(self.P[u] @ self.Q[i])

    def predict_pairs(self, us, its, chunk: int = 262144) -> np.ndarray:
        """Predictions for parallel index arrays, computed in chunks."""
        us = np.asarray(us)
        its = np.asarray(its)
        out = np.empty(us.size, dtype=np.float64)
        for lo in range(0, us.size, chunk):
            hi = min(lo + chunk, us.size)
            out[lo:hi] = np.einsum("ij,ij->i", self.P[us[lo:hi]], self.Q[its[lo:hi]])
        return out

    def scores(self, u: int) -> np.ndarray:
        return self.P[u] @ self.Q.T

    def copy(self) -> "MfModel":
        return MfModel(self.P.copy(), self.Q.copy())


@dataclass
class AdamState:
    mP: np.ndarray
    vP: np.ndarray
    mQ: np.ndarray
    vQ: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, model: MfModel) -> "AdamState":
        return cls(
            np.zeros_like(model.P), np.zeros_like(model.P),
            np.zeros_like(model.Q), np.zeros_like(model.Q),
        )


def init_model(n_users: int, n_items: int, d: int = 128, rng_seed: int = 0,
               init_std: float = 0.01) -> MfModel:
    """Zero-mean normal initialization with small scale; deterministic given seed."""
    if n_users < 1 or n_items < 1 or d < 1:
        raise ValueError("n_users, n_items, d must be positive")
    rng = np.random.default_rng(rng_seed)
    return MfModel(
        rng.normal(0.0, init_std, size=(n_users, d)),
        rng.normal(0.0, init_std, size=(n_items, d)),
    )


def batch_loss(P: np.ndarray, Q: np.ndarray, us, its, rs, l2: float) -> float:
    """Batch mean of squared error plus l2-decayed squared row norms.

    Per interaction: (P[u].Q[i] - r)^2 + l2 * (|P[u]|^2 + |Q[i]|^2), averaged
    over the batch, so only touched rows are regularized and the gradient
    scale is independent of the batch size. This is the exact objective whose
    gradient drives each Adam step.
    """
    us = np.asarray(us)
    its = np.asarray(its)
    pred = np.einsum("ij,ij->i", P[us], Q[its])
    err = pred - rs
    reg = np.sum(P[us] ** 2, axis=1) + np.sum(Q[its] ** 2, axis=1)
    return float(np.mean(err**2 + l2 * reg))


def _rows_grad(Pu, Qi, inv_u, inv_i, rs, l2, batch_size):
    """Gradient of `batch_loss` w.r.t. the unique touched rows Pu, Qi."""
    pred = np.einsum("ij,ij->i", Pu[inv_u], Qi[inv_i])
    err = pred - rs
    coef = (2.0 / batch_size) * err
    gP = np.zeros_like(Pu)
    np.add.at(gP, inv_u, coef[:, None] * Qi[inv_i])
    gP += (2.0 * l2 / batch_size) * np.bincount(inv_u, minlength=Pu.shape[0])[:, None] * Pu
    gQ = np.zeros_like(Qi)
    np.add.at(gQ, inv_i, coef[:, None] * Pu[inv_u])
    gQ += (2.0 * l2 / batch_size) * np.bincount(inv_i, minlength=Qi.shape[0])[:, None] * Qi
    return gP, gQ, err


def _adam_rows(param, m, v, rows, g, cfg: TrainConfig, t: int):
    b1, b2 = cfg.adam_betas
    m[rows] = b1 * m[rows] + (1.0 - b1) * g
    v[rows] = b2 * v[rows] + (1.0 - b2) * g**2
    mhat = m[rows] / (1.0 - b1**t)
    vhat = v[rows] / (1.0 - b2**t)
    param[rows] -= cfg.learning_rate * mhat / (np.sqrt(vhat) + cfg.adam_eps)


def train_epoch(model: MfModel, triples, cfg: TrainConfig, adam: AdamState,
                rng: np.random.Generator, perturb=None) -> float:
    """One seeded-shuffle pass of mini-batch Adam; returns epoch mean MSE.

    `triples` is an (users, items, ratings) array tuple. `perturb`, when
    given, is called per batch as perturb(Pu, Qi, gP, gQ, grad_fn, rng) and
    may return transient row deltas (dPu, dQi) at which the update gradient
    is re-evaluated (adversarial / noise training); the deltas are never
    applied to the parameters themselves.
    """
    us, its, rs = triples
    n = us.size
    if n == 0:
        raise ValueError("training set is empty")
    order = rng.permutation(n)
    sq_sum = 0.0
    for lo in range(0, n, cfg.batch_size):
        sel = order[lo:lo + cfg.batch_size]
        bu, bi, br = us[sel], its[sel], rs[sel]
        uu, inv_u = np.unique(bu, return_inverse=True)
        ii, inv_i = np.unique(bi, return_inverse=True)
        Pu, Qi = model.P[uu], model.Q[ii]

        def grad_fn(Pu2, Qi2):
            return _rows_grad(Pu2, Qi2, inv_u, inv_i, br, cfg.l2, sel.size)

        gP, gQ, err = grad_fn(Pu, Qi)
        sq_sum += float(np.sum(err**2))
        if perturb is not None:
            deltas = perturb(Pu, Qi, gP, gQ, grad_fn, rng)
            if deltas is not None:
                dP, dQ = deltas
                gP, gQ, _ = grad_fn(Pu + dP, Qi + dQ)
        adam.t += 1
        _adam_rows(model.P, adam.mP, adam.vP, uu, gP, cfg, adam.t)
        _adam_rows(model.Q, adam.mQ, adam.vQ, ii, gQ, cfg, adam.t)
        if not (np.all(np.isfinite(model.P[uu])) and np.all(np.isfinite(model.Q[ii]))):
            raise FloatingPointError(
                f"non-finite parameters after step {adam.t} (lr={cfg.learning_rate}, l2={cfg.l2})"
            )
    return sq_sum / n


def mse(model: MfModel, triples) -> float:
    us, its, rs = triples
    if us.size == 0:
        raise ValueError("cannot compute MSE on an empty triple set")
    return float(np.mean((model.predict_pairs(us, its) - rs) ** 2))


def fit(model: MfModel, train, validation, cfg: TrainConfig, perturb=None):
    """Train for cfg.epochs; return (best-validation snapshot, history).

    History holds one (train_mse, validation_mse) pair per epoch. The
    returned model is the epoch snapshot with the smallest validation MSE.
    """
    rng = np.random.default_rng(cfg.rng_seed)
    adam = AdamState.zeros(model)
    history = []
    best = model.copy()
    best_val = np.inf
    for _ in range(cfg.epochs):
        train_mse = train_epoch(model, train, cfg, adam, rng, perturb=perturb)
        val_mse = mse(model, validation)
        history.append((train_mse, val_mse))
        if val_mse < best_val:
            best_val = val_mse
            best = model.copy()
    return best, history


def top_k(model: MfModel, u: int, k: int, exclude=None) -> np.ndarray:
    """Indices of the k highest-prediction items, ties broken by item index.

    Excluded items never appear; fewer than k candidates returns them all.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    scores = model.scores(u).astype(np.float64)
    if exclude is not None and len(exclude) > 0:
        scores[np.asarray(exclude, dtype=np.int64)] = -np.inf
    order = np.argsort(-scores, kind="stable")
    order = order[np.isfinite(scores[order])]
    return order[:k]


CHECKPOINT_VERSION = 1


def save_model(model: MfModel, path) -> None:
    """Serialize a checkpoint as .npz with a version header."""
    np.savez(path, version=np.int64(CHECKPOINT_VERSION),
             d=np.int64(model.d), n_users=np.int64(model.n_users),
             n_items=np.int64(model.n_items), P=model.P, Q=model.Q)


def load_model(path) -> MfModel:
    with np.load(path) as z:
        version = int(z["version"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        return MfModel(z["P"].copy(), z["Q"].copy())
