"""Baseline defenses: adversarial and random parameter-perturbation training.

Both perturb the batch-touched embedding rows transiently before the outer
Adam update; neither modifies the dataset.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import RatingDataset, SPLIT_TRAIN, SPLIT_VALIDATION
from .mf import MfModel, TrainConfig, fit, init_model


@dataclass(frozen=True)
class PerturbConfig:
    epsilon: float = 0.03
    inner_steps: int = 1
    noise_std: float = 0.01
    noise_truncation: float = 2.0  # in multiples of noise_std

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        if self.inner_steps < 1:
            raise ValueError("inner_steps must be >= 1")


def _normalized(g: np.ndarray, scale: float) -> np.ndarray:
    norm = float(np.linalg.norm(g))
    if norm == 0.0:
        return np.zeros_like(g)
    return (scale / norm) * g


def adversarial_perturb(pc: PerturbConfig):
    """Per-batch gradient-direction perturbation of norm epsilon per block."""

    def perturb(Pu, Qi, gP, gQ, grad_fn, rng):
        if pc.epsilon == 0.0:
            return None
        if not (np.any(gP) or np.any(gQ)):
            return None
        step = pc.epsilon / pc.inner_steps
        dP = _normalized(gP, step)
        dQ = _normalized(gQ, step)
        for _ in range(pc.inner_steps - 1):
            g2P, g2Q, _ = grad_fn(Pu + dP, Qi + dQ)
            dP += _normalized(g2P, step)
            dQ += _normalized(g2Q, step)
        # ascent may fold back; rescale each block to norm epsilon exactly
        dP = _normalized(dP, pc.epsilon)
        dQ = _normalized(dQ, pc.epsilon)
        return dP, dQ

    return perturb


def truncated_normal(rng: np.random.Generator, std: float, bound: float, size) -> np.ndarray:
    """Normal(0, std) redrawn until every sample lies within +/- bound."""
    out = rng.normal(0.0, std, size=size)
    while True:
        bad = np.abs(out) > bound
        if not bad.any():
            return out
        out[bad] = rng.normal(0.0, std, size=int(bad.sum()))


def random_perturb(pc: PerturbConfig, noise_seed: int):
    """Per-batch i.i.d. truncated-normal perturbation of the touched rows."""
    noise_rng = np.random.default_rng(np.random.SeedSequence([noise_seed, 0xA7]))
    bound = pc.noise_truncation * pc.noise_std

    def perturb(Pu, Qi, gP, gQ, grad_fn, rng):
        if pc.noise_std == 0.0:
            return None
        dP = truncated_normal(noise_rng, pc.noise_std, bound, Pu.shape)
        dQ = truncated_normal(noise_rng, pc.noise_std, bound, Qi.shape)
        return dP, dQ

    return perturb


def _defended_fit(ds: RatingDataset, train_cfg: TrainConfig, perturb, d: int):
    if ds.split is None:
        raise ValueError("dataset must be split")
    model = init_model(ds.n_users, ds.n_items, d, rng_seed=train_cfg.rng_seed)
    best, history = fit(model, ds.triples(SPLIT_TRAIN), ds.triples(SPLIT_VALIDATION),
                        train_cfg, perturb=perturb)
    return best, history


def at_train(ds: RatingDataset, train_cfg: TrainConfig, pc: PerturbConfig, d: int = 128):
    """Adversarial training: gradient-ascent perturbation before each update.

    With epsilon = 0 the trajectory is identical to a plain fit.
    Returns (best-validation model, history).
    """
    return _defended_fit(ds, train_cfg, adversarial_perturb(pc), d)


def rat_train(ds: RatingDataset, train_cfg: TrainConfig, pc: PerturbConfig, d: int = 128):
    """Random-perturbation training with truncated-normal parameter noise.

    Returns (best-validation model, history).
    """
    return _defended_fit(ds, train_cfg, random_perturb(pc, train_cfg.rng_seed), d)
