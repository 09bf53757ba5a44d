"""Factor-model training: gradient oracle, Adam behavior, snapshots, top-k."""

import numpy as np
import pytest

from recdefend import (AdamState, MfModel, TrainConfig, fit, init_model,
                       load_model, mse, save_model, top_k, train_epoch)
from recdefend.mf import batch_loss, _rows_grad


def toy_batch(seed=0, n_users=4, n_items=4, d=3, n=8):
    rng = np.random.default_rng(seed)
    P = rng.normal(0, 0.5, size=(n_users, d))
    Q = rng.normal(0, 0.5, size=(n_items, d))
    us = rng.integers(0, n_users, size=n)
    its = rng.integers(0, n_items, size=n)
    rs = rng.uniform(0.2, 1.0, size=n)
    return P, Q, us, its, rs


class TestGradientOracle:
    def test_matches_central_finite_differences(self):
        """Analytic batch gradient vs central differences, rel err < 1e-4."""
        P, Q, us, its, rs = toy_batch()
        l2, h = 0.01, 1e-5
        uu, inv_u = np.unique(us, return_inverse=True)
        ii, inv_i = np.unique(its, return_inverse=True)
        gP, gQ, _ = _rows_grad(P[uu], Q[ii], inv_u, inv_i, rs, l2, us.size)

        def loss(P2, Q2):
            return batch_loss(P2, Q2, us, its, rs, l2)

        for rows, grad, param, which in ((uu, gP, P, "P"), (ii, gQ, Q, "Q")):
            for local, row in enumerate(rows):
                for k in range(param.shape[1]):
                    plus = param.copy(); plus[row, k] += h
                    minus = param.copy(); minus[row, k] -= h
                    if which == "P":
                        fd = (loss(plus, Q) - loss(minus, Q)) / (2 * h)
                    else:
                        fd = (loss(P, plus) - loss(P, minus)) / (2 * h)
                    denom = max(abs(fd), abs(grad[local, k]), 1e-8)
                    assert abs(fd - grad[local, k]) / denom < 1e-4

    def test_loss_is_per_interaction(self):
        """Touched-row regularization scales with row multiplicity in the batch."""
        P, Q, _, _, _ = toy_batch()
        v1 = batch_loss(P, Q, [0, 0], [1, 2], [0.5, 0.5], 0.1)
        v2 = (batch_loss(P, Q, [0], [1], [0.5], 0.1) + batch_loss(P, Q, [0], [2], [0.5], 0.1)) / 2
        assert v1 == pytest.approx(v2)


class TestAdam:
    def test_zero_gradient_is_noop(self):
        model = init_model(3, 3, d=2, rng_seed=0)
        adam = AdamState.zeros(model)
        cfg = TrainConfig(epochs=1, batch_size=4)
        from recdefend.mf import _adam_rows
        before = model.P.copy()
        _adam_rows(model.P, adam.mP, adam.vP, np.array([0, 1]),
                   np.zeros((2, 2)), cfg, t=1)
        assert np.array_equal(model.P, before)

    def test_untouched_rows_never_move(self, small_split, fast_cfg):
        ds = small_split
        model = init_model(ds.n_users + 1, ds.n_items, d=4, rng_seed=0)
        spare = model.P[ds.n_users].copy()
        adam = AdamState.zeros(model)
        train_epoch(model, ds.triples(0), fast_cfg, adam, np.random.default_rng(0))
        assert np.array_equal(model.P[ds.n_users], spare)


class TestFit:
    def test_returns_best_validation_snapshot(self, small_split, fast_cfg):
        ds = small_split
        model = init_model(ds.n_users, ds.n_items, d=8, rng_seed=0)
        best, history = fit(model, ds.triples(0), ds.triples(1), fast_cfg)
        assert len(history) == fast_cfg.epochs
        best_val = min(v for _, v in history)
        assert mse(best, ds.triples(1)) == pytest.approx(best_val)

    def test_deterministic(self, small_split, fast_cfg):
        ds = small_split
        runs = []
        for _ in range(2):
            m = init_model(ds.n_users, ds.n_items, d=8, rng_seed=3)
            best, _ = fit(m, ds.triples(0), ds.triples(1), fast_cfg)
            runs.append(best)
        assert np.array_equal(runs[0].P, runs[1].P)
        assert np.array_equal(runs[0].Q, runs[1].Q)

    def test_learns_single_interaction(self):
        us, its, rs = np.array([0]), np.array([0]), np.array([0.8])
        model = init_model(1, 1, d=4, rng_seed=0)
        cfg = TrainConfig(epochs=300, batch_size=1, l2=0.0, learning_rate=0.05)
        best, _ = fit(model, (us, its, rs), (us, its, rs), cfg)
        assert best.predict(0, 0) == pytest.approx(0.8, abs=0.02)

    def test_empty_train_raises(self, fast_cfg):
        model = init_model(2, 2, d=2)
        empty = (np.empty(0, np.int64), np.empty(0, np.int64), np.empty(0))
        with pytest.raises(ValueError):
            train_epoch(model, empty, fast_cfg, AdamState.zeros(model),
                        np.random.default_rng(0))


class TestInit:
    def test_seeded_and_small_scale(self):
        a = init_model(50, 60, d=16, rng_seed=9)
        b = init_model(50, 60, d=16, rng_seed=9)
        assert np.array_equal(a.P, b.P)
        assert abs(float(a.P.mean())) < 0.005
        assert float(a.P.std()) == pytest.approx(0.01, rel=0.2)

    def test_invalid_dims(self):
        with pytest.raises(ValueError):
            init_model(0, 5, d=2)


class TestTopK:
    def test_matches_full_sort_with_stable_ties(self):
        rng = np.random.default_rng(0)
        model = MfModel(rng.normal(size=(3, 4)), rng.normal(size=(20, 4)))
        for u in range(3):
            scores = model.scores(u)
            expect = np.argsort(-scores, kind="stable")[:5]
            assert np.array_equal(top_k(model, u, 5), expect)

    def test_tie_break_by_item_index(self):
        model = MfModel(np.ones((1, 1)), np.array([[0.5], [0.9], [0.5], [0.9]]))
        assert top_k(model, 0, 3).tolist() == [1, 3, 0]

    def test_exclusion(self):
        model = MfModel(np.ones((1, 1)), np.array([[3.0], [2.0], [1.0]]))
        assert top_k(model, 0, 2, exclude=[0]).tolist() == [1, 2]

    def test_exclude_all_returns_empty(self):
        model = MfModel(np.ones((1, 1)), np.ones((2, 1)))
        assert top_k(model, 0, 5, exclude=[0, 1]).size == 0

    def test_invalid_k(self):
        model = MfModel(np.ones((1, 1)), np.ones((2, 1)))
        with pytest.raises(ValueError):
            top_k(model, 0, 0)


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        model = init_model(4, 5, d=3, rng_seed=1)
        path = tmp_path / "m.npz"
        save_model(model, path)
        loaded = load_model(path)
        assert np.array_equal(loaded.P, model.P)
        assert np.array_equal(loaded.Q, model.Q)

    def test_version_check(self, tmp_path):
        path = tmp_path / "bad.npz"
        np.savez(path, version=np.int64(99), P=np.zeros((1, 1)), Q=np.zeros((1, 1)))
        with pytest.raises(ValueError, match="version"):
            load_model(path)


class TestPredictPairs:
    def test_chunked_equals_direct(self):
        rng = np.random.default_rng(2)
        model = MfModel(rng.normal(size=(10, 4)), rng.normal(size=(12, 4)))
        us = rng.integers(0, 10, size=100)
        its = rng.integers(0, 12, size=100)
        direct = np.array([model.predict(u, i) for u, i in zip(us, its)])
        assert np.allclose(model.predict_pairs(us, its, chunk=7), direct)
