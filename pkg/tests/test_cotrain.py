"""Grid projection, consistency labeling, and the co-training procedure."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import importlib

from recdefend import (CoTrainConfig, MfModel, Projection, TrainConfig,
                       consistent_labels, cotrain, fit, init_model, recommend)
from recdefend.cotrain import model_seeds

# the package re-exports the cotrain *function* under the submodule's name,
# so fetch the module itself for monkeypatching
ct = importlib.import_module("recdefend.cotrain")

GRID = np.array([0.2, 0.4, 0.6, 0.8, 1.0])


class TestProjection:
    def test_midpoint_rounds_up(self):
        # exactly representable midpoints; the 0.2-step grid's midpoints are
        # not exact doubles, so the rule is asserted on an integer-step grid
        proj = Projection(np.array([1.0, 2.0, 3.0]))
        assert proj(1.5) == 2.0
        assert proj(2.5) == 3.0
        assert Projection(GRID)(0.5) == 0.6  # (0.4 + 0.6) / 2 is exactly 0.5

    def test_clamps_out_of_range(self):
        proj = Projection(GRID)
        assert proj(-3.7) == 0.2
        assert proj(9.9) == 1.0

    def test_grid_values_are_fixed_points(self):
        proj = Projection(GRID)
        assert np.array_equal(proj(GRID), GRID)

    @given(st.floats(min_value=-100, max_value=100, allow_nan=False))
    @settings(max_examples=200, deadline=None)
    def test_idempotent_and_member(self, x):
        proj = Projection(GRID)
        y = proj(x)
        assert y in GRID
        assert proj(y) == y

    @given(st.floats(-10, 10), st.floats(-10, 10))
    @settings(max_examples=200, deadline=None)
    def test_monotone(self, a, b):
        proj = Projection(GRID)
        lo, hi = min(a, b), max(a, b)
        assert proj(lo) <= proj(hi)

    def test_nearest_grid_value(self):
        proj = Projection(GRID)
        for x in np.linspace(-1, 2, 301):
            y = proj(float(x))
            dist = np.abs(GRID - x)
            assert dist[GRID == y][0] == pytest.approx(dist.min())

    def test_vectorized_matches_scalar(self):
        proj = Projection(GRID)
        xs = np.linspace(-1, 2, 50)
        assert np.array_equal(proj(xs), np.array([proj(float(x)) for x in xs]))

    def test_invalid_grid(self):
        with pytest.raises(ValueError):
            Projection(np.array([]))
        with pytest.raises(ValueError):
            Projection(np.array([0.5, 0.5]))


class TestConsistentLabels:
    @staticmethod
    def models(seed_a=0, seed_b=1):
        rng = np.random.default_rng
        a = MfModel(rng(seed_a).normal(size=(6, 3)), rng(seed_a + 10).normal(size=(8, 3)))
        b = MfModel(rng(seed_b).normal(size=(6, 3)), rng(seed_b + 10).normal(size=(8, 3)))
        return a, b

    def test_symmetry(self):
        a, b = self.models()
        us = np.repeat(np.arange(6), 8)
        its = np.tile(np.arange(8), 6)
        proj = Projection(GRID)
        u1, i1, r1 = consistent_labels(a, b, us, its, proj)
        u2, i2, r2 = consistent_labels(b, a, us, its, proj)
        assert np.array_equal(u1, u2) and np.array_equal(i1, i2) and np.array_equal(r1, r2)

    def test_self_agreement_is_total(self):
        a, _ = self.models()
        us = np.repeat(np.arange(6), 8)
        its = np.tile(np.arange(8), 6)
        u, i, r = consistent_labels(a, a, us, its, Projection(GRID))
        assert u.size == us.size
        assert np.isin(r, GRID).all()

    def test_labels_are_agreed_projections(self):
        a, b = self.models()
        us = np.repeat(np.arange(6), 8)
        its = np.tile(np.arange(8), 6)
        proj = Projection(GRID)
        u, i, r = consistent_labels(a, b, us, its, proj)
        pa = proj(a.predict_pairs(u, i))
        pb = proj(b.predict_pairs(u, i))
        assert np.array_equal(pa, r) and np.array_equal(pb, r)


class TestCotrain:
    def test_no_rounds_equals_three_independent_fits(self, small_split, fast_cfg):
        """total_epochs == pretrain_epochs degenerates to three plain fits."""
        ds = small_split
        cfg = CoTrainConfig(total_epochs=fast_cfg.epochs, pretrain_epochs=fast_cfg.epochs,
                            rng_seed=5)
        models, log = cotrain(ds, cfg, fast_cfg, d=6)
        assert log == []
        for j, (s_init, s_shuf) in enumerate(model_seeds(cfg, fast_cfg)):
            m = init_model(ds.n_users, ds.n_items, 6, rng_seed=s_init)
            from dataclasses import replace
            expect, _ = fit(m, ds.triples(0), ds.triples(1),
                            replace(fast_cfg, rng_seed=s_shuf))
            assert np.array_equal(models[j].P, expect.P)
            assert np.array_equal(models[j].Q, expect.Q)

    def test_pseudo_labels_valid(self, small_split, fast_cfg, monkeypatch):
        """Labeled data always included; pseudo pairs never collide; labels on grid."""
        ds = small_split
        train = ds.triples(0)
        train_codes = set((train[0] * ds.n_items + train[1]).tolist())
        seen = []
        orig = ct.train_epoch

        def spy(model, triples, cfg, adam, rng, perturb=None):
            seen.append(triples)
            return orig(model, triples, cfg, adam, rng, perturb=perturb)

        monkeypatch.setattr(ct, "train_epoch", spy)
        cfg = CoTrainConfig(total_epochs=3, pretrain_epochs=1, pseudo_fraction=0.2)
        cotrain(ds, cfg, fast_cfg, d=4)
        rounds = seen[3:]  # after the 3 pretrain calls
        assert rounds
        n_labeled = train[0].size
        for us, its, rs in rounds:
            assert np.array_equal(us[:n_labeled], train[0])
            assert np.array_equal(its[:n_labeled], train[1])
            pseudo = set((us[n_labeled:] * ds.n_items + its[n_labeled:]).tolist())
            assert not (pseudo & train_codes)
            assert np.isin(rs[n_labeled:], ds.rating_grid).all()

    def test_pseudo_cap(self, small_split, fast_cfg, monkeypatch):
        ds = small_split
        n_labeled = ds.triples(0)[0].size
        sizes = []
        orig = ct.train_epoch

        def spy(model, triples, cfg, adam, rng, perturb=None):
            sizes.append(triples[0].size)
            return orig(model, triples, cfg, adam, rng, perturb=perturb)

        monkeypatch.setattr(ct, "train_epoch", spy)
        cfg = CoTrainConfig(total_epochs=2, pretrain_epochs=1, pseudo_fraction=1.0,
                            pseudo_cap_factor=0.5)
        cotrain(ds, cfg, fast_cfg, d=4)
        for size in sizes[3:]:
            assert size <= n_labeled + int(0.5 * n_labeled)

    def test_deterministic(self, small_split, fast_cfg):
        ds = small_split
        cfg = CoTrainConfig(total_epochs=3, pretrain_epochs=1, pseudo_fraction=0.1)
        a, log_a = cotrain(ds, cfg, fast_cfg, d=4)
        b, log_b = cotrain(ds, cfg, fast_cfg, d=4)
        for ma, mb in zip(a, b):
            assert np.array_equal(ma.P, mb.P) and np.array_equal(ma.Q, mb.Q)
        assert log_a == log_b

    def test_log_schema(self, small_split, fast_cfg, tmp_path):
        ds = small_split
        cfg = CoTrainConfig(total_epochs=2, pretrain_epochs=1, pseudo_fraction=0.1)
        _, log = cotrain(ds, cfg, fast_cfg, d=4)
        assert len(log) == 3  # one round x three models
        row = log[0]
        assert set(row) == {"round", "model_index", "candidate_count", "pseudo_count",
                            "agreement_rate", "validation_mse"}
        assert 0.0 <= row["agreement_rate"] <= 1.0
        ct.write_round_log(log, tmp_path / "rounds.csv")
        lines = (tmp_path / "rounds.csv").read_text().strip().splitlines()
        assert len(lines) == 4

    def test_requires_split(self, small_dataset, fast_cfg):
        with pytest.raises(ValueError, match="split"):
            cotrain(small_dataset, CoTrainConfig(), fast_cfg, d=4)

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            CoTrainConfig(total_epochs=2, pretrain_epochs=3)
        with pytest.raises(ValueError):
            CoTrainConfig(pseudo_fraction=0.0)

    def test_recommend_uses_designated_model(self, small_split, fast_cfg):
        ds = small_split
        cfg = CoTrainConfig(total_epochs=2, pretrain_epochs=1, pseudo_fraction=0.1)
        models, _ = cotrain(ds, cfg, fast_cfg, d=4)
        from recdefend import top_k
        assert np.array_equal(recommend(models, 0, 5), top_k(models[0], 0, 5))
        assert np.array_equal(recommend(models, 0, 5, model_index=2), top_k(models[2], 0, 5))
