"""Experiment orchestration: configs, cells, grids, sweeps, tables."""

import os
from dataclasses import replace

import numpy as np
import pytest
import yaml

from recdefend import (ExperimentConfig, ThreatSettings, emit_tables, load_config,
                       run_cell, run_grid, run_sweep)
from recdefend.runner import SWEEP_AXES, config_to_dict, write_report


def tiny_config(**kw):
    """Fast settings tuned to the 60x80 session dataset."""
    from recdefend import CoTrainConfig, PerturbConfig, SplitConfig, TrainConfig
    base = dict(
        dataset_name="tiny",
        d=4, k=10,
        split=SplitConfig(rng_seed=0),
        train=TrainConfig(epochs=2, batch_size=64, learning_rate=0.02),
        cotrain=CoTrainConfig(total_epochs=2, pretrain_epochs=1, pseudo_fraction=0.05),
        threat=ThreatSettings(knowledge_cost=0.5, attack_size=0.05, n_targets=2,
                              pga_steps=2, tna_steps=2),
        repeats=2,
    )
    base.update(kw)
    return ExperimentConfig(**base)


class TestConfig:
    def test_yaml_round_trip_with_overrides(self, tmp_path):
        raw = {
            "dataset_name": "demo",
            "d": 8,
            "repeats": 3,
            "train": {"epochs": 5, "adam_betas": [0.9, 0.99]},
            "threat": {"attack_size": 0.02},
        }
        path = tmp_path / "cfg.yaml"
        path.write_text(yaml.safe_dump(raw))
        cfg = load_config(path, repeats=7, base_seed=2)
        assert cfg.dataset_name == "demo"
        assert cfg.repeats == 7 and cfg.base_seed == 2
        assert cfg.train.epochs == 5
        assert cfg.train.adam_betas == (0.9, 0.99)
        assert cfg.threat.attack_size == 0.02

    def test_none_overrides_ignored(self, tmp_path):
        path = tmp_path / "cfg.yaml"
        path.write_text(yaml.safe_dump({"repeats": 3}))
        cfg = load_config(path, repeats=None)
        assert cfg.repeats == 3

    def test_validation(self):
        with pytest.raises(ValueError):
            ExperimentConfig(attack="bogus")
        with pytest.raises(ValueError):
            ExperimentConfig(defense="bogus")
        with pytest.raises(ValueError):
            ExperimentConfig(repeats=0)

    def test_config_to_dict_serializable(self):
        d = config_to_dict(tiny_config())
        yaml.safe_dump(d)  # must not raise
        assert d["train"]["adam_betas"] == [0.9, 0.999]


class TestRunCell:
    def test_row_schema_no_attack(self, small_dataset):
        cfg = tiny_config(attack="none", defense="none")
        report = run_cell(cfg, ds=small_dataset)
        assert len(report.rows) == cfg.repeats
        row = report.rows[0]
        for key in ("hr_test_origin", "hr_target_origin", "hr_test_attack",
                    "hr_target_attack", "hr_test_defense", "hr_target_defense"):
            assert key in row
        assert "ri_target" not in row
        assert row["hr_test_defense"] == row["hr_test_origin"]

    def test_row_schema_with_attack(self, small_dataset):
        cfg = tiny_config(attack="random", defense="at")
        report = run_cell(cfg, ds=small_dataset)
        row = report.rows[0]
        assert "ri_target" in row
        for key in ("shift_attack_q2", "shift_defense_q2"):
            assert key in row

    def test_deterministic_reports(self, small_dataset, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        cfg = tiny_config(attack="random", defense="rat")
        run_cell(replace(cfg, out_dir=str(out_a)), ds=small_dataset)
        run_cell(replace(cfg, out_dir=str(out_b)), ds=small_dataset)
        for name in os.listdir(out_a):
            if name.endswith(".csv"):
                assert (out_a / name).read_bytes() == (out_b / name).read_bytes()

    def test_report_files_written(self, small_dataset, tmp_path):
        cfg = tiny_config(attack="none", defense="none", out_dir=str(tmp_path))
        run_cell(cfg, ds=small_dataset)
        assert (tmp_path / "rows_none_none.csv").exists()
        assert (tmp_path / "summary_none_none.csv").exists()
        resolved = yaml.safe_load((tmp_path / "config_none_none.yaml").read_text())
        assert resolved["repeats"] == cfg.repeats

    def test_aggregate_means(self, small_dataset):
        report = run_cell(tiny_config(), ds=small_dataset)
        vals = [r["hr_test_origin"] for r in report.rows]
        assert report.aggregate["hr_test_origin_mean"] == pytest.approx(np.mean(vals))


class TestRunGrid:
    def test_paired_rows_share_attack(self, small_dataset):
        cfg = tiny_config()
        reports = run_grid(cfg, ["random"], ["none", "at"], ds=small_dataset)
        by = {(r.attack, r.defense): r for r in reports}
        for rep in range(cfg.repeats):
            none_row = by[("random", "none")].rows[rep]
            at_row = by[("random", "at")].rows[rep]
            # same split/targets/attack within the repeat
            assert none_row["targets"] == at_row["targets"]
            assert none_row["hr_target_attack"] == at_row["hr_target_attack"]
            assert none_row["hr_test_origin"] == at_row["hr_test_origin"]

    def test_defense_none_equals_attacked_model(self, small_dataset):
        reports = run_grid(tiny_config(), ["random"], ["none"], ds=small_dataset)
        for row in reports[0].rows:
            assert row["hr_target_defense"] == row["hr_target_attack"]
            assert row["hr_test_defense"] == row["hr_test_attack"]


class TestSweep:
    def test_single_value_matches_cell(self, small_dataset):
        cfg = tiny_config(attack="random", defense="at")
        reports, long_rows = run_sweep(cfg, "knowledge_cost", [0.5], ds=small_dataset)
        cell = run_cell(replace(cfg, threat=replace(cfg.threat, knowledge_cost=0.5)),
                        ds=small_dataset)
        assert [r["hr_target_defense"] for r in reports[0].rows] == \
               [r["hr_target_defense"] for r in cell.rows]
        assert all(r["axis"] == "knowledge_cost" and r["value"] == 0.5 for r in long_rows)

    def test_pseudo_fraction_zero_means_no_defense(self, small_dataset):
        cfg = tiny_config(attack="random", defense="cotrain")
        reports, _ = run_sweep(cfg, "pseudo_fraction", [0], ds=small_dataset)
        assert reports[0].defense == "none"
        for row in reports[0].rows:
            assert row["defense"] == "none"

    def test_invalid_axis(self, small_dataset):
        with pytest.raises(ValueError):
            run_sweep(tiny_config(), "learning_rate", [0.1], ds=small_dataset)
        with pytest.raises(ValueError):
            run_sweep(tiny_config(), SWEEP_AXES[0], [], ds=small_dataset)

    def test_long_csv_written(self, small_dataset, tmp_path):
        cfg = tiny_config(attack="random", defense="at", out_dir=str(tmp_path))
        run_sweep(cfg, "attack_size", [0.03, 0.05], ds=small_dataset)
        text = (tmp_path / "sweep_attack_size.csv").read_text().strip().splitlines()
        assert text[0].startswith("axis,value,")
        assert len(text) == 1 + 2 * cfg.repeats


class TestEmitTables:
    @pytest.fixture(scope="class")
    @staticmethod
    def grid_reports(small_dataset):
        cfg = tiny_config(repeats=3)
        return run_grid(cfg, ["random"], ["none", "at", "rat", "cotrain"],
                        ds=small_dataset)

    def test_files_and_columns(self, grid_reports, tmp_path):
        paths = emit_tables(grid_reports, str(tmp_path))
        rob = (tmp_path / "robustness.csv").read_text().splitlines()
        assert rob[0] == "dataset,attack,origin,attack_hr,at,rat,cotrain,cotrain_stars"
        assert rob[1].startswith("tiny,random,")
        gen = (tmp_path / "generalization.csv").read_text().splitlines()
        assert gen[0] == "dataset,attack,origin,attack_hr,at,rat,cotrain,cotrain_stars"
        shift = (tmp_path / "rank_shift_quartiles.csv").read_text().splitlines()
        assert shift[0] == "dataset,attack,defense,repeat,q1,median,q3"
        assert len(shift) > 1
        assert set(paths) == {"robustness", "generalization", "rank_shift"}

    def test_header_only_when_no_reports(self, tmp_path):
        paths = emit_tables([], str(tmp_path))
        for path in paths.values():
            lines = open(path).read().splitlines()
            assert len(lines) == 1

    def test_stars_reflect_paired_p_value(self, grid_reports, tmp_path, monkeypatch):
        import recdefend.runner as rn
        captured = {}
        real = rn.paired_t_test

        def spy(a, b):
            t, p = real(a, b)
            captured.setdefault("ps", []).append(p)
            return t, p

        monkeypatch.setattr(rn, "paired_t_test", spy)
        emit_tables(grid_reports, str(tmp_path))
        rob = (tmp_path / "robustness.csv").read_text().splitlines()[1]
        stars = rob.split(",")[-1]
        from recdefend import significance_stars
        assert stars == significance_stars(captured["ps"][0])
